import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from memegraph.errors import ConfigError, DataError
from memegraph.metrics import (
    MetricsReport,
    accuracy,
    auc,
    confusion,
    evaluate_predictions,
    macro_f1,
    midranks,
    paired_bootstrap,
    pearson,
)


# brute-force oracles

def acc_oracle(p, y):
    return 100.0 * sum(1 for a, b in zip(p, y) if a == b) / len(y)


def f1_oracle(p, y):
    per_class = []
    for c in (0, 1):
        tp = sum(1 for a, b in zip(p, y) if a == c and b == c)
        pp = sum(1 for a in p if a == c)
        ap = sum(1 for b in y if b == c)
        prec = tp / pp if pp else 0.0
        rec = tp / ap if ap else 0.0
        per_class.append(0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec))
    return 100.0 * sum(per_class) / 2


def auc_oracle(s, y):
    pos = [a for a, b in zip(s, y) if b == 1]
    neg = [a for a, b in zip(s, y) if b == 0]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return 100.0 * wins / (len(pos) * len(neg))


def pearson_oracle(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def instances(count=200, seed=0):
    """Random instances with sizes 2..100; scores drawn on a coarse grid so ties occur."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, 101))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        p = rng.integers(0, 2, n)
        s = rng.integers(0, 12, n) / 11.0
        yield p, y, s


def test_hand_cases():
    mf = macro_f1([1, 0, 0, 0], [1, 1, 0, 0])
    assert mf == pytest.approx(100 * (2 / 3 + 0.8) / 2, abs=1e-12) and round(mf, 2) == 73.33
    assert auc([0.9, 0.3, 0.6, 0.2], [1, 0, 0, 1]) == 50.0
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 100.0
    assert accuracy([1, 0, 1, 1], [1, 0, 1, 0]) == 75.0
    assert pearson([1, 2, 3], [2, 4, 6]) == 1.0
    assert pearson([1, 2, 3], [6, 4, 2]) == -1.0
    y = [0, 1, 1, 0, 1, 0]
    assert accuracy(y, y) == macro_f1(y, y) == 100.0


def test_oracles_on_random_instances():
    for p, y, s in instances():
        assert abs(accuracy(p, y) - acc_oracle(p, y)) <= 1e-12
        assert abs(macro_f1(p, y) - f1_oracle(p, y)) <= 1e-12
        assert abs(auc(s, y) - auc_oracle(s, y)) <= 1e-12
        if np.ptp(s) > 0:
            x = s + 0.01 * p
            assert abs(pearson(x, s) - pearson_oracle(x, s)) <= 1e-12


def test_confusion_counts():
    assert confusion([1, 1, 0, 0, 1], [1, 0, 0, 1, 1]) == (2, 1, 1, 1)


def test_empty_class_scores_zero():
    # all predictions positive on all-positive labels: class 0 has no support and no predictions
    assert macro_f1([1, 1, 1], [1, 1, 1]) == 50.0


def test_midranks_ties():
    assert midranks(np.array([3.0, 1.0, 3.0, 2.0])).tolist() == [3.5, 1.0, 3.5, 2.0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 60))
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    s = rng.integers(0, 8, n) / 8.0
    for f in (np.exp, lambda v: 3 * v - 7, lambda v: v**3):
        assert auc(f(s), y) == auc(s, y)


def test_auc_chance_level():
    vals = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = np.array([0, 1] * 50)
        vals.append(auc(rng.random(100), y))
    assert 45 <= np.mean(vals) <= 55


def test_metric_errors():
    with pytest.raises(DataError, match="single class"):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(DataError):
        accuracy([1, 0], [1])
    with pytest.raises(DataError):
        macro_f1([], [])
    with pytest.raises(DataError, match="variance"):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(DataError):
        pearson([1], [1])


def test_bootstrap_examples():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 100)
    p = rng.integers(0, 2, 100)
    assert paired_bootstrap(p, p, y, B=200) == 1.0
    assert paired_bootstrap(y, 1 - y, y, B=1000) == 0.0
    assert paired_bootstrap(y, 1 - y, y, B=1000, metric="accuracy") == 0.0
    with pytest.raises(ConfigError):
        paired_bootstrap(p, p, y, metric="auc")
    with pytest.raises(ConfigError):
        paired_bootstrap(p, p, y, B=0)


@pytest.fixture(scope="module")
def close_systems():
    rng = np.random.default_rng(7)
    y = np.array([0, 1] * 100)
    a = np.where(rng.random(200) < 0.80, y, 1 - y)
    b = np.where(rng.random(200) < 0.76, y, 1 - y)
    return a, b, y


def test_bootstrap_stable_across_seeds(close_systems):
    a, b, y = close_systems
    ps = np.array([paired_bootstrap(a, b, y, B=1000, seed=s) for s in range(10)])
    assert np.all(np.abs(ps - ps.mean()) <= 0.03)
    assert 0.0 < ps.mean() < 1.0


def test_bootstrap_deterministic_and_two_sided(close_systems):
    a, b, y = close_systems
    assert paired_bootstrap(a, b, y, seed=3) == paired_bootstrap(a, b, y, seed=3)
    one = paired_bootstrap(a, b, y, B=500, seed=1)
    rev = paired_bootstrap(b, a, y, B=500, seed=1)
    two = paired_bootstrap(a, b, y, B=500, seed=1, alternative="two-sided")
    assert two == pytest.approx(min(1.0, 2 * min(one, rev)))


def test_report_serialization():
    rep = evaluate_predictions([1, 0, 1, 1], [1, 0, 0, 1], scores=[0.9, 0.1, 0.6, 0.7], threshold=0.5)
    assert isinstance(rep, MetricsReport)
    assert rep.accuracy == 75.0 and rep.auc == 100.0 and rep.confusion == (2, 1, 1, 0) and rep.n == 4
    kv = dict(line.split("=", 1) for line in rep.to_keyvalue().splitlines())
    assert float(kv["macro_f1"]) == rep.macro_f1 and kv["tp"] == "2"
    header, row = rep.csv_header().strip().split(","), rep.to_csv_row().strip().split(",")
    assert len(header) == len(row) and header[0] == "n"
    hard = evaluate_predictions([1, 0], [1, 0])
    assert hard.auc is None and hard.as_dict()["auc"] == ""
