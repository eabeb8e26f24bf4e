"""Binary classification metrics and paired bootstrap significance.

Accuracy, macro-F1 and AUC are reported as percentages in [0, 100].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


def fmt_float(x) -> str:
    """Shortest round-tripping decimal for an artifact file (plain ``repr`` of
    a numpy scalar would include its type name)."""
    return repr(float(x))


def _pair(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds).astype(np.int64).ravel()
    y = np.asarray(labels).astype(np.int64).ravel()
    if p.shape != y.shape:
        raise DataError(f"length mismatch: {p.shape[0]} predictions vs {y.shape[0]} labels")
    if p.size == 0:
        raise DataError("metrics need at least one item")
    return p, y


def confusion(preds, labels) -> tuple[int, int, int, int]:
    """``(TP, FP, TN, FN)`` with class 1 as positive."""
    p, y = _pair(preds, labels)
    tp = int(np.sum((p == 1) & (y == 1)))
    fp = int(np.sum((p == 1) & (y == 0)))
    tn = int(np.sum((p == 0) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    return tp, fp, tn, fn


def accuracy(preds, labels) -> float:
    p, y = _pair(preds, labels)
    return 100.0 * np.count_nonzero(p == y) / p.size


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def macro_f1_from_counts(tp: int, fp: int, tn: int, fn: int) -> float:
    # Class 0 swaps the roles: its TP is TN, its FP is FN.
    return 100.0 * (_f1(tp, fp, fn) + _f1(tn, fn, fp)) / 2.0


def macro_f1(preds, labels) -> float:
    """Unweighted mean of per-class F1; an empty class scores 0."""
    return macro_f1_from_counts(*confusion(preds, labels))


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie), in percent."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).astype(np.int64).ravel()
    if s.shape != y.shape:
        raise DataError(f"length mismatch: {s.shape[0]} scores vs {y.shape[0]} labels")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC undefined: labels contain a single class")
    r = midranks(s)
    u = r[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return 100.0 * u / (n_pos * n_neg)


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DataError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.size < 2:
        raise DataError("pearson needs at least two points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DataError("pearson undefined: zero variance")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


_METRICS = {"accuracy": accuracy, "macro_f1": macro_f1}


def paired_bootstrap(
    preds_a,
    preds_b,
    labels,
    metric: str = "macro_f1",
    B: int = 1000,
    seed: int = 42,
    alternative: str = "greater",
) -> float:
    """Paired bootstrap p-value for "system a beats system b".

    Each of the ``B`` resamples draws test indices with replacement; the one
    sided p-value is the fraction of resamples with ``metric(b) >= metric(a)``.
    ``alternative="two-sided"`` doubles the smaller one-sided tail.
    """
    if metric not in _METRICS:
        raise ConfigError(f"metric must be one of {sorted(_METRICS)}, got {metric!r}")
    if alternative not in ("greater", "two-sided"):
        raise ConfigError(f"alternative must be 'greater' or 'two-sided', got {alternative!r}")
    if B < 1:
        raise ConfigError("B must be >= 1")
    a, y = _pair(preds_a, labels)
    b, _ = _pair(preds_b, labels)
    if a.shape != b.shape:
        raise DataError("systems a and b have different lengths")
    n = y.size
    rng = np.random.default_rng(seed)
    fn = _METRICS[metric]
    b_ge = a_ge = 0
    for _ in range(B):
        idx = rng.integers(0, n, size=n)
        ma, mb = fn(a[idx], y[idx]), fn(b[idx], y[idx])
        b_ge += mb >= ma
        a_ge += ma >= mb
    p = b_ge / B
    if alternative == "two-sided":
        p = min(1.0, 2.0 * min(p, a_ge / B))
    return float(p)


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    auc: float | None
    threshold: float | None
    confusion: tuple[int, int, int, int]
    n: int

    def as_dict(self) -> dict:
        tp, fp, tn, fn = self.confusion
        return {
            "n": self.n,
            "threshold": "" if self.threshold is None else fmt_float(self.threshold),
            "accuracy": fmt_float(self.accuracy),
            "macro_f1": fmt_float(self.macro_f1),
            "auc": "" if self.auc is None else fmt_float(self.auc),
            "tp": tp,
            "fp": fp,
            "tn": tn,
            "fn": fn,
        }

    def to_keyvalue(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.as_dict().items())

    def csv_header(self) -> str:
        return ",".join(self.as_dict()) + "\n"

    def to_csv_row(self) -> str:
        return ",".join(str(v) for v in self.as_dict().values()) + "\n"


def evaluate_predictions(preds, labels, scores=None, threshold: float | None = None) -> MetricsReport:
    """Build a report; AUC is omitted for hard-label systems (``scores=None``)."""
    p, y = _pair(preds, labels)
    a = None
    if scores is not None and 0 < y.sum() < y.size:
        a = auc(scores, y)
    return MetricsReport(
        accuracy=accuracy(p, y),
        macro_f1=macro_f1(p, y),
        auc=a,
        threshold=threshold,
        confusion=confusion(p, y),
        n=int(y.size),
    )
