import itertools

import numpy as np
import pytest

from memegraph.autodiff import Tensor, grad_check
from memegraph.dataio import Batch, Dataset
from memegraph.errors import ConfigError, DataError, DimensionError
from memegraph.fusion import FUSION_KINDS, glorot_bound
from memegraph.model import (
    ModelConfig,
    forward,
    init_model,
    load_checkpoint,
    loss,
    predict,
    save_checkpoint,
    score_dataset,
)


def random_batch(m, h, seed):
    rng = np.random.default_rng(seed)
    return Batch(list(range(m)), Tensor(rng.uniform(-1, 1, (m, h))), Tensor(rng.uniform(-1, 1, (m, h))), rng.integers(0, 2, m))


def random_dataset(n, h, seed):
    rng = np.random.default_rng(seed)
    return Dataset.from_arrays([f"x{i}" for i in range(n)], rng.integers(0, 2, n), rng.normal(size=(n, h)), rng.normal(size=(n, h)))


def test_init_deterministic_and_glorot():
    cfg = ModelConfig(h=4)
    a, b = init_model(cfg, seed=3), init_model(cfg, seed=3)
    for (n1, t1), (n2, t2) in zip(a.named_tensors(), b.named_tensors()):
        assert n1 == n2 and t1.data.tobytes() == t2.data.tobytes()
        if not n1.startswith("adapter"):
            assert np.all(np.abs(t1.data) <= glorot_bound(*t1.shape))
    assert a.W_c.shape == (8, 2)
    assert init_model(cfg, seed=4).W_c.data.tobytes() != a.W_c.data.tobytes()


def test_adapter_identity_at_init():
    cfg = ModelConfig(h=4, adapter=True, imgr=False)
    with_adapter = init_model(cfg, seed=1)
    plain = init_model(ModelConfig(h=4, imgr=False), seed=1)
    b = random_batch(5, 4, 0)
    assert np.array_equal(forward(b, with_adapter, cfg).fused.data, forward(b, plain, ModelConfig(h=4, imgr=False)).fused.data)
    names = [n for n, _ in with_adapter.named_tensors()]
    assert names[:2] == ["adapter_t", "adapter_v"] and names[-1] == "W_c"


def test_zero_head_gives_uniform_probs():
    cfg = ModelConfig(h=3, imgr=False)
    p = init_model(cfg)
    p.W_c.data[:] = 0.0
    out = forward(random_batch(6, 3, 1), p, cfg)
    assert np.all(out.probs == 0.5)
    assert loss(out, [0, 1, 0, 1, 1, 0]).data[0, 0] == pytest.approx(np.log(2), abs=1e-15)


def test_single_item_batch_with_imgr():
    cfg = ModelConfig(h=4)
    out = forward(random_batch(1, 4, 2), init_model(cfg), cfg)
    assert out.refined.shape == (1, 8) and out.affinity.shape == (1, 1)
    assert np.isclose(out.probs.sum(), 1.0)


def test_imgr_off_refined_is_fused():
    cfg = ModelConfig(h=4, imgr=False)
    out = forward(random_batch(5, 4, 3), init_model(cfg), cfg)
    assert out.refined is out.fused and out.affinity is None


def test_zero_wg_collapses_bit_exact():
    cfg = ModelConfig(h=4)
    p = init_model(cfg, seed=5)
    p.imgr.W_g.data[:] = 0.0
    out = forward(random_batch(7, 4, 5), p, cfg)
    assert out.refined.data.tobytes() == out.fused.data.tobytes()


def test_loss_matches_scalar_recomputation():
    cfg = ModelConfig(h=4)
    b = random_batch(9, 4, 6)
    out = forward(b, init_model(cfg, seed=6), cfg)
    ref = -np.mean([np.log(out.probs[j, b.labels[j]]) for j in range(9)])
    assert abs(loss(out, b.labels).data[0, 0] - ref) <= 1e-12


def test_loss_zero_for_confident_correct():
    cfg = ModelConfig(h=2, imgr=False, fusion="concat")
    p = init_model(cfg)
    b = Batch([0, 1], Tensor([[1.0, 1.0], [-1.0, -1.0]]), Tensor([[0.0, 0.0], [0.0, 0.0]]), np.array([1, 0]))
    p.W_c.data[:] = np.array([[-1e3, 1e3], [-1e3, 1e3], [0, 0], [0, 0]])
    assert loss(forward(b, p, cfg), b.labels).data[0, 0] == pytest.approx(0.0, abs=1e-300)


def test_predict_threshold_rules():
    assert predict(np.array([0.66, 0.65]), 0.657).tolist() == [1, 0]
    assert predict(np.array([0.657]), 0.657).tolist() == [1]
    assert predict(np.array([0.434]), 0.434).tolist() == [1]
    p = np.random.default_rng(0).uniform(0.01, 0.99, 50)
    assert predict(p, 1e-9).sum() == 50 and predict(p, 1 - 1e-9).sum() == 0
    probs2 = np.stack([1 - p, p], axis=1)
    assert np.array_equal(predict(probs2, 0.5), predict(p, 0.5))
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ConfigError):
            predict(p, bad)


@pytest.mark.parametrize("seed", range(5))
def test_positive_head_scale_keeps_argmax(seed):
    cfg = ModelConfig(h=4)
    p = init_model(cfg, seed=seed)
    b = random_batch(10, 4, seed)
    base = np.argmax(forward(b, p, cfg).logits.data, axis=1)
    p.W_c.data *= 7.5
    assert np.array_equal(np.argmax(forward(b, p, cfg).logits.data, axis=1), base)


GRID = list(itertools.product(FUSION_KINDS, [True, False], [1, 4], [4, 8]))


@pytest.mark.parametrize("kind, imgr, m, h", GRID)
def test_end_to_end_grad_check(kind, imgr, m, h):
    cfg = ModelConfig(h=h, fusion=kind, imgr=imgr)
    p = init_model(cfg, seed=m + h)
    b = random_batch(m, h, 100 + m + h)
    rep = grad_check(lambda g: loss(forward(b, p, cfg, graph=g), b.labels), p, step=1e-6)
    assert rep.max_rel_error < 1e-4, rep.worst


def test_adapter_gradients():
    cfg = ModelConfig(h=3, adapter=True)
    p = init_model(cfg, seed=2)
    b = random_batch(4, 3, 2)
    rep = grad_check(lambda g: loss(forward(b, p, cfg, graph=g), b.labels), p)
    assert rep.passed


def test_imgr_off_predictions_independent_of_batching():
    cfg = ModelConfig(h=4, imgr=False)
    p = init_model(cfg, seed=8)
    ds = random_dataset(37, 4, 8)
    ref = score_dataset(p, cfg, ds, 1)
    for bs in (2, 7, 37, 50):
        assert np.max(np.abs(score_dataset(p, cfg, ds, bs) - ref)) <= 1e-12


def test_imgr_on_batch_order_invariance():
    cfg = ModelConfig(h=4)
    p = init_model(cfg, seed=9)
    ds = random_dataset(20, 4, 9)
    perm = np.random.default_rng(0).permutation(20)
    a = score_dataset(p, cfg, ds, 20)
    b = score_dataset(p, cfg, ds, 20, order=perm)
    assert np.max(np.abs(a - b)) <= 1e-10


def test_stage_named_dimension_errors():
    cfg = ModelConfig(h=4)
    p = init_model(cfg)
    with pytest.raises(DimensionError, match="input"):
        forward(random_batch(2, 3, 0), p, cfg)
    p.W_c = Tensor(np.zeros((5, 2)))
    with pytest.raises(DimensionError, match="classifier"):
        forward(random_batch(2, 4, 0), p, cfg)


def test_config_validation():
    for bad in (dict(h=0), dict(fusion="sum"), dict(gmu_gate_on="both")):
        with pytest.raises(ConfigError):
            init_model(ModelConfig(**bad))


@pytest.mark.parametrize("fmt", ["decimal", "f64le"])
@pytest.mark.parametrize("cfg", [ModelConfig(h=3), ModelConfig(h=2, fusion="mfb", imgr=False, adapter=True), ModelConfig(h=2, gmu_gate_on="text")])
def test_checkpoint_round_trip(tmp_path, fmt, cfg):
    p = init_model(cfg, seed=11)
    for t in p.tensors():
        t.data[:] += 1e-3 * np.pi  # make sure the values are not short decimals
    path = tmp_path / "m.mgck"
    save_checkpoint(path, p, cfg, fmt=fmt, meta={"epoch": 2})
    q, cfg2, meta = load_checkpoint(path)
    assert cfg2 == cfg and meta == {"epoch": "2"}
    for (n1, t1), (n2, t2) in zip(p.named_tensors(), q.named_tensors()):
        assert n1 == n2 and t1.data.tobytes() == t2.data.tobytes()
    path2 = tmp_path / "m2.mgck"
    save_checkpoint(path2, q, cfg2, fmt=fmt, meta=meta)
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_errors(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_checkpoint(tmp_path / "missing.mgck")
    bad = tmp_path / "bad.mgck"
    bad.write_text("hello\n")
    with pytest.raises(DataError):
        load_checkpoint(bad)
    p = init_model(ModelConfig(h=2))
    with pytest.raises(ConfigError):
        save_checkpoint(tmp_path / "x", p, ModelConfig(h=2), fmt="pickle")
