import numpy as np
import pytest

from memegraph.autodiff import Graph, Tensor, grad_check
from memegraph.errors import ConfigError, DimensionError
from memegraph.fusion import FUSION_KINDS, FusionParams, fuse, fuse_concat, fuse_gmu, fuse_mfb, glorot_bound, init_fusion


def inputs(m, h, seed):
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(-1, 1, (m, h))), Tensor(rng.uniform(-1, 1, (m, h))), rng


def head_loss(g, f, rng_seed, m):
    """Cross-entropy of a fixed random 2-way head, giving a scalar downstream of fusion."""
    rng = np.random.default_rng(rng_seed)
    W = Tensor(rng.uniform(-1, 1, (f.cols, 2)))
    return g.softmax_xent(g.matmul(f, W), rng.integers(0, 2, m))[0]


def test_concat_examples():
    g = Graph()
    assert fuse_concat(g, Tensor([[1.0, 2.0]]), Tensor([[3.0, 4.0]])).data.tolist() == [[1, 2, 3, 4]]
    E_t, E_v, _ = inputs(5, 3, 0)
    out = fuse_concat(g, E_t, E_v).data
    assert np.array_equal(out[:, :3], E_t.data) and out.shape == (5, 6)


def test_mfb_hand_example_and_annihilator():
    p = FusionParams("mfb", U=Tensor([[1.0, -1.0]]), V=Tensor([[0.5, 1.0]]))
    assert fuse_mfb(Graph(), Tensor([[2.0]]), Tensor([[3.0]]), p).data.tolist() == [[3.0, -6.0]]
    E_t, E_v, rng = inputs(4, 3, 1)
    p0 = init_fusion("mfb", 3, rng)
    p0.V.data[:] = 0.0
    assert np.all(fuse_mfb(Graph(), E_t, E_v, p0).data == 0.0)


def test_gmu_zero_weights():
    E_t, E_v, _ = inputs(3, 2, 2)
    z = lambda r, c: Tensor(np.zeros((r, c)))
    p = FusionParams("gmu", U_t=z(2, 4), U_v=z(2, 4), U_z=z(4, 4))
    assert np.all(fuse_gmu(Graph(), E_t, E_v, p).data == 0.0)


@pytest.mark.parametrize("gate_on", ["visual", "text"])
def test_gmu_saturation_limit(gate_on):
    E_t, E_v, rng = inputs(1, 3, 3)
    p = init_fusion("gmu", 3, rng)
    x = np.hstack([E_t.data, E_v.data])
    pre = (x @ p.U_z.data)[0]
    p.U_z.data[:] *= np.sign(pre)[None, :]  # force positive pre-activation
    p.U_z.data[:] *= 1e3
    f = fuse_gmu(Graph(), E_t, E_v, p, gate_on=gate_on).data
    target = np.tanh(E_v.data @ p.U_v.data) if gate_on == "visual" else np.tanh(E_t.data @ p.U_t.data)
    assert np.max(np.abs(f - target)) < 1e-3


@pytest.mark.parametrize("seed", range(10))
def test_gmu_convexity(seed):
    E_t, E_v, rng = inputs(6, 4, seed)
    p = init_fusion("gmu", 4, rng)
    f = fuse_gmu(Graph(), E_t, E_v, p).data
    a, b = np.tanh(E_t.data @ p.U_t.data), np.tanh(E_v.data @ p.U_v.data)
    assert np.all(f >= np.minimum(a, b) - 1e-15) and np.all(f <= np.maximum(a, b) + 1e-15)


@pytest.mark.parametrize("kind", FUSION_KINDS)
def test_output_width_is_2h(kind):
    E_t, E_v, rng = inputs(5, 3, 4)
    assert fuse(Graph(), E_t, E_v, init_fusion(kind, 3, rng)).shape == (5, 6)


@pytest.mark.parametrize("kind", FUSION_KINDS)
def test_row_wise_independence(kind):
    E_t, E_v, rng = inputs(5, 3, 5)
    p = init_fusion(kind, 3, rng)
    base = fuse(Graph(), E_t, E_v, p).data
    E_t.data[2] += 0.3
    E_v.data[2] -= 0.2
    moved = fuse(Graph(), E_t, E_v, p).data
    changed = np.any(moved != base, axis=1)
    assert changed.tolist() == [False, False, True, False, False]


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("kind", ["mfb", "gmu"])
def test_fusion_gradients(kind, seed):
    E_t, E_v, rng = inputs(3, 3, seed)
    p = init_fusion(kind, 3, rng)
    rep = grad_check(lambda g: head_loss(g, fuse(g, E_t, E_v, p), seed, 3), p)
    assert rep.passed and rep.max_rel_error < 1e-4


def test_concat_gradient_through_inputs():
    E_t, E_v, _ = inputs(3, 2, 9)
    E_t.requires_grad = E_v.requires_grad = True
    E_t.grad, E_v.grad = np.zeros_like(E_t.data), np.zeros_like(E_v.data)
    rep = grad_check(lambda g: head_loss(g, fuse_concat(g, E_t, E_v), 9, 3), [E_t, E_v])
    assert rep.passed


def test_glorot_init_bounds_and_determinism():
    for kind in FUSION_KINDS[1:]:
        a = init_fusion(kind, 4, np.random.default_rng(0))
        b = init_fusion(kind, 4, np.random.default_rng(0))
        for (name, t), (_, u) in zip(a.named_tensors(), b.named_tensors()):
            assert t.data.tobytes() == u.data.tobytes()
            assert np.all(np.abs(t.data) <= glorot_bound(*t.shape))
    assert glorot_bound(8, 16) == np.sqrt(6 / 24)


def test_errors():
    with pytest.raises(ConfigError):
        init_fusion("lstm", 2, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        FusionParams("mfb", U=Tensor(np.zeros((1, 2))))
    E_t, E_v, rng = inputs(2, 3, 0)
    with pytest.raises(DimensionError):
        fuse_concat(Graph(), E_t, Tensor(np.zeros((3, 3))))
    with pytest.raises(ConfigError):
        fuse_gmu(Graph(), E_t, E_v, init_fusion("gmu", 3, rng), gate_on="both")
