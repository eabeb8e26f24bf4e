"""Modality fusers mapping (E_t, E_v), each m x h, to fused F of shape m x 2h.

All projections use the row-vector convention ``x @ W`` with ``W`` of
shape h x d.  There are no bias terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Graph, Tensor
from .errors import ConfigError, DimensionError

FUSION_KINDS = ("concat", "mfb", "gmu")
GATE_TARGETS = ("visual", "text")

_MATRICES = {
    "concat": (),
    "mfb": ("U", "V"),
    "gmu": ("U_t", "U_v", "U_z"),
}


def glorot_bound(rows: int, cols: int) -> float:
    return float(np.sqrt(6.0 / (rows + cols)))


def glorot(rng: np.random.Generator, rows: int, cols: int, name: str | None = None) -> Tensor:
    b = glorot_bound(rows, cols)
    return Tensor(rng.uniform(-b, b, size=(rows, cols)), requires_grad=True, name=name)


def check_kind(kind: str) -> str:
    if kind not in FUSION_KINDS:
        raise ConfigError(f"unknown fusion kind {kind!r}; expected one of {'|'.join(FUSION_KINDS)}")
    return kind


@dataclass
class FusionParams:
    kind: str
    U: Tensor | None = None
    V: Tensor | None = None
    U_t: Tensor | None = None
    U_v: Tensor | None = None
    U_z: Tensor | None = None

    def __post_init__(self) -> None:
        check_kind(self.kind)
        wanted = set(_MATRICES[self.kind])
        for name in ("U", "V", "U_t", "U_v", "U_z"):
            present = getattr(self, name) is not None
            if present != (name in wanted):
                state = "missing" if not present else "unexpected"
                raise ConfigError(f"fusion {self.kind!r}: matrix {name} {state}")

    def named_tensors(self):
        for name in _MATRICES[self.kind]:
            yield f"fusion.{name}", getattr(self, name)


def init_fusion(kind: str, h: int, rng: np.random.Generator) -> FusionParams:
    check_kind(kind)
    d = 2 * h
    shapes = {"U": (h, d), "V": (h, d), "U_t": (h, d), "U_v": (h, d), "U_z": (d, d)}
    mats = {name: glorot(rng, *shapes[name], name=f"fusion.{name}") for name in _MATRICES[kind]}
    return FusionParams(kind, **mats)


def _check_inputs(E_t: Tensor, E_v: Tensor) -> None:
    if E_t.shape != E_v.shape:
        raise DimensionError(f"fusion: text {E_t.rows}x{E_t.cols} and image {E_v.rows}x{E_v.cols} embeddings differ")


def fuse_concat(g: Graph, E_t: Tensor, E_v: Tensor) -> Tensor:
    _check_inputs(E_t, E_v)
    return g.concat_cols(E_t, E_v)


def fuse_mfb(g: Graph, E_t: Tensor, E_v: Tensor, params: FusionParams) -> Tensor:
    """Factorized bilinear fusion: ``(E_t U) * (E_v V)`` elementwise."""
    _check_inputs(E_t, E_v)
    return g.hadamard(g.matmul(E_t, params.U), g.matmul(E_v, params.V))


def fuse_gmu(g: Graph, E_t: Tensor, E_v: Tensor, params: FusionParams, gate_on: str = "visual") -> Tensor:
    """Gated multimodal unit.

    ``z = sigmoid([E_t, E_v] U_z)`` weights the gated branch and ``1 - z``
    the other; by default the gate multiplies the visual branch
    ``tanh(E_v U_v)``.  ``gate_on="text"`` swaps the two branches.
    """
    _check_inputs(E_t, E_v)
    if gate_on not in GATE_TARGETS:
        raise ConfigError(f"gmu_gate_on must be one of {'|'.join(GATE_TARGETS)}, got {gate_on!r}")
    z = g.sigmoid(g.matmul(g.concat_cols(E_t, E_v), params.U_z))
    text_branch = g.tanh(g.matmul(E_t, params.U_t))
    image_branch = g.tanh(g.matmul(E_v, params.U_v))
    gated, other = (image_branch, text_branch) if gate_on == "visual" else (text_branch, image_branch)
    one_minus_z = g.add(Tensor(np.ones(z.shape)), g.scale(z, -1.0))
    return g.add(g.hadamard(z, gated), g.hadamard(one_minus_z, other))


def fuse(g: Graph, E_t: Tensor, E_v: Tensor, params: FusionParams, gate_on: str = "visual") -> Tensor:
    if params.kind == "concat":
        return fuse_concat(g, E_t, E_v)
    if params.kind == "mfb":
        return fuse_mfb(g, E_t, E_v, params)
    return fuse_gmu(g, E_t, E_v, params, gate_on=gate_on)
