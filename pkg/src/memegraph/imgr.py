"""Inter-meme graph reasoning over one batch.

The batch is a fully connected graph with self-loops.  Edge weights come
from two learned projections, ``R = (F W_phi)(F W_gamma)^T``, and a single
residual message-passing layer refines the nodes:
``F' = ((R / m) F W_g) W_r + F`` with ``m`` the runtime batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Graph, Tensor
from .errors import DimensionError
from .fusion import glorot

IMGR_MATRICES = ("W_phi", "W_gamma", "W_g", "W_r")


@dataclass
class ImgrParams:
    W_phi: Tensor
    W_gamma: Tensor
    W_g: Tensor
    W_r: Tensor

    def __post_init__(self) -> None:
        d = self.W_phi.rows
        for name in IMGR_MATRICES:
            t = getattr(self, name)
            if t.shape != (d, d):
                raise DimensionError(f"imgr.{name} must be {d}x{d}, got {t.rows}x{t.cols}")

    @property
    def d(self) -> int:
        return self.W_phi.rows

    def named_tensors(self):
        for name in IMGR_MATRICES:
            yield f"imgr.{name}", getattr(self, name)


def init_imgr(d: int, rng: np.random.Generator) -> ImgrParams:
    return ImgrParams(**{name: glorot(rng, d, d, name=f"imgr.{name}") for name in IMGR_MATRICES})


def identity_imgr(d: int) -> ImgrParams:
    return ImgrParams(**{name: Tensor(np.eye(d), requires_grad=True, name=f"imgr.{name}") for name in IMGR_MATRICES})


def _check_width(F: Tensor, params: ImgrParams, stage: str) -> None:
    if F.cols != params.d:
        raise DimensionError(f"{stage}: embeddings have width {F.cols}, IMGR expects {params.d}")


def affinity(g: Graph, F: Tensor, params: ImgrParams) -> Tensor:
    """m x m affinity ``R[i, j] = <f_i W_phi, f_j W_gamma>``; generally asymmetric."""
    _check_width(F, params, "affinity")
    return g.matmul(g.matmul(F, params.W_phi), g.transpose(g.matmul(F, params.W_gamma)))


def message_pass(g: Graph, F: Tensor, R: Tensor, params: ImgrParams) -> Tensor:
    _check_width(F, params, "message_pass")
    m = F.rows
    if R.shape != (m, m):
        raise DimensionError(f"message_pass: affinity is {R.rows}x{R.cols}, batch has m={m}")
    messages = g.matmul(g.matmul(g.matmul(g.scale(R, 1.0 / m), F), params.W_g), params.W_r)
    return g.add(messages, F)


def invert_affinity_signs(g: Graph, R: Tensor) -> Tensor:
    """``-R``; only the sign-inversion ablation uses this."""
    return g.scale(R, -1.0)
