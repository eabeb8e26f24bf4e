"""AdamW training loop with linear decay, checkpoint retention and threshold tuning."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .dataio import Dataset, make_batches
from .errors import ConfigError, DataError, TrainingError
from .metrics import fmt_float, macro_f1, macro_f1_from_counts
from .model import ModelConfig, ModelParams, forward, init_model, loss, predict, score_dataset

logger = logging.getLogger(__name__)

BATCH_SEARCH_RANGE = (10, 180)
THRESHOLD_RANGE = (0.010, 0.999)


@dataclass
class TrainConfig:
    epochs: int = 3
    lr: float = 1e-3
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    train_batch: int = 32
    infer_batch: int = 41
    seed: int = 42
    schedule: str = "linear_decay"
    warmup_fraction: float = 0.0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr >= 0:
            raise ConfigError(f"lr must be non-negative, got {self.lr}")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.betas}")
        if not self.eps > 0:
            raise ConfigError("eps must be > 0")
        if self.schedule != "linear_decay":
            raise ConfigError(f"unknown schedule {self.schedule!r}; only linear_decay is supported")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must lie in [0, 1)")
        lo, hi = BATCH_SEARCH_RANGE
        for name in ("train_batch", "infer_batch"):
            size = getattr(self, name)
            if size < 1:
                raise ConfigError(f"{name} must be >= 1, got {size}")
            if not lo <= size <= hi:
                warnings.warn(f"{name}={size} lies outside the usual search range [{lo}, {hi}]", stacklevel=2)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def lr_at(step: int, total_steps: int, base_lr: float, warmup_steps: int = 0) -> float:
    """Linear decay to zero: ``base_lr * (1 - step / total_steps)``.

    With ``warmup_steps > 0`` the rate first ramps linearly from zero.
    """
    if total_steps <= 0:
        raise ConfigError("total_steps must be positive")
    if not 0 <= step < total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps})")
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    if warmup_steps:
        return base_lr * (total_steps - step) / (total_steps - warmup_steps)
    return base_lr * (1.0 - step / total_steps)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adamw_step(params, grads, state: OptimizerState, lr_t: float, cfg: TrainConfig) -> None:
    """One AdamW update in place.

    ``params`` and ``grads`` are parallel name->array mappings (or a
    ModelParams whose tensors carry ``.grad``; pass ``grads=None`` then).
    The decay ``w -= lr_t * wd * w`` is applied before, and separately from,
    the bias-corrected adaptive step.
    """
    if grads is None:
        named = list(params.named_tensors())
        weights = {n: t.data for n, t in named}
        grads = {n: t.grad for n, t in named}
    else:
        weights = params
    for name, g in grads.items():
        if g.shape != weights[name].shape:
            raise ConfigError(f"gradient for {name} has shape {g.shape}, parameter {weights[name].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name} at optimizer step {state.t + 1}")
    b1, b2 = cfg.betas
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, g in grads.items():
        w = weights[name]
        m = state.m.setdefault(name, np.zeros_like(w))
        v = state.v.setdefault(name, np.zeros_like(w))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        w -= lr_t * cfg.weight_decay * w
        w -= lr_t * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


@dataclass
class TrainReport:
    loss_curve: list[tuple[int, float, float]]
    best_epoch: int
    best_val_macro_f1: float
    tuned_threshold: float
    tuned_val_f1: float
    val_macro_f1: list[float]

    def write_loss_csv(self, path) -> None:
        lines = ["step,normalized_step,loss"]
        lines += [f"{s},{fmt_float(ns)},{fmt_float(l)}" for s, ns, l in self.loss_curve]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def loss_at(curve, x: float, window: float = 0.05) -> float:
    """Mean per-step loss over normalized steps within ``x +- window / 2``."""
    ns = np.array([c[1] for c in curve])
    ls = np.array([c[2] for c in curve])
    mask = np.abs(ns - x) <= window / 2
    if not mask.any():
        mask = np.abs(ns - x) == np.abs(ns - x).min()
    return float(ls[mask].mean())


def tune_threshold(val_scores, val_labels) -> tuple[float, float]:
    """Exact macro-F1 maximizer over midpoints of sorted unique scores.

    Candidates are clamped to [0.010, 0.999] and include both endpoints;
    ties go to the smallest threshold.  Returns ``(tau, f1)`` with ``f1`` a
    fraction in [0, 1].
    """
    s = np.asarray(val_scores, dtype=np.float64).ravel()
    y = np.asarray(val_labels).astype(np.int64).ravel()
    if s.size == 0:
        raise DataError("tune_threshold needs at least one score")
    if s.shape != y.shape:
        raise DataError("scores and labels differ in length")
    lo, hi = THRESHOLD_RANGE
    u = np.unique(s)
    cands = np.concatenate([[lo, hi], (u[:-1] + u[1:]) / 2.0])
    cands = np.unique(np.clip(cands, lo, hi))
    pos = np.sort(s[y == 1])
    neg = np.sort(s[y == 0])
    tp = pos.size - np.searchsorted(pos, cands, side="left")
    fp = neg.size - np.searchsorted(neg, cands, side="left")
    fn = pos.size - tp
    tn = neg.size - fp
    f1 = np.array([macro_f1_from_counts(*c) for c in zip(tp, fp, tn, fn)])
    k = int(np.argmax(f1))
    return float(cands[k]), float(f1[k] / 100.0)


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def evaluate_f1(params: ModelParams, model_cfg: ModelConfig, ds: Dataset, batch_size: int, tau: float = 0.5) -> float:
    scores = score_dataset(params, model_cfg, ds, batch_size)
    return macro_f1(predict(scores, tau), ds.labels)


def train_loop(
    train: Dataset,
    val: Dataset,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    params: ModelParams | None = None,
) -> tuple[ModelParams, TrainReport]:
    """Train for ``cfg.epochs`` epochs, keeping the best validation checkpoint.

    Validation uses tau = 0.5 after every epoch; a later epoch replaces the
    kept checkpoint only with a strictly higher macro-F1.  The threshold is
    tuned afterwards on the kept checkpoint's validation scores.
    """
    cfg.validate()
    if train.h != val.h or train.h != model_cfg.h:
        raise DataError(f"width mismatch: train h={train.h}, val h={val.h}, model h={model_cfg.h}")
    if params is None:
        params = init_model(model_cfg, seed=cfg.seed)
    state = OptimizerState()
    n_batches = -(-len(train) // cfg.train_batch)
    total = cfg.epochs * n_batches
    warmup = int(round(cfg.warmup_fraction * total))
    curve: list[tuple[int, float, float]] = []
    best, best_f1, best_epoch = None, -1.0, -1
    val_scores: list[float] = []
    step = 0
    for epoch in range(cfg.epochs):
        for batch in make_batches(train, cfg.train_batch, shuffle_seed=_epoch_seed(cfg.seed, epoch)):
            params.zero_grad()
            out = forward(batch, params, model_cfg)
            value = loss(out, batch.labels)
            l = float(value.data[0, 0])
            if not np.isfinite(l):
                raise TrainingError(f"non-finite loss at step {step}")
            out.graph.backward(value)
            adamw_step(params, None, state, lr_at(step, total, cfg.lr, warmup), cfg)
            curve.append((step, step / total, l))
            step += 1
        f1 = evaluate_f1(params, model_cfg, val, cfg.infer_batch)
        val_scores.append(f1)
        logger.info("epoch %d: val macro-F1 %.2f", epoch + 1, f1)
        if f1 > best_f1:
            best, best_f1, best_epoch = params.clone(), f1, epoch
    tau, tuned = tune_threshold(score_dataset(best, model_cfg, val, cfg.infer_batch), val.labels)
    report = TrainReport(curve, best_epoch, best_f1, tau, tuned, val_scores)
    return best, report
