"""Post-hoc diagnostics of a trained model.

Covers the affinity/similarity correlation, the affinity sign-inversion
ablation, the inference batch-size sweep and an embedding-space probe
(PCA projection followed by a linear logistic classifier).  The probe uses
PCA alone for the low-dimensional projection; t-SNE is not used.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .autodiff import Tensor
from .dataio import Dataset, batch_order
from .errors import ConfigError, DataError, UsageError
from .metrics import MetricsReport, evaluate_predictions, fmt_float, macro_f1, pearson
from .model import ModelConfig, ModelParams, predict, run_batches, score_dataset

PAIR_CLASSES = ("both_neg", "mixed", "both_pos")


@dataclass
class AffinityStudy:
    cos_sim: np.ndarray
    affinity: np.ndarray
    pair_class: list[str]
    r: float

    def __len__(self) -> int:
        return len(self.pair_class)

    def write_csv(self, path) -> None:
        lines = ["cos_sim,affinity,pair_class"]
        lines += [f"{fmt_float(c)},{fmt_float(a)},{k}" for c, a, k in zip(self.cos_sim, self.affinity, self.pair_class)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def class_means(self) -> dict[str, float]:
        kinds = np.array(self.pair_class)
        return {k: float(self.affinity[kinds == k].mean()) for k in PAIR_CLASSES if np.any(kinds == k)}


def _require_imgr(params: ModelParams, what: str) -> None:
    if params.imgr is None:
        raise UsageError(f"{what} needs a model with IMGR enabled")


def _cosine_matrix(F: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(F, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    C = (F @ F.T) / np.outer(safe, safe)
    C[norms == 0, :] = 0.0
    C[:, norms == 0] = 0.0
    return np.clip(C, -1.0, 1.0)


def affinity_study(
    params: ModelParams,
    cfg: ModelConfig,
    ds: Dataset,
    batch_size: int,
    symmetrize: bool = False,
) -> AffinityStudy:
    """Pair cosine similarity of fused embeddings with the learned affinity.

    Uses pre-IMGR embeddings ``f``.  One entry per within-batch pair
    ``i < j``; the affinity is ``R[i, j]`` or, with ``symmetrize``, the mean
    of ``R[i, j]`` and ``R[j, i]``.
    """
    _require_imgr(params, "affinity_study")
    cos, aff, kinds = [], [], []
    for batch, out in run_batches(params, cfg, ds, batch_size):
        F, R = out.fused.data, out.affinity.data
        m = batch.m
        if m < 2:
            continue
        iu, ju = np.triu_indices(m, k=1)
        C = _cosine_matrix(F)
        A = 0.5 * (R + R.T) if symmetrize else R
        cos.append(C[iu, ju])
        aff.append(A[iu, ju])
        y = batch.labels
        both = y[iu] + y[ju]
        kinds.extend(PAIR_CLASSES[b] for b in both)
    cos_arr = np.concatenate(cos) if cos else np.empty(0)
    aff_arr = np.concatenate(aff) if aff else np.empty(0)
    r = pearson(cos_arr, aff_arr) if cos_arr.size >= 2 else float("nan")
    return AffinityStudy(cos_arr, aff_arr, kinds, r)


def read_affinity_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = Path(path).read_text(encoding="utf-8").splitlines()[1:]
    cos = np.array([float(r.split(",")[0]) for r in rows])
    aff = np.array([float(r.split(",")[1]) for r in rows])
    return cos, aff


def evaluate(
    params: ModelParams,
    cfg: ModelConfig,
    ds: Dataset,
    tau: float,
    batch_size: int,
    order=None,
    invert_affinity: bool = False,
) -> MetricsReport:
    scores = score_dataset(params, cfg, ds, batch_size, order=order, invert_affinity=invert_affinity)
    return evaluate_predictions(predict(scores, tau), ds.labels, scores=scores, threshold=tau)


def sign_inversion_ablation(
    params: ModelParams, cfg: ModelConfig, test: Dataset, tau: float, batch_size: int
) -> tuple[MetricsReport, MetricsReport]:
    """Evaluate normally and again with every affinity negated at inference."""
    _require_imgr(params, "sign_inversion_ablation")
    normal = evaluate(params, cfg, test, tau, batch_size)
    inverted = evaluate(params, cfg, test, tau, batch_size, invert_affinity=True)
    return normal, inverted


@dataclass
class SweepResult:
    rows: list[tuple[int, float]]

    def write_csv(self, path) -> None:
        lines = ["batch_size,macro_f1"] + [f"{b},{fmt_float(f)}" for b, f in self.rows]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def f1_at(self, size: int) -> float:
        return dict(self.rows)[size]

    def plateau_f1(self, start: int = 20) -> float:
        """Mean macro-F1 over swept sizes >= ``start`` (all sizes if none qualify)."""
        vals = [f for b, f in self.rows if b >= start] or [f for _, f in self.rows]
        return float(np.mean(vals))

    def spread(self) -> float:
        f = [v for _, v in self.rows]
        return float(max(f) - min(f))


def batch_size_sweep(
    params: ModelParams,
    cfg: ModelConfig,
    test: Dataset,
    tau: float,
    sizes,
    seed: int = 42,
) -> SweepResult:
    """Macro-F1 per inference batch size over one shared seeded record order."""
    sizes = sorted({int(s) for s in sizes} | {1})
    if sizes[0] < 1:
        raise ConfigError("batch sizes must be >= 1")
    order = batch_order(len(test), seed)
    rows = []
    for b in sizes:
        scores = score_dataset(params, cfg, test, b, order=order)
        rows.append((b, macro_f1(predict(scores, tau), test.labels)))
    return SweepResult(rows)


def _as_array(X) -> np.ndarray:
    return X.data if isinstance(X, Tensor) else np.asarray(X, dtype=np.float64)


def pca_fit(X, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(mean, components k x d, explained variances)``.

    Each component's largest-magnitude entry is made positive.
    """
    X = _as_array(X)
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise ConfigError(f"k={k} must lie in [1, min(n, d)={min(n, d)}]")
    mean = X.mean(axis=0)
    _, s, Vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = Vt[:k].copy()
    lead = np.argmax(np.abs(comps), axis=1)
    signs = np.sign(comps[np.arange(k), lead])
    comps *= signs[:, None]
    var = s[:k] ** 2 / max(n - 1, 1)
    return mean, comps, var


def pca_project(X, k: int) -> np.ndarray:
    mean, comps, _ = pca_fit(X, k)
    return (_as_array(X) - mean) @ comps.T


def stratified_folds(labels, folds: int, seed: int) -> list[np.ndarray]:
    y = np.asarray(labels).astype(np.int64)
    rng = np.random.default_rng(seed)
    assign = np.empty(y.size, dtype=np.int64)
    offset = 0
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        assign[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    return [np.flatnonzero(assign == f) for f in range(folds)]


def _fit_gd(X: np.ndarray, y: np.ndarray, iters: int, lr: float) -> tuple[np.ndarray, float]:
    w = np.zeros(X.shape[1])
    b = 0.0
    n = X.shape[0]
    for _ in range(iters):
        z = X @ w + b
        r = expit(z) - y
        w -= lr * (X.T @ r) / n
        b -= lr * r.mean()
    return w, b


def linear_probe(
    X,
    labels,
    folds: int = 5,
    seed: int = 42,
    iters: int = 500,
    lr: float = 0.5,
    return_folds: bool = False,
):
    """Mean stratified k-fold accuracy (percent) of a logistic probe.

    Features are standardized with training-fold statistics; the probe is
    fit by full-batch gradient descent for a fixed ``iters`` budget.
    """
    X = _as_array(X)
    y = np.asarray(labels).astype(np.int64)
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    if X.shape[0] < folds:
        raise DataError(f"n={X.shape[0]} is smaller than folds={folds}")
    accs = []
    for test_idx in stratified_folds(y, folds, seed):
        train_idx = np.setdiff1d(np.arange(y.size), test_idx)
        for part, name in ((y[train_idx], "training"), (y[test_idx], "held-out")):
            if np.unique(part).size < 2:
                raise DataError(f"a {name} fold contains a single class")
        mu = X[train_idx].mean(axis=0)
        sd = X[train_idx].std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        Xtr, Xte = (X[train_idx] - mu) / sd, (X[test_idx] - mu) / sd
        w, b = _fit_gd(Xtr, y[train_idx].astype(np.float64), iters, lr)
        preds = (Xte @ w + b >= 0).astype(np.int64)
        accs.append(100.0 * np.mean(preds == y[test_idx]))
    mean = float(np.mean(accs))
    return (mean, accs) if return_folds else mean


def collect_embeddings(params: ModelParams, cfg: ModelConfig, ds: Dataset, batch_size: int):
    """Fused ``f`` and refined ``f'`` per record, in dataset order."""
    F = np.empty((len(ds), cfg.d))
    Fp = np.empty((len(ds), cfg.d))
    for batch, out in run_batches(params, cfg, ds, batch_size):
        F[batch.indices] = out.fused.data
        Fp[batch.indices] = out.refined.data
    return F, Fp


@dataclass
class ProbeResult:
    fused_acc: float
    refined_acc: float
    fused_folds: list[float]
    refined_folds: list[float]

    def write_csv(self, path) -> None:
        lines = ["fold,fused_acc,refined_acc"]
        lines += [f"{i},{fmt_float(a)},{fmt_float(b)}" for i, (a, b) in enumerate(zip(self.fused_folds, self.refined_folds))]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def embedding_probe(
    params: ModelParams,
    cfg: ModelConfig,
    ds: Dataset,
    batch_size: int,
    k: int = 2,
    folds: int = 5,
    seed: int = 42,
) -> ProbeResult:
    """Probe accuracy on the top-``k`` PCA projection of ``f`` and of ``f'``."""
    F, Fp = collect_embeddings(params, cfg, ds, batch_size)
    y = ds.labels
    fa, ff = linear_probe(pca_project(F, k), y, folds=folds, seed=seed, return_folds=True)
    ra, rf = linear_probe(pca_project(Fp, k), y, folds=folds, seed=seed, return_folds=True)
    return ProbeResult(fa, ra, ff, rf)
