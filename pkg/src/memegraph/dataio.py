"""Embedding datasets: the MEF text format, batching and a synthetic generator.

MEF (Meme Embedding File) layout, UTF-8 with LF line endings::

    MEF1,h=<int>
    <id>,<label>,<t_0>,...,<t_{h-1}>,<v_0>,...,<v_{h-1}>

Lines starting with ``#`` are comments.  Floats are written with
``repr``, the shortest decimal that round-trips a 64-bit float exactly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import ConfigError, DataError

_HEADER = re.compile(r"^MEF1,h=(\d+)$")


@dataclass(frozen=True)
class EmbeddingRecord:
    id: str
    label: int
    text_vec: np.ndarray
    image_vec: np.ndarray


@dataclass
class Dataset:
    records: list[EmbeddingRecord]
    h: int
    split_name: str = "train"

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for r in self.records:
            if len(r.text_vec) != self.h or len(r.image_vec) != self.h:
                raise DataError(f"record {r.id!r}: vectors must have length h={self.h}")
            if r.id in seen:
                raise DataError(f"duplicate id {r.id!r} in split {self.split_name!r}")
            seen.add(r.id)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    def text_matrix(self) -> np.ndarray:
        return np.array([r.text_vec for r in self.records], dtype=np.float64).reshape(len(self), self.h)

    def image_matrix(self) -> np.ndarray:
        return np.array([r.image_vec for r in self.records], dtype=np.float64).reshape(len(self), self.h)

    @classmethod
    def from_arrays(cls, ids, labels, text, image, split_name: str = "train") -> "Dataset":
        text = np.asarray(text, dtype=np.float64)
        image = np.asarray(image, dtype=np.float64)
        records = [
            EmbeddingRecord(str(i), int(y), text[k].copy(), image[k].copy())
            for k, (i, y) in enumerate(zip(ids, labels))
        ]
        return cls(records, h=text.shape[1], split_name=split_name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        if (self.h, self.split_name, len(self)) != (other.h, other.split_name, len(other)):
            return False
        return all(
            a.id == b.id
            and a.label == b.label
            and np.array_equal(a.text_vec, b.text_vec)
            and np.array_equal(a.image_vec, b.image_vec)
            for a, b in zip(self.records, other.records)
        )


@dataclass
class Batch:
    indices: list[int]
    E_t: Tensor
    E_v: Tensor
    labels: np.ndarray

    @property
    def m(self) -> int:
        return len(self.indices)


def _split_name_from(path: Path) -> str:
    stem = path.stem.lower()
    for name in ("train", "validation", "test"):
        if name in stem:
            return name
    if "val" in stem:
        return "validation"
    return "train"


def load_dataset(path, split_name: str | None = None) -> Dataset:
    """Parse an MEF file; every error names the offending line."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    h = None
    records: list[EmbeddingRecord] = []
    seen: dict[str, int] = {}
    with path.open("r", encoding="utf-8", newline="\n") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if line.startswith("#") or (h is not None and not line.strip()):
                continue
            if h is None:
                match = _HEADER.match(line.strip())
                if not match:
                    raise DataError(f"{path}:{lineno}: malformed header {line!r}, expected 'MEF1,h=<int>'")
                h = int(match.group(1))
                if h < 1:
                    raise DataError(f"{path}:{lineno}: h must be >= 1")
                continue
            fields = line.split(",")
            if len(fields) != 2 + 2 * h:
                raise DataError(
                    f"{path}:{lineno}: expected {2 + 2 * h} fields (id, label, 2h={2 * h} floats), got {len(fields)}"
                )
            rid, lab = fields[0], fields[1].strip()
            if lab not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: label {lab!r} not in {{0,1}}")
            if rid in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {rid!r} (first seen on line {seen[rid]})")
            try:
                values = np.array([float(x) for x in fields[2:]], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(values)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            seen[rid] = lineno
            records.append(EmbeddingRecord(rid, int(lab), values[:h], values[h:]))
    if h is None:
        raise DataError(f"{path}: missing MEF1 header")
    return Dataset(records, h=h, split_name=split_name or _split_name_from(path))


def save_dataset(ds: Dataset, path) -> None:
    if not ds.records:
        raise DataError("refusing to write an empty dataset (header with no body)")
    for r in ds.records:
        if len(r.text_vec) != ds.h or len(r.image_vec) != ds.h:
            raise DataError(f"record {r.id!r} does not match h={ds.h}")
        if "," in r.id or "\n" in r.id:
            raise DataError(f"record id {r.id!r} contains a separator")
    lines = [f"MEF1,h={ds.h}"]
    for r in ds.records:
        nums = ",".join(repr(float(x)) for x in np.concatenate([r.text_vec, r.image_vec]))
        lines.append(f"{r.id},{r.label},{nums}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def split_stats(ds: Dataset) -> tuple[int, float]:
    """Return ``(n, percentage of label-1 records)``."""
    n = len(ds)
    if n == 0:
        raise DataError("split_stats of an empty dataset")
    return n, 100.0 * int(ds.labels.sum()) / n


def make_batch(ds: Dataset, indices) -> Batch:
    idx = [int(i) for i in indices]
    recs = [ds.records[i] for i in idx]
    E_t = Tensor(np.array([r.text_vec for r in recs]).reshape(len(idx), ds.h))
    E_v = Tensor(np.array([r.image_vec for r in recs]).reshape(len(idx), ds.h))
    return Batch(idx, E_t, E_v, np.array([r.label for r in recs], dtype=np.int64))


def batch_order(n: int, shuffle_seed: int | None = None) -> np.ndarray:
    if shuffle_seed is None:
        return np.arange(n)
    return np.random.default_rng(shuffle_seed).permutation(n)


def make_batches(ds: Dataset, batch_size: int, shuffle_seed: int | None = None) -> list[Batch]:
    """Split one epoch into batches; the ragged last batch is kept."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = batch_order(len(ds), shuffle_seed)
    return [make_batch(ds, order[s : s + batch_size]) for s in range(0, len(ds), batch_size)]


@dataclass
class SynthConfig:
    h: int = 8
    n_train: int = 2000
    n_val: int = 250
    n_test: int = 250
    positive_rate: float = 0.5
    mean_separation: float = 1.2
    noise: float = 1.0
    modality_dropout: float = 0.3
    seed: int = 42
    split_names: tuple = field(default=("train", "validation", "test"), repr=False)

    def validate(self) -> None:
        if self.h < 1:
            raise ConfigError("h must be >= 1")
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ConfigError("split sizes must be non-negative")
        if not 0.0 <= self.positive_rate <= 1.0:
            raise ConfigError("positive_rate must lie in [0, 1]")
        if not self.noise > 0:
            raise ConfigError("noise must be > 0")
        if not 0.0 <= self.modality_dropout <= 1.0:
            raise ConfigError("modality_dropout must lie in [0, 1]")
        if not math.isfinite(self.mean_separation):
            raise ConfigError("mean_separation must be finite")


def _unit_rows(rng: np.random.Generator, k: int, h: int) -> np.ndarray:
    m = rng.standard_normal((k, h))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def class_means(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm class mean directions ``(mu_text, mu_image)``, each 2 x h."""
    rng = np.random.default_rng([cfg.seed, 0])
    return _unit_rows(rng, 2, cfg.h), _unit_rows(rng, 2, cfg.h)


def _sample_split(cfg: SynthConfig, n: int, split_idx: int, mus) -> Dataset:
    rng = np.random.default_rng([cfg.seed, 1 + split_idx])
    mu_t, mu_v = mus
    y = (rng.random(n) < cfg.positive_rate).astype(np.int64)
    text = cfg.mean_separation * mu_t[y] + cfg.noise * rng.standard_normal((n, cfg.h))
    image = cfg.mean_separation * mu_v[y] + cfg.noise * rng.standard_normal((n, cfg.h))
    dropped = rng.random(n) < cfg.modality_dropout
    drop_text = rng.random(n) < 0.5
    pure = cfg.noise * rng.standard_normal((n, cfg.h))
    text = np.where((dropped & drop_text)[:, None], pure, text)
    image = np.where((dropped & ~drop_text)[:, None], pure, image)
    name = cfg.split_names[split_idx]
    ids = [f"{name}-{k:06d}" for k in range(n)]
    return Dataset.from_arrays(ids, y, text, image, split_name=name)


def generate_synthetic(cfg: SynthConfig) -> tuple[Dataset, Dataset, Dataset]:
    """Gaussian class-conditional embeddings with planted modality dropout.

    Each vector is ``mean_separation * mu_c + noise * N(0, I)``; with
    probability ``modality_dropout`` one modality (chosen uniformly) is
    replaced by ``noise * N(0, I)``.  Splits use independent streams
    derived from the seed, so they are disjoint by construction.
    """
    cfg.validate()
    mus = class_means(cfg)
    sizes = (cfg.n_train, cfg.n_val, cfg.n_test)
    return tuple(_sample_split(cfg, n, k, mus) for k, n in enumerate(sizes))
