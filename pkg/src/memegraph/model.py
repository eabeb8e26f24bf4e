"""Full classifier: optional adapters -> fuser -> optional IMGR -> linear head."""

from __future__ import annotations

import base64
import copy
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import Graph, Tensor, softmax
from .dataio import Batch, Dataset, make_batch
from .errors import ConfigError, DataError, DimensionError
from .fusion import FUSION_KINDS, GATE_TARGETS, FusionParams, check_kind, fuse, glorot, init_fusion
from .imgr import ImgrParams, affinity, init_imgr, invert_affinity_signs, message_pass


@dataclass
class ModelConfig:
    h: int = 8
    fusion: str = "gmu"
    imgr: bool = True
    adapter: bool = False
    gmu_gate_on: str = "visual"

    @property
    def d(self) -> int:
        return 2 * self.h

    def validate(self) -> None:
        if not isinstance(self.h, int) or self.h < 1:
            raise ConfigError(f"h must be a positive integer, got {self.h!r}")
        check_kind(self.fusion)
        if self.gmu_gate_on not in GATE_TARGETS:
            raise ConfigError(f"gmu_gate_on must be one of {'|'.join(GATE_TARGETS)}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ModelParams:
    fusion: FusionParams
    W_c: Tensor
    imgr: ImgrParams | None = None
    adapter_t: Tensor | None = None
    adapter_v: Tensor | None = None

    def named_tensors(self):
        """Stable enumeration order; optimizer state and checkpoints rely on it."""
        if self.adapter_t is not None:
            yield "adapter_t", self.adapter_t
            yield "adapter_v", self.adapter_v
        yield from self.fusion.named_tensors()
        if self.imgr is not None:
            yield from self.imgr.named_tensors()
        yield "W_c", self.W_c

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.zero_grad()

    def clone(self) -> "ModelParams":
        return copy.deepcopy(self)

    def state(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_tensors()}


@dataclass
class ForwardOutput:
    logits: Tensor
    probs: np.ndarray
    fused: Tensor
    refined: Tensor
    affinity: Tensor | None
    graph: Graph

    @property
    def scores(self) -> np.ndarray:
        """Positive-class probabilities."""
        return self.probs[:, 1]


def init_model(cfg: ModelConfig, seed: int = 42) -> ModelParams:
    cfg.validate()
    rng = np.random.default_rng(seed)
    h, d = cfg.h, cfg.d
    fusion = init_fusion(cfg.fusion, h, rng)
    imgr = init_imgr(d, rng) if cfg.imgr else None
    W_c = glorot(rng, d, 2, name="W_c")
    adapter_t = adapter_v = None
    if cfg.adapter:
        adapter_t = Tensor(np.eye(h), requires_grad=True, name="adapter_t")
        adapter_v = Tensor(np.eye(h), requires_grad=True, name="adapter_v")
    return ModelParams(fusion=fusion, W_c=W_c, imgr=imgr, adapter_t=adapter_t, adapter_v=adapter_v)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except DimensionError as exc:
        raise DimensionError(f"[{name}] {exc}") from None


def forward(
    batch: Batch,
    params: ModelParams,
    cfg: ModelConfig,
    graph: Graph | None = None,
    invert_affinity: bool = False,
) -> ForwardOutput:
    g = graph if graph is not None else Graph()
    E_t, E_v = batch.E_t, batch.E_v
    if E_t.cols != cfg.h or E_v.cols != cfg.h:
        raise DimensionError(f"[input] batch width {E_t.cols}/{E_v.cols} does not match model h={cfg.h}")
    if params.adapter_t is not None:
        E_t = _stage("adapter", g.matmul, E_t, params.adapter_t)
        E_v = _stage("adapter", g.matmul, E_v, params.adapter_v)
    fused = _stage("fusion", fuse, g, E_t, E_v, params.fusion, gate_on=cfg.gmu_gate_on)
    R = None
    refined = fused
    if params.imgr is not None:
        R = _stage("imgr", affinity, g, fused, params.imgr)
        R_used = invert_affinity_signs(g, R) if invert_affinity else R
        refined = _stage("imgr", message_pass, g, fused, R_used, params.imgr)
    logits = _stage("classifier", g.matmul, refined, params.W_c)
    return ForwardOutput(logits, softmax(logits.data), fused, refined, R, g)


def loss(out: ForwardOutput, labels) -> Tensor:
    """Mean cross-entropy; returns the 1x1 tape tensor for ``out.graph.backward``."""
    value, _ = out.graph.softmax_xent(out.logits, labels)
    return value


def predict(probs, tau: float) -> np.ndarray:
    """Label 1 iff P(class 1) >= tau; ties go to the positive class."""
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {tau}")
    if isinstance(probs, ForwardOutput):
        probs = probs.probs
    p = np.asarray(probs, dtype=np.float64)
    scores = p[:, 1] if p.ndim == 2 else p
    return (scores >= tau).astype(np.int64)


def run_batches(
    params: ModelParams,
    cfg: ModelConfig,
    ds: Dataset,
    batch_size: int,
    order=None,
    invert_affinity: bool = False,
):
    """Yield ``(batch, output)`` over ``ds`` in ``order`` (dataset order by default)."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(ds)) if order is None else np.asarray(order)
    for s in range(0, len(order), batch_size):
        batch = make_batch(ds, order[s : s + batch_size])
        yield batch, forward(batch, params, cfg, invert_affinity=invert_affinity)


def score_dataset(
    params: ModelParams,
    cfg: ModelConfig,
    ds: Dataset,
    batch_size: int,
    order=None,
    invert_affinity: bool = False,
) -> np.ndarray:
    """Positive-class probability per record, aligned with dataset order."""
    scores = np.empty(len(ds))
    for batch, out in run_batches(params, cfg, ds, batch_size, order, invert_affinity):
        scores[batch.indices] = out.scores
    return scores


# Checkpoint container ------------------------------------------------------
#
#   MGCK1 format=<decimal|f64le> tensors=<count>
#   cfg <key>=<value>            (one line per ModelConfig field)
#   meta <key>=<value>           (optional, free-form)
#   tensor <name> <rows> <cols>
#   <payload>                    decimal: one line per row; f64le: one base64 line

CHECKPOINT_FORMATS = ("decimal", "f64le")


def _fmt_cfg_value(v) -> str:
    if isinstance(v, bool):
        return "on" if v else "off"
    return str(v)


def save_checkpoint(path, params: ModelParams, cfg: ModelConfig, fmt: str = "decimal", meta: dict | None = None) -> None:
    if fmt not in CHECKPOINT_FORMATS:
        raise ConfigError(f"checkpoint format must be one of {CHECKPOINT_FORMATS}, got {fmt!r}")
    named = list(params.named_tensors())
    lines = [f"MGCK1 format={fmt} tensors={len(named)}"]
    lines += [f"cfg {k}={_fmt_cfg_value(v)}" for k, v in cfg.as_dict().items()]
    for k, v in (meta or {}).items():
        lines.append(f"meta {k}={v}")
    for name, t in named:
        lines.append(f"tensor {name} {t.rows} {t.cols}")
        if fmt == "decimal":
            lines += [" ".join(repr(float(x)) for x in row) for row in t.data]
        else:
            lines.append(base64.b64encode(t.data.astype("<f8").tobytes()).decode("ascii"))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse_cfg(entries: dict[str, str]) -> ModelConfig:
    def flag(v: str) -> bool:
        if v not in ("on", "off"):
            raise DataError(f"checkpoint flag {v!r} is not on|off")
        return v == "on"

    cfg = ModelConfig(
        h=int(entries["h"]),
        fusion=entries["fusion"],
        imgr=flag(entries["imgr"]),
        adapter=flag(entries["adapter"]),
        gmu_gate_on=entries.get("gmu_gate_on", "visual"),
    )
    cfg.validate()
    return cfg


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig, dict]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 3 or head[0] != "MGCK1":
        raise DataError(f"{path}: not an MGCK1 checkpoint")
    fmt = head[1].removeprefix("format=")
    if fmt not in CHECKPOINT_FORMATS:
        raise DataError(f"{path}: unknown payload format {fmt!r}")
    cfg_entries, meta, arrays = {}, {}, {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("cfg "):
            k, _, v = line[4:].partition("=")
            cfg_entries[k] = v
        elif line.startswith("meta "):
            k, _, v = line[5:].partition("=")
            meta[k] = v
        elif line.startswith("tensor "):
            _, name, r, c = line.split()
            r, c = int(r), int(c)
            if fmt == "decimal":
                rows = [[float(x) for x in lines[i + 1 + k].split()] for k in range(r)]
                arr = np.array(rows, dtype=np.float64).reshape(r, c)
                i += r
            else:
                raw = base64.b64decode(lines[i + 1])
                arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(r, c)
                i += 1
            arrays[name] = arr
        else:
            raise DataError(f"{path}:{i + 1}: unexpected line {line[:40]!r}")
        i += 1
    try:
        cfg = _parse_cfg(cfg_entries)
    except KeyError as exc:
        raise DataError(f"{path}: missing cfg key {exc}") from None
    params = init_model(cfg, seed=0)
    expected = [name for name, _ in params.named_tensors()]
    if list(arrays) != expected:
        raise DataError(f"{path}: tensors {list(arrays)} do not match declared order {expected}")
    for name, t in params.named_tensors():
        if arrays[name].shape != t.shape:
            raise DataError(f"{path}: tensor {name} has shape {arrays[name].shape}, expected {t.shape}")
        t.data[...] = arrays[name]
    return params, cfg, meta


__all__ = [
    "ModelConfig",
    "ModelParams",
    "ForwardOutput",
    "init_model",
    "forward",
    "loss",
    "predict",
    "run_batches",
    "score_dataset",
    "save_checkpoint",
    "load_checkpoint",
    "FUSION_KINDS",
]
