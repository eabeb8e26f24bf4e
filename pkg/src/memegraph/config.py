"""Experiment configuration: ``key = value`` files plus command-line overrides.

Resolution order is defaults < config file < ``--set`` overrides < ``--seed``.
Values are kept as the strings they were given in, so a run manifest
echoes them verbatim; typed views are built on demand.
"""

from __future__ import annotations

from pathlib import Path

from .dataio import SynthConfig
from .errors import ConfigError
from .model import ModelConfig
from .train import TrainConfig


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"expected on|off, got {text!r}")


def parse_int_list(text: str) -> list[int]:
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


# key -> (parser, default). Empty default means "unset".
KEYS: dict[str, tuple] = {
    "verb": (str, ""),
    # datasets
    "train_path": (str, ""),
    "val_path": (str, ""),
    "test_path": (str, ""),
    "data_dir": (str, ""),
    # model
    "h": (int, "8"),
    "fusion": (str, "gmu"),
    "imgr": (parse_bool, "on"),
    "adapter": (parse_bool, "off"),
    "gmu_gate_on": (str, "visual"),
    # training
    "epochs": (int, "3"),
    "lr": (float, "1e-3"),
    "weight_decay": (float, "0.01"),
    "beta1": (float, "0.9"),
    "beta2": (float, "0.999"),
    "eps": (float, "1e-8"),
    "train_batch": (int, "32"),
    "infer_batch": (int, "41"),
    "seed": (int, "42"),
    "schedule": (str, "linear_decay"),
    "warmup_fraction": (float, "0.0"),
    # evaluation and analysis
    "checkpoint": (str, ""),
    "checkpoint_format": (str, "decimal"),
    "threshold": (str, ""),
    "sweep_sizes": (parse_int_list, "1-60"),
    "plateau_start": (int, "20"),
    "affinity_symmetrize": (parse_bool, "off"),
    "probe_k": (int, "2"),
    "probe_folds": (int, "5"),
    "probe_iters": (int, "500"),
    "grad_batch": (int, "4"),
    "grad_step": (float, "1e-6"),
    "grad_tol": (float, "1e-4"),
    "preds_a": (str, ""),
    "preds_b": (str, ""),
    "bootstrap_B": (int, "1000"),
    "bootstrap_metric": (str, "macro_f1"),
    "bootstrap_alternative": (str, "greater"),
    # synthetic generator
    "n_train": (int, "2000"),
    "n_val": (int, "250"),
    "n_test": (int, "250"),
    "positive_rate": (float, "0.5"),
    "mean_separation": (float, "1.2"),
    "noise": (float, "1.0"),
    "modality_dropout": (float, "0.3"),
}


def read_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, _, value = text.partition("=")
    return key.strip(), value.strip()


class ExperimentConfig:
    def __init__(self, values: dict[str, str] | None = None):
        self.values = {k: d for k, (_, d) in KEYS.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    @classmethod
    def resolve(cls, config_path=None, overrides=(), seed: int | None = None) -> "ExperimentConfig":
        cfg = cls(read_config_file(config_path) if config_path else None)
        for item in overrides:
            cfg.set(*parse_override(item))
        if seed is not None:
            cfg.set("seed", str(seed))
        return cfg

    def set(self, key: str, value: str) -> None:
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        parser = KEYS[key][0]
        if value != "":
            try:
                parser(value)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
        self.values[key] = value

    def raw(self, key: str) -> str:
        return self.values[key]

    def get(self, key: str):
        parser, _ = KEYS[key]
        v = self.values[key]
        return None if v == "" else parser(v)

    def require(self, key: str):
        v = self.get(key)
        if v is None:
            raise ConfigError(f"config key {key!r} must be set for this command")
        return v

    def model_config(self) -> ModelConfig:
        cfg = ModelConfig(
            h=self.get("h"),
            fusion=self.get("fusion"),
            imgr=self.get("imgr"),
            adapter=self.get("adapter"),
            gmu_gate_on=self.get("gmu_gate_on"),
        )
        cfg.validate()
        return cfg

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.get("epochs"),
            lr=self.get("lr"),
            weight_decay=self.get("weight_decay"),
            betas=(self.get("beta1"), self.get("beta2")),
            eps=self.get("eps"),
            train_batch=self.get("train_batch"),
            infer_batch=self.get("infer_batch"),
            seed=self.get("seed"),
            schedule=self.get("schedule"),
            warmup_fraction=self.get("warmup_fraction"),
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            h=self.get("h"),
            n_train=self.get("n_train"),
            n_val=self.get("n_val"),
            n_test=self.get("n_test"),
            positive_rate=self.get("positive_rate"),
            mean_separation=self.get("mean_separation"),
            noise=self.get("noise"),
            modality_dropout=self.get("modality_dropout"),
            seed=self.get("seed"),
        )

    def manifest_text(self) -> str:
        lines = ["# memegraph run manifest; reproduce with: memegraph <verb> --config <this file>"]
        lines += [f"{k} = {v}".rstrip() for k, v in self.values.items()]
        return "\n".join(lines) + "\n"
