"""Command-line entry point.

Exit codes: 0 success, 1 data error, 2 configuration/usage error,
3 training divergence.  Every command writes ``manifest.txt`` (and a per-verb
``manifest.<verb>.txt``, so verbs sharing a directory keep theirs) into its
output directory; a manifest is itself a valid ``--config`` file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis
from .autodiff import Graph, Tensor, grad_check
from .baseline import logistic_baseline
from .config import ExperimentConfig
from .dataio import Batch, Dataset, generate_synthetic, load_dataset, save_dataset, split_stats
from .errors import ConfigError, DataError, MemeGraphError, TrainingError, UsageError
from .metrics import evaluate_predictions, fmt_float, paired_bootstrap
from .model import init_model, load_checkpoint, loss, forward, predict, save_checkpoint, score_dataset
from .train import train_loop, tune_threshold

logger = logging.getLogger("memegraph")

SPLIT_FILES = {"train": "train.mef", "val": "validation.mef", "test": "test.mef"}


def _write(out: Path, name: str, text: str) -> Path:
    path = out / name
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _kv(d: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in d.items())


def _dataset(cfg: ExperimentConfig, split: str, out: Path) -> Dataset:
    explicit = cfg.get(f"{split}_path")
    if explicit:
        path = Path(explicit)
    else:
        base = Path(cfg.get("data_dir")) if cfg.get("data_dir") else out
        path = base / SPLIT_FILES[split]
    return load_dataset(path, split_name={"val": "validation"}.get(split, split))


def _checkpoint(cfg: ExperimentConfig, out: Path):
    path = Path(cfg.get("checkpoint")) if cfg.get("checkpoint") else out / "checkpoint.mgck"
    return load_checkpoint(path)


def read_threshold_file(path) -> float:
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("tau="):
            return float(line[4:])
    raise DataError(f"{path}: no 'tau=' line")


def resolve_threshold(cfg: ExperimentConfig, out: Path) -> float:
    """Literal threshold, a tune-threshold output file, or ``out/threshold.txt``."""
    text = cfg.raw("threshold")
    if text:
        try:
            return float(text)
        except ValueError:
            if not Path(text).is_file():
                raise DataError(f"threshold file not found: {text}") from None
            return read_threshold_file(text)
    default = out / "threshold.txt"
    return read_threshold_file(default) if default.is_file() else 0.5


def cmd_gen_synth(cfg, out):
    sc = cfg.synth_config()
    train, val, test = generate_synthetic(sc)
    for split, ds in (("train", train), ("val", val), ("test", test)):
        save_dataset(ds, out / SPLIT_FILES[split])
    base = logistic_baseline(train, test)
    _write(out, "baseline.txt", _kv({"logreg_test_accuracy": fmt_float(base["accuracy"]), "logreg_test_macro_f1": fmt_float(base["macro_f1"])}))
    print(f"wrote {len(train)}/{len(val)}/{len(test)} records to {out}; logistic baseline accuracy {base['accuracy']:.2f}")


def cmd_stats(cfg, out):
    rows = ["split,n,positive_pct"]
    for split in ("train", "val", "test"):
        try:
            ds = _dataset(cfg, split, out)
        except DataError:
            if cfg.get(f"{split}_path"):
                raise
            continue
        n, pct = split_stats(ds)
        rows.append(f"{ds.split_name},{n},{fmt_float(pct)}")
        print(f"{ds.split_name:<11} n={n:<6} positive={pct:.1f}%")
    if len(rows) == 1:
        raise DataError("no dataset found; set train_path/val_path/test_path or data_dir")
    _write(out, "stats.csv", "\n".join(rows) + "\n")


def cmd_train(cfg, out):
    mc, tc = cfg.model_config(), cfg.train_config()
    train, val = _dataset(cfg, "train", out), _dataset(cfg, "val", out)
    params, report = train_loop(train, val, mc, tc)
    save_checkpoint(out / "checkpoint.mgck", params, mc, fmt=cfg.get("checkpoint_format"))
    report.write_loss_csv(out / "loss_curve.csv")
    _write(out, "threshold.txt", _kv({"tau": fmt_float(report.tuned_threshold), "f1": fmt_float(report.tuned_val_f1)}))
    _write(
        out,
        "train_summary.txt",
        _kv(
            {
                "best_epoch": report.best_epoch + 1,
                "best_val_macro_f1": fmt_float(report.best_val_macro_f1),
                "val_macro_f1_per_epoch": ";".join(fmt_float(v) for v in report.val_macro_f1),
                "tuned_threshold": fmt_float(report.tuned_threshold),
                "tuned_val_f1": fmt_float(report.tuned_val_f1),
                "steps": len(report.loss_curve),
                "final_loss": fmt_float(report.loss_curve[-1][2]),
            }
        ),
    )
    print(
        f"best epoch {report.best_epoch + 1}: val macro-F1 {report.best_val_macro_f1:.2f}; "
        f"tuned threshold {report.tuned_threshold:.4f}"
    )


def cmd_evaluate(cfg, out):
    params, mc, _ = _checkpoint(cfg, out)
    test = _dataset(cfg, "test", out)
    tau = resolve_threshold(cfg, out)
    scores = score_dataset(params, mc, test, cfg.get("infer_batch"))
    preds = predict(scores, tau)
    rep = evaluate_predictions(preds, test.labels, scores=scores, threshold=tau)
    _write(out, "metrics.txt", rep.to_keyvalue())
    _write(out, "metrics.csv", rep.csv_header() + rep.to_csv_row())
    lines = ["id,label,score,pred"]
    lines += [f"{r.id},{r.label},{fmt_float(s)},{p}" for r, s, p in zip(test.records, scores, preds)]
    _write(out, "predictions.csv", "\n".join(lines) + "\n")
    auc = "n/a" if rep.auc is None else f"{rep.auc:.2f}"
    print(f"Acc {rep.accuracy:.2f}  macro-F1 {rep.macro_f1:.2f}  AUC {auc}  (tau={tau:.4f})")


def cmd_tune_threshold(cfg, out):
    params, mc, _ = _checkpoint(cfg, out)
    val = _dataset(cfg, "val", out)
    tau, f1 = tune_threshold(score_dataset(params, mc, val, cfg.get("infer_batch")), val.labels)
    _write(out, "threshold.txt", _kv({"tau": fmt_float(tau), "f1": fmt_float(f1)}))
    print(f"tau={tau:.4f} validation macro-F1={100 * f1:.2f}")


def cmd_sweep_batch(cfg, out):
    params, mc, _ = _checkpoint(cfg, out)
    test = _dataset(cfg, "test", out)
    res = analysis.batch_size_sweep(params, mc, test, resolve_threshold(cfg, out), cfg.get("sweep_sizes"), seed=cfg.get("seed"))
    res.write_csv(out / "sweep.csv")
    start = cfg.get("plateau_start")
    summary = {"f1_at_1": fmt_float(res.f1_at(1)), "plateau_start": start, "plateau_f1": fmt_float(res.plateau_f1(start)), "spread": fmt_float(res.spread())}
    _write(out, "sweep_summary.txt", _kv(summary))
    print(f"F1 at size 1: {res.f1_at(1):.2f}; plateau (>= {start}): {res.plateau_f1(start):.2f}")


def cmd_analyze_affinity(cfg, out):
    params, mc, _ = _checkpoint(cfg, out)
    test = _dataset(cfg, "test", out)
    study = analysis.affinity_study(params, mc, test, cfg.get("infer_batch"), symmetrize=cfg.get("affinity_symmetrize"))
    study.write_csv(out / "affinity_pairs.csv")
    summary = {"n_pairs": len(study), "pearson_r": fmt_float(study.r)}
    summary.update({f"mean_affinity_{k}": fmt_float(v) for k, v in study.class_means().items()})
    _write(out, "affinity_summary.txt", _kv(summary))
    print(f"{len(study)} pairs, Pearson r = {study.r:.4f}")


def cmd_invert_ablation(cfg, out):
    params, mc, _ = _checkpoint(cfg, out)
    test = _dataset(cfg, "test", out)
    normal, inverted = analysis.sign_inversion_ablation(params, mc, test, resolve_threshold(cfg, out), cfg.get("infer_batch"))
    header = "mode," + normal.csv_header()
    _write(out, "inversion.csv", header + "normal," + normal.to_csv_row() + "inverted," + inverted.to_csv_row())
    drop = normal.macro_f1 - inverted.macro_f1
    _write(out, "inversion_summary.txt", _kv({"normal_macro_f1": fmt_float(normal.macro_f1), "inverted_macro_f1": fmt_float(inverted.macro_f1), "drop": fmt_float(drop)}))
    print(f"macro-F1 normal {normal.macro_f1:.2f} -> inverted {inverted.macro_f1:.2f} (drop {drop:.2f})")


def cmd_probe(cfg, out):
    params, mc, _ = _checkpoint(cfg, out)
    test = _dataset(cfg, "test", out)
    res = analysis.embedding_probe(
        params, mc, test, cfg.get("infer_batch"), k=cfg.get("probe_k"), folds=cfg.get("probe_folds"), seed=cfg.get("seed")
    )
    res.write_csv(out / "probe_folds.csv")
    _write(out, "probe_summary.txt", _kv({"fused_acc": fmt_float(res.fused_acc), "refined_acc": fmt_float(res.refined_acc)}))
    print(f"probe accuracy: f {res.fused_acc:.2f}  f' {res.refined_acc:.2f}")


def cmd_grad_check(cfg, out):
    mc = cfg.model_config()
    seed = cfg.get("seed")
    params = init_model(mc, seed=seed)
    rng = np.random.default_rng(seed)
    m = cfg.get("grad_batch")
    batch = Batch(
        list(range(m)),
        Tensor(rng.uniform(-1, 1, (m, mc.h))),
        Tensor(rng.uniform(-1, 1, (m, mc.h))),
        rng.integers(0, 2, m),
    )

    def build(g: Graph):
        return loss(forward(batch, params, mc, graph=g), batch.labels)

    tol = cfg.get("grad_tol")
    rep = grad_check(build, params, step=cfg.get("grad_step"), tol=tol, seed=seed)
    ok = rep.max_rel_error < tol
    _write(out, "gradcheck.txt", _kv({"max_rel_error": fmt_float(rep.max_rel_error), "n_checked": rep.n_checked, "passed": ok}))
    print(f"max relative error {rep.max_rel_error:.3e} over {rep.n_checked} entries: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _read_predictions(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"predictions file not found: {p}")
    rows = p.read_text(encoding="utf-8").splitlines()
    if not rows or rows[0] != "id,label,score,pred":
        raise DataError(f"{p}: not a predictions file (header id,label,score,pred)")
    ids, labels, preds = [], [], []
    for line in rows[1:]:
        rid, lab, _, pred = line.split(",")
        ids.append(rid)
        labels.append(int(lab))
        preds.append(int(pred))
    return ids, np.array(labels), np.array(preds)


def cmd_significance(cfg, out):
    ids_a, y_a, a = _read_predictions(cfg.require("preds_a"))
    ids_b, y_b, b = _read_predictions(cfg.require("preds_b"))
    if ids_a != ids_b or not np.array_equal(y_a, y_b):
        raise DataError("prediction files cover different items")
    p = paired_bootstrap(
        a, b, y_a,
        metric=cfg.get("bootstrap_metric"),
        B=cfg.get("bootstrap_B"),
        seed=cfg.get("seed"),
        alternative=cfg.get("bootstrap_alternative"),
    )
    _write(out, "significance.txt", _kv({"p_value": fmt_float(p), "B": cfg.get("bootstrap_B"), "metric": cfg.get("bootstrap_metric")}))
    print(f"p = {p:.4f} ({'significant' if p < 0.05 else 'not significant'} at alpha=0.05)")


COMMANDS = {
    "gen-synth": cmd_gen_synth,
    "stats": cmd_stats,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "tune-threshold": cmd_tune_threshold,
    "sweep-batch": cmd_sweep_batch,
    "analyze-affinity": cmd_analyze_affinity,
    "invert-ablation": cmd_invert_ablation,
    "probe": cmd_probe,
    "grad-check": cmd_grad_check,
    "significance": cmd_significance,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memegraph", description="Batch-graph multimodal meme classifier experiments")
    parser.add_argument("verb", choices=sorted(COMMANDS), help="command to run")
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override a config key (repeatable)")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory (created if absent)")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.resolve(args.config, args.overrides, args.seed)
        cfg.set("verb", args.verb)
        args.out.mkdir(parents=True, exist_ok=True)
        manifest = cfg.manifest_text()
        _write(args.out, "manifest.txt", manifest)
        _write(args.out, f"manifest.{args.verb}.txt", manifest)
        status = COMMANDS[args.verb](cfg, args.out)
        return 0 if status is None else status
    except TrainingError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, UsageError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 1
    except MemeGraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
