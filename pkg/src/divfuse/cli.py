"""Command-line entry point: ``divfuse <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._atomic import atomic_open
from .data import Dataset, load_manifest, parse_feature_matrix, write_dataset, N_AUS
from .errors import ConfigurationError, DivfuseError
from .metrics import FUSION_LABELS, evaluate
from .model import FUSIONS, MODALITIES, ModelConfig, load_checkpoint, save_checkpoint
from .stats import rank_features, write_report
from .synthetic import MODES, SynthConfig, generate
from .training import TrainConfig, train
from .windowing import WindowConfig, window_column_names, window_stats

log = logging.getLogger("divfuse")

SEED_ENV = "DIVFUSE_SEED"
EXIT_CODES = {"usage": 2, "data": 3, "numeric": 4}
EVAL_COLUMNS = ("variant", "split", "macro_f1", "tp", "fp", "tn", "fn")
ABLATION_COLUMNS = ("variant", "name", "split", "macro_f1", "best_epoch", "best_val_f1")


@dataclass
class RunReport:
    """What ran, with which resolved settings, and where the results went.

    Everything outside ``metadata`` is a pure function of the inputs.
    """

    command: str
    seed: int | None
    config: dict
    outputs: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def write(self, path) -> None:
        with atomic_open(path) as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        flags = sorted({s for a in self._actions for s in a.option_strings})
        self.exit(EXIT_CODES["usage"], f"{self.prog}: error: {message}\nvalid flags: {' '.join(flags)}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV}={raw!r} is not an integer") from None
    if seed < 0:
        raise ConfigurationError(f"{SEED_ENV} must be non-negative")
    return seed


def _patience(text: str):
    if text.lower() in ("none", "off", "0"):
        return None
    return int(text)


def _sibling(path: Path, suffix: str, tag: str = "") -> Path:
    return path.with_name(f"{path.stem}{tag}{suffix}")


# ---------------------------------------------------------------------------
# gen-synth
# ---------------------------------------------------------------------------


def _cmd_gen_synth(args) -> RunReport:
    splits = tuple(args.splits)
    if all(float(v).is_integer() and v >= 1 for v in splits) and sum(splits) == args.n_samples:
        splits = tuple(int(v) for v in splits)
    cfg = SynthConfig(
        n_samples=args.n_samples,
        seed=args.seed,
        t_visual=tuple(args.t_visual),
        t_audio=tuple(args.t_audio),
        conflict_strength=args.conflict_strength,
        mode=args.mode,
        noise_sigma=args.noise_sigma,
        splits=splits,
        plant_au=args.plant_au,
        plant_scale=args.plant_scale,
    )
    out = Path(args.out)
    manifest = write_dataset(generate(cfg), out)
    counts = dict(zip(("train", "val", "test"), cfg.split_counts()))
    log.info("wrote %d samples to %s", cfg.n_samples, manifest)
    return RunReport("gen-synth", cfg.seed, cfg.to_dict(), {"manifest": str(manifest)}, {"split_counts": counts})


# ---------------------------------------------------------------------------
# window
# ---------------------------------------------------------------------------


def _cmd_window(args) -> RunReport:
    cfg = WindowConfig(args.W, args.S)
    visual = parse_feature_matrix(args.input, expected_cols=N_AUS)
    desc = window_stats(visual, cfg).descriptors
    buf = io.StringIO()
    np.savetxt(buf, desc, delimiter=",", fmt="%.17g", header=",".join(window_column_names()), comments="")
    with atomic_open(args.out) as fh:
        fh.write(buf.getvalue())
    log.info("%d frames -> %d windows", visual.shape[0], desc.shape[0])
    return RunReport(
        "window", None, {"input": str(args.input), "W": cfg.W, "S": cfg.S},
        {"descriptors": str(args.out)}, {"frames": int(visual.shape[0]), "windows": int(desc.shape[0])},
    )


# ---------------------------------------------------------------------------
# train / eval
# ---------------------------------------------------------------------------


def _model_config(args, fusion: str) -> ModelConfig:
    return ModelConfig.for_data(
        visual_input=args.visual,
        fusion=fusion,
        modalities=tuple(args.modalities),
        lstm_hidden=args.lstm_hidden,
        proj_dim=args.proj_dim,
        dropout_p=args.dropout,
        window=(args.W, args.S),
    )


def _train_one(dataset: Dataset, model_cfg, train_cfg, ckpt: Path, hist_path: Path):
    from .plotting import plot_history

    params, history = train(dataset, model_cfg, train_cfg)
    meta = {"best_epoch": history.best_epoch, "best_val_f1": history.best_val_f1,
            "train": train_cfg.to_dict(), "manifest": dataset.manifest_path}
    save_checkpoint(ckpt, params, model_cfg, meta)
    with atomic_open(hist_path, newline="") as fh:
        history.to_csv(fh)
    fig = _sibling(hist_path, ".png")
    plot_history(history, fig, title=FUSION_LABELS.get(model_cfg.fusion, model_cfg.fusion))
    log.info("fusion %s: best val F1 %.4f at epoch %d", model_cfg.fusion, history.best_val_f1, history.best_epoch)
    return params, history, {"checkpoint": str(ckpt), "history": str(hist_path), "history_figure": str(fig)}


def _cmd_train(args) -> RunReport:
    from .plotting import plot_ablation

    dataset = load_manifest(args.manifest)
    train_cfg = TrainConfig(
        epochs=args.epochs,
        base_lr=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        patience=args.patience,
        seed=args.seed,
    )
    ckpt = Path(args.out)
    hist = Path(args.history) if args.history else _sibling(ckpt, ".csv", ".history")
    variants = list(FUSIONS) if args.fusion == "all" else [args.fusion]
    config = {"manifest": str(args.manifest), "train": train_cfg.to_dict(), "models": {}}
    outputs, results = {}, {}
    rows = []
    eval_split = "test" if dataset.split("test") else "val"
    for v in variants:
        model_cfg = _model_config(args, v)
        config["models"][v] = model_cfg.to_dict()
        tag = f"_{v}" if len(variants) > 1 else ""
        params, history, paths = _train_one(
            dataset, model_cfg, train_cfg, _sibling(ckpt, ckpt.suffix or ".npz", tag), _sibling(hist, ".csv", tag)
        )
        outputs[v] = paths
        results[v] = {"best_epoch": history.best_epoch, "best_val_f1": history.best_val_f1,
                      "epochs_run": len(history), "stopped_early": history.stopped_early}
        if len(variants) > 1:
            f1, _ = evaluate(params, model_cfg, dataset.split(eval_split))
            rows.append((v, FUSION_LABELS[v], eval_split, f1, history.best_epoch, history.best_val_f1))
    if rows:
        table = Path(args.comparison) if args.comparison else _sibling(ckpt, ".csv", "_ablation")
        with atomic_open(table, newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ABLATION_COLUMNS)
            w.writerows([v, name, split, repr(f1), ep, repr(vf)] for v, name, split, f1, ep, vf in rows)
        plot_ablation([(r[0], r[3]) for r in rows], _sibling(table, ".png"))
        outputs["comparison"] = str(table)
        outputs["comparison_figure"] = str(_sibling(table, ".png"))
        for r in rows:
            print(f"{r[1]}  {r[3]:.4f}")
    return RunReport("train", args.seed, config, outputs, results)


def _cmd_eval(args) -> RunReport:
    params, cfg, meta = load_checkpoint(args.checkpoint)
    dataset = load_manifest(args.manifest)
    samples = dataset.split(args.split)
    if not samples:
        raise ConfigurationError(f"split {args.split!r} is empty in {args.manifest}")
    f1, c = evaluate(params, cfg, samples, args.threshold)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVAL_COLUMNS)
    w.writerow([cfg.fusion, args.split, repr(f1), c.tp, c.fp, c.tn, c.fn])
    outputs = {}
    if args.out:
        with atomic_open(args.out, newline="") as fh:
            fh.write(buf.getvalue())
        outputs["eval"] = str(args.out)
    else:
        sys.stdout.write(buf.getvalue())
    return RunReport(
        "eval", None,
        {"checkpoint": str(args.checkpoint), "manifest": str(args.manifest), "split": args.split,
         "threshold": args.threshold, "model": cfg.to_dict()},
        outputs, {"macro_f1": f1, **asdict(c)},
    )


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _cmd_analyze(args) -> RunReport:
    from .plotting import plot_effect_sizes

    dataset = load_manifest(args.manifest)
    samples = dataset.samples if args.split == "all" else dataset.split(args.split)
    results = rank_features(samples, args.alpha)
    out = Path(args.out)
    with atomic_open(out, newline="") as fh:
        write_report(results, fh)
    fig = Path(args.figure) if args.figure else _sibling(out, ".png")
    plot_effect_sizes(results, fig, top=args.top)
    n_sig = sum(r.significant for r in results)
    for r in results[: args.top]:
        log.info("%s", r.table_row())
    return RunReport(
        "analyze", None,
        {"manifest": str(args.manifest), "split": args.split, "alpha": args.alpha, "n_videos": len(samples)},
        {"report": str(out), "figure": str(fig)},
        {"n_features": len(results), "n_significant": n_sig, "top": results[0].feature},
    )


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="divfuse", description="Divergence-based multimodal fusion for A/H recognition.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_report(p):
        p.add_argument("--report", help="run report JSON path (default: next to the main output)")
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="log progress to stderr")

    seed_help = f"random seed (default: ${SEED_ENV} or 0)"

    p = sub.add_parser("gen-synth", help="write a synthetic dataset (manifest + feature CSVs)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--mode", choices=MODES, default="divergence-label")
    p.add_argument("--conflict-strength", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--t-visual", type=int, nargs=2, default=(24, 48), metavar=("MIN", "MAX"))
    p.add_argument("--t-audio", type=int, nargs=2, default=(20, 40), metavar=("MIN", "MAX"))
    p.add_argument("--splits", type=float, nargs=3, default=(0.7, 0.15, 0.15), metavar=("TRAIN", "VAL", "TEST"),
                   help="fractions, or counts summing to --n-samples")
    p.add_argument("--plant-au", default=None, help="AU whose spread is widened in positive videos")
    p.add_argument("--plant-scale", type=float, default=2.0)
    add_report(p)
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("window", help="AU frames CSV -> per-window descriptor CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-W", "--W", dest="W", type=int, default=16, help="window length in frames")
    p.add_argument("-S", "--S", dest="S", type=int, default=8, help="step between windows")
    add_report(p)
    p.set_defaults(func=_cmd_window)

    p = sub.add_parser("train", help="train a fusion model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fusion", choices=[*FUSIONS, "all"], default="B")
    p.add_argument("--visual", choices=("raw", "windowed"), default="raw")
    p.add_argument("--seed", type=int, default=None, help=seed_help)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--history", help="per-epoch history CSV (default: <out>.history.csv)")
    p.add_argument("--comparison", help="ablation CSV for --fusion all (default: <out>_ablation.csv)")
    p.add_argument("--modalities", nargs="+", choices=MODALITIES, default=list(MODALITIES))
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--weight-decay", type=float, default=0.01)
    p.add_argument("--patience", type=_patience, default=8, help="epochs without improvement; 'none' disables")
    p.add_argument("--lstm-hidden", type=int, default=64)
    p.add_argument("--proj-dim", type=int, default=128)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("-W", "--W", dest="W", type=int, default=16, help="window length for --visual windowed")
    p.add_argument("-S", "--S", dest="S", type=int, default=8, help="window step for --visual windowed")
    add_report(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="Macro F1 and confusion counts of a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="CSV path (default: stdout)")
    add_report(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("analyze", help="Mann-Whitney ranking of whole-video AU statistics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--split", choices=("all", "train", "val", "test"), default="all")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--figure", help="effect-size bar chart (default: <out>.png)")
    p.add_argument("--top", type=int, default=15)
    add_report(p)
    p.set_defaults(func=_cmd_analyze)
    parser.subcommands = sub.choices
    return parser


def _report_path(args, report: RunReport) -> Path | None:
    if args.report:
        return Path(args.report)
    if args.command == "gen-synth":
        return Path(args.out) / "run.json"
    if args.command == "eval" and not args.out:
        return None
    return _sibling(Path(args.out), ".run.json")


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    if extra:
        # report against the subcommand so the listed flags are the relevant ones
        parser.subcommands[args.command].error(f"unrecognized arguments: {' '.join(extra)}")
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    start = time.perf_counter()
    try:
        if hasattr(args, "seed") and args.seed is None:
            args.seed = _default_seed()
        report = args.func(args)
        report.metadata["wall_time_s"] = round(time.perf_counter() - start, 3)
        path = _report_path(args, report)
        if path is not None:
            report.write(path)
    except DivfuseError as exc:
        print(f"divfuse {args.command}: {exc.category} error: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    except OSError as exc:
        print(f"divfuse {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_CODES["data"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
