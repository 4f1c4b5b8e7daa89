"""Command-line entry points for every pipeline stage.

One JSON config file drives everything; repeated ``--set key=value`` flags
override file values. Output directories are content-addressed by the
effective config hash so reruns never silently overwrite. Exit codes:
0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import LESIONS, TrainingConfig, config_from_dict, parse_config
from .errors import ConfigError, FunduslabError

SUBCOMMANDS = (
    "pretrain-seg",
    "train-seg",
    "adapt",
    "train-grade",
    "eval",
    "explain",
    "simulate-feedback",
    "serve",
    "make-synthetic",
)


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def load_config(args) -> TrainingConfig:
    if args.config:
        config = parse_config(args.config)
    else:
        config = TrainingConfig.desk()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key] = _coerce(value)
    if overrides:
        merged = config.to_dict()
        merged.update(overrides)
        config = config_from_dict(merged)
    return config


def out_dir_for(command: str, config: TrainingConfig, args) -> Path:
    root = Path(args.out or os.environ.get("FUNDUSLAB_OUT", "runs"))
    out = root / f"{command}-{config.config_hash()}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config value (repeatable)")
    parser.add_argument("--out", help="output root (default $FUNDUSLAB_OUT or ./runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funduslab")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("make-synthetic", help="write paired synthetic source/target datasets")
    _add_common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--shift", type=float, default=0.6)

    p = sub.add_parser("pretrain-seg", help="lesion-agnostic pretext training")
    _add_common(p)
    p.add_argument("--data", required=True, help="dataset root")

    p = sub.add_parser("train-seg", help="source-domain per-lesion training")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--no-pretext", action="store_true")
    p.add_argument("--no-patch-adv", action="store_true")

    p = sub.add_parser("adapt", help="source-to-target domain adaptation")
    _add_common(p)
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--variant", default="full", choices=("none", "entropy", "adnet", "full"))
    p.add_argument("--target-labels", type=float, default=0.0)
    p.add_argument("--ablation", action="store_true", help="run all four variants")

    p = sub.add_parser("train-grade", help="grading with optional two-level attention")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--no-overlap", action="store_true")

    p = sub.add_parser("eval", help="evaluate a saved system on a dataset")
    _add_common(p)
    p.add_argument("--system", required=True, help="system checkpoint archive")
    p.add_argument("--data", required=True)

    p = sub.add_parser("explain", help="write an explanation bundle for one image")
    _add_common(p)
    p.add_argument("--system", required=True)
    p.add_argument("--case", required=True, help="image file")

    p = sub.add_parser("simulate-feedback", help="slice-based noisy feedback study")
    _add_common(p)
    p.add_argument("--data", required=True)

    p = sub.add_parser("serve", help="run the review service")
    _add_common(p)
    p.add_argument("--workspace", required=True)
    p.add_argument("--system", help="system checkpoint to seed a fresh workspace")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--token", help="static api token")
    return parser


def cmd_make_synthetic(args) -> int:
    from .data import make_synthetic, write_dataset

    config = load_config(args)
    out = out_dir_for("make-synthetic", config, args)
    source, target = make_synthetic(args.seed, args.n, args.size, args.shift,
                                    tau=config.synthetic_grade_tau)
    write_dataset(source, out / "source")
    write_dataset(target, out / "target")
    print(f"wrote {len(source.train)}+{len(source.test)} source and "
          f"{len(target.train)}+{len(target.test)} target samples under {out}")
    return 0


def cmd_pretrain_seg(args) -> int:
    from .data import load_dataset
    from .metriclog import MetricLog
    from .reporting import plot_training_curves
    from .seg import LesionSegmenter, pretrain_agnostic, save_checkpoint

    config = load_config(args)
    out = out_dir_for("pretrain-seg", config, args)
    data = load_dataset(args.data, "synthetic")
    log = MetricLog()
    model = LesionSegmenter(config.seg_depth, config.seg_base_width)
    pretrain_agnostic(model, data, config, log=log)
    save_checkpoint(model, out / "pretext.ckpt", {
        "kind": "segmenter", "lesion": None, "depth": config.seg_depth,
        "base_width": config.seg_base_width, "canonical_size": config.canonical_size,
        "config_hash": config.config_hash(),
    })
    log.to_csv(out / "pretext_log.csv")
    plot_training_curves(log, out / "pretext_log.png", "pretext training")
    print(f"pretext model and log under {out}")
    return 0


def _eval_and_report(models, samples, method: str, out: Path) -> None:
    from .evaluate import eval_seg_models
    from .reporting import plot_seg_bars, print_table, seg_results_rows, write_seg_table, SEG_TABLE_COLUMNS

    rows = seg_results_rows(method, eval_seg_models(models, samples))
    write_seg_table(rows, out)
    plot_seg_bars(rows, out / "segmentation_metrics.png")
    print_table(rows, SEG_TABLE_COLUMNS)


def cmd_train_seg(args) -> int:
    from .data import load_dataset
    from .metriclog import MetricLog
    from .reporting import plot_training_curves
    from .seg import save_checkpoint
    from .uda import train_source_models

    config = load_config(args)
    out = out_dir_for("train-seg", config, args)
    data = load_dataset(args.data, "synthetic")
    log = MetricLog()
    models = train_source_models(
        data, config,
        use_pretext=not args.no_pretext,
        use_patch_adv=not args.no_patch_adv,
        log=log,
    )
    for lesion, model in models.items():
        save_checkpoint(model, out / f"seg_{lesion}.ckpt", {
            "kind": "segmenter", "lesion": lesion, "depth": config.seg_depth,
            "base_width": config.seg_base_width, "canonical_size": config.canonical_size,
            "config_hash": config.config_hash(),
        })
    log.to_csv(out / "train_log.csv")
    plot_training_curves(log, out / "train_log.png", "per-lesion training")
    _eval_and_report(models, list(data.test), "source-trained", out)
    print(f"checkpoints and reports under {out}")
    return 0


def cmd_adapt(args) -> int:
    from .data import load_dataset
    from .metriclog import MetricLog
    from .reporting import plot_training_curves
    from .uda import run_uda_ablation, train_source_models, train_uda

    config = load_config(args)
    out = out_dir_for("adapt", config, args)
    source = load_dataset(args.source, "synthetic", domain="source")
    target = load_dataset(args.target, "synthetic", domain="target")
    if args.ablation:
        results = run_uda_ablation(source, target, config,
                                   target_label_fraction=args.target_labels)
        rows = []
        for variant, res in results.items():
            for lesion in LESIONS:
                rows.append({
                    "method": variant, "lesion": lesion,
                    "auc_roc": res["per_lesion"][lesion]["auc_roc"],
                    "auc_pr": res["per_lesion"][lesion]["auc_pr"],
                })
            print(f"{variant}: mean target AUC-PR {res['mean_auc_pr']:.4f}")
        from .reporting import plot_seg_bars, write_seg_table

        write_seg_table(rows, out)
        plot_seg_bars(rows, out / "segmentation_metrics.png", "adaptation ablation")
    else:
        models = train_source_models(source, config)
        log = MetricLog()
        train_uda(models, None, source, target, config,
                  variant=args.variant, target_label_fraction=args.target_labels, log=log)
        log.to_csv(out / "adapt_log.csv")
        plot_training_curves(log, out / "adapt_log.png", f"adaptation ({args.variant})")
        _eval_and_report(models, list(target.test), f"adapted-{args.variant}", out)
    print(f"adaptation reports under {out}")
    return 0


def cmd_train_grade(args) -> int:
    from .data import load_dataset
    from .pipeline import save_system, train_system
    from .reporting import plot_training_curves

    config = load_config(args)
    out = out_dir_for("train-grade", config, args)
    data = load_dataset(args.data, "synthetic")
    system = train_system(
        data, config,
        use_attention=not args.no_attention,
        use_overlap=not args.no_overlap,
    )
    save_system(system, out / "system.ckpt")
    system.log.to_csv(out / "grading_log.csv")
    plot_training_curves(system.log, out / "grading_log.png", "grading training")
    metrics = system.evaluate(list(data.test))
    from .reporting import GRADE_TABLE_COLUMNS, print_table, write_grade_table

    rows = [{"method": "attention" if not args.no_attention else "plain", **{
        "accuracy": metrics["accuracy"], "kappa": metrics["kappa"]}}]
    write_grade_table(rows, out)
    print_table(rows, GRADE_TABLE_COLUMNS)
    print(f"explanation score: {metrics['explanation']:.4f}")
    print(f"system checkpoint and reports under {out}")
    return 0


def cmd_eval(args) -> int:
    from .data import load_dataset
    from .pipeline import load_system
    from .reporting import (
        GRADE_TABLE_COLUMNS,
        print_table,
        write_grade_table,
    )

    config = load_config(args)
    out = out_dir_for("eval", config, args)
    system = load_system(args.system)
    data = load_dataset(args.data, "synthetic")
    samples = list(data.test)
    _eval_and_report(system.seg, samples, "system", out)
    metrics = system.evaluate(samples)
    rows = [{"method": "system", "accuracy": metrics["accuracy"], "kappa": metrics["kappa"]}]
    write_grade_table(rows, out)
    print_table(rows, GRADE_TABLE_COLUMNS)
    print(f"explanation score: {metrics['explanation']:.4f}")
    print(f"eval reports under {out}")
    return 0


def cmd_explain(args) -> int:
    import numpy as np
    from PIL import Image

    from .data.preprocess import preprocess
    from .explain.bundle import write_bundle
    from .pipeline import load_system

    config = load_config(args)
    out = out_dir_for("explain", config, args)
    system = load_system(args.system)
    with Image.open(args.case) as img:
        raw = np.asarray(img.convert("RGB"))
    image = preprocess(raw, system.config.canonical_size,
                       image_id=Path(args.case).stem, domain="target")
    bundle = system.bundle(image)
    case_dir = out / image.id
    write_bundle(bundle, image, case_dir)
    print(f"grade {bundle.prediction.grade}, explanation score "
          f"{bundle.explanation_score:.4f}; bundle under {case_dir}")
    return 0


def cmd_simulate_feedback(args) -> int:
    from .data import load_dataset
    from .feedback import build_schedule, run_simulation
    from .metriclog import render_table
    from .reporting import plot_simulation

    config = load_config(args)
    out = out_dir_for("simulate-feedback", config, args)
    data = load_dataset(args.data, "synthetic")
    schedule = build_schedule([s.image.id for s in data.train], seed=config.seed)
    log = run_simulation(data, schedule, config.noise_kernel, config)
    columns = ["pct_feedback", "accuracy", "kappa", "explanation"]
    log.to_csv(out / "simulation.csv", columns)
    plot_simulation(log, out / "simulation.png")
    print(render_table(log.rows, columns))
    print(f"simulation reports under {out}")
    return 0


def cmd_serve(args) -> int:
    from .pipeline import load_system
    from .service.app import serve as run_server

    config = load_config(args)
    system = load_system(args.system) if args.system else None
    run_server(args.workspace, config, system=system,
               host=args.host, port=args.port, api_token=args.token)
    return 0


_HANDLERS = {
    "make-synthetic": cmd_make_synthetic,
    "pretrain-seg": cmd_pretrain_seg,
    "train-seg": cmd_train_seg,
    "adapt": cmd_adapt,
    "train-grade": cmd_train_grade,
    "eval": cmd_eval,
    "explain": cmd_explain,
    "simulate-feedback": cmd_simulate_feedback,
    "serve": cmd_serve,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if not args.command:
        parser.print_help()
        return 2
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FunduslabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
