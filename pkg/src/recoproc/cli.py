"""Command-line entry point: ``recoproc <subcommand> [--config FILE] [flags]``.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure
(the message names the error class, e.g. ``NotFound``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import degradations, harness, plotting, report, synthetic
from .config import ExperimentConfig
from .data import decode_image, make_pairs, sample_rng
from .errors import ConfigError, NotFound, RecoprocError
from .metrics import format_psnr
from .models import load_checkpoint
from .training import pretrain_recognizer, train_processor

log = logging.getLogger("recoproc")

OUT_ENV = "RECOPROC_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _named_paths(text):
    out = {}
    for item in text.split(","):
        if "=" not in item:
            raise argparse.ArgumentTypeError(f"expected name=path, got {item!r}")
        name, path = item.split("=", 1)
        out[name.strip()] = path.strip()
    return out


def _add_config_flags(p):
    g = p.add_argument_group("config overrides")
    g.add_argument("--config", help="experiment config JSON")
    g.add_argument("--name")
    g.add_argument("--out", help="output directory (overrides $%s and the config)" % OUT_ENV)
    g.add_argument("--dataset-root")
    g.add_argument("--max-train", type=int)
    g.add_argument("--max-val", type=int)
    g.add_argument("--kind", help="degradation: super_resolution | gaussian_noise | jpeg")
    g.add_argument("--scale", type=int)
    g.add_argument("--sigma", type=float)
    g.add_argument("--quality", type=int)
    g.add_argument("--mode")
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--distance")
    g.add_argument("--seed", type=int)
    g.add_argument("--seeds", type=_ints)
    g.add_argument("--epochs", type=int, help="processor epochs")
    g.add_argument("--lr", type=float, help="processor initial learning rate")
    g.add_argument("--batch-size", type=int)
    g.add_argument("--family", help="recognizer family")
    g.add_argument("--depth", type=int, help="recognizer depth")
    g.add_argument("--recognizer-epochs", type=int)
    g.add_argument("--no-deterministic", dest="deterministic", action="store_false", default=None)


def build_parser():
    parser = _Parser(prog="recoproc", description="Recognition-aware image processing experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("make-dataset", help="render the procedural shape dataset")
    p.add_argument("root")
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--train-per-class", type=int, default=300)
    p.add_argument("--val-per-class", type=int, default=60)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("degrade", help="degrade every PNG under a directory")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--kind", required=True)
    p.add_argument("--scale", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--quality", type=int)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("pretrain-recognizer", help="train R on clean images")
    _add_config_flags(p)

    p = sub.add_parser("train-processor", help="train P (and T) under the configured mode")
    _add_config_flags(p)
    p.add_argument("--recognizer", help="R checkpoint (overrides config.recognizer_checkpoint)")

    p = sub.add_parser("eval", help="evaluate P [+T] against R on the validation split")
    _add_config_flags(p)
    p.add_argument("--processor", help="P checkpoint; omit for the no-processing baseline")
    p.add_argument("--transformer")
    p.add_argument("--recognizer")

    p = sub.add_parser("transfer-matrix", help="accuracy of each loss-model P on each evaluation R")
    _add_config_flags(p)
    p.add_argument("--processors", type=_named_paths, required=True, help="name=P_dir[,...]")
    p.add_argument("--transformers", type=_named_paths, default={}, help="name=T_dir[,...]")
    p.add_argument("--recognizers", type=_named_paths, required=True, help="name=R_dir[,...]")
    p.add_argument("--baseline", required=True, help="plainly trained P checkpoint")

    p = sub.add_parser("category-split", help="train on one half of the classes, evaluate on both")
    _add_config_flags(p)
    p.add_argument("--split-seed", type=int)

    p = sub.add_parser("lambda-sweep", help="one RA processor per lambda")
    _add_config_flags(p)
    p.add_argument("--recognizer")
    p.add_argument("--lambdas", type=_floats, default=[0.0, 1e-4, 1e-3, 1e-2])

    p = sub.add_parser("report", help="re-render a report from saved records")
    p.add_argument("records", nargs="+", help="records.jsonl or table.csv files")
    p.add_argument("--out", help="output directory (overrides $%s)" % OUT_ENV)
    p.add_argument("--experiment", default="report")
    return parser


# ---------------------------------------------------------------------------
# Config assembly


def load_config(args) -> ExperimentConfig:
    d = ExperimentConfig.load(args.config).to_dict() if args.config else ExperimentConfig().to_dict()
    if args.name is not None:
        d["name"] = args.name
    if args.kind is not None:
        d["task"] = degradations.DegradationSpec.make(args.kind, args.scale, args.sigma, args.quality).to_dict()
    else:
        for key in ("scale", "sigma", "quality"):
            if getattr(args, key) is not None:
                d["task"] = {**d["task"], key: getattr(args, key)}
    for flag, key in (("mode", "mode"), ("lam", "lam"), ("distance", "distance"),
                      ("deterministic", "deterministic")):
        if getattr(args, flag) is not None:
            d[key] = getattr(args, flag)
    if args.seeds is not None:
        d["seeds"] = args.seeds
    if args.seed is not None:
        d["seeds"] = [args.seed]
    for flag, key in (("dataset_root", "root"), ("max_train", "max_train"), ("max_val", "max_val")):
        if getattr(args, flag) is not None:
            d["dataset"][key] = getattr(args, flag)
    for flag, key in (("epochs", "epochs"), ("lr", "lr0"), ("batch_size", "batch_size")):
        if getattr(args, flag) is not None:
            d["schedule"][key] = getattr(args, flag)
    if args.epochs is not None and args.config is None:
        # Keep the two-step decay at the end of whatever length was requested.
        d["schedule"]["decay_epochs"] = [max(1, args.epochs - 1), args.epochs]
    if args.recognizer_epochs is not None:
        d["recognizer_schedule"]["epochs"] = args.recognizer_epochs
    if args.family is not None:
        d["recognizer"] = {**d["recognizer"], "family": args.family}
    if args.depth is not None:
        d["recognizer"] = {**d["recognizer"], "depth": args.depth}
    if getattr(args, "recognizer", None):
        d["recognizer_checkpoint"] = args.recognizer
    d["output_dir"] = resolve_out(args.out, d.get("output_dir", "results"))
    return ExperimentConfig.from_dict(d)


def resolve_out(flag, configured):
    """Precedence: ``--out`` flag, then ``$RECOPROC_OUT``, then the config value."""
    if flag:
        return flag
    return os.environ.get(OUT_ENV) or configured


def _experiment_dir(config):
    path = Path(config.output_dir) / config.name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _recognizer(config, path=None):
    path = path or config.recognizer_checkpoint
    if path is None:
        raise ConfigError("a recognizer checkpoint is required (--recognizer or recognizer_checkpoint)")
    return load_checkpoint(path, role="R")


def _say(*parts):
    print(*parts, flush=True)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_make_dataset(args):
    root = synthetic.generate(args.root, args.num_classes, args.train_per_class, args.val_per_class,
                              args.size, args.seed)
    _say("dataset", root)


def cmd_degrade(args):
    spec = degradations.DegradationSpec.make(args.kind, args.scale, args.sigma, args.quality)
    src, dst = Path(args.input), Path(args.output)
    if not src.is_dir():
        raise NotFound(f"input directory {src} does not exist")
    files = sorted(p for p in src.rglob("*") if p.suffix.lower() == ".png")
    for k, path in enumerate(files):
        out = degradations.apply(spec, decode_image(path), sample_rng(args.seed, k))
        target = dst / path.relative_to(src)
        target.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(degradations.to_uint8(out), mode="RGB").save(target)
    _say("degraded", len(files), "images", json.dumps(spec.to_dict(), sort_keys=True))


def cmd_pretrain_recognizer(args):
    config = load_config(args)
    train, val = harness.load_experiment_data(config)
    out = _experiment_dir(config)
    for seed in config.seeds:
        ckpt = pretrain_recognizer(config, train, val, seed=seed, log_path=out / f"R_seed{seed}.log.jsonl")
        ckpt.save(out / f"R_seed{seed}")
        _say(f"R seed={seed} hash={ckpt.weights_hash()} clean_val_acc={ckpt.metrics['clean_val_acc']:.4f}")
    config.dump(out / "config.json")


def cmd_train_processor(args):
    config = load_config(args)
    train, val = harness.load_experiment_data(config)
    train_pairs, val_pairs = harness.experiment_pairs(config, train, val)
    R = _recognizer(config) if config.mode != "plain" else None
    out = _experiment_dir(config)
    records = []
    for seed in config.seeds:
        res = train_processor(config, train_pairs, R, seed=seed, log_path=out / f"train_seed{seed}.log.jsonl")
        res.processor.save(out / f"P_seed{seed}")
        _say(f"P seed={seed} hash={res.processor.weights_hash()}")
        if res.transformer is not None:
            res.transformer.save(out / f"T_seed{seed}")
            _say(f"T seed={seed} hash={res.transformer.weights_hash()}")
        if res.recognizer is not None:
            res.recognizer.save(out / f"R_seed{seed}")
            _say(f"R seed={seed} hash={res.recognizer.weights_hash()}")
        if R is not None:
            T = res.transformer if config.eval_with_transformer else None
            records.append(harness.evaluate_pipeline(
                res.processor, T, res.recognizer or R, val_pairs, processor_id=f"{config.mode}",
                transformer_id=config.mode if T is not None else None, recognizer_id="R",
                tags={"seed": seed, "lambda": config.resolved_lambda()}))
    config.dump(out / "config.json")
    if records:
        report.render_report(records, config.output_dir, config.name)


def cmd_eval(args):
    config = load_config(args)
    P = load_checkpoint(args.processor, role="P") if args.processor else None
    T = load_checkpoint(args.transformer, role="T") if args.transformer else None
    R = _recognizer(config, args.recognizer)
    _, val = harness.load_experiment_data(config)
    spec = config.task_spec()
    pairs = make_pairs(val, spec, config.degradation_seed + 1)
    rec = harness.evaluate_pipeline(P, T, R, pairs, processor_id=args.processor or "no_processing",
                                    transformer_id=args.transformer, recognizer_id=args.recognizer or "R")
    report.render_report([rec], config.output_dir, config.name)
    psnr_text = format_psnr(rec.psnr) if rec.psnr == float("inf") else f"{rec.psnr:.4f}"
    _say(f"psnr={psnr_text} "
         f"ssim={rec.ssim:.4f} acc={rec.accuracy:.4f} n={rec.n_samples}")


def cmd_transfer_matrix(args):
    config = load_config(args)
    recognizers = {name: load_checkpoint(p, role="R") for name, p in args.recognizers.items()}
    processors = {}
    for name, p in args.processors.items():
        P = load_checkpoint(p, role="P")
        T = load_checkpoint(args.transformers[name], role="T") if name in args.transformers else None
        processors[name] = (P, T) if T is not None else P
    baseline = load_checkpoint(args.baseline, role="P")
    _, val = harness.load_experiment_data(config)
    pairs = make_pairs(val, config.task_spec(), config.degradation_seed + 1)
    matrix = harness.transfer_matrix(processors, recognizers, pairs, baseline=baseline,
                                     use_transformer=config.eval_with_transformer)
    report.render_report(matrix.records, config.output_dir, config.name,
                         tables={"transfer_matrix": matrix.table_rows()},
                         figures={"transfer_heatmap": plotting.transfer_heatmap(matrix)})
    for row in matrix.table_rows():
        _say(json.dumps(row, sort_keys=True))


def cmd_category_split(args):
    config = load_config(args)
    train, val = harness.load_experiment_data(config)
    records, rows = [], []
    for seed in config.seeds:
        table = harness.category_split_experiment(config, train, val, seed=seed, split_seed=args.split_seed)
        records += table.records
        rows += [{"seed": seed, **r} for r in table.table_rows()]
    report.render_report(records, config.output_dir, config.name, tables={"category_split": rows})
    for row in rows:
        _say(json.dumps(row, sort_keys=True))


def cmd_lambda_sweep(args):
    config = load_config(args)
    R = _recognizer(config)
    train, val = harness.load_experiment_data(config)
    train_pairs, val_pairs = harness.experiment_pairs(config, train, val)
    sweep = harness.lambda_sweep(config, args.lambdas, train_pairs, val_pairs, R)
    # Example grid: targets, inputs and every lambda's output on a few validation images.
    outs, preds = [], []
    for lam in sorted(sweep.processors):
        o = harness.run_pipeline(sweep.processors[lam], None, R, val_pairs)
        outs.append((lam, o.outputs))
        preds.append((lam, o.predictions))
    pick = report.pick_examples(val_pairs.labels, preds[0][1], preds[-1][1], n=3)
    inputs = np.stack([degradations.no_processing(val_pairs.spec, val_pairs.inputs[i]) for i in pick])
    grid = report.sweep_grid(val_pairs.targets[pick], inputs, [(l, o[pick]) for l, o in outs],
                             [(l, p[pick]) for l, p in preds], val_pairs.labels[pick], val_pairs.class_names)
    rows = [{"lambda": r.lam, "psnr": r.psnr, "ssim": r.ssim, "acc": r.accuracy} for r in sweep.rows]
    report.render_report(sweep.records, config.output_dir, config.name, tables={"lambda_sweep": rows},
                         grids={"examples": grid}, figures={"lambda_curve": plotting.lambda_curve(sweep.rows)})
    for row in rows:
        _say(json.dumps(row, sort_keys=True))


def cmd_report(args):
    records = []
    for path in args.records:
        if not Path(path).is_file():
            raise NotFound(f"records file {path} does not exist")
        reader = report.read_records_csv if path.endswith(".csv") else report.read_records_jsonl
        records += reader(path)
    out = report.render_report(records, resolve_out(args.out, "results"), args.experiment)
    _say("report", out)


COMMANDS = {
    "make-dataset": cmd_make_dataset,
    "degrade": cmd_degrade,
    "pretrain-recognizer": cmd_pretrain_recognizer,
    "train-processor": cmd_train_processor,
    "eval": cmd_eval,
    "transfer-matrix": cmd_transfer_matrix,
    "category-split": cmd_category_split,
    "lambda-sweep": cmd_lambda_sweep,
    "report": cmd_report,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"usage error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (RecoprocError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
