"""Command-line entry point: ``tsd <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import RunConfig, dump_config, load_config
from .data import generate, make_splits, write_dataset
from .errors import ConfigError, FormatError
from .experiments import (
    AXES,
    DEFAULT_AXES,
    DEFAULT_GRID,
    LAMBDA_NAMES,
    ablate,
    compare_runs,
    read_seed_table,
    resolve_cells,
    rows_csv,
    run_one,
    seed_table,
    sweep_lambda,
)
from .probe import export_embeddings
from .training import evaluate, load_run_model, make_row, metrics_csv


def _seeds(text: str | None, fallback: int) -> list[int]:
    if not text:
        return [fallback]
    if "-" in text and "," not in text:
        lo, hi = text.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "epochs", None):
        cfg = cfg.replace(train=dataclasses.replace(cfg.train, max_epochs=args.epochs))
    return cfg


def _out(args, default: str) -> Path:
    out = Path(args.out_dir or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    spec_cfg = load_config(args.spec or args.config)
    data = generate(spec_cfg.data.synthetic)
    out = Path(args.out) if args.out else _out(args, ".") / "synthetic.tsd"
    write_dataset(out, data)
    print(f"wrote {len(data)} samples to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _base_config(args)
    out = _out(args, "runs/train")
    seeds = _seeds(args.seeds, cfg.train.seed)
    reports = []
    for seed in seeds:
        run_dir = out if len(seeds) == 1 else out / f"seed{seed}"
        rep = run_one(cfg.with_seed(seed), "train", run_dir)
        reports.append(rep)
        print(f"seed {seed}: best epoch {rep.best_epoch}, val MAE {rep.validation.get('mae', float('nan')):.4f}, "
              f"test MAE {rep.test.get('mae', float('nan')):.4f}")
    (out / "seeds.csv").write_text(seed_table(reports))
    return 0


def cmd_eval(args) -> int:
    model, cfg, data = load_run_model(args.checkpoint)
    split = make_splits(len(data), cfg.data.splits, cfg.data.split_seed)
    rows = []
    for name in args.splits.split(","):
        ev = evaluate(model, data, getattr(split, name), cfg)
        rows.append(make_row(-1, name, ev.metrics, ev.losses, ev.psi))
    text = metrics_csv(rows)
    if args.out_dir:
        (_out(args, ".") / "eval.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_ablate(args) -> int:
    cfg = _base_config(args)
    axes = tuple(a.strip() for a in args.axes.split(",")) if args.axes else DEFAULT_AXES
    resolve_cells(axes)  # reject unknown axes before creating any output
    report = ablate(cfg, axes, _seeds(args.seeds, None) if args.seeds else range(5), _out(args, "runs/ablate"),
                    args.workers)
    sys.stdout.write(report.table_csv())
    print(f"# wall clock {report.wall_seconds:.1f} s")
    return 0


def cmd_sweep(args) -> int:
    cfg = _base_config(args)
    values = tuple(float(v) for v in args.grid.split(",")) if args.grid else DEFAULT_GRID
    names = args.lambdas.split(",") if args.lambdas else LAMBDA_NAMES
    rows = sweep_lambda(cfg, {n: values for n in names}, _seeds(args.seeds, None) if args.seeds else range(5),
                        _out(args, "runs/sweep"), args.workers)
    sys.stdout.write(rows_csv(rows))
    return 0


def cmd_stats(args) -> int:
    a = read_seed_table(Path(args.run_a) / "seeds.csv")
    b = read_seed_table(Path(args.run_b) / "seeds.csv")
    metrics = tuple(args.metrics.split(",")) if args.metrics else ("val_mae", "val_mse", "test_mae", "test_acc7")
    shared, table = compare_runs(a, b, metrics)
    rows = [{"metric": s.metric, "n": len(shared), "mean_a": s.mean, "mean_b": sum(s.baseline) / len(s.baseline),
             "mean_diff": sum(s.diffs) / len(s.diffs), "t": s.t, "df": s.df, "p": s.p_raw, "p_holm": s.p_holm}
            for s in table]
    text = rows_csv(rows)
    if args.out_dir:
        (_out(args, ".") / "stats.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_export(args) -> int:
    model, cfg, data = load_run_model(args.checkpoint)
    split = make_splits(len(data), cfg.data.splits, cfg.data.split_seed)
    indices = getattr(split, args.split)
    out = Path(args.out) if args.out else _out(args, ".") / "embeddings.tsd"
    export_embeddings(model, data, indices, cfg, out)
    print(f"wrote {len(indices)} embeddings to {out}")
    return 0


def _global_flags(parser: argparse.ArgumentParser, default) -> None:
    parser.add_argument("--config", default=default, help="INI config file ([model] [train] [loss] [data] [ablation])")
    parser.add_argument("--seed", type=int, default=default, help="override the training seed")
    parser.add_argument("--out-dir", default=default, help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", default=default if default is not None else False)


def build_parser() -> argparse.ArgumentParser:
    # Global flags are accepted before or after the subcommand; the subcommand copies
    # use SUPPRESS so they do not overwrite values given before it.
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="tsd", description="Tri-subspace disentanglement toolkit")
    _global_flags(p, None)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset file")
    s.add_argument("--spec", help="config file whose [data] section describes the generator")
    s.add_argument("--out", help="dataset path (default <out-dir>/synthetic.tsd)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="train one config over one or more seeds")
    s.add_argument("--seeds", help="e.g. 0-4 or 0,3,7")
    s.add_argument("--epochs", type=int, help="override max_epochs")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    s.add_argument("checkpoint")
    s.add_argument("--splits", default="validation,test")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", parents=[common], help="run the ablation matrix")
    s.add_argument("--axes", help=f"comma list of {sorted(AXES)} or cell keys")
    s.add_argument("--seeds", help="default 0-4")
    s.add_argument("--epochs", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sweep", parents=[common], help="one-at-a-time loss-weight sweep")
    s.add_argument("--lambdas", help="comma list, default all four")
    s.add_argument("--grid", help="comma list of values")
    s.add_argument("--seeds")
    s.add_argument("--epochs", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("stats", parents=[common], help="paired t-tests between two multi-seed train directories")
    s.add_argument("run_a")
    s.add_argument("run_b")
    s.add_argument("--metrics")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("export-embeddings", parents=[common], help="export pooled embeddings and gate weights")
    s.add_argument("checkpoint")
    s.add_argument("--split", default="test", choices=("train", "validation", "test"))
    s.add_argument("--out")
    s.set_defaults(func=cmd_export)

    s = sub.add_parser("show-config", parents=[common], help="print the resolved config")
    s.set_defaults(func=lambda a: sys.stdout.write(dump_config(_base_config(a))) and 0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args) or 0
    except (ConfigError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
