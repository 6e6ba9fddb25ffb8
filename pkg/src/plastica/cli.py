"""Command-line front end.

Subcommands:
  plastica run    --config cfg.toml [--out DIR] [--seeds a,b,c] [--workers N]
  plastica verify --check thm1|lemma1|lemma2|prop1 [--config cfg.toml] [--out DIR]
  plastica plot   --in DIR [--out DIR]
  plastica sweep  --config cfg.toml [--out DIR] [--workers N]

Exit codes: 0 success, 1 validation error (bad config, bad paths, bad args),
2 runtime abort (a seed diverged, or a verification check failed).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import os
import sys
from dataclasses import replace

from .config import config_from_dict, load_config, sweep_axes
from .nn import EngineError
from .runner import RunLog, aggregate, run_experiment, write_run_outputs
from .streams import IdxError
from .svgplot import emit_plots
from . import theory
from .metrics import MetricsRecord

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seeds:
        cfg = replace(cfg, seeds=tuple(int(s) for s in args.seeds.split(",")))
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    log = run_experiment(cfg, workers=args.workers)
    run_dir = os.path.join(cfg.out_dir, cfg.name)
    write_run_outputs(log, run_dir)
    print(f"wrote {run_dir}/run.csv ({len(log.rows)} rows)")
    if log.aborted_seeds:
        for seed, err in log.aborted_seeds:
            print(f"seed {seed} aborted: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_verify(args) -> int:
    overrides = {}
    if args.config:
        from .config import tomllib
        with open(args.config, "rb") as f:
            overrides = tomllib.load(f).get("verify", {})
    if args.check == "thm1":
        cfg = theory.Thm1Config(**{k: v for k, v in overrides.items()
                                   if k in theory.Thm1Config.__dataclass_fields__})
        report = theory.verify_theorem1(cfg)
    elif args.check == "lemma1":
        report = theory.verify_lemma_equality(
            depth=int(overrides.get("depth", 3)), dim=int(overrides.get("dim", 8)),
            steps=int(overrides.get("steps", 5000)), seed=int(overrides.get("seed", 0)),
            task_switches=int(overrides.get("task_switches", 10)))
    elif args.check == "lemma2":
        report = theory.verify_lemma_nonzero(
            depth=int(overrides.get("depth", 3)), dim=int(overrides.get("dim", 8)),
            steps=int(overrides.get("steps", 5000)), seed=int(overrides.get("seed", 0)),
            task_switches=int(overrides.get("task_switches", 10)))
    elif args.check == "prop1":
        report = theory.verify_fourier_linearity(
            grid_step=float(overrides.get("grid_step", 0.01)))
    else:
        print(f"unknown check: {args.check}", file=sys.stderr)
        return EXIT_VALIDATION
    text = report.text()
    print(text, end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"verify_{args.check}.txt")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        print(f"wrote {path}")
    return EXIT_OK if report.passed else EXIT_RUNTIME


def _load_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        rows = []
        for rec in reader:
            def fval(key):
                v = rec.get(key, "")
                return float(v) if v not in ("", None) else None

            ent = [float(v) for k, v in rec.items()
                   if k.startswith("mean_sign_entropy_l") and v not in ("", None)]
            rows.append(MetricsRecord(
                seed=int(rec["seed"]), task=int(rec["task"]), epoch=int(rec["epoch"]),
                iteration=int(rec["iteration"]), train_loss=fval("train_loss"),
                train_acc=fval("train_acc"), test_acc=fval("test_acc"),
                mean_sign_entropy=ent, min_sv=fval("min_sv"), param_l2=fval("param_l2"),
                task_end=rec.get("task_end") == "1", aborted=rec.get("aborted") == "1",
            ))
    return rows


def _cmd_plot(args) -> int:
    in_dir = args.in_dir
    summaries = []
    for entry in sorted(os.listdir(in_dir)):
        run_dir = os.path.join(in_dir, entry)
        csv_path = os.path.join(run_dir, "run.csv")
        if not os.path.isfile(csv_path):
            continue
        rows = _load_csv_rows(csv_path)
        log = RunLog(config={"name": entry, "depth": 0}, rows=rows)
        summaries.append(aggregate([log]))
    if not summaries:
        # a bare directory holding run.csv directly
        csv_path = os.path.join(in_dir, "run.csv")
        if os.path.isfile(csv_path):
            rows = _load_csv_rows(csv_path)
            summaries.append(aggregate([RunLog(config={"name": os.path.basename(in_dir),
                                                       "depth": 0}, rows=rows)]))
    if not summaries:
        print(f"no run.csv found under {in_dir}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = args.out or in_dir
    written = emit_plots(summaries, out_dir)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    axes = sweep_axes(args.config)
    if not axes:
        print("config has no [sweep] section", file=sys.stderr)
        return EXIT_VALIDATION
    from .config import tomllib
    with open(args.config, "rb") as f:
        doc = tomllib.load(f)
    doc.pop("sweep", None)
    status = EXIT_OK
    for combo in itertools.product(*[values for _, _, values in axes]):
        trial = {k: ({kk: vv for kk, vv in v.items()} if isinstance(v, dict) else v)
                 for k, v in doc.items()}
        tags = []
        for (section, key, _), value in zip(axes, combo):
            trial.setdefault(section, {})[key] = value
            tags.append(f"{key}={value}")
        cfg = config_from_dict(trial)
        cfg = replace(cfg, name=cfg.name + "__" + "_".join(tags))
        if args.out:
            cfg = replace(cfg, out_dir=args.out)
        log = run_experiment(cfg, workers=args.workers)
        run_dir = os.path.join(cfg.out_dir, cfg.name)
        write_run_outputs(log, run_dir)
        print(f"wrote {run_dir}/run.csv ({len(log.rows)} rows)")
        if log.aborted_seeds:
            status = EXIT_RUNTIME
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plastica",
                                     description="continual-learning plasticity lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seeds", default=None, help="comma-separated override")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_ver = sub.add_parser("verify", help="run a theory check")
    p_ver.add_argument("--check", required=True,
                       choices=["thm1", "lemma1", "lemma2", "prop1"])
    p_ver.add_argument("--config", default=None)
    p_ver.add_argument("--out", default=None)
    p_ver.set_defaults(func=_cmd_verify)

    p_plot = sub.add_parser("plot", help="render SVG plots from run CSVs")
    p_plot.add_argument("--in", dest="in_dir", required=True)
    p_plot.add_argument("--out", default=None)
    p_plot.set_defaults(func=_cmd_plot)

    p_sweep = sub.add_parser("sweep", help="cartesian sweep over [sweep] lists")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EngineError, IdxError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
