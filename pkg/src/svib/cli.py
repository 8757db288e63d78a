"""Command line front door: ``svib train | verify-oracle | probe-mi | plot``."""

from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError
from .mine import ProbeConfig, standardize, train_probe
from .oracle import DEFAULT_COUNTS, DiscreteIBInstance, run_sweeps, target_distribution
from .plotting import MetricsError, load_metrics, median_series, series_from_records, write_csv, write_svg
from .trainer import run_dir_for, runs_root, train


def _fail(msg, code=2):
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_train(args):
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.variant is not None:
        overrides.append(f"variant={args.variant}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        return _fail(str(exc))
    root = Path(args.runs_dir) if args.runs_dir else runs_root()
    run_dir = run_dir_for(cfg, root)

    def progress(state, rec):
        if not args.quiet and state.update % args.log_every == 0:
            mr = rec["mean_return"]
            shown = "n/a" if mr is None else f"{mr:.3f}"
            print(f"update {state.update:6d}  mean_return {shown}  entropy {rec['entropy']:.3f}", flush=True)

    try:
        res = train(cfg, run_dir=run_dir, save_pairs=args.save_pairs, progress=progress)
    except OSError as exc:
        return _fail(str(exc))
    for rec in res.mi_records:
        if not args.quiet:
            print(f"mi probe at update {rec.update}: {rec.mi_nats:.4f} nats")
    print(run_dir)
    return 0


def _parse_counts(spec):
    if spec is None:
        return None
    spec = spec.strip()
    if spec.isdigit():
        return {k: int(spec) for k in DEFAULT_COUNTS}
    counts = dict.fromkeys(DEFAULT_COUNTS, 0)
    for item in filter(None, spec.split(",")):
        key, _, val = item.partition("=")
        if key not in DEFAULT_COUNTS or not val.isdigit():
            raise ValueError(f"bad count {item!r}; kinds are {', '.join(DEFAULT_COUNTS)}")
        counts[key] = int(val)
    return counts


def _off_by_beta(inst):
    # exp(J) instead of exp(J / beta): a deliberately wrong target
    return target_distribution(DiscreteIBInstance(inst.p_x, inst.p_z_given_x, inst.j * inst.beta, inst.beta))


MUTANTS = {"off-by-beta": _off_by_beta}


def cmd_verify_oracle(args):
    try:
        counts = _parse_counts(args.counts)
    except ValueError as exc:
        return _fail(str(exc))
    target = MUTANTS[args.mutate] if args.mutate else target_distribution
    report = run_sweeps(args.seed, counts, target=target)
    if not args.full:
        report = {k: v for k, v in report.items() if k != "checks"}
    text = json.dumps(report, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return 0 if report["passed"] else 1


def cmd_probe_mi(args):
    try:
        data = np.load(args.pairs)
        x, z = data["x"], data["z"]
    except (OSError, KeyError, ValueError) as exc:
        return _fail(f"{args.pairs}: cannot read pairs ({exc})")
    cfg = ProbeConfig(batch_size=args.batch_size, steps=args.steps, lr=args.lr, hidden=args.hidden)
    rng = np.random.default_rng(args.seed)
    if not args.raw:
        x, z = standardize(x), standardize(z)
    half = len(x) // 2 if args.holdout else len(x)
    ex, ez = (x[half:], z[half:]) if args.holdout else (None, None)
    _, rec = train_probe(cfg, x[:half], z[:half], rng, eval_x=ex, eval_z=ez)
    print(json.dumps({"schema": 1, **rec.to_json(), "pairs": str(args.pairs)}))
    return 0


def _run_label(run_dir, records):
    manifest = Path(run_dir) / "manifest.json"
    if manifest.exists():
        m = json.loads(manifest.read_text())
        return m["variant"], m["seed"]
    first = records[0] if records else {}
    return first.get("variant", Path(run_dir).parent.name), first.get("seed", Path(run_dir).name)


def cmd_plot(args):
    out = Path(args.out)
    groups = defaultdict(list)
    try:
        for run_dir in args.run_dirs:
            records = load_metrics(Path(run_dir) / "metrics.jsonl")
            variant, seed = _run_label(run_dir, records)
            s = series_from_records(records, args.field, args.record_type, f"{variant} seed {seed}")
            s.ema = args.ema
            s = s.smoothed()
            write_csv(out / f"{variant}_seed{seed}_{args.field}.csv", s)
            groups[variant].append(s)
    except (MetricsError, OSError) as exc:
        return _fail(str(exc))
    medians = []
    for variant, series in sorted(groups.items()):
        med = median_series(series, label=variant)
        write_csv(out / f"{variant}_median_{args.field}.csv", med)
        medians.append(med)
    if args.svg:
        write_svg(out / f"{args.field}.svg", medians, title=args.field)
    print(out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="svib", description="Information-bottleneck actor-critic experiments.")
    p.add_argument("--version", action="version", version=f"svib {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one (config, seed) run")
    t.add_argument("config", help="JSON run configuration")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field, e.g. svgd.beta=0.01")
    t.add_argument("--seed", type=int)
    t.add_argument("--variant", choices=["vanilla_a2c", "a2c_noise", "svib_uniform", "svib_gaussian"])
    t.add_argument("--runs-dir", help="runs root (default $SVIB_RUNS_DIR or ./runs)")
    t.add_argument("--save-pairs", action="store_true", help="store (x, z) pairs at each MI probe")
    t.add_argument("--log-every", type=int, default=100)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(fn=cmd_train)

    v = sub.add_parser("verify-oracle", help="exact finite-alphabet checks")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--counts", help="'0', or e.g. kl_gap=100,chain=50,stationarity=20,closed_form=4")
    v.add_argument("--output", help="also write the JSON report here")
    v.add_argument("--full", action="store_true", help="include passing checks in the report")
    v.add_argument("--mutate", choices=sorted(MUTANTS), help="swap in a known-wrong target to confirm the checks bite")
    v.set_defaults(fn=cmd_verify_oracle)

    m = sub.add_parser("probe-mi", help="MINE estimate on a saved pair file (.npz with x and z)")
    m.add_argument("pairs")
    m.add_argument("--steps", type=int, default=256)
    m.add_argument("--batch-size", type=int, default=64)
    m.add_argument("--lr", type=float, default=7e-4)
    m.add_argument("--hidden", type=int, default=128)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--holdout", action="store_true", help="train on half, estimate on the other half")
    m.add_argument("--raw", action="store_true", help="skip per-column standardisation")
    m.set_defaults(fn=cmd_probe_mi)

    g = sub.add_parser("plot", help="CSV (and SVG) series from run directories")
    g.add_argument("run_dirs", nargs="+")
    g.add_argument("--field", default="mean_return")
    g.add_argument("--record-type", default=None, help="restrict to train or mi_probe rows")
    g.add_argument("--ema", type=float, default=0.0)
    g.add_argument("--out", default="plots")
    g.add_argument("--svg", action="store_true")
    g.set_defaults(fn=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
