"""Command-line front end.

    wptsim simulate --config cfg.json --out trace.csv [--seed S] [--reps K]
    wptsim compare  --config cfg.json --out trace.csv
    wptsim offline  --instance inst.json --problem mnc|mnl --method dp|brute
    wptsim reduce   --kp kp.json --target mnc|mnl [--range R] [--out inst.json]

``simulate``/``compare`` write the averaged per-round trace as CSV and a
JSON summary next to it (``trace.json`` for ``trace.csv``). The master seed
can be overridden with the ``WPTSIM_SEED`` environment variable; ``--seed``
takes precedence over it.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from .engine import ConfigError, ScenarioConfig, compare, run_experiment
from .offline import (
    InstanceTooLargeError,
    KnapsackInstance,
    NonIntegerCostError,
    NotDecomposableError,
    OfflineInstance,
    kp_to_mnc,
    kp_to_mnl,
    solve_mnc_bruteforce,
    solve_mnc_dp,
    solve_mnl_bruteforce,
)

SEED_ENV = "WPTSIM_SEED"
CSV_HEADER = (
    "policy",
    "rep",
    "round",
    "range",
    "charger_energy",
    "charges_round",
    "charges_cum",
    "working",
    "adequate",
    "alive",
)
_TRACE_KEYS = CSV_HEADER[3:]
FREQUENCY_BIN = 10


def _num(x):
    x = float(x)
    if x.is_integer():
        return str(int(x))
    return repr(x)


def trace_rows(experiment, per_rep=False):
    label = experiment.label
    if per_rep:
        for run in experiment.runs:
            for t in range(run.rounds):
                yield [label, str(run.rep), str(t + 1)] + [_num(run.trace[k][t]) for k in _TRACE_KEYS]
    mean = experiment.mean_trace
    for t in range(len(mean["range"])):
        yield [label, "mean", str(t + 1)] + [_num(mean[k][t]) for k in _TRACE_KEYS]


def write_trace_csv(experiments, path, per_rep=False):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for exp in experiments:
        w.writerows(trace_rows(exp, per_rep))
    Path(path).write_text(buf.getvalue())


def frequency_histogram(counts, width=FREQUENCY_BIN):
    """Agents per number-of-charges bucket: ``0``, ``1-10``, ``11-20``, ..."""
    counts = np.asarray(counts)
    top = int(counts.max()) if counts.size else 0
    hist = {"0": int(np.count_nonzero(counts == 0))}
    lo = 1
    while lo <= top:
        hi = lo + width - 1
        hist[f"{lo}-{hi}"] = int(np.count_nonzero((counts >= lo) & (counts <= hi)))
        lo = hi + 1
    return hist


def summarize(experiment):
    runs = experiment.runs
    hists = [frequency_histogram(r.charge_counts) for r in runs]
    keys = sorted({k for h in hists for k in h}, key=lambda k: int(k.split("-")[0]))
    mean_hist = {k: float(np.mean([h.get(k, 0) for h in hists])) for k in keys}
    return {
        "policy": experiment.label,
        "repetitions": len(runs),
        "seed": experiment.config.seed,
        "horizon": experiment.config.horizon,
        "mean_lifetime": experiment.mean_lifetime(),
        "mean_depletion_round": experiment.mean_depletion(),
        "depleted_runs": sum(r.depletion_round is not None for r in runs),
        "mean_total_charges": experiment.mean_total_charges(),
        "lifetimes": [r.lifetime for r in runs],
        "total_charges": [int(r.trace["charges_cum"][-1]) for r in runs],
        "charge_frequency": mean_hist,
    }


def summary_path(out):
    out = Path(out)
    if out.suffix == ".json":
        return out.with_name(out.name + ".summary.json")
    return out.with_suffix(".json")


def load_config(path, seed=None, reps=None):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    env_seed = os.environ.get(SEED_ENV)
    if seed is None and env_seed:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    if seed is not None:
        data["seed"] = seed
    if reps is not None:
        data["repetitions"] = reps
    return ScenarioConfig.from_dict(data)


def _write_outputs(experiments, out, per_rep):
    out = Path(out)
    if out.parent and not out.parent.exists():
        raise ConfigError(f"output directory {out.parent} does not exist")
    write_trace_csv(experiments, out, per_rep)
    summary = [summarize(e) for e in experiments]
    summary_path(out).write_text(json.dumps(summary, indent=2) + "\n")


def cmd_simulate(args):
    cfg = load_config(args.config, args.seed, args.reps)
    exp = run_experiment(cfg, workers=args.workers)
    _write_outputs([exp], args.out, args.per_rep)
    return 0


def cmd_compare(args):
    cfg = load_config(args.config, args.seed, args.reps)
    if not cfg.policies:
        raise ConfigError("config field 'policies' must list at least one policy")
    exps = compare(cfg, workers=args.workers)
    _write_outputs(exps, args.out, args.per_rep)
    return 0


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def cmd_offline(args):
    data = _read_json(args.instance, "instance")
    try:
        inst = OfflineInstance.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid offline instance: {exc}") from None
    if args.problem == "mnl":
        if args.method != "brute":
            raise ConfigError("MNL only supports --method brute")
        sol = solve_mnl_bruteforce(inst)
    elif args.method == "dp":
        sol = solve_mnc_dp(inst, args.denominator)
    else:
        sol = solve_mnc_bruteforce(inst)
    print(json.dumps(sol.to_dict(), indent=2))
    return 0


def cmd_reduce(args):
    data = _read_json(args.kp, "knapsack instance")
    try:
        kp = KnapsackInstance.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid knapsack instance: {exc}") from None
    build = kp_to_mnc if args.target == "mnc" else kp_to_mnl
    text = build(kp, args.range).dumps() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="wptsim", description="Adaptive wireless charging simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True, help="CSV trace path; the JSON summary goes next to it")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--reps", type=int)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--per-rep", action="store_true", help="also write one row per repetition and round")

    sp = sub.add_parser("simulate", help="run one policy")
    run_opts(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="run every policy in the config on shared worlds")
    run_opts(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("offline", help="solve an offline MNC/MNL instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--problem", choices=("mnc", "mnl"), required=True)
    sp.add_argument("--method", choices=("dp", "brute"), default="brute")
    sp.add_argument("--denominator", type=int, help="energy scaling denominator for the DP")
    sp.set_defaults(func=cmd_offline)

    sp = sub.add_parser("reduce", help="build the MNC/MNL instance of a knapsack instance")
    sp.add_argument("--kp", required=True)
    sp.add_argument("--target", choices=("mnc", "mnl"), required=True)
    sp.add_argument("--range", type=float, default=None)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_reduce)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InstanceTooLargeError, NonIntegerCostError, NotDecomposableError) as exc:
        print(f"wptsim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"wptsim {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
