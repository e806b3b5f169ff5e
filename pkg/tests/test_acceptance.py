"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The stochastic criteria run at full scale (100 repetitions, 500 rounds) and
take several minutes on one core.
"""
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from instances import random_kp, random_mnc_instance
from wptsim.engine import ScenarioConfig, run_experiment, run_simulation
from wptsim.geom import Disk, Point, Segment, in_range_time
from wptsim.offline import (
    kp_to_mnc,
    kp_to_mnl,
    solve_kp,
    solve_mnc_bruteforce,
    solve_mnc_dp,
    solve_mnl_bruteforce,
)

pytestmark = pytest.mark.slow

RESULTS = {}
REPS = 100
FORBIDDEN_3 = {"kind": "forbidden_circle", "forbidden_radius": 3.0}


def report(number, name, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS[number] = line
    print(line)
    return ok


def full_scale_config(**kw):
    return ScenarioConfig(n=100, repetitions=REPS, seed=2024, **kw)


@pytest.fixture(scope="module")
def forbidden_runs():
    cfg = full_scale_config(scenario=FORBIDDEN_3)
    return cfg, {
        "fixed5": run_experiment(cfg, {"name": "fixed", "radius": 5.0}),
        "rand": run_experiment(cfg, {"name": "rand_min_max", "p": 0.5}),
    }


@pytest.fixture(scope="module")
def mixture_runs():
    cfg = full_scale_config(scenario={"kind": "mixture"})
    return cfg, {
        "ldmax": run_experiment(cfg, {"name": "ldmax", "q": 0.9}),
        "mwa": run_experiment(cfg, {"name": "mwa", "mu": 15}),
        "mcer": run_experiment(cfg, {"name": "mcer", "lam": 2.0}),
        "fixed5": run_experiment(cfg, {"name": "fixed", "radius": 5.0}),
    }


def test_criterion_01_mnc_reduction():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    bad = 0
    for _ in range(200):
        kp = random_kp(rng, 10, 6, 8, 20)
        bad += solve_kp(kp) != solve_mnc_bruteforce(kp_to_mnc(kp)).objective
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 60
    assert report(1, "KP = MNC brute force on reduction", ok, f"{bad}/200 mismatches in {elapsed:.1f}s")


def test_criterion_02_mnl_reduction():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    bad = 0
    for _ in range(200):
        kp = random_kp(rng, 6, 4, 8, 12)
        bad += solve_kp(kp) != solve_mnl_bruteforce(kp_to_mnl(kp)).objective
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 60
    assert report(2, "KP = MNL brute force on reduction", ok, f"{bad}/200 mismatches in {elapsed:.1f}s")


def test_criterion_03_dp_equals_brute_force():
    rng = np.random.default_rng(303)
    start = time.perf_counter()
    bad = 0
    for _ in range(200):
        inst = random_mnc_instance(rng, max_rounds=8, max_ranges=3)
        bad += solve_mnc_dp(inst).objective != solve_mnc_bruteforce(inst).objective
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 60
    assert report(3, "MNC dp = brute force", ok, f"{bad}/200 mismatches in {elapsed:.1f}s")


def test_criterion_04_fixed3_never_charges():
    cfg = full_scale_config(scenario=FORBIDDEN_3)
    exp = run_experiment(cfg, {"name": "fixed", "radius": 3.0})
    total = sum(int(r.trace["charges_cum"][-1]) for r in exp.runs)
    assert report(4, "fixed(3) under forbidden circle R=3", total == 0, f"{total} charges over {REPS} reps")


def test_criterion_05_rand_min_max_outlasts_fixed5(forbidden_runs):
    _, runs = forbidden_runs
    dep_f, dep_r = runs["fixed5"].mean_depletion(), runs["rand"].mean_depletion()
    life_f, life_r = runs["fixed5"].mean_lifetime(), runs["rand"].mean_lifetime()
    ok = dep_r - dep_f >= 5 and life_r - life_f >= 5
    detail = (
        f"mean depletion round fixed(5)={dep_f:.1f} rand_min_max(0.5)={dep_r:.1f}; "
        f"mean lifetime fixed(5)={life_f:.1f} rand_min_max(0.5)={life_r:.1f}"
    )
    assert report(5, "fixed(5) depletes earlier, rand_min_max lives longer", ok, detail)


def test_criterion_06_mcer_most_charges(mixture_runs):
    _, runs = mixture_runs
    m = {k: e.mean_total_charges() for k, e in runs.items()}
    margin = 0.05 * m["mcer"]
    ok = m["mcer"] - m["ldmax"] >= margin and m["mcer"] - m["mwa"] >= margin
    detail = f"mean total charges mcer={m['mcer']:.1f} mwa={m['mwa']:.1f} ldmax={m['ldmax']:.1f} (margin {margin:.1f})"
    assert report(6, "MCER(2) beats LdMax(0.9) and MWA(15)", ok, detail)


def test_criterion_07_infinite_envelope(forbidden_runs, mixture_runs):
    violations = checked = 0
    for cfg, runs in (forbidden_runs, mixture_runs):
        envelope = run_experiment(cfg, {"name": "fixed", "radius": 5.0, "infinite_energy": True})
        for exp in runs.values():
            for inf, fin in zip(envelope.runs, exp.runs):
                checked += 1
                violations += int(np.any(inf.trace["charges_cum"] < fin.trace["charges_cum"]))
    ok = violations == 0
    assert report(7, "infinite fixed(5) dominates", ok, f"{violations}/{checked} paired runs violate dominance")


def test_criterion_08_conservation_and_bounds():
    rng = np.random.default_rng(808)
    start = time.perf_counter()
    problems = []
    for c in range(20):
        cfg = ScenarioConfig(
            n=int(rng.integers(5, 60)),
            horizon=int(rng.integers(20, 120)),
            battery=float(rng.uniform(50, 1000)),
            charger_energy=float(rng.uniform(0, 2e4)),
            alpha=float(rng.uniform(1, 200)),
            beta=float(rng.uniform(0, 2)),
            tau=float(rng.uniform(0.5, 2)),
            scenario={"kind": "mixture"},
            repetitions=10,
            seed=c,
        )
        policy = [
            {"name": "fixed", "radius": 3.0},
            {"name": "rand_min_max"},
            {"name": "ldmax"},
            {"name": "mwa", "mu": 3},
            {"name": "mcer"},
        ][c % 5]
        for rep in range(10):
            r = run_simulation(cfg, rep, policy, collect_levels=True)
            spent = r.initial_charger_energy - r.trace["charger_energy"][-1]
            if not math.isclose(spent, r.delivered_total, rel_tol=1e-9, abs_tol=1e-9):
                problems.append(f"config {c} rep {rep}: spent {spent} != delivered {r.delivered_total}")
            if r.levels.min() < 0 or r.levels.max() > cfg.battery:
                problems.append(f"config {c} rep {rep}: battery level out of bounds")
            if np.any(np.diff(r.trace["charger_energy"]) > 0):
                problems.append(f"config {c} rep {rep}: charger energy increased")
    worst = 0.0
    t = np.linspace(0.0, 1.0, 10_000)
    for _ in range(1000):
        s, e = rng.uniform(-5, 5, 2), rng.uniform(-5, 5, 2)
        ctr, rad, tau = rng.uniform(-3, 3, 2), rng.uniform(0, 4), rng.uniform(0.5, 2)
        pts = s + t[:, None] * (e - s)
        frac = np.mean(np.hypot(*(pts - ctr).T) <= rad)
        t_in = in_range_time(Segment(Point(*s), Point(*e)), Disk(Point(*ctr), rad), math.dist(s, e) / tau, tau)
        worst = max(worst, abs(t_in - frac * tau) / tau)
    elapsed = time.perf_counter() - start
    if worst > 0.01:
        problems.append(f"in-range time off by {worst:.4f} tau")
    ok = not problems and elapsed < 60
    detail = f"{len(problems)} problems, worst Monte Carlo gap {worst:.4f} tau, {elapsed:.1f}s"
    assert report(8, "conservation and bounds", ok, detail), problems[:5]


def test_criterion_09_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"n": 40, "horizon": 100, "repetitions": 4, "scenario": {"kind": "mixture"},'
                   ' "policies": [{"name": "mcer"}, {"name": "ldmax"}]}')
    outputs = []
    for workers in ("1", "1", "2"):
        out = tmp_path / f"run{len(outputs)}.csv"
        subprocess.run(
            [sys.executable, "-m", "wptsim", "compare", "--config", str(cfg), "--out", str(out),
             "--seed", "77", "--workers", workers, "--per-rep"],
            check=True,
        )
        outputs.append((out.read_bytes(), out.with_suffix(".json").read_bytes()))
    ok = outputs[0] == outputs[1] == outputs[2]
    assert report(9, "byte-identical reruns", ok, "serial, serial and 2-worker runs compared")


def test_criterion_10_mwa_guarantee(mixture_runs):
    cfg, runs = mixture_runs
    rounds = violations = 0
    for r in runs["mwa"].runs:
        t = r.trace
        mask = (t["range"] < cfg.r_max) & (t["skipped"] == 0)
        rounds += int(mask.sum())
        violations += int(np.count_nonzero(t["working"][mask] < 15))
    ok = violations == 0
    assert report(10, "MWA(15) keeps 15 working agents", ok, f"{violations} violations in {rounds} qualifying rounds")
