"""Round loop, per-round metrics, seeding and repetition averaging.

Seeding contract: repetition ``r`` of a run with master seed ``s`` uses
``numpy.random.SeedSequence(s, spawn_key=(r,))``, spawned into four streams
in this order: scenario, mobility, energy, decision. Only the decision
stream is handed to the policy, so the agents' trajectories and consumptions
are identical across policies for the same ``(s, r)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from typing import NamedTuple

import numpy as np

from . import mobility as mob
from ._validation import check_int, check_positive, check_probability, check_range_bounds
from .charging import ChargerState, execute_charging_round
from .energy import draw_groups, update_levels
from .policies import RangePolicy, RoundView, make_policy

# Received-energy gain used by the simulator unless configured otherwise.
DEFAULT_ALPHA = 100.0
DEFAULT_BETA = 1.0
DEFAULT_HORIZON = 500

METRIC_COLUMNS = (
    "range",
    "charger_energy",
    "charges_round",
    "charges_cum",
    "working",
    "adequate",
    "alive",
)


class ConfigError(ValueError):
    pass


class RoundMetrics(NamedTuple):
    round: int
    range: float
    charger_energy: float
    charges_round: int
    charges_cum: int
    working: int
    adequate: int
    alive: int
    skipped: int


def _scenario_from_dict(d):
    if isinstance(d, mob.MobilityScenario):
        return d
    d = dict(d)
    kind = d.pop("kind", mob.FREE)
    try:
        return mob.MobilityScenario(kind=kind, **d)
    except TypeError as exc:
        raise ConfigError(f"bad scenario {d!r}: {exc}") from None


@dataclass(frozen=True)
class ScenarioMixture:
    components: tuple
    weights: tuple

    @classmethod
    def default(cls):
        comps = (
            mob.MobilityScenario(mob.FREE),
            mob.MobilityScenario(mob.FORBIDDEN_CIRCLE),
            mob.MobilityScenario(mob.RING_DWELLERS),
        )
        return cls(comps, (1 / 3, 1 / 3, 1 / 3))

    def choose(self, rng):
        return self.components[int(rng.choice(len(self.components), p=self.weights))]


def parse_scenario(spec):
    if spec is None:
        return mob.MobilityScenario()
    if isinstance(spec, (mob.MobilityScenario, ScenarioMixture)):
        return spec
    if spec.get("kind") == "mixture":
        comps = spec.get("components")
        if comps is None:
            mix = ScenarioMixture.default()
            comps = mix.components
        else:
            comps = tuple(_scenario_from_dict(c) for c in comps)
        if not comps:
            raise ConfigError("scenario mixture needs at least one component")
        w = spec.get("weights") or [1.0] * len(comps)
        if len(w) != len(comps) or min(w) < 0 or sum(w) <= 0:
            raise ConfigError("mixture weights must be non-negative, one per component")
        total = float(sum(w))
        return ScenarioMixture(tuple(comps), tuple(x / total for x in w))
    return _scenario_from_dict(spec)


@dataclass(frozen=True)
class ScenarioConfig:
    """Declarative description of an experiment.

    ``charger_energy=None`` (or ``inf``) gives the charger unlimited energy.
    ``policies`` is only used by multi-policy comparisons.
    """

    n: int
    area: tuple = (25.0, 25.0)
    tau: float = 1.0
    horizon: int = DEFAULT_HORIZON
    battery: float = 1000.0
    charger_energy: float | None = 1e5
    v_max: float = 3.0
    r_min: float = 1.0
    r_max: float = 5.0
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    p_mode_redraw: float = 0.25
    scenario: object = field(default_factory=mob.MobilityScenario)
    policy: dict = field(default_factory=lambda: {"name": "fixed", "radius": 5.0})
    policies: tuple = ()
    repetitions: int = 100
    seed: int = 0

    def __post_init__(self):
        try:
            check_int(self.n, "n", minimum=1)
            check_positive(self.tau, "tau")
            check_int(self.horizon, "horizon", minimum=1)
            check_positive(self.battery, "battery")
            if self.charger_energy is not None:
                check_positive(self.charger_energy, "charger_energy", strict=False)
            check_positive(self.v_max, "v_max", strict=False)
            check_range_bounds(self.r_min, self.r_max)
            check_positive(self.alpha, "alpha")
            check_positive(self.beta, "beta", strict=False)
            check_probability(self.p_mode_redraw, "p_mode_redraw")
            check_int(self.repetitions, "repetitions", minimum=1)
            check_int(self.seed, "seed", minimum=0)
            if len(self.area) != 2:
                raise ValueError("area must be [x_max, y_max]")
            mob.Area(*self.area)
            object.__setattr__(self, "scenario", parse_scenario(self.scenario))
            object.__setattr__(self, "policies", tuple(self.policies))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "n" not in data:
            raise ConfigError("missing required field 'n'")
        data = dict(data)
        if data.get("charger_energy") in ("inf", "infinite"):
            data["charger_energy"] = None
        if "area" in data:
            data["area"] = tuple(data["area"])
        return cls(**data)

    @property
    def infinite_energy(self):
        return self.charger_energy is None or math.isinf(self.charger_energy)

    @property
    def area_obj(self):
        return mob.Area(*self.area)


@dataclass(frozen=True)
class PolicyRun:
    """A policy plus the charger regime it runs under."""

    policy: RangePolicy
    infinite_energy: bool | None = None
    label: str | None = None

    @classmethod
    def from_spec(cls, spec):
        if isinstance(spec, PolicyRun):
            return spec
        if isinstance(spec, RangePolicy):
            return cls(spec)
        try:
            policy = make_policy(spec)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(policy, spec.get("infinite_energy"), spec.get("label"))

    def name(self, config):
        if self.label:
            return self.label
        label = self.policy.label()
        if self.infinite_energy and not config.infinite_energy:
            label += "+inf"
        return label


def rep_streams(master_seed, rep_index):
    ss = np.random.SeedSequence(master_seed, spawn_key=(rep_index,))
    return [np.random.default_rng(s) for s in ss.spawn(4)]


class World:
    """Mutable state of one simulation run."""

    def __init__(self, config, rep_index=0, infinite_energy=None):
        self.config = config
        self.rep = rep_index
        rng_scn, self.rng_mob, self.rng_energy, self.rng_decision = rep_streams(config.seed, rep_index)
        self.area = config.area_obj
        scenario = config.scenario
        if isinstance(scenario, ScenarioMixture):
            scenario = scenario.choose(rng_scn)
        self.scenario = scenario.resolve(config.r_min, config.r_max, config.n, rng_scn)
        self.ring_mask = self.scenario.ring_mask(config.n)
        self.positions = mob.initial_deploy(config.n, self.area, self.scenario, self.rng_mob)
        self.modes = self.rng_mob.integers(1, 4, config.n)
        self.groups, self.gamma = draw_groups(config.n, self.rng_energy)
        self.levels = np.full(config.n, float(config.battery))
        infinite = config.infinite_energy if infinite_energy is None else infinite_energy
        self.charger = ChargerState(
            self.area.center,
            math.inf if infinite else float(config.charger_energy),
            config.r_min,
            config.alpha,
            config.beta,
            infinite,
        )
        self.round = 0
        self.charges_cum = 0
        self.charge_counts = np.zeros(config.n, dtype=np.int64)
        self.ids = np.arange(config.n)

    def view(self, next_positions, velocity, consumed):
        cfg = self.config
        return RoundView(
            round=self.round,
            r_min=cfg.r_min,
            r_max=cfg.r_max,
            charger_position=self.charger.position,
            charger_energy=self.charger.energy,
            ids=self.ids,
            positions=self.positions,
            next_positions=next_positions,
            velocity=velocity,
            energy=self.levels,
            consumption=consumed,
            capacity=cfg.battery,
            tau=cfg.tau,
            alpha=cfg.alpha,
            beta=cfg.beta,
            infinite_energy=self.charger.infinite_energy,
        )


def run_round(world, policy):
    """Advance ``world`` by one round under ``policy``; returns the round's metrics."""
    cfg = world.config
    world.round += 1
    world.modes = mob.update_speed_modes(world.modes, cfg.p_mode_redraw, world.rng_mob)
    nxt, v, _ = mob.step_batch(
        world.positions, world.modes, cfg.v_max, cfg.tau, world.area, world.scenario, world.ring_mask, world.rng_mob
    )
    consumed = world.rng_energy.poisson(world.gamma).astype(float)

    view = world.view(nxt, v, consumed).restrict(policy.knowledge)
    radius = float(policy.decide(view, world.rng_decision))
    if not cfg.r_min <= radius <= cfg.r_max:
        raise RuntimeError(f"{policy!r} chose range {radius} outside [{cfg.r_min}, {cfg.r_max}]")

    out = execute_charging_round(
        world.charger.with_range(radius), world.positions, nxt, v, world.levels, consumed, cfg.battery, cfg.tau, world.round
    )
    delivered = out.delivered
    start = world.levels
    charged = delivered > 0.0
    n_charged = int(np.count_nonzero(charged))
    metrics = RoundMetrics(
        round=world.round,
        range=radius,
        charger_energy=out.charger.energy,
        charges_round=n_charged,
        charges_cum=world.charges_cum + n_charged,
        working=int(np.count_nonzero((start > 0.0) | charged)),
        adequate=int(np.count_nonzero(start + delivered >= consumed)),
        alive=int(np.count_nonzero(start > 0.0)),
        skipped=out.skipped,
    )
    world.charges_cum += n_charged
    world.charge_counts += charged
    world.levels = update_levels(start, consumed, delivered, cfg.battery)
    world.positions = nxt
    world.charger = out.charger
    world.last_outcome = out
    return metrics


@dataclass
class RunResult:
    label: str
    rep: int
    scenario: mob.MobilityScenario
    trace: dict
    charge_counts: np.ndarray
    lifetime: int
    depletion_round: int | None
    delivered_total: float
    initial_charger_energy: float

    @property
    def rounds(self):
        return len(self.trace["range"])

    def rows(self):
        keys = list(RoundMetrics._fields[1:])
        for t in range(self.rounds):
            yield RoundMetrics(t + 1, *(self.trace[k][t] for k in keys))


def run_simulation(config, rep_index=0, policy=None, *, collect_levels=False):
    """One repetition. Deterministic in ``(config, config.seed, rep_index, policy)``."""
    prun = PolicyRun.from_spec(config.policy if policy is None else policy)
    world = World(config, rep_index, prun.infinite_energy)
    c0 = world.charger.energy
    history = []
    level_trace = [] if collect_levels else None
    delivered_total = 0.0
    depletion = None
    for _ in range(config.horizon):
        m = run_round(world, prun.policy)
        history.append(m)
        delivered_total += world.last_outcome.energy_given
        if collect_levels:
            level_trace.append(world.levels.copy())
        if depletion is None and not world.charger.infinite_energy:
            if m.skipped > 0 or m.charger_energy == 0.0:
                depletion = m.round
    cols = list(zip(*history))
    trace = {k: np.asarray(cols[i + 1]) for i, k in enumerate(RoundMetrics._fields[1:])}
    working = trace["working"]
    alive_rounds = np.flatnonzero(working > 0)
    result = RunResult(
        label=prun.name(config),
        rep=rep_index,
        scenario=world.scenario,
        trace=trace,
        charge_counts=world.charge_counts.copy(),
        lifetime=int(alive_rounds[-1] + 1) if alive_rounds.size else 0,
        depletion_round=depletion,
        delivered_total=delivered_total,
        initial_charger_energy=c0,
    )
    if collect_levels:
        result.levels = np.array(level_trace)
    return result


@dataclass
class ExperimentResult:
    label: str
    config: ScenarioConfig
    runs: list

    @property
    def mean_trace(self):
        return {k: np.mean([r.trace[k] for r in self.runs], axis=0) for k in METRIC_COLUMNS}

    def mean_depletion(self):
        """Mean depletion round; runs that never deplete count as ``horizon + 1``."""
        h = self.config.horizon
        return float(np.mean([h + 1 if r.depletion_round is None else r.depletion_round for r in self.runs]))

    def mean_lifetime(self):
        return float(np.mean([r.lifetime for r in self.runs]))

    def mean_total_charges(self):
        return float(np.mean([r.trace["charges_cum"][-1] for r in self.runs]))


def _run_one(args):
    config, rep, policy = args
    return run_simulation(config, rep, policy)


def run_experiment(config, policy=None, *, workers=1):
    """All repetitions of ``config`` under one policy.

    Results are identical for any ``workers``; repetitions are returned in
    index order.
    """
    prun = PolicyRun.from_spec(config.policy if policy is None else policy)
    jobs = [(config, r, prun) for r in range(config.repetitions)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    return ExperimentResult(prun.name(config), config, runs)


def compare(config, policies=None, *, workers=1):
    """Run several policies on the same per-repetition worlds."""
    specs = config.policies if policies is None else policies
    if not specs:
        raise ConfigError("compare needs a non-empty policy list")
    return [run_experiment(config, p, workers=workers) for p in specs]
