"""Charging-range policies.

Each policy is a scikit-learn style estimator: hyper-parameters are set in
``__init__`` (so ``get_params``/``set_params``/``clone`` work) and
:meth:`RangePolicy.decide` maps a :class:`RoundView` to a range. A policy
only sees the fields allowed by its ``knowledge`` level; the engine filters
the view with :meth:`RoundView.restrict` before asking.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_int, check_positive, check_probability
from .charging import ChargerState, execute_charging_round
from .geom import Point, segment_distance_batch

# knowledge levels, least to most informed
LOCAL = "local"  # positions of agents inside the maximum-range disk
STATE = "state"  # all positions, next positions and energies
CONSUMPTION = "consumption"  # STATE plus this round's consumptions
FULL = "full"

_LEVELS = (LOCAL, STATE, CONSUMPTION, FULL)


@dataclass(frozen=True)
class RoundView:
    """What the charger knows at the start of a round."""

    round: int
    r_min: float
    r_max: float
    charger_position: Point
    charger_energy: float
    ids: np.ndarray
    positions: np.ndarray
    next_positions: np.ndarray | None = None
    velocity: np.ndarray | None = None
    energy: np.ndarray | None = None
    consumption: np.ndarray | None = None
    capacity: float | None = None
    tau: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    infinite_energy: bool = False
    knowledge: str = FULL

    def distances(self, which="positions"):
        pts = getattr(self, which)
        return np.hypot(*(pts - np.asarray(self.charger_position)).T)

    def restrict(self, level):
        if level not in _LEVELS:
            raise ValueError(f"unknown knowledge level {level!r}")
        if level == FULL:
            return self
        if level == LOCAL:
            keep = self.distances() <= self.r_max
            return replace(
                self,
                ids=self.ids[keep],
                positions=self.positions[keep],
                next_positions=None,
                velocity=None,
                energy=None,
                consumption=None,
                knowledge=LOCAL,
            )
        if level == STATE:
            return replace(self, velocity=None, consumption=None, knowledge=STATE)
        return replace(self, knowledge=CONSUMPTION)


def _clamp(r, view):
    return float(min(max(r, view.r_min), view.r_max))


def fixed_range(radius):
    return float(radius)


def rand_min_max(view, p, rng):
    """``r_min`` with probability ``p``, otherwise ``r_max``."""
    return float(view.r_min if rng.random() < p else view.r_max)


def ldmax(view, q, rng):
    """Least distant agent within ``r_max`` (prob. ``q``), else ``r_max``."""
    if rng.random() >= q:
        return float(view.r_max)
    d = view.distances()
    d = d[d <= view.r_max]
    if d.size == 0:
        return float(view.r_max)
    return _clamp(d.min(), view)


def mwa(view, mu, margin=1e-6):
    """Smallest range that keeps at least ``mu`` agents working, if reachable.

    A zero-energy agent counts as covered by radius ``r`` when its round
    trajectory gets closer than ``r`` to the charger, so it spends positive
    time in range. ``margin`` is added to the covering distance for that
    reason.
    """
    d_now = view.distances()
    d_next = view.distances("next_positions")
    inside = d_now <= view.r_max
    k1 = int(np.count_nonzero(inside & (view.energy > 0.0)))
    if k1 >= mu:
        return float(view.r_min)
    empty = (view.energy <= 0.0) & (inside | (d_next <= view.r_max))
    k2 = int(np.count_nonzero(empty))
    if k1 + k2 < mu:
        return float(view.r_max)
    cover = np.sort(
        segment_distance_batch(view.positions[empty], view.next_positions[empty], view.charger_position)
    )
    return _clamp(cover[mu - k1 - 1] + margin, view)


def trial_round(view, radius):
    """Charging outcome of ``radius`` this round, without touching real state."""
    charger = ChargerState(
        view.charger_position,
        view.charger_energy,
        radius,
        view.alpha,
        view.beta,
        view.infinite_energy,
    )
    return execute_charging_round(
        charger,
        view.positions,
        view.next_positions,
        view.velocity,
        view.energy,
        view.consumption,
        view.capacity,
        view.tau,
        view.round,
    )


def mcer_scores(view, lam, grid):
    scores = []
    for r in grid:
        out = trial_round(view, r)
        nu, eps = out.charges, out.energy_given
        scores.append(nu**lam / eps if nu > 0 else 0.0)
    return np.array(scores)


def mcer(view, lam, grid):
    """Range in ``grid`` maximizing charges**lam / energy given."""
    grid = np.asarray(grid, dtype=float)
    scores = mcer_scores(view, lam, grid)
    if not (scores > 0.0).any():
        return float(view.r_min)
    # argmax returns the first maximum; the grid is sorted ascending
    return float(grid[int(np.argmax(scores))])


def default_grid(r_min, r_max, size=9):
    return np.linspace(r_min, r_max, size)


class RangePolicy(BaseEstimator):
    knowledge = FULL
    name = "policy"
    label_param = None

    def decide(self, view, rng):
        raise NotImplementedError

    def label(self):
        v = getattr(self, self.label_param)
        return f"{self.name}({v:g})"


class FixedRange(RangePolicy):
    knowledge = LOCAL
    name = "fixed"
    label_param = "radius"

    def __init__(self, radius=3.0):
        self.radius = radius

    def decide(self, view, rng):
        check_positive(self.radius, "radius", strict=False)
        if not view.r_min <= self.radius <= view.r_max:
            raise ValueError(f"fixed radius {self.radius} outside [{view.r_min}, {view.r_max}]")
        return fixed_range(self.radius)


class RandMinMax(RangePolicy):
    knowledge = LOCAL
    name = "rand_min_max"
    label_param = "p"

    def __init__(self, p=0.5):
        self.p = p

    def decide(self, view, rng):
        return rand_min_max(view, check_probability(self.p, "p"), rng)


class LdMax(RangePolicy):
    knowledge = LOCAL
    name = "ldmax"
    label_param = "q"

    def __init__(self, q=0.9):
        self.q = q

    def decide(self, view, rng):
        return ldmax(view, check_probability(self.q, "q"), rng)


class MWA(RangePolicy):
    knowledge = STATE
    name = "mwa"
    label_param = "mu"

    def __init__(self, mu=15, margin=1e-6):
        self.mu = mu
        self.margin = margin

    def decide(self, view, rng):
        mu = check_int(self.mu, "mu", minimum=1)
        if mu > view.ids.shape[0]:
            raise ValueError(f"mu={mu} exceeds the number of agents")
        return mwa(view, mu, self.margin)


class MCER(RangePolicy):
    knowledge = CONSUMPTION
    name = "mcer"
    label_param = "lam"

    def __init__(self, lam=2.0, grid=None, grid_size=9):
        self.lam = lam
        self.grid = grid
        self.grid_size = grid_size

    def decide(self, view, rng):
        if self.lam < 1:
            raise ValueError(f"lam must be >= 1, got {self.lam}")
        grid = self.grid
        if grid is None:
            grid = default_grid(view.r_min, view.r_max, self.grid_size)
        grid = np.sort(np.asarray(grid, dtype=float))
        if grid.size == 0 or grid[0] < view.r_min or grid[-1] > view.r_max:
            raise ValueError("MCER grid must be a non-empty subset of [r_min, r_max]")
        return mcer(view, self.lam, grid)


POLICIES = {cls.name: cls for cls in (FixedRange, RandMinMax, LdMax, MWA, MCER)}


def make_policy(spec):
    """Build a policy from ``{"name": ..., **params}``."""
    spec = dict(spec)
    try:
        name = spec.pop("name")
    except KeyError:
        raise ValueError("policy spec needs a 'name'") from None
    spec.pop("label", None)
    spec.pop("infinite_energy", None)
    if name not in POLICIES:
        raise ValueError(f"unknown policy {name!r}; expected one of {sorted(POLICIES)}")
    cls = POLICIES[name]
    valid = cls._get_param_names()
    unknown = set(spec) - set(valid)
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    return cls(**spec)
