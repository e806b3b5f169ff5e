"""Random walk with speed modes inside a rectangular area.

Each round an agent draws a direction and a velocity from the interval of its
speed mode and travels in a straight line. Draws that would leave the area or
violate the mobility scenario are rejected and redrawn; after
``MAX_REDRAWS`` failures the agent stays put for the round.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_int, check_positive, check_probability
from .geom import Point, chord_batch, segment_distance_batch

MAX_REDRAWS = 100
MAX_DEPLOY_REJECTIONS = 100_000

FREE = "free"
FORBIDDEN_CIRCLE = "forbidden_circle"
RING_DWELLERS = "ring_dwellers"
KINDS = (FREE, FORBIDDEN_CIRCLE, RING_DWELLERS)

SPEED_MODES = (1, 2, 3)


@dataclass(frozen=True)
class Area:
    x_max: float
    y_max: float

    def __post_init__(self):
        check_positive(self.x_max, "x_max")
        check_positive(self.y_max, "y_max")

    @property
    def center(self) -> Point:
        return Point(self.x_max / 2.0, self.y_max / 2.0)

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return (
            (pts[:, 0] >= 0.0)
            & (pts[:, 0] <= self.x_max)
            & (pts[:, 1] >= 0.0)
            & (pts[:, 1] <= self.y_max)
        )


@dataclass(frozen=True)
class MobilityScenario:
    """Movement constraints around the charger.

    ``None`` parameters are sampled per repetition by :meth:`resolve`.
    Ring dwellers are the agents with ids ``0 .. ring_count - 1``.
    """

    kind: str = FREE
    forbidden_radius: float | None = None
    ring_inner: float | None = None
    ring_outer: float | None = None
    ring_count: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {KINDS}")
        if self.forbidden_radius is not None:
            check_positive(self.forbidden_radius, "forbidden_radius", strict=False)
        if self.ring_inner is not None and self.ring_outer is not None:
            if not self.ring_inner < self.ring_outer:
                raise ValueError("ring_inner must be smaller than ring_outer")
        if self.ring_count is not None:
            check_int(self.ring_count, "ring_count", minimum=1)

    @property
    def resolved(self) -> bool:
        if self.kind == FORBIDDEN_CIRCLE:
            return self.forbidden_radius is not None
        if self.kind == RING_DWELLERS:
            return None not in (self.ring_inner, self.ring_outer, self.ring_count)
        return True

    def resolve(self, r_min, r_max, n, rng) -> MobilityScenario:
        """Fill unset parameters with the randomized choices of scenarios S2/S3."""
        if self.kind == FORBIDDEN_CIRCLE and self.forbidden_radius is None:
            return replace(self, forbidden_radius=float(rng.uniform(r_min, r_max / 2.0)))
        if self.kind == RING_DWELLERS and not self.resolved:
            split = (r_min + r_max) / 4.0
            count = self.ring_count
            if count is None:
                count = int(rng.integers(1, max(n // 10, 1) + 1))
            inner = self.ring_inner
            if inner is None:
                inner = float(rng.uniform(r_min, split))
            outer = self.ring_outer
            if outer is None:
                outer = float(rng.uniform(split, r_max))
            return replace(self, ring_inner=inner, ring_outer=outer, ring_count=min(count, n))
        return self

    def ring_mask(self, n):
        mask = np.zeros(n, dtype=bool)
        if self.kind == RING_DWELLERS:
            mask[: self.ring_count] = True
        return mask


def speed_interval(mode, v_max):
    """Velocity interval ``(lo, hi]`` of a speed mode (mode 1 includes 0)."""
    if mode not in SPEED_MODES:
        raise ValueError(f"speed mode must be one of {SPEED_MODES}, got {mode!r}")
    return (mode - 1) * v_max / 4.0 if mode > 1 else 0.0, v_max * (0.25, 0.5, 1.0)[mode - 1]


def _intervals(modes, v_max):
    modes = np.asarray(modes)
    lo = np.choose(modes - 1, (0.0, v_max / 4.0, v_max / 2.0))
    hi = np.choose(modes - 1, (v_max / 4.0, v_max / 2.0, v_max))
    return lo, hi


def update_speed_mode(current, p_redraw, rng):
    """Redraw a single speed mode uniformly with probability ``p_redraw``."""
    return int(update_speed_modes(np.array([current]), p_redraw, rng)[0])


def update_speed_modes(modes, p_redraw, rng):
    check_probability(p_redraw, "p_redraw")
    modes = np.asarray(modes)
    redraw = rng.random(modes.shape[0]) < p_redraw
    fresh = rng.integers(1, 4, modes.shape[0])
    return np.where(redraw, fresh, modes)


def admissible(starts, ends, area, scenario, ring_mask):
    """Whether each straight-line move satisfies the area and scenario rules."""
    ok = area.contains(ends)
    center = area.center
    if scenario.kind == FORBIDDEN_CIRCLE:
        hits, _, _ = chord_batch(starts, ends, center, scenario.forbidden_radius)
        ok &= ~hits
    elif scenario.kind == RING_DWELLERS and ring_mask.any():
        s, e = starts[ring_mask], ends[ring_mask]
        outer_ok = (np.hypot(*(e - center).T) <= scenario.ring_outer) & (
            np.hypot(*(s - center).T) <= scenario.ring_outer
        )
        inner_ok = segment_distance_batch(s, e, center) >= scenario.ring_inner
        ok[ring_mask] &= outer_ok & inner_ok
    return ok


def _in_region(pts, area, scenario, ring):
    center = np.asarray(area.center)
    r = np.hypot(*(pts - center).T)
    ok = area.contains(pts)
    if scenario.kind == FORBIDDEN_CIRCLE:
        ok &= r > scenario.forbidden_radius
    elif scenario.kind == RING_DWELLERS and ring:
        ok &= (r >= scenario.ring_inner) & (r <= scenario.ring_outer)
    return ok


def initial_deploy(n, area, scenario, rng):
    """Uniform positions in the admissible region, by rejection sampling.

    Returns an ``(n, 2)`` array.
    """
    n = check_int(n, "n", minimum=1)
    if not scenario.resolved:
        raise ValueError("scenario parameters must be resolved before deployment")
    ring_mask = scenario.ring_mask(n)
    pos = np.empty((n, 2))
    for i in range(n):
        ring = bool(ring_mask[i])
        if ring:
            cx, cy = area.center
            r = scenario.ring_outer
            lo, hi = (cx - r, cy - r), (cx + r, cy + r)
        else:
            lo, hi = (0.0, 0.0), (area.x_max, area.y_max)
        for _ in range(MAX_DEPLOY_REJECTIONS):
            p = rng.uniform(lo, hi)
            if _in_region(p[None, :], area, scenario, ring)[0]:
                pos[i] = p
                break
        else:
            raise RuntimeError(
                f"could not place agent {i} after {MAX_DEPLOY_REJECTIONS} rejections; "
                "scenario geometry leaves no admissible region"
            )
    return pos


def step_batch(pos, modes, v_max, tau, area, scenario, ring_mask, rng):
    """Move every agent for one round.

    Returns ``(next_pos, velocity, theta)``.
    """
    pos = np.asarray(pos, dtype=float)
    n = pos.shape[0]
    lo, hi = _intervals(modes, v_max)
    theta = np.empty(n)
    v = np.empty(n)
    nxt = np.empty_like(pos)
    todo = np.arange(n)
    for _ in range(MAX_REDRAWS + 1):
        if todo.size == 0:
            break
        th = rng.uniform(0.0, 2.0 * math.pi, todo.size)
        u = rng.random(todo.size)
        vel = hi[todo] - (hi[todo] - lo[todo]) * u
        cand = pos[todo] + (vel * tau)[:, None] * np.column_stack((np.cos(th), np.sin(th)))
        theta[todo], v[todo], nxt[todo] = th, vel, cand
        ok = admissible(pos[todo], cand, area, scenario, ring_mask[todo])
        todo = todo[~ok]
    if todo.size:
        v[todo] = 0.0
        nxt[todo] = pos[todo]
    return nxt, v, theta


def step(pos, mode, v_max, tau, area, scenario, rng, *, ring=False):
    """Single-agent version of :func:`step_batch`."""
    nxt, v, theta = step_batch(
        np.array([pos], dtype=float), np.array([mode]), v_max, tau, area, scenario, np.array([ring]), rng
    )
    return Point(*nxt[0]), float(v[0]), float(theta[0])


def advance(pos, v, theta, tau):
    """Endpoint of a straight move from ``pos``."""
    return Point(pos[0] + v * tau * math.cos(theta), pos[1] + v * tau * math.sin(theta))
