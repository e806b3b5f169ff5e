"""Received-energy model and the per-round charging procedure.

The charger serves requests all-or-nothing: an agent either receives its
whole request or nothing. Requests are pre-capped by the battery headroom so
the charger only pays for energy a battery actually absorbs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .energy import headroom
from .geom import Point, in_range_time_batch

# Slack when comparing a request against the remaining budget; absorbs
# round-off in requests that are exact in real arithmetic.
BUDGET_ATOL = 1e-9
BUDGET_RTOL = 1e-12

AGENT_RULE = "agent"
ROUND_RULE = "round"


@dataclass(frozen=True)
class ChargerState:
    position: Point
    energy: float
    range: float = 0.0
    alpha: float = 1.0
    beta: float = 1.0
    infinite_energy: bool = False

    def __post_init__(self):
        if not self.infinite_energy and not self.energy >= 0:
            raise ValueError(f"charger energy must be >= 0, got {self.energy}")
        if self.range < 0:
            raise ValueError("charging range must be >= 0")

    def with_range(self, radius):
        return replace(self, range=float(radius))


class ChargeEvent(NamedTuple):
    agent: int
    round: int
    delivered: float
    entry_distance: float


def received_energy(radius, t_in, entry_distance, alpha=1.0, beta=1.0):
    """Friis-style energy received while in range.

    Works elementwise on arrays. A zero denominator with positive in-range
    time yields ``inf``; callers cap it by battery headroom.
    """
    t_in = np.asarray(t_in, dtype=float)
    denom = (np.asarray(entry_distance, dtype=float) + beta) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        e = alpha * np.asarray(radius, dtype=float) ** 2 * t_in / denom
    e = np.where(t_in > 0.0, np.where(denom > 0.0, e, math.inf), 0.0)
    return e if e.ndim else float(e)


def affordable(request, budget):
    return request <= budget + BUDGET_ATOL + BUDGET_RTOL * budget


def allocate(requests, order, budget, *, infinite=False, rule=AGENT_RULE):
    """Serve positive requests in ``order`` from ``budget``.

    Returns ``(delivered, remaining_budget, skipped)`` where ``skipped`` counts
    positive requests that went unserved. Under ``rule="round"`` the whole
    round is served only if the budget covers the sum of its requests.
    """
    requests = np.asarray(requests, dtype=float)
    delivered = np.zeros_like(requests)
    wanted = requests > 0.0
    if not wanted.any():
        return delivered, budget, 0
    if infinite:
        delivered[wanted] = requests[wanted]
        return delivered, budget, 0
    if rule == ROUND_RULE:
        total = requests[wanted].sum()
        if affordable(total, budget):
            delivered[wanted] = requests[wanted]
            return delivered, max(0.0, budget - total), 0
        return delivered, budget, int(wanted.sum())
    if rule != AGENT_RULE:
        raise ValueError(f"unknown charging rule {rule!r}")
    total = requests[wanted].sum()
    if total <= budget:
        delivered[wanted] = requests[wanted]
        return delivered, budget - total, 0
    skipped = 0
    for i in order:
        r = requests[i]
        if r <= 0.0:
            continue
        if affordable(r, budget):
            # within the slack, hand over what is left so the budget never goes negative
            give = min(r, budget)
            delivered[i] = give
            budget -= give
        else:
            skipped += 1
    return delivered, budget, skipped


@dataclass
class ChargingOutcome:
    charger: ChargerState
    delivered: np.ndarray
    requested: np.ndarray
    skipped: int
    t_in: np.ndarray
    entry_distance: np.ndarray
    round: int = 0

    @property
    def charges(self):
        return int(np.count_nonzero(self.delivered > 0.0))

    @property
    def energy_given(self):
        return float(self.delivered.sum())

    @property
    def events(self):
        idx = np.flatnonzero(self.delivered > 0.0)
        return [
            ChargeEvent(int(i), self.round, float(self.delivered[i]), float(self.entry_distance[i]))
            for i in idx
        ]


def execute_charging_round(charger, starts, ends, velocity, levels, consumed, capacity, tau, round_index=0):
    """Charge every agent whose trajectory crosses the charging disk.

    Pure: the input ``charger`` is not modified; the updated state is in the
    returned outcome. Agents are served by ascending entry time, ties by id.
    """
    levels = np.asarray(levels, dtype=float)
    n = levels.shape[0]
    if charger.range <= 0.0 or n == 0:
        zeros = np.zeros(n)
        return ChargingOutcome(charger, zeros, zeros.copy(), 0, zeros.copy(), np.full(n, np.nan), round_index)
    present, t_in, s0, entry = in_range_time_batch(
        starts, ends, velocity, charger.position, charger.range, tau
    )
    recv = received_energy(charger.range, t_in, entry, charger.alpha, charger.beta)
    room = headroom(levels, consumed, capacity)
    requested = np.where(present, np.minimum(recv, room), 0.0)
    order = np.lexsort((np.arange(n), s0 * tau))
    delivered, budget, skipped = allocate(
        requested, order, charger.energy, infinite=charger.infinite_energy
    )
    new_charger = charger if budget == charger.energy else replace(charger, energy=budget)
    return ChargingOutcome(new_charger, delivered, requested, skipped, t_in, entry, round_index)
