"""Agent energy: heterogeneous Poisson consumption and battery bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_int, check_positive

GROUP_PROBS = (0.5, 0.25, 0.125, 0.125)
BASE_RATE = 10.0


def group_rate_bound(group):
    """Upper end of the consumption-rate interval of a group (1-based)."""
    return BASE_RATE * 2 ** (group - 1)


@dataclass(frozen=True)
class ConsumptionProfile:
    gamma: float
    group: int

    def __post_init__(self):
        if self.group not in (1, 2, 3, 4):
            raise ValueError(f"group must be in 1..4, got {self.group}")
        if not 0.0 <= self.gamma <= group_rate_bound(self.group):
            raise ValueError(f"gamma {self.gamma} outside the range of group {self.group}")


@dataclass(frozen=True)
class Battery:
    level: float
    capacity: float

    def __post_init__(self):
        check_positive(self.capacity, "capacity", strict=False)
        if not 0.0 <= self.level <= self.capacity:
            raise ValueError(f"battery level {self.level} outside [0, {self.capacity}]")


def draw_groups(n, rng):
    """Group ids and Poisson means for ``n`` agents, as arrays."""
    n = check_int(n, "n", minimum=1)
    groups = rng.choice(4, size=n, p=GROUP_PROBS) + 1
    gamma = rng.random(n) * (BASE_RATE * 2.0 ** (groups - 1))
    return groups, gamma


def assign_groups(n, rng):
    groups, gamma = draw_groups(n, rng)
    return [ConsumptionProfile(float(g), int(j)) for j, g in zip(groups, gamma)]


def sample_consumption(profile, rng):
    """One round of consumption for an agent (integer energy units)."""
    check_positive(profile.gamma, "gamma", strict=False)
    return int(rng.poisson(profile.gamma))


def headroom(level, consumed, capacity):
    """Energy a battery can absorb once this round's consumption is paid."""
    return capacity - np.maximum(0.0, np.asarray(level) - consumed)


def apply_round_energy(battery, consumed, delivered):
    """Battery after one round: consumption is truncated at zero before charging."""
    if consumed < 0 or delivered < 0:
        raise ValueError("consumed and delivered must be non-negative")
    level = update_levels(battery.level, consumed, delivered, battery.capacity)
    return Battery(float(level), battery.capacity)


def update_levels(levels, consumed, delivered, capacity):
    return np.minimum(capacity, np.maximum(0.0, np.asarray(levels) - consumed) + delivered)
