"""Full-information range selection: exact solvers and knapsack reductions.

An :class:`OfflineInstance` lists, for every round, agent and candidate
range, the in-range time, the entry distance and the consumption (which may
depend on the chosen range). Batteries carry over between rounds.

* MNC: choose one range per round to maximize the number of charges.
* MNL: choose one range per round to maximize the number of rounds that end
  with at least one agent holding strictly positive energy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_int
from .charging import AGENT_RULE, ROUND_RULE, affordable

BRUTE_FORCE_LIMIT = 10**7
KP_CAPACITY_LIMIT = 10**7
INTEGER_TOL = 1e-6


class InstanceTooLargeError(ValueError):
    pass


class NonIntegerCostError(ValueError):
    pass


class NotDecomposableError(ValueError):
    """Requests depend on earlier choices, so the round-by-round DP does not apply."""


@dataclass(frozen=True)
class KnapsackInstance:
    items: tuple
    capacity: int

    def __post_init__(self):
        items = tuple((int(v), int(w)) for v, w in self.items)
        for (v, w), raw in zip(items, self.items):
            if tuple(raw) != (v, w):
                raise ValueError(f"item {tuple(raw)} must have integer value and weight")
            if v <= 0 or w <= 0:
                raise ValueError(f"item {tuple(raw)}: zero or negative values and weights are not allowed")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "capacity", check_int(self.capacity, "capacity", minimum=0))

    @classmethod
    def from_dict(cls, data):
        items = []
        for it in data["items"]:
            if isinstance(it, dict):
                items.append((it["value"], it["weight"]))
            else:
                items.append(tuple(it))
        return cls(tuple(items), data["capacity"])

    def to_dict(self):
        return {"items": [list(it) for it in self.items], "capacity": self.capacity}


def solve_kp(inst):
    """Optimal 0/1 knapsack value, by dynamic programming over capacity."""
    if inst.capacity > KP_CAPACITY_LIMIT:
        raise InstanceTooLargeError(f"knapsack capacity {inst.capacity} exceeds {KP_CAPACITY_LIMIT}")
    best = [0] * (inst.capacity + 1)
    for v, w in inst.items:
        for c in range(inst.capacity, w - 1, -1):
            cand = best[c - w] + v
            if cand > best[c]:
                best[c] = cand
    return best[inst.capacity]


@dataclass
class OfflineInstance:
    ranges: np.ndarray
    charger_energy: float
    battery: float
    t_in: np.ndarray
    entry_distance: np.ndarray
    consumption: np.ndarray
    entry_time: np.ndarray | None = None
    initial_levels: np.ndarray | None = None
    tau: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0
    charging_rule: str = AGENT_RULE
    energy_denominator: int | None = None

    def __post_init__(self):
        self.ranges = np.asarray(self.ranges, dtype=float)
        self.t_in = np.asarray(self.t_in, dtype=float)
        self.entry_distance = np.asarray(self.entry_distance, dtype=float)
        self.consumption = np.asarray(self.consumption, dtype=float)
        T, n, k = self.t_in.shape
        if self.ranges.shape != (k,):
            raise ValueError("one candidate range per last axis entry of t_in")
        if k == 0 or np.any(self.ranges < 0) or np.any(np.diff(self.ranges) <= 0):
            raise ValueError("ranges must be non-negative and strictly increasing")
        if self.entry_distance.shape != (T, n, k) or self.consumption.shape != (T, n, k):
            raise ValueError("entry_distance and consumption must match t_in's shape")
        if self.entry_time is None:
            self.entry_time = np.zeros((T, n))
        self.entry_time = np.asarray(self.entry_time, dtype=float)
        if self.initial_levels is None:
            self.initial_levels = np.full(n, float(self.battery))
        self.initial_levels = np.asarray(self.initial_levels, dtype=float)
        if np.any(self.t_in < 0) or np.any(self.t_in > self.tau + 1e-12):
            raise ValueError("in-range times must lie in [0, tau]")
        if np.any(self.consumption < 0) or self.charger_energy < 0 or self.battery < 0:
            raise ValueError("energies must be non-negative")
        if np.any(self.initial_levels < 0) or np.any(self.initial_levels > self.battery):
            raise ValueError("initial levels must lie in [0, battery]")
        if np.any((self.t_in > 0) & np.isnan(self.entry_distance)):
            raise ValueError("an entry distance is required wherever t_in > 0")
        if self.charging_rule not in (AGENT_RULE, ROUND_RULE):
            raise ValueError(f"charging_rule must be {AGENT_RULE!r} or {ROUND_RULE!r}")

    @property
    def horizon(self):
        return self.t_in.shape[0]

    @property
    def n_agents(self):
        return self.t_in.shape[1]

    @property
    def k(self):
        return self.ranges.shape[0]

    def received(self):
        """Energy each agent would receive, shape ``(T, n, k)``."""
        R = self.ranges[None, None, :]
        denom = (np.nan_to_num(self.entry_distance, nan=1.0) + self.beta) ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            e = self.alpha * R**2 * self.t_in / denom
        return np.where(self.t_in > 0, np.where(denom > 0, e, math.inf), 0.0)

    def to_dict(self):
        rounds = []
        for t in range(self.horizon):
            agents = []
            for i in range(self.n_agents):
                ti = self.t_in[t, i]
                ci = self.consumption[t, i]
                if not ti.any() and not ci.any() and self.entry_time[t, i] == 0:
                    continue
                rec = {"id": i}
                rec["consumption"] = float(ci[0]) if np.all(ci == ci[0]) else ci.tolist()
                if ti.any():
                    rec["t_in"] = ti.tolist()
                    rec["entry_distance"] = [None if math.isnan(x) else float(x) for x in self.entry_distance[t, i]]
                if self.entry_time[t, i]:
                    rec["entry_time"] = float(self.entry_time[t, i])
                agents.append(rec)
            rounds.append({"agents": agents})
        return {
            "ranges": self.ranges.tolist(),
            "charger_energy": float(self.charger_energy),
            "battery": float(self.battery),
            "n_agents": self.n_agents,
            "tau": self.tau,
            "alpha": self.alpha,
            "beta": self.beta,
            "charging_rule": self.charging_rule,
            "energy_denominator": self.energy_denominator,
            "initial_levels": self.initial_levels.tolist(),
            "rounds": rounds,
        }

    @classmethod
    def from_dict(cls, data):
        ranges = [float(r) for r in data["ranges"]]
        k = len(ranges)
        rounds = data["rounds"]
        n = data.get("n_agents")
        if n is None:
            ids = [a["id"] for r in rounds for a in r.get("agents", [])]
            n = max(ids) + 1 if ids else 0
        T = len(rounds)
        t_in = np.zeros((T, n, k))
        entry = np.full((T, n, k), np.nan)
        cons = np.zeros((T, n, k))
        etime = np.zeros((T, n))
        for t, rnd in enumerate(rounds):
            for a in rnd.get("agents", []):
                i = int(a["id"])
                c = a.get("consumption", 0.0)
                cons[t, i] = c if np.isscalar(c) else np.asarray(c, dtype=float)
                if "t_in" in a:
                    t_in[t, i] = a["t_in"]
                    entry[t, i] = [np.nan if x is None else x for x in a["entry_distance"]]
                etime[t, i] = a.get("entry_time", 0.0)
        return cls(
            ranges=np.array(ranges),
            charger_energy=float(data["charger_energy"]),
            battery=float(data["battery"]),
            t_in=t_in,
            entry_distance=entry,
            consumption=cons,
            entry_time=etime,
            initial_levels=data.get("initial_levels"),
            tau=float(data.get("tau", 1.0)),
            alpha=float(data.get("alpha", 1.0)),
            beta=float(data.get("beta", 0.0)),
            charging_rule=data.get("charging_rule", AGENT_RULE),
            energy_denominator=data.get("energy_denominator"),
        )

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass
class OfflineSolution:
    problem: str
    assignment: list
    ranges: list
    objective: int
    energy_spent: float
    method: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "problem": self.problem,
            "method": self.method,
            "objective": self.objective,
            "energy_spent": self.energy_spent,
            "assignment": self.assignment,
            "ranges": self.ranges,
        }


class _RoundModel:
    """Per-(round, range) data flattened to Python lists for fast search."""

    def __init__(self, inst):
        self.inst = inst
        recv = inst.received()
        T, n, k = recv.shape
        self.B = float(inst.battery)
        self.rule = inst.charging_rule
        self.order = [
            sorted(range(n), key=lambda i, t=t: (inst.entry_time[t, i], i)) for t in range(T)
        ]
        self.recv = recv.tolist()
        self.cons = inst.consumption.tolist()
        # rounds where every choice has the same effect collapse to choice 0
        self.choices = []
        for t in range(T):
            inert = not np.any(recv[t] > 0) and np.all(inst.consumption[t] == inst.consumption[t, :, :1])
            self.choices.append(range(1) if inert else range(k))

    def step(self, t, j, levels, budget):
        """Play round ``t`` with range index ``j``. Returns ``(levels, budget, charges, spent)``."""
        B = self.B
        recv_t, cons_t = self.recv[t], self.cons[t]
        after = [max(0.0, e - cons_t[i][j]) for i, e in enumerate(levels)]
        requests = {}
        for i in self.order[t]:
            r = recv_t[i][j]
            if r > 0.0:
                req = min(r, B - after[i])
                if req > 0.0:
                    requests[i] = req
        spent = 0.0
        charged = 0
        if requests:
            if self.rule == ROUND_RULE:
                total = sum(requests.values())
                if affordable(total, budget):
                    for i, req in requests.items():
                        after[i] += req
                    spent = min(total, budget)
                    charged = len(requests)
            else:
                for i, req in requests.items():
                    if affordable(req, budget - spent):
                        give = min(req, budget - spent)
                        after[i] += give
                        spent += give
                        charged += 1
        return [min(B, e) for e in after], budget - spent, charged, spent


def evaluate(inst, assignment):
    """Replay a range assignment. Returns a dict with charges, alive rounds and spend."""
    model = _RoundModel(inst)
    if len(assignment) != inst.horizon:
        raise ValueError("assignment must give one range index per round")
    levels = inst.initial_levels.tolist()
    budget = float(inst.charger_energy)
    charges = alive = 0
    spent = 0.0
    for t, j in enumerate(assignment):
        if not 0 <= j < inst.k:
            raise ValueError(f"range index {j} out of bounds")
        levels, budget, c, s = model.step(t, j, levels, budget)
        charges += c
        spent += s
        alive += any(e > 0.0 for e in levels)
    return {"charges": charges, "alive_rounds": alive, "energy_spent": spent}


def _search_space(model):
    size = 1
    for ch in model.choices:
        size *= len(ch)
    return size


def _brute_force(inst, problem):
    model = _RoundModel(inst)
    size = _search_space(model)
    if size > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(
            f"{size} distinct range assignments exceed the brute-force limit {BRUTE_FORCE_LIMIT}"
        )
    T = inst.horizon
    best = [-1, None, 0.0]
    path = [0] * T

    def dfs(t, levels, budget, score, spent):
        if t == T:
            if score > best[0]:
                best[:] = [score, list(path), spent]
            return
        for j in model.choices[t]:
            lv, b, c, s = model.step(t, j, levels, budget)
            gain = c if problem == "mnc" else int(any(e > 0.0 for e in lv))
            path[t] = j
            dfs(t + 1, lv, b, score + gain, spent + s)
        path[t] = 0

    dfs(0, inst.initial_levels.tolist(), float(inst.charger_energy), 0, 0.0)
    score, assignment, spent = best
    return OfflineSolution(
        problem, assignment, [float(inst.ranges[j]) for j in assignment], score, spent, "brute", {"search_space": size}
    )


def solve_mnc_bruteforce(inst):
    """Exhaustive MNC search. Ties go to the lexicographically smallest assignment."""
    return _brute_force(inst, "mnc")


def solve_mnl_bruteforce(inst):
    """Exhaustive MNL search. Ties go to the lexicographically smallest assignment."""
    return _brute_force(inst, "mnl")


def _to_units(x, denom, what):
    scaled = x * denom
    unit = round(scaled)
    if abs(scaled - unit) > INTEGER_TOL * max(1.0, abs(scaled)):
        raise NonIntegerCostError(
            f"{what} {x!r} is not an integer multiple of 1/{denom}; "
            "set energy_denominator or use the brute-force solver"
        )
    return int(unit)


def solve_mnc_dp(inst, energy_denominator=None):
    """MNC by dynamic programming over (round, remaining energy units).

    Needs every request to be independent of earlier choices (received
    energy never exceeds what the battery can take after consumption) and
    every request to be a multiple of ``1 / energy_denominator``.
    """
    denom = energy_denominator or inst.energy_denominator or 1
    denom = check_int(denom, "energy_denominator", minimum=1)
    recv = inst.received()
    B = float(inst.battery)
    T, n, k = recv.shape
    lo_room = np.minimum(B, inst.consumption)
    fixed = (recv <= 0) | (np.minimum(recv, lo_room) >= np.minimum(recv, B) * (1 - 1e-12))
    if not fixed.all():
        raise NotDecomposableError(
            "some requests depend on the battery level left by earlier rounds; use the brute-force solver"
        )
    if not math.isfinite(inst.charger_energy):
        raise NonIntegerCostError("charger energy must be finite for the DP")
    cap = int(math.floor(inst.charger_energy * denom + INTEGER_TOL))
    if cap > KP_CAPACITY_LIMIT:
        raise InstanceTooLargeError(f"{cap} energy units exceed the DP limit {KP_CAPACITY_LIMIT}")

    # per (t, j): ordered request costs in integer units
    order = [sorted(range(n), key=lambda i, t=t: (inst.entry_time[t, i], i)) for t in range(T)]
    costs = [[[] for _ in range(k)] for _ in range(T)]
    for t in range(T):
        for j in range(k):
            for i in order[t]:
                r = min(recv[t, i, j], B)
                if r > 0:
                    costs[t][j].append(_to_units(r, denom, "request"))

    def outcome(t, j, b):
        cs = costs[t][j]
        if not cs:
            return 0, 0
        if inst.charging_rule == ROUND_RULE:
            total = sum(cs)
            return (len(cs), total) if total <= b else (0, 0)
        charged = used = 0
        for c in cs:
            if c <= b - used:
                used += c
                charged += 1
        return charged, used

    value = np.zeros((T + 1, cap + 1), dtype=np.int64)
    for t in range(T - 1, -1, -1):
        nxt = value[t + 1]
        row = value[t]
        for b in range(cap + 1):
            best = -1
            for j in range(k):
                c, u = outcome(t, j, b)
                v = c + nxt[b - u]
                if v > best:
                    best = v
            row[b] = best

    assignment = []
    b = cap
    for t in range(T):
        for j in range(k):
            c, u = outcome(t, j, b)
            if c + value[t + 1][b - u] == value[t][b]:
                assignment.append(j)
                b -= u
                break
    replay = evaluate(inst, assignment)
    return OfflineSolution(
        "mnc",
        assignment,
        [float(inst.ranges[j]) for j in assignment],
        int(value[0][cap]),
        replay["energy_spent"],
        "dp",
        {"energy_denominator": denom, "replayed_charges": replay["charges"]},
    )


class MNCSolver(BaseEstimator):
    """Estimator-style wrapper: ``MNCSolver(method="dp").fit(instance).objective_``."""

    def __init__(self, method="dp", energy_denominator=None):
        self.method = method
        self.energy_denominator = energy_denominator

    def fit(self, instance, y=None):
        if self.method == "dp":
            sol = solve_mnc_dp(instance, self.energy_denominator)
        elif self.method == "brute":
            sol = solve_mnc_bruteforce(instance)
        else:
            raise ValueError(f"method must be 'dp' or 'brute', got {self.method!r}")
        self.solution_ = sol
        self.assignment_ = sol.assignment
        self.objective_ = sol.objective
        return self


class MNLSolver(BaseEstimator):
    def __init__(self, method="brute"):
        self.method = method

    def fit(self, instance, y=None):
        if self.method != "brute":
            raise ValueError("MNL is only solved by brute force")
        sol = solve_mnl_bruteforce(instance)
        self.solution_ = sol
        self.assignment_ = sol.assignment
        self.objective_ = sol.objective
        return self


def weight_scale(kp):
    """Smallest integer factor making every weight at least its value."""
    return max([1] + [math.ceil(v / w) for v, w in kp.items])


def kp_to_mnc(kp, radius=None):
    """MNC instance whose optimum number of charges equals the knapsack optimum.

    Round ``t`` stands for item ``t``: with the charger active, ``value``
    agents on the circle of radius ``R * sqrt(value / weight)`` each consume
    and receive ``weight / value``, so the round costs ``weight`` in total.
    Weights (and the capacity) are first multiplied by :func:`weight_scale`
    so every such circle lies inside the charging disk. The round is served
    all-or-nothing as a whole.
    """
    K = weight_scale(kp)
    items = [(v, w * K) for v, w in kp.items]
    q = len(items)
    n = max((v for v, _ in items), default=1)
    R = float(radius) if radius is not None else max(math.sqrt(w / v) for v, w in items) if items else 1.0
    if R <= 0:
        raise ValueError("radius must be positive")
    B = max((w / v for v, w in items), default=1.0)
    t_in = np.zeros((q, n, 2))
    entry = np.full((q, n, 2), np.nan)
    cons = np.zeros((q, n, 2))
    for t, (v, w) in enumerate(items):
        d = R * math.sqrt(v / w)
        t_in[t, :v, 1] = 1.0
        entry[t, :v, 1] = d
        cons[t, :v, 1] = w / v
    return OfflineInstance(
        ranges=np.array([0.0, R]),
        charger_energy=float(kp.capacity * K),
        battery=B,
        t_in=t_in,
        entry_distance=entry,
        consumption=cons,
        tau=1.0,
        alpha=1.0,
        beta=0.0,
        charging_rule=ROUND_RULE,
        # every request w/v is a multiple of 1/lcm(values)
        energy_denominator=math.lcm(*(v for v, _ in items)) if items else 1,
    )


def kp_to_mnl(kp, radius=None, order=None):
    """MNL instance with one agent whose optimum lifetime equals the knapsack optimum.

    After a draining first round, item ``i`` owns a block of ``value`` rounds.
    The block's first round drains any leftover energy and, with the charger
    active, hands the agent exactly ``weight`` at distance ``R / sqrt(weight)``;
    the remaining rounds each consume ``weight / value``, so the agent ends
    every round of the block with positive energy only if it was charged.
    """
    items = list(kp.items)
    if order is not None:
        if sorted(order) != list(range(len(items))):
            raise ValueError("order must be a permutation of the item indices")
        items = [items[i] for i in order]
    R = float(radius) if radius is not None else max(math.sqrt(w / v) for v, w in items) if items else 1.0
    if R <= 0:
        raise ValueError("radius must be positive")
    B = float(max((w for _, w in items), default=1))
    T = 1 + sum(v for v, _ in items)
    t_in = np.zeros((T, 1, 2))
    entry = np.full((T, 1, 2), np.nan)
    cons = np.zeros((T, 1, 2))
    cons[0, 0, :] = B
    t = 1
    for v, w in items:
        t_in[t, 0, 1] = 1.0
        entry[t, 0, 1] = R / math.sqrt(w)
        cons[t, 0, :] = B
        for s in range(1, v):
            cons[t + s, 0, :] = w / v
        t += v
    return OfflineInstance(
        ranges=np.array([0.0, R]),
        charger_energy=float(kp.capacity),
        battery=B,
        t_in=t_in,
        entry_distance=entry,
        consumption=cons,
        tau=1.0,
        alpha=1.0,
        beta=0.0,
        charging_rule=AGENT_RULE,
    )

