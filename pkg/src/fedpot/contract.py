"""Contract menus, per-round participant selection and menu property checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence


@dataclass(frozen=True)
class ContractItem:
    type_index: int
    theta: float
    reward: float
    cost: float


@dataclass(frozen=True)
class ContractMenu:
    items: tuple[ContractItem, ...]

    def __post_init__(self) -> None:
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        for a, b in zip(items, items[1:]):
            if b.type_index <= a.type_index:
                raise ValueError("menu type indices must be strictly increasing")
            if b.theta < a.theta:
                raise ValueError("menu thetas must be non-decreasing in type")

    @classmethod
    def from_dicts(cls, rows: Sequence[dict]) -> "ContractMenu":
        items = [
            ContractItem(
                type_index=int(r.get("type_index", i + 1)),
                theta=float(r["theta"]),
                reward=float(r["reward"]),
                cost=float(r.get("cost", 0.0)),
            )
            for i, r in enumerate(rows)
        ]
        return cls(tuple(sorted(items, key=lambda it: it.type_index)))

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class Candidate:
    sps_id: int
    phi: float
    reward: float
    t_total: float


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple[int, ...]
    indicator: dict[int, int]
    objective: float
    total_reward: float
    deadline_used: float
    rewards: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    kind: str  # "monotonicity" | "LDIC" | "LUIC"
    lower: int
    upper: int

    def __str__(self) -> str:
        return f"{self.kind} violated between types {self.lower} and {self.upper}"


def min_feasible_reward(theta: float, cost: float) -> float:
    """Smallest reward giving non-negative utility ``ln(theta * R) - cost``."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    return math.exp(cost) / theta


# Seeding every pair costs O(n^3); above this many feasible candidates only
# single-candidate seeds are tried.
PAIR_SEED_LIMIT = 40


def _fill(seed: tuple[Candidate, ...], order: Sequence[Candidate], budget: float) -> list[Candidate]:
    chosen = list(seed)
    spent = sum(c.reward for c in seed)
    taken = {c.sps_id for c in seed}
    for c in order:
        if c.sps_id not in taken and spent + c.reward <= budget:
            chosen.append(c)
            spent += c.reward
    return chosen


def select_participants(
    candidates: Sequence[Candidate], budget: float, deadline: float
) -> SelectionResult:
    """Greedy quality-per-reward selection under a reward budget and a deadline.

    Candidates slower than ``deadline`` are dropped. The rest are ranked by
    descending ``phi / reward`` (ties to the lower id) and admitted while the
    budget allows. The scan is repeated from every small seed set (each
    single candidate, and each pair when the pool is small) and the best
    fill wins, with ties kept by the earliest seed. Seeding with singles
    alone already guarantees half the optimum.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    feasible = [c for c in candidates if c.t_total <= deadline and c.reward <= budget]
    for c in feasible:
        if c.reward <= 0:
            raise ValueError(f"candidate {c.sps_id} has non-positive reward")
    order = sorted(feasible, key=lambda c: (-c.phi / c.reward, c.sps_id))
    seeds: list[tuple[Candidate, ...]] = [()] + [(c,) for c in order]
    if len(order) <= PAIR_SEED_LIMIT:
        seeds += [
            (a, b)
            for i, a in enumerate(order)
            for b in order[i + 1 :]
            if a.reward + b.reward <= budget
        ]
    chosen: list[Candidate] = []
    best = -1.0
    for seed in seeds:
        fill = _fill(seed, order, budget)
        value = math.fsum(c.phi for c in fill)
        if value > best:
            best, chosen = value, fill
    chosen.sort(key=lambda c: c.sps_id)
    ids = tuple(c.sps_id for c in chosen)
    return SelectionResult(
        selected=ids,
        indicator={c.sps_id: int(c.sps_id in ids) for c in candidates},
        objective=float(math.fsum(c.phi for c in chosen)),
        total_reward=float(math.fsum(c.reward for c in chosen)),
        deadline_used=max((c.t_total for c in chosen), default=0.0),
        rewards={c.sps_id: c.reward for c in chosen},
    )


def verify_monotonicity(menu: ContractMenu) -> list[Violation]:
    """Pairs (m, m') with m < m' whose rewards decrease with type."""
    out = []
    items = menu.items
    for i, a in enumerate(items):
        for b in items[i + 1 :]:
            if b.reward < a.reward:
                out.append(Violation("monotonicity", a.type_index, b.type_index))
    return out


def _utility(theta: float, reward: float, cost: float) -> float:
    if theta * reward <= 0:
        raise ValueError(f"theta * reward must be positive, got {theta * reward}")
    return math.log(theta * reward) - cost


def verify_ldic_luic(menu: ContractMenu, tol: float = 0.0) -> list[Violation]:
    """Adjacent-type incentive-compatibility checks.

    Downward: type m prefers its own item to item m-1 when evaluated with its
    own theta. Upward: the utility of item m stays below that of item m+1
    evaluated with theta_m.
    """
    items = menu.items
    if len(items) < 2:
        raise ValueError("LDIC/LUIC checks need at least two menu items")
    for it in items:
        if it.theta * it.reward <= 0:
            raise ValueError(f"type {it.type_index}: theta * reward must be positive")
    out = []
    for prev, cur in zip(items, items[1:]):
        own = _utility(cur.theta, cur.reward, cur.cost)
        down = _utility(cur.theta, prev.reward, prev.cost)
        if own < down - tol:
            out.append(Violation("LDIC", prev.type_index, cur.type_index))
    for cur, nxt in zip(items, items[1:]):
        own = _utility(cur.theta, cur.reward, cur.cost)
        up = _utility(cur.theta, nxt.reward, nxt.cost)
        if own > up + tol:
            out.append(Violation("LUIC", cur.type_index, nxt.type_index))
    return out


def ir_menu(thetas: Sequence[float], costs: Sequence[float]) -> ContractMenu:
    """Menu whose rewards sit exactly on each type's participation floor."""
    return ContractMenu(
        tuple(
            ContractItem(i + 1, t, min_feasible_reward(t, c), c)
            for i, (t, c) in enumerate(zip(thetas, costs))
        )
    )
