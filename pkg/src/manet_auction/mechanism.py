"""Optimal multi-dimensional auction over (cost, path-duration) types.

Bidders are routes.  Each declares a type on a :class:`TypeSpace` grid; the
auctioneer awards the route with the lowest virtual valuation and pays it
according to the longest-path optimal payment rule.  Tables of virtual
valuations, expected allocations and interim payments depend only on the
type space and the number of bidders, so they are computed once and cached
by callers.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .typespace import AgentType, TypeSpace

VV_REL_TOL = 1e-12


class MechanismError(ValueError):
    pass


class NonMonotoneHazardWarning(UserWarning):
    pass


def _conditional_density(ts: TypeSpace, i: int, j: int) -> float:
    f = ts.conditional()[i, j]
    if f <= 0:
        raise MechanismError(f"unsupported type (cost={ts.cost_grid[i]}, bin={j}): zero conditional density")
    return float(f)


def _lower_mass(ts: TypeSpace) -> np.ndarray:
    # 1 - F_{c,d}, i.e. conditional mass at or below c; cumsum avoids cancellation
    return np.cumsum(ts.conditional(), axis=0)


def hazard_rate(ts: TypeSpace, t: AgentType) -> float:
    """``f(c|d) / (1 - F_{c,d})`` with ``F`` the conditional mass above ``c``."""
    i, j = ts.index(t)
    f = _conditional_density(ts, i, j)
    return f / float(_lower_mass(ts)[i, j])


def hazard_matrix(ts: TypeSpace) -> np.ndarray:
    return ts.conditional() / _lower_mass(ts)


def _exact_hazards(ts: TypeSpace) -> list[list[Fraction]] | None:
    cond = ts.exact_conditional()
    if cond is None:
        return None
    out = []
    running = [Fraction(0)] * ts.num_bins
    for row in cond:
        running = [r + v for r, v in zip(running, row)]
        out.append([v / r for v, r in zip(row, running)])
    return out


def _adjacent_hazards_ok(h: np.ndarray, exact) -> bool:
    nc, nb = h.shape
    for i in range(nc):
        for j in range(nb):
            for k, m in ((i + 1, j), (i, j - 1)):
                if k >= nc or m < 0:
                    continue
                if exact is not None:
                    if exact[i][j] < exact[k][m]:
                        return False
                elif h[i, j] < h[k, m] - VV_REL_TOL * max(1.0, abs(h[k, m])):
                    return False
    return True


def dominates(ci: int, di: int, cj: int, dj: int) -> bool:
    """``(ci, di)`` is partially ordered above ``(cj, dj)``: cheaper-or-equal and longer-or-equal, not equal."""
    return ci <= cj and di >= dj and (ci, di) != (cj, dj)


def check_monotone_hazard(ts: TypeSpace) -> tuple[bool, list[tuple[AgentType, AgentType]]]:
    """Check the monotone hazard rate condition over every ordered pair of types.

    Returns ``(ok, violations)`` where each violation is ``(upper, lower)``
    with ``upper`` dominating ``lower`` but having a strictly smaller hazard.
    """
    exact = _exact_hazards(ts)
    h = hazard_matrix(ts)
    nc, nb = ts.shape
    # the order is generated by adjacent steps, so adjacent pairs decide the answer
    if _adjacent_hazards_ok(h, exact):
        return True, []
    violations = []
    for i in range(nc):
        for j in range(nb):
            for k in range(i, nc):
                for m in range(0, j + 1):
                    if (k, m) == (i, j):
                        continue
                    if exact is not None:
                        bad = exact[i][j] < exact[k][m]
                    else:
                        bad = h[i, j] < h[k, m] - VV_REL_TOL * max(1.0, abs(h[k, m]))
                    if bad:
                        violations.append(
                            (AgentType(ts.cost_grid[i], j), AgentType(ts.cost_grid[k], m))
                        )
    return not violations, violations


def virtual_valuation(ts: TypeSpace, t: AgentType) -> float:
    """``c + (1 - F_{c,d}) / f(c|d)``."""
    i, j = ts.index(t)
    f = _conditional_density(ts, i, j)
    return ts.cost_grid[i] + float(_lower_mass(ts)[i, j]) / f


def virtual_valuation_matrix(ts: TypeSpace) -> np.ndarray:
    costs = np.asarray(ts.cost_grid, float)[:, None]
    return costs + _lower_mass(ts) / ts.conditional()


def _vv_levels(ts: TypeSpace, vv: np.ndarray) -> np.ndarray:
    """Rank types by virtual valuation; equal rank means a tie."""
    exact = _exact_hazards(ts)
    if exact is not None:
        values = {}
        for i, c in enumerate(ts.cost_grid):
            for j in range(ts.num_bins):
                values[(i, j)] = c + 1 / exact[i][j]
        ordered = sorted(set(values.values()))
        rank = {v: r for r, v in enumerate(ordered)}
        levels = np.empty(ts.shape, dtype=np.int64)
        for (i, j), v in values.items():
            levels[i, j] = rank[v]
        return levels
    flat = vv.ravel()
    order = np.argsort(flat, kind="stable")
    levels = np.empty(flat.shape, dtype=np.int64)
    level = 0
    anchor = flat[order[0]]
    for pos, idx in enumerate(order):
        v = flat[idx]
        if pos and v - anchor > VV_REL_TOL * max(1.0, abs(anchor)):
            level += 1
            anchor = v
        levels[idx] = level
    return levels.reshape(vv.shape)


def _win_probability(q_above: float, q_tie: float, n: int) -> float:
    # beat every opponent, splitting ties uniformly
    return sum(
        math.comb(n - 1, j) * q_tie**j * q_above ** (n - 1 - j) / (j + 1) for j in range(n)
    )


def allocation_from_levels(pmf: np.ndarray, levels: np.ndarray, n: int) -> np.ndarray:
    if n < 1:
        raise MechanismError("number of bidders must be >= 1")
    nlev = int(levels.max()) + 1
    mass = np.bincount(levels.ravel(), weights=pmf.ravel(), minlength=nlev)
    above = np.concatenate([np.cumsum(mass[::-1])[::-1][1:], [0.0]])
    per_level = np.array([_win_probability(above[l], mass[l], n) for l in range(nlev)])
    return np.clip(per_level[levels], 0.0, 1.0)


def expected_allocation(ts: TypeSpace, n: int, t: AgentType) -> float:
    """Probability that a bidder of type ``t`` wins against ``n - 1`` i.i.d. opponents."""
    if n < 1:
        raise MechanismError("number of bidders must be >= 1")
    i, j = ts.index(t)
    ok, _ = check_monotone_hazard(ts)
    if not ok:
        warnings.warn("type space violates the monotone hazard rate condition", NonMonotoneHazardWarning)
    levels = _vv_levels(ts, virtual_valuation_matrix(ts))
    return float(allocation_from_levels(ts.pmf, levels, n)[i, j])


def payments_for_allocation(cost_grid: Sequence[int], a: np.ndarray) -> np.ndarray:
    """Closed-form optimal payments for a (monotone) allocation matrix.

    ``p[c,d] = c*a[c,d] + sum_{k>c} (c_k - c_{k-1}) * a[k,d]``; on a unit-spaced
    cost grid the weights are all one.
    """
    a = np.asarray(a, float)
    costs = np.asarray(cost_grid, float)
    gaps = np.diff(costs)[:, None] * a[1:]
    tail = np.zeros_like(a)
    tail[:-1] = np.cumsum(gaps[::-1], axis=0)[::-1]
    return costs[:, None] * a + tail


@dataclass(frozen=True, eq=False)
class MechanismTables:
    type_space: TypeSpace
    n_bidders: int
    vv: np.ndarray
    vv_level: np.ndarray
    a: np.ndarray
    p: np.ndarray
    monotone_hazard: bool

    def __post_init__(self):
        for arr in (self.vv, self.vv_level, self.a, self.p):
            arr.setflags(write=False)

    def lookup(self, t: AgentType) -> tuple[float, float, float]:
        i, j = self.type_space.index(t)
        return float(self.vv[i, j]), float(self.a[i, j]), float(self.p[i, j])

    @property
    def utility(self) -> np.ndarray:
        """Interim expected utility ``p - c*a`` of truthful reporting."""
        costs = np.asarray(self.type_space.cost_grid, float)[:, None]
        return self.p - costs * self.a


def optimal_payment(tables: MechanismTables, t: AgentType) -> float:
    i, j = tables.type_space.index(t)
    return float(payments_for_allocation(tables.type_space.cost_grid, tables.a)[i, j])


def build_tables(ts: TypeSpace, n: int) -> MechanismTables:
    if n < 1:
        raise MechanismError("number of bidders must be >= 1")
    ok, _ = check_monotone_hazard(ts)
    if not ok:
        warnings.warn("type space violates the monotone hazard rate condition", NonMonotoneHazardWarning)
    vv = virtual_valuation_matrix(ts)
    levels = _vv_levels(ts, vv)
    a = allocation_from_levels(ts.pmf, levels, n)
    p = payments_for_allocation(ts.cost_grid, a)
    return MechanismTables(ts, n, vv, levels, a, p, ok)


@dataclass(frozen=True)
class Bid:
    bidder_id: object
    declared: AgentType


@dataclass(frozen=True)
class AuctionOutcome:
    winner: object | None
    realized_payment: float
    winner_interim_payment: float
    tie_broken: bool
    winner_type: AgentType | None = None
    winner_allocation: float = 0.0


def realized_payment(tables: MechanismTables, t: AgentType) -> float:
    """Winner-only payment whose expectation over profiles is ``p[c,d]``.

    Equals ``c + sum_{k>c} a[k,d] / a[c,d]`` (gap-weighted), i.e. ``p / a``.
    """
    _, a, p = tables.lookup(t)
    if a <= 0:
        raise MechanismError(f"zero-measure winner {t}")
    return p / a


def run_auction(bids: Sequence[Bid], tables: MechanismTables, rng: np.random.Generator) -> AuctionOutcome:
    """Award the minimum-virtual-valuation bid; ties are broken uniformly with ``rng``."""
    if not bids:
        raise MechanismError("empty bid list")
    if len(bids) != tables.n_bidders:
        raise MechanismError(f"tables built for {tables.n_bidders} bidders, got {len(bids)} bids")
    ts = tables.type_space
    levels = []
    for b in bids:
        if not ts.contains(b.declared):
            raise MechanismError(f"declared type {b.declared} is not on the grid")
        levels.append(int(tables.vv_level[ts.index(b.declared)]))
    best = min(levels)
    tied = [k for k, lv in enumerate(levels) if lv == best]
    pick = tied[int(rng.integers(len(tied)))] if len(tied) > 1 else tied[0]
    winner = bids[pick]
    _, a, p = tables.lookup(winner.declared)
    return AuctionOutcome(
        winner=winner.bidder_id,
        realized_payment=realized_payment(tables, winner.declared),
        winner_interim_payment=p,
        tie_broken=len(tied) > 1,
        winner_type=winner.declared,
        winner_allocation=a,
    )
