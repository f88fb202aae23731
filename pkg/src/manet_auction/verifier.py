"""Independent checks for the auction tables.

Nothing here reuses the closed-form payment code path: incentive
compatibility is checked by enumerating every misreport, payments are
recomputed as longest paths in the constraint graph, and monotonicity is
checked pairwise.  Random type-space generators used by the property suites
also live here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .mechanism import MechanismTables, build_tables, dominates, payments_for_allocation, check_monotone_hazard
from .typespace import AgentType, TypeSpace

EXACT_TOL = 1e-12
INEQ_TOL = 1e-9


class NonMonotoneAllocationError(ValueError):
    pass


@dataclass
class ICReport:
    """Outcome of the exhaustive misreport check.

    ``violations`` holds ``(true_type, reported_type, truthful_utility,
    deviant_utility)``; IR failures use ``reported_type=None`` and a deviant
    utility of 0.  ``overreport_flags`` lists combined (cost changed, duration
    over-reported) deviations that would fail if the over-reporter were paid
    ``c * a`` at its *true* type; they do not affect ``passed``.
    """

    violations: list = field(default_factory=list)
    max_violation_magnitude: float = 0.0
    passed: bool = True
    utility: np.ndarray | None = None
    overreport_flags: list = field(default_factory=list)

    @property
    def ic_violations(self):
        return [v for v in self.violations if v[1] is not None]

    @property
    def ir_violations(self):
        return [v for v in self.violations if v[1] is None]

    def to_dict(self) -> dict:
        def fmt(t):
            return None if t is None else [t.cost, t.duration_bin]

        return {
            "passed": self.passed,
            "max_violation_magnitude": self.max_violation_magnitude,
            "violations": [
                {"true": fmt(a), "reported": fmt(b), "truthful_utility": u, "deviant_utility": v}
                for a, b, u, v in self.violations
            ],
            "overreport_flags": len(self.overreport_flags),
        }


def _deviation_utilities(cost_grid, a: np.ndarray, p: np.ndarray):
    """Expected utility of every (true -> reported) pair, shape ``(nc, nb, nc, nb)``.

    Reports that over-state the duration are found out when the route breaks
    early and are reimbursed the expected cost instead of ``p``.  Pure duration
    over-reports use the displayed ``c * (a[true] - a[reported])``; when the
    cost is misreported as well the reimbursement covers the expected cost at
    the reported allocation, leaving utility 0.
    """
    costs = np.asarray(cost_grid, float)
    nc, nb = a.shape
    c = costs[:, None, None, None]
    dev = np.broadcast_to(p[None, None, :, :] - c * a[None, None, :, :], (nc, nb, nc, nb))
    j = np.arange(nb)[None, :, None, None]
    m = np.arange(nb)[None, None, None, :]
    over = np.broadcast_to(m > j, dev.shape)
    same_cost = np.broadcast_to(
        np.arange(nc)[:, None, None, None] == np.arange(nc)[None, None, :, None], dev.shape
    )
    literal = c * (a[:, :, None, None] - a[None, None, :, :])
    dev = np.where(over & same_cost, literal, dev)
    dev = np.where(over & ~same_cost, 0.0, dev)
    return dev, np.where(over & ~same_cost, literal, -np.inf)


def ic_report(cost_grid, a: np.ndarray, p: np.ndarray, tol: float = INEQ_TOL, pairs=None) -> ICReport:
    cost_grid = tuple(cost_grid)
    a = np.asarray(a, float)
    p = np.asarray(p, float)
    nc, nb = a.shape
    costs = np.asarray(cost_grid, float)
    u = p - costs[:, None] * a
    dev, flagged = _deviation_utilities(cost_grid, a, p)
    report = ICReport(utility=u)
    worst = 0.0
    for i in range(nc):
        for j in range(nb):
            true_t = AgentType(cost_grid[i], j)
            if u[i, j] < -tol:
                report.violations.append((true_t, None, float(u[i, j]), 0.0))
                worst = max(worst, -u[i, j])
            excess = dev[i, j] - u[i, j]
            excess[i, j] = -np.inf
            if pairs is not None:
                mask = np.zeros_like(excess, dtype=bool)
                for k, m in pairs(i, j, nc, nb):
                    mask[k, m] = True
                excess = np.where(mask, excess, -np.inf)
            for k, m in zip(*np.nonzero(excess > tol)):
                report.violations.append(
                    (true_t, AgentType(cost_grid[k], int(m)), float(u[i, j]), float(dev[i, j, k, m]))
                )
                worst = max(worst, float(excess[k, m]))
            if pairs is None:
                for k, m in zip(*np.nonzero(flagged[i, j] - u[i, j] > tol)):
                    report.overreport_flags.append((true_t, AgentType(cost_grid[k], int(m))))
    report.max_violation_magnitude = float(worst)
    report.passed = not report.violations
    return report


def brute_force_ic_check(tables: MechanismTables, tol: float = INEQ_TOL) -> ICReport:
    """Check IR for every type and IC for every ordered pair of distinct types."""
    return ic_report(tables.type_space.cost_grid, tables.a, tables.p, tol)


def _adjacent_pairs(i, j, nc, nb):
    if i + 1 < nc:
        yield i + 1, j
    if i > 0:
        yield i - 1, j
    if j > 0:
        yield i, j - 1


def adjacent_report(cost_grid, a, p, tol: float = INEQ_TOL) -> ICReport:
    """IR plus the three adjacent misreport families (cost up, cost down, duration down)."""
    return ic_report(cost_grid, a, p, tol, pairs=_adjacent_pairs)


def check_adjacent_implies_all(tables: MechanismTables, tol: float = INEQ_TOL) -> bool:
    """Consistency of the adjacent-constraint reduction on these tables.

    Returns ``False`` only if the adjacent constraints hold while some
    non-adjacent misreport still pays off.
    """
    cost_grid = tables.type_space.cost_grid
    adjacent_ok = adjacent_report(cost_grid, tables.a, tables.p, tol).passed
    full_ok = ic_report(cost_grid, tables.a, tables.p, tol).passed
    return full_ok or not adjacent_ok


# -- monotonicity --------------------------------------------------------------


def allocation_violations(cost_grid, a: np.ndarray, tol: float = EXACT_TOL):
    nc, nb = a.shape
    out = []
    for i in range(nc):
        for j in range(nb):
            for k in range(i, nc):
                for m in range(j + 1):
                    if dominates(i, j, k, m) and a[i, j] < a[k, m] - tol:
                        out.append((AgentType(cost_grid[i], j), AgentType(cost_grid[k], m)))
    return out


def check_allocation_monotonic(tables_or_a, cost_grid=None, tol: float = EXACT_TOL):
    """``(ok, violations)``; a dominating type must never be allocated less."""
    if isinstance(tables_or_a, MechanismTables):
        a = tables_or_a.a
        cost_grid = tables_or_a.type_space.cost_grid
    else:
        a = np.asarray(tables_or_a, float)
        if cost_grid is None:
            cost_grid = tuple(range(1, a.shape[0] + 1))
    violations = allocation_violations(cost_grid, a, tol)
    return not violations, violations


# -- longest-path payment oracle -----------------------------------------------

DUMMY = "dummy"


@dataclass
class ConstraintGraph:
    """Types as vertices, one edge per retained incentive constraint.

    An edge ``u -> v`` of length ``L`` encodes ``p[v] >= p[u] + L``.
    """

    cost_grid: tuple
    shape: tuple
    edges: list

    @classmethod
    def build(cls, cost_grid, a: np.ndarray, include_downward: bool = False) -> "ConstraintGraph":
        costs = list(cost_grid)
        nc, nb = a.shape
        edges = [(DUMMY, (nc - 1, 0), costs[-1] * a[nc - 1, 0])]
        for j in range(nb):
            for i in range(nc):
                c = costs[i]
                if i + 1 < nc:
                    # (c,d) must not gain by reporting the next cost up
                    edges.append(((i + 1, j), (i, j), c * (a[i, j] - a[i + 1, j])))
                if include_downward and i > 0:
                    edges.append(((i - 1, j), (i, j), c * (a[i, j] - a[i - 1, j])))
                if j > 0:
                    edges.append(((i, j - 1), (i, j), c * (a[i, j] - a[i, j - 1])))
        return cls(tuple(costs), (nc, nb), edges)

    def vertices(self):
        nc, nb = self.shape
        # descending cost within ascending duration is a topological order when
        # only upward-cost edges are present
        return [DUMMY] + [(i, j) for j in range(nb) for i in reversed(range(nc))]

    def neighbour_cycle_lengths(self, a: np.ndarray) -> np.ndarray:
        """Length of each two-cycle between cost neighbours, ``a[c+1] - a[c]`` on unit grids."""
        costs = np.asarray(self.cost_grid, float)[:, None]
        return costs[:-1] * (a[:-1] - a[1:]) + costs[1:] * (a[1:] - a[:-1])

    def longest_paths(self, tol: float = INEQ_TOL) -> dict:
        order = {v: k for k, v in enumerate(self.vertices())}
        edges = sorted(self.edges, key=lambda e: (order[e[0]], order[e[1]]))
        dist = {v: -math.inf for v in order}
        dist[DUMMY] = 0.0
        for _ in range(len(order)):
            changed = False
            for u, v, length in edges:
                if dist[u] > -math.inf and dist[u] + length > dist[v]:
                    dist[v] = dist[u] + length
                    changed = True
            if not changed:
                break
        for u, v, length in edges:
            if dist[u] + length > dist[v] + tol:
                raise NonMonotoneAllocationError("non-monotone allocation: positive cycle in constraint graph")
        return dist


def longest_path_payments(cost_grid, a: np.ndarray, include_downward: bool = False, tol: float = INEQ_TOL) -> np.ndarray:
    a = np.asarray(a, float)
    g = ConstraintGraph.build(cost_grid, a, include_downward)
    cyc = g.neighbour_cycle_lengths(a)
    if cyc.size and cyc.max() > tol:
        raise NonMonotoneAllocationError("non-monotone allocation: positive cycle between cost neighbours")
    dist = g.longest_paths(tol)
    out = np.empty(a.shape)
    for (i, j), val in ((v, d) for v, d in dist.items() if v != DUMMY):
        out[i, j] = val
    return out


def longest_path_payment_oracle(tables: MechanismTables, include_downward: bool = False) -> np.ndarray:
    """Minimal payments satisfying the retained constraints, as longest paths from the dummy type."""
    return longest_path_payments(tables.type_space.cost_grid, tables.a, include_downward)


# -- monotone <=> IC -----------------------------------------------------------


def random_monotone_allocation(rng: np.random.Generator, shape) -> np.ndarray:
    """Random ``a`` non-increasing in cost and non-decreasing in duration."""
    raw = rng.random(shape)
    # a[i,j] = max over (k >= i, m <= j)
    a = np.maximum.accumulate(raw, axis=1)
    a = np.maximum.accumulate(a[::-1], axis=0)[::-1]
    return a


def invert_cost_pair(rng: np.random.Generator, a: np.ndarray) -> np.ndarray:
    """Break monotonicity by making some higher cost strictly more likely to win."""
    nc, nb = a.shape
    if nc < 2:
        raise ValueError("need at least two costs to invert")
    out = a.copy()
    i = int(rng.integers(nc - 1))
    j = int(rng.integers(nb))
    bump = 0.05 + 0.3 * rng.random()
    if out[i, j] + bump <= 1.0:
        out[i + 1, j] = out[i, j] + bump
    else:
        out[i, j] = max(0.0, out[i + 1, j] - bump)
    return out


def check_monotone_iff_ic(ts: TypeSpace, n: int, samples: int = 20, rng: np.random.Generator | None = None) -> bool:
    """Sampled check that monotone allocations are IC under closed-form payments and non-monotone ones are not."""
    rng = np.random.default_rng(0) if rng is None else rng
    costs = ts.cost_grid
    forward = [random_monotone_allocation(rng, ts.shape) for _ in range(samples)]
    forward.append(np.full(ts.shape, 0.5))
    tables = build_tables(ts, n)
    if tables.monotone_hazard:
        forward.append(tables.a)
    for a in forward:
        if not check_allocation_monotonic(a, costs)[0]:
            return False
        if not ic_report(costs, a, payments_for_allocation(costs, a)).passed:
            return False
    if ts.num_costs < 2:
        return True
    for _ in range(samples):
        a = invert_cost_pair(rng, random_monotone_allocation(rng, ts.shape))
        if check_allocation_monotonic(a, costs)[0]:
            continue
        if ic_report(costs, a, payments_for_allocation(costs, a)).passed:
            return False
    return True


def ic_u_binding_gap(tables: MechanismTables) -> float:
    """Largest ``|p[c] - p[c+1] - c (a[c] - a[c+1])|`` over adjacent costs."""
    costs = np.asarray(tables.type_space.cost_grid, float)[:, None]
    if tables.a.shape[0] < 2:
        return 0.0
    lhs = tables.p[:-1] - tables.p[1:]
    rhs = costs[:-1] * (tables.a[:-1] - tables.a[1:])
    return float(np.max(np.abs(lhs - rhs)))


# -- Monte-Carlo consistency ---------------------------------------------------


@dataclass(frozen=True)
class MonteCarloEstimate:
    win_rate: float
    win_se: float
    mean_payment: float
    payment_se: float
    trials: int


def monte_carlo_auction(tables: MechanismTables, t: AgentType, trials: int, rng: np.random.Generator) -> MonteCarloEstimate:
    """Simulate auctions with bidder 0 fixed at ``t`` and ``n - 1`` i.i.d. opponents."""
    ts = tables.type_space
    i, j = ts.index(t)
    flat_levels = tables.vv_level.ravel()
    probs = ts.pmf.ravel() / ts.pmf.sum()
    m = tables.n_bidders - 1
    draws = rng.choice(flat_levels.size, size=(trials, m), p=probs)
    opp_levels = flat_levels[draws]
    tie_u = rng.random(trials)
    wins = kernels.mc_wins(int(tables.vv_level[i, j]), opp_levels, tie_u).astype(float)
    pay = wins * (tables.p[i, j] / tables.a[i, j])
    return MonteCarloEstimate(
        win_rate=float(wins.mean()),
        win_se=float(wins.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        mean_payment=float(pay.mean()),
        payment_se=float(pay.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        trials=trials,
    )


# -- random type spaces --------------------------------------------------------

_K = 64


def _rational_weights(rng, size, low=1, high=_K):
    w = [int(v) for v in rng.integers(low, high + 1, size=size)]
    total = sum(w)
    return [Fraction(v, total) for v in w]


def _duration_bounds(nb):
    return [10.0 * j for j in range(nb + 1)]


def random_type_space(rng: np.random.Generator, max_costs: int = 8, max_bins: int = 8, kind: str | None = None) -> TypeSpace:
    """Random monotone-hazard space with rational (``k/64``-style) probabilities.

    ``kind`` selects the construction: ``uniform``, ``descending`` (non-increasing
    cost pmf), ``rejection`` (arbitrary pmf kept only if monotone-hazard) or
    ``correlated`` (cost hazards that vary with the duration bin).
    """
    nc = int(rng.integers(1, max_costs + 1))
    nb = int(rng.integers(1, max_bins + 1))
    c0 = int(rng.integers(0, 4))
    costs = list(range(c0, c0 + nc))
    kind = kind or ("uniform", "descending", "rejection", "correlated")[int(rng.integers(4))]
    fd = _rational_weights(rng, nb)
    if kind == "uniform":
        return TypeSpace.independent(costs, [Fraction(1, nc)] * nc, _duration_bounds(nb), fd)
    if kind == "descending":
        fc = sorted(_rational_weights(rng, nc), reverse=True)
        return TypeSpace.independent(costs, fc, _duration_bounds(nb), fd)
    if kind == "rejection":
        for _ in range(200):
            ts = TypeSpace.independent(costs, _rational_weights(rng, nc), _duration_bounds(nb), fd)
            if check_monotone_hazard(ts)[0]:
                return ts
        return random_type_space(rng, max_costs, max_bins, "descending")
    if kind == "correlated":
        return _correlated_space(rng, costs, nb, fd)
    raise ValueError(f"unknown kind {kind!r}")


def _correlated_space(rng, costs, nb, fd) -> TypeSpace:
    nc = len(costs)
    raw = rng.integers(1, _K, size=(nc, nb))
    hz = [[Fraction(1)] * nb for _ in range(nc)]
    for i in range(1, nc):
        for j in range(nb):
            # min over rows 1..i and bins j..end: falls with cost, rises with duration
            hz[i][j] = Fraction(int(raw[1 : i + 1, j:].min()), _K)
    cols = []
    for j in range(nb):
        cdf = [Fraction(0)] * nc
        cdf[-1] = Fraction(1)
        for i in range(nc - 1, 0, -1):
            cdf[i - 1] = cdf[i] * (1 - hz[i][j])
        cols.append([hz[i][j] * cdf[i] for i in range(nc)])
    joint = tuple(tuple(cols[j][i] * fd[j] for j in range(nb)) for i in range(nc))
    return TypeSpace(costs, _duration_bounds(nb), None, False, joint)


def random_non_mhr_space(rng: np.random.Generator, max_costs: int = 8, max_bins: int = 4) -> TypeSpace:
    """Independent space whose cost pmf dips, so the hazard is not monotone."""
    nc = int(rng.integers(3, max(3, max_costs) + 1))
    nb = int(rng.integers(1, max_bins + 1))
    costs = list(range(1, nc + 1))
    while True:
        w = [int(v) for v in rng.integers(1, _K + 1, size=nc)]
        k = int(rng.integers(1, nc - 1))
        w[k] = 1
        w[k + 1] = max(w[k + 1], 32)
        total = sum(w)
        ts = TypeSpace.independent(costs, [Fraction(v, total) for v in w], _duration_bounds(nb), _rational_weights(rng, nb))
        if not check_monotone_hazard(ts)[0]:
            return ts
