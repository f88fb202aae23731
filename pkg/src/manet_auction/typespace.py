"""Discrete (cost, duration-bin) type spaces and their JSON serialization.

A type space is a grid of integer route costs crossed with duration bins,
carrying a joint pmf.  Probabilities may be supplied as ``Fraction``s, in
which case the exact values are kept alongside the float matrix so that
virtual valuations can be compared without rounding.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

PMF_SUM_TOL = 1e-12


class TypeSpaceError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class AgentType:
    """A bidder's private type: route cost and duration-bin index."""

    cost: int
    duration_bin: int


def _as_fraction(x) -> Fraction | None:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    return None


@dataclass(frozen=True, eq=False)
class TypeSpace:
    """Grid of types with a joint pmf of shape ``(len(cost_grid), num_bins)``.

    ``duration_grid`` holds ``num_bins + 1`` strictly increasing boundaries;
    bin ``j`` covers ``[duration_grid[j], duration_grid[j+1])``.  The last
    boundary may be ``inf``.
    """

    cost_grid: tuple[int, ...]
    duration_grid: tuple[float, ...]
    pmf: np.ndarray
    independence: bool = False
    exact_pmf: tuple[tuple[Fraction, ...], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        costs = tuple(int(c) for c in self.cost_grid)
        bounds = tuple(float(b) for b in self.duration_grid)
        object.__setattr__(self, "cost_grid", costs)
        object.__setattr__(self, "duration_grid", bounds)
        if not costs:
            raise TypeSpaceError("cost_grid is empty")
        if any(b <= a for a, b in zip(costs, costs[1:])):
            raise TypeSpaceError("cost_grid must be strictly increasing")
        if costs[0] < 0:
            raise TypeSpaceError("costs must be nonnegative")
        if len(bounds) < 2:
            raise TypeSpaceError("duration_grid needs at least two boundaries")
        if any(b <= a for a, b in zip(bounds, bounds[1:])):
            raise TypeSpaceError("duration_grid boundaries must be strictly increasing")

        raw = self.pmf
        shape = (len(costs), len(bounds) - 1)
        exact = self.exact_pmf
        if exact is None and raw is not None and not (isinstance(raw, np.ndarray) and raw.dtype != object):
            fr = [[_as_fraction(v) for v in row] for row in raw]
            if all(v is not None for row in fr for v in row):
                exact = tuple(tuple(row) for row in fr)
        if exact is not None:
            exact = tuple(tuple(Fraction(v) for v in row) for row in exact)
            arr = np.array([[float(v) for v in row] for row in exact], dtype=float)
        else:
            arr = np.array(raw, dtype=float)
        if arr.shape != shape:
            raise TypeSpaceError(f"pmf shape {arr.shape} does not match grid {shape}")
        if np.any(arr < 0):
            raise TypeSpaceError("pmf entries must be nonnegative")
        if exact is not None:
            if sum(v for row in exact for v in row) != 1:
                raise TypeSpaceError("pmf entries must sum to 1")
        elif abs(arr.sum() - 1.0) > PMF_SUM_TOL:
            raise TypeSpaceError(f"pmf entries sum to {arr.sum()!r}, not 1")
        if np.any(arr == 0):
            # conditional density must be positive wherever vv is evaluated
            raise TypeSpaceError("structural zeros are not supported in the type grid")
        if self.independence:
            outer = np.outer(arr.sum(axis=1), arr.sum(axis=0))
            if exact is not None:
                rm = [sum(row) for row in exact]
                cm = [sum(col) for col in zip(*exact)]
                ok = all(exact[i][j] == rm[i] * cm[j] for i in range(shape[0]) for j in range(shape[1]))
            else:
                ok = np.allclose(arr, outer, rtol=0, atol=1e-15)
            if not ok:
                raise TypeSpaceError("independence flag set but pmf does not factorize")
        arr.setflags(write=False)
        object.__setattr__(self, "pmf", arr)
        object.__setattr__(self, "exact_pmf", exact)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def independent(cls, cost_grid, cost_pmf, duration_grid, duration_pmf) -> "TypeSpace":
        """Build ``f_c x f_d``; exact if both marginals are rational."""
        fc = [_as_fraction(v) for v in cost_pmf]
        fd = [_as_fraction(v) for v in duration_pmf]
        if all(v is not None for v in fc + fd):
            joint = tuple(tuple(a * b for b in fd) for a in fc)
            return cls(cost_grid, duration_grid, None, True, joint)
        joint = np.outer(np.asarray(cost_pmf, float), np.asarray(duration_pmf, float))
        joint = joint / joint.sum()
        return cls(cost_grid, duration_grid, joint, True)

    # -- shape / lookup -------------------------------------------------------

    @property
    def num_costs(self) -> int:
        return len(self.cost_grid)

    @property
    def num_bins(self) -> int:
        return len(self.duration_grid) - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_costs, self.num_bins

    @property
    def c_min(self) -> int:
        return self.cost_grid[0]

    @property
    def c_max(self) -> int:
        return self.cost_grid[-1]

    def types(self):
        for c in self.cost_grid:
            for j in range(self.num_bins):
                yield AgentType(c, j)

    def cost_index(self, cost: int) -> int:
        try:
            return self.cost_grid.index(int(cost))
        except ValueError:
            raise TypeSpaceError(f"cost {cost} not on grid {self.cost_grid}") from None

    def index(self, t: AgentType) -> tuple[int, int]:
        if not 0 <= t.duration_bin < self.num_bins:
            raise TypeSpaceError(f"duration bin {t.duration_bin} outside [0, {self.num_bins})")
        return self.cost_index(t.cost), t.duration_bin

    def contains(self, t: AgentType) -> bool:
        return t.cost in self.cost_grid and 0 <= t.duration_bin < self.num_bins

    def bin_of(self, seconds: float) -> int:
        """Bin index for a duration; values past the last boundary go to the top bin."""
        if seconds < self.duration_grid[0]:
            return 0
        j = int(np.searchsorted(self.duration_grid, seconds, side="right")) - 1
        return min(j, self.num_bins - 1)

    def nearest_cost(self, cost: float) -> int:
        grid = np.asarray(self.cost_grid)
        return int(grid[np.argmin(np.abs(grid - cost))])

    # -- marginals and conditionals ------------------------------------------

    @property
    def cost_marginal(self) -> np.ndarray:
        return self.pmf.sum(axis=1)

    @property
    def duration_marginal(self) -> np.ndarray:
        return self.pmf.sum(axis=0)

    def conditional(self) -> np.ndarray:
        """``f(c|d)`` as a matrix; columns sum to one."""
        return self.pmf / self.pmf.sum(axis=0, keepdims=True)

    def exact_conditional(self) -> list[list[Fraction]] | None:
        if self.exact_pmf is None:
            return None
        col = [sum(c) for c in zip(*self.exact_pmf)]
        return [[v / col[j] for j, v in enumerate(row)] for row in self.exact_pmf]

    def upper_tail(self) -> np.ndarray:
        """``F_{c,d}``: conditional mass strictly above cost ``c`` at bin ``d``."""
        cond = self.conditional()
        tail = np.zeros_like(cond)
        tail[:-1] = np.cumsum(cond[::-1], axis=0)[::-1][1:]
        return tail

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]


# -- serialization -------------------------------------------------------------


def _fraction_str(v: Fraction) -> str:
    """Decimal string when the fraction terminates, else ``p/q``."""
    den = v.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{v.numerator}/{v.denominator}"
    places = max(twos, fives)
    scaled = v * 10**places
    assert scaled.denominator == 1
    digits = str(abs(scaled.numerator)).rjust(places + 1, "0")
    sign = "-" if v < 0 else ""
    if places == 0:
        return sign + digits
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def to_dict(ts: TypeSpace) -> dict:
    if ts.exact_pmf is not None:
        pmf = [[_fraction_str(v) for v in row] for row in ts.exact_pmf]
    else:
        pmf = [[repr(float(v)) for v in row] for row in ts.pmf]
    bounds = [b if np.isfinite(b) else "inf" for b in ts.duration_grid]
    return {
        "cost_grid": list(ts.cost_grid),
        "duration_bins": bounds,
        "pmf": pmf,
        "independence": bool(ts.independence),
    }


def from_dict(doc: dict) -> TypeSpace:
    missing = {"cost_grid", "duration_bins", "pmf"} - set(doc)
    if missing:
        raise TypeSpaceError(f"type space document missing keys: {sorted(missing)}")
    bounds = [float(b) for b in doc["duration_bins"]]
    rows = doc["pmf"]
    if all(isinstance(v, str) for row in rows for v in row):
        exact = tuple(tuple(Fraction(v) for v in row) for row in rows)
        return TypeSpace(doc["cost_grid"], bounds, None, bool(doc.get("independence", False)), exact)
    return TypeSpace(doc["cost_grid"], bounds, np.array(rows, float), bool(doc.get("independence", False)))


def dumps(ts: TypeSpace) -> str:
    return json.dumps(to_dict(ts), indent=2)


def loads(text: str) -> TypeSpace:
    return from_dict(json.loads(text))


def load(path) -> TypeSpace:
    with open(path) as fh:
        return loads(fh.read())


def dump(ts: TypeSpace, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(ts))
        fh.write("\n")


# -- common marginals ----------------------------------------------------------


def uniform_sum_pmf(hops: int, low: int = 1, high: int = 5) -> tuple[list[int], list[Fraction]]:
    """Exact pmf of the sum of ``hops`` i.i.d. uniform integers on ``[low, high]``."""
    if hops < 1:
        raise ValueError("hops must be >= 1")
    base = {c: Fraction(1, high - low + 1) for c in range(low, high + 1)}
    dist = dict(base)
    for _ in range(hops - 1):
        nxt: dict[int, Fraction] = {}
        for s, ps in dist.items():
            for c, pc in base.items():
                nxt[s + c] = nxt.get(s + c, Fraction(0)) + ps * pc
        dist = nxt
    costs = sorted(dist)
    return costs, [dist[c] for c in costs]


def equal_width_bounds(num_bins: int, d_cap: float) -> list[float]:
    return [d_cap * j / num_bins for j in range(num_bins + 1)]


def single_bin(costs: Sequence[int], cost_pmf: Sequence, upper: float = 1.0) -> TypeSpace:
    """Convenience for cost-only spaces with one duration bin."""
    return TypeSpace.independent(costs, cost_pmf, [0.0, upper], [Fraction(1)])
