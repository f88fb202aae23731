"""Scenario configuration, metrics and the speed / density sweeps."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import statfit
from .mobsim import (
    Session,
    SessionParams,
    TablesCache,
    World,
    collect_path_durations,
    discover_routes,
    run_session,
)
from .typespace import TypeSpace, equal_width_bounds, uniform_sum_pmf

log = logging.getLogger(__name__)

CSV_VERSION = 1
CSV_COLUMNS = ("sweep_value", "backend", "avg_ratio", "worst_ratio", "avg_total_payment",
               "avg_total_cost", "auctions", "seed")
SPEED_SWEEP = (1, 5, 10, 15, 20, 25, 30, 35)
NODES_SWEEP = (20, 30, 40, 50, 60, 70)
BACKENDS = ("optimal", "adhoc_vcg")
MIN_FIT_SAMPLES = 30


class ConfigError(ValueError):
    pass


class RatioError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    width: float = 1000.0
    height: float = 1000.0
    range: float = 150.0
    nodes: int = 40
    speed: float = 5.0
    duration: float = 2000.0
    tick: float = 0.1
    epoch: float = 10.0
    cost_low: int = 1
    cost_high: int = 5
    pairs: int = 20
    duration_bins: int = 20
    d_cap_quantile: float = 0.995
    pricing: str = "both"
    epsilon: float = 0.01
    guard: float = 0.1
    max_routes: int = 5
    seed: int = 0
    clamp_to_epoch: bool = False
    pilot_snapshots: int = 20
    pilot_pairs: int = 50
    vcg_reserve: bool = True
    workers: int = 1

    def __post_init__(self):
        positive = ("width", "height", "range", "duration", "tick", "epoch", "epsilon", "guard", "d_cap_quantile")
        for name in positive:
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0 or not math.isfinite(v):
                raise ConfigError(f"{name}: must be a positive finite number, got {v!r}")
        counts = ("nodes", "pairs", "duration_bins", "max_routes", "pilot_snapshots", "pilot_pairs", "workers")
        for name in counts:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        if self.nodes < 2:
            raise ConfigError("nodes: need at least 2 nodes")
        if self.duration_bins < 2:
            raise ConfigError("duration_bins: need at least 2 bins")
        if not isinstance(self.speed, (int, float)) or isinstance(self.speed, bool) or self.speed < 0:
            raise ConfigError(f"speed: must be >= 0, got {self.speed!r}")
        if not (isinstance(self.cost_low, int) and isinstance(self.cost_high, int)) or not 0 <= self.cost_low <= self.cost_high:
            raise ConfigError("cost_low/cost_high: need integers with 0 <= cost_low <= cost_high")
        if self.d_cap_quantile >= 1:
            raise ConfigError("d_cap_quantile: must lie in (0, 1)")
        if self.pricing not in ("both",) + BACKENDS:
            raise ConfigError(f"pricing: expected one of both/optimal/adhoc_vcg, got {self.pricing!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError(f"seed: must be a nonnegative integer, got {self.seed!r}")
        if self.guard < self.tick - 1e-12:
            raise ConfigError("guard: must be at least one tick")

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as err:
                raise ConfigError(f"config file is not valid JSON: {err}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def hash(self) -> str:
        doc = self.to_dict()
        doc.pop("workers")  # parallelism never changes results
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    @property
    def backends(self) -> tuple:
        return BACKENDS if self.pricing == "both" else (self.pricing,)

    def session_params(self) -> SessionParams:
        reserve = self.cost_high if self.vcg_reserve else None
        return SessionParams(self.tick, self.guard, self.max_routes, self.epsilon, self.clamp_to_epoch, reserve)


# -- metrics ---------------------------------------------------------------------


def overpayment_ratio(total_payment: float, total_cost: float) -> float:
    if not total_cost > 0:
        raise RatioError("undefined ratio: total cost is zero")
    return total_payment / total_cost


def total_payment(session: Session) -> float:
    return session.total_payment


def worst_overpayment_ratio(session: Session) -> float:
    ratios = [a.ratio for a in session.auctions if a.ratio is not None]
    if not ratios:
        raise RatioError("no priced auctions in session")
    return max(ratios)


@dataclass(frozen=True)
class MetricsRecord:
    scenario_id: str
    pair_id: int
    backend: str
    avg_overpayment_ratio: float
    worst_overpayment_ratio: float
    total_payment: float
    total_cost: float
    auctions_held: int
    premature_breaks: int
    unpriced: int = 0
    shared_node_auctions: int = 0
    reserve_priced: int = 0

    @classmethod
    def from_session(cls, scenario_id: str, pair_id: int, session: Session) -> "MetricsRecord":
        pay, cost = session.total_payment, session.total_cost
        if cost > 0:
            avg, worst = overpayment_ratio(pay, cost), worst_overpayment_ratio(session)
        else:
            avg = worst = math.nan
        return cls(
            scenario_id, pair_id, session.pricing, avg, worst, pay, cost, len(session.auctions),
            session.premature_breaks,
            sum(1 for a in session.auctions if a.payment is None and a.hops > 1),
            sum(1 for a in session.auctions if a.shared_nodes),
            sum(1 for a in session.auctions if a.reserve_priced),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# -- type spaces ---------------------------------------------------------------


@dataclass(frozen=True)
class DurationModel:
    """Discretized duration marginal: exact bin masses (as strings) over ``[0, d_cap]``."""

    d_cap: float
    masses: tuple
    fit: dict | None = field(default=None, compare=False)

    @property
    def bounds(self) -> list[float]:
        return equal_width_bounds(len(self.masses), self.d_cap)

    def fractions(self) -> list[Fraction]:
        return [Fraction(m) for m in self.masses]


def _exact_masses(pmf) -> tuple:
    # floats are exact binary rationals; the last bin absorbs rounding
    head = [Fraction(float(v)) for v in pmf[:-1]]
    last = 1 - sum(head)
    if last <= 0:
        raise ConfigError("duration discretization left no mass in the top bin")
    return tuple(str(v) for v in head + [last])


def duration_model_from_samples(samples, num_bins: int, quantile: float, fallback_cap: float) -> DurationModel:
    finite = [s for s in samples if math.isfinite(s) and s > 0]
    if len(finite) < MIN_FIT_SAMPLES:
        masses = tuple(str(Fraction(1, num_bins)) for _ in range(num_bins))
        return DurationModel(float(fallback_cap), masses, None)
    fit = statfit.fit_exponential_mle(finite)
    d_cap = statfit.exponential_cap(fit, quantile)
    pmf = statfit.discretize_duration(fit, num_bins, d_cap)
    return DurationModel(float(d_cap), _exact_masses(pmf), fit.to_dict())


def route_type_space(intermediates: int, model: DurationModel, cost_low: int = 1, cost_high: int = 5) -> TypeSpace:
    costs, cost_pmf = uniform_sum_pmf(intermediates, cost_low, cost_high)
    return TypeSpace.independent(costs, cost_pmf, model.bounds, model.fractions())


class RouteSpaceBuilder:
    """Picklable ``intermediates -> TypeSpace`` map used by sessions."""

    def __init__(self, model: DurationModel, cost_low: int, cost_high: int):
        self.model = model
        self.cost_low = cost_low
        self.cost_high = cost_high

    def __call__(self, intermediates: int) -> TypeSpace:
        return route_type_space(intermediates, self.model, self.cost_low, self.cost_high)


# -- scenario execution --------------------------------------------------------


def _streams(cfg: ScenarioConfig, pair_id: int):
    ss = np.random.SeedSequence([cfg.seed, pair_id])
    mob, cost, pair, tie = ss.spawn(4)
    return [np.random.default_rng(s) for s in (mob, cost, pair, tie)]


def make_world(cfg: ScenarioConfig, mobility_rng, cost_rng) -> World:
    return World.random(cfg.nodes, cfg.speed, mobility_rng, cost_rng, cfg.width, cfg.height,
                        cfg.range, cfg.epoch, cfg.cost_low, cfg.cost_high)


def pilot_samples(cfg: ScenarioConfig) -> list[float]:
    """Multi-hop path durations from a pilot run seeded independently of the scenario pairs."""
    mob, cost, pair, _ = (np.random.default_rng(s) for s in np.random.SeedSequence([cfg.seed, 2**31]).spawn(4))
    world = make_world(cfg, mob, cost)
    interval = cfg.duration / cfg.pilot_snapshots
    return collect_path_durations(world, pair, cfg.pilot_snapshots, cfg.pilot_pairs, interval, cfg.max_routes)


def pilot_duration_model(cfg: ScenarioConfig) -> DurationModel:
    return duration_model_from_samples(pilot_samples(cfg), cfg.duration_bins, cfg.d_cap_quantile, cfg.duration)


def choose_pair(world: World, rng, attempts: int = 200) -> tuple[int, int]:
    """Random source/destination, preferring pairs joined by a multi-hop route at the start."""
    n = len(world)
    fallback = None
    for _ in range(attempts):
        s, t = (int(v) for v in rng.choice(n, 2, replace=False))
        routes = discover_routes(world, s, t, 1)
        if routes and routes[0].hops >= 2:
            return s, t
        if routes and fallback is None:
            fallback = (s, t)
    return fallback or (0, 1)


def run_pair(cfg: ScenarioConfig, pair_id: int, model: DurationModel | None, scenario_id: str = "") -> list[tuple]:
    """Run every configured back-end on identical mobility for one pair; returns (record, session)."""
    out = []
    builder = RouteSpaceBuilder(model, cfg.cost_low, cfg.cost_high) if model is not None else None
    for backend in cfg.backends:
        mob, cost, pair, tie = _streams(cfg, pair_id)
        world = make_world(cfg, mob, cost)
        s, t = choose_pair(world, pair)
        session = run_session(world, s, t, backend, builder, cfg.duration, tie, cfg.session_params())
        out.append((MetricsRecord.from_session(scenario_id, pair_id, session), session))
    return out


def _pair_job(args):
    cfg, pair_id, model, scenario_id = args
    try:
        return [rec for rec, _ in run_pair(cfg, pair_id, model, scenario_id)]
    except Exception as err:  # noqa: BLE001 - reported to the sweep as a failed point
        return err


@dataclass(frozen=True)
class SweepRow:
    sweep_value: float
    backend: str
    avg_ratio: float
    worst_ratio: float
    avg_total_payment: float
    avg_total_cost: float
    auctions: int
    seed: int

    def cells(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 12))
    return str(v)


def aggregate(records, sweep_value, backend, seed) -> SweepRow:
    """Mean over pairs of per-pair ratios and totals (pairs with zero cost skip the ratio means)."""
    recs = [r for r in records if r.backend == backend]
    ratios = [r.avg_overpayment_ratio for r in recs if not math.isnan(r.avg_overpayment_ratio)]
    worsts = [r.worst_overpayment_ratio for r in recs if not math.isnan(r.worst_overpayment_ratio)]
    return SweepRow(
        sweep_value, backend,
        float(np.mean(ratios)) if ratios else math.nan,
        float(np.mean(worsts)) if worsts else math.nan,
        float(np.mean([r.total_payment for r in recs])) if recs else math.nan,
        float(np.mean([r.total_cost for r in recs])) if recs else math.nan,
        int(sum(r.auctions_held for r in recs)),
        seed,
    )


def run_point(cfg: ScenarioConfig, sweep_value, pool=None) -> tuple[list[SweepRow], list[MetricsRecord]]:
    scenario_id = cfg.hash()
    model = pilot_duration_model(cfg) if "optimal" in cfg.backends else None
    jobs = [(cfg, k, model, scenario_id) for k in range(cfg.pairs)]
    results = list(pool.map(_pair_job, jobs)) if pool is not None else [_pair_job(j) for j in jobs]
    for res in results:
        if isinstance(res, Exception):
            raise res
    records = [rec for res in results for rec in res]
    rows = [aggregate(records, sweep_value, b, cfg.seed) for b in cfg.backends]
    return rows, records


def sweep_values(axis: str, values=None) -> tuple:
    if axis == "speed":
        return tuple(values) if values else SPEED_SWEEP
    if axis == "nodes":
        return tuple(values) if values else NODES_SWEEP
    raise ConfigError(f"sweep axis must be 'speed' or 'nodes', got {axis!r}")


@dataclass
class SweepResult:
    config: ScenarioConfig
    axis: str
    rows: list
    records: list
    failures: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# manet-auction sweep v{CSV_VERSION} axis={self.axis} config_hash={self.config.hash()}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows:
            w.writerow(row.cells())
        return buf.getvalue()


def run_sweep(base: ScenarioConfig, axis: str = "speed", values=None) -> SweepResult:
    """One CSV row per (sweep value, back-end); failed points are logged and skipped."""
    vals = sweep_values(axis, values)
    rows, records, failures = [], [], []
    pool = ProcessPoolExecutor(base.workers) if base.workers > 1 else None
    try:
        for v in vals:
            v = int(v) if axis == "nodes" else float(v)
            cfg = base.replace(**{axis: v})
            try:
                r, rec = run_point(cfg, v, pool)
            except Exception as err:  # noqa: BLE001
                log.error("sweep point %s=%s failed: %s", axis, v, err)
                failures.append((v, repr(err)))
                continue
            rows.extend(r)
            records.extend(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return SweepResult(base, axis, rows, records, failures)


def run_scenario(cfg: ScenarioConfig) -> tuple[list[SweepRow], list[MetricsRecord]]:
    return run_point(cfg, cfg.speed)
