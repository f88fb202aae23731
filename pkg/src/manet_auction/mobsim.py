"""Random-walk MANET world, link-expiration prediction and auctioned routing sessions.

A :class:`World` holds node positions and velocities in numpy arrays and is
advanced in fixed ticks.  :func:`run_session` repeatedly discovers least-hop
routes between one source/destination pair, prices them with the optimal
auction (or the Ad Hoc-VCG baseline) and holds a new auction just before the
current route is predicted to break.
"""
from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import kernels
from .mechanism import Bid, MechanismTables, build_tables, run_auction
from .profit_sharing import SharingError, converge
from .typespace import AgentType, TypeSpace
from .vcg import CostGraph, NotTwoConnectedError, adhoc_vcg_payments, cheapest_path

log = logging.getLogger(__name__)

TIME_EPS = 1e-9
MAX_ENUMERATED_PATHS = 5000


class LinkAbsentError(ValueError):
    pass


@dataclass(frozen=True)
class NodeState:
    id: int
    x: float
    y: float
    speed: float
    heading: float
    cost: int


class World:
    """Nodes moving under a random walk inside a ``width x height`` arena.

    Headings are redrawn uniformly every ``epoch`` seconds (on multiples of
    ``epoch`` since time 0); walls reflect specularly.
    """

    def __init__(self, x, y, speed, heading, costs, width=1000.0, height=1000.0,
                 r=150.0, epoch=10.0, rng=None, clock=0.0):
        self.x = np.array(x, dtype=float)
        self.y = np.array(y, dtype=float)
        self.speed = np.broadcast_to(np.asarray(speed, dtype=float), self.x.shape).copy()
        heading = np.broadcast_to(np.asarray(heading, dtype=float), self.x.shape)
        self.vx = self.speed * np.cos(heading)
        self.vy = self.speed * np.sin(heading)
        self.costs = np.array(costs, dtype=np.int64)
        self.width = float(width)
        self.height = float(height)
        self.r = float(r)
        self.epoch = float(epoch)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.clock = float(clock)
        if np.any(self.speed < 0):
            raise ValueError("speeds must be nonnegative")
        if np.any((self.x < 0) | (self.x > self.width) | (self.y < 0) | (self.y > self.height)):
            raise ValueError("node outside the arena")

    @classmethod
    def random(cls, n_nodes, speed, mobility_rng, cost_rng, width=1000.0, height=1000.0,
               r=150.0, epoch=10.0, cost_low=1, cost_high=5) -> "World":
        x = mobility_rng.uniform(0, width, n_nodes)
        y = mobility_rng.uniform(0, height, n_nodes)
        heading = mobility_rng.uniform(0, 2 * math.pi, n_nodes)
        costs = cost_rng.integers(cost_low, cost_high + 1, n_nodes)
        return cls(x, y, speed, heading, costs, width, height, r, epoch, mobility_rng)

    def __len__(self):
        return self.x.shape[0]

    @property
    def heading(self) -> np.ndarray:
        return np.mod(np.arctan2(self.vy, self.vx), 2 * math.pi)

    def node(self, i: int) -> NodeState:
        return NodeState(i, float(self.x[i]), float(self.y[i]), float(self.speed[i]),
                         float(self.heading[i]), int(self.costs[i]))

    @property
    def nodes(self) -> list[NodeState]:
        return [self.node(i) for i in range(len(self))]

    def copy(self) -> "World":
        w = object.__new__(World)
        w.__dict__.update(self.__dict__)
        for name in ("x", "y", "vx", "vy", "speed", "costs"):
            setattr(w, name, getattr(self, name).copy())
        return w

    def _redraw_headings(self):
        heading = self.rng.uniform(0, 2 * math.pi, len(self))
        self.vx = self.speed * np.cos(heading)
        self.vy = self.speed * np.sin(heading)

    def step(self, dt: float) -> "World":
        if dt <= 0:
            raise ValueError("dt must be positive")
        end = self.clock + dt
        while self.clock < end - TIME_EPS:
            boundary = (math.floor(self.clock / self.epoch + TIME_EPS) + 1) * self.epoch
            stop = min(boundary, end)
            kernels.advance(self.x, self.y, self.vx, self.vy, stop - self.clock, self.width, self.height)
            self.clock = stop
            if abs(stop - boundary) <= TIME_EPS:
                self._redraw_headings()
        self.clock = end
        return self

    # -- geometry -------------------------------------------------------------

    def distances(self) -> np.ndarray:
        dx = self.x[:, None] - self.x[None, :]
        dy = self.y[:, None] - self.y[None, :]
        return np.hypot(dx, dy)

    def adjacency(self) -> np.ndarray:
        adj = self.distances() <= self.r
        np.fill_diagonal(adj, False)
        return adj

    def neighbours(self) -> list[list[int]]:
        ii, jj = np.nonzero(self.adjacency())
        out = [[] for _ in range(len(self))]
        for i, j in zip(ii.tolist(), jj.tolist()):
            out[i].append(j)
        return out

    def link_up(self, i: int, j: int) -> bool:
        return math.hypot(self.x[i] - self.x[j], self.y[i] - self.y[j]) <= self.r

    def route_up(self, nodes) -> bool:
        idx = np.asarray(nodes)
        dx = self.x[idx[1:]] - self.x[idx[:-1]]
        dy = self.y[idx[1:]] - self.y[idx[:-1]]
        return bool(np.all(dx * dx + dy * dy <= self.r * self.r))

    def link_durations(self) -> np.ndarray:
        return kernels.link_durations(self.x, self.y, self.vx, self.vy, self.r)

    def snapshot(self) -> dict:
        adj = self.adjacency()
        ii, jj = np.nonzero(np.triu(adj))
        return {
            "time": self.clock,
            "arena": [self.width, self.height],
            "range": self.r,
            "nodes": [
                {"id": n.id, "x": n.x, "y": n.y, "speed": n.speed, "heading": n.heading, "cost": n.cost}
                for n in self.nodes
            ],
            "edges": [[int(i), int(j)] for i, j in zip(ii, jj)],
        }

    def cost_graph(self, s: int, t: int) -> CostGraph:
        costs = {i: int(c) for i, c in enumerate(self.costs.tolist())}
        return CostGraph(costs, dict(enumerate(self.neighbours())), s, t)


def step(world: World, dt: float) -> World:
    return world.step(dt)


def predict_link_duration(i: NodeState, j: NodeState, r: float) -> float:
    """Time until two nodes moving at constant velocity drift out of range ``r``."""
    b = i.x - j.x
    d = i.y - j.y
    if b * b + d * d > r * r:
        raise LinkAbsentError("link absent: nodes are out of range")
    a = i.speed * math.cos(i.heading) - j.speed * math.cos(j.heading)
    c = i.speed * math.sin(i.heading) - j.speed * math.sin(j.heading)
    s2 = a * a + c * c
    if s2 == 0:
        return math.inf
    disc = max(s2 * r * r - (a * d - b * c) ** 2, 0.0)
    return max((-(a * b + c * d) + math.sqrt(disc)) / s2, 0.0)


# -- routes --------------------------------------------------------------------


@dataclass(frozen=True)
class RouteCandidate:
    nodes: tuple
    cost: int
    duration: float

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def intermediates(self) -> tuple:
        return self.nodes[1:-1]


def _bfs(neigh, start):
    dist = {start: 0}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in neigh[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def least_hop_paths(neigh, s, t, limit=MAX_ENUMERATED_PATHS) -> list[tuple]:
    """All minimum-hop s-t paths (lexicographic order), via the BFS layered DAG."""
    ds = _bfs(neigh, s)
    if t not in ds:
        return []
    dt = _bfs(neigh, t)
    total = ds[t]
    paths = []
    stack = [(s,)]
    while stack and len(paths) < limit:
        path = stack.pop()
        v = path[-1]
        if v == t:
            paths.append(path)
            continue
        nxt = [w for w in neigh[v] if ds.get(w) == ds[v] + 1 and dt.get(w, math.inf) == total - ds[v] - 1]
        for w in sorted(nxt, reverse=True):
            stack.append(path + (w,))
    return paths


def _route(world: World, path, lets) -> RouteCandidate:
    cost = int(sum(int(world.costs[v]) for v in path[1:-1]))
    dur = min(float(lets[u, v]) for u, v in zip(path, path[1:]))
    return RouteCandidate(tuple(int(v) for v in path), cost, dur)


def discover_routes(world: World, s: int, t: int, max_routes: int) -> list[RouteCandidate]:
    """Least-hop routes, node-disjoint ones first (cheapest first), at most ``max_routes``."""
    neigh = world.neighbours()
    paths = least_hop_paths(neigh, s, t)
    if not paths:
        return []
    lets = world.link_durations()
    cands = sorted((_route(world, p, lets) for p in paths), key=lambda rc: (rc.cost, rc.nodes))
    if len(cands) <= max_routes:
        return cands
    chosen, used = [], set()
    for rc in cands:
        if used.isdisjoint(rc.intermediates):
            chosen.append(rc)
            used.update(rc.intermediates)
            if len(chosen) == max_routes:
                break
    for rc in cands:
        if len(chosen) == max_routes:
            break
        if rc not in chosen:
            chosen.append(rc)
    return sorted(chosen, key=lambda rc: (rc.cost, rc.nodes))


def shares_nodes(routes) -> bool:
    seen = set()
    for rc in routes:
        if not seen.isdisjoint(rc.intermediates):
            return True
        seen.update(rc.intermediates)
    return False


# -- sessions ------------------------------------------------------------------


@dataclass
class AuctionRecord:
    time: float
    reason: str
    n_bidders: int
    hops: int
    route: tuple
    cost: int
    predicted_duration: float
    duration_bin: int | None = None
    payment: float | None = None
    interim_payment: float | None = None
    allocation: float | None = None
    tie_broken: bool = False
    shared_nodes: bool = False
    lifetime: float | None = None
    premature: bool = False
    ended_by: str | None = None
    shares: tuple | None = None
    reserve_priced: int = 0

    @property
    def priced(self) -> bool:
        return self.payment is not None

    @property
    def ratio(self) -> float | None:
        if self.payment is None or self.cost <= 0:
            return None
        return self.payment / self.cost


@dataclass
class Session:
    source: int
    destination: int
    pricing: str
    start: float
    end: float = 0.0
    auctions: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def log(self, time, kind, **payload):
        self.events.append({"time": round(time, 9), "kind": kind, **payload})

    @property
    def priced_auctions(self) -> list:
        return [a for a in self.auctions if a.priced]

    @property
    def total_payment(self) -> float:
        return float(sum(a.payment for a in self.priced_auctions))

    @property
    def total_cost(self) -> float:
        return float(sum(a.cost for a in self.priced_auctions))

    @property
    def premature_breaks(self) -> int:
        return sum(1 for a in self.auctions if a.premature)

    def event_lines(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, default=_jsonable) + "\n" for e in self.events)


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(repr(o))


@dataclass
class SessionParams:
    tick: float = 0.1
    guard: float = 0.1
    max_routes: int = 5
    epsilon: float = 0.01
    clamp_to_epoch: bool = False
    # Ad Hoc-VCG replacement cost per intermediate node when none exists; None leaves it unpriced
    vcg_reserve_per_node: int | None = None


class TablesCache:
    """Mechanism tables keyed by (bidders, hop count, type-space fingerprint)."""

    def __init__(self, type_space_builder: Callable[[int], TypeSpace]):
        self.builder = type_space_builder
        self._spaces: dict = {}
        self._tables: dict = {}

    def space(self, hops: int) -> TypeSpace:
        if hops not in self._spaces:
            ts = self.builder(hops)
            self._spaces[hops] = (ts, ts.fingerprint())
        return self._spaces[hops][0]

    def tables(self, n: int, hops: int) -> MechanismTables:
        ts = self.space(hops)
        key = (n, hops, self._spaces[hops][1])
        if key not in self._tables:
            self._tables[key] = build_tables(ts, n)
        return self._tables[key]


def _lookahead_break(world: World, route, horizon: float) -> bool:
    probe = world.copy()
    kernels.advance(probe.x, probe.y, probe.vx, probe.vy, horizon, probe.width, probe.height)
    return not probe.route_up(route)


def run_session(world: World, s: int, t: int, pricing: str, type_space_builder, duration: float,
                rng: np.random.Generator, params: SessionParams | None = None, tables_cache=None) -> Session:
    """Simulate one source/destination flow for ``duration`` seconds, mutating ``world``."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    if pricing not in ("optimal", "adhoc_vcg"):
        raise ValueError(f"unknown pricing back-end {pricing!r}")
    params = params or SessionParams()
    cache = tables_cache or (TablesCache(type_space_builder) if pricing == "optimal" else None)
    session = Session(s, t, pricing, world.clock)
    end = world.clock + duration
    current: AuctionRecord | None = None
    scheduled = math.inf
    n_ticks = int(round(duration / params.tick))

    def close(rec: AuctionRecord, reason: str):
        rec.lifetime = world.clock - rec.time
        rec.ended_by = reason
        early = reason == "break" and world.clock < scheduled - params.guard - TIME_EPS
        if early and pricing == "optimal" and rec.payment is not None:
            rec.premature = True
            rec.payment = float(rec.cost)
            session.log(world.clock, "premature_break", route=rec.route, paid=rec.payment)
        session.log(world.clock, "route_end", route=rec.route, reason=reason, lifetime=rec.lifetime)

    for k in range(n_ticks + 1):
        if k:
            world.step(params.tick)
        if k == n_ticks:
            break
        reason = None
        if current is None:
            reason = "start" if not session.auctions else "retry"
        elif not world.route_up(current.route) or _lookahead_break(world, current.route, params.guard):
            reason = "break"
        elif world.clock >= scheduled - TIME_EPS:
            reason = "schedule"
        if reason is None:
            continue
        if current is not None:
            close(current, reason)
            current = None
        if pricing == "optimal":
            current = _optimal_auction(world, s, t, reason, cache, rng, params, session)
        else:
            current = _vcg_auction(world, s, t, reason, params, session)
        if current is None:
            scheduled = math.inf
            continue
        session.auctions.append(current)
        d = current.predicted_duration
        if params.clamp_to_epoch:
            d = min(d, (math.floor(world.clock / world.epoch + TIME_EPS) + 1) * world.epoch - world.clock)
        scheduled = world.clock + d - params.guard
    if current is not None:
        close(current, "session_end")
    session.end = end
    return session


def _optimal_auction(world, s, t, reason, cache: TablesCache, rng, params, session) -> AuctionRecord | None:
    routes = discover_routes(world, s, t, params.max_routes)
    if not routes:
        if reason != "retry":
            session.log(world.clock, "no_route", reason=reason)
        return None
    hops = routes[0].hops
    best = routes[0]
    rec_shared = shares_nodes(routes)
    if rec_shared:
        session.log(world.clock, "shared_nodes", bidders=len(routes))
    if hops == 1:
        # direct link: nothing to forward, nothing to pay
        rec = AuctionRecord(world.clock, reason, len(routes), 1, best.nodes, 0, best.duration)
        session.log(world.clock, "direct_link")
        return rec
    tables = cache.tables(len(routes), hops - 1)
    ts = tables.type_space
    bids = []
    for k, rc in enumerate(routes):
        bids.append(Bid(k, AgentType(ts.nearest_cost(rc.cost), ts.bin_of(rc.duration))))
    out = run_auction(bids, tables, rng)
    win = routes[out.winner]
    rec = AuctionRecord(
        time=world.clock, reason=reason, n_bidders=len(routes), hops=hops, route=win.nodes,
        cost=win.cost, predicted_duration=win.duration, duration_bin=out.winner_type.duration_bin,
        payment=out.realized_payment, interim_payment=out.winner_interim_payment,
        allocation=out.winner_allocation, tie_broken=out.tie_broken, shared_nodes=rec_shared,
    )
    node_costs = [int(world.costs[v]) for v in win.intermediates]
    try:
        rec.shares = converge(node_costs, out.realized_payment, out.winner_allocation, params.epsilon).declared
    except SharingError:
        session.log(world.clock, "pricing_fault", route=win.nodes)
    session.log(world.clock, "auction", reason=reason, bidders=len(routes), route=win.nodes,
                cost=win.cost, duration=win.duration, payment=out.realized_payment)
    return rec


def _vcg_auction(world, s, t, reason, params, session) -> AuctionRecord | None:
    g = world.cost_graph(s, t)
    try:
        path, cost = cheapest_path(g)
    except ValueError:
        if reason != "retry":
            session.log(world.clock, "no_route", reason=reason)
        return None
    lets = world.link_durations()
    dur = min(float(lets[u, v]) for u, v in zip(path, path[1:]))
    rec = AuctionRecord(world.clock, reason, 1, len(path) - 1, tuple(path), int(cost), dur)
    if len(path) == 2:
        session.log(world.clock, "direct_link")
        return rec
    reserve = params.vcg_reserve_per_node * (len(path) - 2) if params.vcg_reserve_per_node is not None else None
    try:
        res = adhoc_vcg_payments(g, reserve=reserve)
    except NotTwoConnectedError as err:
        session.log(world.clock, "unpriced", pivotal=int(err.node), route=tuple(path))
        return rec
    rec.payment = float(res.total_payment)
    rec.reserve_priced = len(res.reserve_priced)
    session.log(world.clock, "auction", reason=reason, route=tuple(path), cost=int(cost), payment=rec.payment,
                reserve_priced=[int(v) for v in res.reserve_priced])
    return rec


# -- duration samples for fitting ---------------------------------------------


def collect_path_durations(world: World, rng: np.random.Generator, snapshots: int, pairs_per_snapshot: int,
                           interval: float, max_routes: int = 5) -> list[float]:
    """Predicted least-hop path durations sampled at regular snapshots of a pilot run."""
    out = []
    n = len(world)
    for k in range(snapshots):
        if k:
            world.step(interval)
        for _ in range(pairs_per_snapshot):
            s, t = (int(v) for v in rng.choice(n, 2, replace=False))
            for rc in discover_routes(world, s, t, max_routes):
                if rc.hops >= 2 and math.isfinite(rc.duration) and rc.duration > 0:
                    out.append(rc.duration)
    return out
