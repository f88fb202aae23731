"""Ad Hoc-VCG baseline: node-level VCG over a node-weighted graph, plus path-level second price."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field


class VcgError(ValueError):
    pass


class DisconnectedError(VcgError):
    pass


class NotTwoConnectedError(VcgError):
    def __init__(self, node):
        super().__init__(f"not two-connected: removing node {node!r} disconnects source from destination")
        self.node = node


@dataclass
class CostGraph:
    """Undirected graph with a forwarding cost on every node.

    Source and destination are forced to cost 0 since they never forward.
    """

    costs: dict
    adjacency: dict
    source: object
    destination: object

    def __post_init__(self):
        if self.source == self.destination:
            raise VcgError("source and destination must differ")
        for node in (self.source, self.destination):
            if node not in self.costs:
                raise VcgError(f"node {node!r} not in graph")
        self.costs = dict(self.costs)
        self.costs[self.source] = 0
        self.costs[self.destination] = 0
        if any(c < 0 for c in self.costs.values()):
            raise VcgError("node costs must be nonnegative")
        adj = {v: set() for v in self.costs}
        for u, nbrs in self.adjacency.items():
            for v in nbrs:
                adj[u].add(v)
                adj[v].add(u)
        self.adjacency = adj

    @classmethod
    def from_edges(cls, costs, edges, source, destination) -> "CostGraph":
        adj = {v: set() for v in costs}
        for u, v in edges:
            adj[u].add(v)
        return cls(costs, adj, source, destination)

    @classmethod
    def from_snapshot(cls, snapshot: dict, source, destination) -> "CostGraph":
        """Build from a mobsim scenario snapshot (``nodes`` with ``id``/``cost``, ``edges``)."""
        costs = {n["id"]: n["cost"] for n in snapshot["nodes"]}
        return cls.from_edges(costs, [tuple(e) for e in snapshot["edges"]], source, destination)

    def without(self, node) -> "CostGraph":
        costs = {v: c for v, c in self.costs.items() if v != node}
        adj = {v: {w for w in nbrs if w != node} for v, nbrs in self.adjacency.items() if v != node}
        return CostGraph(costs, adj, self.source, self.destination)

    def path_cost(self, path) -> int:
        return sum(self.costs[v] for v in path[1:-1])


def cheapest_path(g: CostGraph, s=None, t=None, banned=frozenset()) -> tuple[list, int]:
    """Minimum sum of intermediate-node costs; ties go to the lexicographically smallest node sequence."""
    s = g.source if s is None else s
    t = g.destination if t is None else t
    if s not in g.costs or t not in g.costs:
        raise VcgError("source or destination missing from graph")
    heap = [(0, (s,))]
    done = set()
    while heap:
        cost, path = heapq.heappop(heap)
        v = path[-1]
        if v in done:
            continue
        done.add(v)
        if v == t:
            return list(path), cost
        for w in g.adjacency[v]:
            if w in done or w in banned:
                continue
            step = 0 if w == t else g.costs[w]
            heapq.heappush(heap, (cost + step, path + (w,)))
    raise DisconnectedError(f"disconnected: no path from {s!r} to {t!r}")


@dataclass
class VcgResult:
    path: list
    payments: dict = field(default_factory=dict)
    total_payment: float = 0.0
    total_cost: float = 0.0
    reserve_priced: list = field(default_factory=list)

    @property
    def overpayment(self) -> float:
        return self.total_payment - self.total_cost


def adhoc_vcg_payments(g: CostGraph, s=None, t=None, reserve=None) -> VcgResult:
    """Pay each intermediate node its cost plus the extra cost of routing around it.

    A node without any replacement path makes the mechanism undefined; with
    ``reserve`` set, such a node is priced as if the replacement cost ``reserve``
    (the auctioneer's outside option) instead of raising.
    """
    s = g.source if s is None else s
    t = g.destination if t is None else t
    path, best = cheapest_path(g, s, t)
    payments = {}
    reserved = []
    for node in path[1:-1]:
        try:
            _, alt = cheapest_path(g, s, t, banned=frozenset([node]))
        except DisconnectedError:
            if reserve is None:
                raise NotTwoConnectedError(node) from None
            alt = max(reserve, best)
            reserved.append(node)
        payments[node] = g.costs[node] + (alt - best)
    return VcgResult(path, payments, sum(payments.values()), best, reserved)


def path_level_second_price(path_costs) -> tuple[object, float]:
    """Lowest-cost path wins and is paid the second-lowest cost; ties by path id."""
    bids = sorted((c, pid) for pid, c in path_costs)
    if len(bids) < 2:
        raise VcgError("no competition: at least two paths are required")
    return bids[0][1], bids[1][0]


def two_path_example(n: int, cheap: int = 0, dear: int = 1) -> CostGraph:
    """Two node-disjoint s-t paths of ``n`` intermediates each (costs ``cheap`` vs ``dear``)."""
    costs = {"s": 0, "t": 0}
    edges = []
    for label, c in (("p", cheap), ("q", dear)):
        prev = "s"
        for k in range(n):
            node = f"{label}{k}"
            costs[node] = c
            edges.append((prev, node))
            prev = node
        edges.append((prev, "t"))
    return CostGraph.from_edges(costs, edges, "s", "t")
