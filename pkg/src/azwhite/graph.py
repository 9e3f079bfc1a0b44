"""Weighted graph containers, validation and graph builders.

Graphs are immutable. Node ids are arbitrary hashable tokens (ints or
strings); internally every graph keeps its nodes in insertion order and
stores edges as parallel index/weight arrays so the statistics can be
vectorised.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable, Hashable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

__all__ = [
    "GraphValidationError",
    "GraphValidationWarning",
    "WeightedGraph",
    "DynamicGraph",
    "MultiplexGraph",
    "validate",
    "symmetrize",
    "w2",
    "khop_augment",
    "build_multiplex",
    "temporal_weight",
    "graph_from_distances",
    "generate_graph",
    "erdos_renyi",
    "community_line",
    "complete_graph",
]

NodeId = Hashable


class GraphValidationError(ValueError):
    """Raised when an edge list cannot be turned into a valid graph."""


class GraphValidationWarning(UserWarning):
    """Emitted when validation silently repairs an edge list."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Static weighted graph with strictly positive weights and no self-loops.

    Build instances with :func:`validate` (or :meth:`from_edges`); the
    constructor assumes its arrays are already clean.
    """

    nodes: tuple
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    directed: bool = False
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self._index is None:
            object.__setattr__(self, "_index", {v: i for i, v in enumerate(self.nodes)})
        for name in ("src", "dst"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.intp)))
        object.__setattr__(self, "weight", _frozen(np.asarray(self.weight, dtype=float)))

    @classmethod
    def from_edges(cls, edges, nodes=(), directed=False) -> WeightedGraph:
        return validate(edges, directed=directed, nodes=nodes)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.weight)

    @property
    def edges(self) -> list[tuple[NodeId, NodeId, float]]:
        return [
            (self.nodes[u], self.nodes[v], float(w))
            for u, v, w in zip(self.src, self.dst, self.weight)
        ]

    def index(self, node: NodeId) -> int:
        return self._index[node]

    def __contains__(self, node) -> bool:
        return node in self._index

    def adjacency(self) -> np.ndarray:
        """Dense weighted adjacency, ``A[u, v] = w_uv`` (symmetric if undirected)."""
        a = np.zeros((self.n_nodes, self.n_nodes))
        np.add.at(a, (self.src, self.dst), self.weight)
        if not self.directed:
            np.add.at(a, (self.dst, self.src), self.weight)
        return a

    def scaled(self, k: float) -> WeightedGraph:
        return WeightedGraph(self.nodes, self.src, self.dst, self.weight * k, self.directed)

    def relabel(self, mapping: dict) -> WeightedGraph:
        nodes = tuple(mapping[v] for v in self.nodes)
        return WeightedGraph(nodes, self.src, self.dst, self.weight, self.directed)

    def __repr__(self) -> str:
        kind = "directed" if self.directed else "undirected"
        return f"WeightedGraph({kind}, |V|={self.n_nodes}, |E|={self.n_edges})"


def validate(edges: Iterable, directed: bool = False, nodes: Iterable = ()) -> WeightedGraph:
    """Clean a raw edge list into a :class:`WeightedGraph`.

    Each edge is ``(u, v)`` or ``(u, v, w)``; a missing weight means 1.
    Self-loops are dropped and duplicate pairs (for undirected graphs
    ``(u, v)`` and ``(v, u)`` are the same pair) are merged by summing
    their weights. Both repairs emit a :class:`GraphValidationWarning`
    carrying a count. Non-positive or non-finite weights raise
    :class:`GraphValidationError` naming the offending edge.
    """
    order: dict = {}
    for v in nodes:
        order.setdefault(v, len(order))

    merged: dict = {}
    n_loops = 0
    n_dupes = 0
    for e in edges:
        if len(e) == 2:
            u, v = e
            w = 1.0
        elif len(e) == 3:
            u, v, w = e
            w = float(w)
        else:
            raise GraphValidationError(f"malformed edge {e!r}: expected (u, v) or (u, v, w)")
        if not math.isfinite(w) or w <= 0:
            raise GraphValidationError(f"edge ({u!r}, {v!r}) has invalid weight {w!r}; weights must be finite and > 0")
        order.setdefault(u, len(order))
        order.setdefault(v, len(order))
        if u == v:
            n_loops += 1
            continue
        key = (u, v)
        if not directed and order[u] > order[v]:
            key = (v, u)
        if key in merged:
            n_dupes += 1
            merged[key] += w
        else:
            merged[key] = w

    if n_loops:
        warnings.warn(f"removed {n_loops} self-loop(s)", GraphValidationWarning, stacklevel=2)
    if n_dupes:
        warnings.warn(
            f"merged {n_dupes} duplicate edge(s) by summing weights", GraphValidationWarning, stacklevel=2
        )

    node_tuple = tuple(order)
    src = np.fromiter((order[u] for u, _ in merged), dtype=np.intp, count=len(merged))
    dst = np.fromiter((order[v] for _, v in merged), dtype=np.intp, count=len(merged))
    weight = np.fromiter(merged.values(), dtype=float, count=len(merged))
    return WeightedGraph(node_tuple, src, dst, weight, directed, order)


def symmetrize(g: WeightedGraph) -> WeightedGraph:
    """Undirected graph with ``w_uv + w_vu`` on reciprocated pairs.

    Undirected inputs are returned unchanged.
    """
    if not g.directed:
        return g
    lo = np.minimum(g.src, g.dst)
    hi = np.maximum(g.src, g.dst)
    n = g.n_nodes
    keys = lo * n + hi
    uniq, inv = np.unique(keys, return_inverse=True)
    w = np.zeros(len(uniq))
    np.add.at(w, inv, g.weight)
    return WeightedGraph(g.nodes, uniq // n if n else uniq, uniq % n if n else uniq, w, False, g._index)


def w2(g: WeightedGraph) -> float:
    """Sum of squared pair weights, the null variance of the sign sum."""
    if g.n_edges == 0:
        raise GraphValidationError("no edges: statistic undefined")
    return math.fsum(symmetrize(g).weight ** 2)


WeightRule = Callable[[int], float]

_WEIGHT_RULES: dict[str, WeightRule] = {
    "constant": lambda k: 1.0,
    "inverse": lambda k: 1.0 / k,
}


def khop_augment(g: WeightedGraph, K: int, weight_rule: str | WeightRule = "constant") -> WeightedGraph:
    """Add an edge between every pair at shortest-path hop distance ``2..K``.

    Existing edges keep their weights. ``weight_rule`` maps the hop
    distance ``k`` to the new edge weight: ``"constant"`` (1),
    ``"inverse"`` (1/k) or any callable.
    """
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise ValueError(f"K must be an integer >= 1, got {K!r}")
    if g.directed:
        raise ValueError("khop_augment expects an undirected graph; symmetrize it first")
    rule = _WEIGHT_RULES[weight_rule] if isinstance(weight_rule, str) else weight_rule
    if K == 1 or g.n_edges == 0:
        return g

    n = g.n_nodes
    adj = csr_matrix((np.ones(g.n_edges), (g.src, g.dst)), shape=(n, n))
    dist = dijkstra(adj, directed=False, unweighted=True, limit=K)
    iu, ju = np.triu_indices(n, k=1)
    d = dist[iu, ju]
    keep = np.isfinite(d) & (d >= 2)
    hops = d[keep].astype(int)
    new_w = np.array([rule(int(k)) for k in hops], dtype=float)
    if np.any(~np.isfinite(new_w)) or np.any(new_w <= 0):
        raise GraphValidationError("weight_rule produced a non-positive or non-finite weight")
    return WeightedGraph(
        g.nodes,
        np.concatenate([g.src, iu[keep]]),
        np.concatenate([g.dst, ju[keep]]),
        np.concatenate([g.weight, new_w]),
        False,
        g._index,
    )


@dataclass(frozen=True, eq=False)
class DynamicGraph:
    """Sequence of snapshots indexed ``t = 1..T`` with shared node identities.

    ``static`` marks a single graph replicated over time, which lets the
    statistic tile the edge arrays instead of looping over snapshots.
    """

    snapshots: tuple[WeightedGraph, ...]
    static: bool = False

    def __post_init__(self):
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        if not self.snapshots:
            raise GraphValidationError("a dynamic graph needs at least one snapshot")

    @classmethod
    def from_static(cls, g: WeightedGraph, T: int) -> DynamicGraph:
        if T < 1:
            raise ValueError(f"T must be >= 1, got {T}")
        return cls((g,) * T, static=True)

    @classmethod
    def from_edges(cls, timed_edges: Iterable, T: int | None = None, presence: Iterable = (), directed=False):
        """Build from ``(t, u, v[, w])`` rows plus optional ``(t, v)`` presence rows."""
        edges: dict[int, list] = {}
        present: dict[int, list] = {}
        for row in timed_edges:
            edges.setdefault(int(row[0]), []).append(tuple(row[1:]))
        for t, v in presence:
            present.setdefault(int(t), []).append(v)
        times = set(edges) | set(present)
        if T is None:
            T = max(times, default=0)
        if T < 1:
            raise GraphValidationError("no time steps")
        bad = sorted(t for t in times if t < 1 or t > T)
        if bad:
            raise GraphValidationError(f"time indices must lie in 1..{T}; got {bad[:5]}")
        return cls(
            tuple(validate(edges.get(t, ()), directed=directed, nodes=present.get(t, ())) for t in range(1, T + 1))
        )

    @property
    def T(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, t: int) -> WeightedGraph:
        """Snapshot at 1-based time ``t``."""
        if not 1 <= t <= self.T:
            raise IndexError(t)
        return self.snapshots[t - 1]

    def node_union(self) -> tuple:
        seen: dict = {}
        for g in self.snapshots[:1] if self.static else self.snapshots:
            for v in g.nodes:
                seen.setdefault(v, None)
        return tuple(seen)


@dataclass(frozen=True, eq=False)
class MultiplexGraph:
    """Explicit stack of snapshots plus temporal edges between replicas.

    Nodes are ``(v, t)`` pairs. Mainly useful as a reference: the dynamic
    statistic never needs to materialise it.
    """

    nodes: tuple
    spatial_edges: tuple
    temporal_edges: tuple
    w_tm: float | None

    def as_weighted_graph(self) -> WeightedGraph:
        """Flatten into a static undirected graph over ``(v, t)`` nodes."""
        edges = list(self.spatial_edges)
        edges.extend((a, b, self.w_tm) for a, b in self.temporal_edges)
        return validate(edges, directed=False, nodes=self.nodes)


def temporal_weight(w2_sp: float, n_temporal_edges: int) -> float:
    """Weight giving temporal edges the same null variance as the spatial ones."""
    if n_temporal_edges <= 0:
        raise ValueError("no temporal edges: temporal weight undefined")
    if not w2_sp > 0:
        raise ValueError(f"spatial W2 must be positive, got {w2_sp!r}")
    return math.sqrt(w2_sp / n_temporal_edges)


def presence(dg: DynamicGraph, extra: Sequence[Iterable] | None = None) -> list[set]:
    """Per-step node sets: declared nodes and edge endpoints, plus ``extra[t-1]``."""
    out = []
    for t, g in enumerate(dg.snapshots):
        s = set(g.nodes)
        if extra is not None:
            s.update(extra[t])
        out.append(s)
    return out


def build_multiplex(dg: DynamicGraph, w_tm_override: float | None = None, extra_presence=None) -> MultiplexGraph:
    """Materialise the multiplex graph of a dynamic graph.

    Spatial edges are the symmetrised snapshot edges; a temporal edge links
    ``(v, t)`` to ``(v, t+1)`` whenever ``v`` is present at both steps.
    Without an override the temporal weight balances spatial and temporal
    null variances (falls back to 1 when there are no spatial edges).
    """
    pres = presence(dg, extra_presence)
    per_step = [
        list(g.nodes) + sorted((v for v in pres[t] if v not in g), key=repr) for t, g in enumerate(dg.snapshots)
    ]
    nodes = [(v, t) for t, order in enumerate(per_step, start=1) for v in order]

    spatial = []
    sq = []
    for t, g in enumerate(dg.snapshots, start=1):
        sg = symmetrize(g)
        for u, v, w in sg.edges:
            spatial.append(((u, t), (v, t), w))
            sq.append(w * w)
    temporal = [
        ((v, t), (v, t + 1)) for t in range(1, dg.T) for v in per_step[t - 1] if v in pres[t]
    ]

    if w_tm_override is not None:
        if not w_tm_override > 0:
            raise ValueError("temporal weight override must be positive")
        w_tm = float(w_tm_override)
    elif not temporal:
        w_tm = None
    elif sq:
        w_tm = temporal_weight(math.fsum(sq), len(temporal))
    else:
        w_tm = 1.0
    return MultiplexGraph(tuple(nodes), tuple(spatial), tuple(temporal), w_tm)


def graph_from_distances(pairs: Iterable, kappa: float, directed: bool = True) -> WeightedGraph:
    """Gaussian-kernel graph from pairwise distances.

    Keeps pairs with distance strictly inside ``(0, kappa)`` and weights
    them ``exp(-d**2 / sigma)`` where ``sigma`` is the population standard
    deviation of the kept distances.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    rows = [(u, v, float(d)) for u, v, d in pairs]
    for u, v, d in rows:
        if not math.isfinite(d) or d < 0:
            raise GraphValidationError(f"distance for ({u!r}, {v!r}) must be finite and nonnegative, got {d!r}")
    kept = [(u, v, d) for u, v, d in rows if 0 < d < kappa]
    if not kept:
        raise GraphValidationError("empty graph: no distance lies in (0, kappa)")
    d = np.array([r[2] for r in kept])
    sigma = float(np.std(d))
    if sigma == 0:
        raise GraphValidationError("all admissible distances are equal; kernel width is zero")
    w = np.exp(-(d**2) / sigma)
    nodes = [x for u, v, _ in rows for x in (u, v)]
    return validate([(u, v, wi) for (u, v, _), wi in zip(kept, w)], directed=directed, nodes=nodes)


def _rng(seed: int, *key: int) -> np.random.Generator:
    # Philox is counter-based: the stream is fixed by (seed, key) on every platform.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *key])))


def _check_p(p: float) -> None:
    if not 0 <= p <= 1:
        raise ValueError(f"edge probability must lie in [0, 1], got {p!r}")


def erdos_renyi(n: int, p: float, seed: int = 0) -> WeightedGraph:
    _check_p(p)
    if n < 0:
        raise ValueError("n must be nonnegative")
    iu, ju = np.triu_indices(n, k=1)
    keep = _rng(seed, 1).random(len(iu)) < p
    return WeightedGraph(tuple(range(n)), iu[keep], ju[keep], np.ones(int(keep.sum())), False)


def community_line(n_communities: int, community_size: int, p_in: float, seed: int = 0) -> WeightedGraph:
    """Dense Erdos-Renyi communities chained in a line by single bridge edges."""
    _check_p(p_in)
    if n_communities < 1 or community_size < 1:
        raise ValueError("need at least one community of at least one node")
    rng = _rng(seed, 2)
    iu, ju = np.triu_indices(community_size, k=1)
    src, dst = [], []
    for c in range(n_communities):
        keep = rng.random(len(iu)) < p_in
        off = c * community_size
        src.append(iu[keep] + off)
        dst.append(ju[keep] + off)
    for c in range(n_communities - 1):
        a, b = rng.integers(community_size, size=2)
        src.append(np.array([c * community_size + a]))
        dst.append(np.array([(c + 1) * community_size + b]))
    src = np.concatenate(src) if src else np.array([], dtype=np.intp)
    dst = np.concatenate(dst) if dst else np.array([], dtype=np.intp)
    return WeightedGraph(tuple(range(n_communities * community_size)), src, dst, np.ones(len(src)), False)


def complete_graph(nodes: Sequence) -> WeightedGraph:
    n = len(nodes)
    iu, ju = np.triu_indices(n, k=1)
    return WeightedGraph(tuple(nodes), iu, ju, np.ones(len(iu)), False)


def generate_graph(spec: dict, seed: int = 0) -> WeightedGraph:
    """Dispatch on ``spec["kind"]``: ``erdos_renyi`` or ``community_line``."""
    kind = spec.get("kind")
    params = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "erdos_renyi":
        return erdos_renyi(int(params["n"]), float(params["p"]), seed)
    if kind == "community_line":
        return community_line(
            int(params["n_communities"]), int(params["community_size"]), float(params["p_in"]), seed
        )
    raise ValueError(f"unknown graph kind {kind!r}")
