"""Seeded generators for white, correlated and GPVAR graph signals.

All randomness flows through :func:`rng_for`, a Philox (counter-based)
stream keyed by ``(seed, *key)``. Draws are taken in one fixed array layout
``(T, N, F)`` so a given seed always yields the same values.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import chi2

from .graph import DynamicGraph, WeightedGraph
from .signals import GraphSignal

__all__ = [
    "DistributionSpec",
    "GpvarParams",
    "DEFAULT_THETA",
    "DISTRIBUTIONS",
    "parse_distribution",
    "rng_for",
    "sample",
    "gen_white",
    "gen_correlated",
    "estimate_offset",
    "shift_operator",
    "gen_gpvar",
    "gpvar_optimal_predict",
]

OFFSET_SEED = 0x5EED
PRESAMPLE_SIZE = 10**6


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


@dataclass(frozen=True)
class DistributionSpec:
    """Zero-median scalar noise law.

    ``kind`` is one of ``gauss``, ``chi2`` (shifted by its median, with
    ``dof`` degrees of freedom), ``gaussmix`` (N(-3,1) and N(3,1)),
    ``chi2mix`` (chi2(1) and -chi2(5)) and ``unifmix`` (U[-4,0) and
    U[0,1)); mixtures use equal weights.
    """

    kind: str
    dof: int = 0

    def __post_init__(self):
        if self.kind not in _SAMPLERS:
            raise ValueError(f"unknown distribution {self.kind!r}; choose from {sorted(_SAMPLERS)}")
        if self.kind == "chi2" and self.dof < 1:
            raise ValueError("chi2 needs dof >= 1")

    @property
    def symmetric(self) -> bool:
        return self.kind in ("gauss", "gaussmix")

    @property
    def name(self) -> str:
        return f"chi2:{self.dof}" if self.kind == "chi2" else self.kind

    def __str__(self) -> str:
        return self.name

    def draw(self, rng: np.random.Generator, shape) -> np.ndarray:
        return _SAMPLERS[self.kind](rng, shape, self.dof)


def _gauss(rng, shape, _):
    return rng.standard_normal(shape)


def _chi2_shifted(rng, shape, dof):
    return rng.chisquare(dof, shape) - chi2.median(dof)


def _gaussmix(rng, shape, _):
    side = np.where(rng.random(shape) < 0.5, -3.0, 3.0)
    return side + rng.standard_normal(shape)


def _chi2mix(rng, shape, _):
    pick = rng.random(shape) < 0.5
    a = rng.chisquare(1, shape)
    b = rng.chisquare(5, shape)
    return np.where(pick, a, -b)


def _unifmix(rng, shape, _):
    pick = rng.random(shape) < 0.5
    u = rng.random(shape)
    return np.where(pick, -4.0 + 4.0 * u, u)


_SAMPLERS = {
    "gauss": _gauss,
    "chi2": _chi2_shifted,
    "gaussmix": _gaussmix,
    "chi2mix": _chi2mix,
    "unifmix": _unifmix,
}


def parse_distribution(text: str | DistributionSpec) -> DistributionSpec:
    """Parse ``gauss``, ``chi2:<d>``, ``gaussmix``, ``chi2mix`` or ``unifmix``."""
    if isinstance(text, DistributionSpec):
        return text
    kind, _, arg = text.strip().partition(":")
    if kind == "chi2":
        if not arg:
            raise ValueError("chi2 needs degrees of freedom, e.g. chi2:1")
        return DistributionSpec("chi2", int(arg))
    if arg:
        raise ValueError(f"distribution {kind!r} takes no parameter")
    return DistributionSpec(kind)


DISTRIBUTIONS = tuple(parse_distribution(s) for s in ("gauss", "chi2:1", "chi2:5", "gaussmix", "chi2mix", "unifmix"))


def _spec_key(spec: DistributionSpec) -> int:
    return zlib.crc32(spec.name.encode())


def sample(spec: DistributionSpec | str, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws from ``spec``."""
    spec = parse_distribution(spec)
    if n < 1:
        raise ValueError("n must be >= 1")
    return spec.draw(rng_for(seed, _spec_key(spec)), n)


def gen_white(dg: DynamicGraph | WeightedGraph, F: int, spec, seed: int, T: int | None = None) -> GraphSignal:
    """Independent draws at every ``(node, t, feature)`` with the node present at ``t``.

    A static graph needs ``T``.
    """
    spec = parse_distribution(spec)
    if isinstance(dg, WeightedGraph):
        if T is None:
            raise ValueError("T is required for a static graph")
        dg = DynamicGraph.from_static(dg, T)
    nodes = dg.node_union()
    index = {v: i for i, v in enumerate(nodes)}
    mask = np.zeros((dg.T, len(nodes)), dtype=bool)
    if dg.static:
        mask[:] = True
    else:
        for t, g in enumerate(dg.snapshots):
            mask[t, [index[v] for v in g.nodes]] = True
    eta = spec.draw(rng_for(seed, _spec_key(spec)), (dg.T, len(nodes), F))
    return GraphSignal(nodes, eta, mask)


def _propagate(eta: np.ndarray, adj: np.ndarray, c_sp: float, c_tm: float) -> np.ndarray:
    # x[t] = eta[t] + c_tm eta[t-1] + c_sp * sum_u w_uv eta_u[t], t >= 2 (index >= 1)
    x = eta.copy()
    if c_tm:
        x[1:] += c_tm * eta[:-1]
    if c_sp:
        x[1:] += c_sp * np.einsum("uv,tuf->tvf", adj, eta[1:])
    return x


def _check_coeffs(c_sp: float, c_tm: float) -> None:
    if c_sp < 0 or c_tm < 0:
        raise ValueError(f"c_sp and c_tm must be nonnegative, got {c_sp!r}, {c_tm!r}")


def estimate_offset(
    spec,
    c_sp: float,
    c_tm: float,
    g: WeightedGraph,
    presample_size: int = PRESAMPLE_SIZE,
    seed: int = OFFSET_SEED,
) -> float:
    """Median of the uncentred correlated process, pooled over nodes.

    Symmetric laws, or no propagation at all, give exactly 0. Otherwise the
    median is estimated from a dedicated pre-sample of at least
    ``presample_size`` propagated values (steps ``t >= 2`` only).
    """
    spec = parse_distribution(spec)
    _check_coeffs(c_sp, c_tm)
    if presample_size < 10**5:
        raise ValueError("presample_size must be >= 1e5")
    if spec.symmetric or (c_sp == 0 and c_tm == 0):
        return 0.0
    return _estimate_offset_cached(spec, float(c_sp), float(c_tm), g, int(presample_size), int(seed))


@lru_cache(maxsize=256)
def _estimate_offset_cached(spec, c_sp, c_tm, g, presample_size, seed) -> float:
    n = max(g.n_nodes, 1)
    T = -(-presample_size // n) + 1
    eta = spec.draw(rng_for(seed, _spec_key(spec)), (T, n, 1))
    x = _propagate(eta, g.adjacency(), c_sp, c_tm)
    return float(np.median(x[1:]))


def gen_correlated(
    g: WeightedGraph,
    T: int,
    F: int,
    spec,
    c_sp: float,
    c_tm: float,
    seed: int,
    m: float | None = None,
) -> GraphSignal:
    """Noise propagated over one graph hop and one time step, minus an offset.

    ``x_v[t] = eta_v[t] + c_tm eta_v[t-1] + c_sp sum_u w_uv eta_u[t] - m`` for
    ``t >= 2`` and ``x_v[1] = eta_v[1] - m``. ``m`` defaults to
    :func:`estimate_offset`. With ``c_sp = c_tm = 0`` this reproduces
    :func:`gen_white` for the same seed.
    """
    spec = parse_distribution(spec)
    _check_coeffs(c_sp, c_tm)
    if T < 2:
        raise ValueError("T must be >= 2")
    if m is None:
        m = estimate_offset(spec, c_sp, c_tm, g)
    eta = spec.draw(rng_for(seed, _spec_key(spec)), (T, g.n_nodes, F))
    x = _propagate(eta, g.adjacency(), c_sp, c_tm)
    if m:
        x -= m
    return GraphSignal(g.nodes, x, np.ones((T, g.n_nodes), dtype=bool))


DEFAULT_THETA = np.array([[5.0, 2.0], [-4.0, 6.0], [-1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class GpvarParams:
    """Graph polynomial VAR coefficients.

    ``theta[l, q-1]`` multiplies ``S**l x[t-q]`` for hop ``l = 0..L`` and
    lag ``q = 1..Q``. ``noise_scale`` is the standard deviation of the
    Gaussian innovations.
    """

    theta: np.ndarray = field(default_factory=lambda: DEFAULT_THETA.copy())
    noise_scale: float = 1.0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[1] < 1:
            raise ValueError(f"theta must have shape (L+1, Q) with Q >= 1, got {theta.shape}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if not self.noise_scale > 0:
            raise ValueError("noise_scale must be positive")

    @property
    def L(self) -> int:
        return self.theta.shape[0] - 1

    @property
    def Q(self) -> int:
        return self.theta.shape[1]

    def perturbed(self, factor: float = 1.5) -> GpvarParams:
        return GpvarParams(self.theta * factor, self.noise_scale)


def shift_operator(g: WeightedGraph) -> np.ndarray:
    """Symmetrically normalised adjacency with self-connections, ``D^-1/2 (I + A) D^-1/2``.

    ``D`` holds the row sums of ``I + A``, so isolated nodes stay finite.
    """
    a = np.eye(g.n_nodes) + g.adjacency()
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return d[:, None] * a * d[None, :]


def _lag_filters(g: WeightedGraph, params: GpvarParams) -> np.ndarray:
    # P[q-1] = sum_l theta[l, q-1] S^l, shape (Q, N, N)
    S = shift_operator(g)
    powers = [np.eye(g.n_nodes)]
    for _ in range(params.L):
        powers.append(powers[-1] @ S)
    powers = np.stack(powers)
    return np.einsum("lq,lij->qij", params.theta, powers)


def _step(P: np.ndarray, history: np.ndarray, t: int) -> np.ndarray:
    # history[t-q] for q = 1..Q; identical arithmetic in generator and predictor.
    z = P[0] @ history[t - 1]
    for q in range(1, P.shape[0]):
        z = z + P[q] @ history[t - 1 - q]
    return np.tanh(z)


def gen_gpvar(
    g: WeightedGraph,
    T: int,
    params: GpvarParams | None = None,
    seed: int = 0,
    burn_in: int = 100,
) -> tuple[GraphSignal, GraphSignal]:
    """Simulate ``x[t] = tanh(sum_{l,q} theta[l,q] S^l x[t-q]) + eta[t]``.

    The first ``Q`` states are standard normal draws and the first
    ``burn_in`` simulated steps are discarded. Returns ``(x, eta)`` where
    ``eta[t] = x[t] - filter(history)`` is the innovation realised in ``x``
    (it equals the raw draw up to one rounding), so residuals of
    :func:`gpvar_optimal_predict` reproduce it bit for bit.
    """
    params = params or GpvarParams()
    Q = params.Q
    if T < Q:
        raise ValueError(f"T must be >= Q = {Q}")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    n = g.n_nodes
    rng = rng_for(seed, 3)
    total = Q + burn_in + T
    x = np.empty((total, n))
    x[:Q] = rng.standard_normal((Q, n))
    noise = params.noise_scale * rng.standard_normal((total - Q, n))
    P = _lag_filters(g, params)
    eta = np.empty((total, n))
    eta[:Q] = x[:Q]
    for t in range(Q, total):
        z = _step(P, x, t)
        x[t] = z + noise[t - Q]
        eta[t] = x[t] - z
    keep = slice(total - T, total)
    full = np.ones((T, n), dtype=bool)
    return GraphSignal(g.nodes, x[keep, :, None], full), GraphSignal(g.nodes, eta[keep, :, None], full)


def gpvar_optimal_predict(x: GraphSignal, g: WeightedGraph, params: GpvarParams | None = None) -> GraphSignal:
    """One-step-ahead noiseless GPVAR forecast; the first ``Q`` steps are unobserved."""
    params = params or GpvarParams()
    if x.F != 1:
        raise ValueError("GPVAR signals are scalar (F == 1)")
    if tuple(x.nodes) != tuple(g.nodes):
        extra = [v for v in x.nodes if v not in g]
        if extra:
            raise ValueError(f"signal nodes not in the graph: {extra[:20]}")
        x_vals = np.full((x.T, g.n_nodes), np.nan)
        for i, v in enumerate(g.nodes):
            if v not in x:
                raise ValueError(f"node {v!r} of the graph has no signal")
            x_vals[:, i] = x.values[:, x.index(v), 0]
    else:
        x_vals = np.ascontiguousarray(x.values[:, :, 0])
    if not np.isfinite(x_vals).all():
        raise ValueError("GPVAR prediction needs a complete signal")
    Q = params.Q
    P = _lag_filters(g, params)
    pred = np.full_like(x_vals, np.nan)
    for t in range(Q, x.T):
        pred[t] = _step(P, x_vals, t)
    mask = np.ones(pred.shape, dtype=bool)
    mask[:Q] = False
    return GraphSignal(g.nodes, pred[:, :, None], mask)
