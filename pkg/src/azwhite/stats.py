"""AZ whiteness statistic, Gaussian p-values and companion tests.

The statistic sums the signs of inner products between signals at the two
ends of every edge, weighted by the edge weight, and normalises by the null
standard deviation. For spatio-temporal data the sum splits into a spatial
part (edges inside each snapshot) and a temporal part (the same node at
consecutive steps); the two are recombined with a mixing weight ``lam``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, replace
from statistics import NormalDist
from typing import NamedTuple

import numpy as np
from scipy.stats import binom

from .graph import DynamicGraph, WeightedGraph, symmetrize, temporal_weight
from .signals import GraphSignal

__all__ = [
    "StatisticError",
    "MissingSignalError",
    "SmallSampleWarning",
    "TestResult",
    "FeatureTests",
    "sign_product",
    "c_tilde",
    "az_statistic_static",
    "az_statistic_dynamic",
    "gaussian_two_sided_p",
    "threshold",
    "median_sign_test",
    "binomial_two_sided_p",
    "center_median",
    "combine_pvalues",
    "per_feature",
    "restrict_to_signal",
]

SMALL_SAMPLE_EDGES = 30


class StatisticError(ValueError):
    """The statistic is undefined for the given inputs."""


class MissingSignalError(StatisticError):
    """An edge endpoint carries no observation."""


class SmallSampleWarning(UserWarning):
    """Few effective edges; the Gaussian approximation may be poor."""


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    c_tilde_sp: float
    c_tilde_tm: float
    w2_sp: float
    w2_tm: float
    lam: float
    c: float
    p_value: float
    alpha: float
    reject: bool
    n_spatial_edges: int
    n_temporal_edges: int
    n_zero_signs: int
    w_tm: float | None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        order = [
            "c_tilde_sp", "c_tilde_tm", "w2_sp", "w2_tm", "lambda", "c", "p_value", "alpha",
            "reject", "n_spatial_edges", "n_temporal_edges", "n_zero_signs", "w_tm",
        ]  # fmt: skip
        return {k: d[k] for k in order}


def sign_product(x, y) -> int:
    """Sign of ``x . y`` as -1, 0 or +1."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.size == 1:
        return int(np.sign(x[0]) * np.sign(y[0]))
    return int(np.sign(np.dot(x, y)))


def _signs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # a, b: (..., F). Scalar case avoids underflow of tiny products to zero.
    if a.shape[-1] == 1:
        return (np.sign(a[..., 0]) * np.sign(b[..., 0])).astype(np.int8)
    return np.sign(np.einsum("...f,...f->...", a, b)).astype(np.int8)


class _Parts(NamedTuple):
    c_sp: float
    w2_sp: float
    n_sp: int
    sign_sum_tm: int
    n_tm: int
    n_zero: int


def restrict_to_signal(dg: DynamicGraph, X: GraphSignal) -> DynamicGraph:
    """Drop, per snapshot, every node lacking an observation (and its edges)."""
    snaps = []
    cache: dict = {}
    for t, g in enumerate(dg.snapshots, start=1):
        idx = _signal_index(g, X)
        keep = (idx >= 0) & X.mask[t - 1, np.maximum(idx, 0)]
        key = (id(g), keep.tobytes())
        if key not in cache:
            ok = keep[g.src] & keep[g.dst] if g.n_edges else np.zeros(0, dtype=bool)
            nodes = tuple(v for v, k in zip(g.nodes, keep) if k)
            remap = np.cumsum(keep) - 1
            cache[key] = WeightedGraph(nodes, remap[g.src[ok]], remap[g.dst[ok]], g.weight[ok], g.directed)
        snaps.append(cache[key])
    return DynamicGraph(tuple(snaps))


def _signal_index(g: WeightedGraph, X: GraphSignal) -> np.ndarray:
    return np.array([X._index.get(v, -1) for v in g.nodes], dtype=np.intp)


def _spatial_static(g: WeightedGraph, X: GraphSignal) -> tuple[float, float, int, int]:
    sg = symmetrize(g)
    idx = _signal_index(sg, X)
    su, sv = idx[sg.src], idx[sg.dst]
    T = X.T
    if sg.n_edges == 0:
        return 0.0, 0.0, 0, 0
    bad = (su < 0) | (sv < 0)
    if bad.any():
        e = int(np.flatnonzero(bad)[0])
        v = sg.nodes[sg.src[e]] if su[e] < 0 else sg.nodes[sg.dst[e]]
        raise MissingSignalError(f"node {v!r} has no signal; edge endpoints must be observed")
    ok = X.mask[:, su] & X.mask[:, sv]
    if not ok.all():
        ti, e = (int(a[0]) for a in np.nonzero(~ok))
        v = sg.nodes[sg.src[e]] if not X.mask[ti, su[e]] else sg.nodes[sg.dst[e]]
        raise MissingSignalError(f"node {v!r} has no signal at t={ti + 1}; edge endpoints must be observed")
    s = _signs(X.values[:, su], X.values[:, sv])  # (T, E)
    per_edge = s.sum(axis=0, dtype=np.int64)
    c_sp = math.fsum(sg.weight * per_edge)
    w2_sp = T * math.fsum(sg.weight**2)
    return c_sp, w2_sp, T * sg.n_edges, int(np.count_nonzero(s == 0))


def _spatial_dynamic(dg: DynamicGraph, X: GraphSignal) -> tuple[float, float, int, int]:
    terms, squares = [], []
    n_sp = n_zero = 0
    prepared: dict = {}
    for t, g in enumerate(dg.snapshots, start=1):
        if id(g) not in prepared:
            sg = symmetrize(g)
            prepared[id(g)] = (sg, _signal_index(sg, X))
        sg, idx = prepared[id(g)]
        if sg.n_edges == 0:
            continue
        su, sv = idx[sg.src], idx[sg.dst]
        obs_t = X.mask[t - 1]
        for a, ends in ((su, sg.src), (sv, sg.dst)):
            bad = (a < 0) | ~obs_t[np.maximum(a, 0)]
            if bad.any():
                v = sg.nodes[ends[np.flatnonzero(bad)[0]]]
                raise MissingSignalError(f"node {v!r} has no signal at t={t}; edge endpoints must be observed")
        s = _signs(X.values[t - 1, su], X.values[t - 1, sv])
        terms.append(sg.weight * s)
        squares.append(sg.weight**2)
        n_sp += sg.n_edges
        n_zero += int(np.count_nonzero(s == 0))
    if not terms:
        return 0.0, 0.0, 0, 0
    return math.fsum(np.concatenate(terms)), math.fsum(np.concatenate(squares)), n_sp, n_zero


def _temporal(dg: DynamicGraph, X: GraphSignal) -> tuple[int, int, int]:
    T = dg.T
    if T < 2:
        return 0, 0, 0
    N = len(X.nodes)
    mask = X.mask
    in_graph = np.zeros((T, N), dtype=bool)
    outsiders: list[set] = []
    snaps = dg.snapshots[:1] if dg.static else dg.snapshots
    for t, g in enumerate(snaps):
        idx = _signal_index(g, X)
        row = in_graph[t] if not dg.static else in_graph[0]
        row[idx[idx >= 0]] = True
        outsiders.append({v for v, i in zip(g.nodes, idx) if i < 0})
    if dg.static:
        in_graph[1:] = in_graph[0]
        if outsiders[0]:
            v = next(iter(outsiders[0]))
            raise MissingSignalError(f"node {v!r} has no signal at t=1; temporal edge endpoints must be observed")
    else:
        for t in range(T - 1):
            both = outsiders[t] & outsiders[t + 1]
            if both:
                v = next(iter(both))
                raise MissingSignalError(
                    f"node {v!r} has no signal at t={t + 1}; temporal edge endpoints must be observed"
                )
    present = mask | in_graph
    pair = present[:-1] & present[1:]
    ok = mask[:-1] & mask[1:]
    if (pair & ~ok).any():
        ti, i = (int(a[0]) for a in np.nonzero(pair & ~ok))
        t = ti + 1 if not mask[ti, i] else ti + 2
        raise MissingSignalError(
            f"node {X.nodes[i]!r} has no signal at t={t}; temporal edge endpoints must be observed"
        )
    s = _signs(X.values[:-1][pair], X.values[1:][pair])
    return int(s.sum(dtype=np.int64)), int(pair.sum()), int(np.count_nonzero(s == 0))


def _decompose(dg: DynamicGraph, X: GraphSignal) -> _Parts:
    if X.T != dg.T:
        raise StatisticError(f"signal has T={X.T} steps but the graph has T={dg.T}")
    if dg.static:
        c_sp, w2_sp, n_sp, z_sp = _spatial_static(dg.snapshots[0], X)
    else:
        c_sp, w2_sp, n_sp, z_sp = _spatial_dynamic(dg, X)
    s_tm, n_tm, z_tm = _temporal(dg, X)
    return _Parts(c_sp, w2_sp, n_sp, s_tm, n_tm, z_sp + z_tm)


def _resolve_w_tm(parts: _Parts, override: float | None) -> float | None:
    if override is not None:
        if not (math.isfinite(override) and override > 0):
            raise ValueError(f"temporal weight must be positive, got {override!r}")
        return float(override)
    if parts.n_tm == 0:
        return None
    if parts.w2_sp > 0:
        return temporal_weight(parts.w2_sp, parts.n_tm)
    return 1.0


def gaussian_two_sided_p(c: float) -> float:
    """``2 * (1 - Phi(|c|))`` computed as ``erfc(|c| / sqrt 2)`` to avoid cancellation."""
    c = float(c)
    if not math.isfinite(c):
        raise ValueError(f"statistic must be finite, got {c!r}")
    return min(1.0, math.erfc(abs(c) / math.sqrt(2.0)))


def threshold(alpha: float) -> float:
    """Two-sided rejection threshold: the ``1 - alpha/2`` standard normal quantile."""
    _check_alpha(alpha)
    return NormalDist().inv_cdf(1.0 - alpha / 2.0)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


def _finish(parts: _Parts, lam: float, alpha: float, w_tm: float | None, feature_copies: int = 1) -> TestResult:
    c_tm = 0.0 if w_tm is None else w_tm * parts.sign_sum_tm
    w2_tm = 0.0 if w_tm is None else feature_copies * parts.n_tm * w_tm * w_tm
    num = lam * parts.c_sp + (1.0 - lam) * c_tm
    den2 = lam * lam * parts.w2_sp + (1.0 - lam) ** 2 * w2_tm
    if not den2 > 0:
        if lam == 0.0:
            raise StatisticError("no temporal edges: statistic with lambda=0 is undefined")
        if lam == 1.0:
            raise StatisticError("no spatial edges: statistic with lambda=1 is undefined")
        raise StatisticError("no edges: statistic undefined")
    effective = (parts.n_sp if lam > 0 else 0) + (parts.n_tm if lam < 1 else 0)
    if effective < SMALL_SAMPLE_EDGES:
        warnings.warn(
            f"only {effective} effective edges; the Gaussian approximation is asymptotic",
            SmallSampleWarning,
            stacklevel=3,
        )
    c = num / math.sqrt(den2)
    p = gaussian_two_sided_p(c)
    return TestResult(
        c_tilde_sp=parts.c_sp,
        c_tilde_tm=c_tm,
        w2_sp=parts.w2_sp,
        w2_tm=w2_tm,
        lam=float(lam),
        c=c,
        p_value=p,
        alpha=float(alpha),
        reject=p < alpha,
        n_spatial_edges=parts.n_sp,
        n_temporal_edges=parts.n_tm,
        n_zero_signs=parts.n_zero,
        w_tm=w_tm,
    )


def c_tilde(g: WeightedGraph, X: GraphSignal) -> float:
    """Weighted sign sum over the edges of a static graph (``X.T`` must be 1)."""
    if X.T != 1:
        raise StatisticError("c_tilde expects a static signal (T == 1)")
    return _spatial_static(g, X)[0]


def az_statistic_static(g: WeightedGraph, X: GraphSignal, alpha: float = 0.05) -> TestResult:
    """AZ test of a static signal on a static graph.

    Directed graphs are symmetrised first, which leaves the statistic
    unchanged. Temporal fields of the result are zero and ``w_tm`` is None.
    """
    _check_alpha(alpha)
    if g.n_edges == 0:
        raise StatisticError("no edges: statistic undefined")
    if X.T != 1:
        raise StatisticError("az_statistic_static expects a static signal (T == 1)")
    c_sp, w2_sp, n_sp, n_zero = _spatial_static(g, X)
    return _finish(_Parts(c_sp, w2_sp, n_sp, 0, 0, n_zero), 1.0, alpha, None)


def az_statistic_dynamic(
    dg: DynamicGraph,
    X: GraphSignal,
    lam: float = 0.5,
    alpha: float = 0.05,
    w_tm_override: float | None = None,
) -> TestResult:
    """AZ test of a spatio-temporal signal on a dynamic graph.

    Computes the spatial and temporal sign sums directly from the
    snapshots, without building the multiplex graph. ``lam`` weights the
    spatial part and ``1 - lam`` the temporal one; ``lam = 0.5`` equals the
    plain statistic on the multiplex graph. Unless overridden, temporal
    edges get the weight that equalises the two null variances.
    """
    _check_alpha(alpha)
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam!r}")
    parts = _decompose(dg, X)
    return _finish(parts, lam, alpha, _resolve_w_tm(parts, w_tm_override))


def binomial_two_sided_p(k: int, n: int) -> float:
    """Exact two-sided test of ``P(success) = 1/2``: twice the smaller tail, capped at 1."""
    if n <= 0:
        raise ValueError("need at least one trial")
    lower = binom.cdf(k, n, 0.5)
    upper = binom.sf(k - 1, n, 0.5)
    return float(min(1.0, 2.0 * min(lower, upper)))


def median_sign_test(X, feature: int | None = None) -> float:
    """Exact binomial sign test of a zero median.

    ``X`` is a :class:`GraphSignal` or an array of scalar observations.
    Exact zeros are discarded. A multivariate signal needs ``feature``
    unless every component should be pooled, in which case pass
    ``feature=-1``.
    """
    if isinstance(X, GraphSignal):
        obs = X.observed()
        if X.F > 1 and feature is None:
            raise ValueError("signal has F > 1: pass feature=<index>, or feature=-1 to pool components")
        vals = obs.ravel() if (feature is None or feature == -1) else obs[:, feature]
    else:
        vals = np.asarray(X, dtype=float).ravel()
    pos = int(np.count_nonzero(vals > 0))
    neg = int(np.count_nonzero(vals < 0))
    if pos + neg == 0:
        raise StatisticError("all observations are zero: sign test undefined")
    return binomial_two_sided_p(pos, pos + neg)


def center_median(X: GraphSignal) -> tuple[GraphSignal, np.ndarray]:
    """Subtract the per-feature median over all observations; returns ``(signal, offsets)``."""
    offsets = np.median(X.observed(), axis=0)
    return X.with_values(X.values - offsets), offsets


CORRECTIONS = ("none", "bonferroni", "hochberg")


def combine_pvalues(p_values, alpha: float = 0.05, correction: str = "bonferroni") -> np.ndarray:
    """Per-hypothesis rejections under a family-wise correction.

    ``hochberg`` is the step-up procedure: with ascending p-values
    ``p_(1) <= ... <= p_(m)``, find the largest ``k`` with
    ``p_(k) <= alpha / (m - k + 1)`` and reject hypotheses ``1..k``.
    """
    _check_alpha(alpha)
    p = np.asarray(p_values, dtype=float)
    m = len(p)
    if correction == "none":
        return p < alpha
    if correction == "bonferroni":
        return p < alpha / m
    if correction == "hochberg":
        order = np.argsort(p, kind="stable")
        ranks = np.arange(1, m + 1)
        ok = p[order] <= alpha / (m - ranks + 1)
        reject = np.zeros(m, dtype=bool)
        if ok.any():
            k = int(np.flatnonzero(ok)[-1])
            reject[order[: k + 1]] = True
        return reject
    raise ValueError(f"unknown correction {correction!r}; choose from {CORRECTIONS + ('sum',)}")


@dataclass(frozen=True)
class FeatureTests:
    results: list[TestResult]
    p_values: np.ndarray
    reject_each: np.ndarray
    reject: bool
    correction: str


def per_feature(
    dg: DynamicGraph,
    X: GraphSignal,
    lam: float = 0.5,
    alpha: float = 0.05,
    correction: str = "hochberg",
    w_tm_override: float | None = None,
) -> FeatureTests:
    """Scalar AZ test on each feature slice, with a combined decision.

    ``correction="sum"`` instead adds the per-feature sign sums into a
    single statistic (valid when the components are independent); its
    result list then holds that one combined test.
    """
    if X.F == 1:
        warnings.warn("F == 1: multiple-testing correction is a no-op", UserWarning, stacklevel=2)
    _check_alpha(alpha)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam!r}")
    parts = [_decompose(dg, X.feature(f)) for f in range(X.F)]
    if correction == "sum":
        F = X.F
        total = _Parts(
            math.fsum(p.c_sp for p in parts),
            F * parts[0].w2_sp,
            F * parts[0].n_sp,
            sum(p.sign_sum_tm for p in parts),
            parts[0].n_tm,
            sum(p.n_zero for p in parts),
        )
        res = _finish(total, lam, alpha, _resolve_w_tm(parts[0], w_tm_override), feature_copies=F)
        res = replace(res, n_temporal_edges=F * parts[0].n_tm)
        return FeatureTests([res], np.array([res.p_value]), np.array([res.reject]), res.reject, correction)
    results = [_finish(p, lam, alpha, _resolve_w_tm(p, w_tm_override)) for p in parts]
    pv = np.array([r.p_value for r in results])
    rej = combine_pvalues(pv, alpha, correction)
    return FeatureTests(results, pv, rej, bool(rej.any()), correction)
