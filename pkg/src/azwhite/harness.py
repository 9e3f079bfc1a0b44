"""Monte-Carlo experiment drivers: calibration, power, sparsity and residual tables."""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import beta

from .fileio import dumps_json, fmt_float
from .graph import DynamicGraph, WeightedGraph, community_line, complete_graph
from .signalgen import (
    GpvarParams,
    _spec_key,
    estimate_offset,
    gen_correlated,
    gen_gpvar,
    gpvar_optimal_predict,
    parse_distribution,
)
from .signals import GraphSignal
from .stats import (
    SmallSampleWarning,
    StatisticError,
    _decompose,
    _finish,
    _resolve_w_tm,
    center_median,
    median_sign_test,
    restrict_to_signal,
)

__all__ = [
    "ExperimentConfig",
    "Cell",
    "RejectionReport",
    "ResidualRow",
    "GpvarExperiment",
    "clopper_pearson",
    "default_graph",
    "run_experiment",
    "run_calibration",
    "run_power_sweep",
    "run_sparse_vs_complete",
    "residual_analysis",
    "format_residual_table",
    "gpvar_optimality_experiment",
    "load_config",
]

REPORT_COLUMNS = ("dist", "c_sp", "c_tm", "T", "F", "lambda", "mode", "R", "rejections", "rate", "ci_lo", "ci_hi")
COUPLINGS = ("both", "spatial", "temporal")
EDGE_MODES = ("sparse", "complete")


def default_graph(seed: int = 0) -> WeightedGraph:
    """Stand-in test graph: five 6-node communities chained in a line (30 nodes)."""
    return community_line(5, 6, 0.8, seed=seed)


def workers_from_env() -> int:
    """Thread count from ``AZW_THREADS`` (unset means 1, 0 means every core)."""
    n = int(os.environ.get("AZW_THREADS", "1") or 1)
    if n == 0:
        return os.cpu_count() or 1
    return max(n, 1)


@dataclass(frozen=True)
class ExperimentConfig:
    graph: WeightedGraph = field(default_factory=default_graph)
    T: tuple = (500,)
    F: tuple = (1,)
    c: tuple = (0.0,)
    coupling: str = "both"
    distributions: tuple = ("gauss",)
    R: int = 100
    alpha: float = 0.05
    lambdas: tuple = (0.5,)
    seed: int = 0
    edge_modes: tuple = ("sparse",)
    workers: int | None = None

    def __post_init__(self):
        for name in ("T", "F", "c", "distributions", "lambdas", "edge_modes"):
            val = getattr(self, name)
            val = tuple(val) if isinstance(val, (list, tuple)) else (val,)
            if not val:
                raise ValueError(f"grid {name!r} must be non-empty")
            object.__setattr__(self, name, val)
        object.__setattr__(self, "distributions", tuple(parse_distribution(d) for d in self.distributions))
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"coupling must be one of {COUPLINGS}")
        bad = [m for m in self.edge_modes if m not in EDGE_MODES]
        if bad:
            raise ValueError(f"unknown edge mode(s) {bad}; choose from {EDGE_MODES}")
        if any(T < 2 for T in self.T):
            raise ValueError("every T must be >= 2")
        if any(c < 0 for c in self.c):
            raise ValueError("correlation levels must be nonnegative")

    def coefficients(self, c: float) -> tuple[float, float]:
        if self.coupling == "both":
            return c, c
        if self.coupling == "spatial":
            return c, 0.0
        return 0.0, c


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class Cell:
    dist: str
    c_sp: float
    c_tm: float
    T: int
    F: int
    lam: float
    mode: str
    R: int
    rejections: int
    rate: float
    ci_lo: float
    ci_hi: float
    mean_abs_c: float
    mean_p: float

    def as_row(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d


@dataclass
class RejectionReport:
    cells: list[Cell]

    def select(self, **filters) -> list[Cell]:
        key = {"lambda": "lam"}
        out = []
        for cell in self.cells:
            if all(_close(getattr(cell, key.get(k, k)), v) for k, v in filters.items()):
                out.append(cell)
        return out

    def get(self, **filters) -> Cell:
        found = self.select(**filters)
        if len(found) != 1:
            raise KeyError(f"{len(found)} cells match {filters}")
        return found[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for cell in self.cells:
            row = cell.as_row()
            w.writerow([_fmt(row[k]) for k in REPORT_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return dumps_json([c.as_row() for c in self.cells])


def _close(a, b) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        return math.isclose(float(a), float(b), rel_tol=0, abs_tol=1e-12)
    return str(a) == str(b)


def _fmt(x) -> str:
    return fmt_float(x) if isinstance(x, float) else str(x)


def _signal_cells(cfg: ExperimentConfig):
    for dist in cfg.distributions:
        for T in cfg.T:
            for F in cfg.F:
                for c in cfg.c:
                    yield dist, T, F, c


def run_experiment(cfg: ExperimentConfig) -> RejectionReport:
    """Rejection rates for every (dist, c, T, F, lambda, mode) cell.

    Repetition ``r`` of a signal cell draws its noise from a stream keyed by
    ``(seed, dist, T, F, r)``; correlation level, edge mode and lambda are
    not part of the key, so those comparisons are paired.
    """
    graphs = {"sparse": cfg.graph, "complete": complete_graph(cfg.graph.nodes)}
    offsets = {}
    tasks = []
    for dist, T, F, c in _signal_cells(cfg):
        c_sp, c_tm = cfg.coefficients(c)
        if (dist, c) not in offsets:
            offsets[dist, c] = estimate_offset(dist, c_sp, c_tm, cfg.graph)
        for r in range(cfg.R):
            tasks.append((dist, T, F, c, c_sp, c_tm, offsets[dist, c], r))

    def run(task):
        dist, T, F, c, c_sp, c_tm, m, r = task
        seed = [cfg.seed, _spec_key(dist), T, F, r]
        X = gen_correlated(cfg.graph, T, F, dist, c_sp, c_tm, _seed_int(seed), m=m)
        out = {}
        for mode in cfg.edge_modes:
            dg = DynamicGraph.from_static(graphs[mode], T)
            parts = _decompose(dg, X)
            w_tm = _resolve_w_tm(parts, None)
            for lam in cfg.lambdas:
                res = _finish(parts, lam, cfg.alpha, w_tm)
                out[mode, lam] = (res.reject, abs(res.c), res.p_value)
        return out

    workers = cfg.workers if cfg.workers is not None else workers_from_env()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                outcomes = list(pool.map(run, tasks))
        else:
            outcomes = [run(t) for t in tasks]

    cells = []
    i = 0
    for dist, T, F, c in _signal_cells(cfg):
        block = outcomes[i : i + cfg.R]
        i += cfg.R
        c_sp, c_tm = cfg.coefficients(c)
        for mode in cfg.edge_modes:
            for lam in cfg.lambdas:
                rows = [o[mode, lam] for o in block]
                k = sum(1 for rej, _, _ in rows if rej)
                lo, hi = clopper_pearson(k, cfg.R)
                cells.append(
                    Cell(
                        dist=dist.name,
                        c_sp=float(c_sp),
                        c_tm=float(c_tm),
                        T=int(T),
                        F=int(F),
                        lam=float(lam),
                        mode=mode,
                        R=cfg.R,
                        rejections=k,
                        rate=k / cfg.R,
                        ci_lo=lo,
                        ci_hi=hi,
                        mean_abs_c=float(np.mean([a for _, a, _ in rows])),
                        mean_p=float(np.mean([p for _, _, p in rows])),
                    )
                )
    return RejectionReport(cells)


def _seed_int(parts: Sequence[int]) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def run_calibration(cfg: ExperimentConfig) -> RejectionReport:
    """Rejection rates of white signals, which should sit near ``alpha``."""
    if set(cfg.c) != {0.0}:
        raise ValueError("calibration runs need the correlation grid {0}")
    return run_experiment(cfg)


def run_power_sweep(cfg: ExperimentConfig) -> RejectionReport:
    if len(cfg.c) < 2:
        raise ValueError("a power sweep needs at least two correlation levels")
    return run_experiment(cfg)


def run_sparse_vs_complete(cfg: ExperimentConfig) -> RejectionReport:
    """Paired comparison of the graph's own edges against all node pairs.

    Correlation is spatial only, so every difference between the two modes
    comes from which pairs enter the sign sum.
    """
    cfg = replace(cfg, edge_modes=("sparse", "complete"), coupling="spatial")
    return run_experiment(cfg)


@dataclass(frozen=True)
class ResidualRow:
    name: str
    mae: float
    median_p: float
    az_p: dict

    def as_row(self) -> dict:
        row = {"name": self.name, "mae": self.mae, "median_p": self.median_p}
        row.update({f"az_lambda_{lam:g}": p for lam, p in self.az_p.items()})
        return row


def _check_nodes(X: GraphSignal, dg: DynamicGraph) -> None:
    graph_nodes = set(dg.node_union()) if dg.static else {v for g in dg.snapshots for v in g.nodes}
    sig = set(X.nodes)
    extra = sig - graph_nodes
    missing = graph_nodes - sig
    if extra or missing:
        parts = []
        if missing:
            parts.append(f"graph nodes without residuals: {sorted(missing, key=repr)[:20]}")
        if extra:
            parts.append(f"residual nodes not in graph: {sorted(extra, key=repr)[:20]}")
        raise ValueError("node mismatch between graph and residuals; " + "; ".join(parts))


def _analyse(name: str, X: GraphSignal, dg: DynamicGraph, lambdas, alpha) -> ResidualRow:
    obs = X.observed()
    mae = float(np.mean(np.abs(obs)))
    try:
        med_p = median_sign_test(X, feature=-1 if X.F > 1 else None)
    except StatisticError:
        med_p = float("nan")
    restricted = dg
    if dg.static and not X.mask.all():
        # A predictor warm-up leaves whole leading steps empty; when nothing
        # else is missing, the remaining window is again a static graph.
        first = int(np.argmax(X.mask.any(axis=1)))
        tail = X.mask[first:]
        if tail.all():
            X = GraphSignal(X.nodes, X.values[first:], tail)
            restricted = DynamicGraph.from_static(dg.snapshots[0], X.T)
    if not X.mask.all() and restricted is dg:
        restricted = restrict_to_signal(dg, X)
    az = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallSampleWarning)
        parts = _decompose(restricted, X)
        w_tm = _resolve_w_tm(parts, None)
        for lam in lambdas:
            try:
                az[float(lam)] = _finish(parts, float(lam), alpha, w_tm).p_value
            except StatisticError:
                az[float(lam)] = float("nan")
    return ResidualRow(name, mae, med_p, az)


def residual_analysis(
    residuals: GraphSignal | Mapping[str, GraphSignal],
    graph: WeightedGraph | DynamicGraph,
    lambdas: Iterable[float] = (0.0, 0.5, 1.0),
    alpha: float = 0.05,
) -> list[ResidualRow]:
    """Residual diagnostics in the layout MAE | median test | AZ p-value per lambda.

    Every residual set produces a row and a ``-m`` row computed after
    subtracting the empirical median. Nodes or steps without residuals
    (for instance the warm-up of a predictor) are removed from the graph
    before testing.
    """
    if isinstance(residuals, GraphSignal):
        residuals = {"residuals": residuals}
    lambdas = tuple(lambdas)
    rows = []
    for name, X in residuals.items():
        dg = graph if isinstance(graph, DynamicGraph) else DynamicGraph.from_static(graph, X.T)
        if dg.T != X.T:
            raise ValueError(f"{name}: residuals span T={X.T} but the graph has T={dg.T}")
        _check_nodes(X, dg)
        rows.append(_analyse(name, X, dg, lambdas, alpha))
        centred, _ = center_median(X)
        rows.append(_analyse(f"{name}-m", centred, dg, lambdas, alpha))
    return rows


def _pfmt(p: float) -> str:
    if not math.isfinite(p):
        return "n/a"
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def format_residual_table(rows: Sequence[ResidualRow]) -> str:
    lambdas = list(rows[0].az_p) if rows else []
    header = ["", "MAE", "Median=0"] + [f"AZ-test(lambda={lam:g})" for lam in lambdas]
    body = [[r.name, f"{r.mae:.3f}", _pfmt(r.median_p)] + [_pfmt(r.az_p[lam]) for lam in lambdas] for r in rows]
    widths = [max(len(x[i]) for x in [header] + body) for i in range(len(header))]
    lines = ["  ".join(s.rjust(w) for s, w in zip(line, widths)) for line in [header] + body]
    return "\n".join(lines) + "\n"


@dataclass
class GpvarExperiment:
    table: list[ResidualRow]
    rejections: dict
    R: int
    mae_matches_noise: bool

    def rate(self, predictor: str, lam: float = 0.5) -> float:
        return self.rejections[predictor, float(lam)] / self.R


def gpvar_optimality_experiment(
    graph: WeightedGraph | None = None,
    T: int = 3000,
    R: int = 50,
    params: GpvarParams | None = None,
    perturb: float | GpvarParams = 1.5,
    lambdas: Iterable[float] = (0.0, 0.5, 1.0),
    alpha: float = 0.05,
    seed: int = 0,
    burn_in: int = 100,
) -> GpvarExperiment:
    """Optimal versus mis-specified GPVAR predictor over ``R`` simulations.

    ``perturb`` is either a factor applied to every coefficient or a full
    set of alternative parameters for the mis-specified predictor. The
    table holds the residual analysis of the first simulation; the
    rejection counts cover all of them, per predictor and lambda.
    """
    graph = graph or default_graph()
    params = params or GpvarParams()
    wrong = perturb if isinstance(perturb, GpvarParams) else params.perturbed(perturb)
    lambdas = tuple(float(x) for x in lambdas)
    rejections = {(name, lam): 0 for name in ("optimal", "perturbed") for lam in lambdas}
    table: list[ResidualRow] = []
    mae_ok = True
    for r in range(R):
        x, eta = gen_gpvar(graph, T, params, seed=_seed_int([seed, r]), burn_in=burn_in)
        res = {}
        for name, p in (("optimal", params), ("perturbed", wrong)):
            pred = gpvar_optimal_predict(x, graph, p)
            res[name] = GraphSignal(x.nodes, x.values - pred.values, pred.mask)
        opt_obs = res["optimal"].observed()
        noise_obs = eta.values[res["optimal"].mask]
        mae_ok &= bool(np.array_equal(opt_obs, noise_obs))
        rows = residual_analysis(res, graph, lambdas, alpha)
        if r == 0:
            table = rows
        for row in rows:
            if row.name in ("optimal", "perturbed"):
                for lam in lambdas:
                    rejections[row.name, lam] += int(row.az_p[lam] < alpha)
    return GpvarExperiment(table, rejections, R, mae_ok)


_LIST_KEYS = {"T": int, "F": int, "c": float, "dist": str, "lambda": float, "mode": str}
_SCALAR_KEYS = {"R": int, "alpha": float, "seed": int, "coupling": str, "workers": int}
_GRAPH_KEYS = {"graph", "graph_kind", "n", "p", "n_communities", "community_size", "p_in", "graph_seed"}


def load_config(text: str, graph_loader=None) -> ExperimentConfig:
    """Parse flat ``key = value`` text (``#`` comments; lists comma-separated).

    Keys: ``T F c dist lambda mode`` (lists), ``R alpha seed coupling
    workers``, and either ``graph = <edge-list path>`` or ``graph_kind``
    with its generator parameters and ``graph_seed``.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {lineno}: expected key = value")
        key = key.strip()
        if key not in _LIST_KEYS and key not in _SCALAR_KEYS and key not in _GRAPH_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        raw[key] = value.strip()

    kwargs: dict = {}
    names = {"dist": "distributions", "lambda": "lambdas", "mode": "edge_modes"}
    for key, typ in _LIST_KEYS.items():
        if key in raw:
            kwargs[names.get(key, key)] = tuple(typ(v.strip()) for v in raw[key].split(",") if v.strip())
    for key, typ in _SCALAR_KEYS.items():
        if key in raw:
            kwargs[key] = typ(raw[key])
    if "graph" in raw:
        if graph_loader is None:
            raise ValueError("config names a graph file but no loader was given")
        kwargs["graph"] = graph_loader(raw["graph"])
    elif "graph_kind" in raw:
        from .graph import generate_graph

        spec = {"kind": raw["graph_kind"]}
        spec.update({k: raw[k] for k in _GRAPH_KEYS - {"graph", "graph_kind", "graph_seed"} if k in raw})
        kwargs["graph"] = generate_graph(spec, seed=int(raw.get("graph_seed", 0)))
    return ExperimentConfig(**kwargs)
