"""Command-line interface: ``azwhite <command> [options]``.

Results go to stdout (or ``--out``) in machine-readable form; log lines go
to stderr. Exit status is 0 on success, 1 for invalid input and 2 for
file-system errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import fileio
from .graph import DynamicGraph, GraphValidationError, generate_graph, khop_augment
from .harness import (
    ExperimentConfig,
    default_graph,
    format_residual_table,
    load_config,
    residual_analysis,
    run_calibration,
    run_power_sweep,
    run_sparse_vs_complete,
)
from .signalgen import DISTRIBUTIONS, GpvarParams, gen_correlated, gen_gpvar, gen_white
from .stats import CORRECTIONS, az_statistic_dynamic, center_median, per_feature

log = logging.getLogger("azwhite")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Bad arguments count as invalid input (exit 1), not as argparse's usual 2.
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _strs(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _load_graph(args):
    """Static or dynamic graph from the shared ``--graph`` options, after k-hop augmentation."""
    if args.graph is None:
        g = default_graph(args.graph_seed)
        log.info("no --graph given; using the built-in %d-node community graph", g.n_nodes)
    elif args.dynamic:
        dg = fileio.read_dynamic_edge_list(args.graph, args.presence, directed=args.directed, T=args.T_graph)
        if args.khop > 1:
            dg = DynamicGraph(tuple(khop_augment(s, args.khop) for s in dg.snapshots))
        return dg
    else:
        g = fileio.read_edge_list(args.graph, directed=args.directed)
    return khop_augment(g, args.khop) if args.khop > 1 else g


def _add_graph_opts(p, required=False):
    p.add_argument("--graph", required=required, help="edge list (u<TAB>v[<TAB>w], or t<TAB>u<TAB>v[<TAB>w] with --dynamic)")
    p.add_argument("--dynamic", action="store_true", help="graph file is a timed edge list")
    p.add_argument("--presence", help="node-presence file t<TAB>v for a dynamic graph")
    p.add_argument("--directed", action="store_true", help="treat edges as directed")
    p.add_argument("--T-graph", type=int, dest="T_graph", help="number of snapshots of a dynamic graph")
    p.add_argument("--khop", type=int, default=1, help="connect nodes up to this many hops apart (default 1)")
    p.add_argument("--graph-seed", type=int, default=0, help="seed of the built-in graph when --graph is absent")


def _cmd_test(args) -> int:
    graph = _load_graph(args)
    X = fileio.read_signal(args.signal)
    if args.center_median:
        X, offsets = center_median(X)
        log.info("subtracted median %s", offsets.tolist())
    dg = graph if isinstance(graph, DynamicGraph) else DynamicGraph.from_static(graph, X.T)
    if args.per_feature:
        res = per_feature(dg, X, args.lam, args.alpha, args.per_feature, args.w_tm)
        payload = {
            "correction": res.correction,
            "reject": res.reject,
            "reject_each": res.reject_each.tolist(),
            "results": [r.to_dict() for r in res.results],
        }
    else:
        payload = az_statistic_dynamic(dg, X, args.lam, args.alpha, args.w_tm).to_dict()
    _emit(fileio.dumps_json(payload) + "\n", args.out)
    return EXIT_OK


def _write_signal(X, out: str | None) -> None:
    _emit(fileio.signal_text(X), out)


def _noise_path(out: str) -> str:
    p = Path(out)
    stem = p.name[: -len(".csv")] if p.name.endswith(".csv") else p.name
    return str(p.with_name(stem + ".noise.csv"))


def _cmd_generate(args) -> int:
    graph = _load_graph(args)
    if args.graph_out:
        if isinstance(graph, DynamicGraph):
            raise UsageError("--graph-out supports static graphs only")
        fileio.write_edge_list(graph, args.graph_out)
    if args.kind == "white":
        X = gen_white(graph, args.F, args.dist, args.seed, T=None if isinstance(graph, DynamicGraph) else args.T)
        _write_signal(X, args.out)
        return EXIT_OK
    if isinstance(graph, DynamicGraph):
        raise UsageError(f"generate {args.kind} needs a static graph")
    if args.kind == "correlated":
        X = gen_correlated(graph, args.T, args.F, args.dist, args.c_sp, args.c_tm, args.seed)
        _write_signal(X, args.out)
        return EXIT_OK
    params = GpvarParams(noise_scale=args.noise_scale)
    X, eta = gen_gpvar(graph, args.T, params, seed=args.seed, burn_in=args.burn_in)
    _write_signal(X, args.out)
    if args.write_noise:
        if not args.out:
            raise UsageError("--write-noise needs --out")
        fileio.write_signal(eta, _noise_path(args.out))
        log.info("wrote %s", _noise_path(args.out))
    return EXIT_OK


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = load_config(text, graph_loader=lambda path: fileio.read_edge_list(path, directed=args.directed))
    else:
        cfg = ExperimentConfig()
    updates = {}
    if args.graph is not None:
        updates["graph"] = fileio.read_edge_list(args.graph, directed=args.directed)
    elif not args.config:
        updates["graph"] = default_graph(args.graph_seed)
    fields = {
        "T": "T", "F": "F", "c": "c", "dist": "distributions", "R": "R", "alpha": "alpha",
        "lambdas": "lambdas", "seed": "seed", "coupling": "coupling", "modes": "edge_modes",
    }  # fmt: skip
    for arg, name in fields.items():
        val = getattr(args, arg, None)
        if val is not None:
            updates[name] = val
    return replace(cfg, **updates)


def _report(report, args) -> int:
    text = report.to_csv() if args.format == "csv" else report.to_json() + "\n"
    _emit(text, args.out)
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = _experiment_config(args)
    if args.c is None:
        cfg = replace(cfg, c=(0.0,))
    return _report(run_calibration(cfg), args)


def _cmd_power(args) -> int:
    return _report(run_power_sweep(_experiment_config(args)), args)


def _cmd_compare(args) -> int:
    return _report(run_sparse_vs_complete(_experiment_config(args)), args)


def _cmd_residuals(args) -> int:
    graph = _load_graph(args)
    sets = {}
    for path in args.residuals:
        name = Path(path).name
        name = name[: -len(".csv")] if name.endswith(".csv") else name
        if name in sets:
            raise UsageError(f"two residual files share the name {name!r}")
        sets[name] = fileio.read_signal(path)
    rows = residual_analysis(sets, graph, args.lambdas, args.alpha)
    if args.format == "table":
        text = format_residual_table(rows)
    elif args.format == "csv":
        keys = list(rows[0].as_row())
        lines = [",".join(keys)]
        for r in rows:
            row = r.as_row()
            lines.append(",".join(fileio.fmt_float(row[k]) if k != "name" else row[k] for k in keys))
        text = "\n".join(lines) + "\n"
    else:
        text = fileio.dumps_json([r.as_row() for r in rows]) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def _cmd_graph(args) -> int:
    if args.action == "generate":
        spec = {"kind": args.kind}
        if args.kind == "erdos_renyi":
            spec.update(n=args.n, p=args.p)
        else:
            spec.update(n_communities=args.n_communities, community_size=args.community_size, p_in=args.p_in)
        g = generate_graph(spec, seed=args.seed)
    elif args.action == "from-distances":
        g = fileio.read_distances(args.distances, args.kappa, directed=not args.undirected)
    else:
        g = khop_augment(fileio.read_edge_list(args.graph, directed=args.directed), args.K, args.weight_rule)
    if args.out:
        fileio.write_edge_list(g, args.out)
        log.info("wrote %s (%d nodes, %d edges)", args.out, g.n_nodes, g.n_edges)
    else:
        sys.stdout.write(fileio.edge_list_text(g))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="azwhite", description="AZ whiteness test for signals on graphs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("test", help="run the AZ test on a graph and a signal file")
    _add_graph_opts(p)
    p.add_argument("--signal", required=True, help="signal CSV with header t,node,f0[,f1,...]")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5, help="spatial weight in [0, 1] (default 0.5)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--w-tm", dest="w_tm", type=float, help="fixed temporal edge weight")
    p.add_argument("--center-median", action="store_true", help="subtract the empirical median first")
    p.add_argument("--per-feature", choices=CORRECTIONS + ("sum",), help="test each feature separately")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_test)

    p = sub.add_parser("generate", help="generate a white, correlated or GPVAR signal")
    p.add_argument("kind", choices=("white", "correlated", "gpvar"))
    _add_graph_opts(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--F", type=int, default=1)
    p.add_argument("--dist", default="gauss", choices=[d.name for d in DISTRIBUTIONS])
    p.add_argument("--c-sp", dest="c_sp", type=float, default=0.0)
    p.add_argument("--c-tm", dest="c_tm", type=float, default=0.0)
    p.add_argument("--noise-scale", type=float, default=1.0, help="GPVAR innovation standard deviation")
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--write-noise", action="store_true", help="also write the GPVAR noise to <out>.noise.csv")
    p.add_argument("--graph-out", help="write the graph used to this edge list")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_generate)

    for name, func, help_ in (
        ("calibrate", _cmd_calibrate, "rejection rates of white signals"),
        ("power", _cmd_power, "rejection rates over a grid of correlation levels"),
        ("compare-sparsity", _cmd_compare, "graph edges versus all node pairs, paired"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="flat key = value experiment file")
        p.add_argument("--graph")
        p.add_argument("--directed", action="store_true")
        p.add_argument("--graph-seed", type=int, default=0)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--T", type=_ints)
        p.add_argument("--F", type=_ints)
        p.add_argument("--c", type=_floats)
        p.add_argument("--dist", type=_strs)
        p.add_argument("--R", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--lambda", dest="lambdas", type=_floats)
        p.add_argument("--coupling", choices=("both", "spatial", "temporal"))
        p.add_argument("--mode", dest="modes", type=_strs)
        p.add_argument("--format", choices=("json", "csv"), default="csv")
        p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("residuals", help="residual diagnostics table")
    _add_graph_opts(p, required=True)
    p.add_argument("--residuals", nargs="+", required=True, help="one or more residual signal CSVs")
    p.add_argument("--lambda", dest="lambdas", type=_floats, default=(0.0, 0.5, 1.0))
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_residuals)

    p = sub.add_parser("graph", help="build graphs")
    gsub = p.add_subparsers(dest="action", required=True, parser_class=_Parser)
    q = gsub.add_parser("generate")
    q.add_argument("--kind", choices=("community_line", "erdos_renyi"), default="community_line")
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--n", type=int, default=30)
    q.add_argument("--p", type=float, default=0.1)
    q.add_argument("--n-communities", type=int, default=5)
    q.add_argument("--community-size", type=int, default=6)
    q.add_argument("--p-in", type=float, default=0.8)
    q.add_argument("--out")
    q = gsub.add_parser("from-distances")
    q.add_argument("--distances", required=True)
    q.add_argument("--kappa", type=float, required=True)
    q.add_argument("--undirected", action="store_true")
    q.add_argument("--out")
    q = gsub.add_parser("khop")
    q.add_argument("--graph", required=True)
    q.add_argument("--directed", action="store_true")
    q.add_argument("--K", type=int, required=True)
    q.add_argument("--weight-rule", choices=("constant", "inverse"), default="constant")
    q.add_argument("--out")
    p.set_defaults(func=_cmd_graph)
    return parser


def main(argv=None) -> int:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    log.addHandler(handler)
    log.propagate = False
    log.setLevel(logging.WARNING)
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = lambda msg, cat, *a, **k: log.warning("%s: %s", cat.__name__, msg)
            return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (GraphValidationError, ValueError, KeyError) as exc:
        log.error("error: %s", exc.args[0] if exc.args else exc)
        return EXIT_INVALID
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
