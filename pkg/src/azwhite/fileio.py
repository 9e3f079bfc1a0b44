"""Readers and writers for the edge-list, distance, signal and result formats.

Edge lists are tab-separated ``u v [w]`` (static) or ``t u v [w]``
(dynamic) with ``#`` comment lines; node-presence files are ``t v``;
distance files are ``u v delta``. Signals are CSV with header
``t,node,f0[,f1,...]``. Node tokens that look like integers are read as
ints, everything else as strings, in every format.
"""

from __future__ import annotations

import csv
import json
import math
import re
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .graph import DynamicGraph, GraphValidationError, WeightedGraph, graph_from_distances, validate
from .signals import GraphSignal

__all__ = [
    "FormatError",
    "parse_node",
    "read_edge_list",
    "edge_list_text",
    "write_edge_list",
    "read_dynamic_edge_list",
    "read_distances",
    "read_signal",
    "signal_text",
    "write_signal",
    "dumps_json",
    "fmt_float",
]

_INT = re.compile(r"[+-]?\d+\Z")


class FormatError(GraphValidationError):
    """Malformed input row; the message carries the file and line number."""


def parse_node(token: str):
    token = token.strip()
    return int(token) if _INT.match(token) else token


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _rows(path, min_cols: int, max_cols: int):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.split("\t")
            if not min_cols <= len(cols) <= max_cols:
                raise FormatError(f"{path}:{lineno}: expected {min_cols}-{max_cols} tab-separated fields, got {len(cols)}")
            yield lineno, cols


def _float(path, lineno, token) -> float:
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: not a number: {token!r}") from None


def _int(path, lineno, token) -> int:
    try:
        return int(token)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: not an integer: {token!r}") from None


def read_edge_list(path, directed: bool = False) -> WeightedGraph:
    edges = []
    for lineno, cols in _rows(path, 2, 3):
        w = _float(path, lineno, cols[2]) if len(cols) == 3 else 1.0
        edges.append((parse_node(cols[0]), parse_node(cols[1]), w))
    return validate(edges, directed=directed)


def edge_list_text(g: WeightedGraph) -> str:
    head = f"# {'directed' if g.directed else 'undirected'} edge list: u<TAB>v<TAB>w\n"
    return head + "".join(f"{u}\t{v}\t{fmt_float(w)}\n" for u, v, w in g.edges)


def write_edge_list(g: WeightedGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(edge_list_text(g))


def read_dynamic_edge_list(path, presence_path=None, directed: bool = False, T: int | None = None) -> DynamicGraph:
    rows = []
    for lineno, cols in _rows(path, 3, 4):
        t = _int(path, lineno, cols[0])
        w = _float(path, lineno, cols[3]) if len(cols) == 4 else 1.0
        rows.append((t, parse_node(cols[1]), parse_node(cols[2]), w))
    presence = []
    if presence_path is not None:
        for lineno, cols in _rows(presence_path, 2, 2):
            presence.append((_int(presence_path, lineno, cols[0]), parse_node(cols[1])))
    return DynamicGraph.from_edges(rows, T=T, presence=presence, directed=directed)


def read_distances(path, kappa: float, directed: bool = True) -> WeightedGraph:
    pairs = []
    for lineno, cols in _rows(path, 3, 3):
        pairs.append((parse_node(cols[0]), parse_node(cols[1]), _float(path, lineno, cols[2])))
    return graph_from_distances(pairs, kappa, directed=directed)


def read_signal(path) -> GraphSignal:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty signal file") from None
        header = [h.strip() for h in header]
        if len(header) < 3 or header[:2] != ["t", "node"] or any(h != f"f{i}" for i, h in enumerate(header[2:])):
            raise FormatError(f"{path}:1: header must be t,node,f0[,f1,...]; got {','.join(header)}")
        F = len(header) - 2
        data = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != F + 2:
                raise FormatError(f"{path}:{lineno}: expected {F + 2} fields, got {len(row)}")
            t = _int(path, lineno, row[0])
            if t < 1:
                raise FormatError(f"{path}:{lineno}: time index must be >= 1")
            vec = [_float(path, lineno, x) for x in row[2:]]
            if not all(math.isfinite(x) for x in vec):
                raise FormatError(f"{path}:{lineno}: signal values must be finite")
            key = (parse_node(row[1]), t)
            if key in data:
                raise FormatError(f"{path}:{lineno}: duplicate entry for node {key[0]!r} at t={t}")
            data[key] = vec
    if not data:
        raise FormatError(f"{path}: no signal rows")
    return GraphSignal.from_dict(data)


def signal_text(X: GraphSignal) -> str:
    lines = [",".join(["t", "node"] + [f"f{i}" for i in range(X.F)])]
    for (v, t), vec in X.items():
        lines.append(",".join([str(t), str(v)] + [fmt_float(x) for x in vec]))
    return "\n".join(lines) + "\n"


def write_signal(X: GraphSignal, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(signal_text(X))


def dumps_json(obj, indent: int = 2) -> str:
    """JSON text with every float at 17 significant digits; NaN and inf become null."""
    return _encode(obj, indent, 0)


def _encode(o, indent: int, level: int) -> str:
    if o is None:
        return "null"
    if isinstance(o, (bool, np.bool_)):
        return "true" if o else "false"
    if isinstance(o, (int, np.integer)):
        return str(int(o))
    if isinstance(o, (float, np.floating)):
        return fmt_float(o) if math.isfinite(o) else "null"
    if isinstance(o, (str, Path)):
        return json.dumps(str(o))
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(o, Mapping):
        if not o:
            return "{}"
        items = [f"{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in o.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(o, (list, tuple, np.ndarray)):
        if len(o) == 0:
            return "[]"
        items = [_encode(v, indent, level + 1) for v in o]
        return "[" + pad + ("," + pad).join(items) + end + "]"
    raise TypeError(f"cannot serialise {type(o).__name__}")
