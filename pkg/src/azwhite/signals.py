"""Graph signal container: node-time observations with optional gaps."""

from __future__ import annotations

from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

__all__ = ["GraphSignal"]


@dataclass(frozen=True, eq=False)
class GraphSignal:
    """Observations ``x_v[t]`` in ``R^F`` for ``t = 1..T``.

    ``values`` has shape ``(T, N, F)`` aligned with ``nodes``; ``mask[t-1, i]``
    says whether node ``nodes[i]`` is observed at time ``t``. Unobserved
    slots hold NaN. A static signal is simply ``T == 1``.
    """

    nodes: tuple
    values: np.ndarray
    mask: np.ndarray
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 3:
            raise ValueError(f"values must have shape (T, N, F), got {values.shape}")
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != values.shape[:2]:
            raise ValueError(f"mask shape {mask.shape} does not match values {values.shape[:2]}")
        if len(self.nodes) != values.shape[1]:
            raise ValueError("one node id per column of values is required")
        if values.shape[2] < 1:
            raise ValueError("feature dimension F must be >= 1")
        if not np.isfinite(values[mask]).all():
            raise ValueError("observed signal entries must be finite")
        values[~mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        index = {v: i for i, v in enumerate(self.nodes)}
        if len(index) != len(self.nodes):
            raise ValueError("duplicate node ids")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_array(cls, array, nodes: Sequence | None = None, mask=None) -> GraphSignal:
        """Wrap an array of shape ``(T, N)``, ``(T, N, F)`` or, for static signals, ``(N,)``."""
        a = np.asarray(array, dtype=float)
        if a.ndim == 1:
            a = a[None, :, None]
        elif a.ndim == 2:
            a = a[:, :, None]
        if nodes is None:
            nodes = range(a.shape[1])
        if mask is None:
            mask = ~np.isnan(a).any(axis=2)
        return cls(tuple(nodes), a, mask)

    @classmethod
    def from_dict(cls, data: Mapping[tuple[Hashable, int], Sequence[float]], T: int | None = None) -> GraphSignal:
        """Build from ``{(node, t): vector}`` with 1-based ``t``."""
        if not data:
            raise ValueError("empty signal")
        nodes: dict = {}
        F = None
        t_max = 0
        for (v, t), x in data.items():
            nodes.setdefault(v, len(nodes))
            n = len(np.atleast_1d(x))
            if F is None:
                F = n
            elif n != F:
                raise ValueError(f"signal at ({v!r}, {t}) has length {n}, expected {F}")
            if t < 1:
                raise ValueError(f"time indices start at 1, got {t}")
            t_max = max(t_max, t)
        T = t_max if T is None else T
        values = np.full((T, len(nodes), F), np.nan)
        mask = np.zeros((T, len(nodes)), dtype=bool)
        for (v, t), x in data.items():
            values[t - 1, nodes[v]] = np.atleast_1d(x)
            mask[t - 1, nodes[v]] = True
        return cls(tuple(nodes), values, mask)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def F(self) -> int:
        return self.values.shape[2]

    def index(self, node) -> int:
        return self._index[node]

    def __contains__(self, node) -> bool:
        return node in self._index

    def get(self, node, t: int) -> np.ndarray | None:
        i = self._index.get(node)
        if i is None or not 1 <= t <= self.T or not self.mask[t - 1, i]:
            return None
        return self.values[t - 1, i]

    def observed(self) -> np.ndarray:
        """All observed vectors stacked into shape ``(M, F)``."""
        return self.values[self.mask]

    def present_at(self, t: int) -> list:
        return [self.nodes[i] for i in np.flatnonzero(self.mask[t - 1])]

    def feature(self, f: int) -> GraphSignal:
        return GraphSignal(self.nodes, self.values[:, :, f : f + 1], self.mask)

    def with_values(self, values) -> GraphSignal:
        return GraphSignal(self.nodes, values, self.mask)

    def items(self):
        """Iterate ``((node, t), vector)`` over observed entries, time-major."""
        for ti, i in zip(*np.nonzero(self.mask)):
            yield (self.nodes[i], int(ti) + 1), self.values[ti, i]

    def __repr__(self) -> str:
        return f"GraphSignal(T={self.T}, |V|={len(self.nodes)}, F={self.F}, observed={int(self.mask.sum())})"
