"""Spatiotemporal contact query over (vid, x, y, t) records.

The compiled grid kernel is used when it was built; otherwise the
numpy one. Set ``PBDKIT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _grid_py

_compiled = None
if not os.environ.get("PBDKIT_PURE_PYTHON"):
    try:
        from . import _grid as _compiled  # type: ignore[no-redef]
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"

# cells are widened slightly past the thresholds so float rounding in the
# cell computation can never push a true match outside the 3x3x3 block
CELL_MARGIN = 1e-6
# cells may be wider than the threshold (only costing candidates), never so
# narrow that coordinate / cell overflows the integer cell index
MIN_CELL_FRACTION = 2.0 ** -40


def cell_size(threshold: float, magnitude: float = 0.0) -> float:
    floor_ = magnitude * MIN_CELL_FRACTION
    cs = max(threshold * (1.0 + CELL_MARGIN), floor_)
    return cs if cs > 0 else 1.0


def _magnitude(a: np.ndarray) -> float:
    return float(np.abs(a).max()) if len(a) else 0.0


class TraceRecords:
    """Column arrays for contact records. ``vid`` holds dense integer indices."""

    def __init__(self, vid, x, y, t):
        self.vid = np.ascontiguousarray(vid, dtype=np.int64)
        self.x = np.ascontiguousarray(x, dtype=np.float64)
        self.y = np.ascontiguousarray(y, dtype=np.float64)
        self.t = np.ascontiguousarray(t, dtype=np.float64)
        n = len(self.vid)
        if not (len(self.x) == len(self.y) == len(self.t) == n):
            raise ValueError("column lengths differ")
        if n and self.vid.min() < 0:
            raise ValueError("vid indices must be non-negative")
        self.n_vids = int(self.vid.max()) + 1 if n else 0

    def __len__(self) -> int:
        return len(self.vid)


class ContactIndex:
    """Uniform grid over (x, y, t) for one (epsilon, delta) pair."""

    def __init__(self, records: TraceRecords, epsilon: float, delta: float, backend: str | None = None):
        if epsilon < 0 or delta < 0:
            raise ValueError("thresholds must be non-negative")
        self.records = records
        self.epsilon = float(epsilon)
        self.delta = float(delta)
        self.cs = cell_size(self.epsilon, max(_magnitude(records.x), _magnitude(records.y)))
        self.ts = cell_size(self.delta, _magnitude(records.t))
        backend = backend or BACKEND
        if backend == "cython" and _compiled is None:
            raise RuntimeError("compiled kernel not available")
        self.backend = backend
        r = records
        if backend == "cython":
            self._grid = _compiled.build_grid(r.x, r.y, r.t, self.cs, self.ts)
        else:
            self._grid = _grid_py.build_grid(r.x, r.y, r.t, self.cs, self.ts)

    def query(self, infected: int, t_lo: float, t_hi: float) -> np.ndarray:
        r = self.records
        n_vids = max(r.n_vids, int(infected) + 1)
        if self.backend == "cython":
            order, keys, starts = self._grid
            return _compiled.query_grid(r.vid, r.x, r.y, r.t, order, keys, starts, self.cs, self.ts,
                                        int(infected), self.epsilon, self.delta,
                                        float(t_lo), float(t_hi), n_vids)
        return _grid_py.query_grid(r.vid, r.x, r.y, r.t, self._grid, self.cs, self.ts, int(infected),
                                   self.epsilon, self.delta, float(t_lo), float(t_hi), n_vids)


def grid_contacts(records: TraceRecords, infected: int, epsilon: float, delta: float,
                  t_lo: float, t_hi: float, backend: str | None = None) -> np.ndarray:
    return ContactIndex(records, epsilon, delta, backend).query(infected, t_lo, t_hi)


def brute_force_contacts(records: TraceRecords, infected: int, epsilon: float, delta: float,
                         t_lo: float, t_hi: float) -> np.ndarray:
    """Reference answer: compare every in-window infected record against every record."""
    r = records
    eps2 = epsilon * epsilon
    mine = np.flatnonzero((r.vid == infected) & (r.t >= t_lo) & (r.t <= t_hi))
    others = r.vid != infected
    hit = np.zeros(len(r), dtype=bool)
    for i in mine:
        dx = r.x - r.x[i]
        dy = r.y - r.y[i]
        hit |= others & (np.abs(r.t - r.t[i]) <= delta) & (dx * dx + dy * dy <= eps2)
    return np.unique(r.vid[hit]).astype(np.int64)
