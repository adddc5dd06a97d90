"""Grid contact query in Python and numpy; same contract as the compiled ``_grid``.

Records are sorted by a 64-bit hash of their cell. A query looks up the 27
neighbouring cell keys of every infected in-window record with a binary
search, then checks all gathered candidates exactly in one vectorised pass.
"""

from __future__ import annotations

import numpy as np

_P = [np.uint64(0x9E3779B97F4A7C15), np.uint64(0xC2B2AE3D27D4EB4F), np.uint64(0x165667B19E3779F9)]
_OFFSETS = np.array([(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)], dtype=np.int64)


def _cells(x, y, t, cs, ts) -> list[np.ndarray]:
    return [np.floor(v / s).astype(np.int64) for v, s in ((x, cs), (y, cs), (t, ts))]


def _keys(cx, cy, ct) -> np.ndarray:
    # wrapping uint64 arithmetic; a shared key only adds candidates
    k = cx.view(np.uint64) * _P[0]
    k += cy.view(np.uint64) * _P[1]
    k += ct.view(np.uint64) * _P[2]
    return k


def build_grid(x, y, t, cs, ts):
    keys = _keys(*_cells(x, y, t, cs, ts))
    order = np.argsort(keys)
    sorted_keys = keys[order]
    new_run = np.ones(len(keys), dtype=bool)
    new_run[1:] = sorted_keys[1:] != sorted_keys[:-1]
    starts = np.flatnonzero(new_run)
    ends = np.append(starts[1:], len(keys))
    return order, sorted_keys[starts], starts, ends


def query_grid(vid, x, y, t, grid, cs, ts, infected, eps, delta, t_lo, t_hi, n_vids):
    order, ukeys, starts, ends = grid
    mine = np.flatnonzero((vid == infected) & (t >= t_lo) & (t <= t_hi))
    if len(mine) == 0 or len(ukeys) == 0:
        return np.empty(0, dtype=np.int64)
    near = np.stack(_cells(x[mine], y[mine], t[mine], cs, ts), axis=-1)[:, None, :] + _OFFSETS  # (m, 27, 3)
    want = _keys(*(np.ascontiguousarray(near[..., d]).ravel() for d in range(3)))
    pos = np.minimum(np.searchsorted(ukeys, want), len(ukeys) - 1)
    hit = ukeys[pos] == want
    lo, hi = starts[pos[hit]], ends[pos[hit]]
    src = np.repeat(np.repeat(mine, 27)[hit], hi - lo)
    # flatten the runs [lo, hi) into one index array
    run_offsets = np.arange((hi - lo).sum()) - np.repeat(np.cumsum(hi - lo) - (hi - lo), hi - lo)
    cand = order[np.repeat(lo, hi - lo) + run_offsets]
    dx = x[cand] - x[src]
    dy = y[cand] - y[src]
    ok = (vid[cand] != infected) & (np.abs(t[cand] - t[src]) <= delta) & (dx * dx + dy * dy <= eps * eps)
    return np.unique(vid[cand[ok]]).astype(np.int64)
