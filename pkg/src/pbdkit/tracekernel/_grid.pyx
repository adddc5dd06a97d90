# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled uniform-grid contact query.

Cells are (floor(x/cs), floor(y/cs), floor(t/ts)) with cs >= epsilon and
ts >= delta, so every match lies in the 3x3x3 block around the query cell.
Each cell is folded into one 64-bit key and records are bucketed by a hash
of it. Two cells sharing a key only costs extra candidates, since every
candidate is checked exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs
from libc.stdint cimport int64_t, uint64_t, uint8_t

cnp.import_array()

cdef uint64_t PX = 0x9E3779B97F4A7C15ULL
cdef uint64_t PY = 0xC2B2AE3D27D4EB4FULL
cdef uint64_t PT = 0x165667B19E3779F9ULL


cdef inline int64_t _key(int64_t cx, int64_t cy, int64_t ct) nogil:
    return <int64_t>(<uint64_t>cx * PX + <uint64_t>cy * PY + <uint64_t>ct * PT)


cdef inline Py_ssize_t _bucket(int64_t k, uint64_t mask) nogil:
    return <Py_ssize_t>((<uint64_t>k >> 17 ^ <uint64_t>k) & mask)


def build_grid(const double[::1] x, const double[::1] y, const double[::1] t, double cs, double ts):
    """Counting-sort records into hash buckets of their cell key.

    Returns (order, key of each ordered record, bucket starts). Linear in the
    number of records; a bucket may hold several cells, told apart by key.
    """
    cdef Py_ssize_t n = x.shape[0], i, b, nb = 1
    while nb < 2 * n:
        nb <<= 1
    cdef uint64_t mask = nb - 1
    keys_a = np.empty(n, dtype=np.int64)
    order_a = np.empty(n, dtype=np.int64)
    okeys_a = np.empty(n, dtype=np.int64)
    starts_a = np.zeros(nb + 1, dtype=np.int64)
    cdef int64_t[::1] keys = keys_a, order = order_a, okeys = okeys_a, st = starts_a
    with nogil:
        for i in range(n):
            keys[i] = _key(<int64_t>floor(x[i] / cs), <int64_t>floor(y[i] / cs), <int64_t>floor(t[i] / ts))
            st[_bucket(keys[i], mask) + 1] += 1
        for b in range(nb):
            st[b + 1] += st[b]
        for i in range(n):
            b = _bucket(keys[i], mask)
            order[st[b]] = i
            okeys[st[b]] = keys[i]
            st[b] += 1
        # the scatter advanced each start to the next bucket's; shift back
        for b in range(nb, 0, -1):
            st[b] = st[b - 1]
        st[0] = 0
    return order_a, okeys_a, starts_a


def query_grid(const int64_t[::1] vid, const double[::1] x, const double[::1] y, const double[::1] t,
               const int64_t[::1] order, const int64_t[::1] okeys, const int64_t[::1] starts,
               double cs, double ts, int64_t infected, double eps, double delta,
               double t_lo, double t_hi, int64_t n_vids):
    """Vids (other than ``infected``) with a record near one of the infected's in-window records."""
    cdef Py_ssize_t n = x.shape[0], i, b, k
    cdef uint64_t mask = starts.shape[0] - 2
    cdef int64_t ax, ay, at, j, v, key
    cdef int ddx, ddy, ddt
    cdef double eps2 = eps * eps, dx, dy
    found_a = np.zeros(n_vids, dtype=np.uint8)
    cdef uint8_t[::1] found = found_a
    if n == 0:
        return np.empty(0, dtype=np.int64)
    with nogil:
        for i in range(n):
            if vid[i] != infected or t[i] < t_lo or t[i] > t_hi:
                continue
            ax = <int64_t>floor(x[i] / cs)
            ay = <int64_t>floor(y[i] / cs)
            at = <int64_t>floor(t[i] / ts)
            for ddx in range(-1, 2):
                for ddy in range(-1, 2):
                    for ddt in range(-1, 2):
                        key = _key(ax + ddx, ay + ddy, at + ddt)
                        b = _bucket(key, mask)
                        for k in range(starts[b], starts[b + 1]):
                            if okeys[k] != key:
                                continue
                            j = order[k]
                            v = vid[j]
                            if v == infected or found[v]:
                                continue
                            if fabs(t[j] - t[i]) > delta:
                                continue
                            dx = x[j] - x[i]
                            dy = y[j] - y[i]
                            if dx * dx + dy * dy <= eps2:
                                found[v] = 1
    return np.flatnonzero(found_a).astype(np.int64)
