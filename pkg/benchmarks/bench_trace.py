"""Contact-trace query timing: compiled and numpy grid kernels against brute force.

    python3 benchmarks/bench_trace.py --records 100000 --queries 10

Reports the median wall-clock time per query (index build included, as a
fresh query would pay it) and checks that all three answers agree.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from pbdkit import tracekernel
from pbdkit.tracekernel import TraceRecords, brute_force_contacts, grid_contacts


def make_records(n: int, agents: int, seed: int, area: float = 2000.0, step: float = 20.0,
                 period: float = 300.0) -> TraceRecords:
    """Random walks: ``n // agents`` periods of ``agents`` positions."""
    rng = np.random.default_rng(seed)
    periods = max(1, n // agents)
    pos = rng.uniform(0, area, (agents, 2))
    cols = []
    for k in range(periods):
        pos = np.clip(pos + rng.normal(0, step, pos.shape), 0, area)
        cols.append((np.arange(agents), np.full(agents, k * period), pos[:, 0].copy(), pos[:, 1].copy()))
    vid, t, x, y = (np.concatenate(c) for c in zip(*cols))
    return TraceRecords(vid[:n], x[:n], y[:n], t[:n])


def timed(fn, queries):
    times, answers = [], []
    for q in queries:
        t0 = time.perf_counter()
        answers.append(fn(*q))
        times.append(time.perf_counter() - t0)
    return statistics.median(times), answers


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--records", type=int, default=100_000)
    p.add_argument("--agents", type=int, default=500)
    p.add_argument("--queries", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=10.0)
    p.add_argument("--delta", type=float, default=300.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip-python", action="store_true", help="skip the numpy grid")
    args = p.parse_args(argv)

    r = make_records(args.records, args.agents, args.seed)
    rng = np.random.default_rng(args.seed + 1)
    t_end = float(r.t.max())
    queries = [(int(a), args.epsilon, args.delta, 0.0, t_end)
               for a in rng.choice(r.n_vids, args.queries, replace=False)]

    rows = []
    brute_t, ref = timed(lambda *q: brute_force_contacts(r, *q), queries)
    rows.append(("brute force", brute_t))
    if tracekernel.BACKEND == "cython":
        cy_t, cy = timed(lambda *q: grid_contacts(r, *q, backend="cython"), queries)
        assert all(np.array_equal(a, b) for a, b in zip(cy, ref)), "compiled grid disagrees"
        rows.append(("grid (cython)", cy_t))
    if not args.skip_python:
        py_t, py = timed(lambda *q: grid_contacts(r, *q, backend="python"), queries)
        assert all(np.array_equal(a, b) for a, b in zip(py, ref)), "numpy grid disagrees"
        rows.append(("grid (numpy)", py_t))

    print(f"{len(r)} records, {r.n_vids} agents, {args.queries} queries, "
          f"epsilon={args.epsilon} delta={args.delta}, default backend: {tracekernel.BACKEND}")
    print(f"{'method':<16}{'median ms':>12}{'speedup':>10}")
    for name, t in rows:
        print(f"{name:<16}{t * 1e3:>12.2f}{brute_t / t:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
