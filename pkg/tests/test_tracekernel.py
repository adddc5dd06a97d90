import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbdkit import tracekernel
from pbdkit.tracekernel import ContactIndex, TraceRecords, brute_force_contacts, grid_contacts

BACKENDS = ["python"] + (["cython"] if tracekernel.BACKEND == "cython" else [])


def naive(vid, x, y, t, a, eps, delta, lo, hi):
    """Double loop straight from the definition."""
    out = set()
    for i in range(len(vid)):
        if vid[i] != a or not lo <= t[i] <= hi:
            continue
        for j in range(len(vid)):
            if vid[j] == a:
                continue
            if abs(t[i] - t[j]) <= delta and (x[i] - x[j]) ** 2 + (y[i] - y[j]) ** 2 <= eps * eps:
                out.add(int(vid[j]))
    return out


def random_records(seed, n=400, agents=12, area=100.0, span=3600.0):
    r = np.random.default_rng(seed)
    return TraceRecords(r.integers(0, agents, n), r.uniform(0, area, n), r.uniform(0, area, n),
                        np.round(r.uniform(0, span, n)))


@pytest.mark.parametrize("backend", BACKENDS)
@given(seed=st.integers(0, 10**6), eps=st.floats(0, 40), delta=st.floats(0, 900),
       a=st.integers(0, 11), lo=st.floats(0, 3600), width=st.floats(1, 3600))
@settings(max_examples=60, deadline=None)
def test_grid_equals_naive(backend, seed, eps, delta, a, lo, width):
    r = random_records(seed, n=150)
    got = set(grid_contacts(r, a, eps, delta, lo, lo + width, backend).tolist())
    assert got == naive(r.vid, r.x, r.y, r.t, a, eps, delta, lo, lo + width)


@pytest.mark.parametrize("backend", BACKENDS)
def test_boundary_distance_included(backend):
    # exactly epsilon apart and exactly delta apart count as contact
    r = TraceRecords([0, 1, 2], [0.0, 3.0, 3.0], [0.0, 4.0, 4.0], [100.0, 160.0, 161.0])
    assert grid_contacts(r, 0, 5.0, 60.0, 0, 200, backend).tolist() == [1]


@pytest.mark.parametrize("backend", BACKENDS)
def test_zero_thresholds_need_exact_coincidence(backend):
    r = TraceRecords([0, 1, 2], [1.5, 1.5, 1.5], [2.5, 2.5, 2.5000001], [10.0, 10.0, 10.0])
    assert grid_contacts(r, 0, 0.0, 0.0, 0, 20, backend).tolist() == [1]


@pytest.mark.parametrize("backend", BACKENDS)
def test_negative_coordinates(backend):
    r = TraceRecords([0, 1, 2], [-10.0, -12.0, 5.0], [-3.0, -3.0, 0.0], [0.0, 5.0, 5.0])
    assert grid_contacts(r, 0, 3.0, 10.0, -1, 1, backend).tolist() == [1]


@pytest.mark.parametrize("backend", BACKENDS)
def test_window_excludes_infected_records_outside(backend):
    r = TraceRecords([0, 1], [0.0, 0.0], [0.0, 0.0], [100.0, 100.0])
    assert grid_contacts(r, 0, 1.0, 1.0, 200, 300, backend).size == 0


@pytest.mark.parametrize("backend", BACKENDS)
def test_index_reused_across_queries(backend):
    r = random_records(3)
    idx = ContactIndex(r, 10.0, 300.0, backend)
    for a in range(5):
        assert set(idx.query(a, 0, 3600).tolist()) == set(brute_force_contacts(r, a, 10.0, 300.0, 0, 3600).tolist())


def test_backends_agree():
    if "cython" not in BACKENDS:
        pytest.skip("compiled kernel not built")
    r = random_records(9, n=5000, agents=80, area=500.0)
    for a in range(10):
        assert np.array_equal(grid_contacts(r, a, 12.0, 200.0, 0, 3600, "cython"),
                              grid_contacts(r, a, 12.0, 200.0, 0, 3600, "python"))


def test_empty_and_unknown_infected():
    r = TraceRecords([], [], [], [])
    assert grid_contacts(r, 0, 1.0, 1.0, 0, 1).size == 0
    r = random_records(1)
    assert grid_contacts(r, 999, 5.0, 5.0, 0, 3600).size == 0


def test_input_validation():
    with pytest.raises(ValueError):
        TraceRecords([0, 1], [0.0], [0.0, 1.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        TraceRecords([-1], [0.0], [0.0], [0.0])
    with pytest.raises(ValueError):
        ContactIndex(random_records(1), -1.0, 1.0)
