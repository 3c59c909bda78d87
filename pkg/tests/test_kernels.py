import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from interacting_bs import kernels
from interacting_bs._jit import python_version


def _system(rng, n):
    lo = rng.uniform(-1, 1, n)
    up = rng.uniform(-1, 1, n)
    di = 3.0 + rng.uniform(0, 1, n)  # diagonally dominant
    return lo, di, up, rng.normal(size=n)


def _dense(lo, di, up):
    return np.diag(di) + np.diag(lo[1:], -1) + np.diag(up[:-1], 1)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 60), seed=st.integers(0, 2**32 - 1))
def test_tridiagonal_solvers_match_dense(n, seed):
    lo, di, up, b = _system(np.random.default_rng(seed), n)
    ref = np.linalg.solve(_dense(lo, di, up), b)
    np.testing.assert_allclose(kernels.thomas_solve(lo, di, up, b), ref, rtol=1e-11, atol=1e-12)
    np.testing.assert_allclose(kernels.banded_solve(lo, di, up, b), ref, rtol=1e-11, atol=1e-12)


def test_thomas_does_not_mutate(rng):
    lo, di, up, b = _system(rng, 10)
    copies = [a.copy() for a in (lo, di, up, b)]
    kernels.thomas_solve(lo, di, up, b)
    for a, c in zip((lo, di, up, b), copies):
        np.testing.assert_array_equal(a, c)


def _backward_inputs(rng, m=30, steps=12):
    s = np.linspace(0.5, 3.0, m + 2)
    h = s[1] - s[0]
    si = s[1:-1]
    half = 0.5 * 0.04 * si**2 / h**2
    diff = (half, -2 * half, half.copy())
    adv = (-si / (2 * h), -np.ones(m), si / (2 * h))
    terminal = np.maximum(s - 1.0, 0.0)
    dts = np.full(steps, 0.05)
    thetas = np.full(steps, 0.5)
    thetas[:2] = 1.0
    rates = rng.uniform(0.0, 0.05, steps)
    bc_low = np.zeros(steps + 1)
    bc_high = np.full(steps + 1, s[-1] - 1.0)
    record = np.ones(steps, dtype=np.bool_)
    record[0] = False
    return (*diff, *adv, terminal, dts, thetas, rates, bc_low, bc_high, record)


def test_theta_backward_compiled_matches_python(rng):
    args = _backward_inputs(rng)
    out_a, bad_a = kernels.theta_backward(*args)
    out_b, bad_b = python_version(kernels.theta_backward)(*args)
    assert bad_a == bad_b == -1
    assert out_a.shape == (12, 32)
    np.testing.assert_allclose(out_a, out_b, rtol=1e-12, atol=1e-14)
    np.testing.assert_array_equal(out_a[-1], args[6])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_theta_backward_flags_non_finite(rng):
    args = list(_backward_inputs(rng))
    args[9] = args[9].copy()
    args[9][3] = np.inf
    _, bad = kernels.theta_backward(*args)
    assert bad == 3


def test_bilinear_reproduces_bilinear_functions(rng):
    t = np.sort(rng.uniform(0, 10, 9))
    s = np.sort(rng.uniform(1, 5, 13))
    vals = 2.0 + 3.0 * t[:, None] - 0.5 * s[None, :] + 0.25 * t[:, None] * s[None, :]
    tq = rng.uniform(t[0], t[-1], 200)
    sq = rng.uniform(s[0], s[-1], 200)
    exact = 2.0 + 3.0 * tq - 0.5 * sq + 0.25 * tq * sq
    np.testing.assert_allclose(kernels.bilinear_lookup(t, s, vals, tq, sq), exact, rtol=1e-12)
    np.testing.assert_allclose(python_version(kernels.bilinear_lookup)(t, s, vals, tq, sq), exact, rtol=1e-12)


def test_bilinear_hits_nodes_and_edges():
    t = np.array([0.0, 1.0, 2.0])
    s = np.array([1.0, 2.0, 4.0])
    vals = np.arange(9.0).reshape(3, 3)
    tq = np.array([0.0, 2.0, 1.0, 2.0])
    sq = np.array([1.0, 4.0, 2.0, 3.0])
    np.testing.assert_allclose(kernels.bilinear_lookup(t, s, vals, tq, sq), [0.0, 8.0, 4.0, 7.5])
