import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from mimoeval.capacity import (
    dpc_capacity,
    dpc_capacity_gram,
    dpc_objective,
    gram,
    if_capacity,
    waterfill,
    zf_sumrate,
)
from mimoeval.errors import NonFiniteChannel, Overloaded, SingularGram


def _cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def grid_oracle(h, rho, step=1e-5):
    """Brute-force max over p1 in [0, 1] for K=2, refined locally."""
    k, m = h.shape
    c = rho * k / m
    g = h @ h.conj().T
    p1 = np.arange(0.0, 1.0 + step / 2, step)
    # det(I + c diag(p)^.5 G diag(p)^.5) for K=2 in closed form
    p2 = 1.0 - p1
    det = (1 + c * p1 * g[0, 0].real) * (1 + c * p2 * g[1, 1].real) - c**2 * p1 * p2 * abs(g[0, 1]) ** 2
    f = np.log2(det)
    i = int(np.argmax(f))
    lo, hi = max(0.0, p1[i] - step), min(1.0, p1[i] + step)

    def neg(x):
        y = 1.0 - x
        return -np.log2((1 + c * x * g[0, 0].real) * (1 + c * y * g[1, 1].real) - c**2 * x * y * abs(g[0, 1]) ** 2)

    ref = minimize_scalar(neg, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return max(f[i], -ref.fun)


def test_if_capacity_values():
    assert if_capacity(4, 10) == pytest.approx(4 * np.log2(11))
    with pytest.raises(ValueError):
        if_capacity(0, 10)


def test_single_user_closed_form():
    # K=1: all power to the user, C = log2(1 + rho * ||h||^2 / M)
    h = np.ones((1, 4), dtype=complex)
    assert dpc_capacity(h, 10.0).c_dpc == pytest.approx(np.log2(11.0), abs=1e-12)


def test_orthogonal_users_closed_form():
    f = np.fft.fft(np.eye(4)) * 1.0  # rows have squared norm M=4
    res = dpc_capacity(f[:2], 5.0)
    assert res.c_dpc == pytest.approx(2 * np.log2(6.0), abs=1e-9)
    assert np.allclose(res.allocation.p, 0.5)


def test_matches_grid_oracle_k2():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(30):
        h = _cn(rng, 2, 8)
        worst = max(worst, abs(dpc_capacity(h, 10.0).c_dpc - grid_oracle(h, 10.0)))
    assert worst <= 1e-6


def test_history_monotone_and_converges():
    rng = np.random.default_rng(3)
    res = dpc_capacity(_cn(rng, 16, 32), 10.0)
    hist = np.array(res.history)
    assert res.allocation.converged
    assert np.all(np.diff(hist) >= -1e-10)
    assert res.allocation.p.sum() == pytest.approx(1.0)
    assert np.all(res.allocation.p >= 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 6), st.integers(0, 10**6), st.floats(0.1, 1000))
def test_dpc_bounds(k, extra, seed, rho):
    h = _cn(np.random.default_rng(seed), k, k + extra)
    res = dpc_capacity(h, rho, with_zf=True)
    # dominates equal power and zero-forcing
    assert res.c_dpc >= dpc_objective(h, rho, np.full(k, 1.0 / k)) - 1e-9
    if res.c_zf is not None:
        assert res.c_zf <= res.c_dpc + 1e-9


def test_waterfill_exact():
    p, mu = waterfill(np.array([[0.1, 0.2, 5.0]]))
    assert p.sum() == pytest.approx(1.0)
    assert mu[0] == pytest.approx(0.65)
    assert np.allclose(p[0], [0.55, 0.45, 0.0])
    p, mu = waterfill(np.array([[np.inf, np.inf]]))
    assert np.allclose(p, 0.5) and np.isnan(mu[0])


def test_batched_matches_single(rng):
    hs = _cn(rng, 10, 3, 6)
    batch = dpc_capacity_gram(gram(hs), 10.0 * 3 / 6)["capacity"]
    assert np.allclose(batch, [dpc_capacity(h, 10.0).c_dpc for h in hs], atol=1e-9)


def test_zf_closed_form_orthogonal():
    f = np.fft.fft(np.eye(8))[:4]
    assert zf_sumrate(f, 10.0) == pytest.approx(if_capacity(4, 10.0))


def test_errors():
    with pytest.raises(Overloaded):
        dpc_capacity(np.ones((3, 2)), 10.0)
    with pytest.raises(SingularGram):
        zf_sumrate(np.ones((2, 4)), 10.0)
    h = np.ones((1, 2), dtype=complex)
    h[0, 0] = np.inf
    with pytest.raises(NonFiniteChannel):
        dpc_capacity(h, 10.0)
