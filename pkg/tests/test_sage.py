import numpy as np
import pytest

from mimoeval.errors import MimoEvalError
from mimoeval.models import MPC
from mimoeval.sage import SageConfig, reconstruct, sage_estimate

LAM = 0.1153
W, N = 10, 41
OFFSETS = (np.arange(N) - (N - 1) / 2) * 50e6 / (N - 1)
POS = np.arange(W) * LAM / 2


def planted(seed=0):
    return [
        MPC(delay=120e-9, azimuth=40.0, amplitude=1.0 + 0.2j),
        MPC(delay=310e-9, azimuth=95.0, amplitude=-0.5 + 0.4j),
        MPC(delay=520e-9, azimuth=140.0, amplitude=0.3 - 0.25j),
    ]


def test_noiseless_single_path():
    truth = [MPC(delay=200e-9, azimuth=63.3, amplitude=0.7 - 0.1j)]
    x = reconstruct(truth, OFFSETS, POS, LAM)
    res = sage_estimate(x, OFFSETS, POS, LAM, SageConfig(num_mpcs=1))
    assert res.residual_history[-1] <= 1e-6 * res.residual_history[0]
    # with the early stop disabled the cycles refine the path further
    res = sage_estimate(x, OFFSETS, POS, LAM, SageConfig(num_mpcs=1, residual_tol=0.0))
    assert res.cycles >= 1
    assert res.residual_history[-1] < 1e-10 * res.residual_history[0]
    m = res.mpcs[0]
    assert m.azimuth == pytest.approx(63.3, abs=1e-3)
    assert m.delay == pytest.approx(200e-9, abs=1e-11)


def test_three_paths_at_30db():
    truth = planted()
    x = reconstruct(truth, OFFSETS, POS, LAM)
    rng = np.random.default_rng(7)
    noise_power = np.mean(np.abs(x) ** 2) / 1e3
    x = x + np.sqrt(noise_power / 2) * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    res = sage_estimate(x, OFFSETS, POS, LAM, SageConfig(num_mpcs=3))
    got = sorted(res.mpcs, key=lambda m: m.delay)
    for t, g in zip(truth, got):
        assert abs(g.azimuth - t.azimuth) <= 2.0
        assert abs(g.delay - t.delay) <= 1 / (2 * 50e6)
        assert abs(g.amplitude - t.amplitude) / abs(t.amplitude) <= 0.1
    assert np.all(np.diff(res.residual_history) <= 1e-12 * res.residual_history[0])


def test_reconstruction_plus_residual_is_input():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((W, N)) + 1j * rng.standard_normal((W, N))
    res = sage_estimate(x, OFFSETS, POS, LAM, SageConfig(num_mpcs=8, max_cycles=3))
    back = reconstruct(res.mpcs, OFFSETS, POS, LAM) + res.residual
    assert np.allclose(back, x, atol=1e-12 * np.abs(x).max())
    mags = [abs(m.amplitude) for m in res.mpcs]
    assert mags == sorted(mags, reverse=True)


def test_excess_paths_pruned():
    x = reconstruct(planted()[:1], OFFSETS, POS, LAM)
    res = sage_estimate(x, OFFSETS, POS, LAM, SageConfig(num_mpcs=5))
    assert len(res.mpcs) == 1


def test_zero_window_and_truncation():
    res = sage_estimate(np.zeros((W, N)), OFFSETS, POS, LAM)
    assert res.mpcs == []
    x = reconstruct(planted(), OFFSETS[:3], POS[:2], LAM)
    assert sage_estimate(x, OFFSETS[:3], POS[:2], LAM, SageConfig(window_len=2, num_mpcs=10)).truncated


def test_bad_inputs():
    with pytest.raises(MimoEvalError):
        sage_estimate(np.zeros(5), OFFSETS)
    with pytest.raises(MimoEvalError):
        sage_estimate(np.zeros((W, N)), OFFSETS[::-1], POS, LAM)
    with pytest.raises(MimoEvalError):
        SageConfig(window_len=1)
