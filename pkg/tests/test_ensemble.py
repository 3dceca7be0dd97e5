import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimoeval.channel import EvalParams, NormState
from mimoeval.ensemble import (
    _quantile,
    draw_subsets,
    hash64,
    run_capacity_ensemble,
    run_spread_ensemble,
    splitmix64,
    summarize,
)
from mimoeval.errors import BadSubset, MimoEvalError, NormalizationRequired
from mimoeval.models import gen_rayleigh
from mimoeval.normalization import normalize1, normalize2


def test_splitmix64_reference_values():
    # first outputs of the reference generator seeded with 0
    state, outs = 0, []
    for _ in range(3):
        outs.append(splitmix64(state))
        state = (state + 0x9E3779B97F4A7C15) & (2**64 - 1)
    assert outs == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    assert hash64(5, 7) == splitmix64(5 ^ splitmix64(7))


def test_draw_subsets():
    subs = draw_subsets(16, 4, 50, master_seed=3)
    assert len(subs) == 50
    assert all(len(s) == 4 and max(s.indices) < 16 for s in subs)
    assert subs == draw_subsets(16, 4, 50, master_seed=3)
    assert subs != draw_subsets(16, 4, 50, master_seed=4)
    # prefix stable: the i-th draw does not depend on the count
    assert draw_subsets(16, 4, 10, master_seed=3) == subs[:10]
    assert len(draw_subsets(16, 16, 50, master_seed=3)) == 1
    with pytest.raises(BadSubset):
        draw_subsets(16, 17, 5, 0)


def test_subset_coverage_roughly_uniform():
    counts = np.zeros(32)
    for s in draw_subsets(32, 8, 4000, master_seed=1):
        counts[list(s.indices)] += 1
    assert np.allclose(counts / counts.sum(), 1 / 32, rtol=0.1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.floats(0, 1))
def test_quantile_matches_numpy(values, q):
    v = np.sort(values)
    assert _quantile(v, q) == pytest.approx(np.quantile(v, q), rel=1e-9, abs=1e-9)


def test_quantile_with_inf():
    v = np.array([1.0, 2.0, np.inf])
    assert _quantile(v, 0.25) == pytest.approx(1.5)
    assert math.isinf(_quantile(v, 0.9))


def test_summarize():
    rec = summarize("x", 4, [3.0, 1.0, 2.0, 4.0, 5.0])
    assert rec.mean == 3.0 and rec.median == 3.0
    assert rec.ci_low == pytest.approx(1.2) and rec.ci_high == pytest.approx(4.8)
    assert list(rec.values) == [1, 2, 3, 4, 5]
    assert rec.cdf()[-1] == (5.0, 1.0)
    with pytest.raises(MimoEvalError):
        summarize("x", 4, [])


def _params(**kw):
    base = dict(num_users=4, antenna_counts=(4, 16), num_subsets=30, master_seed=2)
    base.update(kw)
    return EvalParams(**base)


def test_spread_ensemble_requires_norm1():
    raw = gen_rayleigh(4, 16, 5, seed=1)
    with pytest.raises(NormalizationRequired):
        run_spread_ensemble(raw, _params(normalization=NormState.NORM1))
    with pytest.raises(MimoEvalError):
        run_spread_ensemble(normalize2(raw), _params())


def test_spread_ensemble_shape_and_trend():
    t = normalize1(gen_rayleigh(4, 16, 5, seed=1))
    rep = run_spread_ensemble(t, _params(normalization=NormState.NORM1), threads=1)
    assert rep[4].samples == 30 * 5
    assert rep[16].samples == 5 and rep[16].num_subsets == 1
    assert rep[4].median > rep[16].median


def test_ensemble_thread_invariance():
    t = normalize2(gen_rayleigh(4, 16, 64, seed=1))
    p = _params(antenna_counts=(4, 8), num_subsets=200)
    a = run_capacity_ensemble(t, p, threads=1)
    b = run_capacity_ensemble(t, p, threads=4)
    assert a.to_json() == b.to_json()
    assert np.array_equal(a[4].values, b[4].values)


def test_capacity_ensemble_matches_direct():
    from mimoeval.capacity import dpc_capacity
    from mimoeval.channel import select_subset

    t = normalize2(gen_rayleigh(2, 8, 3, seed=5))
    p = EvalParams(num_users=2, antenna_counts=(4,), num_subsets=5, master_seed=9)
    rep = run_capacity_ensemble(t, p)
    direct = [dpc_capacity(select_subset(t, s, l), 10.0).c_dpc
              for s in draw_subsets(8, 4, 5, 9) for l in range(3)]
    assert np.allclose(rep[4].values, np.sort(direct), atol=1e-9)
    assert rep[4].nonconverged == 0


def test_k_mismatch_rejected():
    t = normalize2(gen_rayleigh(3, 8, 2, seed=0))
    with pytest.raises(MimoEvalError):
        run_capacity_ensemble(t, _params(antenna_counts=(4,)))


def test_cdf_csv_thinning():
    t = normalize1(gen_rayleigh(4, 16, 5, seed=1))
    rep = run_spread_ensemble(t, _params(normalization=NormState.NORM1))
    buf = io.StringIO()
    rep.write_cdf_csv(buf, max_points=10)
    rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
    assert set(rows[0]) == {"metric", "M", "value", "cum_prob"}
    m4 = [r for r in rows if r["M"] == "4"]
    assert len(m4) == 10 and float(m4[-1]["cum_prob"]) == 1.0
