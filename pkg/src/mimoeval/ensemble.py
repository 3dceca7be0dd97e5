"""Monte-Carlo evaluation over random antenna subsets and subcarriers.

Every ``(subset, subcarrier)`` pair is one cell. Cells are evaluated in
fixed-size chunks (optionally on a thread pool) and the resulting samples
are sorted before any statistic is taken, so reports do not depend on the
schedule.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .capacity import DEFAULT_MAX_ITER, DEFAULT_TOL, dpc_capacity_gram, gram
from .channel import AntennaSubset, ChannelTensor, EvalParams, NormState, select_subset_all
from .errors import BadSubset, CellError, MimoEvalError, NormalizationRequired, Overloaded
from .spectral import spread_db_batch

THREADS_ENV = "MIMOEVAL_THREADS"
CI_LEVEL = 0.90
# cells per chunk; a function of M only so results never depend on thread count
_CHUNK_ELEMENTS = 1 << 21

_MASK64 = 0xFFFFFFFFFFFFFFFF


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def hash64(master_seed: int, index: int) -> int:
    """Per-draw seed ``splitmix64(master ^ splitmix64(index))``."""
    return splitmix64((int(master_seed) & _MASK64) ^ splitmix64(int(index) & _MASK64))


def draw_subsets(num_ports: int, M: int, count: int, master_seed: int) -> list[AntennaSubset]:
    """Random antenna subsets of size ``M`` out of ``num_ports``.

    Each subset is drawn uniformly without replacement among ports from its
    own generator seeded with ``hash64(master_seed, i)``. Different draws may
    coincide. When ``M == num_ports`` there is only one subset.
    """
    if M > num_ports:
        raise BadSubset(f"cannot select M={M} antennas out of {num_ports}")
    if M < 1 or count < 1:
        raise BadSubset("M and count must be >= 1")
    if M == num_ports:
        return [AntennaSubset.full(num_ports)]
    out = []
    for i in range(count):
        rng = np.random.Generator(np.random.PCG64(hash64(master_seed, i)))
        idx = np.sort(rng.choice(num_ports, size=M, replace=False))
        out.append(AntennaSubset(tuple(idx.tolist())))
    return out


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            raise MimoEvalError(f"{THREADS_ENV} must be an integer, got {value!r}")
    return 1


def _quantile(sorted_values: np.ndarray, q: float) -> float:
    """Linear-interpolation quantile that tolerates +inf samples."""
    n = sorted_values.size
    pos = (n - 1) * q
    lo = int(math.floor(pos))
    frac = pos - lo
    a = float(sorted_values[lo])
    if frac == 0 or lo + 1 >= n:
        return a
    b = float(sorted_values[lo + 1])
    if math.isinf(b):
        return b
    return a + frac * (b - a)


@dataclass
class EnsembleRecord:
    """Summary statistics and empirical CDF of one metric at one antenna count."""

    metric: str
    M: int
    samples: int
    mean: float
    median: float
    ci_low: float
    ci_high: float
    num_subsets: int
    values: np.ndarray = field(repr=False)
    nonconverged: int = 0

    @property
    def cum_prob(self) -> np.ndarray:
        return np.arange(1, self.samples + 1) / self.samples

    def cdf(self):
        """Sorted ``(value, cumulative probability)`` pairs."""
        return list(zip(self.values.tolist(), self.cum_prob.tolist()))

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "samples": self.samples,
            "num_subsets": self.num_subsets,
            "mean": self.mean,
            "median": self.median,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "ci_level": CI_LEVEL,
            "nonconverged": self.nonconverged,
        }


def summarize(metric: str, M: int, samples, num_subsets: int = 1, nonconverged: int = 0) -> EnsembleRecord:
    values = np.sort(np.asarray(samples, dtype=float).ravel(), kind="stable")
    if values.size == 0:
        raise MimoEvalError("no samples to summarize")
    mean = math.fsum(values.tolist()) / values.size if np.all(np.isfinite(values)) else float(np.inf)
    tail = (1.0 - CI_LEVEL) / 2
    return EnsembleRecord(
        metric=metric,
        M=int(M),
        samples=int(values.size),
        mean=float(mean),
        median=_quantile(values, 0.5),
        ci_low=_quantile(values, tail),
        ci_high=_quantile(values, 1.0 - tail),
        num_subsets=num_subsets,
        values=values,
        nonconverged=int(nonconverged),
    )


@dataclass
class EnsembleReport:
    metric: str
    unit: str
    normalization: str
    records: dict = field(default_factory=dict)

    def __getitem__(self, M) -> EnsembleRecord:
        return self.records[M]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "unit": self.unit,
            "normalization": self.normalization,
            "records": [self.records[m].to_dict() for m in sorted(self.records)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def cdf_rows(self, max_points: Optional[int] = None):
        """``(metric, M, value, cum_prob)`` rows, optionally thinned per M."""
        for m in sorted(self.records):
            rec = self.records[m]
            probs = rec.cum_prob
            idx = np.arange(rec.samples)
            if max_points and rec.samples > max_points:
                idx = np.unique(np.round(np.linspace(0, rec.samples - 1, max_points)).astype(int))
            for i in idx:
                yield self.metric, m, float(rec.values[i]), float(probs[i])

    def write_cdf_csv(self, path_or_file, max_points: Optional[int] = None):
        close = False
        fh = path_or_file
        if not hasattr(fh, "write"):
            fh = open(path_or_file, "w", newline="")
            close = True
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["metric", "M", "value", "cum_prob"])
            for metric, m, v, p in self.cdf_rows(max_points):
                writer.writerow([metric, m, repr(v), repr(p)])
        finally:
            if close:
                fh.close()


def _evaluate(tensor: ChannelTensor, M: int, subsets, cell_fn: Callable, threads: int):
    """Apply ``cell_fn`` to all ``(subset, subcarrier)`` cells.

    ``cell_fn`` maps a stack ``(B, K, M)`` to a dict of ``(B,)`` arrays.
    Returns the concatenated arrays in (subset, subcarrier) order.
    """
    k, _, n = tensor.shape
    per_subset = max(1, _CHUNK_ELEMENTS // (n * k * M))
    chunks = [subsets[i : i + per_subset] for i in range(0, len(subsets), per_subset)]

    def run(chunk_no):
        chunk = chunks[chunk_no]
        h = np.concatenate([select_subset_all(tensor, s) for s in chunk], axis=0)
        try:
            return cell_fn(h)
        except MimoEvalError as exc:
            first = chunk_no * per_subset
            for j in range(h.shape[0]):
                try:
                    cell_fn(h[j : j + 1])
                except MimoEvalError as cell_exc:
                    raise CellError(str(cell_exc), M=M, subset=first + j // n, subcarrier=j % n) from cell_exc
            raise CellError(str(exc), M=M, subset=first, subcarrier=None) from exc

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, range(len(chunks))))
    else:
        parts = [run(i) for i in range(len(chunks))]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _require(tensor: ChannelTensor, params: EvalParams, allowed):
    if tensor.norm_state is NormState.RAW:
        raise NormalizationRequired("ensemble evaluation needs a normalized tensor")
    if tensor.norm_state not in allowed:
        raise MimoEvalError(f"tensor normalization {tensor.norm_state.value} not allowed here")
    if params.num_users != tensor.num_users:
        raise MimoEvalError(f"params expect K={params.num_users} users, tensor has {tensor.num_users}")
    params.check_against(tensor)


def run_spread_ensemble(tensor: ChannelTensor, params: EvalParams, threads: Optional[int] = None) -> EnsembleReport:
    """Singular value spread (dB) over every subset and subcarrier for each M.

    The tensor must carry NORM1 so that user attenuation imbalance does not
    enter the spread.
    """
    _require(tensor, params, {NormState.NORM1})
    threads = default_threads() if threads is None else threads
    report = EnsembleReport(metric="spread_db", unit="dB", normalization=tensor.norm_state.value)
    for M in params.antenna_counts:
        subsets = draw_subsets(tensor.num_ports, M, params.num_subsets, params.master_seed)
        out = _evaluate(tensor, M, subsets, lambda h: {"v": spread_db_batch(h)}, threads)
        report.records[M] = summarize("spread_db", M, out["v"], num_subsets=len(subsets))
    return report


def run_capacity_ensemble(tensor: ChannelTensor, params: EvalParams, threads: Optional[int] = None,
                          tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> EnsembleReport:
    """DPC sum-rate capacity (bits/s/Hz) over every subset and subcarrier for each M."""
    _require(tensor, params, {NormState.NORM1, NormState.NORM2})
    threads = default_threads() if threads is None else threads
    report = EnsembleReport(metric="c_dpc", unit="bit/s/Hz", normalization=tensor.norm_state.value)

    for M in params.antenna_counts:
        scale = params.rho * tensor.num_users / M

        def cell(h, scale=scale, M=M):
            if h.shape[-2] > h.shape[-1]:
                raise Overloaded(f"K={h.shape[-2]} users exceeds M={M} antennas")
            res = dpc_capacity_gram(gram(h), scale, tol=tol, max_iter=max_iter)
            return {"v": res["capacity"], "ok": res["converged"]}

        subsets = draw_subsets(tensor.num_ports, M, params.num_subsets, params.master_seed)
        out = _evaluate(tensor, M, subsets, cell, threads)
        report.records[M] = summarize("c_dpc", M, out["v"], num_subsets=len(subsets),
                                      nonconverged=int(np.sum(~out["ok"])))
    return report
