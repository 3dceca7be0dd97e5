"""Downlink sum-rate capacity: DPC via sum-power iterative water-filling.

The broadcast-channel sum capacity with single-antenna users is computed in
its dual multiple-access form

    C = max_P log2 det(I_M + (rho K / M) H^H P H),   P diagonal, tr P = 1.

Everything is evaluated through the ``K x K`` Gram matrix ``G = H H^H``
(``det(I_M + c H^H P H) = det(I_K + c P^1/2 G P^1/2)``), so the per-iteration
cost does not depend on the number of antennas. The batched routines take
stacks of Gram matrices shaped ``(B, K, K)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NonFiniteChannel, Overloaded, SingularGram

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500


@dataclass(frozen=True)
class PowerAllocation:
    p: np.ndarray
    water_level: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class CapacityResult:
    c_dpc: float
    allocation: PowerAllocation
    c_zf: Optional[float] = None
    history: list = field(default_factory=list, repr=False)


def if_capacity(num_users: int, rho: float) -> float:
    """Interference-free asymptote ``K log2(1 + rho)``."""
    if num_users < 1 or not rho > 0:
        raise ValueError("need K >= 1 and rho > 0")
    return float(num_users * np.log2(1.0 + rho))


def gram(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.complex128)
    return h @ np.swapaxes(h.conj(), -1, -2)


def _check_channel(h: np.ndarray):
    if h.shape[-2] > h.shape[-1]:
        raise Overloaded(f"K={h.shape[-2]} users exceeds M={h.shape[-1]} antennas")
    if not np.all(np.isfinite(h)):
        raise NonFiniteChannel("channel matrix contains non-finite values")


def objective_gram(g: np.ndarray, p: np.ndarray, snr_scale) -> np.ndarray:
    """``log2 det(I + c P^1/2 G P^1/2)`` for stacks of Gram matrices and allocations."""
    g = np.asarray(g)
    p = np.asarray(p, dtype=float)
    c = np.asarray(snr_scale, dtype=float)
    sq = np.sqrt(np.maximum(p, 0.0))
    k = g.shape[-1]
    # Hermitian positive definite, so log det = 2 sum log diag(chol)
    m = np.eye(k) + c[..., None, None] * (sq[..., :, None] * g * sq[..., None, :])
    chol = np.linalg.cholesky(m)
    diag = np.real(np.diagonal(chol, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(diag), axis=-1) / np.log(2.0)


def dpc_objective(h: np.ndarray, rho: float, p) -> float:
    """Sum-rate objective at a given power split, in bits/s/Hz."""
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    k, m = h.shape
    return float(objective_gram(gram(h), np.asarray(p, dtype=float), rho * k / m))


def waterfill(inv_gain: np.ndarray):
    """Exact sum-power water-filling ``P_i = max(0, mu - b_i)``, ``sum P = 1``.

    ``inv_gain`` holds ``b_i = 1 / e_i`` along the last axis (``inf`` for a
    dead user). The water level is found by sorting the floors and solving
    the piecewise-linear sum constraint on the active prefix.

    Returns
    -------
    p : ndarray
        Allocation with the same shape as ``inv_gain``.
    mu : ndarray
        Water level per batch entry (``nan`` when every user is dead).
    """
    b = np.asarray(inv_gain, dtype=float)
    k = b.shape[-1]
    order = np.argsort(b, axis=-1, kind="stable")
    bs = np.take_along_axis(b, order, axis=-1)
    n = np.arange(1, k + 1, dtype=float)
    with np.errstate(invalid="ignore"):
        levels = (1.0 + np.cumsum(bs, axis=-1)) / n
        valid = np.isfinite(bs) & (levels > bs)
    # the active set is a prefix of the sorted floors
    n_active = np.sum(np.cumprod(valid, axis=-1), axis=-1)
    dead = n_active == 0
    idx = np.maximum(n_active - 1, 0)
    mu = np.take_along_axis(levels, idx[..., None], axis=-1)[..., 0]
    with np.errstate(invalid="ignore"):
        p = np.where(np.isfinite(b), np.maximum(mu[..., None] - b, 0.0), 0.0)
    if np.any(dead):
        p[dead] = 1.0 / k
        mu = np.where(dead, np.nan, mu)
    return p, mu


def effective_gains(g: np.ndarray, p: np.ndarray, snr_scale) -> np.ndarray:
    """Per-user gain ``c h_i (I + c sum_{j!=i} P_j h_j^H h_j)^{-1} h_i^H``.

    With ``S = I + c H^H P H`` and ``x_i = h_i S^{-1} h_i^H`` the
    Sherman-Morrison identity gives ``e_i = c x_i / (1 - c P_i x_i)``, and
    ``x = diag(G (I + c P G)^{-1})``.
    """
    c = np.asarray(snr_scale, dtype=float)[..., None]
    k = g.shape[-1]
    a = np.eye(k) + (c * p)[..., :, None] * g
    t = np.linalg.solve(np.swapaxes(a, -1, -2), np.swapaxes(g, -1, -2))
    x = np.real(np.diagonal(t, axis1=-2, axis2=-1))
    x = np.maximum(x, 0.0)
    denom = np.maximum(1.0 - c * p * x, np.finfo(float).tiny)
    return c * x / denom


def dpc_capacity_gram(g, snr_scale, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, history=False):
    """Batched sum-power iterative water-filling on Gram matrices.

    Parameters
    ----------
    g : ndarray, shape (B, K, K)
        Hermitian Gram matrices ``H H^H``.
    snr_scale : float or ndarray, shape (B,)
        ``rho K / M`` per entry.
    tol : float
        Stop once the relative change of the objective falls below ``tol``.
    max_iter : int
        Maximum number of cycles.
    history : bool
        If true, also return the objective after every cycle (``(iters+1, B)``,
        padded with the final value once an entry has converged).

    Returns
    -------
    dict with ``capacity``, ``p``, ``mu``, ``iterations``, ``converged`` and,
    optionally, ``history``.
    """
    g = np.asarray(g, dtype=np.complex128)
    bsz, k, _ = g.shape
    c = np.broadcast_to(np.asarray(snr_scale, dtype=float), (bsz,)).copy()

    p = np.full((bsz, k), 1.0 / k)
    f = objective_gram(g, p, c)
    mu = np.full(bsz, np.nan)
    iters = np.zeros(bsz, dtype=np.int64)
    converged = np.zeros(bsz, dtype=bool)
    trace = [f.copy()] if history else None
    active = np.arange(bsz)

    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        ga, pa, ca = g[active], p[active], c[active]
        e = effective_gains(ga, pa, ca)
        with np.errstate(divide="ignore"):
            b = np.where(e > 0, 1.0 / e, np.inf)
        p_new, mu_new = waterfill(b)
        pa = ((k - 1) * pa + p_new) / k
        f_new = objective_gram(ga, pa, ca)
        scale = np.maximum(np.abs(f_new), np.finfo(float).tiny)
        done = np.abs(f_new - f[active]) <= tol * scale

        p[active] = pa
        f[active] = f_new
        mu[active] = mu_new
        iters[active] = it
        converged[active[done]] = True
        active = active[~done]
        if history:
            trace.append(f.copy())

    out = {"capacity": f, "p": p, "mu": mu, "iterations": iters, "converged": converged}
    if history:
        out["history"] = np.array(trace)
    return out


def dpc_capacity(h, rho: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                 with_zf: bool = False) -> CapacityResult:
    """DPC sum-rate capacity of one ``K x M`` channel matrix.

    Non-convergence within ``max_iter`` is reported through
    ``allocation.converged``; the capacity at the last iterate is still
    returned.
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    _check_channel(h)
    if not rho > 0:
        raise ValueError("rho must be positive")
    k, m = h.shape
    res = dpc_capacity_gram(gram(h)[None], rho * k / m, tol=tol, max_iter=max_iter, history=True)
    alloc = PowerAllocation(
        p=res["p"][0],
        water_level=float(res["mu"][0]),
        iterations=int(res["iterations"][0]),
        converged=bool(res["converged"][0]),
    )
    c_zf = None
    if with_zf:
        try:
            c_zf = zf_sumrate(h, rho)
        except SingularGram:
            c_zf = None
    hist = res["history"][: alloc.iterations + 1, 0].tolist()
    return CapacityResult(c_dpc=float(res["capacity"][0]), allocation=alloc, c_zf=c_zf, history=hist)


def zf_sumrate_gram(g: np.ndarray, snr_scale) -> np.ndarray:
    """Equal-power zero-forcing sum rate for stacks of Gram matrices."""
    g = np.asarray(g, dtype=np.complex128)
    k = g.shape[-1]
    lam = np.linalg.eigvalsh(g)
    if np.any(lam[..., 0] <= 1e-12 * lam[..., -1]):
        raise SingularGram("Gram matrix is rank deficient; zero-forcing undefined")
    d = np.real(np.diagonal(np.linalg.inv(g), axis1=-2, axis2=-1))
    c = np.asarray(snr_scale, dtype=float)[..., None]
    return np.sum(np.log2(1.0 + c / k / d), axis=-1)


def zf_sumrate(h, rho: float) -> float:
    """Zero-forcing sum rate with the pseudo-inverse precoder and equal power ``1/K``."""
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    _check_channel(h)
    k, m = h.shape
    return float(zf_sumrate_gram(gram(h), rho * k / m))
