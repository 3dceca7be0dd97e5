"""Singular values, singular value spread and Gram-matrix diagnostics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NonFiniteChannel, Overloaded

# sigma_min below this fraction of sigma_max is numerically zero
RANK_TOL = 1e-12


@dataclass(frozen=True)
class SpectrumResult:
    singular_values: np.ndarray
    spread_db: float
    subset_id: Optional[int] = None
    subcarrier: Optional[int] = None

    @property
    def kappa(self) -> float:
        return float(10.0 ** (self.spread_db / 20.0))


def _check(h: np.ndarray):
    if h.shape[-2] > h.shape[-1]:
        raise Overloaded(f"K={h.shape[-2]} users exceeds M={h.shape[-1]} antennas")
    if not np.all(np.isfinite(h)):
        raise NonFiniteChannel("channel matrix contains non-finite values")


def spread_db_from_singular_values(sv: np.ndarray) -> np.ndarray:
    """``20 log10(sigma_max / sigma_min)`` along the last axis, ``inf`` if rank deficient."""
    sv = np.asarray(sv, dtype=float)
    smax = sv.max(axis=-1)
    smin = sv.min(axis=-1)
    deficient = smin <= RANK_TOL * smax
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 20.0 * np.log10(smax / smin)
    return np.where(deficient, np.inf, out)


def singular_values_batch(h: np.ndarray) -> np.ndarray:
    """Descending singular values of a stack of ``K x M`` matrices."""
    h = np.asarray(h)
    _check(h)
    return np.linalg.svd(h, compute_uv=False)


def spread_db_batch(h: np.ndarray) -> np.ndarray:
    """Singular value spread in dB for a stack ``(..., K, M)``."""
    return spread_db_from_singular_values(singular_values_batch(h))


def singular_spread(h: np.ndarray, subset_id: Optional[int] = None, subcarrier: Optional[int] = None) -> SpectrumResult:
    """Singular values and spread of one ``K x M`` channel matrix.

    The spread is ``20 log10`` of the ratio of extreme singular values. A
    rank-deficient matrix reports ``+inf``.

    Raises
    ------
    Overloaded
        If ``K > M``.
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    sv = singular_values_batch(h)
    return SpectrumResult(
        singular_values=sv,
        spread_db=float(spread_db_from_singular_values(sv)),
        subset_id=subset_id,
        subcarrier=subcarrier,
    )


def gram_offdiag_ratio(h: np.ndarray) -> float:
    """``||offdiag(H H^H)||_F / ||diag(H H^H)||_F``.

    Zero for mutually orthogonal user channels; approaches zero under
    favorable propagation as M grows.
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
    _check(h)
    g = h @ h.conj().T
    d = np.diag(g)
    off = g - np.diag(d)
    denom = np.linalg.norm(d)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(off) / denom)
