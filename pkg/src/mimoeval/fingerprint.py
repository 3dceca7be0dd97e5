"""Spatial fingerprints along a physically large ULA.

A window of ``window_len`` neighbouring elements slides along the array one
element at a time. Paths estimated in each window are binned by azimuth and
their energy accumulated per ``(window position, azimuth bin)`` cell. The
fingerprint is the smallest set of highest-energy cells holding a given
fraction of the total energy.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import SPEED_OF_LIGHT, ArrayKind, ChannelTensor
from .ensemble import default_threads
from .errors import GridMismatch, MimoEvalError
from .sage import SageConfig, sage_estimate

BIN_WIDTH_DEG = 2.0


@dataclass
class FingerprintMap:
    energy: np.ndarray
    selected: np.ndarray
    energy_fraction: float
    bin_width_deg: float = BIN_WIDTH_DEG
    window_len: int = 10

    @property
    def num_windows(self) -> int:
        return self.energy.shape[0]

    @property
    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.energy.shape[1]) + 0.5) * self.bin_width_deg

    def covered_fraction(self) -> float:
        total = self.energy.sum()
        return float(self.energy[self.selected].sum() / total) if total > 0 else 0.0

    def write_csv(self, path_or_file):
        close = False
        fh = path_or_file
        if not hasattr(fh, "write"):
            fh = open(path_or_file, "w", newline="")
            close = True
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["window_index", "azimuth_deg", "energy", "selected"])
            centers = self.bin_centers
            for w in range(self.num_windows):
                for b in range(centers.size):
                    writer.writerow([w, repr(float(centers[b])), repr(float(self.energy[w, b])),
                                     int(self.selected[w, b])])
        finally:
            if close:
                fh.close()


def azimuth_bin(azimuth_deg, bin_width_deg: float = BIN_WIDTH_DEG) -> np.ndarray:
    nbins = int(round(180.0 / bin_width_deg))
    idx = np.floor(np.asarray(azimuth_deg, dtype=float) / bin_width_deg).astype(int)
    return np.clip(idx, 0, nbins - 1)


def select_energy(energy: np.ndarray, fraction: float) -> np.ndarray:
    """Greedy-minimal mask of highest-energy cells covering ``fraction`` of the total."""
    if not 0 < fraction <= 1:
        raise MimoEvalError("energy_fraction must lie in (0, 1]")
    flat = energy.ravel()
    mask = np.zeros(flat.size, dtype=bool)
    total = flat.sum()
    if total <= 0:
        return mask.reshape(energy.shape)
    if fraction >= 1.0:
        return (energy > 0)
    order = np.argsort(-flat, kind="stable")
    csum = np.cumsum(flat[order])
    count = int(np.searchsorted(csum, fraction * total, side="left")) + 1
    count = min(count, int(np.count_nonzero(flat)))
    mask[order[:count]] = True
    return mask.reshape(energy.shape)


def fingerprint_from_channel(channel: np.ndarray, positions, wavelength: float, subcarrier_offsets,
                             config: SageConfig = SageConfig(), energy_fraction: float = 0.9,
                             bin_width_deg: float = BIN_WIDTH_DEG,
                             threads: Optional[int] = None) -> FingerprintMap:
    """Fingerprint of one user's ``(A, N)`` ULA channel."""
    h = np.asarray(channel, dtype=np.complex128)
    a, n = h.shape
    w = config.window_len
    if w > a:
        raise MimoEvalError(f"window of {w} elements exceeds the {a}-element array")
    x = np.asarray(positions, dtype=float)
    nbins = int(round(180.0 / bin_width_deg))
    starts = range(a - w + 1)

    def run(p):
        res = sage_estimate(h[p : p + w], subcarrier_offsets, x[p : p + w] - x[p], wavelength, config)
        row = np.zeros(nbins)
        for m in res.mpcs:
            row[azimuth_bin(m.azimuth, bin_width_deg)] += abs(m.amplitude) ** 2
        return row

    threads = default_threads() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, starts))
    else:
        rows = [run(p) for p in starts]
    energy = np.array(rows)
    return FingerprintMap(energy=energy, selected=select_energy(energy, energy_fraction),
                          energy_fraction=energy_fraction, bin_width_deg=bin_width_deg, window_len=w)


def build_fingerprint(tensor: ChannelTensor, user: int = 0, config: SageConfig = SageConfig(),
                      energy_fraction: float = 0.9, positions=None, threads: Optional[int] = None,
                      bin_width_deg: float = BIN_WIDTH_DEG) -> FingerprintMap:
    """Fingerprint of one user of a ULA tensor.

    ``positions`` defaults to half-wavelength spacing at the tensor's carrier.
    """
    if tensor.array_kind is not ArrayKind.ULA:
        raise MimoEvalError("fingerprints are defined for ULA tensors only")
    if not 0 <= user < tensor.num_users:
        raise MimoEvalError(f"user {user} out of range")
    wavelength = SPEED_OF_LIGHT / tensor.carrier_frequency
    if positions is None:
        positions = np.arange(tensor.num_ports) * wavelength / 2
    offsets = tensor.subcarrier_frequencies() - tensor.carrier_frequency
    return fingerprint_from_channel(tensor.coefficients[user], positions, wavelength, offsets,
                                    config=config, energy_fraction=energy_fraction,
                                    bin_width_deg=bin_width_deg, threads=threads)


def fingerprint_overlap(a: FingerprintMap, b: FingerprintMap) -> float:
    """Energy-weighted Jaccard overlap of two fingerprints' selected cells.

    Each map's energy is normalized to unit total first, so users with
    different path loss compare on shape alone.
    """
    if a.energy.shape != b.energy.shape or a.bin_width_deg != b.bin_width_deg:
        raise GridMismatch(f"grids differ: {a.energy.shape} vs {b.energy.shape}")
    wa = np.where(a.selected, a.energy, 0.0)
    wb = np.where(b.selected, b.energy, 0.0)
    ta, tb = a.energy.sum(), b.energy.sum()
    wa = wa / ta if ta > 0 else wa
    wb = wb / tb if tb > 0 else wb
    denom = np.maximum(wa, wb).sum()
    if denom == 0:
        return 1.0 if not (a.selected.any() or b.selected.any()) else 0.0
    return float(np.minimum(wa, wb).sum() / denom)
