"""Channel tensor, evaluation parameters and antenna subset selection.

A :class:`ChannelTensor` holds complex coefficients indexed
``(user k, port m, subcarrier l)`` for all ``A`` ports of the array. Smaller
arrays are emulated by selecting ``M`` of the ``A`` columns *after* the full
tensor has been normalized, so that power variations over the array survive
the selection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BadSubset, MimoEvalError, NonFiniteChannel, NormalizationRequired

DEFAULT_PORTS = 128
DEFAULT_SUBCARRIERS = 161
DEFAULT_CARRIER_HZ = 2.6e9
DEFAULT_BANDWIDTH_HZ = 50e6
SPEED_OF_LIGHT = 299_792_458.0


class ArrayKind(str, enum.Enum):
    ULA = "ULA"
    UCA = "UCA"
    GENERIC = "GENERIC"


class NormState(str, enum.Enum):
    RAW = "RAW"
    NORM1 = "NORM1"
    NORM2 = "NORM2"


@dataclass(frozen=True, eq=False)
class ChannelTensor:
    """Complex channel coefficients for ``K`` users, ``A`` ports, ``N`` subcarriers.

    The coefficient array is copied to ``complex128`` and made read-only on
    construction, so instances can be shared freely between threads.
    """

    coefficients: np.ndarray
    carrier_frequency: float = DEFAULT_CARRIER_HZ
    bandwidth: float = DEFAULT_BANDWIDTH_HZ
    array_kind: ArrayKind = ArrayKind.GENERIC
    norm_state: NormState = NormState.RAW

    def __post_init__(self):
        h = np.array(self.coefficients, dtype=np.complex128, copy=True)
        if h.ndim != 3:
            raise MimoEvalError(f"coefficients must be a 3-array (K, A, N), got shape {h.shape}")
        if min(h.shape) < 1:
            raise MimoEvalError(f"all dimensions must be >= 1, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise NonFiniteChannel("channel coefficients must be finite")
        h.setflags(write=False)
        object.__setattr__(self, "coefficients", h)
        object.__setattr__(self, "array_kind", ArrayKind(self.array_kind))
        object.__setattr__(self, "norm_state", NormState(self.norm_state))
        object.__setattr__(self, "carrier_frequency", float(self.carrier_frequency))
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def num_users(self) -> int:
        return self.coefficients.shape[0]

    @property
    def num_ports(self) -> int:
        return self.coefficients.shape[1]

    @property
    def num_subcarriers(self) -> int:
        return self.coefficients.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.coefficients.shape

    def subcarrier_frequencies(self) -> np.ndarray:
        """Absolute subcarrier frequencies in Hz.

        The ``N`` subcarriers are assumed uniformly spaced and to span the
        full bandwidth, i.e. spacing ``bandwidth / (N - 1)`` centred on the
        carrier. A single subcarrier sits on the carrier.
        """
        return subcarrier_frequencies(self.carrier_frequency, self.bandwidth, self.num_subcarriers)

    def matrix(self, subcarrier: int) -> np.ndarray:
        """The full ``K x A`` matrix at one subcarrier."""
        return self.coefficients[:, :, subcarrier]

    def replace(self, **changes) -> "ChannelTensor":
        kwargs = dict(
            coefficients=self.coefficients,
            carrier_frequency=self.carrier_frequency,
            bandwidth=self.bandwidth,
            array_kind=self.array_kind,
            norm_state=self.norm_state,
        )
        kwargs.update(changes)
        return ChannelTensor(**kwargs)


def subcarrier_frequencies(carrier_hz: float, bandwidth_hz: float, num_subcarriers: int) -> np.ndarray:
    if num_subcarriers == 1:
        return np.array([carrier_hz])
    offsets = (np.arange(num_subcarriers) - (num_subcarriers - 1) / 2) * (bandwidth_hz / (num_subcarriers - 1))
    return carrier_hz + offsets


@dataclass(frozen=True)
class AntennaSubset:
    """Strictly increasing list of port indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise BadSubset("antenna subset must not be empty")
        if any(i < 0 for i in idx):
            raise BadSubset(f"negative port index in {idx}")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise BadSubset("subset indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, num_ports: int) -> "AntennaSubset":
        return cls(tuple(range(num_ports)))

    def __len__(self):
        return len(self.indices)

    def compose(self, inner: "AntennaSubset") -> "AntennaSubset":
        """Subset obtained by selecting ``inner`` positions out of this subset."""
        if inner.indices[-1] >= len(self):
            raise BadSubset(f"inner index {inner.indices[-1]} out of range for subset of size {len(self)}")
        return AntennaSubset(tuple(self.indices[j] for j in inner.indices))


@dataclass(frozen=True)
class EvalParams:
    """Experiment grid for the Monte-Carlo evaluation.

    ``rho`` is the linear interference-free SNR (10 dB -> 10.0).
    """

    rho: float = 10.0
    num_users: int = 4
    antenna_counts: tuple[int, ...] = tuple(range(4, 129, 4))
    num_subsets: int = 2000
    master_seed: int = 0
    normalization: NormState = NormState.NORM2

    def __post_init__(self):
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise MimoEvalError(f"rho must be positive and finite, got {self.rho}")
        if self.num_users < 1:
            raise MimoEvalError("num_users must be >= 1")
        if self.num_subsets < 1:
            raise MimoEvalError("num_subsets must be >= 1")
        counts = tuple(int(m) for m in self.antenna_counts)
        if not counts or min(counts) < 1:
            raise MimoEvalError("antenna_counts must be a nonempty list of positive integers")
        object.__setattr__(self, "antenna_counts", counts)
        object.__setattr__(self, "master_seed", int(self.master_seed) & 0xFFFFFFFFFFFFFFFF)
        norm = NormState(self.normalization)
        if norm is NormState.RAW:
            raise MimoEvalError("evaluation normalization must be NORM1 or NORM2")
        object.__setattr__(self, "normalization", norm)

    @classmethod
    def from_db(cls, rho_db: float, **kwargs) -> "EvalParams":
        return cls(rho=10.0 ** (rho_db / 10.0), **kwargs)

    def check_against(self, tensor: ChannelTensor) -> None:
        bad = [m for m in self.antenna_counts if m > tensor.num_ports]
        if bad:
            raise BadSubset(f"antenna counts {bad} exceed the {tensor.num_ports} available ports")


def _check_indices(tensor: ChannelTensor, indices: Sequence[int]) -> np.ndarray:
    if tensor.norm_state is NormState.RAW:
        raise NormalizationRequired("normalize the full tensor before selecting antenna subsets")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= tensor.num_ports):
        raise BadSubset(f"subset references ports outside 0..{tensor.num_ports - 1}")
    return idx


def select_subset(tensor: ChannelTensor, subset: AntennaSubset, subcarrier: int) -> np.ndarray:
    """``K x M`` channel matrix at one subcarrier restricted to ``subset``.

    No re-normalization takes place; the tensor must already be NORM1/NORM2.
    """
    idx = _check_indices(tensor, subset.indices)
    if not 0 <= subcarrier < tensor.num_subcarriers:
        raise IndexError(f"subcarrier {subcarrier} out of range")
    return tensor.coefficients[:, idx, subcarrier].copy()


def select_subset_all(tensor: ChannelTensor, subset: AntennaSubset) -> np.ndarray:
    """All subcarriers at once, shaped ``(N, K, M)`` for batched linear algebra."""
    idx = _check_indices(tensor, subset.indices)
    return np.ascontiguousarray(np.transpose(tensor.coefficients[:, idx, :], (2, 0, 1)))
