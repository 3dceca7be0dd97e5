"""Per-user (NORM1) and global (NORM2) energy normalization of a RAW tensor.

Both operate on the full A-port tensor; subsets are selected afterwards.
"""

import numpy as np

from .channel import ChannelTensor, NormState
from .errors import DegenerateChannel, DegenerateUser, MimoEvalError


def _require_raw(tensor: ChannelTensor):
    if tensor.norm_state is not NormState.RAW:
        raise MimoEvalError(f"expected a RAW tensor, got {tensor.norm_state.value}")


def normalize1(tensor: ChannelTensor) -> ChannelTensor:
    """Scale each user row to unit average energy over ports and subcarriers.

    Removes attenuation imbalance between users while keeping variation over
    antennas and frequency.
    """
    _require_raw(tensor)
    h = tensor.coefficients
    k, a, n = h.shape
    row_energy = np.sum(np.abs(h) ** 2, axis=(1, 2))
    dead = np.flatnonzero(row_energy == 0)
    if dead.size:
        raise DegenerateUser(f"user rows {dead.tolist()} have zero energy")
    scale = np.sqrt((a * n) / row_energy)
    return tensor.replace(coefficients=h * scale[:, None, None], norm_state=NormState.NORM1)


def normalize2(tensor: ChannelTensor) -> ChannelTensor:
    """Scale the whole tensor to unit average coefficient energy.

    Inter-user energy ratios are preserved.
    """
    _require_raw(tensor)
    h = tensor.coefficients
    total = np.sum(np.abs(h) ** 2)
    if total == 0:
        raise DegenerateChannel("channel tensor has zero energy")
    scale = np.sqrt(h.size / total)
    return tensor.replace(coefficients=h * scale, norm_state=NormState.NORM2)


def normalize(tensor: ChannelTensor, which) -> ChannelTensor:
    """Dispatch on ``which`` in {1, 2, NormState.NORM1, NormState.NORM2}."""
    state = {1: NormState.NORM1, 2: NormState.NORM2}.get(which, which)
    state = NormState(state)
    if state is NormState.NORM1:
        return normalize1(tensor)
    if state is NormState.NORM2:
        return normalize2(tensor)
    raise MimoEvalError("normalization must be NORM1 or NORM2")


def mean_energy(tensor: ChannelTensor, per_user: bool = False):
    """Average coefficient energy, overall or per user row."""
    e = np.abs(tensor.coefficients) ** 2
    if per_user:
        return e.mean(axis=(1, 2))
    return float(e.mean())
