"""Grid-based SAGE estimation of multipath components on a short ULA window.

Each path is a plane wave with signature

    s(phi, tau)[m, l] = exp(j 2 pi x_m cos(phi) / lambda) * exp(-j 2 pi df_l tau)

over window elements ``m`` and subcarrier offsets ``df_l`` (uniformly
spaced, relative to the carrier). Estimation starts with successive
interference cancellation on the joint azimuth x delay grid and then runs
SAGE cycles: each path is re-fitted against the data with every other path
subtracted, delay and azimuth by a grid search plus one quadratic
interpolation step (on the grid peak and, with a step that halves every
cycle, around the current estimate), amplitude by least squares. The
current estimate is always a candidate, so the residual never grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MimoEvalError
from .models import MPC


@dataclass(frozen=True)
class SageConfig:
    window_len: int = 10
    num_mpcs: int = 200
    azimuth_step_deg: float = 1.0
    delay_oversample: int = 4
    max_cycles: int = 10
    residual_tol: float = 1e-6
    cycle_tol: float = 1e-9
    prune_db: float = -40.0

    def __post_init__(self):
        if self.window_len < 2:
            raise MimoEvalError("window_len must be >= 2")
        if self.num_mpcs < 1:
            raise MimoEvalError("num_mpcs must be >= 1")
        if not 0 < self.azimuth_step_deg <= 90:
            raise MimoEvalError("azimuth_step_deg must lie in (0, 90]")
        if self.delay_oversample < 1:
            raise MimoEvalError("delay_oversample must be >= 1")

    def azimuth_grid(self) -> np.ndarray:
        n = int(round(180.0 / self.azimuth_step_deg))
        return np.linspace(0.0, 180.0, n + 1)


@dataclass
class SageResult:
    """Estimated paths sorted by decreasing magnitude.

    ``residual_history`` holds the residual energy of the input, after the
    initialization and after every SAGE cycle. ``truncated`` is set when
    fewer paths than requested could be resolved.
    """

    mpcs: list
    residual: np.ndarray
    residual_history: list = field(default_factory=list)
    truncated: bool = False
    cycles: int = 0


def _parabolic(ym1: float, y0: float, yp1: float) -> float:
    """Vertex offset (in grid steps) of the parabola through three samples."""
    denom = ym1 - 2.0 * y0 + yp1
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (ym1 - yp1) / denom, -0.5, 0.5))


def _local_vertex(fun, x0: float, h: float) -> float:
    """Quadratic-interpolation step around ``x0`` with sample spacing ``h``."""
    return x0 + h * _parabolic(fun(x0 - h), fun(x0), fun(x0 + h))


class _Window:
    """Precomputed signatures for one window geometry and frequency grid."""

    def __init__(self, positions, wavelength, offsets, config: SageConfig):
        self.x = np.asarray(positions, dtype=float)
        self.wavelength = float(wavelength)
        self.df = np.asarray(offsets, dtype=float)
        self.cfg = config
        n = self.df.size
        if n < 2:
            raise MimoEvalError("need at least two subcarriers")
        self.spacing = float(self.df[1] - self.df[0])
        if self.spacing <= 0 or not np.allclose(np.diff(self.df), self.spacing, rtol=1e-9, atol=0):
            raise MimoEvalError("subcarrier offsets must be uniformly increasing")
        self.nfft = config.delay_oversample * n
        self.span = 1.0 / self.spacing
        self.tau_step = self.span / self.nfft
        self.az_grid = config.azimuth_grid()
        self.az_step = self.az_grid[1] - self.az_grid[0]
        self.A = self.space(self.az_grid)
        self.ell = np.arange(n)
        self.norm = self.x.size * n

    def space(self, az) -> np.ndarray:
        phi = np.radians(np.atleast_1d(az))
        return np.exp(2j * np.pi * np.outer(self.x, np.cos(phi)) / self.wavelength)

    def freq(self, tau: float) -> np.ndarray:
        return np.exp(-2j * np.pi * self.df * tau)

    def signature(self, az: float, tau: float) -> np.ndarray:
        return np.outer(self.space(az)[:, 0], self.freq(tau))

    def delay_spectrum(self, y: np.ndarray) -> np.ndarray:
        """``|sum_l y_l exp(+j 2 pi df_l tau_t)|^2`` on the delay grid (last axis)."""
        # df_l = df_0 + l * spacing; the df_0 term only rotates the phase
        return np.abs(np.fft.ifft(y, n=self.nfft, axis=-1) * self.nfft) ** 2

    def refine_delay(self, spec: np.ndarray, t: int) -> float:
        n = spec.size
        off = _parabolic(spec[(t - 1) % n], spec[t], spec[(t + 1) % n])
        return ((t + off) * self.tau_step) % self.span

    def refine_azimuth(self, spec: np.ndarray, i: int) -> float:
        if 0 < i < spec.size - 1:
            off = _parabolic(spec[i - 1], spec[i], spec[i + 1])
        else:
            off = 0.0
        return float(np.clip(self.az_grid[i] + off * self.az_step, 0.0, 180.0))

    def score(self, data: np.ndarray, az: float, tau: float) -> float:
        return float(np.abs(np.vdot(self.signature(az, tau), data)) ** 2)


def sage_estimate(window: np.ndarray, subcarrier_offsets, positions=None, wavelength: float = 1.0,
                  config: SageConfig = SageConfig()) -> SageResult:
    """Estimate delay, azimuth and complex amplitude of paths in one window.

    Parameters
    ----------
    window : ndarray, shape (W, N)
        Channel of one user over ``W`` consecutive ULA elements.
    subcarrier_offsets : array_like, shape (N,)
        Subcarrier frequencies relative to the carrier, in Hz, uniformly spaced.
    positions : array_like, shape (W,), optional
        Element coordinates along the array axis in metres. Defaults to
        half-wavelength spacing.
    wavelength : float
        Carrier wavelength in metres.
    config : SageConfig

    Returns
    -------
    SageResult
        ``mpcs`` sorted by decreasing ``|a|``; the reconstruction of all
        returned paths plus ``residual`` equals ``window``.
    """
    data = np.asarray(window, dtype=np.complex128)
    if data.ndim != 2:
        raise MimoEvalError("window must be a (W, N) matrix")
    w, n = data.shape
    if positions is None:
        positions = np.arange(w) * wavelength / 2
    if len(positions) != w:
        raise MimoEvalError("positions must match the window length")
    if not np.all(np.isfinite(data)):
        raise MimoEvalError("window contains non-finite values")
    geo = _Window(positions, wavelength, subcarrier_offsets, config)
    if geo.df.size != n:
        raise MimoEvalError("subcarrier_offsets must match the number of columns")

    e0 = float(np.vdot(data, data).real)
    history = [e0]
    if e0 == 0.0:
        return SageResult(mpcs=[], residual=data.copy(), residual_history=history)

    resolvable = w * n
    target = min(config.num_mpcs, resolvable)
    truncated = config.num_mpcs > resolvable
    stop = config.residual_tol * e0

    # successive interference cancellation
    resid = data.copy()
    params = []  # [az, tau, amp]
    sigs = []
    for _ in range(target):
        spec = geo.delay_spectrum(geo.A.conj().T @ resid)
        i, t = np.unravel_index(int(np.argmax(spec)), spec.shape)
        if spec[i, t] <= 0:
            break
        tau = geo.refine_delay(spec[i], t)
        az = geo.refine_azimuth(spec[:, t], i)
        s = geo.signature(az, tau)
        amp = np.vdot(s, resid) / geo.norm
        if amp == 0:
            break
        resid -= amp * s
        params.append([az, tau, amp])
        sigs.append(s)
        if float(np.vdot(resid, resid).real) <= stop:
            break
    history.append(float(np.vdot(resid, resid).real))

    # SAGE cycles
    cycles = 0
    for _ in range(config.max_cycles):
        if history[-1] <= stop:
            break
        cycles += 1
        # local search step shrinks every cycle
        shrink = 0.5 ** cycles
        for p, (az, tau, amp) in enumerate(params):
            xp = resid + amp * sigs[p]

            y = geo.space(az)[:, 0].conj() @ xp
            dspec = geo.delay_spectrum(y)
            cands = [tau, geo.refine_delay(dspec, int(np.argmax(dspec))),
                     _local_vertex(lambda t: abs(y @ geo.freq(t).conj()) ** 2, tau, geo.tau_step * shrink)]
            tau = max(cands, key=lambda t: abs(y @ geo.freq(t).conj()) ** 2)

            v = xp @ geo.freq(tau).conj()
            aspec = np.abs(geo.A.conj().T @ v) ** 2
            a_score = lambda a: abs(geo.space(a)[:, 0].conj() @ v) ** 2
            cands = [az, geo.refine_azimuth(aspec, int(np.argmax(aspec))),
                     float(np.clip(_local_vertex(a_score, az, geo.az_step * shrink), 0.0, 180.0))]
            az = max(cands, key=a_score)

            s = geo.signature(az, tau)
            amp = np.vdot(s, xp) / geo.norm
            resid = xp - amp * s
            params[p] = [az, tau, amp]
            sigs[p] = s
        history.append(float(np.vdot(resid, resid).real))
        if history[-2] - history[-1] <= config.cycle_tol * e0:
            break

    # prune negligible paths back into the residual
    if params:
        mags = np.abs([q[2] for q in params])
        floor = mags.max() * 10.0 ** (config.prune_db / 20.0)
        keep = []
        for (az, tau, amp), s, mag in zip(params, sigs, mags):
            if mag < floor:
                resid = resid + amp * s
            else:
                keep.append(MPC(delay=float(tau), azimuth=float(az), amplitude=complex(amp)))
        keep.sort(key=lambda m: -abs(m.amplitude))
    else:
        keep = []
    return SageResult(mpcs=keep, residual=resid, residual_history=history,
                      truncated=truncated, cycles=cycles)


def reconstruct(mpcs, subcarrier_offsets, positions, wavelength: float) -> np.ndarray:
    """Window channel ``(W, N)`` synthesised from a list of paths."""
    x = np.asarray(positions, dtype=float)
    df = np.asarray(subcarrier_offsets, dtype=float)
    out = np.zeros((x.size, df.size), dtype=np.complex128)
    for m in mpcs:
        a = np.exp(2j * np.pi * x * np.cos(np.radians(m.azimuth)) / wavelength)
        b = np.exp(-2j * np.pi * df * m.delay)
        out += m.amplitude * np.outer(a, b)
    return out
