"""Channel generators: i.i.d. Rayleigh and a geometric ray-based scenario model.

The geometric model places the base-station array at the origin, users and
point scatterers in the horizontal plane, and superimposes one LOS ray plus
single-bounce scattered rays per user. Inside the array every ray is a plane
wave. For a ULA along the x axis the azimuth is measured from the array axis
and folded into [0, 180] degrees, so the element phase is
``2 pi (x_m / lambda) cos(phi)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import (
    DEFAULT_BANDWIDTH_HZ,
    DEFAULT_CARRIER_HZ,
    DEFAULT_PORTS,
    DEFAULT_SUBCARRIERS,
    SPEED_OF_LIGHT,
    ArrayKind,
    ChannelTensor,
    NormState,
    subcarrier_frequencies,
)
from .errors import GeometryError, MimoEvalError

UCA_RADIUS_M = 0.15
UCA_RINGS = 4
UCA_STATIONS = 16
UCA_PORTS_PER_STATION = 2
PATCH_3DB_EDGE_DEG = 65.0
PATCH_EDGE_DB = -11.0
PATCH_BACKLOBE_DB = -20.0
BS_HEIGHT_M = 20.0
USER_HEIGHT_M = 1.5


def gen_rayleigh(num_users: int, num_ports: int, num_subcarriers: int, seed,
                 carrier_hz: float = DEFAULT_CARRIER_HZ,
                 bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ) -> ChannelTensor:
    """RAW tensor of i.i.d. unit-variance circularly-symmetric complex Gaussians."""
    if min(num_users, num_ports, num_subcarriers) < 1:
        raise MimoEvalError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    shape = (num_users, num_ports, num_subcarriers)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)
    return ChannelTensor(h, carrier_frequency=carrier_hz, bandwidth=bandwidth_hz,
                         array_kind=ArrayKind.GENERIC, norm_state=NormState.RAW)


# -- array geometry ---------------------------------------------------------


def patch_exponent(edge_deg: float = PATCH_3DB_EDGE_DEG, edge_db: float = PATCH_EDGE_DB) -> float:
    """Exponent q such that the power pattern cos^q reaches ``edge_db`` at ``edge_deg``."""
    return edge_db / (10.0 * math.log10(math.cos(math.radians(edge_deg))))


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    """Base-station array.

    ``element_positions`` are metres, shape ``(A, 3)``. ``element_boresights``
    (degrees) and ``polarization`` (0/1 port index within a co-located pair)
    are only used for the UCA patch model.
    """

    kind: ArrayKind
    element_positions: np.ndarray
    wavelength: float
    element_boresights: Optional[np.ndarray] = None
    polarization: Optional[np.ndarray] = None
    pattern_exponent: float = field(default_factory=patch_exponent)
    backlobe_db: float = PATCH_BACKLOBE_DB

    def __post_init__(self):
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise GeometryError(f"wavelength must be positive, got {self.wavelength}")
        pos = np.array(self.element_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise GeometryError("element_positions must have shape (A, 3)")
        object.__setattr__(self, "element_positions", pos)
        object.__setattr__(self, "kind", ArrayKind(self.kind))
        if self.kind is ArrayKind.UCA and self.element_boresights is None:
            raise GeometryError("UCA geometry needs element boresights")

    @property
    def num_ports(self) -> int:
        return self.element_positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.element_positions.mean(axis=0)

    @classmethod
    def ula(cls, num_ports: int = DEFAULT_PORTS, carrier_hz: float = DEFAULT_CARRIER_HZ,
            spacing_wavelengths: float = 0.5) -> "ArrayGeometry":
        lam = SPEED_OF_LIGHT / carrier_hz if carrier_hz > 0 else 0.0
        pos = np.zeros((num_ports, 3))
        pos[:, 0] = np.arange(num_ports) * spacing_wavelengths * lam
        return cls(ArrayKind.ULA, pos, lam)

    @classmethod
    def uca(cls, carrier_hz: float = DEFAULT_CARRIER_HZ, radius: float = UCA_RADIUS_M,
            rings: int = UCA_RINGS, stations: int = UCA_STATIONS) -> "ArrayGeometry":
        """Cylindrical array: ``rings`` stacked circles of ``stations`` dual-port patches."""
        lam = SPEED_OF_LIGHT / carrier_hz if carrier_hz > 0 else 0.0
        pos, bore, pol = [], [], []
        for ring in range(rings):
            z = ring * lam / 2
            for s in range(stations):
                az = 360.0 * s / stations
                xy = radius * np.array([math.cos(math.radians(az)), math.sin(math.radians(az))])
                for p in range(UCA_PORTS_PER_STATION):
                    pos.append([xy[0], xy[1], z])
                    bore.append(az)
                    pol.append(p)
        return cls(ArrayKind.UCA, np.array(pos), lam, element_boresights=np.array(bore),
                   polarization=np.array(pol))

    def element_gain(self, azimuth_deg: np.ndarray) -> np.ndarray:
        """Amplitude gain ``(A, R)`` towards each ray azimuth (full-circle degrees)."""
        az = np.atleast_1d(np.asarray(azimuth_deg, dtype=float))
        if self.kind is not ArrayKind.UCA:
            return np.ones((self.num_ports, az.size))
        off = np.radians(az[None, :] - self.element_boresights[:, None])
        cosd = np.cos(off)
        power = np.where(cosd > 0, np.abs(cosd) ** self.pattern_exponent, 0.0)
        power = np.maximum(power, 10.0 ** (self.backlobe_db / 10.0))
        return np.sqrt(power)

    def steering_phase(self, azimuth_deg: np.ndarray, elevation_deg: Optional[np.ndarray] = None) -> np.ndarray:
        """Plane-wave phase ``psi_m`` ``(A, R)`` relative to the array centroid."""
        az = np.radians(np.atleast_1d(np.asarray(azimuth_deg, dtype=float)))
        if elevation_deg is None or self.kind is ArrayKind.ULA:
            el = np.zeros_like(az)
        else:
            el = np.radians(np.atleast_1d(np.asarray(elevation_deg, dtype=float)))
        u = np.stack([np.cos(az) * np.cos(el), np.sin(az) * np.cos(el), np.sin(el)])
        rel = self.element_positions - self.centroid
        return 2.0 * np.pi / self.wavelength * (rel @ u)


def ula_steering(positions_m: np.ndarray, wavelength: float, azimuth_deg) -> np.ndarray:
    """``exp(j 2 pi x_m cos(phi) / lambda)`` for positions along the array axis, ``(W, R)``."""
    x = np.asarray(positions_m, dtype=float)[:, None]
    phi = np.radians(np.atleast_1d(np.asarray(azimuth_deg, dtype=float)))[None, :]
    return np.exp(2j * np.pi * x * np.cos(phi) / wavelength)


def fold_azimuth(azimuth_deg):
    """Map a full-circle azimuth onto the ULA's [0, 180] degree range."""
    return np.degrees(np.arccos(np.cos(np.radians(azimuth_deg))))


# -- scenarios --------------------------------------------------------------


class Scenario(str, enum.Enum):
    LOS_COLOCATED = "LOS_COLOCATED"
    NLOS_COLOCATED = "NLOS_COLOCATED"
    FAR_APART = "FAR_APART"


@dataclass(frozen=True)
class MPC:
    """One propagation path as seen at the array reference point.

    ``amplitude`` is the baseband complex gain including the carrier phase,
    so a window's channel is ``sum_p a_p exp(j psi_m(phi_p)) exp(-j 2 pi df_l tau_p)``.
    """

    delay: float
    azimuth: float
    amplitude: complex
    los: bool = False

    def to_dict(self) -> dict:
        return {"delay_s": self.delay, "azimuth_deg": self.azimuth,
                "amplitude_re": self.amplitude.real, "amplitude_im": self.amplitude.imag,
                "los": self.los}


@dataclass(frozen=True)
class ScenarioConfig:
    """Propagation scene for ``num_users`` users.

    ``ricean_k_db`` may be ``+inf`` (LOS only) or ``-inf`` (no LOS). When
    ``user_positions`` is omitted they are generated from the scenario.
    Scatterers are drawn uniformly in a disc of ``scatterer_field_radius``
    around each cluster centre (one shared centre for co-located users, one
    per user otherwise); each user sees each scatterer of its cluster with
    probability ``scatterer_visibility``.
    """

    scenario: Scenario
    num_users: int = 4
    user_positions: Optional[tuple] = None
    ricean_k_db: object = 10.0
    num_scatterers: int = 30
    scatterer_field_radius: float = 15.0
    scatterer_visibility: float = 1.0
    shadow_sigma_db: float = 3.0
    shadow_corr_length: float = 2.0
    cluster_distance: float = 45.0
    cluster_azimuth_deg: object = 160.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        if self.num_users < 1:
            raise GeometryError("num_users must be >= 1")
        if not self.shadow_corr_length > 0:
            raise GeometryError("shadow_corr_length must be > 0")
        if self.shadow_sigma_db < 0:
            raise GeometryError("shadow_sigma_db must be >= 0")
        if not 0 < self.scatterer_visibility <= 1:
            raise GeometryError("scatterer_visibility must lie in (0, 1]")
        kf = np.broadcast_to(np.asarray(self.ricean_k_db, dtype=float), (self.num_users,))
        if np.any(np.isnan(kf)):
            raise GeometryError("ricean_k_db must not be NaN")
        if self.num_scatterers < 1 and np.any(kf < np.inf):
            raise GeometryError("diffuse users need num_scatterers >= 1")
        if self.user_positions is not None and len(self.user_positions) != self.num_users:
            raise GeometryError("user_positions must list one position per user")

    def k_factors_db(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.ricean_k_db, dtype=float), (self.num_users,)).copy()


def scenario_preset(name, num_users: int = 4, seed: int = 0, **overrides) -> ScenarioConfig:
    """Named scenario presets.

    The numbers are not measured values; they are chosen so that the three
    scenes rank in the expected order (co-located LOS hardest,
    users far apart easiest).
    """
    sc = Scenario(name)
    if sc is Scenario.LOS_COLOCATED:
        cfg = dict(ricean_k_db=6.0, num_scatterers=40, scatterer_field_radius=20.0,
                   scatterer_visibility=1.0, cluster_distance=60.0, cluster_azimuth_deg=160.0)
    elif sc is Scenario.NLOS_COLOCATED:
        cfg = dict(ricean_k_db=-np.inf, num_scatterers=200, scatterer_field_radius=45.0,
                   scatterer_visibility=0.5, cluster_distance=60.0, cluster_azimuth_deg=100.0)
    else:
        azimuths = tuple(np.linspace(25.0, 155.0, num_users)) if num_users > 1 else (90.0,)
        cfg = dict(ricean_k_db=12.0, num_scatterers=10, scatterer_field_radius=8.0,
                   scatterer_visibility=1.0, cluster_distance=50.0, cluster_azimuth_deg=azimuths)
    cfg.update(overrides)
    return ScenarioConfig(scenario=sc, num_users=num_users, seed=seed, **cfg)


def _user_positions(config: ScenarioConfig, rng: np.random.Generator, origin: np.ndarray) -> np.ndarray:
    if config.user_positions is not None:
        pos = np.array(config.user_positions, dtype=float)
        return pos[:, :2] if pos.shape[1] > 2 else pos
    k = config.num_users
    if config.scenario is Scenario.FAR_APART:
        az = np.radians(np.broadcast_to(np.asarray(config.cluster_azimuth_deg, dtype=float), (k,)))
        dist = config.cluster_distance * rng.uniform(0.7, 1.3, size=k)
        return origin + np.stack([dist * np.cos(az), dist * np.sin(az)], axis=1)
    az = math.radians(float(np.atleast_1d(config.cluster_azimuth_deg)[0]))
    centre = origin + config.cluster_distance * np.array([math.cos(az), math.sin(az)])
    # users on a randomly oriented line, 1.5-2 m apart
    theta = rng.uniform(0.0, np.pi)
    tangent = np.array([math.cos(theta), math.sin(theta)])
    steps = np.concatenate([[0.0], np.cumsum(rng.uniform(1.5, 2.0, size=k - 1))])
    steps -= steps.mean()
    return centre + steps[:, None] * tangent


def _shadowing(geometry: ArrayGeometry, config: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Log-normal amplitude profile along the array with unit mean-square."""
    a = geometry.num_ports
    white = rng.standard_normal(a)
    if config.shadow_sigma_db == 0:
        return np.ones(a)
    pos = geometry.element_positions
    d2 = np.sum((pos[:, None, :] - pos[None, :, :]) ** 2, axis=-1)
    kernel = np.exp(-d2 / (2.0 * config.shadow_corr_length ** 2))
    kernel /= np.sqrt(np.sum(kernel ** 2, axis=1, keepdims=True))
    z = kernel @ white
    s = 10.0 ** (config.shadow_sigma_db * z / 20.0)
    return s / np.sqrt(np.mean(s ** 2))


def _angles(points: np.ndarray, heights: np.ndarray, origin: np.ndarray):
    d = points - origin
    horiz = np.hypot(d[:, 0], d[:, 1])
    az = np.degrees(np.arctan2(d[:, 1], d[:, 0])) % 360.0
    el = np.degrees(np.arctan2(heights - BS_HEIGHT_M, horiz))
    return az, el, np.hypot(horiz, heights - BS_HEIGHT_M)


def gen_geometric(geometry: ArrayGeometry, config: ScenarioConfig,
                  num_subcarriers: int = DEFAULT_SUBCARRIERS, seed=None,
                  carrier_hz: Optional[float] = None,
                  bandwidth_hz: float = DEFAULT_BANDWIDTH_HZ):
    """Synthesize a RAW channel tensor and per-user ground-truth MPC lists.

    For user k::

        h[k, m, l] = g_m(phi_0) a_0 exp(-j 2 pi f_l tau_0) exp(j psi_m(phi_0))
                   + sum_p g_m(phi_p) a_p exp(-j 2 pi f_l tau_p) exp(j psi_m(phi_p)) s_m

    where ray 0 is the LOS ray, ``s_m`` the shadowing profile and the LOS to
    scattered power ratio equals the user's Ricean K-factor.

    Returns
    -------
    tensor : ChannelTensor
        RAW tensor with the geometry's array kind.
    truth : list of list of MPC
        Paths per user, LOS first when present. Azimuths are folded to
        [0, 180] for a ULA.
    """
    if not geometry.wavelength > 0:
        raise GeometryError("wavelength must be positive")
    if num_subcarriers < 1:
        raise MimoEvalError("num_subcarriers must be >= 1")
    if carrier_hz is None:
        carrier_hz = SPEED_OF_LIGHT / geometry.wavelength
    rng = np.random.default_rng(config.seed if seed is None else seed)
    origin = geometry.centroid[:2]
    freqs = subcarrier_frequencies(carrier_hz, bandwidth_hz, num_subcarriers)
    dfreq = freqs - carrier_hz

    users = _user_positions(config, rng, origin)
    k = config.num_users
    kf_db = config.k_factors_db()

    # scatterer clusters: one shared centre when co-located, one per user otherwise
    if config.scenario is Scenario.FAR_APART:
        centres = users
        owner = np.repeat(np.arange(k), config.num_scatterers)
    else:
        centres = users.mean(axis=0, keepdims=True)
        owner = np.full(config.num_scatterers, -1)
    n_sc = config.num_scatterers * centres.shape[0]
    r = config.scatterer_field_radius * np.sqrt(rng.uniform(size=n_sc))
    t = rng.uniform(0, 2 * np.pi, size=n_sc)
    scat = np.repeat(centres, config.num_scatterers, axis=0) + np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    scat_h = rng.uniform(0.0, BS_HEIGHT_M, size=n_sc)
    refl = (rng.standard_normal(n_sc) + 1j * rng.standard_normal(n_sc)) * np.sqrt(0.5)
    sc_az, sc_el, sc_dist = _angles(scat, scat_h, origin)
    pol_phase = np.exp(2j * np.pi * rng.uniform(size=(k, n_sc + 1)))

    h = np.zeros((k, geometry.num_ports, num_subcarriers), dtype=np.complex128)
    truth = []
    for u in range(k):
        shadow = _shadowing(geometry, config, rng)
        visible = rng.uniform(size=n_sc) < config.scatterer_visibility
        visible &= (owner == -1) | (owner == u)
        kf = 10.0 ** (kf_db[u] / 10.0) if np.isfinite(kf_db[u]) else (np.inf if kf_db[u] > 0 else 0.0)
        if np.isinf(kf):
            p_los, p_diff = 1.0, 0.0
        else:
            p_los, p_diff = kf / (1.0 + kf), 1.0 / (1.0 + kf)

        los_az, los_el, los_dist = _angles(users[u : u + 1], np.array([USER_HEIGHT_M]), origin)
        tau_los = los_dist[0] / SPEED_OF_LIGHT

        idx = np.flatnonzero(visible)
        if p_diff > 0 and idx.size == 0:
            idx = np.array([int(np.argmin(np.hypot(*(scat - users[u]).T)))])
        d_us = np.hypot(*(scat[idx] - users[u]).T)
        d_us = np.hypot(d_us, scat_h[idx] - USER_HEIGHT_M)
        tau_sc = (d_us + sc_dist[idx]) / SPEED_OF_LIGHT
        amp_sc = refl[idx] / np.maximum(d_us * sc_dist[idx], 1.0)
        if p_diff > 0:
            amp_sc = amp_sc * np.sqrt(p_diff / np.sum(np.abs(amp_sc) ** 2))
        else:
            amp_sc = np.zeros(0, dtype=complex)
            tau_sc = tau_sc[:0]
            idx = idx[:0]

        az = np.concatenate([los_az, sc_az[idx]])
        el = np.concatenate([los_el, sc_el[idx]])
        tau = np.concatenate([[tau_los], tau_sc])
        carrier_phase = np.exp(-2j * np.pi * carrier_hz * tau)
        amp = np.concatenate([[np.sqrt(p_los)], amp_sc]) * carrier_phase

        elem = geometry.element_gain(az) * np.exp(1j * geometry.steering_phase(az, el))
        if geometry.kind is ArrayKind.UCA:
            # second port of each dual-polarized pair sees a per-ray polarization phase
            sel = np.concatenate([[0], idx + 1])
            second = geometry.polarization == 1
            elem[second] *= pol_phase[u, sel][None, :]
        elem[:, 1:] *= shadow[:, None]
        freq = np.exp(-2j * np.pi * np.outer(tau, dfreq))
        h[u] = (elem * amp[None, :]) @ freq

        folded = fold_azimuth(az) if geometry.kind is ArrayKind.ULA else az
        paths = []
        if p_los > 0:
            paths.append(MPC(float(tau[0]), float(folded[0]), complex(amp[0]), los=True))
        for j in range(1, tau.size):
            paths.append(MPC(float(tau[j]), float(folded[j]), complex(amp[j])))
        truth.append(paths)

    tensor = ChannelTensor(h, carrier_frequency=carrier_hz, bandwidth=bandwidth_hz,
                           array_kind=geometry.kind, norm_state=NormState.RAW)
    return tensor, truth


def ground_truth_json(truth) -> dict:
    return {"users": [[p.to_dict() for p in paths] for paths in truth]}


def default_capacity_norm(scenario) -> NormState:
    """NORM1 for users far apart (attenuation imbalance removed), NORM2 otherwise."""
    return NormState.NORM1 if Scenario(scenario) is Scenario.FAR_APART else NormState.NORM2
