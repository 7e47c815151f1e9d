"""Constellation geometry: Walker-Delta shells, service-region drops, link budgets.

All positions are Cartesian coordinates in meters in an Earth-centered frame
on a spherical Earth; drops are instantaneous snapshots (no rotation model).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants as _const

from .errors import DegenerateLink, SelectionInfeasible

EARTH_RADIUS_M = 6371e3


@dataclass(frozen=True)
class ConstellationConfig:
    """Walker-Delta shell plus RF front-end parameters.

    Defaults describe an S-band LEO downlink: 600 km shell of 28x60
    satellites at 53 deg inclination, 2 GHz carrier, 20 MHz bandwidth,
    6/0 dBi per-antenna gains, 7 dB noise figure at 290 K, and an
    800 km-radius service region with a 10 deg elevation mask.
    """

    altitude_m: float = 600e3
    planes: int = 28
    sats_per_plane: int = 60
    inclination_rad: float = math.radians(53.0)
    phasing: int = 1  # Walker-Delta phasing factor F
    carrier_hz: float = 2e9
    bandwidth_hz: float = 20e6
    tx_gain_dbi: float = 6.0
    rx_gain_dbi: float = 0.0
    noise_figure_db: float = 7.0
    noise_temp_k: float = 290.0
    region_radius_m: float = 800e3
    elevation_mask_rad: float = math.radians(10.0)

    @property
    def orbit_radius_m(self) -> float:
        return EARTH_RADIUS_M + self.altitude_m


@dataclass(frozen=True)
class DropConfig:
    """One random service-region drop: S cooperating satellites, K terminals.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """

    num_sats: int
    num_uts: int
    seed: object = None
    epoch_phase: float = 0.0
    max_center_tries: int = 1000


@dataclass(frozen=True)
class GeometrySample:
    """Frozen geometry of one drop.

    ``sat_attitudes[s]`` has the satellite body axes as rows (x = along-track
    component orthogonal to boresight, y = z cross x, z = boresight toward the
    region center), so ``att @ v`` maps a world vector into the body frame.
    """

    sat_positions: np.ndarray  # (S, 3) m
    sat_attitudes: np.ndarray  # (S, 3, 3)
    ut_positions: np.ndarray  # (K, 3) m
    center: np.ndarray  # (3,) m
    sat_indices: np.ndarray  # (S,) indices into the generating shell

    @property
    def num_sats(self) -> int:
        return self.sat_positions.shape[0]

    @property
    def num_uts(self) -> int:
        return self.ut_positions.shape[0]


def walker_delta_positions(cfg: ConstellationConfig, epoch_phase: float = 0.0):
    """Positions and unit along-track velocities of the full shell.

    Plane p gets RAAN 2*pi*p/P; slot q in plane p sits at argument of
    latitude 2*pi*q/Q + 2*pi*F*p/(P*Q) + epoch_phase.

    Returns:
        (positions, velocities): float arrays of shape (P*Q, 3).
    """
    nplanes, nsats = cfg.planes, cfg.sats_per_plane
    total = nplanes * nsats
    radius = cfg.orbit_radius_m
    ci, si = math.cos(cfg.inclination_rad), math.sin(cfg.inclination_rad)

    p_idx = np.repeat(np.arange(nplanes), nsats)
    q_idx = np.tile(np.arange(nsats), nplanes)
    raan = 2.0 * np.pi * p_idx / nplanes
    arg_lat = 2.0 * np.pi * q_idx / nsats + 2.0 * np.pi * cfg.phasing * p_idx / total
    arg_lat = arg_lat + epoch_phase

    cr, sr = np.cos(raan), np.sin(raan)
    cu, su = np.cos(arg_lat), np.sin(arg_lat)

    # R_z(raan) @ R_x(inc) @ [cos u, sin u, 0]^T, and its d/du for the velocity
    pos = radius * np.stack(
        [cu * cr - su * ci * sr, cu * sr + su * ci * cr, su * si], axis=-1
    )
    vel = np.stack(
        [-su * cr - cu * ci * sr, -su * sr + cu * ci * cr, cu * si], axis=-1
    )
    return pos, vel


def elevation_angle(ground: np.ndarray, sat: np.ndarray) -> np.ndarray:
    """Elevation (rad) of ``sat`` above the local horizon at ``ground``.

    Broadcasts over leading dimensions of either argument.
    """
    ground = np.asarray(ground, dtype=float)
    sat = np.asarray(sat, dtype=float)
    up = ground / np.linalg.norm(ground, axis=-1, keepdims=True)
    los = sat - ground
    rng = np.linalg.norm(los, axis=-1)
    return np.arcsin(np.einsum("...i,...i->...", los, up) / rng)


def _sample_center(cfg: ConstellationConfig, rng: np.random.Generator) -> np.ndarray:
    # Area-uniform point on the latitude band reachable by the shell.
    zmax = math.sin(cfg.inclination_rad)
    z = rng.uniform(-zmax, zmax)
    lon = rng.uniform(0.0, 2.0 * np.pi)
    r = math.sqrt(max(0.0, 1.0 - z * z))
    return EARTH_RADIUS_M * np.array([r * math.cos(lon), r * math.sin(lon), z])


def _sample_uts(
    cfg: ConstellationConfig, center: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    # Area-uniform points on the spherical cap of great-circle radius
    # region_radius_m around the center.
    c_hat = center / np.linalg.norm(center)
    alpha_max = cfg.region_radius_m / EARTH_RADIUS_M
    cos_alpha = rng.uniform(math.cos(alpha_max), 1.0, size=k)
    bearing = rng.uniform(0.0, 2.0 * np.pi, size=k)
    # Tangent basis at the center.
    helper = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(helper, c_hat)) > 0.99:
        helper = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, c_hat)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c_hat, e1)
    sin_alpha = np.sqrt(np.clip(1.0 - cos_alpha**2, 0.0, None))
    dirs = (
        cos_alpha[:, None] * c_hat
        + (sin_alpha * np.cos(bearing))[:, None] * e1
        + (sin_alpha * np.sin(bearing))[:, None] * e2
    )
    return EARTH_RADIUS_M * dirs


def _attitude_matrix(sat_pos: np.ndarray, sat_vel: np.ndarray, target: np.ndarray):
    z = target - sat_pos
    z = z / np.linalg.norm(z)
    x = sat_vel - np.dot(sat_vel, z) * z
    nx = np.linalg.norm(x)
    if nx < 1e-12:  # boresight parallel to the velocity; use the radial instead
        x = -sat_pos - np.dot(-sat_pos, z) * z
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    return np.stack([x, y, z])


def drop_scenario(cfg: ConstellationConfig, drop: DropConfig) -> GeometrySample:
    """Sample one service-region drop.

    Draws a region center inside the shell's latitude band, K area-uniform
    terminals within the region, and selects the ``num_sats`` nearest
    satellites above the elevation mask at the center.  Centers are
    re-sampled (up to ``max_center_tries``) until enough satellites are
    visible and every selected satellite has positive elevation to every
    terminal; otherwise SelectionInfeasible is raised.
    """
    rng = np.random.default_rng(drop.seed)
    positions, velocities = walker_delta_positions(cfg, drop.epoch_phase)
    s, k = drop.num_sats, drop.num_uts
    if s < 1 or k < 1:
        raise SelectionInfeasible("need at least one satellite and one terminal")

    for _ in range(drop.max_center_tries):
        center = _sample_center(cfg, rng)
        elev = elevation_angle(center, positions)
        visible = np.flatnonzero(elev > cfg.elevation_mask_rad)
        if visible.size < s:
            continue
        uts = _sample_uts(cfg, center, k, rng)
        dist = np.linalg.norm(positions[visible] - center, axis=-1)
        chosen = visible[np.argsort(dist)[:s]]
        # Every selected satellite must be above the horizon for every UT.
        el_uts = elevation_angle(uts[:, None, :], positions[chosen][None, :, :])
        if not np.all(el_uts > 0.0):
            continue
        att = np.stack(
            [_attitude_matrix(positions[i], velocities[i], center) for i in chosen]
        )
        return GeometrySample(
            sat_positions=positions[chosen],
            sat_attitudes=att,
            ut_positions=uts,
            center=center,
            sat_indices=chosen,
        )
    raise SelectionInfeasible(
        f"no admissible region center found in {drop.max_center_tries} tries"
    )


def _spherical_angles(direction: np.ndarray) -> tuple[float, float]:
    # Polar angle measured from the body y-axis, azimuth in the x-z plane.
    phi = math.atan2(direction[2], direction[0])
    theta = math.acos(min(1.0, max(-1.0, direction[1])))
    return phi, theta


def link_angles(geom: GeometrySample, s: int, k: int):
    """Departure/arrival angle pairs (phi_sat, theta_sat, phi_ut, theta_ut).

    The satellite array lies in its body x-y plane with boresight +z; the
    terminal array is horizontal (x east, y north, z up).  Angles follow the
    direction-cosine convention u_x = sin(theta)cos(phi), u_y = cos(theta),
    so a boresight link maps to (phi, theta) = (pi/2, pi/2), i.e. broadside.
    """
    los = geom.ut_positions[k] - geom.sat_positions[s]
    rng = np.linalg.norm(los)
    if rng <= 0.0:
        raise DegenerateLink("satellite and terminal positions coincide")
    u_body = geom.sat_attitudes[s] @ (los / rng)
    phi_sat, theta_sat = _spherical_angles(u_body)

    up = geom.ut_positions[k] / np.linalg.norm(geom.ut_positions[k])
    helper = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(helper, up)) > 0.99:
        helper = np.array([1.0, 0.0, 0.0])
    east = np.cross(helper, up)
    east /= np.linalg.norm(east)
    north = np.cross(up, east)
    frame = np.stack([east, north, up])
    v_local = frame @ (-los / rng)
    phi_ut, theta_ut = _spherical_angles(v_local)
    return phi_sat, theta_sat, phi_ut, theta_ut


def link_budget(cfg: ConstellationConfig, geom: GeometrySample, s: int, k: int):
    """Per-element Friis power transfer and receiver noise power.

    Returns:
        (beta_element, sigma2): the G_T*G_R*(lambda/4*pi*d)^2 transfer between
        one transmit and one receive element, and k_B*T*B*F in watts.
    """
    d = float(np.linalg.norm(geom.ut_positions[k] - geom.sat_positions[s]))
    if d <= 0.0:
        raise DegenerateLink("zero-range link")
    lam = _const.c / cfg.carrier_hz
    fspl = (lam / (4.0 * np.pi * d)) ** 2
    beta = fspl * 10.0 ** (cfg.tx_gain_dbi / 10.0) * 10.0 ** (cfg.rx_gain_dbi / 10.0)
    sigma2 = (
        _const.k
        * cfg.noise_temp_k
        * cfg.bandwidth_hz
        * 10.0 ** (cfg.noise_figure_db / 10.0)
    )
    return beta, sigma2
