"""Self-contained scenario generation for dataset building.

Reproduces the generation semantics of the solver package's `gen` command
from the file-format contract: a Walker-Delta LEO shell, a random service
region on the spherical Earth, the nearest visible satellites pointed at
the region center, per-element Friis link budgets, and Rician statistics
with log-normal Rician factors and exponential-correlation scattering.
All positions are meters in an Earth-centered frame; drops are
instantaneous snapshots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError
from .scenfile import (
    GridConfig,
    Scenario,
    canonical_rad,
    canonical_watt,
    exp_corr,
    rician_corr,
    rx_response,
    tx_response,
)

EARTH_RADIUS_M = 6371e3
# Exact SI values (identical to scipy.constants.k / scipy.constants.c).
BOLTZMANN_J_PER_K = 1.380649e-23
LIGHT_SPEED_M_S = 299792458.0


@dataclass(frozen=True)
class ShellConfig:
    """Walker-Delta shell plus RF front end.

    Defaults: 600 km shell of 28x60 satellites at 53 deg inclination,
    2 GHz carrier, 20 MHz bandwidth, 6/0 dBi element gains, 7 dB noise
    figure at 290 K, 800 km service-region radius, 10 deg elevation mask.
    """

    altitude_m: float = 600e3
    planes: int = 28
    sats_per_plane: int = 60
    inclination_rad: float = math.radians(53.0)
    phasing: int = 1
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

    @property
    def noise_power_w(self) -> float:
        """Receiver noise k_B * T * B * F in watts."""
        return (
            BOLTZMANN_J_PER_K
            * self.noise_temp_k
            * self.bandwidth_hz
            * 10.0 ** (self.noise_figure_db / 10.0)
        )


def shell_positions(cfg: ShellConfig, epoch_phase: float = 0.0):
    """Positions and unit along-track velocities of all P*Q satellites.

    Plane p has RAAN 2 pi p / P; slot q sits at argument of latitude
    2 pi q / Q + 2 pi F p / (P Q) + epoch_phase.
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
    pos = radius * np.stack(
        [cu * cr - su * ci * sr, cu * sr + su * ci * cr, su * si], axis=-1
    )
    vel = np.stack(
        [-su * cr - cu * ci * sr, -su * sr + cu * ci * cr, cu * si], axis=-1
    )
    return pos, vel


def elevation_angle(ground: np.ndarray, sat: np.ndarray) -> np.ndarray:
    ground = np.asarray(ground, dtype=float)
    sat = np.asarray(sat, dtype=float)
    up = ground / np.linalg.norm(ground, axis=-1, keepdims=True)
    los = sat - ground
    rng = np.linalg.norm(los, axis=-1)
    return np.arcsin(np.einsum("...i,...i->...", los, up) / rng)


def _sample_center(cfg: ShellConfig, rng: np.random.Generator) -> np.ndarray:
    # Area-uniform on the latitude band the shell can see.
    zmax = math.sin(cfg.inclination_rad)
    z = rng.uniform(-zmax, zmax)
    lon = rng.uniform(0.0, 2.0 * np.pi)
    r = math.sqrt(max(0.0, 1.0 - z * z))
    return EARTH_RADIUS_M * np.array([r * math.cos(lon), r * math.sin(lon), z])


def _sample_terminals(
    cfg: ShellConfig, center: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    # Area-uniform on the spherical cap of great-circle radius region_radius_m.
    c_hat = center / np.linalg.norm(center)
    alpha_max = cfg.region_radius_m / EARTH_RADIUS_M
    cos_alpha = rng.uniform(math.cos(alpha_max), 1.0, size=k)
    bearing = rng.uniform(0.0, 2.0 * np.pi, size=k)
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


def _attitude(sat_pos: np.ndarray, sat_vel: np.ndarray, target: np.ndarray):
    # Body rows: x = along-track component orthogonal to boresight,
    # y = z cross x, z = boresight toward the target.
    z = target - sat_pos
    z = z / np.linalg.norm(z)
    x = sat_vel - np.dot(sat_vel, z) * z
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        x = -sat_pos - np.dot(-sat_pos, z) * z
        nx = np.linalg.norm(x)
    x = x / nx
    y = np.cross(z, x)
    return np.stack([x, y, z])


@dataclass(frozen=True)
class DropGeometry:
    sat_positions: np.ndarray  # (S, 3)
    sat_attitudes: np.ndarray  # (S, 3, 3), rows = body axes
    ut_positions: np.ndarray  # (K, 3)
    center: np.ndarray  # (3,)


def sample_drop(
    cfg: ShellConfig,
    num_sats: int,
    num_uts: int,
    rng: np.random.Generator,
    max_tries: int = 1000,
) -> DropGeometry:
    """One service-region drop: K cap-uniform terminals, the num_sats nearest
    satellites above the elevation mask at the center, all pointed at the
    center.  Centers are re-drawn until every chosen satellite is above the
    horizon for every terminal."""
    positions, velocities = shell_positions(cfg)
    if num_sats < 1 or num_uts < 1:
        raise DataFormatError("need at least one satellite and one terminal")
    for _ in range(max_tries):
        center = _sample_center(cfg, rng)
        elev = elevation_angle(center, positions)
        visible = np.flatnonzero(elev > cfg.elevation_mask_rad)
        if visible.size < num_sats:
            continue
        uts = _sample_terminals(cfg, center, num_uts, rng)
        dist = np.linalg.norm(positions[visible] - center, axis=-1)
        chosen = visible[np.argsort(dist)[:num_sats]]
        el_uts = elevation_angle(uts[:, None, :], positions[chosen][None, :, :])
        if not np.all(el_uts > 0.0):
            continue
        att = np.stack(
            [_attitude(positions[i], velocities[i], center) for i in chosen]
        )
        return DropGeometry(
            sat_positions=positions[chosen],
            sat_attitudes=att,
            ut_positions=uts,
            center=center,
        )
    raise DataFormatError(f"no admissible region center found in {max_tries} tries")


def _spherical_angles(direction: np.ndarray) -> tuple[float, float]:
    # Azimuth in the body x-z plane, polar measured from the body y axis
    # (direction-cosine convention u_x = sin(theta)cos(phi), u_y = cos(theta)).
    phi = math.atan2(direction[2], direction[0])
    theta = math.acos(min(1.0, max(-1.0, direction[1])))
    return phi, theta


def link_angles(geom: DropGeometry, s: int, k: int):
    """(phi_sat, theta_sat, phi_ut, theta_ut) of one satellite-terminal link."""
    los = geom.ut_positions[k] - geom.sat_positions[s]
    rng = np.linalg.norm(los)
    if rng <= 0.0:
        raise DataFormatError("satellite and terminal positions coincide")
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


def friis_element_gain(cfg: ShellConfig, distance_m: float) -> float:
    """Per-element power transfer G_T G_R (lambda / 4 pi d)^2."""
    if distance_m <= 0.0:
        raise DataFormatError("zero-range link")
    lam = LIGHT_SPEED_M_S / cfg.carrier_hz
    fspl = (lam / (4.0 * np.pi * distance_m)) ** 2
    return fspl * 10.0 ** (cfg.tx_gain_dbi / 10.0) * 10.0 ** (cfg.rx_gain_dbi / 10.0)


def synthesize_scenario(
    geom: DropGeometry,
    cfg: ShellConfig,
    grid: GridConfig,
    rng: np.random.Generator,
    p_sat_w: float = 1.0,
) -> Scenario:
    """Statistics of one drop, with angles/budgets canonicalized for storage.

    Per link: beta = friis * M * N (per-element transfer aggregated over both
    apertures, so trace of the average channel Gram equals beta under
    unit-norm steering), Rician factor 10**(N(10, 3)/10), and a unit-trace
    exponential-correlation scattering matrix with coefficient U[0.3, 0.9]
    and a uniformly random phase twist.  All rate weights are 1.
    """
    s_n = geom.sat_positions.shape[0]
    k_n = geom.ut_positions.shape[0]
    m_n, n_n = grid.m, grid.n
    shape = (s_n, k_n)
    phi_sat = np.empty(shape)
    theta_sat = np.empty(shape)
    phi_ut = np.empty(shape)
    theta_ut = np.empty(shape)
    beta = np.empty(shape)
    kappa = np.empty(shape)
    sigma = np.empty(shape + (n_n, n_n), dtype=complex)
    g = np.empty(shape + (m_n,), dtype=complex)
    d0 = np.empty(shape + (n_n,), dtype=complex)
    r_ut = np.empty(shape + (n_n, n_n), dtype=complex)
    noise = np.empty(k_n)

    for s in range(s_n):
        for k in range(k_n):
            ps, ts, pu, tu = link_angles(geom, s, k)
            ps, ts = canonical_rad(ps), canonical_rad(ts)
            pu, tu = canonical_rad(pu), canonical_rad(tu)
            dist = float(
                np.linalg.norm(geom.ut_positions[k] - geom.sat_positions[s])
            )
            phi_sat[s, k], theta_sat[s, k] = ps, ts
            phi_ut[s, k], theta_ut[s, k] = pu, tu
            beta[s, k] = friis_element_gain(cfg, dist) * m_n * n_n
            noise[k] = cfg.noise_power_w
            kappa[s, k] = 10.0 ** (rng.normal(10.0, 3.0) / 10.0)
            rho = rng.uniform(0.3, 0.9)
            alpha = rng.uniform(0.0, 2.0 * np.pi)
            sigma[s, k] = exp_corr(n_n, rho, alpha)
            g[s, k] = tx_response(grid, ps, ts)
            d0[s, k] = rx_response(grid, pu, tu)
            r_ut[s, k] = rician_corr(beta[s, k], kappa[s, k], d0[s, k], sigma[s, k])

    budgets = np.full(s_n, canonical_watt(float(p_sat_w)))
    return Scenario(
        grid=grid,
        phi_sat=phi_sat,
        theta_sat=theta_sat,
        phi_ut=phi_ut,
        theta_ut=theta_ut,
        beta=beta,
        kappa=kappa,
        sigma_nlos=sigma,
        g=g,
        d0=d0,
        r_ut=r_ut,
        noise=noise,
        budgets=budgets,
        weights=np.ones(shape),
    )
