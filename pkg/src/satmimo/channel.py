"""Statistical channel synthesis for satellite downlinks with UPAs.

The downlink from satellite s to terminal k is a Rician rank-one product
channel H = sqrt(kappa*beta/(kappa+1)) * d0 g^H + sqrt(beta/(kappa+1)) * dt g^H
with unit-norm transmit steering g, line-of-sight receive steering d0, and
correlated scattering dt ~ CN(0, sigma_nlos), trace(sigma_nlos) = 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .errors import DegenerateLink, ShapeMismatch


@dataclass(frozen=True)
class ArrayConfig:
    """Transmit (m_x x m_y) and receive (n_x x n_y) UPA layouts."""

    m_x: int = 4
    m_y: int = 4
    n_x: int = 2
    n_y: int = 2
    spacing_wl: float = 0.5  # element spacing in wavelengths

    @property
    def m(self) -> int:
        return self.m_x * self.m_y

    @property
    def n(self) -> int:
        return self.n_x * self.n_y


def ula_steering(n: int, x: float, spacing_wl: float = 0.5) -> np.ndarray:
    """Unit-norm ULA response (1/sqrt(n)) * exp(-j*2*pi*spacing*x*[0..n-1])."""
    phase = -2j * np.pi * spacing_wl * x * np.arange(n)
    return np.exp(phase) / math.sqrt(n)


def tx_steering(arr: ArrayConfig, phi: float, theta: float) -> np.ndarray:
    """Transmit UPA response a_{m_x}(sin(theta)cos(phi)) kron a_{m_y}(cos(theta))."""
    return np.kron(
        ula_steering(arr.m_x, math.sin(theta) * math.cos(phi), arr.spacing_wl),
        ula_steering(arr.m_y, math.cos(theta), arr.spacing_wl),
    )


def rx_steering(arr: ArrayConfig, phi: float, theta: float) -> np.ndarray:
    """Receive UPA response a_{n_x}(sin(theta)cos(phi)) kron a_{n_y}(cos(theta))."""
    return np.kron(
        ula_steering(arr.n_x, math.sin(theta) * math.cos(phi), arr.spacing_wl),
        ula_steering(arr.n_y, math.cos(theta), arr.spacing_wl),
    )


@dataclass(frozen=True)
class LinkStat:
    """Statistical state of one (satellite, terminal) link."""

    phi_sat: float
    theta_sat: float
    phi_ut0: float
    theta_ut0: float
    beta: float  # average channel power, trace(E{H H^H})
    kappa: float  # Rician factor (linear)
    sigma_nlos: np.ndarray  # (N, N) Hermitian PSD, unit trace
    g: np.ndarray  # (M,) unit-norm transmit steering
    d0: np.ndarray  # (N,) unit-norm LoS receive steering
    r_ut: np.ndarray  # (N, N) receive-side correlation, trace beta

    @property
    def r_sat(self) -> np.ndarray:
        """Transmit-side correlation beta * g g^H (rank one)."""
        return self.beta * np.outer(self.g, self.g.conj())


@dataclass
class ScenarioInstance:
    """All statistical state of one drop, stacked over the S x K links.

    ``link(s, k)`` yields the per-link view as a LinkStat.  ``noise`` holds
    the per-terminal noise power sigma_k^2 (W); ``budgets`` the per-satellite
    transmit power P_s (W); ``weights`` the per-link rate weights a_{s,k}.
    """

    arr: ArrayConfig
    phi_sat: np.ndarray  # (S, K)
    theta_sat: np.ndarray
    phi_ut: np.ndarray
    theta_ut: np.ndarray
    beta: np.ndarray  # (S, K)
    kappa: np.ndarray  # (S, K)
    sigma_nlos: np.ndarray  # (S, K, N, N)
    g: np.ndarray  # (S, K, M)
    d0: np.ndarray  # (S, K, N)
    r_ut: np.ndarray  # (S, K, N, N)
    noise: np.ndarray  # (K,)
    budgets: np.ndarray  # (S,)
    weights: np.ndarray  # (S, K)
    geometry: geo.GeometrySample | None = field(default=None, compare=False)

    @property
    def num_sats(self) -> int:
        return self.phi_sat.shape[0]

    @property
    def num_uts(self) -> int:
        return self.phi_sat.shape[1]

    @property
    def m(self) -> int:
        return self.g.shape[2]

    @property
    def n(self) -> int:
        return self.d0.shape[2]

    def link(self, s: int, k: int) -> LinkStat:
        return LinkStat(
            phi_sat=float(self.phi_sat[s, k]),
            theta_sat=float(self.theta_sat[s, k]),
            phi_ut0=float(self.phi_ut[s, k]),
            theta_ut0=float(self.theta_ut[s, k]),
            beta=float(self.beta[s, k]),
            kappa=float(self.kappa[s, k]),
            sigma_nlos=self.sigma_nlos[s, k],
            g=self.g[s, k],
            d0=self.d0[s, k],
            r_ut=self.r_ut[s, k],
        )

    def with_budgets(self, budgets) -> "ScenarioInstance":
        budgets = np.broadcast_to(np.asarray(budgets, float), (self.num_sats,)).copy()
        return replace(self, budgets=budgets)


def exp_corr_sigma(n: int, rho: float, alpha: float) -> np.ndarray:
    """Unit-trace exponential-correlation matrix (rho*e^{j*alpha})^{i-j}."""
    delta = np.arange(n)[:, None] - np.arange(n)[None, :]
    mat = (rho ** np.abs(delta)) * np.exp(1j * alpha * delta)
    return mat / np.trace(mat).real


def rician_r_ut(beta, kappa, d0, sigma_nlos) -> np.ndarray:
    """Receive-side correlation kappa*beta/(kappa+1)*d0 d0^H + beta/(kappa+1)*Sigma."""
    los = (kappa * beta / (kappa + 1.0)) * np.outer(d0, d0.conj())
    return los + (beta / (kappa + 1.0)) * sigma_nlos


def synthesize_stats(
    geom: geo.GeometrySample,
    cfg: geo.ConstellationConfig,
    arr: ArrayConfig,
    rng: np.random.Generator,
    p_sat_w=1.0,
    weights=None,
) -> ScenarioInstance:
    """Build the full statistical scenario for one geometry drop.

    Per link: angles from the drop geometry, per-link average channel power
    beta = friis * M * N (per-element Friis transfer aggregated over the
    transmit/receive apertures, so that trace(E{H H^H}) = beta under the
    unit-norm steering convention), Rician factor kappa log-normal with
    10 dB mean / 3 dB std, and a unit-trace exponential-correlation
    scattering matrix with coefficient U[0.3, 0.9] and a random phase twist.

    Angles and budgets are canonicalized through their serialized units
    (degrees / dBW) so that scenario files round-trip bit-exactly.
    """
    from .scenario_io import canonical_rad, canonical_watt

    s_n, k_n = geom.num_sats, geom.num_uts
    m_n, n_n = arr.m, arr.n
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
            ps, ts, pu, tu = geo.link_angles(geom, s, k)
            ps, ts = canonical_rad(ps), canonical_rad(ts)
            pu, tu = canonical_rad(pu), canonical_rad(tu)
            friis, sigma2 = geo.link_budget(cfg, geom, s, k)
            phi_sat[s, k], theta_sat[s, k] = ps, ts
            phi_ut[s, k], theta_ut[s, k] = pu, tu
            beta[s, k] = friis * m_n * n_n
            noise[k] = sigma2
            kappa[s, k] = 10.0 ** (rng.normal(10.0, 3.0) / 10.0)
            rho = rng.uniform(0.3, 0.9)
            alpha = rng.uniform(0.0, 2.0 * np.pi)
            sigma[s, k] = exp_corr_sigma(n_n, rho, alpha)
            g[s, k] = tx_steering(arr, ps, ts)
            d0[s, k] = rx_steering(arr, pu, tu)
            r_ut[s, k] = rician_r_ut(beta[s, k], kappa[s, k], d0[s, k], sigma[s, k])

    budgets = np.broadcast_to(np.asarray(p_sat_w, dtype=float), (s_n,)).copy()
    budgets = np.array([canonical_watt(p) for p in budgets])
    w = np.ones(shape) if weights is None else np.asarray(weights, float).reshape(shape)
    return ScenarioInstance(
        arr=arr,
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
        weights=w,
        geometry=geom,
    )


def nlos_cholesky(sigma_nlos: np.ndarray) -> np.ndarray:
    """Cholesky factor of the scattering correlation, with diagonal jitter
    1e-12 * trace/N applied once if the matrix is numerically semidefinite."""
    try:
        return np.linalg.cholesky(sigma_nlos)
    except np.linalg.LinAlgError:
        n = sigma_nlos.shape[0]
        jitter = 1e-12 * np.trace(sigma_nlos).real / n
        return np.linalg.cholesky(sigma_nlos + jitter * np.eye(n))


def sample_channel(link: LinkStat, rng: np.random.Generator) -> np.ndarray:
    """Draw one N x M channel realization H = d g^H from the link statistics."""
    n = link.d0.shape[0]
    chol = nlos_cholesky(link.sigma_nlos)
    z = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
    d = (
        math.sqrt(link.kappa * link.beta / (link.kappa + 1.0)) * link.d0
        + math.sqrt(link.beta / (link.kappa + 1.0)) * (chol @ z)
    )
    return np.outer(d, link.g.conj())


def permute_scenario(scn: ScenarioInstance, perm_s, perm_k) -> ScenarioInstance:
    """Relabel satellites by perm_s and terminals by perm_k.

    Row s of the result is row perm_s[s] of the input (and likewise for k),
    with noise, budgets and weights carried along consistently.
    """
    ps = np.asarray(perm_s, dtype=int)
    pk = np.asarray(perm_k, dtype=int)
    if sorted(ps.tolist()) != list(range(scn.num_sats)):
        raise ShapeMismatch("perm_s is not a permutation of range(S)")
    if sorted(pk.tolist()) != list(range(scn.num_uts)):
        raise ShapeMismatch("perm_k is not a permutation of range(K)")

    def take(a):
        return np.ascontiguousarray(a[np.ix_(ps, pk)])

    return ScenarioInstance(
        arr=scn.arr,
        phi_sat=take(scn.phi_sat),
        theta_sat=take(scn.theta_sat),
        phi_ut=take(scn.phi_ut),
        theta_ut=take(scn.theta_ut),
        beta=take(scn.beta),
        kappa=take(scn.kappa),
        sigma_nlos=take(scn.sigma_nlos),
        g=take(scn.g),
        d0=take(scn.d0),
        r_ut=take(scn.r_ut),
        noise=np.ascontiguousarray(scn.noise[pk]),
        budgets=np.ascontiguousarray(scn.budgets[ps]),
        weights=take(scn.weights),
        geometry=None,
    )


def subscenario(scn: ScenarioInstance, sat_indices) -> ScenarioInstance:
    """Restrict the scenario to a subset of satellites (all terminals kept)."""
    idx = np.asarray(sat_indices, dtype=int).reshape(-1)
    return ScenarioInstance(
        arr=scn.arr,
        phi_sat=scn.phi_sat[idx],
        theta_sat=scn.theta_sat[idx],
        phi_ut=scn.phi_ut[idx],
        theta_ut=scn.theta_ut[idx],
        beta=scn.beta[idx],
        kappa=scn.kappa[idx],
        sigma_nlos=scn.sigma_nlos[idx],
        g=scn.g[idx],
        d0=scn.d0[idx],
        r_ut=scn.r_ut[idx],
        noise=scn.noise,
        budgets=scn.budgets[idx],
        weights=scn.weights[idx],
        geometry=None,
    )
