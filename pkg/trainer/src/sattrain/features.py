"""Feature construction, noise-unit normalization, and export folding.

The network features mirror the inference-side layout exactly:

    a[s,k] = [phi_sat, theta_sat, phi_ut, theta_ut, sigma_k^2, P_s]
    r[s,k] = [vec Re r_ut | vec Im r_ut | vec Re r_sat | vec Im r_sat]
    b[s,k] = [beta, kappa]
    u[s,k] = [vec Re d0 d0^H | vec Im d0 d0^H | vec Re g g^H | vec Im g g^H]

with row-major vec and r_sat = beta g g^H; the full-grid feature is
[a | r | b] and the other-satellite feature is [a | u].

Training runs in *noise units*: every power-valued channel (noise, beta,
the r block) is divided by the common receiver noise power c, which maps
(beta, sigma^2) -> (beta/c, 1).  That joint scaling leaves the optimal
precoders, the rates, and every tuple component except the receive scalar
invariant, and scales u by sqrt(c).  Because c is one global constant over
the generated data, the whole normalization plus the train-split
standardization is an affine reparametrization of the first linear layer,
folded into the exported weights (and the u output channels are scaled by
1/sqrt(c)) so the container consumes raw-unit features bit-compatibly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .errors import DataFormatError
from .scenfile import Scenario

_STD_FLOOR = 1e-12


def _vec_herm(mat: np.ndarray) -> np.ndarray:
    flat_re = mat.real.reshape(*mat.shape[:-2], -1)
    flat_im = mat.imag.reshape(*mat.shape[:-2], -1)
    return np.concatenate([flat_re, flat_im], axis=-1)


def scenario_features(scn: Scenario):
    """(a, r, b, u) blocks of one scenario, float64."""
    s_n, k_n = scn.num_sats, scn.num_uts
    a = np.empty((s_n, k_n, 6))
    a[..., 0] = scn.phi_sat
    a[..., 1] = scn.theta_sat
    a[..., 2] = scn.phi_ut
    a[..., 3] = scn.theta_ut
    a[..., 4] = np.broadcast_to(scn.noise[None, :], (s_n, k_n))
    a[..., 5] = np.broadcast_to(scn.budgets[:, None], (s_n, k_n))

    r_sat = scn.beta[..., None, None] * np.einsum("ska,skb->skab", scn.g, scn.g.conj())
    r = np.concatenate([_vec_herm(scn.r_ut), _vec_herm(r_sat)], axis=-1)
    b = np.stack([scn.beta, scn.kappa], axis=-1)
    dd = np.einsum("ska,skb->skab", scn.d0, scn.d0.conj())
    gg = np.einsum("ska,skb->skab", scn.g, scn.g.conj())
    u = np.concatenate([_vec_herm(dd), _vec_herm(gg)], axis=-1)
    return a, r, b, u


def grid_feature(scn: Scenario) -> np.ndarray:
    """Raw full-grid feature [a | r | b], shape (S, K, D)."""
    a, r, b, _ = scenario_features(scn)
    return np.concatenate([a, r, b], axis=-1)


def other_feature(scn: Scenario) -> np.ndarray:
    """Raw other-satellite channel block [a | u] for every satellite row."""
    a, _, _, u = scenario_features(scn)
    return np.concatenate([a, u], axis=-1)


def unit_scale(m: int, n: int, layout: str, noise_w: float) -> np.ndarray:
    """Diagonal mapping raw-unit channels to noise-unit channels.

    Entries are 1/noise_w on power-valued channels (the noise scalar, the
    whole r block, beta) and 1 elsewhere (angles, budget, kappa, and the
    unit-scale steering outer products of the other-satellite block).
    """
    herm = 2 * n * n + 2 * m * m
    inv = 1.0 / noise_w
    head = np.array([1.0, 1.0, 1.0, 1.0, inv, 1.0])
    if layout == "grid":
        return np.concatenate([head, np.full(herm, inv), [inv, 1.0]])
    if layout == "other":
        return np.concatenate([head, np.ones(herm)])
    raise DataFormatError(f"unknown feature layout {layout!r}")


@dataclass
class FeatureStats:
    """Train-split standardization in noise units, plus the noise power."""

    noise_w: float
    mu_grid: np.ndarray
    sd_grid: np.ndarray
    mu_oth: np.ndarray
    sd_oth: np.ndarray

    @staticmethod
    def identity(d_grid: int, d_oth: int, noise_w: float = 1.0) -> "FeatureStats":
        """No-op stats (mu 0, sd 1); with noise_w=1 the fold is the identity."""
        return FeatureStats(
            noise_w=noise_w,
            mu_grid=np.zeros(d_grid),
            sd_grid=np.ones(d_grid),
            mu_oth=np.zeros(d_oth),
            sd_oth=np.ones(d_oth),
        )


def common_noise_power(scns: list[Scenario]) -> float:
    """The single noise power shared by every terminal of every scenario.

    The normalization is one global constant folded into the container, so
    heterogeneous noise powers cannot be represented; generated datasets
    always satisfy this (one RF front end).
    """
    vals = np.concatenate([np.asarray(s.noise, float).ravel() for s in scns])
    c = float(vals[0])
    if not np.all(vals == c):
        raise DataFormatError("dataset mixes unequal noise powers")
    if c <= 0.0:
        raise DataFormatError("noise power must be positive")
    return c


def compute_stats(scns: list[Scenario]) -> FeatureStats:
    c = common_noise_power(scns)
    m, n = scns[0].m, scns[0].n
    dg = unit_scale(m, n, "grid", c)
    do = unit_scale(m, n, "other", c)
    grid = np.concatenate([grid_feature(s).reshape(-1, dg.size) for s in scns]) * dg
    oth = np.concatenate([other_feature(s).reshape(-1, do.size) for s in scns]) * do
    sd_grid = grid.std(axis=0)
    sd_oth = oth.std(axis=0)
    # Constant channels (the normalized noise, zero imaginary diagonals)
    # carry nothing; pin their scale so standardization stays invertible.
    sd_grid[sd_grid < _STD_FLOOR] = 1.0
    sd_oth[sd_oth < _STD_FLOOR] = 1.0
    return FeatureStats(
        noise_w=c,
        mu_grid=grid.mean(axis=0),
        sd_grid=sd_grid,
        mu_oth=oth.mean(axis=0),
        sd_oth=sd_oth,
    )


def standardized_grid(scn: Scenario, stats: FeatureStats) -> np.ndarray:
    dg = unit_scale(scn.m, scn.n, "grid", stats.noise_w)
    return (grid_feature(scn) * dg - stats.mu_grid) / stats.sd_grid


def standardized_other(scn: Scenario, stats: FeatureStats) -> np.ndarray:
    do = unit_scale(scn.m, scn.n, "other", stats.noise_w)
    return (other_feature(scn) * do - stats.mu_oth) / stats.sd_oth


# ---------------------------------------------------------------------------
# export folding


def fold_tensors(
    arch: str, tensors: dict[str, np.ndarray], stats: FeatureStats
) -> dict[str, np.ndarray]:
    """Rewrite trained noise-unit weights to consume raw-unit features.

    The first linear layer absorbs the per-channel affine map
    x_std = (d_c * x_raw - mu) / sd:

        w'[i, :] = (d_c[i] / sd[i]) * w[i, :]
        b'       = b - (mu / sd) @ w

    and the two receive-scalar output channels of the decode head are
    scaled by 1/sqrt(noise_w), converting the noise-unit prediction
    u' = sqrt(c) u back to raw units.  Everything else is untouched.
    """
    out = {k: np.array(v, dtype=np.float64) for k, v in tensors.items()}

    def fold_in(prefix: str, mu, sd, d_c):
        w = out[f"{prefix}in.w"]
        if w.shape[0] != mu.size:
            raise DataFormatError(
                f"{prefix}in.w expects {w.shape[0]} channels, stats have {mu.size}"
            )
        out[f"{prefix}in.w"] = w * (d_c / sd)[:, None]
        out[f"{prefix}in.b"] = out[f"{prefix}in.b"] - (mu / sd) @ w

    m, n = _dims_from_widths(arch, tensors)
    if arch == "centralized":
        fold_in("", stats.mu_grid, stats.sd_grid, unit_scale(m, n, "grid", stats.noise_w))
    else:
        fold_in(
            "loc.", stats.mu_grid, stats.sd_grid, unit_scale(m, n, "grid", stats.noise_w)
        )
        fold_in(
            "oth.", stats.mu_oth, stats.sd_oth, unit_scale(m, n, "other", stats.noise_w)
        )
    root = math.sqrt(stats.noise_w)
    out["fda.l2.w"][:, 1:3] /= root
    out["fda.l2.b"][1:3] /= root
    return out


def unfold_tensors(
    arch: str, tensors: dict[str, np.ndarray], stats: FeatureStats
) -> dict[str, np.ndarray]:
    """Exact inverse of fold_tensors (used to replay an exported container
    through the noise-unit forward pass)."""
    out = {k: np.array(v, dtype=np.float64) for k, v in tensors.items()}

    def unfold_in(prefix: str, mu, sd, d_c):
        w = out[f"{prefix}in.w"] * (sd / d_c)[:, None]
        out[f"{prefix}in.w"] = w
        out[f"{prefix}in.b"] = out[f"{prefix}in.b"] + (mu / sd) @ w

    m, n = _dims_from_widths(arch, tensors)
    if arch == "centralized":
        unfold_in(
            "", stats.mu_grid, stats.sd_grid, unit_scale(m, n, "grid", stats.noise_w)
        )
    else:
        unfold_in(
            "loc.", stats.mu_grid, stats.sd_grid, unit_scale(m, n, "grid", stats.noise_w)
        )
        unfold_in(
            "oth.", stats.mu_oth, stats.sd_oth, unit_scale(m, n, "other", stats.noise_w)
        )
    root = math.sqrt(stats.noise_w)
    out["fda.l2.w"][:, 1:3] *= root
    out["fda.l2.b"][1:3] *= root
    return out


def _dims_from_widths(arch: str, tensors: dict[str, np.ndarray]) -> tuple[int, int]:
    g = tensors["fda.l2.b"].size
    n = (g - 6) // 2
    d = tensors["in.w" if arch == "centralized" else "loc.in.w"].shape[0]
    m = math.isqrt((d - 8 - 2 * n * n) // 2)
    return m, n


# ---------------------------------------------------------------------------
# batched scenario tensors for the loss


def _chol_nlos(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        n = sigma.shape[-1]
        jitter = 1e-12 * np.trace(sigma, axis1=-2, axis2=-1).real / n
        return np.linalg.cholesky(sigma + jitter[..., None, None] * np.eye(n))


@dataclass
class SceneBatch:
    """Stacked scenario arrays (noise units) plus standardized features.

    Everything is a torch tensor with a leading sample dimension; the
    complex dtype follows the real one (float32 -> complex64).
    """

    g: torch.Tensor  # (B, S, K, M) complex
    d0: torch.Tensor  # (B, S, K, N) complex
    chol: torch.Tensor  # (B, S, K, N, N) complex, scattering factor
    r_ut: torch.Tensor  # (B, S, K, N, N) complex, noise units
    beta: torch.Tensor  # (B, S, K) noise units
    kappa: torch.Tensor  # (B, S, K)
    lo: torch.Tensor  # (B, S, K) sqrt(kappa beta/(kappa+1)), noise units
    noise: torch.Tensor  # (B, K) == 1 in noise units
    budgets: torch.Tensor  # (B, S) W
    weights: torch.Tensor  # (B, S, K)
    x_grid: torch.Tensor  # (B, S, K, D) standardized
    x_oth: torch.Tensor  # (B, S, K, D-2) standardized other-layout rows

    @property
    def dims(self) -> tuple[int, int, int, int]:
        b, s, k, m = self.g.shape
        return b, s, k, self.d0.shape[-1]

    def take(self, idx) -> "SceneBatch":
        return SceneBatch(
            **{
                name: getattr(self, name)[idx]
                for name in (
                    "g d0 chol r_ut beta kappa lo noise budgets weights "
                    "x_grid x_oth"
                ).split()
            }
        )


def assemble_batch(
    scns: list[Scenario], stats: FeatureStats, dtype=torch.float32
) -> SceneBatch:
    if not scns:
        raise DataFormatError("empty scenario list")
    shapes = {(s.num_sats, s.num_uts, s.m, s.n) for s in scns}
    if len(shapes) != 1:
        raise DataFormatError(f"mixed scenario shapes in one batch: {sorted(shapes)}")
    c = stats.noise_w
    cdtype = torch.complex64 if dtype == torch.float32 else torch.complex128

    def stack(fn, out_dtype):
        return torch.from_numpy(np.stack([fn(s) for s in scns])).to(out_dtype)

    beta = stack(lambda s: s.beta / c, dtype)
    kappa = stack(lambda s: s.kappa, dtype)
    return SceneBatch(
        g=stack(lambda s: s.g, cdtype),
        d0=stack(lambda s: s.d0, cdtype),
        chol=stack(lambda s: _chol_nlos(s.sigma_nlos), cdtype),
        r_ut=stack(lambda s: s.r_ut / c, cdtype),
        beta=beta,
        kappa=kappa,
        lo=torch.sqrt(kappa * beta / (kappa + 1.0)),
        noise=stack(lambda s: s.noise / c, dtype),
        budgets=stack(lambda s: s.budgets, dtype),
        weights=stack(lambda s: s.weights, dtype),
        x_grid=stack(lambda s: standardized_grid(s, stats), dtype),
        x_oth=stack(lambda s: standardized_other(s, stats), dtype),
    )
