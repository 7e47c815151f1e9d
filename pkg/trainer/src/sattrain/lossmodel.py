"""Differentiable precoder recovery and Monte-Carlo weighted sum rate.

This is the torch twin of the inference-side closed-form recovery and the
sampled ergodic-rate evaluator, kept term-for-term identical so that a
container exported by the trainer scores the same (to float tolerance)
under the reference evaluator as under this loss.
"""
from __future__ import annotations

import math

import numpy as np
import torch

from .features import SceneBatch
from .netcore import TuplePred, other_stack_index


def recover_precoders(batch: SceneBatch, pred: TuplePred) -> torch.Tensor:
    """Closed-form per-satellite precoders from the predicted tuple.

    p[s,k] = w[s,k] conj(u[s,k]) lo[s,k] (d0[s,k]^H b[s,k])
             * (sum_j rho[s,j] g[s,j] g[s,j]^H + lam[s] I)^{-1} g[s,k]

    followed by scaling any satellite that exceeds its power budget back
    onto the budget sphere.
    """
    g = batch.g
    m = g.shape[-1]
    eye = torch.eye(m, dtype=g.dtype, device=g.device)
    quad = torch.einsum("bsk,bska,bskc->bsac", pred.rho, g, g.conj())
    mat = quad + pred.lam.to(g.dtype)[..., None, None] * eye
    # columns of sols are (Q_s + lam_s I)^{-1} g[s,k]
    sols = torch.linalg.solve(mat, g.transpose(-2, -1))
    scal = (
        pred.w.to(g.dtype)
        * pred.u.conj()
        * batch.lo.to(g.dtype)
        * torch.einsum("bskn,bskn->bsk", batch.d0.conj(), pred.bvec)
    )
    p = (sols * scal[..., None, :]).transpose(-2, -1)

    power = (p.real.square() + p.imag.square()).sum((-2, -1))
    safe = power.clamp_min(1e-30)
    scale = torch.where(
        power > batch.budgets,
        torch.sqrt(batch.budgets / safe),
        torch.ones_like(power),
    )
    return p * scale.to(p.dtype)[..., None, None]


def draw_fading(shape: tuple[int, ...], gen: torch.Generator, dtype) -> torch.Tensor:
    """Standard circular complex Gaussian draws for the rate estimator."""
    re = torch.randn(shape, generator=gen, dtype=dtype)
    im = torch.randn(shape, generator=gen, dtype=dtype)
    return torch.complex(re, im) / math.sqrt(2.0)


def reference_fading(
    rng: np.random.Generator, sats: int, uts: int, n_mc: int, n_rx: int
) -> torch.Tensor:
    """Fading draws in the reference evaluator's exact stream order.

    The reference draws, per link in (satellite, terminal) loop order, the
    full real block before the imaginary block from one shared generator;
    replaying that order makes a float64 rate comparison meaningful at
    sub-tolerance level rather than only in distribution.
    """
    links = []
    for _ in range(sats):
        row = []
        for _ in range(uts):
            z = rng.standard_normal((n_mc, n_rx)) + 1j * rng.standard_normal(
                (n_mc, n_rx)
            )
            row.append(z / math.sqrt(2.0))
        links.append(row)
    return torch.from_numpy(np.array(links)[None, ...])


def sampled_rates(
    batch: SceneBatch, p: torch.Tensor, bvec: torch.Tensor, z: torch.Tensor
) -> torch.Tensor:
    """Per-link ergodic rates (B, S, K) averaged over the fading draws z.

    z has shape (B, S, K, T, N) (or broadcastable batch dim) and supplies
    the scattered component; the receive filter bvec is applied to the
    sampled downlink channel while interference uses the channel statistics
    exactly as the reference evaluator does.
    """
    g = batch.g
    scatter = torch.sqrt(batch.beta / (batch.kappa + 1.0)).to(g.dtype)
    d = batch.lo.to(g.dtype)[..., None, None] * batch.d0[..., None, :] + scatter[
        ..., None, None
    ] * torch.einsum("bsktn,bskan->bskta", z.to(g.dtype), batch.chol)

    inner = torch.einsum("bsktn,bskn->bskt", d, bvec.conj())
    q = inner.real.square() + inner.imag.square()  # (B, S, K, T)

    amp = torch.einsum("btka,btma->btkm", g.conj(), p)
    a2 = amp.real.square() + amp.imag.square()  # (B, T_sat, K, M_links)
    own = torch.diagonal(a2, dim1=-2, dim2=-1)  # (B, S, K)
    tot = a2.sum(-1)  # (B, S, K)

    signal = own[..., None] * q
    intra = (tot - own)[..., None] * q

    quad = torch.einsum(
        "bski,btkij,bskj->bstk", bvec.conj(), batch.r_ut, bvec
    ).real  # (B, s_filter, t_source, K)
    cross = (
        torch.einsum("btk,bstk->bsk", tot, quad)
        - tot * torch.diagonal(quad, dim1=1, dim2=2).transpose(-2, -1)
        + batch.noise[:, None, :]
        * (bvec.real.square() + bvec.imag.square()).sum(-1)
    )

    sinr = signal / (intra + cross[..., None])
    return torch.log2(1.0 + sinr).mean(-1)


def weighted_sum_rate(
    batch: SceneBatch, p: torch.Tensor, bvec: torch.Tensor, z: torch.Tensor
) -> torch.Tensor:
    rates = sampled_rates(batch, p, bvec, z)
    return (batch.weights * rates).sum((-2, -1))


def batch_loss(batch: SceneBatch, pred: TuplePred, z: torch.Tensor) -> torch.Tensor:
    """Negated mean weighted sum rate over the batch."""
    p = recover_precoders(batch, pred)
    return -weighted_sum_rate(batch, p, pred.bvec, z).mean()


def forward_tuple(model, batch: SceneBatch, train: bool) -> TuplePred:
    """Run either architecture on a batch's standardized features."""
    from .netcore import CenNet

    if isinstance(model, CenNet):
        return model(batch.x_grid, train=train)
    idx = other_stack_index(batch.x_oth.shape[1])
    return model(batch.x_grid, batch.x_oth[:, idx], train=train)
