"""Rebuild feasible precoders from a predicted (w, u, lambda, rho, b) tuple.

The closed-form precoder map is shared with the BCD solver, so a tuple
extracted from a converged solver state reproduces the solver's precoders.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ScenarioInstance
from .errors import ShapeMismatch
from .wmmse import (
    PrecodingSolution,
    WmmseState,
    precoders_from_tuple,
    rho_coefficients,
)


@dataclass
class PredictedTuple:
    """Per-link scalars/vectors that determine precoders in closed form."""

    w: np.ndarray  # (S, K) positive weights
    u: np.ndarray  # (S, K) complex receive scalars
    lam: np.ndarray  # (S,) nonnegative duals
    rho: np.ndarray  # (S, K) stream loads (complex allowed for predictions)
    b: np.ndarray  # (S, K, N) complex combiners

    def validate(self, scn: ScenarioInstance) -> None:
        s_n, k_n, n_n = scn.num_sats, scn.num_uts, scn.n
        if self.w.shape != (s_n, k_n) or self.u.shape != (s_n, k_n):
            raise ShapeMismatch("w/u must have shape (S, K)")
        if self.lam.shape != (s_n,):
            raise ShapeMismatch("lam must have shape (S,)")
        if self.rho.shape != (s_n, k_n):
            raise ShapeMismatch("rho must have shape (S, K)")
        if self.b.shape != (s_n, k_n, n_n):
            raise ShapeMismatch("b must have shape (S, K, N)")


def recover_precoders(scn: ScenarioInstance, tup: PredictedTuple) -> PrecodingSolution:
    """Closed-form precoders from the tuple, then per-satellite projection.

    Any satellite whose closed-form power exceeds its budget is scaled by
    sqrt(P_s / power_s); combiners are taken directly from the tuple.
    """
    tup.validate(scn)
    p = precoders_from_tuple(scn, tup.w, tup.u, tup.lam, tup.rho, tup.b)
    powers = np.sum(np.abs(p) ** 2, axis=(1, 2))
    for s in range(scn.num_sats):
        if powers[s] > scn.budgets[s]:
            p[s] *= np.sqrt(scn.budgets[s] / powers[s])
    return PrecodingSolution(p=p, b=np.array(tup.b, dtype=complex, copy=True))


def tuple_from_state(scn: ScenarioInstance, state: WmmseState) -> PredictedTuple:
    """Extract the closed-form tuple of a converged solver state."""
    rho = rho_coefficients(scn, state.w, state.u, state.sol.b)
    return PredictedTuple(
        w=state.w.copy(),
        u=state.u.copy(),
        lam=state.lam.copy(),
        rho=rho,
        b=state.sol.b.copy(),
    )
