"""Weighted-MMSE precoding under statistical CSI with per-satellite power limits.

The weighted sum-rate problem is handled through its MSE reformulation:
block-coordinate descent over receive scalars u, MSE weights w, receive
combiners b, per-satellite duals lambda, and precoders p, each step in
closed form.  The per-satellite power constraint decouples exactly once
(u, w, b) are fixed, so each dual is found by a scalar bisection on a
strictly decreasing power curve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import brentq

from .channel import ScenarioInstance, nlos_cholesky
from .errors import BracketFailure, DegenerateLink, SingularSystem

_POWER_SLACK = 1.0 + 1e-6  # feasibility slack accepted on sum power


@dataclass(frozen=True)
class WmmseOptions:
    tol: float = 1e-5  # relative objective change at which BCD stops
    max_outer: int = 100
    lambda_tol: float = 1e-8  # relative power mismatch accepted by the dual search
    n_mc: int = 1000  # Monte-Carlo draws for ergodic rates


@dataclass
class PrecodingSolution:
    """Transmit precoders P[s,k] in C^M and receive combiners B[s,k] in C^N."""

    p: np.ndarray  # (S, K, M) complex
    b: np.ndarray  # (S, K, N) complex

    def sat_powers(self) -> np.ndarray:
        return np.sum(np.abs(self.p) ** 2, axis=(1, 2))


@dataclass
class WmmseState:
    sol: PrecodingSolution
    u: np.ndarray  # (S, K) complex receive scalars
    w: np.ndarray  # (S, K) positive MSE weights
    lam: np.ndarray  # (S,) nonnegative duals
    objective_trace: list = field(default_factory=list)
    power_trace: list = field(default_factory=list)  # max_s power_s / budget_s
    n_iter: int = 0
    converged: bool = False


@dataclass(frozen=True)
class SignalMoments:
    """Second-order statistics of one link under given precoders/combiners."""

    xi: complex  # effective LoS signal amplitude
    zeta: float  # own-stream power through the receive correlation
    eta: float  # intra- plus inter-satellite interference plus noise


def _los_scale(scn: ScenarioInstance) -> np.ndarray:
    # sqrt(kappa*beta/(kappa+1)) per link
    return np.sqrt(scn.kappa * scn.beta / (scn.kappa + 1.0))


def interference_cov(scn: ScenarioInstance, p: np.ndarray, s: int, k: int):
    """Covariance of inter-satellite interference plus noise at link (s, k):
    sum_{t != s} sum_m |g_{t,k}^H p_{t,m}|^2 R_{t,k} + sigma_k^2 I."""
    n = scn.n
    cov = scn.noise[k] * np.eye(n, dtype=complex)
    for t in range(scn.num_sats):
        if t == s:
            continue
        gains = np.abs(scn.g[t, k].conj() @ p[t].T) ** 2
        cov = cov + gains.sum() * scn.r_ut[t, k]
    return cov


def signal_moments(
    scn: ScenarioInstance, p: np.ndarray, b: np.ndarray, s: int, k: int
) -> SignalMoments:
    """Per-link moments (xi, zeta, eta) of the MSE expansion."""
    g = scn.g[s, k]
    bk = b[s, k]
    quad = float(np.real(bk.conj() @ scn.r_ut[s, k] @ bk))
    own = np.abs(g.conj() @ p[s].T) ** 2  # |g^H p_{s,m}|^2 over m
    xi = (
        _los_scale(scn)[s, k]
        * (bk.conj() @ scn.d0[s, k])
        * (g.conj() @ p[s, k])
    )
    zeta = float(own[k] * quad)
    eta = float(
        (own.sum() - own[k]) * quad
        + np.real(bk.conj() @ interference_cov(scn, p, s, k) @ bk)
    )
    return SignalMoments(xi=complex(xi), zeta=zeta, eta=eta)


def mse(mom: SignalMoments, u: complex) -> float:
    """MSE e = |u|^2 (zeta + eta) - 2 Re(u xi) + 1 for a receive scalar u."""
    return float(
        abs(u) ** 2 * (mom.zeta + mom.eta) - 2.0 * np.real(u * mom.xi) + 1.0
    )


def update_u(mom: SignalMoments) -> complex:
    """MSE-optimal receive scalar u* = conj(xi) / (zeta + eta)."""
    denom = mom.zeta + mom.eta
    if denom <= 0.0:
        raise DegenerateLink("nonpositive signal power in u update")
    return complex(np.conj(mom.xi) / denom)


def update_w(e: float, a: float = 1.0) -> float:
    """Optimal MSE weight w* = a / e."""
    if e <= 0.0:
        raise DegenerateLink("nonpositive MSE in w update")
    return a / e


def _solve_hermitian(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a Hermitian positive-definite system, retrying once with
    diagonal jitter 1e-10*trace/dim; raise SingularSystem if still hopeless."""
    try:
        return cho_solve(cho_factor(mat, lower=True), rhs)
    except np.linalg.LinAlgError:
        dim = mat.shape[0]
        jitter = 1e-10 * np.trace(mat).real / dim
        fixed = mat + jitter * np.eye(dim)
        try:
            out = cho_solve(cho_factor(fixed, lower=True), rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("system not positive definite after jitter") from exc
        if np.linalg.cond(fixed) > 1e12:
            raise SingularSystem("condition number above 1e12 after jitter")
        return out


def update_b(
    scn: ScenarioInstance,
    p: np.ndarray,
    s: int,
    k: int,
    u: complex,
    w: float,
) -> np.ndarray:
    """Closed-form combiner: the w|u|^2-weighted MMSE receive vector.

    b* = sqrt(kappa*beta/(kappa+1)) * w * u *
         (w|u|^2 [sum_t sum_m |p_{t,m}^H g_{t,k}|^2 R_{t,k} + sigma_k^2 I])^{-1}
         d0 (g^H p); the scalar w|u|^2 is factored out of the inverse.
    """
    if abs(u) == 0.0:
        raise DegenerateLink("zero receive scalar in b update")
    n = scn.n
    mat = scn.noise[k] * np.eye(n, dtype=complex)
    for t in range(scn.num_sats):
        gains = np.abs(scn.g[t, k].conj() @ p[t].T) ** 2
        mat = mat + gains.sum() * scn.r_ut[t, k]
    rhs = scn.d0[s, k] * (scn.g[s, k].conj() @ p[s, k])
    return _los_scale(scn)[s, k] * _solve_hermitian(mat, rhs) / np.conj(u)


def rho_coefficients(
    scn: ScenarioInstance, w: np.ndarray, u: np.ndarray, b: np.ndarray
) -> np.ndarray:
    """Stream loads rho[s,m] = sum_t w_{t,m} |u_{t,m}|^2 b_{t,m}^H R^{(s)}_{t->... }.

    Concretely: rho[s, m] = sum_t w[t,m]|u[t,m]|^2 * b[t,m]^H r_ut[s,m] b[t,m],
    the only aggregate of (w, u, b) the precoder update needs.
    """
    quad = np.einsum("tma,smab,tmb->tsm", b.conj(), scn.r_ut, b).real
    return np.einsum("tm,tsm->sm", w * np.abs(u) ** 2, quad)


def precoders_from_tuple(
    scn: ScenarioInstance,
    w: np.ndarray,
    u: np.ndarray,
    lam: np.ndarray,
    rho: np.ndarray,
    b: np.ndarray,
) -> np.ndarray:
    """Closed-form precoders for given (w, u, lambda, rho, b):

    p_{s,k} = w u* (sum_m rho_{s,m} g_{s,m} g_{s,m}^H + lambda_s I)^{-1}
              g_{s,k} * dbar_{s,k}^H b_{s,k},  dbar = sqrt(kappa*beta/(kappa+1)) d0.

    Shared by the BCD solver and tuple recovery so a converged state is
    reproduced bit-for-bit.  A complex rho with any nonzero imaginary part
    (as a free network prediction may produce) switches the per-satellite
    system to a general LU solve.
    """
    s_n, k_n, m_n = scn.num_sats, scn.num_uts, scn.m
    lo = _los_scale(scn)
    p = np.empty((s_n, k_n, m_n), dtype=complex)
    rho = np.asarray(rho)
    hermitian = not (np.iscomplexobj(rho) and np.any(rho.imag != 0.0))
    for s in range(s_n):
        gs = scn.g[s]  # (K, M)
        coeff = rho[s].real if hermitian else rho[s]
        mat = np.einsum("m,ma,mb->ab", coeff, gs, gs.conj())
        mat[np.diag_indices(m_n)] += lam[s]
        if hermitian:
            sols = _solve_hermitian(mat, gs.T)  # (M, K)
        else:
            try:
                sols = np.linalg.solve(mat, gs.T)
            except np.linalg.LinAlgError as exc:
                raise SingularSystem("precoder system is singular") from exc
        scal = (
            lo[s]
            * w[s]
            * np.conj(u[s])
            * np.einsum("ka,ka->k", scn.d0[s].conj(), b[s])
        )
        p[s] = (sols * scal).T
    return p


def update_p(
    scn: ScenarioInstance,
    w: np.ndarray,
    u: np.ndarray,
    b: np.ndarray,
    s: int,
    k: int,
    lam_s: float,
) -> np.ndarray:
    """Single-link precoder from the closed form (see precoders_from_tuple)."""
    rho = rho_coefficients(scn, w, u, b)
    lam = np.zeros(scn.num_sats)
    lam[s] = lam_s
    return precoders_from_tuple(scn, w, u, lam, rho, b)[s, k]


def _sat_power_fn(scn, s, rho_s, rhs_scale):
    """Power-vs-lambda curve of satellite s's closed-form precoders."""
    gs = scn.g[s]
    m_n = scn.m
    base = np.einsum("m,ma,mb->ab", rho_s, gs, gs.conj())
    eye = np.eye(m_n)

    def power(lam: float) -> float:
        sols = _solve_hermitian(base + lam * eye, gs.T)  # (M, K)
        return float(np.sum(np.abs(sols * rhs_scale) ** 2))

    return power


def solve_lambda(
    scn: ScenarioInstance,
    w: np.ndarray,
    u: np.ndarray,
    b: np.ndarray,
    s: int,
    tol: float = 1e-8,
) -> float:
    """Dual variable of satellite s's power constraint for fixed (u, w, b).

    Returns 0 when the unconstrained precoders already fit the budget,
    otherwise the unique lambda > 0 placing the power on the budget within
    ``tol`` relative (the power is strictly decreasing in lambda).
    """
    rho = rho_coefficients(scn, w, u, b)
    lo = _los_scale(scn)
    rhs_scale = (
        lo[s] * w[s] * np.conj(u[s]) * np.einsum("ka,ka->k", scn.d0[s].conj(), b[s])
    )
    power = _sat_power_fn(scn, s, rho[s], rhs_scale)
    budget = float(scn.budgets[s])
    if power(0.0) <= budget:
        return 0.0

    scale = max(float(rho[s].sum()) / scn.m, 1e-30)
    hi = scale
    for _ in range(200):
        if power(hi) <= budget:
            break
        hi *= 2.0
        if hi > 1e12 * scale:
            raise BracketFailure("could not bracket the power constraint")
    else:
        raise BracketFailure("could not bracket the power constraint")

    lam = brentq(lambda x: power(x) - budget, 0.0, hi, xtol=1e-30, rtol=8.9e-16)
    # Land strictly on the feasible side: the root is only accurate to
    # rounding, and a power a hair over budget would force a downstream
    # rescale.  Power decreases in lambda, so tiny upward nudges suffice.
    for _ in range(128):
        if power(lam) <= budget:
            return float(lam)
        lam = math.nextafter(lam, math.inf) * (1.0 + 1e-12)
    if power(lam) <= budget * (1.0 + tol):
        return float(lam)
    raise BracketFailure("power constraint could not be met from the bisection root")


def _moments_all(scn: ScenarioInstance, p: np.ndarray, b: np.ndarray):
    """Vectorized (xi, zeta, eta) for every link; mirrors signal_moments."""
    cross = np.einsum("tka,tma->tkm", scn.g.conj(), p)  # g_{t,k}^H p_{t,m}
    a2 = np.abs(cross) ** 2
    tot = a2.sum(axis=2)  # (S, K): sum_m |g^H p|^2
    own = np.einsum("skk->sk", a2)
    quad = np.einsum("ska,tkab,skb->stk", b.conj(), scn.r_ut, b).real
    own_quad = np.einsum("ssk->sk", quad)
    inter = np.einsum("tk,stk->sk", tot, quad) - tot * own_quad
    bb = np.sum(np.abs(b) ** 2, axis=2)
    lo = _los_scale(scn)
    bd0 = np.einsum("ska,ska->sk", b.conj(), scn.d0)
    xi = lo * bd0 * np.einsum("skk->sk", cross)
    zeta = own * own_quad
    eta = (tot - own) * own_quad + inter + scn.noise[None, :] * bb
    return xi, zeta, eta


def objective_value(
    scn: ScenarioInstance, p: np.ndarray, b: np.ndarray, u: np.ndarray, w: np.ndarray
) -> float:
    """BCD objective sum_{s,k} (w e - a ln w) at the given block values."""
    xi, zeta, eta = _moments_all(scn, p, b)
    e = np.abs(u) ** 2 * (zeta + eta) - 2.0 * np.real(u * xi) + 1.0
    return float(np.sum(w * e - scn.weights * np.log(w)))


def mrt_precoder(scn: ScenarioInstance) -> np.ndarray:
    """Matched-filter precoders at full budget, equal per-terminal split."""
    amp = np.sqrt(scn.budgets / scn.num_uts)
    return amp[:, None, None] * scn.g


def mmse_precoder(scn: ScenarioInstance) -> np.ndarray:
    """Per-satellite regularized channel inversion over {g_{s,k}}_k.

    Loading is K * mean_k(sigma_k^2 / beta_{s,k}) / P_s (noise referred to the
    unit-norm steering scale); columns are jointly scaled onto the budget.
    """
    s_n, k_n, m_n = scn.num_sats, scn.num_uts, scn.m
    p = np.empty((s_n, k_n, m_n), dtype=complex)
    for s in range(s_n):
        gs = scn.g[s]
        reg = k_n * float(np.mean(scn.noise / scn.beta[s])) / float(scn.budgets[s])
        gram = gs.T @ gs.conj() + reg * np.eye(m_n)
        cols = _solve_hermitian(gram, gs.T)  # (M, K)
        total = float(np.sum(np.abs(cols) ** 2))
        p[s] = (cols * math.sqrt(scn.budgets[s] / total)).T
    return p


def baseline_solution(scn: ScenarioInstance, kind: str) -> PrecodingSolution:
    """MRT/MMSE precoders with LoS-matched combiners b = d0."""
    if kind == "mrt":
        p = mrt_precoder(scn)
    elif kind == "mmse":
        p = mmse_precoder(scn)
    else:
        raise ValueError(f"unknown baseline {kind!r}")
    return PrecodingSolution(p=p, b=scn.d0.copy())


def wmmse_solve(scn: ScenarioInstance, opts: WmmseOptions | None = None) -> WmmseState:
    """Block-coordinate descent on the MSE reformulation.

    Starts from full-budget MRT precoders and LoS combiners, then repeats
    u,w -> b -> lambda -> p until the relative objective change drops below
    ``opts.tol`` (or ``max_outer`` iterations).  Ordering b before (lambda, p)
    keeps the stored precoders the exact closed-form image of the stored
    (u, w, lambda, b), so a converged state can be reproduced from its tuple.
    """
    opts = opts or WmmseOptions()
    s_n, k_n = scn.num_sats, scn.num_uts
    p = mrt_precoder(scn)
    b = scn.d0.copy()
    u = np.zeros((s_n, k_n), dtype=complex)
    w = np.ones((s_n, k_n))
    lam = np.zeros(s_n)
    state = WmmseState(sol=PrecodingSolution(p=p, b=b), u=u, w=w, lam=lam)

    lo = _los_scale(scn)
    prev = None
    for it in range(1, opts.max_outer + 1):
        xi, zeta, eta = _moments_all(scn, p, b)
        denom = zeta + eta
        if np.any(denom <= 0.0):
            raise DegenerateLink("nonpositive signal power in u update")
        u = np.conj(xi) / denom
        if np.any(np.abs(u) == 0.0):
            raise DegenerateLink("zero receive scalar")
        e_opt = 1.0 - np.abs(xi) ** 2 / denom
        if np.any(e_opt <= 0.0):
            raise DegenerateLink("nonpositive MSE in w update")
        w = scn.weights / e_opt

        # Combiners: one Hermitian factorization per terminal, S right-hand sides.
        cross = np.einsum("tka,tma->tkm", scn.g.conj(), p)
        tot = np.sum(np.abs(cross) ** 2, axis=2)  # (S, K)
        own_gain = np.einsum("skk->sk", cross)
        b = np.empty_like(b)
        eye_n = np.eye(scn.n, dtype=complex)
        for k in range(k_n):
            mat = np.einsum("t,tab->ab", tot[:, k], scn.r_ut[:, k])
            mat = mat + scn.noise[k] * eye_n
            sols = _solve_hermitian(mat, scn.d0[:, k].T)  # (N, S)
            b[:, k] = (sols * (lo[:, k] * own_gain[:, k] / np.conj(u[:, k]))).T

        rho = rho_coefficients(scn, w, u, b)
        for s in range(s_n):
            lam[s] = solve_lambda(scn, w, u, b, s, tol=opts.lambda_tol)
        p = precoders_from_tuple(scn, w, u, lam, rho, b)

        powers = np.sum(np.abs(p) ** 2, axis=(1, 2))
        state.power_trace.append(float(np.max(powers / scn.budgets)))
        eps = objective_value(scn, p, b, u, w)
        state.objective_trace.append(eps)
        state.n_iter = it
        if prev is not None and abs(eps - prev) <= opts.tol * abs(prev):
            state.converged = True
            break
        prev = eps

    state.sol = PrecodingSolution(p=p, b=b)
    state.u, state.w, state.lam = u, w, lam
    return state


def sep_wmmse(scn: ScenarioInstance, opts: WmmseOptions | None = None) -> PrecodingSolution:
    """Per-satellite WMMSE: each satellite solves its own single-satellite
    subproblem (cross-satellite interference terms zeroed), combiners included."""
    from .channel import subscenario

    s_n = scn.num_sats
    p = np.empty((s_n, scn.num_uts, scn.m), dtype=complex)
    b = np.empty((s_n, scn.num_uts, scn.n), dtype=complex)
    for s in range(s_n):
        sub = subscenario(scn, [s])
        st = wmmse_solve(sub, opts)
        p[s] = st.sol.p[0]
        b[s] = st.sol.b[0]
    return PrecodingSolution(p=p, b=b)


def ergodic_rate(
    scn: ScenarioInstance,
    sol: PrecodingSolution,
    s: int,
    k: int,
    n_mc: int = 1000,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte-Carlo ergodic rate of link (s, k) in bit/s/Hz.

    Averages log2(1 + SINR) over scattering realizations of the own receive
    vector d; interference from other satellites enters through its expected
    power b^H R_{s,k} b.
    """
    rng = np.random.default_rng(rng)
    g = scn.g[s, k]
    bk = sol.b[s, k]
    # Realizations of d = sqrt(kappa*beta/(kappa+1)) d0 + sqrt(beta/(kappa+1)) L z.
    n = scn.n
    chol = nlos_cholesky(scn.sigma_nlos[s, k])
    z = (rng.standard_normal((n_mc, n)) + 1j * rng.standard_normal((n_mc, n)))
    z /= math.sqrt(2.0)
    d = (
        math.sqrt(scn.kappa[s, k] * scn.beta[s, k] / (scn.kappa[s, k] + 1.0))
        * scn.d0[s, k]
        + math.sqrt(scn.beta[s, k] / (scn.kappa[s, k] + 1.0)) * (z @ chol.T)
    )
    q = np.abs(d @ bk.conj()) ** 2  # |b^H d|^2 per draw
    own = np.abs(g.conj() @ sol.p[s].T) ** 2
    cross_noise = float(
        np.real(bk.conj() @ interference_cov(scn, sol.p, s, k) @ bk)
    )
    signal = own[k] * q
    intra = (own.sum() - own[k]) * q
    return float(np.mean(np.log2(1.0 + signal / (intra + cross_noise))))


def weighted_sum_rate(
    scn: ScenarioInstance,
    sol: PrecodingSolution,
    n_mc: int = 1000,
    rng: np.random.Generator | None = None,
) -> float:
    """Weighted ergodic sum rate sum_{s,k} a_{s,k} R_{s,k}."""
    rng = np.random.default_rng(rng)
    total = 0.0
    for s in range(scn.num_sats):
        for k in range(scn.num_uts):
            total += scn.weights[s, k] * ergodic_rate(scn, sol, s, k, n_mc, rng)
    return total
