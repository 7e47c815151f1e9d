"""Scenario text files: the interchange format shared with the solver package.

The trainer deliberately carries its own reader/writer so that the two
packages talk *only* through files on disk.  Angles are stored in degrees,
budgets in dBW, everything else in natural units via ``repr`` (which
round-trips IEEE doubles exactly).  In-memory values are kept canonical --
already passed once through the storage unit and back -- so export can find
a degree/dBW figure whose import reproduces the double bit-for-bit (a short
``math.nextafter`` walk around the naive conversion).

The import map is fixed: radians = degrees * (pi/180), watts = 10**(dBW/10),
and the per-link steering/correlation arrays are rebuilt from the stored
scalars, never stored themselves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

FORMAT_LINE = "satmimo-scenario 1"
_D2R = math.pi / 180.0
_R2D = 180.0 / math.pi


def canonical_rad(x: float) -> float:
    """Angle projected onto the set representable through degree storage."""
    return (x * _R2D) * _D2R


def canonical_watt(p: float) -> float:
    """Power projected onto the set representable through dBW storage."""
    return 10.0 ** ((10.0 * math.log10(p)) / 10.0)


def _exact_preimage(value: float, forward, start: float, what: str) -> float:
    if forward(start) == value:
        return start
    lo = hi = start
    for _ in range(256):
        lo = math.nextafter(lo, -math.inf)
        if forward(lo) == value:
            return lo
        hi = math.nextafter(hi, math.inf)
        if forward(hi) == value:
            return hi
    raise DataFormatError(f"{what} = {value!r} has no exact serialized preimage")


def deg_from_rad(x: float) -> float:
    return _exact_preimage(x, lambda d: d * _D2R, x * _R2D, "angle (rad)")


def dbw_from_watt(p: float) -> float:
    if not (p > 0.0) or not math.isfinite(p):
        raise DataFormatError(f"power budget must be positive, got {p!r}")
    return _exact_preimage(
        p, lambda v: 10.0 ** (v / 10.0), 10.0 * math.log10(p), "power (W)"
    )


# ---------------------------------------------------------------------------
# array responses (same construction as the solver side)


@dataclass(frozen=True)
class GridConfig:
    """Transmit (m_x x m_y) and receive (n_x x n_y) planar array layout."""

    m_x: int = 4
    m_y: int = 4
    n_x: int = 2
    n_y: int = 2
    spacing_wl: float = 0.5

    @property
    def m(self) -> int:
        return self.m_x * self.m_y

    @property
    def n(self) -> int:
        return self.n_x * self.n_y


def ula_response(n: int, x: float, spacing_wl: float = 0.5) -> np.ndarray:
    phase = -2j * np.pi * spacing_wl * x * np.arange(n)
    return np.exp(phase) / math.sqrt(n)


def tx_response(grid: GridConfig, phi: float, theta: float) -> np.ndarray:
    return np.kron(
        ula_response(grid.m_x, math.sin(theta) * math.cos(phi), grid.spacing_wl),
        ula_response(grid.m_y, math.cos(theta), grid.spacing_wl),
    )


def rx_response(grid: GridConfig, phi: float, theta: float) -> np.ndarray:
    return np.kron(
        ula_response(grid.n_x, math.sin(theta) * math.cos(phi), grid.spacing_wl),
        ula_response(grid.n_y, math.cos(theta), grid.spacing_wl),
    )


def rician_corr(beta: float, kappa: float, d0: np.ndarray, sigma: np.ndarray):
    """Receive correlation kappa*beta/(kappa+1) d0 d0^H + beta/(kappa+1) Sigma."""
    los = (kappa * beta / (kappa + 1.0)) * np.outer(d0, d0.conj())
    return los + (beta / (kappa + 1.0)) * sigma


def exp_corr(n: int, rho: float, alpha: float) -> np.ndarray:
    """Unit-trace exponential correlation (rho e^{j alpha})^{i-j}."""
    delta = np.arange(n)[:, None] - np.arange(n)[None, :]
    mat = (rho ** np.abs(delta)) * np.exp(1j * alpha * delta)
    return mat / np.trace(mat).real


@dataclass
class Scenario:
    """One statistical drop: S satellites serving K multi-antenna terminals."""

    grid: GridConfig
    phi_sat: np.ndarray  # (S, K) rad
    theta_sat: np.ndarray
    phi_ut: np.ndarray
    theta_ut: np.ndarray
    beta: np.ndarray  # (S, K) average channel power
    kappa: np.ndarray  # (S, K) Rician factor, linear
    sigma_nlos: np.ndarray  # (S, K, N, N) unit-trace Hermitian
    g: np.ndarray  # (S, K, M)
    d0: np.ndarray  # (S, K, N)
    r_ut: np.ndarray  # (S, K, N, N)
    noise: np.ndarray  # (K,) W
    budgets: np.ndarray  # (S,) W
    weights: np.ndarray  # (S, K)
    power_dbw: float | None = field(default=None, compare=False)  # dataset tag

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


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_vec(vals) -> str:
    return " ".join(_fmt(v) for v in np.asarray(vals, dtype=float).reshape(-1))


def dumps_scenario(scn: Scenario) -> str:
    grid = scn.grid
    s_n, k_n = scn.num_sats, scn.num_uts
    lines = [
        FORMAT_LINE,
        f"sats {s_n}",
        f"uts {k_n}",
        f"tx_m {scn.m}",
        f"rx_n {scn.n}",
        f"tx_grid {grid.m_x} {grid.m_y}",
        f"rx_grid {grid.n_x} {grid.n_y}",
        f"spacing_wl {_fmt(grid.spacing_wl)}",
        "noise_w " + _fmt_vec(scn.noise),
        "budgets_dbw " + " ".join(_fmt(dbw_from_watt(p)) for p in scn.budgets),
    ]
    for s in range(s_n):
        for k in range(k_n):
            ang = (
                scn.phi_sat[s, k],
                scn.theta_sat[s, k],
                scn.phi_ut[s, k],
                scn.theta_ut[s, k],
            )
            lines.append(f"link {s} {k}")
            lines.append(
                "angles_deg " + " ".join(_fmt(deg_from_rad(float(a))) for a in ang)
            )
            lines.append("beta " + _fmt(scn.beta[s, k]))
            lines.append("kappa " + _fmt(scn.kappa[s, k]))
            lines.append("weight " + _fmt(scn.weights[s, k]))
            lines.append("sigma_re " + _fmt_vec(scn.sigma_nlos[s, k].real))
            lines.append("sigma_im " + _fmt_vec(scn.sigma_nlos[s, k].imag))
    return "\n".join(lines) + "\n"


def write_scenario(scn: Scenario, path) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write(dumps_scenario(scn))


# ---------------------------------------------------------------------------
# parsing


class _Cursor:
    def __init__(self, text: str):
        self.lines = [
            ln.strip()
            for ln in text.splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")
        ]
        self.pos = 0

    def done(self) -> bool:
        return self.pos >= len(self.lines)

    def peek_key(self) -> str | None:
        return None if self.done() else self.lines[self.pos].split()[0]

    def take(self, key: str) -> list[str]:
        if self.done():
            raise DataFormatError(f"unexpected end of file, expected {key!r}")
        parts = self.lines[self.pos].split()
        if parts[0] != key:
            raise DataFormatError(
                f"line {self.pos + 1}: expected {key!r}, found {parts[0]!r}"
            )
        self.pos += 1
        return parts[1:]

    def floats(self, key: str, count: int) -> np.ndarray:
        vals = self.take(key)
        if len(vals) != count:
            raise DataFormatError(f"{key!r} needs {count} values, got {len(vals)}")
        try:
            out = np.array([float(v) for v in vals])
        except ValueError as exc:
            raise DataFormatError(f"{key!r}: {exc}") from None
        if not np.all(np.isfinite(out)):
            raise DataFormatError(f"{key!r}: non-finite value")
        return out

    def ints(self, key: str, count: int) -> list[int]:
        vals = self.take(key)
        if len(vals) != count:
            raise DataFormatError(f"{key!r} needs {count} values, got {len(vals)}")
        try:
            return [int(v) for v in vals]
        except ValueError as exc:
            raise DataFormatError(f"{key!r}: {exc}") from None


def parse_scenario(text: str) -> Scenario:
    """Parse the text format, rebuilding the per-link arrays from scalars.

    The import map and validation rules are the shared file contract:
    radians = degrees * pi/180 with |deg| <= 180, polar angles in [0, pi],
    beta/kappa positive, weights nonnegative, scattering matrices Hermitian
    (1e-8) with unit trace (1e-6), watts = 10**(dBW/10).  A trailing
    geometry block (satellite/terminal positions) is tolerated and ignored
    -- the statistics above fully determine the scenario.
    """
    cur = _Cursor(text)
    header = cur.lines[0] if cur.lines else ""
    if header != FORMAT_LINE:
        raise DataFormatError(f"unsupported format line {header!r}")
    cur.pos = 1

    (s_n,) = cur.ints("sats", 1)
    (k_n,) = cur.ints("uts", 1)
    (m_n,) = cur.ints("tx_m", 1)
    (n_n,) = cur.ints("rx_n", 1)
    m_x, m_y = cur.ints("tx_grid", 2)
    n_x, n_y = cur.ints("rx_grid", 2)
    (spacing,) = cur.floats("spacing_wl", 1)
    if s_n < 1 or k_n < 1:
        raise DataFormatError("sats and uts must be at least 1")
    if m_x * m_y != m_n or n_x * n_y != n_n:
        raise DataFormatError("array grid does not multiply to the element count")
    if spacing <= 0:
        raise DataFormatError("spacing_wl must be positive")
    grid = GridConfig(m_x=m_x, m_y=m_y, n_x=n_x, n_y=n_y, spacing_wl=float(spacing))

    noise = cur.floats("noise_w", k_n)
    if np.any(noise <= 0.0):
        raise DataFormatError("noise powers must be positive")
    budgets_dbw = cur.floats("budgets_dbw", s_n)
    budgets = 10.0 ** (budgets_dbw / 10.0)

    shape = (s_n, k_n)
    phi_sat = np.empty(shape)
    theta_sat = np.empty(shape)
    phi_ut = np.empty(shape)
    theta_ut = np.empty(shape)
    beta = np.empty(shape)
    kappa = np.empty(shape)
    weights = np.empty(shape)
    sigma = np.empty(shape + (n_n, n_n), dtype=complex)
    seen = set()

    for _ in range(s_n * k_n):
        s, k = cur.ints("link", 2)
        if not (0 <= s < s_n and 0 <= k < k_n):
            raise DataFormatError(f"link ({s}, {k}) outside the {s_n}x{k_n} grid")
        if (s, k) in seen:
            raise DataFormatError(f"duplicate link ({s}, {k})")
        seen.add((s, k))

        ang = cur.floats("angles_deg", 4)
        if np.any(np.abs(ang) > 180.0 + 1e-9):
            raise DataFormatError(f"link ({s}, {k}): angle outside +-180 deg")
        rad = [float(a) * _D2R for a in ang]
        if not (0.0 <= rad[1] <= math.pi) or not (0.0 <= rad[3] <= math.pi):
            raise DataFormatError(f"link ({s}, {k}): polar angle outside [0, pi]")
        phi_sat[s, k], theta_sat[s, k] = rad[0], rad[1]
        phi_ut[s, k], theta_ut[s, k] = rad[2], rad[3]

        (bv,) = cur.floats("beta", 1)
        (kv,) = cur.floats("kappa", 1)
        (wv,) = cur.floats("weight", 1)
        if bv <= 0.0 or kv <= 0.0:
            raise DataFormatError(f"link ({s}, {k}): beta and kappa must be positive")
        if wv < 0.0:
            raise DataFormatError(f"link ({s}, {k}): negative rate weight")
        beta[s, k], kappa[s, k], weights[s, k] = bv, kv, wv

        sig_re = cur.floats("sigma_re", n_n * n_n).reshape(n_n, n_n)
        sig_im = cur.floats("sigma_im", n_n * n_n).reshape(n_n, n_n)
        sig = sig_re + 1j * sig_im
        if np.max(np.abs(sig - sig.conj().T)) > 1e-8:
            raise DataFormatError(f"link ({s}, {k}): scattering matrix not Hermitian")
        if abs(np.trace(sig).real - 1.0) > 1e-6:
            raise DataFormatError(f"link ({s}, {k}): scattering trace must be 1")
        sigma[s, k] = sig

    # A geometry block (from the solver package's generator) may follow; the
    # trainer has no use for raw positions, so it is validated just enough
    # to consume it.
    if cur.peek_key() == "geometry":
        cur.take("geometry")
        cur.ints("sat_indices", s_n)
        for _ in range(s_n):
            cur.floats("sat_pos", 3)
        for _ in range(s_n):
            cur.floats("sat_att", 9)
        for _ in range(k_n):
            cur.floats("ut_pos", 3)
        cur.floats("center", 3)

    if not cur.done():
        raise DataFormatError(f"trailing content at line {cur.pos + 1}")

    g = np.empty((s_n, k_n, m_n), dtype=complex)
    d0 = np.empty((s_n, k_n, n_n), dtype=complex)
    r_ut = np.empty((s_n, k_n, n_n, n_n), dtype=complex)
    for s in range(s_n):
        for k in range(k_n):
            g[s, k] = tx_response(grid, phi_sat[s, k], theta_sat[s, k])
            d0[s, k] = rx_response(grid, phi_ut[s, k], theta_ut[s, k])
            r_ut[s, k] = rician_corr(beta[s, k], kappa[s, k], d0[s, k], sigma[s, k])

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
        weights=weights,
    )


def read_scenario(path) -> Scenario:
    with open(str(path), encoding="utf-8") as fh:
        return parse_scenario(fh.read())
