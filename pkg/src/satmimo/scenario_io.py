"""Plain-text scenario files with bit-exact round-trip.

Angles are stored in degrees and power budgets in dBW, yet import must
reproduce the in-memory radians/watts bit-for-bit.  Two mechanisms make
that possible:

* every angle/budget entering a ScenarioInstance is *canonicalized* at
  synthesis time (``canonical_rad`` / ``canonical_watt``), i.e. passed once
  through the storage unit and back, so each stored value lies in the image
  of the import map;
* on export, the written degree/dBW figure is searched within a few ulps of
  the naive conversion until the import map reproduces the in-memory value
  exactly (``math.nextafter`` walk), which always terminates for
  canonicalized inputs.

Everything else (beta, kappa, weights, noise, scattering matrices,
geometry) is stored in natural units via ``repr``, which round-trips IEEE
doubles exactly.
"""
from __future__ import annotations

import math

import numpy as np

from . import geometry as geo
from .channel import ArrayConfig, ScenarioInstance, rician_r_ut, rx_steering, tx_steering
from .errors import ScenarioFormatError

_FORMAT_LINE = "satmimo-scenario 1"
_D2R = math.pi / 180.0
_R2D = 180.0 / math.pi


def canonical_rad(x: float) -> float:
    """Project an angle onto the set representable through degree storage."""
    return (x * _R2D) * _D2R


def canonical_watt(p: float) -> float:
    """Project a power onto the set representable through dBW storage."""
    return 10.0 ** ((10.0 * math.log10(p)) / 10.0)


def _exact_preimage(value: float, forward, start: float, what: str) -> float:
    """Find t with forward(t) == value bit-exactly, walking ulps from start."""
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
    raise ScenarioFormatError(
        f"{what} = {value!r} has no exact serialized preimage; "
        "was it canonicalized at synthesis time?"
    )


def deg_from_rad(x: float) -> float:
    """Degrees d with d * (pi/180) == x exactly."""
    return _exact_preimage(x, lambda d: d * _D2R, x * _R2D, "angle (rad)")


def dbw_from_watt(p: float) -> float:
    """dBW value v with 10**(v/10) == p exactly."""
    if not (p > 0.0) or not math.isfinite(p):
        raise ScenarioFormatError(f"power budget must be positive, got {p!r}")
    return _exact_preimage(
        p, lambda v: 10.0 ** (v / 10.0), 10.0 * math.log10(p), "power (W)"
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_vec(vals) -> str:
    return " ".join(_fmt(v) for v in np.asarray(vals, dtype=float).reshape(-1))


def dumps_scenario(scn: ScenarioInstance) -> str:
    """Serialize a scenario to the text format (see module docstring)."""
    arr = scn.arr
    s_n, k_n, n_n = scn.num_sats, scn.num_uts, scn.n
    lines = [
        _FORMAT_LINE,
        f"sats {s_n}",
        f"uts {k_n}",
        f"tx_m {scn.m}",
        f"rx_n {n_n}",
        f"tx_grid {arr.m_x} {arr.m_y}",
        f"rx_grid {arr.n_x} {arr.n_y}",
        f"spacing_wl {_fmt(arr.spacing_wl)}",
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
    if scn.geometry is not None:
        g = scn.geometry
        lines.append("geometry")
        lines.append("sat_indices " + " ".join(str(int(i)) for i in g.sat_indices))
        for s in range(s_n):
            lines.append("sat_pos " + _fmt_vec(g.sat_positions[s]))
        for s in range(s_n):
            lines.append("sat_att " + _fmt_vec(g.sat_attitudes[s]))
        for k in range(k_n):
            lines.append("ut_pos " + _fmt_vec(g.ut_positions[k]))
        lines.append("center " + _fmt_vec(g.center))
    return "\n".join(lines) + "\n"


def export_scenario(scn: ScenarioInstance, path) -> None:
    with open(str(path), "w", encoding="utf-8") as fh:
        fh.write(dumps_scenario(scn))


class _Cursor:
    """Line cursor over the token stream, with keyword-checked reads."""

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
        if self.done():
            return None
        return self.lines[self.pos].split()[0]

    def take(self, key: str) -> list[str]:
        if self.done():
            raise ScenarioFormatError(f"unexpected end of file, expected {key!r}")
        parts = self.lines[self.pos].split()
        if parts[0] != key:
            raise ScenarioFormatError(
                f"line {self.pos + 1}: expected {key!r}, found {parts[0]!r}"
            )
        self.pos += 1
        return parts[1:]

    def floats(self, key: str, count: int) -> np.ndarray:
        vals = self.take(key)
        if len(vals) != count:
            raise ScenarioFormatError(f"{key!r} needs {count} values, got {len(vals)}")
        try:
            out = np.array([float(v) for v in vals])
        except ValueError as exc:
            raise ScenarioFormatError(f"{key!r}: {exc}") from None
        if not np.all(np.isfinite(out)):
            raise ScenarioFormatError(f"{key!r}: non-finite value")
        return out

    def ints(self, key: str, count: int) -> list[int]:
        vals = self.take(key)
        if len(vals) != count:
            raise ScenarioFormatError(f"{key!r} needs {count} values, got {len(vals)}")
        try:
            return [int(v) for v in vals]
        except ValueError as exc:
            raise ScenarioFormatError(f"{key!r}: {exc}") from None


def parse_scenario(text: str) -> ScenarioInstance:
    """Parse the text format back into a ScenarioInstance.

    Transmit/receive steering and the receive correlation are rebuilt from
    the stored angles and scattering matrices with the same routines the
    synthesizer uses, so a canonicalized scenario round-trips bit-exactly.
    """
    cur = _Cursor(text)
    if cur.done() or cur.lines[0] != _FORMAT_LINE:
        raise ScenarioFormatError(f"missing format line {_FORMAT_LINE!r}")
    cur.pos += 1

    (s_n,) = cur.ints("sats", 1)
    (k_n,) = cur.ints("uts", 1)
    (m_n,) = cur.ints("tx_m", 1)
    (n_n,) = cur.ints("rx_n", 1)
    m_x, m_y = cur.ints("tx_grid", 2)
    n_x, n_y = cur.ints("rx_grid", 2)
    if s_n < 1 or k_n < 1:
        raise ScenarioFormatError("need at least one satellite and one terminal")
    if m_x * m_y != m_n:
        raise ScenarioFormatError(f"tx_grid {m_x}x{m_y} does not give tx_m {m_n}")
    if n_x * n_y != n_n:
        raise ScenarioFormatError(f"rx_grid {n_x}x{n_y} does not give rx_n {n_n}")
    (spacing,) = cur.floats("spacing_wl", 1)
    if spacing <= 0:
        raise ScenarioFormatError("spacing_wl must be positive")
    arr = ArrayConfig(m_x=m_x, m_y=m_y, n_x=n_x, n_y=n_y, spacing_wl=float(spacing))

    noise = cur.floats("noise_w", k_n)
    if np.any(noise <= 0):
        raise ScenarioFormatError("noise powers must be positive")
    budgets_db = cur.floats("budgets_dbw", s_n)
    budgets = 10.0 ** (budgets_db / 10.0)

    shape = (s_n, k_n)
    phi_sat = np.empty(shape)
    theta_sat = np.empty(shape)
    phi_ut = np.empty(shape)
    theta_ut = np.empty(shape)
    beta = np.empty(shape)
    kappa = np.empty(shape)
    weights = np.empty(shape)
    sigma = np.empty(shape + (n_n, n_n), dtype=complex)
    g = np.empty(shape + (m_n,), dtype=complex)
    d0 = np.empty(shape + (n_n,), dtype=complex)
    r_ut = np.empty(shape + (n_n, n_n), dtype=complex)
    seen = set()

    for _ in range(s_n * k_n):
        s, k = cur.ints("link", 2)
        if not (0 <= s < s_n and 0 <= k < k_n):
            raise ScenarioFormatError(f"link ({s}, {k}) out of range")
        if (s, k) in seen:
            raise ScenarioFormatError(f"duplicate link ({s}, {k})")
        seen.add((s, k))
        ang = cur.floats("angles_deg", 4)
        if np.any(np.abs(ang) > 180.0 + 1e-9):
            raise ScenarioFormatError(f"link ({s}, {k}): angle outside +-180 deg")
        ps, ts, pu, tu = (float(a) * _D2R for a in ang)
        if not (0.0 <= ts <= math.pi and 0.0 <= tu <= math.pi):
            raise ScenarioFormatError(f"link ({s}, {k}): polar angle outside [0, 180]")
        (bv,) = cur.floats("beta", 1)
        (kv,) = cur.floats("kappa", 1)
        (wv,) = cur.floats("weight", 1)
        if bv <= 0 or kv <= 0:
            raise ScenarioFormatError(f"link ({s}, {k}): beta and kappa must be positive")
        if wv < 0:
            raise ScenarioFormatError(f"link ({s}, {k}): negative rate weight")
        sig_re = cur.floats("sigma_re", n_n * n_n).reshape(n_n, n_n)
        sig_im = cur.floats("sigma_im", n_n * n_n).reshape(n_n, n_n)
        sig = sig_re + 1j * sig_im
        if np.max(np.abs(sig - sig.conj().T)) > 1e-8:
            raise ScenarioFormatError(f"link ({s}, {k}): scattering matrix not Hermitian")
        if abs(np.trace(sig).real - 1.0) > 1e-6:
            raise ScenarioFormatError(f"link ({s}, {k}): scattering trace is not 1")
        phi_sat[s, k], theta_sat[s, k] = ps, ts
        phi_ut[s, k], theta_ut[s, k] = pu, tu
        beta[s, k], kappa[s, k], weights[s, k] = bv, kv, wv
        sigma[s, k] = sig
        g[s, k] = tx_steering(arr, ps, ts)
        d0[s, k] = rx_steering(arr, pu, tu)
        r_ut[s, k] = rician_r_ut(bv, kv, d0[s, k], sig)

    geometry = None
    if cur.peek_key() == "geometry":
        cur.take("geometry")
        sat_indices = np.array(cur.ints("sat_indices", s_n))
        sat_pos = np.stack([cur.floats("sat_pos", 3) for _ in range(s_n)])
        sat_att = np.stack(
            [cur.floats("sat_att", 9).reshape(3, 3) for _ in range(s_n)]
        )
        ut_pos = np.stack([cur.floats("ut_pos", 3) for _ in range(k_n)])
        center = cur.floats("center", 3)
        geometry = geo.GeometrySample(
            sat_positions=sat_pos,
            sat_attitudes=sat_att,
            ut_positions=ut_pos,
            center=center,
            sat_indices=sat_indices,
        )
    if not cur.done():
        raise ScenarioFormatError(f"trailing content at line {cur.pos + 1}")

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
        weights=weights,
        geometry=geometry,
    )


def import_scenario(path) -> ScenarioInstance:
    with open(str(path), encoding="utf-8") as fh:
        return parse_scenario(fh.read())
