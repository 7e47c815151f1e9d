"""Scheme registry, Monte-Carlo sweeps, and feedback-overhead accounting.

A *scheme* names one way of producing precoders/combiners for a drop:

=============  ==============================================================
sep-mrt        per-satellite matched filtering, LoS combiners
sep-mmse       per-satellite regularized zero-forcing, LoS combiners
sep-opt-wm     per-satellite weighted-MSE solver (no inter-satellite CSI)
cen-opt-wm     full coordinated weighted-MSE solver
cen-tfc-wm     centralized equivariant network + closed-form recovery
dec-tfc-wm     decentralized equivariant networks + closed-form recovery
=============  ==============================================================

Sweeps are deterministic for a given seed (independently of --jobs): every
(grid point, drop) pair gets its own SeedSequence spawn key, and all schemes
of a drop score against identical channel realizations.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import channel as ch
from . import geometry as geo
from .equinet import (
    ARCH_CENTRALIZED,
    ARCH_DECENTRALIZED,
    EquiWeights,
    assemble_decentralized,
    infer_centralized,
)
from .errors import SatmimoError
from .recovery import recover_precoders
from .wmmse import (
    PrecodingSolution,
    WmmseOptions,
    baseline_solution,
    sep_wmmse,
    weighted_sum_rate,
    wmmse_solve,
)

SCHEMES = (
    "sep-mrt",
    "sep-mmse",
    "sep-opt-wm",
    "cen-opt-wm",
    "cen-tfc-wm",
    "dec-tfc-wm",
)

_POWER_SLACK = 1.0 + 1e-6
CSV_HEADER = ("scheme", "drop", "seed", "P_dbw", "S", "K", "sum_rate_bps_hz", "feasible")


def scheme_solution(
    scn: ch.ScenarioInstance,
    scheme: str,
    opts: WmmseOptions | None = None,
    cen_weights: EquiWeights | None = None,
    dec_weights: EquiWeights | None = None,
) -> PrecodingSolution:
    """Produce the precoding solution of one scheme for one scenario."""
    opts = opts or WmmseOptions()
    if scheme == "sep-mrt":
        return baseline_solution(scn, "mrt")
    if scheme == "sep-mmse":
        return baseline_solution(scn, "mmse")
    if scheme == "sep-opt-wm":
        return sep_wmmse(scn, opts)
    if scheme == "cen-opt-wm":
        return wmmse_solve(scn, opts).sol
    if scheme == "cen-tfc-wm":
        if cen_weights is None or cen_weights.arch != ARCH_CENTRALIZED:
            raise SatmimoError("cen-tfc-wm needs centralized weights")
        return recover_precoders(scn, infer_centralized(scn, cen_weights))
    if scheme == "dec-tfc-wm":
        if dec_weights is None or dec_weights.arch != ARCH_DECENTRALIZED:
            raise SatmimoError("dec-tfc-wm needs decentralized weights")
        return recover_precoders(scn, assemble_decentralized(scn, dec_weights))
    raise SatmimoError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")


def overhead_counts(scheme: str, s: int, k: int, m: int, n: int) -> int:
    """Real scalars each satellite must receive from elsewhere before precoding.

    Separate schemes exchange nothing.  Decentralized network schemes need
    only the 13 geometry/power scalars of every other satellite (position 3,
    attitude 9, transmit power 1).  Fully coordinated schemes additionally
    need every other satellite's per-terminal statistics: beta and kappa (2),
    the N x N scattering matrix (N^2 real parameters; Hermitian with unit
    trace, counted dense), and the complex M-element transmit steering (2M).
    """
    if scheme not in SCHEMES:
        raise SatmimoError(f"unknown scheme {scheme!r}")
    if scheme.startswith("sep-"):
        return 0
    per_sat = 13
    if scheme.startswith("cen-"):
        per_sat += k * (2 + n * n) + 2 * k * m
    return (s - 1) * per_sat


@dataclass
class SweepRecord:
    scheme: str
    drop: int
    seed: int
    p_dbw: float
    num_sats: int
    num_uts: int
    sum_rate: float  # bps/Hz; NaN when the solve failed
    feasible: bool

    def as_csv_row(self) -> tuple:
        return (
            self.scheme,
            self.drop,
            self.seed,
            repr(self.p_dbw),
            self.num_sats,
            self.num_uts,
            repr(self.sum_rate),
            int(self.feasible),
        )


@dataclass
class EvalReport:
    records: list[SweepRecord] = field(default_factory=list)

    def mean_rates(self) -> dict[tuple, float]:
        """(p_dbw, S, K, scheme) -> mean sum rate over finite drops."""
        acc: dict[tuple, list[float]] = {}
        for r in self.records:
            if math.isfinite(r.sum_rate):
                acc.setdefault((r.p_dbw, r.num_sats, r.num_uts, r.scheme), []).append(
                    r.sum_rate
                )
        return {key: float(np.mean(vals)) for key, vals in acc.items()}

    def rates_by_scheme(self, p_dbw: float, s: int, k: int) -> dict[str, np.ndarray]:
        """scheme -> per-drop sum rates (drop order) at one grid point."""
        out: dict[str, dict[int, float]] = {}
        for r in self.records:
            if (r.p_dbw, r.num_sats, r.num_uts) == (p_dbw, s, k):
                out.setdefault(r.scheme, {})[r.drop] = r.sum_rate
        return {
            scheme: np.array([vals[d] for d in sorted(vals)])
            for scheme, vals in out.items()
        }


def export_results(report: EvalReport, path) -> None:
    with open(str(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in report.records:
            writer.writerow(rec.as_csv_row())


def _drop_records(args) -> list[SweepRecord]:
    (
        grid_idx,
        drop_idx,
        p_dbw,
        s_n,
        k_n,
        seed,
        schemes,
        opts,
        n_mc,
        cfg,
        arr,
        cen_weights,
        dec_weights,
    ) = args
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(grid_idx, drop_idx))
    geom_seed, stat_seed, rate_seed = ss.spawn(3)
    drop = geo.DropConfig(num_sats=s_n, num_uts=k_n, seed=np.random.default_rng(geom_seed))
    records = []
    try:
        geom = geo.drop_scenario(cfg, drop)
        scn = ch.synthesize_stats(
            geom, cfg, arr, np.random.default_rng(stat_seed), p_sat_w=10.0 ** (p_dbw / 10.0)
        )
    except SatmimoError:
        return [
            SweepRecord(scheme, drop_idx, seed, p_dbw, s_n, k_n, float("nan"), False)
            for scheme in schemes
        ]
    for scheme in schemes:
        try:
            sol = scheme_solution(scn, scheme, opts, cen_weights, dec_weights)
            feasible = bool(
                np.all(sol.sat_powers() <= scn.budgets * _POWER_SLACK)
            )
            # Fresh generator from the same seed per scheme: every scheme is
            # scored against identical channel realizations.
            rate = weighted_sum_rate(
                scn, sol, n_mc=n_mc, rng=np.random.default_rng(rate_seed)
            )
        except SatmimoError:
            rate, feasible = float("nan"), False
        records.append(
            SweepRecord(scheme, drop_idx, seed, p_dbw, s_n, k_n, float(rate), feasible)
        )
    return records


def run_sweep(
    p_dbw=(0.0,),
    num_sats=(3,),
    num_uts=(4,),
    n_drops: int = 10,
    schemes=SCHEMES,
    seed: int = 0,
    opts: WmmseOptions | None = None,
    n_mc: int = 1000,
    jobs: int = 1,
    cfg: geo.ConstellationConfig | None = None,
    arr: ch.ArrayConfig | None = None,
    cen_weights: EquiWeights | None = None,
    dec_weights: EquiWeights | None = None,
) -> EvalReport:
    """Monte-Carlo sweep over the (power, S, K) grid.

    Results are independent of ``jobs``; identical seeds give identical
    reports.  Schemes that need network weights must be given them upfront.
    """
    opts = opts or WmmseOptions()
    cfg = cfg or geo.ConstellationConfig()
    arr = arr or ch.ArrayConfig()
    schemes = tuple(schemes)
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise SatmimoError(f"unknown scheme {scheme!r}")
        if scheme == "cen-tfc-wm" and cen_weights is None:
            raise SatmimoError("cen-tfc-wm requested without centralized weights")
        if scheme == "dec-tfc-wm" and dec_weights is None:
            raise SatmimoError("dec-tfc-wm requested without decentralized weights")

    tasks = []
    for grid_idx, (p, s_n, k_n) in enumerate(product(p_dbw, num_sats, num_uts)):
        for drop_idx in range(n_drops):
            tasks.append(
                (
                    grid_idx,
                    drop_idx,
                    float(p),
                    int(s_n),
                    int(k_n),
                    int(seed),
                    schemes,
                    opts,
                    int(n_mc),
                    cfg,
                    arr,
                    cen_weights,
                    dec_weights,
                )
            )

    report = EvalReport()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for recs in pool.map(_drop_records, tasks):
                report.records.extend(recs)
    else:
        for task in tasks:
            report.records.extend(_drop_records(task))
    return report
