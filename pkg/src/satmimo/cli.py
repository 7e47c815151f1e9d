"""Command-line front end.

Subcommands: gen, solve, infer, sweep, overhead, validate-weights.

Exit codes: 0 on success, 1 on validation/usage errors (malformed files,
bad arguments), 2 on solver or generation failures (infeasible drops,
numerical breakdown).

Any subcommand accepts ``--config FILE`` holding ``key value`` (or
``key=value``) lines named after the long options; explicit command-line
flags win over the config file.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import equinet
from . import evaluation as ev
from . import geometry as geo
from .channel import ArrayConfig, synthesize_stats
from .errors import (
    BracketFailure,
    DegenerateLink,
    SatmimoError,
    SelectionInfeasible,
    SingularSystem,
)
from .recovery import recover_precoders
from .scenario_io import export_scenario, import_scenario
from .wmmse import WmmseOptions, weighted_sum_rate, wmmse_solve

_SOLVER_ERRORS = (SelectionInfeasible, DegenerateLink, SingularSystem, BracketFailure)


def _csv_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _csv_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _csv_strs(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _config_argv(path: str) -> list[str]:
    """Turn a key/value config file into an argv prefix (flags still win)."""
    extra: list[str] = []
    try:
        with open(path, encoding="utf-8") as fh:
            for raw in fh:
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" in line:
                    key, val = (part.strip() for part in line.split("=", 1))
                else:
                    parts = line.split(None, 1)
                    if len(parts) != 2:
                        raise SatmimoError(f"config line needs a value: {line!r}")
                    key, val = parts[0], parts[1].strip()
                flag = "--" + key.lstrip("-").replace("_", "-")
                if val.lower() in ("true", "yes", "on") and key in ("quiet",):
                    extra.append(flag)
                else:
                    extra.extend([flag, val])
    except OSError as exc:
        raise SatmimoError(f"cannot read config file: {exc}") from None
    return extra


def _opts_from(args) -> WmmseOptions:
    return WmmseOptions(
        tol=args.tol,
        max_outer=args.max_outer,
        lambda_tol=args.lambda_tol,
        n_mc=args.n_mc,
    )


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--tol", type=float, default=1e-5, help="relative objective tolerance")
    p.add_argument("--max-outer", type=int, default=100, help="outer iteration cap")
    p.add_argument(
        "--lambda-tol", type=float, default=1e-8, help="power-constraint tolerance"
    )


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key/value option file; flags override it")
    p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    p.add_argument("--n-mc", type=int, default=1000, help="rate Monte-Carlo samples")


def _load_weights_arg(path, expect_arch: str | None = None):
    if path is None:
        return None
    weights = equinet.load_weights(path)
    if expect_arch is not None and weights.arch != expect_arch:
        raise SatmimoError(f"{path}: expected {expect_arch} weights, got {weights.arch}")
    return weights


def cmd_gen(args) -> int:
    cfg = geo.ConstellationConfig()
    arr = ArrayConfig(
        m_x=args.tx_grid[0],
        m_y=args.tx_grid[1],
        n_x=args.rx_grid[0],
        n_y=args.rx_grid[1],
        spacing_wl=args.spacing,
    )
    rng = np.random.default_rng(args.seed)
    drop = geo.DropConfig(num_sats=args.sats, num_uts=args.uts, seed=rng)
    geom = geo.drop_scenario(cfg, drop)
    scn = synthesize_stats(geom, cfg, arr, rng, p_sat_w=10.0 ** (args.p_dbw / 10.0))
    export_scenario(scn, args.out)
    print(f"wrote {args.out}: S={scn.num_sats} K={scn.num_uts} M={scn.m} N={scn.n}")
    return 0


def cmd_solve(args) -> int:
    scn = import_scenario(args.scenario)
    opts = _opts_from(args)
    cen_w = _load_weights_arg(args.cen_weights, equinet.ARCH_CENTRALIZED)
    dec_w = _load_weights_arg(args.dec_weights, equinet.ARCH_DECENTRALIZED)
    print(f"scenario S={scn.num_sats} K={scn.num_uts} M={scn.m} N={scn.n}")
    for scheme in args.schemes:
        if scheme in ("cen-opt-wm", "sep-opt-wm"):
            if scheme == "cen-opt-wm":
                state = wmmse_solve(scn, opts)
                print(
                    f"{scheme}: iterations={state.n_iter} converged={int(state.converged)}"
                    f" objective={state.objective_trace[-1]:.9g}"
                )
                sol = state.sol
            else:
                sol = ev.scheme_solution(scn, scheme, opts)
        else:
            sol = ev.scheme_solution(scn, scheme, opts, cen_w, dec_w)
        frac = sol.sat_powers() / scn.budgets
        rate = weighted_sum_rate(
            scn, sol, n_mc=args.n_mc, rng=np.random.default_rng(args.seed)
        )
        print(f"{scheme}: power_frac=[{' '.join(f'{f:.6f}' for f in frac)}]")
        print(f"{scheme}: sum_rate_bps_hz={rate:.6f}")
    return 0


def cmd_infer(args) -> int:
    scn = import_scenario(args.scenario)
    weights = equinet.load_weights(args.weights)
    if weights.arch == equinet.ARCH_CENTRALIZED:
        tup = equinet.infer_centralized(scn, weights)
    else:
        tup = equinet.assemble_decentralized(scn, weights)
    sol = recover_precoders(scn, tup)
    frac = sol.sat_powers() / scn.budgets
    rate = weighted_sum_rate(
        scn, sol, n_mc=args.n_mc, rng=np.random.default_rng(args.seed)
    )
    print(f"arch {weights.arch}")
    print(f"lambda [{' '.join(f'{v:.6g}' for v in np.atleast_1d(tup.lam))}]")
    print(f"power_frac [{' '.join(f'{f:.6f}' for f in frac)}]")
    print(f"sum_rate_bps_hz {rate:.6f}")
    return 0


def cmd_sweep(args) -> int:
    cen_w = _load_weights_arg(args.cen_weights, equinet.ARCH_CENTRALIZED)
    dec_w = _load_weights_arg(args.dec_weights, equinet.ARCH_DECENTRALIZED)
    report = ev.run_sweep(
        p_dbw=args.p_dbw,
        num_sats=args.sats,
        num_uts=args.uts,
        n_drops=args.drops,
        schemes=args.schemes,
        seed=args.seed,
        opts=_opts_from(args),
        n_mc=args.n_mc,
        jobs=args.jobs,
        cen_weights=cen_w,
        dec_weights=dec_w,
    )
    ev.export_results(report, args.out)
    for (p, s_n, k_n, scheme), mean in sorted(report.mean_rates().items()):
        print(f"P={p:g}dBW S={s_n} K={k_n} {scheme}: mean_rate={mean:.4f}")
    print(f"wrote {args.out} ({len(report.records)} rows)")
    return 0


def cmd_overhead(args) -> int:
    schemes = args.schemes if args.schemes else list(ev.SCHEMES)
    for scheme in schemes:
        count = ev.overhead_counts(scheme, args.sats, args.uts, args.tx_m, args.rx_n)
        print(f"{scheme} {count}")
    return 0


def cmd_validate_weights(args) -> int:
    summary = equinet.validate_weights(args.weights)
    print(
        f"ok arch={summary['arch']} tensors={summary['tensors']}"
        f" parameters={summary['parameters']} M={summary['m']} N={summary['n']}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satmimo",
        description="Multi-satellite downlink precoding: generation, solvers, "
        "equivariant inference, and evaluation sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a scenario file from a random drop")
    _add_common(p)
    p.add_argument("--out", required=True, help="scenario file to write")
    p.add_argument("--sats", type=int, default=3)
    p.add_argument("--uts", type=int, default=4)
    p.add_argument("--p-dbw", type=float, default=0.0, help="per-satellite budget")
    p.add_argument("--tx-grid", type=int, nargs=2, default=[4, 4], metavar=("MX", "MY"))
    p.add_argument("--rx-grid", type=int, nargs=2, default=[2, 2], metavar=("NX", "NY"))
    p.add_argument("--spacing", type=float, default=0.5, help="element spacing (wl)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="solve one scenario file with chosen schemes")
    _add_common(p)
    _add_solver_flags(p)
    p.add_argument("--scenario", required=True)
    p.add_argument(
        "--schemes",
        type=_csv_strs,
        default=["cen-opt-wm"],
        help="comma-separated scheme names",
    )
    p.add_argument("--cen-weights")
    p.add_argument("--dec-weights")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("infer", help="run network inference + recovery on a scenario")
    _add_common(p)
    p.add_argument("--scenario", required=True)
    p.add_argument("--weights", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="Monte-Carlo sweep over a (power, S, K) grid")
    _add_common(p)
    _add_solver_flags(p)
    p.add_argument("--out", required=True, help="CSV results file")
    p.add_argument("--p-dbw", type=_csv_floats, default=[0.0])
    p.add_argument("--sats", type=_csv_ints, default=[3])
    p.add_argument("--uts", type=_csv_ints, default=[4])
    p.add_argument("--drops", type=int, default=10)
    p.add_argument("--schemes", type=_csv_strs, default=list(ev.SCHEMES))
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--cen-weights")
    p.add_argument("--dec-weights")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("overhead", help="print inter-satellite feedback float counts")
    p.add_argument("--config", help="key/value option file; flags override it")
    p.add_argument("--sats", type=int, required=True)
    p.add_argument("--uts", type=int, required=True)
    p.add_argument("--tx-m", type=int, required=True)
    p.add_argument("--rx-n", type=int, required=True)
    p.add_argument("--schemes", type=_csv_strs, default=None)
    p.set_defaults(func=cmd_overhead)

    p = sub.add_parser("validate-weights", help="integrity-check a weight container")
    p.add_argument("--config", help="key/value option file; flags override it")
    p.add_argument("--weights", required=True)
    p.set_defaults(func=cmd_validate_weights)

    return parser


def _peek_config(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # Expand the config file before parsing so it can satisfy required
        # flags; it goes right after the subcommand, so explicit flags win.
        path = _peek_config(argv)
        if path and argv:
            argv = [argv[0]] + _config_argv(path) + argv[1:]
        args = parser.parse_args(argv)
        return args.func(args)
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except SatmimoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
