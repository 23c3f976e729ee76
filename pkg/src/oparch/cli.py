"""Command-line entry point: ``oparch <subcommand> ...``.

Exit codes: 0 success, 1 domain error (one ``Code: message`` line on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import diagnostics, estimate, forecast, io
from .errors import OparchError
from .experiments import DEFAULT_N_GRID, mc_consistency, write_consistency_csv
from .function_space import Grid, make_basis, write_grid_function
from .model import CccParams, stationarity_report
from .simulate import read_curves, simulate, write_curves, write_z_path


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _theta(text: str):
    if text in ("auto", "rate"):
        return text
    return float(text)


def _config_defaults(argv) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    ns, _ = pre.parse_known_args(argv)
    if not ns.config:
        return {}
    cfg = io.RunConfig.from_json(ns.config).to_dict()
    out = {k: v for k, v in cfg.items() if v is not None}
    if "alpha_levels" in out:
        out["alpha"] = ",".join(str(a) for a in out.pop("alpha_levels"))
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="oparch", description="CCC-op-ARCH simulation, estimation and backtesting")
    ap.add_argument("--config", help="RunConfig JSON providing defaults")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a sample from a CccParams JSON")
    s.add_argument("--params", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--burn-in", dest="burn_in", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--engine", choices=["spectral", "grid"], default="spectral")
    s.add_argument("--innovations", choices=["kl", "cholesky"])
    s.add_argument("--out", required=True)
    s.add_argument("--z-out", dest="z_out")

    def fit_args(q, with_alpha=False):
        q.add_argument("--in", dest="inp", required=True)
        q.add_argument("--kernel", choices=["bm", "ou"], default="ou")
        q.add_argument("--p", type=int, default=1)
        q.add_argument("--tve", type=float, default=0.9)
        q.add_argument("--K", type=int)
        q.add_argument("--method", choices=["tikhonov", "finite", "mp"], default="tikhonov")
        q.add_argument("--theta", type=_theta, default="rate")
        q.add_argument("--k-proj", dest="k_proj", type=int)

    f = sub.add_parser("fit", help="estimate a CCC-op-ARCH model")
    fit_args(f)
    f.add_argument("--alpha", type=float, default=0.05, help="level used when --theta auto")
    f.add_argument("--seed", type=int)
    f.add_argument("--out", required=True)

    fc = sub.add_parser("forecast", help="one-step quantile curve after the last curve")
    fc.add_argument("--fit", required=True)
    fc.add_argument("--in", dest="inp", required=True)
    fc.add_argument("--alpha", type=float, default=0.05)
    fc.add_argument("--mode", choices=list(forecast.MODES), default="gaussian")
    fc.add_argument("--out", required=True)

    ev = sub.add_parser("evaluate", help="expanding-window VaR backtest")
    fit_args(ev)
    ev.add_argument("--alpha", default="0.01,0.05")
    ev.add_argument("--mode", choices=list(forecast.MODES), default="gaussian")
    ev.add_argument("--split", type=float, default=0.8)
    ev.add_argument("--orientation", choices=["realized", "forecast"], default="realized")
    ev.add_argument("--out", required=True)
    ev.add_argument("--curves-out", dest="curves_out")

    dg = sub.add_parser("diagnose", help="residual SACF and whiteness tests")
    dg.add_argument("--fit", required=True)
    dg.add_argument("--in", dest="inp", required=True)
    dg.add_argument("--max-lags", dest="max_lags", type=_ints, default=list(diagnostics.DEFAULT_LAGS))
    dg.add_argument("--n-perm", dest="n_perm", type=int, default=999)
    dg.add_argument("--mode", choices=["paper", "half"], default="paper")
    dg.add_argument("--seed", type=int, default=0)
    dg.add_argument("--out", required=True)

    mc = sub.add_parser("mc-consistency", help="Monte-Carlo estimator consistency table")
    mc.add_argument("--params", required=True)
    mc.add_argument("--n-list", dest="n_list", type=_ints, default=list(DEFAULT_N_GRID))
    mc.add_argument("--reps", type=int, default=100)
    mc.add_argument("--method", choices=["tikhonov", "finite", "mp"], default="tikhonov")
    mc.add_argument("--theta", type=_theta, default="rate")
    mc.add_argument("--K", type=int)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--out", required=True)
    mc.add_argument("--per-rep-out", dest="per_rep_out")

    ig = sub.add_parser("ingest", help="intraday prices to OCIDR curves")
    ig.add_argument("--prices", required=True)
    ig.add_argument("--out", required=True)
    ig.add_argument("--svg", help="optional SVG plot of the curves")

    st = sub.add_parser("stationarity", help="stationarity margin and Lyapunov estimate")
    st.add_argument("--params", required=True)
    st.add_argument("--steps", type=int, default=2000)
    st.add_argument("--reps", type=int, default=50)
    st.add_argument("--seed", type=int, default=0)
    return ap


def _apply_config(ap: argparse.ArgumentParser, defaults: dict) -> None:
    if not defaults:
        return
    for action in ap._subparsers._group_actions:  # noqa: SLF001 - argparse has no public walk
        for sp in action.choices.values():
            acts = {a.dest: a for a in sp._actions}
            vals = {k: v for k, v in defaults.items() if k in acts}
            # single-level subcommands take the first configured level
            if "alpha" in vals and acts["alpha"].type is float:
                vals["alpha"] = float(str(vals["alpha"]).split(",")[0])
            sp.set_defaults(**vals)


def _load_sample(path):
    curves, grid = read_curves(path)
    return curves, grid


def _cmd_simulate(a) -> int:
    params = CccParams.from_json(a.params)
    smp = simulate(params, a.n, burn_in=a.burn_in, seed=a.seed, engine=a.engine, innovations=a.innovations)
    write_curves(a.out, smp.curves, smp.grid)
    if a.z_out:
        write_z_path(a.z_out, smp.z_path)
    return 0


def _cmd_fit(a) -> int:
    curves, grid = _load_sample(a.inp)
    basis = make_basis(a.kernel, grid.r)
    res = estimate.fit(
        curves, basis, a.p, K=a.K, tve=a.tve, method=a.method, theta=a.theta, k_proj=a.k_proj,
        alpha_level=a.alpha, seed=a.seed,
    )
    res.to_json(a.out)
    return 0


def _cmd_forecast(a) -> int:
    res = estimate.FitResult.from_json(a.fit)
    curves, grid = _load_sample(a.inp)
    basis = make_basis(res.kernel or "ou", grid.r)
    scores = basis.scores(curves[-res.p :][::-1], res.K)
    sf = forecast.forecast_sigma(res, scores)
    write_grid_function(a.out, forecast.quantile_curve(sf, basis, a.alpha, a.mode))
    return 0


def _cmd_evaluate(a) -> int:
    curves, grid = _load_sample(a.inp)
    basis = make_basis(a.kernel, grid.r)
    rep = forecast.backtest(
        curves, basis, a.p, a.method, _floats(a.alpha), a.split, K=a.K, tve=a.tve, theta=a.theta,
        k_proj=a.k_proj, mode=a.mode, orientation=a.orientation,
    )
    rep.to_json(a.out)
    if a.curves_out:
        rep.write_avg_curves(a.curves_out)
    return 0


def _cmd_diagnose(a) -> int:
    res = estimate.FitResult.from_json(a.fit)
    curves, grid = _load_sample(a.inp)
    basis = make_basis(res.kernel or "ou", grid.r)
    panel = estimate.compute_scores(curves, basis, res.K)
    out = diagnostics.diagnose(res, panel, a.max_lags, a.n_perm, a.seed, a.mode)
    diagnostics.write_diagnostics(a.out, out)
    return 0


def _cmd_mc(a) -> int:
    params = CccParams.from_json(a.params)
    rows = mc_consistency(params, a.n_list, a.reps, a.method, K=a.K, theta=a.theta, seed=a.seed)
    write_consistency_csv(a.out, rows, a.per_rep_out)
    return 0


def _cmd_ingest(a) -> int:
    panel = io.read_prices(a.prices)
    R = io.build_ocidr(panel)
    grid = Grid(panel.r)
    write_curves(a.out, R, grid, days=panel.days[1:])
    if a.svg:
        io.write_svg_lines(a.svg, {d: (grid.nodes, R[i]) for i, d in enumerate(panel.days[1:7])}, title="OCIDR")
    return 0


def _cmd_stationarity(a) -> int:
    params = CccParams.from_json(a.params)
    rep = stationarity_report(params, a.steps, a.reps, a.seed)
    json.dump(
        {"margin": rep.margin, "satisfied": rep.satisfied, "lyapunov": rep.lyapunov_estimate, "lyapunov_se": rep.lyapunov_se},
        sys.stdout,
        indent=2,
    )
    sys.stdout.write("\n")
    return 0


COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "forecast": _cmd_forecast,
    "evaluate": _cmd_evaluate,
    "diagnose": _cmd_diagnose,
    "mc-consistency": _cmd_mc,
    "ingest": _cmd_ingest,
    "stationarity": _cmd_stationarity,
}


def cli_main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        _apply_config(ap, _config_defaults(argv))
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (OSError, ValueError, OparchError) as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[a.command](a)
    except OparchError as exc:
        print(exc.one_line(), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


def main() -> None:  # pragma: no cover
    sys.exit(cli_main())
