"""Batch command-line front end.

Exit codes: 0 success, 2 usage error, 3 bad configuration or input file,
4 solver / estimation failure, 5 output could not be written.
"""

from __future__ import annotations

import argparse
import platform
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__, _accel
from .calibrate import (
    DataEndpoints,
    DecompositionError,
    EstimationError,
    decompose,
    estimate,
    load_spec,
    write_decomposition,
)
from .dynamics import SolverError
from .equilibrium import MOMENT_LABELS, marriage_rate_by_decile, solve_equilibrium
from .params import ConfigError, SolverSettings, load_params, save_params
from .simulate import event_study, read_panel, simulate_panel, write_event_study, write_panel
from .static import InfeasibleError

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _window(text):
    try:
        lo, hi = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected QMIN:QMAX, got {text!r}") from None
    if lo > hi:
        raise argparse.ArgumentTypeError("QMIN must not exceed QMAX")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="marfert", description="Marriage and fertility equilibrium model.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, params=True):
        if params:
            sp.add_argument("--params", required=True, type=Path, help="parameter file")
        sp.add_argument("--out", required=True, type=Path, help="output directory")
        sp.add_argument("--grid", type=int, help="wage grid points (overrides n_wage_grid)")
        sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("solve", help="equilibrium, moments and decile marriage rates")
    common(sp)

    sp = sub.add_parser("simulate", help="simulate an agent panel")
    common(sp)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--agents", type=int, default=10_000, help="agents per gender")
    sp.add_argument("--periods", type=int, default=30)
    sp.add_argument("--burn-in", type=int, default=0)

    sp = sub.add_parser("event-study", help="event study on a panel CSV")
    sp.add_argument("--panel", required=True, type=Path)
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument(
        "--window", type=_window, default=(-5, 10), help="event window QMIN:QMAX; write --window=-5:10 for a negative start"
    )
    sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("calibrate", help="minimum-distance estimation")
    sp.add_argument("--spec", required=True, type=Path, help="estimation spec file")
    sp.add_argument("--params", type=Path, help="override the estimation spec's parameter file")
    sp.add_argument("--targets", type=Path, help="override the estimation spec's target file")
    sp.add_argument("--out", required=True, type=Path)
    sp.add_argument("--seed", type=int, help="override the estimation spec's seed")
    sp.add_argument("--grid", type=int)
    sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("decompose", help="counterfactual decomposition")
    common(sp)
    sp.add_argument("--counterfactual", required=True, type=Path, help="counterfactual parameter file")
    return p


def _params(path, grid):
    if not path.is_file():
        raise ConfigError(f"parameter file not found: {path}")
    params = load_params(path)
    if grid is not None:
        if grid < 1:
            raise ConfigError("--grid must be positive")
        params = params.with_values(n_wage_grid=grid)
    return params


def _manifest(out: Path, args, lines, seconds):
    echo = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    text = ["# run manifest", f"command = {args.command}"]
    text += [f"arg.{k} = {v}" for k, v in echo.items() if k != "command"]
    text += [
        f"version.marfert = {__version__}",
        f"version.python = {platform.python_version()}",
        f"version.numpy = {np.__version__}",
        f"version.scipy = {scipy.__version__}",
        f"version.pandas = {pd.__version__}",
        f"backend = {'numba' if _accel.USE_NUMBA else 'numpy'}",
    ]
    text += lines
    text.append(f"wall_seconds = {seconds:.3f}")
    (out / "manifest.txt").write_text("\n".join(text) + "\n")


def _cmd_solve(args):
    params = _params(args.params, args.grid)
    eq = solve_equilibrium(params, SolverSettings())
    mv = eq.moments.as_dict()
    pd.DataFrame(
        {"moment": list(mv), "label": [MOMENT_LABELS[k] for k in mv], "value": list(mv.values())}
    ).to_csv(args.out / "moments.csv", index=False)
    dec = marriage_rate_by_decile(eq)
    pd.DataFrame({"decile": np.arange(1, 11), "rate_m": dec["m"], "rate_f": dec["f"]}).to_csv(
        args.out / "deciles.csv", index=False
    )
    rep = eq.report
    return [
        f"outer_iterations = {rep.outer_iterations}",
        f"final_residual = {rep.residuals[-1]!r}",
    ]


def _cmd_simulate(args):
    params = _params(args.params, args.grid)
    eq = solve_equilibrium(params, SolverSettings())
    panel = simulate_panel(eq, args.agents, args.periods, args.seed, burn_in=args.burn_in)
    write_panel(panel, args.out / "panel.csv")
    return [f"rows = {len(panel)}", f"final_residual = {eq.report.residuals[-1]!r}"]


def _cmd_event_study(args):
    if not args.panel.is_file():
        raise ConfigError(f"panel file not found: {args.panel}")
    try:
        panel = read_panel(args.panel)
    except (ValueError, pd.errors.ParserError) as exc:
        raise ConfigError(str(exc)) from exc
    res = event_study(panel, window=args.window)
    write_event_study(res, args.out / "event_study.csv")
    return [f"rows = {len(panel)}"]


def _cmd_calibrate(args):
    if not args.spec.is_file():
        raise ConfigError(f"estimation spec not found: {args.spec}")
    for path in (args.params, args.targets):
        if path is not None and not path.is_file():
            raise ConfigError(f"file not found: {path}")
    spec = load_spec(args.spec, targets_path=args.targets, params_path=args.params)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.grid is not None:
        changes["base"] = spec.base.with_values(n_wage_grid=args.grid)
    if changes:
        from dataclasses import replace

        spec = replace(spec, **changes)
    res = estimate(spec, SolverSettings(), threads=args.threads)
    save_params(res.params, args.out / "fitted_params.txt", header="fitted parameters")
    res.residuals.to_csv(args.out / "residuals.csv", index=False)
    res.trace.to_csv(args.out / "trace.csv", index=False)
    return [f"loss = {res.loss!r}", f"evaluations = {res.n_evals}"]


def _cmd_decompose(args):
    base = _params(args.params, args.grid)
    other = _params(args.counterfactual, args.grid)
    dec = decompose(base, other, data=DataEndpoints(), settings=SolverSettings(), threads=args.threads)
    write_decomposition(dec, args.out / "decomposition.csv")
    return [f"explained_marriage = {dec.explained_marriage!r}", f"explained_cfr = {dec.explained_cfr!r}"]


_COMMANDS = {
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "event-study": _cmd_event_study,
    "calibrate": _cmd_calibrate,
    "decompose": _cmd_decompose,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"marfert: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        print("marfert: usage error: a command is required", file=sys.stderr)
        return EXIT_USAGE
    t0 = time.perf_counter()
    try:
        args.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"marfert: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        lines = _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"marfert: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, EstimationError, DecompositionError, InfeasibleError) as exc:
        print(f"marfert: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"marfert: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # invalid parameter values surface as ValueError from the dataclasses
        print(f"marfert: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _manifest(args.out, args, lines, time.perf_counter() - t0)
    return EXIT_OK


def main():  # pragma: no cover - console entry
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
