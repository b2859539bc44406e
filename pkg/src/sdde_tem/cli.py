"""Command-line front end: ``sdde-tem {simulate,converge,stability,gamma}``.

Exit status: 0 success, 2 configuration error, 3 blow-up during simulation,
4 I/O error.  Every run writes ``report.txt`` echoing the fully resolved
command line, so re-running it reproduces every number.
"""
from __future__ import annotations

import argparse
import math
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    feasibility_checks,
    gamma_solve,
    max_stable_stepsize,
    simulate_paths,
    stability_study,
    strong_error_study,
)
from .errors import BlowUpError, SddeError
from .model import CATALOG, get_entry
from .scheme import SchemeKind, make_grid
from .truncation import ProfileKind, polynomial_profile, stability_profile

OUT_DIR_ENV = "SDDE_TEM_OUT_DIR"

EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_IO = 4


class ConfigError(SddeError):
    pass


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _builtin_phi_hat(l):
    return 2.0 * (1.0 + l * l)


def _builtin_phi_hat_inv(v):
    return math.sqrt(v / 2.0 - 1.0)


def parse_profile(text, model):
    """``polynomial:alpha=..,k4=..,q=..,r=..[,f00=..,g00=..]`` or ``stability:mu=..``."""
    kind, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError(f"profile parameter {item!r} is not key=value")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"profile parameter {key}={val!r} is not a number") from None
    xi = model.initial_sup_norm
    if kind == "polynomial":
        missing = {"alpha", "k4", "q", "r"} - params.keys()
        if missing:
            raise ConfigError(f"polynomial profile is missing {', '.join(sorted(missing))}")
        return polynomial_profile(params["alpha"], params["k4"], params.get("f00", 0.0),
                                  params.get("g00", 0.0), params["q"], params["r"], xi)
    if kind == "stability":
        if "mu" not in params:
            raise ConfigError("stability profile needs mu")
        return stability_profile(_builtin_phi_hat, params["mu"], xi, _builtin_phi_hat_inv)
    raise ConfigError(f"unknown profile kind {kind!r} (polynomial or stability)")


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _window(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdde-tem", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", choices=sorted(CATALOG), default="example1")
    common.add_argument("--profile", help="override the model's recommended profile")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", default=None,
                        help=f"output directory (default ${OUT_DIR_ENV} or .)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--batch-size", type=int, default=250)

    p = sub.add_parser("simulate", parents=[common], help="write sample paths to CSV")
    p.add_argument("--scheme", choices=[k.value for k in SchemeKind])
    p.add_argument("--n", type=int, required=True, help="steps per delay (dt = tau/n)")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--paths", type=int, default=1)
    p.add_argument("--out", default="path.csv")

    p = sub.add_parser("converge", parents=[common], help="strong error vs step size")
    p.add_argument("--p", dest="p_bar", type=float, default=None, help="error moment")
    p.add_argument("--n-list", type=_int_list, default=[64, 256, 1024, 4096, 16384])
    p.add_argument("--ref-n", type=int, default=65536)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--T", type=float, default=1.0)

    p = sub.add_parser("stability", parents=[common], help="mean-square and a.s. decay")
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--T", type=float, default=8.0)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--as-samples", type=int, default=100)
    p.add_argument("--fit-window", type=_window, default=None)
    for name in ("k6bar", "k6", "k7bar", "k7", "epsilon", "gamma"):
        p.add_argument(f"--{name}", type=float, default=None)

    p = sub.add_parser("gamma", help="largest admissible decay rate and step bound")
    p.add_argument("--k6bar", type=float, required=True)
    p.add_argument("--k6", type=float, required=True)
    p.add_argument("--k7bar", type=float, required=True)
    p.add_argument("--k7", type=float, required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=None,
                   help="rate to check (default: gamma* rounded down to 2 decimals)")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--khat", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    return parser


def _resolved_command(args) -> str:
    skip = {"command", "out_dir", "threads", "batch_size"}
    parts = ["sdde-tem", args.command]
    for key, val in sorted(vars(args).items()):
        if key in skip or val is None:
            continue
        if isinstance(val, list):
            val = ",".join(str(v) for v in val)
        elif isinstance(val, tuple):
            val = ",".join(repr(float(v)) for v in val)
        elif isinstance(val, float):
            val = repr(val)
        parts += ["--" + key.replace("_", "-").replace("p-bar", "p"), str(val)]
    return " ".join(shlex.quote(p) for p in parts)


def _out_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUT_DIR_ENV, "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(path: Path, args, lines) -> None:
    with open(path, "w") as fh:
        fh.write(f"command: {_resolved_command(args)}\n")
        fh.write(f"seed: {args.seed}\n")
        for key, val in lines:
            fh.write(f"{key}: {val}\n")


def _entry_and_profile(args):
    entry = get_entry(args.model)
    if args.profile:
        profile = parse_profile(args.profile, entry.model)
    else:
        profile = entry.recommended_profile
    return entry, profile


def _check_common(args):
    if args.seed < 0 or args.seed >= 2**64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    if args.threads < 1 or args.batch_size < 1:
        raise ConfigError("--threads and --batch-size must be >= 1")
    if args.T <= 0:
        raise ConfigError("--T must be positive")


def cmd_simulate(args) -> int:
    _check_common(args)
    entry, profile = _entry_and_profile(args)
    if args.scheme is None:
        args.scheme = ("stab-tem" if profile.kind is ProfileKind.STABILITY else "tem")
    kind = SchemeKind(args.scheme)
    if args.paths < 1:
        raise ConfigError("--paths must be >= 1")
    model = entry.model
    grid = make_grid(model.delay, args.n, args.T)
    out_dir = _out_dir(args)
    res = simulate_paths(model, profile, grid, kind, args.paths, args.seed,
                         args.batch_size, args.threads)
    d = model.state_dim
    header = ["t"] + [f"x_{j + 1}" for j in range(d)] + ["pre_norm", "post_norm", "truncated"]
    em = kind is SchemeKind.CLASSIC_EM
    if em:
        header.append("nonfinite")
    many = args.paths > 1
    if many:
        header.insert(0, "path")
    times = res.times
    rows = []
    with np.errstate(all="ignore"):
        post = np.linalg.norm(res.states, axis=-1)
    for p in range(args.paths):
        for i, t in enumerate(times):
            row = [t, *res.states[p, i], res.pre_norms[p, i], post[p, i],
                   str(int(res.truncated[p, i]))]
            if em:
                row.append(str(int(res.nonfinite[p, i])))
            if many:
                row.insert(0, str(p))
            rows.append(row)
    out = Path(args.out)
    if not out.is_absolute():
        out = out_dir / out
    write_csv(out, header, rows)
    diverged = int(res.nonfinite.any(axis=1).sum())
    _write_report(out_dir / "report.txt", args, [
        ("model", entry.name), ("scheme", kind.value), ("dt", _fmt(grid.dt)),
        ("steps", grid.horizon_steps), ("truncation_bound", _fmt(res.bound)),
        ("truncated_steps", int(res.truncated.sum())), ("diverged_paths", diverged),
        ("output", out.name),
    ])
    print(f"wrote {out} ({args.paths} path(s), {grid.horizon_steps} steps, "
          f"{diverged} diverged)")
    return 0


def cmd_converge(args) -> int:
    _check_common(args)
    entry, profile = _entry_and_profile(args)
    model = entry.model
    if args.p_bar is None:
        args.p_bar = entry.constants.get("p_bar", 2.0)
    if args.samples < 2:
        raise ConfigError("--samples must be >= 2 to estimate standard errors")
    if not args.n_list:
        raise ConfigError("--n-list is empty")
    for n in args.n_list + [args.ref_n]:
        if n < 1 or model.delay / n > 1:
            raise ConfigError(f"n={n} gives dt = tau/n outside (0, 1]")
    for n in args.n_list:
        if args.ref_n % n:
            raise ConfigError(f"n={n} does not divide --ref-n {args.ref_n}")
    dts = [model.delay / n for n in args.n_list]
    kind = SchemeKind.STABILITY_TEM if profile.kind is ProfileKind.STABILITY else SchemeKind.GENERIC_TEM
    out_dir = _out_dir(args)

    def log(msg):
        print(msg, file=sys.stderr)

    rep = strong_error_study(model, profile, args.T, args.p_bar, dts, args.ref_n,
                             args.samples, args.seed, kind, args.batch_size, args.threads, log)
    write_csv(out_dir / "converge.csv", ["dt", "samples", "error", "stderr"],
              [(r.dt, str(r.sample_count), r.error, r.stderr) for r in rep.rows])
    _write_report(out_dir / "report.txt", args, [
        ("model", entry.name), ("profile", profile.label), ("ref_dt", _fmt(rep.ref_dt)),
        ("p_bar", _fmt(rep.order_p)), ("T", _fmt(rep.T)),
        ("fitted_slope", _fmt(rep.fitted_slope)),
        ("slope_ci_halfwidth", _fmt(rep.slope_ci_halfwidth)),
        ("intercept", _fmt(rep.intercept)),
        ("expected_slope", _fmt(rep.order_p / 2.0)),
    ])
    print(f"fitted slope {rep.fitted_slope:.4f} +/- {rep.slope_ci_halfwidth:.4f}")
    return 0


def cmd_stability(args) -> int:
    _check_common(args)
    entry, profile = _entry_and_profile(args)
    model = entry.model
    if profile.kind is not ProfileKind.STABILITY:
        raise ConfigError("the stability command needs a stability profile")
    for name in ("k6bar", "k6", "k7bar", "k7", "epsilon"):
        if getattr(args, name) is None:
            if name not in entry.constants:
                raise ConfigError(f"--{name} is required for model {entry.name}")
            setattr(args, name, entry.constants[name])
    if args.gamma is None and "gamma" in entry.constants:
        args.gamma = entry.constants["gamma"]
    if args.fit_window is None:
        args.fit_window = (model.delay, args.T)
    if args.samples < 2 or args.as_samples < 1:
        raise ConfigError("--samples must be >= 2 and --as-samples >= 1")
    grid = make_grid(model.delay, args.n, args.T)
    lo, hi = args.fit_window
    if not 0 <= lo < hi <= grid.horizon + 1e-12:
        raise ConfigError(f"--fit-window {lo},{hi} must lie inside [0, T]")
    out_dir = _out_dir(args)
    rep = stability_study(model, profile, grid.dt, args.T, args.samples, args.as_samples,
                          args.seed, args.k6bar, args.k6, args.k7bar, args.k7, args.epsilon,
                          args.gamma, args.fit_window, args.batch_size, args.threads)
    ms = rep.ms
    write_csv(out_dir / "stability_ms.csv", ["t", "mean_square", "stderr"],
              zip(ms.times, ms.mean_square, ms.stderr))
    write_csv(out_dir / "stability_as.csv", ["path", "exponent"],
              [(str(i), v) for i, v in enumerate(rep.as_exponents)])
    _write_report(out_dir / "report.txt", args, [
        ("model", entry.name), ("profile", profile.label), ("dt", _fmt(grid.dt)),
        ("gamma_star", _fmt(rep.gamma_theoretical)), ("gamma_used", _fmt(rep.gamma_used)),
        ("epsilon", _fmt(rep.epsilon)), ("dt_bar", _fmt(rep.dt_bar)),
        ("dt_within_dt_bar", grid.dt <= rep.dt_bar),
        ("decay_bound", _fmt(rep.decay_bound)), ("ms_slope", _fmt(rep.ms_slope)),
        ("ms_extinct", ms.extinct),
        ("as_bound", _fmt(rep.as_bound)), ("as_max", _fmt(rep.as_max)),
        ("as_pass_fraction", _fmt(rep.as_pass_fraction())),
    ])
    if grid.dt > rep.dt_bar:
        print(f"warning: dt={grid.dt:g} exceeds dt_bar={rep.dt_bar:g}", file=sys.stderr)
    print(f"ms slope {rep.ms_slope:.4f} (bound {rep.decay_bound:.4f}); "
          f"a.s. exponents <= {rep.as_bound:.4f}: {rep.as_pass_fraction():.0%}")
    return 0


def cmd_gamma(args) -> int:
    g_star = gamma_solve(args.k6bar, args.k6, args.k7bar, args.k7, args.tau)
    gamma = math.floor(g_star * 100) / 100 if args.gamma is None else args.gamma
    print(f"gamma_star = {g_star:.9f}")
    for label, g in (("gamma_star", g_star), ("gamma", gamma)):
        c6, c7 = feasibility_checks(g, args.k6, args.k7, args.tau)
        ok = c6 <= args.k6bar and c7 <= args.k7bar
        print(f"{label} = {g:.6g}: K6*exp(gamma*tau)+gamma = {c6:.4f} (K6bar {args.k6bar:g}), "
              f"K7*exp(gamma*tau) = {c7:.4f} (K7bar {args.k7bar:g}) -> "
              f"{'feasible' if ok else 'infeasible'}")
    if args.epsilon is not None:
        if args.khat is None or args.mu is None:
            raise ConfigError("--epsilon needs --khat and --mu to compute dt_bar")
        dt_bar = max_stable_stepsize(gamma, args.epsilon, args.k6, args.khat, args.mu, args.tau)
        print(f"dt_bar = {dt_bar:.9g} (log2 = {math.log2(dt_bar):.4f})")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "stability": cmd_stability,
    "gamma": cmd_gamma,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except BlowUpError as exc:
        print(f"error: blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (SddeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
