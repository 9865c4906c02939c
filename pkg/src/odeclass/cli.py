"""Command-line front end: simulate, verify, classify, sweep, demo.

Subcommands
-----------
simulate    integrate one configuration and emit the channel table
verify      run the identity-residual suite, report pass/fail per identity
classify    trichotomy labels per channel with the window-trend surrogate
sweep-theta dump the window functional over a theta grid in long format
demo-chirp  the flagship demonstration: a growing chirp whose solution
            still converges; emits channels, a gnuplot script, and figures

Configuration comes from built-in defaults, overridden by an optional
key=value config file (--config), overridden by command-line flags. All CSV
output is comma-separated with '.' decimals, LF line endings, and floats
printed with 17 significant digits, so identical configurations produce
byte-identical files. Files are written to a temp name and renamed into
place. Exit codes: 0 success, 1 usage or parse problem, 2 a verification or
classification check failed, 3 the integrator aborted on a numerical
problem. ODECLASS_NO_COLOR=1 disables ANSI colors in terminal reports.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
import tempfile

import numpy as np

from .classify import WindowPolicy, chirp_diagnostic, classify
from .forcing import (
    DomainError,
    ForcingError,
    ParseError,
    chirp_forcing,
    constant,
    eval_forcing,
    exp_decay,
    parse_forcing,
    pulse_train,
    ramp,
    random_smooth_forcing,
    reference_pair,
    sinusoid,
    to_text,
)
from .functionals import ThetaGrid, functional_field
from .identities import DEFAULT_TOLERANCES, run_identity_suite
from .linear import IntegrationAbort, integrate
from .system import SystemParams

__all__ = ["RunConfig", "main", "resolve_forcing"]

_FLOAT_FMT = "%.17g"


@dataclasses.dataclass
class RunConfig:
    """One fully resolved run: system, forcing, numerics, outputs."""

    a: float = 3.0
    b: float = 2.0
    xi0: float = 0.0
    xi1: float = 0.0
    forcing: str | None = None
    horizon: float = 20.0
    tol: float = 1e-9
    hmax: float = 0.01
    theta_grid: tuple = (5, 5)
    rho: float = 1.2
    windows: int = 4
    theta_nodes: int = 33
    seed: int = 0
    out: str | None = None
    strict: bool = False
    figures: bool = True

    def validate(self):
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if not self.hmax > 0.0:
            raise ValueError("hmax must be positive")
        n1, n2 = self.theta_grid
        if n1 < 2 or n2 < 2:
            raise ValueError("theta grid needs at least 2 nodes per axis")
        WindowPolicy(windows=self.windows, rho=self.rho)
        return self

    @property
    def params(self):
        return SystemParams(self.a, self.b, self.xi0, self.xi1)

    @property
    def policy(self):
        return WindowPolicy(windows=self.windows, rho=self.rho)

    def theta(self):
        return ThetaGrid.uniform(int(self.theta_grid[0]), int(self.theta_grid[1]))


_BUILTIN_HELP = (
    "builtin forcings: constant[:c=..], expdecay[:rate=..], "
    "sin[:omega=..,amp=..], ramp[:slope=..], pulses, chirp:envelope=<expr>, "
    "reference (the exactly solvable blow-up configuration); anything else "
    "is parsed as a forcing expression"
)


def resolve_forcing(text, horizon=None):
    """Builtin forcing names, else the expression grammar.

    Builtin arguments follow name:key=value[,key=value]; values are numbers
    except the chirp envelope, which is an expression (and must not contain
    a comma). The horizon, when given, bounds the chirp admissibility check.
    """
    name, _, argtext = text.partition(":")
    kwargs = {}
    if argtext:
        for piece in argtext.split(","):
            key, eq, value = piece.partition("=")
            if not eq:
                raise ParseError(f"builtin argument {piece!r} is not key=value", 0)
            kwargs[key.strip()] = value.strip()

    def floats(allowed):
        bad = set(kwargs) - set(allowed)
        if bad:
            raise ParseError(f"unknown argument(s) {sorted(bad)} for {name!r}", 0)
        try:
            return {k: float(v) for k, v in kwargs.items()}
        except ValueError as exc:
            raise ParseError(f"bad numeric argument for {name!r}: {exc}", 0) from None

    if name == "constant":
        return constant(floats({"c"}).get("c", 1.0))
    if name == "expdecay":
        return exp_decay(floats({"rate"}).get("rate", 1.0))
    if name == "sin":
        got = floats({"omega", "amp"})
        return sinusoid(got.get("omega", 1.0), got.get("amp", 1.0))
    if name == "ramp":
        return ramp(**floats({"slope"}))
    if name == "pulses":
        if kwargs:
            raise ParseError("pulses takes no arguments", 0)
        return pulse_train()
    if name == "chirp":
        if set(kwargs) != {"envelope"}:
            raise ParseError("chirp needs exactly envelope=<expr>", 0)
        return chirp_forcing(parse_forcing(kwargs["envelope"]),
                             check_horizon=max(horizon or 30.0, 1.0))
    if name == "reference":
        if kwargs:
            raise ParseError("reference takes no arguments", 0)
        return reference_pair().forcing
    return parse_forcing(text)


# ---------------------------------------------------------------------------
# output plumbing

def _fmt(x):
    return _FLOAT_FMT % float(x)


def _write_atomic(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".odeclass-")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        _write_atomic(path, text)


def _use_color():
    return sys.stdout.isatty() and not os.environ.get("ODECLASS_NO_COLOR")


def _ok(text):
    return f"\x1b[32m{text}\x1b[0m" if _use_color() else text


def _bad(text):
    return f"\x1b[31m{text}\x1b[0m" if _use_color() else text


def _with_suffix(path, suffix):
    stem, ext = os.path.splitext(path)
    return f"{stem}{suffix}{ext or '.csv'}"


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(cfg):
    """Channel table t,x,xprime,y1,y2,Q for one configuration."""
    if cfg.forcing is None:
        raise ValueError("simulate needs --forcing")
    f = resolve_forcing(cfg.forcing, horizon=cfg.horizon)
    traj = integrate(cfg.params, f, cfg.horizon, tol=cfg.tol, h_max=cfg.hmax)
    rows = (
        tuple(_fmt(col[i]) for col in
              (traj.grid, traj.x, traj.xprime, traj.y1, traj.y2, traj.Q))
        for i in range(traj.grid.size)
    )
    _emit_csv(cfg.out, ("t", "x", "xprime", "y1", "y2", "Q"), rows)
    return 0


def _verify_one(cfg, f, tag_prefix, failures, csv_rows):
    traj = integrate(cfg.params, f, cfg.horizon, tol=cfg.tol, h_max=cfg.hmax,
                     dense=True)
    rows = run_identity_suite(traj, n_theta=cfg.theta_nodes)
    print(f"forcing: {to_text(f)}  (a={cfg.a:g}, b={cfg.b:g}, "
          f"xi=({cfg.xi0:g},{cfg.xi1:g}), h={traj.h:g})")
    print(f"  {'identity':15s} {'window':18s} {'max abs':>12s} "
          f"{'max scaled':>12s} {'tol':>9s}  status")
    for r in rows:
        tol = DEFAULT_TOLERANCES[r.tag]
        passed = r.max_scaled <= tol
        if r.asserted and not passed:
            failures.append(f"{tag_prefix}{r.tag}")
        status = (_ok("PASS") if passed else _bad("FAIL"))
        if not r.asserted:
            status += " (informational)"
        window = f"[{r.window[0]:.2f}, {r.window[1]:.2f}]"
        print(f"  {r.tag:15s} {window:18s} {r.max_abs:12.3e} "
              f"{r.max_scaled:12.3e} {tol:9.0e}  {status}")
        csv_rows.append((
            tag_prefix.rstrip("/") or "0", r.tag, _fmt(r.window[0]),
            _fmt(r.window[1]), _fmt(r.grid_h), _fmt(r.max_abs),
            _fmt(r.max_scaled), _fmt(tol), str(int(passed)),
            str(int(r.asserted)),
        ))


def cmd_verify(cfg):
    """Identity-residual suite; exit 2 if any asserted identity fails."""
    failures, csv_rows = [], []
    if cfg.forcing is not None:
        _verify_one(cfg, resolve_forcing(cfg.forcing, horizon=cfg.horizon),
                    "", failures, csv_rows)
    else:
        rng = np.random.default_rng(cfg.seed)
        for index in range(3):
            f = random_smooth_forcing(rng)
            _verify_one(cfg, f, f"{index}/", failures, csv_rows)
    if cfg.out is not None:
        _emit_csv(cfg.out, ("run", "tag", "window_lo", "window_hi", "grid_h",
                            "max_abs", "max_scaled", "tol", "passed",
                            "asserted"), csv_rows)
    if failures:
        print(_bad(f"FAILED: {', '.join(failures)}"))
        return 2
    print(_ok("all asserted identities passed"))
    return 0


def _classification_report(cfg, report):
    print(f"{'channel':8s} {'trend':9s} {'slope':>8s} {'estimate':>13s}  label")
    for tag, est in report.estimates.items():
        estimate = "inf" if math.isinf(est.estimate) else f"{est.estimate:.6g}"
        print(f"{tag:8s} {est.trend:9s} {est.slope:8.3f} {estimate:>13s}"
              f"  {report.labels[tag]}")
    verdict = _ok("agree") if report.agreement else _bad("DISAGREE")
    print(f"agreement over X, Y2, Fsup: {verdict}")
    if cfg.out is not None:
        w = cfg.windows
        header = (("channel", "trend", "slope", "estimate", "label")
                  + tuple(f"m{j + 1}" for j in range(w)))
        rows = [
            (tag, est.trend, _fmt(est.slope), _fmt(est.estimate),
             report.labels[tag]) + tuple(_fmt(m) for m in est.window_maxima)
            for tag, est in report.estimates.items()
        ]
        _emit_csv(cfg.out, header, rows)


def cmd_classify(cfg):
    """Per-channel trichotomy labels; --strict makes disagreement exit 2."""
    if cfg.forcing is None:
        raise ValueError("classify needs --forcing")
    f = resolve_forcing(cfg.forcing, horizon=cfg.horizon)
    traj = integrate(cfg.params, f, cfg.horizon, tol=cfg.tol, h_max=cfg.hmax)
    field = functional_field(traj.series("Q"), cfg.theta(), traj.grid)
    report = classify(traj, field, policy=cfg.policy,
                      config={"forcing": cfg.forcing})
    _classification_report(cfg, report)
    if cfg.strict and not report.agreement:
        return 2
    return 0


def cmd_sweep_theta(cfg):
    """Long-format dump of the window functional and its running sup."""
    if cfg.forcing is None:
        raise ValueError("sweep-theta needs --forcing")
    if cfg.out is None:
        raise ValueError("sweep-theta needs --out (it writes two files)")
    f = resolve_forcing(cfg.forcing, horizon=cfg.horizon)
    traj = integrate(cfg.params, f, cfg.horizon, tol=cfg.tol, h_max=cfg.hmax)
    grid = cfg.theta()
    field = functional_field(traj.series("Q"), grid, traj.grid)

    def field_rows():
        for i, th1 in enumerate(grid.theta1):
            for j, th2 in enumerate(grid.theta2):
                values = field.values[i, j]
                for m in range(field.times.size):
                    yield (_fmt(field.times[m]), _fmt(th1), _fmt(th2),
                           _fmt(values[m]))

    _emit_csv(cfg.out, ("t", "theta1", "theta2", "F"), field_rows())
    sup_path = _with_suffix(cfg.out, ".sup")
    _emit_csv(sup_path, ("t", "supF"),
              ((_fmt(t), _fmt(s)) for t, s in zip(field.times, field.sup)))
    print(f"wrote {cfg.out} and {sup_path}")
    return 0


_GNUPLOT_TEMPLATE = """\
# channel plot for the chirp demonstration
set datafile separator ','
set terminal pngcairo size 1200,800
set output '{png}'
set multiplot layout 2,2 title 'chirp response channels'
set key off
set xlabel 't'
set title 'x'
plot '{csv}' skip 1 using 1:2 with lines
set title "x'"
plot '{csv}' skip 1 using 1:3 with lines
set title 'y1'
plot '{csv}' skip 1 using 1:4 with lines
set title 'y2'
plot '{csv}' skip 1 using 1:5 with lines
unset multiplot
"""


def cmd_demo_chirp(cfg):
    """Chirp demonstration: growing forcing, converging solution."""
    if cfg.out is None:
        raise ValueError("demo-chirp needs --out (it writes several files)")
    envelope = parse_forcing(cfg.forcing if cfg.forcing is not None else "exp(t)")
    report, traj = chirp_diagnostic(envelope, cfg.params, cfg.horizon,
                                    tol=cfg.tol, h_max=cfg.hmax,
                                    policy=cfg.policy, theta_grid=cfg.theta(),
                                    return_trajectory=True)
    _classification_report(dataclasses.replace(cfg, out=None), report)
    if report.config.get("partial"):
        print(_bad(f"integrator stopped early at t="
                   f"{report.config['abort_time']:.3g}; partial results"))
    print(f"max |x'' - f| over the horizon: {report.xsecond_forcing_gap:.6g}")

    fv = eval_forcing(traj.forcing, traj.grid)
    gap = -(cfg.a * traj.xprime + cfg.b * traj.x)
    columns = (traj.grid, traj.x, traj.xprime, traj.y1, traj.y2, fv, gap)
    _emit_csv(cfg.out, ("t", "x", "xprime", "y1", "y2", "f", "xsecond_minus_f"),
              (tuple(_fmt(c[i]) for c in columns)
               for i in range(traj.grid.size)))

    stem = os.path.splitext(cfg.out)[0]
    script_path = stem + ".gp"
    base = os.path.basename(stem)
    _write_atomic(script_path,
                  _GNUPLOT_TEMPLATE.format(csv=os.path.basename(cfg.out),
                                           png=base + ".png"))
    written = [cfg.out, script_path]
    if cfg.figures:
        from .figures import render_chirp_figures

        written.extend(render_chirp_figures(traj, fv, stem))
    print("wrote " + ", ".join(written))
    return 0


# ---------------------------------------------------------------------------
# configuration plumbing

_CONFIG_CASTS = {
    "a": float, "b": float, "xi0": float, "xi1": float, "horizon": float,
    "tol": float, "hmax": float, "rho": float, "windows": int,
    "theta_nodes": int, "seed": int, "forcing": str, "out": str,
}


def _parse_bool(value):
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_theta_grid(value):
    n1, sep, n2 = value.lower().partition("x")
    if not sep:
        raise ValueError("theta grid must look like 5x5")
    return (int(n1), int(n2))


def parse_config_file(path):
    """key=value lines; blank lines and # comments ignored."""
    values = {}
    with open(path) as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not eq:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            if key in _CONFIG_CASTS:
                values[key] = _CONFIG_CASTS[key](value.strip())
            elif key == "strict" or key == "figures":
                values[key] = _parse_bool(value)
            elif key == "theta_grid":
                values[key] = _parse_theta_grid(value.strip())
            else:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
    return values


_DEMO_DEFAULTS = {"a": 5.0, "b": 6.0, "horizon": 10.0, "tol": 1e-8}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="odeclass",
        description="Forced second-order linear systems: simulate, verify "
                    "representation identities, and classify long-run "
                    "behaviour.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("simulate", cmd_simulate, "integrate and dump channels as CSV"),
        ("verify", cmd_verify, "run the identity-residual suite"),
        ("classify", cmd_classify, "trichotomy labels per channel"),
        ("sweep-theta", cmd_sweep_theta, "dump the window functional"),
        ("demo-chirp", cmd_demo_chirp,
         "growing chirp forcing with a converging solution"),
    )
    for name, handler, help_text in specs:
        p = sub.add_parser(name, help=help_text, epilog=_BUILTIN_HELP)
        p.set_defaults(handler=handler)
        p.add_argument("--a", type=float, default=None)
        p.add_argument("--b", type=float, default=None)
        p.add_argument("--xi0", type=float, default=None)
        p.add_argument("--xi1", type=float, default=None)
        p.add_argument("--forcing", default=None,
                       help="forcing expression or builtin; for demo-chirp "
                            "this is the envelope expression (default exp(t))")
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--hmax", type=float, default=None)
        p.add_argument("--theta-grid", default=None, metavar="NxM")
        p.add_argument("--rho", type=float, default=None)
        p.add_argument("--windows", type=int, default=None)
        p.add_argument("--theta-nodes", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--strict", action="store_true", default=None)
        p.add_argument("--no-figures", dest="figures", action="store_false",
                       default=None)
        p.add_argument("--config", default=None,
                       help="key=value file; flags override it")
    return parser


def build_config(args):
    values = dict(_DEMO_DEFAULTS) if args.command == "demo-chirp" else {}
    if args.config is not None:
        values.update(parse_config_file(args.config))
    for field in dataclasses.fields(RunConfig):
        flag = getattr(args, field.name, None)
        if flag is not None:
            values[field.name] = flag
    if "theta_grid" in values and isinstance(values["theta_grid"], str):
        values["theta_grid"] = _parse_theta_grid(values["theta_grid"])
    return RunConfig(**values).validate()


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return args.handler(cfg)
    except ParseError as exc:
        print(f"forcing parse error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"numerical domain error: {exc}", file=sys.stderr)
        return 3
    except IntegrationAbort as exc:
        print(f"integration aborted at t={exc.last_time:.6g}: {exc}",
              file=sys.stderr)
        return 3
    except ForcingError as exc:
        print(f"forcing error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
