"""Command-line entry point: ``pmed <verb> [options]``.

Exit codes: 0 success, 1 validation or hypothesis failure, 2 runtime or IO
failure. ``PMED_THREADS`` caps the BLAS/OpenMP thread pools.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from contextlib import nullcontext
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path

from . import __version__
from .errors import PmedError, ValidationError

log = logging.getLogger("pmed")

VERBS = ("simulate", "ks", "classify", "wasserstein", "barenblatt", "diagnose", "convergence")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# --- helpers --------------------------------------------------------------------


def exact_interval(text: str):
    """Closed interval of reals a command-line number stands for.

    ``"5/3"`` and ``"inf"`` are exact; a decimal such as ``"1.6667"`` covers
    half a unit in its last printed digit on either side.
    """
    text = text.strip()
    if text.lower() in ("inf", "infinity"):
        return math.inf, math.inf
    if "/" in text:
        try:
            v = Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"cannot parse {text!r} as a rational") from exc
        return v, v
    try:
        dec = Decimal(text)
    except InvalidOperation as exc:
        raise ValidationError(f"cannot parse {text!r} as a number") from exc
    if not dec.is_finite():
        raise ValidationError(f"cannot parse {text!r} as a number")
    v = Fraction(dec)
    if "e" in text.lower():
        return v, v
    half = Fraction(1, 2) * Fraction(10) ** dec.as_tuple().exponent
    return v - half, v + half


def _inv_interval(lo, hi):
    def inv(x):
        return Fraction(0) if x == math.inf else 1 / Fraction(x)

    return inv(hi), inv(lo)


def classify_with_intervals(m, q, d, q1_text, q2_text, target="V", tol=None, exact=False):
    """Classifier verdict where ``q1``, ``q2`` are read as decimal intervals.

    The pair is scaling invariant when the scaling line meets the box of
    values consistent with the printed digits; otherwise the exact-value
    classifier decides.
    """
    from . import defaults
    from .functionals import ScalingQuery, classify_scaling

    tol = defaults.CLASSIFIER_TOL if tol is None else tol
    i1 = exact_interval(q1_text)
    i2 = exact_interval(q2_text)
    mid = [float(sum(i) / 2) if i[0] != math.inf else math.inf for i in (i1, i2)]
    report = classify_scaling(ScalingQuery(m, q, d, mid[0], mid[1], target), tol)
    a1, b1 = _inv_interval(*i1)
    a2, b2 = _inv_interval(*i2)
    coef = Fraction(2) + Fraction(d) * (Fraction(m) - 1) / Fraction(q)
    lo = d * a1 + coef * a2
    hi = d * b1 + coef * b2
    if not exact and float(lo) - tol <= report.rhs <= float(hi) + tol:
        verdict = "scaling_invariant"
    else:
        verdict = report.verdict
    return verdict, report


def _threads():
    raw = os.environ.get("PMED_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ValidationError(f"PMED_THREADS must be a positive integer, got {raw!r}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _load_config(path):
    from .config import parse_config

    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PmedError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text)


def _snap_name(prefix, i, t):
    return f"{prefix}_{i:04d}.snap"


def _echo(cfg):
    from .config import serialize_config

    return serialize_config(cfg)


# --- verbs ------------------------------------------------------------------------


def cmd_simulate(args):
    from .config import build_drift, build_initial
    from .ledger import write_diagnostics
    from .snapshot import write_snapshot
    from .splitting import split_solve

    cfg = _load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rho0 = build_initial(cfg)
    V = build_drift(cfg)
    traj = split_solve(rho0, V, cfg.splitting())
    echo = _echo(cfg) + f"transport = {cfg.transport_mode}\n"
    write_diagnostics(traj.ledger, out / "ledger.csv", echo)
    for i, f in enumerate(traj.fields):
        write_snapshot(f, out / _snap_name("rho", i, f.time))
    print(f"wrote {len(traj.fields)} snapshots and ledger.csv to {out}")
    return 0


def cmd_ks(args):
    from .config import build_initial
    from .keller_segel import SIGN_NOTE, ks_solve
    from .ledger import write_diagnostics
    from .snapshot import write_snapshot

    cfg = _load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rho0 = build_initial(cfg)
    traj = ks_solve(rho0, None, cfg.m, cfg.T, cfg.n, cfg.splitting())
    echo = _echo(cfg) + f"sign = {SIGN_NOTE}\n"
    write_diagnostics(traj.ledger, out / "free_energy.csv", echo)
    for i, s in enumerate(traj.states):
        write_snapshot(s.rho, out / _snap_name("rho", i, s.time))
        write_snapshot(s.c, out / _snap_name("c", i, s.time))
    print(f"wrote {len(traj.states)} state pairs and free_energy.csv to {out}")
    return 0


def cmd_classify(args):
    verdict, report = classify_with_intervals(args.m, args.q, args.d, args.q1, args.q2, args.target, exact=args.exact)
    print(verdict)
    if args.details:
        print(f"q_md = {report.q_md:.17g}")
        print(f"lhs = {report.lhs:.17g}")
        print(f"rhs = {report.rhs:.17g}")
        print(f"lambda_q = {report.lambda_q:.17g}")
    return 0


def cmd_wasserstein(args):
    from .snapshot import read_snapshot
    from .wasserstein import DiscreteMeasure, wasserstein_1d, wasserstein_auto, wasserstein_discrete

    a, b = read_snapshot(args.a), read_snapshot(args.b)
    mu, nu = DiscreteMeasure.from_field(a), DiscreteMeasure.from_field(b)
    if args.method == "auto":
        value = wasserstein_auto(a, b, args.p)
    elif args.method == "exact" and mu.dim == 1:
        value = wasserstein_1d(mu, nu, args.p)
    else:
        value = wasserstein_discrete(mu, nu, args.p, args.method)
    print(f"{value:.17g}")
    return 0


def cmd_barenblatt(args):
    from .functionals import mass
    from .grid import box_grid
    from .pme import barenblatt, barenblatt_constant, barenblatt_radius
    from .snapshot import write_snapshot

    if args.t <= 0:
        raise ValidationError(f"requires t > 0, got t={args.t}")
    if args.m <= 1:
        raise ValidationError(f"requires m > 1, got m={args.m}")
    if args.mass <= 0:
        raise ValidationError(f"requires mass > 0, got mass={args.mass}")
    half = args.half_width
    if half is None:
        R = barenblatt_radius(args.d, args.m, args.t, barenblatt_constant(args.d, args.m, args.mass))
        half = 1.5 * R
    grid = box_grid(args.d, args.cells, half)
    f = barenblatt(args.d, args.m, args.t, args.mass, grid=grid)
    write_snapshot(f, args.out)
    print(f"mass = {mass(f):.17g}")
    return 0


def cmd_diagnose(args):
    from .functionals import diagnostics_record
    from .grid import DensityField
    from .snapshot import read_snapshot

    f = read_snapshot(args.snapshot)
    if not isinstance(f, DensityField):
        raise ValidationError(f"{args.snapshot} holds a scalar field, not a density")
    if args.m <= 1:
        raise ValidationError(f"requires m > 1, got m={args.m}")
    rec = diagnostics_record(f, args.m, args.q, args.p)
    for col in rec.COLUMNS:
        print(f"{col} = {getattr(rec, col):.17g}")
    return 0


def cmd_convergence(args):
    from .config import build_drift, build_initial
    from .splitting import convergence_study

    cfg = _load_config(args.config)
    try:
        n_list = [int(x) for x in args.n_list.split(",")]
    except ValueError as exc:
        raise ValidationError(f"--n-list must be comma-separated integers, got {args.n_list!r}") from exc
    table = convergence_study(build_initial(cfg), build_drift(cfg), cfg.splitting(), n_list, with_w2=not args.no_w2)
    print("n,l1_error,w2_error")
    for i, n in enumerate(table.n_list):
        w2 = table.w2_errors[i] if table.w2_errors else math.nan
        print(f"{n},{table.l1_errors[i]:.17g},{w2:.17g}")
    print(f"# reference n = {table.reference_n}")
    print(f"# fitted order = {table.fitted_order:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pmed", description="Porous medium equation with drift: splitting solver and diagnostics.")
    parser.add_argument("--version", action="version", version=f"pmed {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", metavar="verb", parser_class=_Parser)

    p = sub.add_parser("simulate", help="run the splitting scheme from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: output_dir from the config)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ks", help="run the repulsive Keller-Segel system from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ks)

    p = sub.add_parser("classify", help="scaling class of a drift integrability pair")
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--q1", required=True, help="decimal, fraction like 5/3, or inf")
    p.add_argument("--q2", required=True, help="decimal, fraction like 5/3, or inf")
    p.add_argument("--target", choices=("V", "gradV"), default="V")
    p.add_argument("--details", action="store_true", help="also print q_md, lhs, rhs and lambda_q")
    p.add_argument("--exact", action="store_true", help="read decimals as exact values, not as rounded ones")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("wasserstein", help="W_p distance between two snapshots")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--method", choices=("auto", "exact", "entropic"), default="auto")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_wasserstein)

    p = sub.add_parser("barenblatt", help="write a Barenblatt profile snapshot")
    p.add_argument("--d", type=int, required=True, choices=(1, 2))
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--cells", type=int, default=128)
    p.add_argument("--half-width", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_barenblatt)

    p = sub.add_parser("diagnose", help="print the functionals of a density snapshot")
    p.add_argument("snapshot")
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--q", type=float, default=2.0)
    p.add_argument("--p", type=float, default=2.0)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("convergence", help="splitting self-convergence study")
    p.add_argument("--config", required=True)
    p.add_argument("--n-list", default="4,8,16,32,64")
    p.add_argument("--no-w2", action="store_true", help="skip the W2 column")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if not argv or (argv[0] not in VERBS and not argv[0].startswith("-")):
        if argv:
            sys.stderr.write(f"pmed: unknown verb {argv[0]!r}\n")
        sys.stderr.write(parser.format_usage())
        return 1
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.verb is None:
        sys.stderr.write(parser.format_usage())
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _threads():
            return args.func(args)
    except (ValidationError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (PmedError, OSError, RuntimeError, FloatingPointError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
