"""Command-line entry point: ``greenldp <subcommand> --model walk.toml [options]``.

Data goes to ``--output`` (default stdout), diagnostics to stderr.  Exit
codes: 0 success, 1 invalid input, 2 a computation failed to converge or a
verification tolerance was breached.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

import numpy as np

from .cgf import CGFOverflowError, legendre, phi
from .green import GreenQuery, MemoryCapError, TargetSet, green_full, green_truncated, write_profile
from .model import ModelError, load_model_file
from .quasipotential import QuasipotentialError, identity_suite, quasipotential, rate_finite_t

__all__ = ["run", "main", "build_parser"]

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")], dtype=float)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated decimals, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _fmt(x) -> str:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return ",".join(repr(float(v)) for v in x)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="greenldp", description="Quasipotentials and Green's functions of lattice walks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help):
        s = sub.add_parser(name, help=help)
        s.add_argument("--model", required=True, help="TOML model file")
        s.add_argument("--output", help="output file (default stdout)")
        s.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        return s

    s = cmd("phi", "jump generating function and its log-derivatives")
    s.add_argument("--a", type=_vector, required=True)

    s = cmd("rate", "Legendre transform, or finite-horizon rate with --T")
    s.add_argument("--v", type=_vector)
    s.add_argument("--T", type=float)
    s.add_argument("--q", type=_vector)
    s.add_argument("--q-prime", type=_vector)

    s = cmd("qpot", "quasipotential I(q, q')")
    s.add_argument("--q", type=_vector, required=True)
    s.add_argument("--q-prime", type=_vector, required=True)
    s.add_argument("--method", choices=("support", "inf_t"), default="support")

    s = cmd("green", "Green's function G(z, nB(q', delta)) from the lattice point z = --q")
    s.add_argument("--q", type=_ints, required=True, help="source lattice point")
    s.add_argument("--q-prime", type=_vector, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--R", type=float, help="killing radius (default: R -> infinity)")
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--profile", help="write the per-time occupancy profile here")

    s = cmd("scan", "LDP scan over n, CSV output")
    s.add_argument("--q", type=_vector, required=True)
    s.add_argument("--q-prime", type=_vector, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--n-grid", type=_ints, required=True)
    s.add_argument("--backend", choices=("auto", "exact", "mc"), default="auto")
    s.add_argument("--paths", type=int, default=20000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-9)

    s = cmd("mc", "importance-sampling Green or hitting estimate from the lattice point --q")
    s.add_argument("--q", type=_ints, required=True)
    s.add_argument("--q-prime", type=_vector, required=True)
    s.add_argument("--delta", type=float, default=0.5)
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--paths", type=int, default=100000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--horizon", type=int)
    s.add_argument("--tilt", type=_vector, help="tilt vector (default: quasipotential maximizer)")
    s.add_argument("--hitting", action="store_true", help="estimate the hitting probability of --q-prime")

    s = cmd("cutoffs", "short- and long-time cutoffs kappa and K")
    s.add_argument("--A", type=float, required=True)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--q", type=_vector, required=True)
    s.add_argument("--q-prime", type=_vector, required=True)
    s.add_argument("--delta", type=float)
    s.add_argument("--n-grid", type=_ints, default=[20, 40])

    s = cmd("verify", "identity suite on the model plus the acceptance battery")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--criteria", type=_ints, help="acceptance criteria to run (default all; 0 for none)")
    return p


# -- subcommands -------------------------------------------------------------------


def _cmd_phi(model, args, out):
    ev = phi(model, args.a)
    print(f"phi {ev.phi!r}", file=out)
    print(f"lambda {ev.lam!r}", file=out)
    print(f"grad {_fmt(ev.grad)}", file=out)
    return EXIT_OK


def _cmd_rate(model, args, out):
    if args.T is not None:
        if args.q is None or args.q_prime is None:
            raise ValueError("--T needs --q and --q-prime")
        r = rate_finite_t(model, args.T, args.q, args.q_prime)
        print(f"value {r.value!r}", file=out)
        print(f"a {_fmt(r.a)}", file=out)
        return EXIT_OK
    if args.v is None:
        raise ValueError("rate needs --v, or --T with --q and --q-prime")
    r = legendre(model, args.v)
    print(f"value {r.value!r}", file=out)
    print(f"argmax {_fmt(r.argmax)}", file=out)
    print(f"position {r.position}", file=out)
    if not r.converged and r.position != "outside":
        print("warning: supremum not attained (hull boundary)", file=sys.stderr)
    return EXIT_OK


def _cmd_qpot(model, args, out):
    r = quasipotential(model, args.q, args.q_prime, method=args.method)
    print(f"value {r.value!r}", file=out)
    print(f"a_star {_fmt(r.a_star)}", file=out)
    print(f"t_star {r.t_star!r}", file=out)
    return EXIT_OK if r.converged else EXIT_NONCONVERGED


def _cmd_green(model, args, out):
    target = TargetSet(tuple(args.q_prime), args.delta, args.n)
    if args.R is not None:
        res = green_truncated(model, GreenQuery(tuple(args.q), target, args.R))
    else:
        res = green_full(model, tuple(args.q), target, args.tol)
    print(f"value {res.value!r}", file=out)
    print(f"radius {res.radius!r}", file=out)
    print(f"steps {res.steps}", file=out)
    print(f"tail_bound {res.horizon_tail_bound!r}", file=out)
    if args.profile:
        write_profile(args.profile, res.visits_profile)
    if res.horizon_reached:
        print("warning: step cap reached before the tail bound met tolerance", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_scan(model, args, out):
    from .diagnostics import ldp_scan

    s = ldp_scan(model, args.q, args.q_prime, args.delta, args.n_grid, args.tol,
                 backend=args.backend, mc_paths=args.paths, seed=args.seed, threads=args.threads)
    out.write(s.to_csv())
    print(f"slope_fit {s.slope_fit!r} +- {s.fit_stderr!r}; predicted {s.predicted!r}", file=sys.stderr)
    for n in s.excluded:
        print(f"n={n}: measure is zero, excluded from fit", file=sys.stderr)
    return EXIT_OK


def _cmd_mc(model, args, out):
    from .montecarlo import SamplerConfig, mc_green, mc_hitting
    from .quasipotential import quasipotential_support

    z = np.array(args.q, dtype=float)
    tilt = args.tilt
    if tilt is None:
        tilt = quasipotential_support(model, z / args.n, args.q_prime).a_star
    cfg = SamplerConfig(args.seed, args.paths, args.horizon, tuple(tilt), args.threads)
    if args.hitting:
        zp = tuple(int(round(x)) for x in args.q_prime)
        rep = mc_hitting(model, tuple(args.q), zp, cfg)
        est = rep.estimate
        print(f"theta {rep.theta!r}", file=out)
        print(f"log_bound {rep.log_bound!r}", file=out)
        print(f"satisfied {rep.satisfied}", file=out)
    else:
        est = mc_green(model, tuple(args.q), TargetSet(tuple(args.q_prime), args.delta, args.n), cfg)
    print(f"mean {est.mean!r}", file=out)
    print(f"std_error {est.std_error!r}", file=out)
    print(f"ess {est.ess!r}", file=out)
    return EXIT_OK


def _cmd_cutoffs(model, args, out):
    from .diagnostics import cutoff_k, cutoff_kappa

    short = cutoff_kappa(model, args.A, args.q, args.q_prime, args.delta, args.n_grid)
    delta = short.A / (8 * short.c) if args.delta is None else args.delta
    vr = float(np.linalg.norm(args.q_prime)) + delta
    long = cutoff_k(model, args.A, args.T, args.q, vr, V=(tuple(args.q_prime), delta), n_grid=args.n_grid)
    for name in ("c", "M_c", "kappa", "empirical_short"):
        print(f"{name} {getattr(short, name)!r}", file=out)
    for name in ("delta0", "K", "empirical_long"):
        print(f"{name} {getattr(long, name)!r}", file=out)
    ok = short.short_ok and long.long_ok
    if not ok:
        print(f"empirical partial sums exceed -0.9 A = {-0.9 * args.A!r}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def _cmd_verify(model, args, out):
    from .acceptance import run_battery

    rep = identity_suite(model, args.samples, args.seed, args.threads)
    for line in rep.lines():
        print(line, file=out)
    ok = rep.passed
    numbers = args.criteria
    if numbers != [0]:
        for res in run_battery(numbers, log=lambda line: print(line, file=out, flush=True)):
            ok &= res.passed
    print("verify: " + ("all checks passed" if ok else "FAILED"), file=out)
    return EXIT_OK if ok else EXIT_NONCONVERGED


COMMANDS = {
    "phi": _cmd_phi,
    "rate": _cmd_rate,
    "qpot": _cmd_qpot,
    "green": _cmd_green,
    "scan": _cmd_scan,
    "mc": _cmd_mc,
    "cutoffs": _cmd_cutoffs,
    "verify": _cmd_verify,
}


def run(argv: list[str]) -> int:
    """Parse ``argv`` and dispatch; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"greenldp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.threads < 1:
        print("greenldp: error: --threads must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        model = load_model_file(args.model)
    except (OSError, ModelError) as exc:
        print(f"greenldp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        with contextlib.ExitStack() as stack:
            out = sys.stdout
            if args.output:
                out = stack.enter_context(open(args.output, "w", newline="\n", encoding="utf-8"))
            return COMMANDS[args.command](model, args, out)
    except (QuasipotentialError, MemoryCapError, CGFOverflowError, ArithmeticError) as exc:
        print(f"greenldp: computation did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ValueError, OSError) as exc:
        print(f"greenldp: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
