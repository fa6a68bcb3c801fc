"""End-to-end acceptance battery.

Each ``criterion_*`` function runs one check at its stated tolerance and
returns a :class:`CriterionResult`; :func:`run_battery` runs a selection.
Used by ``greenldp verify`` and by the test suite.
"""

from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from .cgf import hull_position
from .diagnostics import cutoff_k, cutoff_kappa, ldp_scan, localization_scan
from .green import GreenQuery, TargetSet, green_full, green_truncated
from .model import JumpDistribution, WalkModel, nearest_neighbor
from .montecarlo import SamplerConfig, mc_green, mc_hitting
from .oracles import (
    dense_truncated_green,
    nn1d_green,
    nn1d_legendre,
    nn1d_quasipotential,
    nn1d_tilt_root,
)
from .quasipotential import identity_suite, quasipotential_inf_t, quasipotential_support

__all__ = ["CriterionResult", "CRITERIA", "run_battery", "random_model", "WALK_1D", "WALK_2D"]

P1 = 0.7
WALK_1D = nearest_neighbor([P1, 1.0 - P1])
WALK_2D = nearest_neighbor([0.4, 0.3, 0.2, 0.1])


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f} s)"


def random_model(rng: np.random.Generator, d: int, min_drift: float = 0.05) -> WalkModel:
    """Random drifted kernel with 0 inside the full-dimensional hull of its support.

    Support sizes are 2..6 in d = 1 and 3..6 in d = 2, coordinates in -3..3,
    probabilities Dirichlet(1).
    """
    while True:
        k = int(rng.integers(2 if d == 1 else 3, 7))
        pts = set()
        while len(pts) < k:
            pts.add(tuple(int(x) for x in rng.integers(-3, 4, size=d)))
        support = sorted(pts)
        steps = np.array(support, dtype=float)
        full = np.linalg.matrix_rank(steps - steps.mean(axis=0)) == d
        if not full or hull_position(steps, np.zeros(d)) != "interior":
            continue
        probs = rng.dirichlet(np.ones(k))
        probs = probs / math.fsum(probs)
        kernel = JumpDistribution(tuple(support), tuple(float(x) for x in probs))
        if np.linalg.norm(kernel.mean) >= min_drift:
            return WalkModel(d, kernel)


def _timed(number, name, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)


# -- criteria --------------------------------------------------------------------


def criterion_1(seed: int = 0, count: int = 200) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        t0 = time.perf_counter()
        worst = 0.0
        for i in range(count):
            d = 1 + i % 2
            m = random_model(rng, d)
            q = rng.uniform(-2, 2, d)
            qp = q + rng.uniform(-2, 2, d)
            a = quasipotential_support(m, q, qp).value
            b = quasipotential_inf_t(m, q, qp).value
            worst = max(worst, abs(a - b) / max(1.0, a))
        elapsed = time.perf_counter() - t0
        ok = worst <= 1e-7 and elapsed < 30.0
        return ok, f"{count} models, max rel diff {worst:.2e} (<= 1e-7), {elapsed:.1f} s (< 30 s)"

    return _timed(1, "quasipotential cross-method agreement", run)


def criterion_2() -> CriterionResult:
    def run():
        target = nn1d_quasipotential(P1, -1.0)
        errs = []
        for fn in (quasipotential_support, quasipotential_inf_t):
            errs.append(abs(fn(WALK_1D, 0.0, -1.0).value - target))
            errs.append(abs(fn(WALK_1D, 0.0, 1.0).value))
        closed = abs(target - math.log(7.0 / 3.0))
        worst = max(errs + [closed])
        return worst <= 1e-9, f"I(0,-1) vs log(7/3) and I(0,1) vs 0, max err {worst:.2e} (<= 1e-9)"

    return _timed(2, "1-D closed-form quasipotential", run)


def criterion_3() -> CriterionResult:
    def run():
        t0 = time.perf_counter()
        worst1 = 0.0
        for y in range(16):
            g = green_full(WALK_1D, (0,), TargetSet((-y,), 0.5, 1)).value
            worst1 = max(worst1, abs(g / nn1d_green(P1, -y) - 1.0))
        R = 30.0
        worst2 = 0.0
        for center, radius in [((0, 0), 0.5), ((-3, 2), 2.5), ((5, -7), 4.0), ((-12, -12), 6.0)]:
            tgt = TargetSet(center, radius, 1)
            it = green_truncated(WALK_2D, GreenQuery((0, 0), tgt, R)).value
            ref = dense_truncated_green(WALK_2D, (0, 0), tgt.points(), R)
            worst2 = max(worst2, abs(it / ref - 1.0))
        elapsed = time.perf_counter() - t0
        ok = worst1 <= 1e-6 and worst2 <= 1e-9 and elapsed < 60.0
        return ok, (f"1-D geometric oracle rel err {worst1:.2e} (<= 1e-6); 2-D dense solve on "
                    f"61x61 box rel err {worst2:.2e} (<= 1e-9); {elapsed:.1f} s (< 60 s)")

    return _timed(3, "Green-function oracles", run)


def criterion_4() -> CriterionResult:
    def run():
        t0 = time.perf_counter()
        s1 = ldp_scan(WALK_1D, 0.0, -1.0, 0.25, range(4, 84, 4))
        expect = 0.75 * math.log(7.0 / 3.0)
        e1 = abs(s1.slope_fit - expect) / expect
        s2 = ldp_scan(WALK_2D, (0.0, 0.0), (-0.5, -0.5), 0.25, range(12, 44, 4))
        e2 = s2.relative_error
        elapsed = time.perf_counter() - t0
        ok = e1 <= 0.05 and e2 <= 0.10 and elapsed < 600.0
        return ok, (f"1-D slope {s1.slope_fit:.5f} vs {expect:.5f} rel {e1:.3f} (<= 0.05); "
                    f"2-D slope {s2.slope_fit:.5f} vs {s2.predicted:.5f} rel {e2:.3f} (<= 0.10); "
                    f"{elapsed:.0f} s (< 600 s)")

    return _timed(4, "LDP scan slopes", run)


LOCALIZATION_CASES = (
    (WALK_1D, 0.0, (-1.0,), 0.25, 1.0, (1.5, 2.0, 3.0, 4.0)),
    (WALK_1D, 0.0, (-1.0,), 0.25, 2.0, (1.5, 2.0, 3.0, 4.0, 6.0)),
    (WALK_2D, (0.0, 0.0), (-0.5, -0.5), 0.25, 0.5, (1.0, 1.5, 2.0)),
)


def criterion_5(n: int = 20) -> CriterionResult:
    def run():
        parts, ok = [], True
        for model, q0, qp, delta, A, grid in LOCALIZATION_CASES:
            rep = localization_scan(model, q0, TargetSet(qp, delta), A, grid, n, slack=0.9)
            good = rep.smallest_R is not None and rep.monotone
            ok &= good
            parts.append(f"d={model.dim} A={A}: R={rep.smallest_R} monotone={rep.monotone}")
        return ok, "; ".join(parts)

    return _timed(5, "localization radius", run)


def criterion_6() -> CriterionResult:
    def run():
        A, q, qp, T, vr = 1.0, 0.0, -1.0, 1.0, 1.25
        short = cutoff_kappa(WALK_1D, A, q, qp, n_grid=(20, 40))
        long = cutoff_k(WALK_1D, A, T, q, vr, V=((qp,), 0.25), n_grid=(20, 40))
        # independent arithmetic
        c = 2 * A / abs(qp - q)
        mc = max(1.0, P1 * math.exp(c) + (1 - P1) * math.exp(-c))
        rate0 = nn1d_legendre(P1, 0.0)
        mean = 2 * P1 - 1
        d0 = next(2.0**-k for k in range(61)
                  if nn1d_legendre(P1, min(2.0**-k / T, mean)) >= rate0 / 2)
        K = max((abs(q) + vr + 1) / d0, 2 * A * T / (T * rate0))
        formulas = (short.c == c and abs(short.M_c / mc - 1) <= 1e-14
                    and short.kappa == A / (2 * math.log(short.M_c))
                    and abs(short.kappa / (A / (2 * math.log(mc))) - 1) <= 1e-14
                    and long.delta0 == d0 and abs(long.K / K - 1) <= 1e-12)
        ok = formulas and short.short_ok and long.long_ok
        return ok, (f"kappa={short.kappa:.6f} K={long.K:g} delta0={long.delta0:g} formulas "
                    f"{'match' if formulas else 'differ'}; short {short.empirical_short:.3f}, "
                    f"long {long.empirical_long:.3f} (<= {-0.9 * A})")

    return _timed(6, "short/long-time cutoffs", run)


def criterion_7(samples: int = 1000, seed: int = 0, threads: int = 1) -> CriterionResult:
    def run():
        worst, names = 0.0, []
        for model in (WALK_1D, WALK_2D):
            rep = identity_suite(model, samples, seed, threads)
            worst = max([worst] + list(rep.max_violation.values()))
            names = list(rep.max_violation)
        return worst < 1e-7, f"{samples} samples x {len(names)} identities x 2 models, max violation {worst:.2e} (< 1e-7)"

    return _timed(7, "rate-function identities", run)


def criterion_8(seed: int = 0, instances: int = 30) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        good = 0
        for i in range(instances):
            d = 1 + i % 2
            m = random_model(rng, d, min_drift=0.2)
            y = tuple(int(x) for x in rng.integers(-3, 4, size=d))
            # small ball targets; single points of a sparse 2-D lattice are
            # often never landed on by 4000 tilted paths
            tgt = TargetSet(y, 1.5, 1)
            exact = green_full(m, (0,) * d, tgt).value
            tilt = quasipotential_support(m, np.zeros(d), np.array(y, float)).a_star
            est = mc_green(m, (0,) * d, tgt, SamplerConfig(1000 + i, 4000, None, tuple(tilt)))
            if abs(est.mean - exact) <= 4.0 * est.std_error:
                good += 1
        tgt = TargetSet((-30,), 0.5, 1)
        far = mc_green(WALK_1D, (0,), tgt, SamplerConfig(seed, 100_000, 200, (nn1d_tilt_root(P1),)))
        exact = nn1d_green(P1, -30)
        # a naive path visits -30 with probability (3/7)^30, so the expected
        # number of nonzero naive samples is tiny
        naive_hits = 100_000 * (3 / 7) ** 30
        ok = good >= 28 and far.rel_error < 0.2
        return ok, (f"{good}/{instances} within 4 SE (>= 28); target -30: {far.mean:.4e} vs "
                    f"{exact:.4e}, rel SE {far.rel_error:.2e} (< 0.2); naive expected hits {naive_hits:.1e}")

    return _timed(8, "Monte Carlo estimator", run)


def criterion_9(seed: int = 0) -> CriterionResult:
    def run():
        ok_count, worst = 0, 0.0
        targets = [-1, -2, -3, -4, -5, 1, 2, 3, 4, 5]
        for i, zp in enumerate(targets):
            tilt = (nn1d_tilt_root(P1),) if zp < 0 else None
            rep = mc_hitting(WALK_1D, (0,), (zp,), SamplerConfig(seed + i, 10_000, 400, tilt))
            ok_count += rep.satisfied
            worst = max(worst, rep.ratio)
        return ok_count == len(targets), f"{ok_count}/{len(targets)} respect exp(-theta|z'-z|), max log ratio {worst:.3f}"

    return _timed(9, "communication certificate", run)


def criterion_10(seed: int = 7) -> CriterionResult:
    from .cli import run as cli_run
    from .model import serialize_model

    def run():
        with tempfile.TemporaryDirectory() as tmp:
            cfg = os.path.join(tmp, "walk.toml")
            with open(cfg, "w") as fh:
                fh.write(serialize_model(WALK_1D))
            outputs = []
            for k, threads in enumerate((1, 1, 2, 4)):
                out = os.path.join(tmp, f"scan{k}.csv")
                code = cli_run(["scan", "--model", cfg, "--q", "0", "--q-prime", "-1",
                                "--delta", "0.25", "--n-grid", "8,12,16", "--backend", "mc",
                                "--paths", "8192", "--seed", str(seed), "--threads", str(threads),
                                "--output", out])
                if code != 0:
                    return False, f"scan exited with {code}"
                with open(out, "rb") as fh:
                    outputs.append(fh.read())
        same = all(o == outputs[0] for o in outputs)
        return same, f"4 runs (threads 1,1,2,4) {'byte-identical' if same else 'differ'}"

    return _timed(10, "determinism", run)


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
}


def run_battery(numbers=None, log=None) -> list[CriterionResult]:
    """Run the selected criteria (default all), calling ``log(line)`` after each."""
    out = []
    for k in numbers or sorted(CRITERIA):
        res = CRITERIA[k]()
        out.append(res)
        if log is not None:
            log(res.line())
    return out
