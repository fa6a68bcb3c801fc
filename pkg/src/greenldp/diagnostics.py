"""Numerical experiments on the logarithmic decay of scaled Green measures.

* :func:`ldp_scan` compares ``-(1/n) log G(z_n, nB(q', delta))`` with the
  infimum of the quasipotential over the ball;
* :func:`cutoff_kappa` and :func:`cutoff_k` compute the short- and
  long-time cutoffs beyond which the occupancy of ``nB`` is ``e^{-An}``
  small, and check them against exact per-time occupancies;
* :func:`localization_scan` finds the radius ``R`` for which paths leaving
  ``B(0, nR)`` contribute at most ``e^{-An}``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .cgf import legendre, m_c
from .green import (
    DEFAULT_MAX_CELLS,
    MemoryCapError,
    TargetSet,
    GreenQuery,
    green_full,
    green_truncated,
    localization_gap,
)
from .model import WalkModel, drift
from .montecarlo import SamplerConfig, mc_green
from .quasipotential import quasipotential_support

__all__ = [
    "DiagnosticSeries",
    "CutoffReport",
    "LocalizationReport",
    "ldp_scan",
    "ball_infimum",
    "fit_affine_inverse",
    "cutoff_kappa",
    "cutoff_k",
    "localization_scan",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("n", "R", "delta", "log_measure", "predicted", "backend", "std_error")


# -- infimum of the quasipotential over a ball ------------------------------------


def _ball_grid(center, radius, per_axis, closed=True):
    d = len(center)
    axes = [np.linspace(c - radius, c + radius, per_axis) for c in center]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    dist = np.linalg.norm(pts - center, axis=1)
    keep = dist <= radius * (1 + 1e-12) if closed else dist < radius * (1 - 1e-9)
    return pts[keep]


def ball_infimum(model: WalkModel, q0, center, radius, per_axis=None, closed=True):
    """Grid infimum of ``I(q0, .)`` over the ball ``B(center, radius)``.

    A first grid with ``per_axis`` points per axis (513 in d = 1, 65
    otherwise) is followed by one refined grid spanning two coarse spacings
    around the best point.  In d >= 2 the grid point then seeds a constrained
    SLSQP polish, which is kept only if it improves the value; ``I(q0, .)``
    is convex, so the minimizer usually sits on the sphere between grid
    points.  Returns ``(value, argmin)``.
    """
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = model.dim
    per_axis = per_axis or (513 if d == 1 else 65)

    def best_of(pts):
        vals = [quasipotential_support(model, q0, p).value for p in pts]
        i = int(np.argmin(vals))
        return vals[i], pts[i]

    pts = _ball_grid(center, radius, per_axis, closed)
    val, arg = best_of(pts)
    h = 2.0 * radius / (per_axis - 1)
    local = _ball_grid(arg, 2.0 * h, per_axis if d == 1 else 17)
    inside = np.linalg.norm(local - center, axis=1)
    local = local[inside <= radius * (1 + 1e-12) if closed else inside < radius * (1 - 1e-9)]
    if len(local):
        v2, a2 = best_of(local)
        if v2 < val:
            val, arg = v2, a2
    if d >= 2 and val > 0:
        r_eff = radius if closed else radius * (1 - 1e-9)
        res = optimize.minimize(
            lambda x: quasipotential_support(model, q0, x).value,
            arg,
            method="SLSQP",
            constraints=[{"type": "ineq", "fun": lambda x: r_eff**2 - np.sum((x - center) ** 2)}],
            options={"ftol": 1e-12, "maxiter": 200},
        )
        x = np.asarray(res.x, dtype=float)
        if np.linalg.norm(x - center) <= r_eff * (1 + 1e-12):
            v3 = quasipotential_support(model, q0, x).value
            if v3 < val:
                val, arg = v3, x
    return float(val), arg


# -- scan ------------------------------------------------------------------------


def fit_affine_inverse(n_values, y):
    """Least-squares fit ``y ~ alpha + beta / n``; returns ``(alpha, beta, stderr(alpha))``.

    With fewer than three points the standard error is ``inf``; with one
    point ``alpha`` is that value and ``beta = 0``.
    """
    n = np.asarray(n_values, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(n) == 0:
        return math.nan, math.nan, math.inf
    if len(n) == 1:
        return float(y[0]), 0.0, math.inf
    X = np.column_stack([np.ones_like(n), 1.0 / n])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    dof = len(n) - 2
    if dof <= 0:
        return float(coef[0]), float(coef[1]), math.inf
    resid = y - X @ coef
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return float(coef[0]), float(coef[1]), float(math.sqrt(cov[0, 0]))


@dataclass
class DiagnosticSeries:
    """Per-``n`` values of ``-(1/n) log mu_n(B(q', delta))`` and the fitted limit.

    ``slope_fit`` is the intercept ``alpha`` of ``alpha + beta/n``;
    ``predicted`` / ``predicted_open`` are the grid infima of ``I(q0, .)``
    over the closed / open ball.
    """

    n_values: list
    log_measures: list
    predicted: float
    slope_fit: float
    fit_stderr: float
    predicted_open: float = math.nan
    finite_size: float = math.nan
    delta: float = math.nan
    backends: list = field(default_factory=list)
    std_errors: list = field(default_factory=list)
    radii: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.n_values) != len(self.log_measures):
            raise ValueError("n_values and log_measures differ in length")
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise ValueError("n_values must be strictly increasing")

    @property
    def relative_error(self):
        return abs(self.slope_fit - self.predicted) / max(self.predicted, 1e-300)

    def csv_rows(self):
        for i, n in enumerate(self.n_values):
            backend = self.backends[i] if self.backends else "exact"
            se = self.std_errors[i] if self.std_errors else None
            R = self.radii[i] if self.radii else None
            yield {
                "n": str(n),
                "R": "" if R is None or backend != "exact" else repr(float(R)),
                "delta": repr(float(self.delta)),
                "log_measure": repr(float(self.log_measures[i])),
                "predicted": repr(float(self.predicted)),
                "backend": backend,
                "std_error": "" if se is None or backend == "exact" else repr(float(se)),
            }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in self.csv_rows():
            w.writerow(row)
        return buf.getvalue()


def _mc_seed(seed, n):
    return int(np.random.SeedSequence([seed, n]).generate_state(1, np.uint64)[0])


def _measure(model, n, q0, target, tol, backend, mc_paths, seed, max_cells, tilt):
    z = tuple(int(c) for c in np.rint(n * q0))
    if backend in ("exact", "auto"):
        try:
            res = green_full(model, z, target, tol, max_cells=max_cells)
            return res.value, None, "exact", res.radius
        except MemoryCapError:
            if backend == "exact":
                raise
    cfg = SamplerConfig(_mc_seed(seed, n), mc_paths, None, tuple(tilt))
    est = mc_green(model, z, target, cfg)
    return est.mean, est.std_error, "mc", None


def ldp_scan(model: WalkModel, q0, q_prime, delta: float, n_grid, tol: float = 1e-9, *,
             backend: str = "auto", mc_paths: int = 20000, seed: int = 0, threads: int = 1,
             max_cells: int = DEFAULT_MAX_CELLS, per_axis=None) -> DiagnosticSeries:
    """Scan ``-(1/n) log mu_n(B(q', delta))`` over ``n_grid`` and fit its limit.

    ``backend`` is ``"exact"`` (occupancy iteration), ``"mc"`` (importance
    sampling with the quasipotential tilt towards ``q'``) or ``"auto"``
    (exact, falling back to MC past the memory cap).  Values of ``n`` with
    ``mu_n = 0`` are listed in ``excluded`` and left out of the fit.
    """
    if not model.homogeneous or np.linalg.norm(drift(model)) == 0:
        raise ValueError("ldp_scan needs a homogeneous model with nonzero drift")
    if backend not in ("auto", "exact", "mc"):
        raise ValueError(f"unknown backend {backend!r}")
    if not delta > 0:
        raise ValueError("delta must be positive")
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    qp = np.atleast_1d(np.asarray(q_prime, dtype=float))
    if not (model.in_reachable_cone(q0) and model.in_reachable_cone(qp)):
        raise ValueError("q0 and q' must lie in the reachable cone")
    n_grid = sorted(int(n) for n in n_grid)
    predicted, _ = ball_infimum(model, q0, qp, delta, per_axis)
    predicted_open, _ = ball_infimum(model, q0, qp, delta, per_axis, closed=False)
    tilt = quasipotential_support(model, q0, qp).a_star

    def one(n):
        target = TargetSet(tuple(qp), delta, n)
        return _measure(model, n, q0, target, tol, backend, mc_paths, seed, max_cells, tilt)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, n_grid))
    else:
        results = [one(n) for n in n_grid]

    ns, ys, backends, ses, radii, excluded = [], [], [], [], [], []
    for n, (mu, se, be, R) in zip(n_grid, results):
        if not mu > 0:
            excluded.append(n)
            continue
        ns.append(n)
        ys.append(-math.log(mu) / n)
        backends.append(be)
        ses.append(None if se is None else se / (n * mu))
        radii.append(R)
    alpha, beta, stderr = fit_affine_inverse(ns, ys)
    return DiagnosticSeries(ns, ys, predicted, alpha, stderr, predicted_open, beta, float(delta),
                            backends, ses, radii, excluded)


# -- cutoffs ------------------------------------------------------------------------


@dataclass
class CutoffReport:
    """Short-time (``c``, ``M_c``, ``kappa``) and long-time (``delta0``, ``K``) cutoffs.

    Fields of the half not computed are ``nan``.  ``empirical_short`` and
    ``empirical_long`` are the largest ``(1/n) log`` of the exact partial
    occupancy sums over the tested ``n``.
    """

    A: float
    c: float = math.nan
    M_c: float = math.nan
    kappa: float = math.nan
    delta0: float = math.nan
    K: float = math.nan
    empirical_short: float = math.nan
    empirical_long: float = math.nan
    rate_00: float = math.nan
    per_n: dict = field(default_factory=dict)

    @property
    def short_ok(self):
        return self.empirical_short <= -0.9 * self.A

    @property
    def long_ok(self):
        return self.empirical_long <= -0.9 * self.A


def _log_over_n(x, n):
    return math.log(x) / n if x > 0 else -math.inf


def cutoff_kappa(model: WalkModel, A: float, q, q_prime, delta: float | None = None,
                 n_grid=(20, 40)) -> CutoffReport:
    """Short-time cutoff: ``c = 2A/|q' - q|``, ``kappa = A / (2 log M_c)``.

    The empirical check sums ``P_z(Z(t) in nB(q', delta))`` over
    ``t <= kappa n`` from ``z = round(nq)``.  The walk cannot leave
    ``|y| < |z| + kappa n max|v| + 1`` in that time, so the sum is exact.
    ``delta`` defaults to ``A / (8c)``.
    """
    if not A > 0:
        raise ValueError("A must be positive")
    q = np.atleast_1d(np.asarray(q, dtype=float))
    qp = np.atleast_1d(np.asarray(q_prime, dtype=float))
    dist = float(np.linalg.norm(qp - q))
    if dist == 0:
        raise ValueError("q and q' must differ")
    if len(model.interior.support) == 1:
        raise ValueError("degenerate kernel: M_c = 1 for a single-point support")
    c = 2.0 * A / dist
    mc = m_c(model, c)
    if not mc > 1.0:
        raise ValueError(f"M_c = {mc} <= 1; kappa undefined")
    kappa = A / (2.0 * math.log(mc))
    delta = A / (8.0 * c) if delta is None else float(delta)
    vmax = float(np.linalg.norm(model.interior.steps, axis=1).max())
    rep = CutoffReport(A, c=c, M_c=mc, kappa=kappa)
    worst = -math.inf
    for n in n_grid:
        z = tuple(int(v) for v in np.rint(n * q))
        target = TargetSet(tuple(qp), delta, n)
        horizon = max(1, math.floor(kappa * n))
        R = max(np.linalg.norm(z) + horizon * vmax, n * (np.linalg.norm(qp) + delta)) + 2.0
        res = green_truncated(model, GreenQuery(z, target, R, horizon=horizon),
                              min_steps=horizon)
        partial = math.fsum(res.visits_profile[: horizon + 1])
        val = _log_over_n(partial, n)
        rep.per_n[n] = {"horizon": horizon, "partial_sum": partial, "log_over_n": val}
        worst = max(worst, val)
    rep.empirical_short = worst
    return rep


def _ball_inf_legendre(model, radius, per_axis=None):
    d = model.dim
    per_axis = per_axis or (257 if d == 1 else 65)
    pts = _ball_grid(np.zeros(d), radius, per_axis)
    return min(legendre(model, v).value for v in pts)


def cutoff_k(model: WalkModel, A: float, T: float, q, V_radius: float, *, V=None,
             n_grid=(20, 40), max_k: int = 60) -> CutoffReport:
    """Long-time cutoff ``K = max{(|q| + V_radius + 1)/delta0, 2AT / I_T(0,0)}``.

    ``I_T(0,0) = T Lambda*(0)``; ``delta0`` is the largest ``2^-k`` with
    ``inf_{|v| <= delta0/T} Lambda*(v) >= Lambda*(0)/2`` on a grid.  The
    empirical check bounds ``sum_{t > Kn} P_z(Z(t) in nV)`` for
    ``V = B(center, radius)`` (default the ball of radius ``V_radius`` at the
    origin) by the exact occupancy profile plus the heuristic tail bound, on
    two killing radii.
    """
    if not (A > 0 and T > 0):
        raise ValueError("A and T must be positive")
    if not model.homogeneous:
        raise ValueError("cutoff_k needs a homogeneous model")
    rate0 = legendre(model, np.zeros(model.dim)).value
    if not rate0 > 0:
        raise ValueError("I_T(0,0) = 0 (zero drift): the long-time cutoff hypothesis fails")
    i_t00 = T * rate0
    delta0 = None
    for k in range(max_k + 1):
        d0 = 2.0**-k
        if _ball_inf_legendre(model, d0 / T) >= rate0 / 2.0:
            delta0 = d0
            break
    if delta0 is None:
        raise ValueError("no dyadic delta0 found")
    q = np.atleast_1d(np.asarray(q, dtype=float))
    K = max((np.linalg.norm(q) + V_radius + 1.0) / delta0, 2.0 * A * T / i_t00)
    rep = CutoffReport(A, delta0=delta0, K=float(K), rate_00=i_t00)
    if V is None:
        V = (tuple(np.zeros(model.dim)), V_radius)
    center, radius = V
    worst = -math.inf
    for n in n_grid:
        z = tuple(int(v) for v in np.rint(n * q))
        target = TargetSet(tuple(np.atleast_1d(center)), radius, n)
        start = math.floor(K * n)
        tails = []
        for scale in (1.0, 2.0):
            R = scale * 2.0 * (np.linalg.norm(z) + n * (np.linalg.norm(center) + radius) + 10.0)
            res = green_truncated(model, GreenQuery(z, target, R, horizon=max(start + 100, 50 * math.ceil(R))),
                                  min_steps=start + 60)
            prof = res.visits_profile
            tails.append(math.fsum(prof[start + 1:]) + res.horizon_tail_bound)
        tail = max(tails)
        val = _log_over_n(tail, n)
        rep.per_n[n] = {"start": start, "tail_sum": tail, "log_over_n": val}
        worst = max(worst, val)
    rep.empirical_long = worst
    return rep


# -- localization -------------------------------------------------------------------


@dataclass
class LocalizationReport:
    n: int
    A: float
    R_values: list
    gaps: list
    log_gaps: list
    threshold: float
    smallest_R: float | None
    monotone: bool

    def lines(self):
        for R, g, lg in zip(self.R_values, self.gaps, self.log_gaps):
            yield f"R={R!r} gap={g!r} log_gap_over_n={lg!r}"
        yield f"smallest_R={'none in grid' if self.smallest_R is None else repr(self.smallest_R)}"


def localization_scan(model: WalkModel, q0, target: TargetSet, A: float, R_grid, n: int,
                      slack: float = 1.0, threads: int = 1) -> LocalizationReport:
    """``(1/n) log (G(z_n, nV) - G_{nR}(z_n, nV))`` for each ``R`` in ``R_grid``.

    Reports the smallest ``R`` with value ``<= -slack * A``.
    """
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    floor = max(float(np.linalg.norm(q0)), float(np.linalg.norm(target.center)) + target.radius)
    R_grid = sorted(float(R) for R in R_grid)
    for R in R_grid:
        if R <= floor:
            raise ValueError(f"R = {R} must exceed max(|q0|, |q'| + delta) = {floor}")
    target = TargetSet(target.center, target.radius, n)

    def one(R):
        return localization_gap(model, n, q0, target, R)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            gaps = list(ex.map(one, R_grid))
    else:
        gaps = [one(R) for R in R_grid]
    logs = [_log_over_n(g, n) for g in gaps]
    thr = -slack * A
    smallest = next((R for R, lg in zip(R_grid, logs) if lg <= thr), None)
    monotone = all(b <= a for a, b in zip(gaps, gaps[1:]))
    return LocalizationReport(n, A, R_grid, gaps, logs, thr, smallest, monotone)
