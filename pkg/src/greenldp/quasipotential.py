"""Quasipotential of homogeneous lattice walks.

Two independent routes to ``I(q, q')``:

* :func:`quasipotential_inf_t` minimizes ``g(T) = T * Lambda*((q' - q)/T)``
  over the horizon ``T``;
* :func:`quasipotential_support` evaluates the support function
  ``sup {a . (q' - q) : phi(a) <= 1}`` of the unit level set of ``phi``.

Their agreement is the main correctness check for both.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .cgf import cgf, legendre
from .model import WalkModel, communication_theta, drift

__all__ = [
    "RateFiniteT",
    "QuasipotentialResult",
    "IdentityReport",
    "QuasipotentialError",
    "rate_finite_t",
    "quasipotential",
    "quasipotential_inf_t",
    "quasipotential_support",
    "identity_suite",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
T_WIDTH = 1e-10
LEVEL_WIDTH = 1e-10
INNER_TOL = 1e-12


class QuasipotentialError(ArithmeticError):
    """Search failed to bracket or converge; the model assumptions are violated."""


def _require_homogeneous(model):
    if not model.homogeneous:
        raise ValueError("quasipotential formulas need a homogeneous (full-lattice) model")


def _vec(x, d):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise ValueError(f"expected a vector of length {d}, got shape {x.shape}")
    return x


def _unit(delta):
    """``(|delta|, delta / |delta|)`` without underflow for tiny vectors."""
    scale = float(np.abs(delta).max())
    u = delta / scale
    nrm = float(np.linalg.norm(u))
    return scale * nrm, u / nrm


def _in_cone(model, delta):
    steps = model.interior.steps
    res = linprog(np.zeros(len(steps)), A_eq=steps.T, b_eq=delta, bounds=(0, None), method="highs")
    return res.status == 0


@dataclass(frozen=True)
class RateFiniteT:
    T: float
    q: np.ndarray
    q_prime: np.ndarray
    value: float
    a: np.ndarray


def rate_finite_t(model: WalkModel, T: float, q, q_prime, a0=None) -> RateFiniteT:
    """Fixed-horizon rate ``I_T(q, q') = T * Lambda*((q' - q)/T)``."""
    _require_homogeneous(model)
    if not T > 0:
        raise ValueError("T must be positive")
    q, qp = _vec(q, model.dim), _vec(q_prime, model.dim)
    res = legendre(model, (qp - q) / T, a0=a0)
    return RateFiniteT(float(T), q, qp, T * res.value, res.argmax)


@dataclass(frozen=True)
class QuasipotentialResult:
    """``I(q, q')`` with the optimal horizon and tilt.

    ``t_star`` is 0 for ``q == q'`` (the cost ``T * Lambda*(0)`` vanishes as
    ``T -> 0``) and ``inf`` when ``q'`` is unreachable from ``q``.
    ``coincident`` marks the ``q == q'`` short-circuit, where the value is
    that of the modified quasipotential (0 on the diagonal).
    """

    q: np.ndarray
    q_prime: np.ndarray
    value: float
    t_star: float
    a_star: np.ndarray
    method: str
    converged: bool = True
    coincident: bool = False
    evaluations: int = 0


def _trivial(model, q, qp, method):
    d = model.dim
    if np.array_equal(q, qp):
        return QuasipotentialResult(q, qp, 0.0, 0.0, np.zeros(d), method, coincident=True)
    if not _in_cone(model, qp - q):
        return QuasipotentialResult(q, qp, math.inf, math.inf, np.full(d, np.nan), method)
    return None


# -- inf over the horizon -----------------------------------------------------


class _HorizonCost:
    """``g(T) = T Lambda*(delta/T)`` with warm-started Legendre solves."""

    def __init__(self, model, delta):
        self.model = model
        self.delta = delta
        self.a = np.zeros(model.dim)
        self.cache = {}

    def __call__(self, T):
        if T in self.cache:
            return self.cache[T][0]
        res = legendre(self.model, self.delta / T, a0=self.a)
        val = T * res.value
        if math.isfinite(val) and res.converged:
            self.a = res.argmax
        self.cache[T] = (val, res.argmax, res.converged)
        return val

    def argmax(self, T):
        self(T)
        return self.cache[T][1]


def _bracket(g, t0):
    f0 = g(t0)
    # find a horizon with finite cost: delta/T must lie in the hull of the support
    for t in [t0 * 2.0**k for k in range(1, 61)] + [t0 * 0.5**k for k in range(1, 61)]:
        if math.isfinite(f0):
            break
        t0, f0 = t, g(t)
    if not math.isfinite(f0):
        raise QuasipotentialError("no horizon with finite cost")
    up, fup = 2.0 * t0, g(2.0 * t0)
    if fup < f0:
        lo, mid, fmid = t0, up, fup
        for _ in range(200):
            hi = 2.0 * mid
            fhi = g(hi)
            if fhi >= fmid:
                return lo, mid, hi
            lo, mid, fmid = mid, hi, fhi
        raise QuasipotentialError("horizon bracket diverged upwards")
    hi, mid, fmid = up, t0, f0
    for _ in range(200):
        lo = 0.5 * mid
        flo = g(lo)
        if flo >= fmid:
            return lo, mid, hi
        hi, mid, fmid = mid, lo, flo
    raise QuasipotentialError("horizon bracket collapsed to zero")


def _golden(g, a, b, c):
    # invariant: g(b) <= g(a), g(c); shrink [a, c] around the minimum
    x1 = c - GOLDEN * (c - a)
    x2 = a + GOLDEN * (c - a)
    f1, f2 = g(x1), g(x2)
    while c - a > T_WIDTH * max(1.0, b):
        if f1 <= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - GOLDEN * (c - a)
            f1 = g(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (c - a)
            f2 = g(x2)
        b = x1 if f1 <= f2 else x2
    return b


def quasipotential_inf_t(model: WalkModel, q, q_prime) -> QuasipotentialResult:
    """``I(q, q') = inf_{T > 0} T Lambda*((q' - q)/T)``.

    ``g`` is convex in ``T``.  The minimum is bracketed by doubling/halving
    from the ballistic horizon ``|q' - q| / |m|``, located by golden-section
    search to relative width 1e-10 and polished by one Newton step using
    ``g'(T) = -Lambda(a*)`` and ``g''(T) = delta . H^{-1} delta / T^3``.
    """
    _require_homogeneous(model)
    q, qp = _vec(q, model.dim), _vec(q_prime, model.dim)
    trivial = _trivial(model, q, qp, "inf_t")
    if trivial is not None:
        return trivial
    # work with the unit direction; value and horizon scale with |delta|
    nrm, delta = _unit(qp - q)
    g = _HorizonCost(model, delta)
    speed = float(np.linalg.norm(drift(model)))
    t0 = 1.0 / speed if speed > 0 else 1.0
    converged = True
    try:
        t = _golden(g, *_bracket(g, t0))
    except QuasipotentialError:
        converged = False
        t = min(g.cache, key=lambda k: g.cache[k][0])
    value = g(t)
    if converged and math.isfinite(value):
        a = g.argmax(t)
        lam, _, h = cgf(model.interior, a)
        curv = delta @ np.linalg.lstsq(h, delta, rcond=None)[0] / t**3
        if curv > 0:
            t_new = t + lam / curv
            if t_new > 0 and g(t_new) <= value:
                t, value = t_new, g(t_new)
        converged = bool(g.cache[t][2])
    return QuasipotentialResult(q, qp, nrm * value, nrm * t, g.argmax(t), "inf_t", converged,
                                evaluations=len(g.cache))


# -- support function of the unit level set -----------------------------------


class _LevelMin:
    """``h(t) = min {Lambda(a) : a . delta = t}`` by Newton on the hyperplane."""

    def __init__(self, model, delta):
        self.kernel = model.interior
        self.delta = delta
        n2 = delta @ delta
        self.base = delta / n2
        # orthonormal basis of the complement of delta
        _, _, vt = np.linalg.svd(delta[None, :])
        self.basis = vt[1:].T
        self.y = np.zeros(self.basis.shape[1])

    def point(self, t, y):
        return t * self.base + self.basis @ y

    def __call__(self, t):
        y = self.y.copy()
        a = self.point(t, y)
        lam, g, h = cgf(self.kernel, a)
        if self.basis.shape[1] == 0:
            return lam, a, g
        for _ in range(100):
            r = self.basis.T @ g
            rn = np.linalg.norm(r)
            if rn <= INNER_TOL * (1.0 + np.linalg.norm(g)):
                break
            hr = self.basis.T @ h @ self.basis
            step = -np.linalg.lstsq(hr, r, rcond=None)[0]
            s = 1.0
            while s >= 1e-12:
                y_new = y + s * step
                a_new = self.point(t, y_new)
                lam_new, g_new, h_new = cgf(self.kernel, a_new)
                if lam_new <= lam + 1e-4 * s * (r @ step):
                    break
                if (abs(lam_new - lam) <= 1e-15 * max(1.0, abs(lam))
                        and np.linalg.norm(self.basis.T @ g_new) < rn):
                    break
                s *= 0.5
            else:
                break
            y, a, lam, g, h = y_new, a_new, lam_new, g_new, h_new
            if np.linalg.norm(y) > 1e8:
                return -math.inf, a, g
        self.y = y
        return lam, a, g


def quasipotential_support(model: WalkModel, q, q_prime=None) -> QuasipotentialResult:
    """``I(0, q) = sup {a . q : phi(a) <= 1}``.

    With ``q_prime`` given, evaluates ``I(q, q') = I(0, q' - q)``.  The level
    ``t`` of the linear objective is located by a bisection bracket on
    ``h(t) = min {Lambda(a) : a . q = t}`` (convex, ``h(0) <= 0``), with
    Newton steps ``t -= h(t)/h'(t)`` taken whenever they stay inside the
    bracket, until the bracket is narrower than 1e-10 (the search runs on the
    unit direction of ``q' - q`` and is rescaled by ``|q' - q|``) or
    ``h`` vanishes to working precision.
    """
    _require_homogeneous(model)
    if q_prime is None:
        q, qp = np.zeros(model.dim), _vec(q, model.dim)
    else:
        q, qp = _vec(q, model.dim), _vec(q_prime, model.dim)
    trivial = _trivial(model, q, qp, "support")
    if trivial is not None:
        return trivial
    nrm, delta = _unit(qp - q)
    n2 = 1.0
    level = _LevelMin(model, delta)
    m = drift(model)
    evals = 0

    def h(t):
        nonlocal evals
        evals += 1
        return level(t)

    # h(0) <= 0 with equality iff the drift is normal to the hyperplane
    lo, (hlo, alo, glo) = 0.0, h(0.0)
    if m @ delta > 0 and hlo >= -1e-15:
        a0 = np.zeros(model.dim)
        return _support_result(q, qp, nrm, 0.0, a0, m, evals)
    hi = math.sqrt(n2)
    for _ in range(200):
        hhi, _, _ = h(hi)
        if hhi > 0:
            break
        lo, hlo = hi, hhi
        hi *= 2.0
    else:
        raise QuasipotentialError("support search failed to bracket; drift assumption violated")
    width = LEVEL_WIDTH * max(1.0, math.sqrt(n2))
    t, (ht, at, gt) = hi, h(hi)
    best = (lo, *h(lo)[1:]) if lo > 0 else (0.0, alo, glo)
    while hi - lo > width:
        slope = gt @ delta / n2
        cand = t - ht / slope if slope > 0 else None
        if cand is None or not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        t = cand
        ht, at, gt = h(t)
        if abs(ht) <= 1e-14:
            best = (t, at, gt)
            break
        if ht < 0:
            lo, best = t, (t, at, gt)
        else:
            hi = t
    t, a, g = best
    return _support_result(q, qp, nrm, t, a, g, evals)


def _support_result(q, qp, nrm, level, a, g, evals):
    # level = a* . u for the unit direction u; I = |delta| level and the
    # horizon is the time the tilted walk (mean g) needs to cover delta
    u = (qp - q) / nrm
    gg = float(g @ g)
    t_star = nrm * float(u @ g) / gg if gg > 0 else math.inf
    return QuasipotentialResult(q, qp, nrm * float(level), t_star, np.asarray(a), "support",
                                evaluations=evals)


def quasipotential(model: WalkModel, q, q_prime, method: str = "support") -> QuasipotentialResult:
    if method == "support":
        return quasipotential_support(model, q, q_prime)
    if method == "inf_t":
        return quasipotential_inf_t(model, q, q_prime)
    raise ValueError(f"unknown method {method!r}")


# -- randomized identity checks -------------------------------------------------

IDENTITIES = ("scaling", "subadditivity", "representation", "homogeneity", "triangle",
              "diagonal", "lipschitz")


@dataclass
class IdentityReport:
    samples: int
    seed: int
    tolerance: float
    max_violation: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.max_violation.values())

    def lines(self):
        for name in IDENTITIES:
            v = self.max_violation[name]
            yield f"{name:15s} max_violation={v:.3e} {'PASS' if v < self.tolerance else 'FAIL'}"


def _hull_point(rng, steps):
    lam = rng.dirichlet(np.ones(len(steps)))
    # shrink toward the centroid so the point stays strictly interior
    c = steps.mean(axis=0)
    return c + 0.95 * (lam @ steps - c)


def _rel(x, scale):
    return abs(x) / max(1.0, abs(scale))


def _one_sample(model, seed, i, theta_of):
    rng = np.random.default_rng([seed, i])
    d, steps = model.dim, model.interior.steps
    q = rng.normal(size=d)
    T, T2 = rng.uniform(0.2, 3.0, size=2)
    q1 = q + T * _hull_point(rng, steps)
    q2 = q1 + T2 * _hull_point(rng, steps)
    theta = float(np.exp(rng.normal()))
    out = {}

    r = rate_finite_t(model, T, q, q1)
    rs = rate_finite_t(model, theta * T, theta * q, theta * q1)
    out["scaling"] = _rel(rs.value - theta * r.value, r.value)

    r2 = rate_finite_t(model, T2, q1, q2)
    r12 = rate_finite_t(model, T + T2, q, q2)
    out["subadditivity"] = max(0.0, r12.value - r.value - r2.value) / max(1.0, r12.value)

    i_sup = quasipotential_support(model, q, q1)
    i_inf = quasipotential_inf_t(model, q, q1)
    out["representation"] = _rel(i_sup.value - i_inf.value, i_sup.value)

    scale = (0.5, 2.0, 7.0, 1.0, theta)[i % 5]
    i_scaled = quasipotential_inf_t(model, scale * q, scale * q1)
    out["homogeneity"] = _rel(i_scaled.value - scale * i_inf.value, i_scaled.value)

    i_12 = quasipotential_support(model, q1, q2)
    i_02 = quasipotential_support(model, q, q2)
    out["triangle"] = max(0.0, i_02.value - i_sup.value - i_12.value) / max(1.0, i_02.value)

    out["diagonal"] = abs(quasipotential_inf_t(model, q1, q1).value) + abs(
        quasipotential_support(model, q1, q1).value)

    delta = q1 - q
    bound = theta_of(delta) * float(np.linalg.norm(delta))
    out["lipschitz"] = max(0.0, i_sup.value - bound) / max(1.0, bound)
    return out


def identity_suite(model: WalkModel, samples: int = 1000, seed: int = 0,
                   threads: int = 1, tolerance: float = 1e-7) -> IdentityReport:
    """Randomized checks of the rate-function identities.

    Per sample (independent stream keyed by ``(seed, index)``): horizon
    scaling and subadditivity of ``I_T``; agreement of the two quasipotential
    methods; homogeneity and triangle inequality of ``I``; ``I(q, q) = 0``;
    and the bound ``I(q, q') <= theta |q' - q|`` from the communication
    certificate in the direction ``q' - q``.  Violations are relative to
    ``max(1, value)``.
    """
    _require_homogeneous(model)
    if samples < 1:
        raise ValueError("samples must be positive")

    def theta_of(delta):
        return communication_theta(model, [delta]).theta

    def run(i):
        return _one_sample(model, seed, i, theta_of)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, range(samples)))
    else:
        results = [run(i) for i in range(samples)]
    report = IdentityReport(samples, seed, tolerance)
    for name in IDENTITIES:
        report.max_violation[name] = max(r[name] for r in results)
    return report
