"""Jump generating function, cumulant generating function and its Legendre transform.

For a step law with support ``v_i`` and probabilities ``p_i``::

    phi(a)    = sum_i p_i exp(a . v_i)
    Lambda(a) = log phi(a)
    Lambda*(v) = sup_a (a . v - Lambda(a))

``Lambda*`` is the Cramer rate of the empirical mean velocity and serves as
the one-unit-time rate function of homogeneous walks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.spatial import ConvexHull

from .model import JumpDistribution, WalkModel

__all__ = [
    "CGFEval",
    "LegendreResult",
    "SphereMax",
    "CGFOverflowError",
    "phi",
    "cgf",
    "sphere_max",
    "m_c",
    "legendre",
    "hull_position",
]

EXP_LIMIT = 700.0
ARMIJO = 1e-4
MAX_NEWTON = 60
GRAD_TOL = 1e-12
BOUNDARY_TOL = 1e-8


class CGFOverflowError(OverflowError):
    pass


def _kernel(obj) -> JumpDistribution:
    return obj.interior if isinstance(obj, WalkModel) else obj


@dataclass(frozen=True)
class CGFEval:
    a: np.ndarray
    phi: float
    lam: float
    grad: np.ndarray
    hess: np.ndarray


def phi(model, a) -> CGFEval:
    """Evaluate ``phi``, ``Lambda`` and the first two derivatives of ``Lambda`` at ``a``.

    ``phi`` is summed directly (no shift), so exponents above 700 raise
    :class:`CGFOverflowError`; rescale the tilt in that case.
    """
    k = _kernel(model)
    steps = k.steps
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (k.dim,):
        raise ValueError(f"tilt has shape {a.shape}, expected ({k.dim},)")
    if not np.all(np.isfinite(a)):
        raise ValueError("tilt must be finite")
    expo = steps @ a
    if expo.max() > EXP_LIMIT:
        raise CGFOverflowError(f"a.v = {expo.max():.6g} exceeds {EXP_LIMIT}; rescale the tilt")
    w = k.p * np.exp(expo)
    total = math.fsum(w)
    wn = w / total
    grad = wn @ steps
    hess = (steps * wn[:, None]).T @ steps - np.outer(grad, grad)
    return CGFEval(a, total, math.log(total), grad, hess)


def cgf(kernel: JumpDistribution, a):
    """Shift-stabilized ``(Lambda, grad, hess)``; no overflow for any finite ``a``."""
    steps = kernel.steps
    s = steps @ a + kernel.logp
    top = s.max()
    w = np.exp(s - top)
    z = w.sum()
    wn = w / z
    grad = wn @ steps
    hess = (steps * wn[:, None]).T @ steps - np.outer(grad, grad)
    return top + math.log(z), grad, hess


def _lam(kernel, a):
    s = kernel.steps @ a + kernel.logp
    top = s.max()
    return top + math.log(np.exp(s - top).sum())


# -- sup of phi over a sphere ---------------------------------------------------


@dataclass(frozen=True)
class SphereMax:
    """Largest ``phi`` found on ``|a| = c``.

    ``certified`` is true when the maximum is exact (d = 1); otherwise
    ``value`` is the best of several local maximizations and is only a
    certified lower bound on the true supremum.
    """

    value: float
    a: np.ndarray
    certified: bool


def sphere_max(model, c: float, starts: int | None = None) -> SphereMax:
    """Maximize ``phi`` over the sphere of radius ``c``.

    By convexity the maximum over the ball is attained on the sphere.  In
    d >= 2 runs ``2d + 8`` local maximizations started at the signed axes and
    at 8 fixed pseudo-random directions.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    k = _kernel(model)
    d = k.dim
    if d == 1:
        vals = [(phi(k, [c]).phi, np.array([c])), (phi(k, [-c]).phi, np.array([-c]))]
        best = max(vals, key=lambda t: t[0])
        return SphereMax(best[0], best[1], True)

    starts = 2 * d + 8 if starts is None else starts
    rng = np.random.default_rng(0)
    dirs = [s * e for e in np.eye(d) for s in (1.0, -1.0)]
    dirs += list(rng.standard_normal((max(starts - 2 * d, 0), d)))

    def negval(u):
        n = np.linalg.norm(u)
        a = c * u / n
        lam, g, _ = cgf(k, a)
        # gradient of -Lambda(c u/|u|) with respect to u
        proj = (g - (g @ u) * u / n**2) * c / n
        return -lam, -proj

    best_val, best_a = -np.inf, None
    for u0 in dirs:
        u0 = u0 / np.linalg.norm(u0)
        res = minimize(negval, u0, jac=True, method="L-BFGS-B")
        a = c * res.x / np.linalg.norm(res.x)
        val = phi(k, a).phi
        if val > best_val:
            best_val, best_a = val, a
    return SphereMax(best_val, best_a, False)


def m_c(model, c: float) -> float:
    """``max(1, sup_{|a| <= c} phi(a))`` for a homogeneous walk."""
    return max(1.0, sphere_max(model, c).value)


# -- Legendre transform ---------------------------------------------------------


@dataclass(frozen=True)
class LegendreResult:
    v: np.ndarray
    value: float
    argmax: np.ndarray
    converged: bool
    iterations: int
    position: str = "interior"


def hull_position(steps: np.ndarray, v, tol: float = 1e-12) -> str:
    """Classify ``v`` as ``"interior"`` (relative), ``"boundary"`` or ``"outside"``
    with respect to the convex hull of the rows of ``steps``."""
    v = np.asarray(v, dtype=float)
    center = steps.mean(axis=0)
    x = steps - center
    scale = max(1.0, float(np.abs(steps).max()))
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * scale))
    basis = vt[:rank].T
    w = v - center
    y = basis.T @ w
    if np.linalg.norm(w - basis @ y) > tol * scale:
        return "outside"
    if rank == 0:
        return "boundary"
    pts = x @ basis
    if rank == 1:
        lo, hi = pts[:, 0].min(), pts[:, 0].max()
        y0 = y[0]
        if lo + tol * scale < y0 < hi - tol * scale:
            return "interior"
        if lo - tol * scale <= y0 <= hi + tol * scale:
            return "boundary"
        return "outside"
    eq = ConvexHull(pts).equations
    # rows are (unit normal, offset); interior points give negative values
    slack = (eq[:, :-1] @ y + eq[:, -1]).max()
    if slack < -tol * scale:
        return "interior"
    if slack <= tol * scale:
        return "boundary"
    return "outside"


def _newton(kernel, v, a0):
    a = np.array(a0, dtype=float)
    lam, g, h = cgf(kernel, a)
    f = a @ v - lam
    tol = GRAD_TOL * (1.0 + np.linalg.norm(v))
    for it in range(MAX_NEWTON):
        r = v - g
        rn = np.linalg.norm(r)
        if rn <= tol:
            return a, f, True, it
        step = np.linalg.lstsq(h, r, rcond=None)[0]
        slope = r @ step
        t = 1.0
        while t >= 1e-12:
            a_new = a + t * step
            lam_new, g_new, h_new = cgf(kernel, a_new)
            f_new = a_new @ v - lam_new
            if f_new >= f + ARMIJO * t * slope:
                break
            # near the optimum f is flat to rounding; accept residual decrease
            if abs(f_new - f) <= 1e-15 * max(1.0, abs(f)) and np.linalg.norm(v - g_new) < rn:
                break
            t *= 0.5
        else:
            return a, f, bool(rn <= 1e-9 * (1.0 + np.linalg.norm(v))), it + 1
        a, f, g, h = a_new, f_new, g_new, h_new
    return a, f, bool(np.linalg.norm(v - g) <= tol), MAX_NEWTON


def _capped_sup(kernel, v):
    d = kernel.dim
    cap, prev, a_best, it = 1.0, None, np.zeros(d), 0
    while cap < 1e6:
        it += 1
        if d == 1:
            res = minimize_scalar(
                lambda x: _lam(kernel, np.array([x])) - x * v[0],
                bounds=(-cap, cap),
                method="bounded",
                options={"xatol": 1e-12},
            )
            a_best = np.array([res.x])
        else:

            def neg(a):
                lam, g, _ = cgf(kernel, a)
                return lam - a @ v, g - v

            cons = {"type": "ineq", "fun": lambda a: cap**2 - a @ a, "jac": lambda a: -2 * a}
            res = minimize(neg, a_best, jac=True, method="SLSQP", constraints=[cons],
                           options={"ftol": 1e-14, "maxiter": 500})
            a_best = res.x
        val = float(a_best @ v - _lam(kernel, a_best))
        if prev is not None and abs(val - prev) < BOUNDARY_TOL:
            return val, a_best, it
        prev = val
        cap *= 2.0
    return prev, a_best, it


def legendre(model, v, a0=None) -> LegendreResult:
    """Legendre transform ``Lambda*(v)`` of the cumulant generating function.

    Inside the (relative interior of the) convex hull of the support the
    concave objective ``a . v - Lambda(a)`` is maximized by damped Newton
    (Armijo backtracking, at most 60 iterations), optionally warm-started at
    ``a0``.  Outside the closed hull the value is ``inf``.  On the hull
    boundary the supremum is only approached as ``|a| -> inf``; it is
    evaluated on balls ``|a| <= cap`` with doubling caps and reported with
    ``converged=False``.
    """
    k = _kernel(model)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (k.dim,):
        raise ValueError(f"velocity has shape {v.shape}, expected ({k.dim},)")
    pos = hull_position(k.steps, v)
    if pos == "outside":
        return LegendreResult(v, math.inf, np.full(k.dim, np.nan), False, 0, pos)
    if pos == "boundary":
        val, a, it = _capped_sup(k, v)
        return LegendreResult(v, max(val, 0.0), a, False, it, pos)
    a0 = np.zeros(k.dim) if a0 is None else np.asarray(a0, dtype=float)
    a, f, ok, it = _newton(k, v, a0)
    if not ok and a0 is not None and np.any(a0):
        a, f, ok, it = _newton(k, v, np.zeros(k.dim))
    return LegendreResult(v, max(float(f), 0.0), a, ok, it, pos)
