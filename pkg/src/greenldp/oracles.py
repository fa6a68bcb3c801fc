"""Independent reference values used by the acceptance battery and the tests.

Nothing here calls the iteration, Newton or sampling code: the closed forms
are for nearest-neighbour walks on Z, and :func:`dense_truncated_green`
solves the killed occupancy equations with a dense linear solve.
"""

from __future__ import annotations

import math

import numpy as np

from .model import StateSpace, WalkModel

__all__ = [
    "nn1d_green",
    "nn1d_legendre",
    "nn1d_tilt_root",
    "nn1d_quasipotential",
    "dense_truncated_green",
]


def nn1d_green(p: float, y: int) -> float:
    """``G(0, {y})`` for the walk on Z stepping +1 w.p. ``p > 1/2``, -1 otherwise."""
    q = 1.0 - p
    base = 1.0 / (p - q)
    return base if y >= 0 else base * (q / p) ** (-y)


def nn1d_legendre(p: float, v: float) -> float:
    """Closed-form ``Lambda*(v)`` on ``|v| < 1``."""
    q = 1.0 - p
    a, b = (1.0 + v) / 2.0, (1.0 - v) / 2.0
    return a * math.log(a / p) + b * math.log(b / q)


def nn1d_tilt_root(p: float) -> float:
    """Nonzero root of ``phi(a) = p e^a + q e^-a = 1``, i.e. ``log(q/p)``."""
    # p x^2 - x + q = 0 with x = e^a; roots 1 and q/p
    disc = math.sqrt(1.0 - 4.0 * p * (1.0 - p))
    roots = ((1.0 + disc) / (2.0 * p), (1.0 - disc) / (2.0 * p))
    x = max(roots, key=lambda r: abs(r - 1.0))
    return math.log(x)


def nn1d_quasipotential(p: float, delta: float) -> float:
    """``I(0, delta)``: zero along the drift, ``|delta| log(p/q)`` against it."""
    if (delta >= 0) == (p >= 0.5):
        return 0.0
    return abs(delta) * abs(nn1d_tilt_root(p))


def dense_truncated_green(model: WalkModel, z, target_points, R: float) -> float:
    """``G_R(z, B)`` from ``(I - P_R)^T u = e_z`` on the states ``|y| < R``.

    ``target_points`` is an array of lattice points; those outside the ball
    contribute nothing.
    """
    d = model.dim
    rc = math.ceil(R)
    axes = [np.arange(-rc, rc + 1)] * d
    if model.state_space is StateSpace.HALFSPACE:
        axes[0] = np.arange(0, rc + 1)
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    states = grid[np.linalg.norm(grid, axis=1) < R]
    index = {tuple(s): i for i, s in enumerate(states.tolist())}
    m = len(states)
    P = np.zeros((m, m))
    for i, s in enumerate(states.tolist()):
        k = model.interior
        if model.state_space is StateSpace.HALFSPACE and s[0] == 0:
            k = model.boundary
        for v, p in zip(k.support, k.probs):
            j = index.get(tuple(a + b for a, b in zip(s, v)))
            if j is not None:
                P[i, j] += p
    rhs = np.zeros(m)
    rhs[index[tuple(int(c) for c in z)]] = 1.0
    u = np.linalg.solve(np.eye(m) - P.T, rhs)
    total = 0.0
    for y in np.atleast_2d(target_points).tolist():
        j = index.get(tuple(int(c) for c in y))
        if j is not None:
            total += u[j]
    return float(total)
