"""Green's functions of transient lattice walks by forward occupancy iteration.

The sub-probability law of the walk killed on leaving the Euclidean ball
``{|y| < R}`` is pushed forward one step at a time on a dense box; the mass
found in the target set is accumulated.  Discrete-time convention::

    G_R(z, B) = sum_{t >= 0} P_z(Z(t) in B, tau_R > t),
    tau_R = inf {t >= 0 : |Z(t)| >= R}.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .model import StateSpace, WalkModel

__all__ = [
    "TargetSet",
    "GreenQuery",
    "GreenResult",
    "MemoryCapError",
    "green_truncated",
    "green_full",
    "scaled_measure",
    "localization_gap",
    "localization_gap_detail",
    "write_profile",
    "read_profile",
    "DEFAULT_MAX_CELLS",
]

DEFAULT_MAX_CELLS = 8_000_000
STOP_REL = 1e-12
RHO_WINDOW = 50
HORIZON_FACTOR = 50
MAX_HORIZON_DOUBLINGS = 6
PROFILE_MAGIC = b"GLDP"
PROFILE_VERSION = 1


class MemoryCapError(MemoryError):
    def __init__(self, required, available):
        self.required = required
        self.available = available
        super().__init__(f"lattice ball needs {required} cells, cap is {available}")


@dataclass(frozen=True)
class TargetSet:
    """Lattice set ``nB(q', delta) = {y : |y - n q'| < n delta}``."""

    center: tuple
    radius: float
    scale: int = 1

    def __post_init__(self):
        center = tuple(float(c) for c in np.atleast_1d(self.center))
        object.__setattr__(self, "center", center)
        if not self.radius > 0:
            raise ValueError("target radius must be positive")
        if int(self.scale) != self.scale or self.scale < 1:
            raise ValueError("target scale must be a positive integer")
        object.__setattr__(self, "scale", int(self.scale))

    @property
    def dim(self):
        return len(self.center)

    def lattice_center(self):
        return self.scale * np.array(self.center)

    def points(self, halfspace: bool = False) -> np.ndarray:
        """All lattice points of the set, one per row."""
        c = self.lattice_center()
        r = self.scale * self.radius
        axes = [np.arange(math.floor(ci - r), math.ceil(ci + r) + 1) for ci in c]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(c))
        keep = np.linalg.norm(grid - c, axis=1) < r
        if halfspace:
            keep &= grid[:, 0] >= 0
        return grid[keep]

    def with_radius(self, radius):
        return TargetSet(self.center, radius, self.scale)


@dataclass(frozen=True)
class GreenQuery:
    """Source point, target set, killing radius ``R`` and optional horizon."""

    source: tuple
    target: TargetSet
    R: float
    horizon: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(int(c) for c in np.atleast_1d(self.source)))
        if not self.R > 0:
            raise ValueError("truncation radius must be positive")
        if np.linalg.norm(self.source) >= self.R:
            raise ValueError(f"source {list(self.source)} is not inside the ball of radius {self.R}")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be a positive integer")


@dataclass
class GreenResult:
    """Accumulated occupancy of the target.

    ``horizon_tail_bound`` is a heuristic bound on the occupancy lost by
    stopping: live mass over ``1 - rho`` with ``rho`` the empirical per-step
    survival ratio over the last 50 steps.  ``visits_profile[t]`` is the
    target mass at time ``t``; its cumulative sum gives the partial sums.
    ``truncation_flag`` is true when ``value`` is ``G_R`` rather than ``G``;
    ``horizon_reached`` is true when the step cap stopped the iteration
    before the tail criterion was met.
    """

    value: float
    horizon_tail_bound: float
    truncation_flag: bool
    visits_profile: np.ndarray | None = None
    radius: float = math.nan
    steps: int = 0
    truncation_error: float = 0.0
    live_mass: float = 0.0
    absorbed_mass: float = 0.0
    max_conservation_error: float = 0.0
    extra: dict = field(default_factory=dict)
    horizon_reached: bool = False

    @property
    def partial_sums(self):
        return None if self.visits_profile is None else np.cumsum(self.visits_profile)


# -- lattice box --------------------------------------------------------------


class _Box:
    """Dense box covering the ball ``|y| < R`` (intersected with the state space)."""

    def __init__(self, model: WalkModel, R: float, max_cells: int):
        d = model.dim
        rc = math.ceil(R) - 1 if float(R).is_integer() else math.floor(R)
        rc = max(rc, 0)
        self.half = model.state_space is StateSpace.HALFSPACE
        lo = [-rc] * d
        if self.half:
            lo[0] = 0
        self.lo = np.array(lo)
        self.shape = tuple(rc - l + 1 for l in lo)
        cells = int(np.prod(self.shape, dtype=np.int64))
        if cells > max_cells:
            raise MemoryCapError(cells, max_cells)
        axes = [np.arange(l, rc + 1) for l in lo]
        r2 = sum(np.meshgrid(*[a.astype(float) ** 2 for a in axes], indexing="ij"))
        self.ball = r2 < R * R

    def index(self, y):
        idx = tuple(int(c) for c in np.asarray(y) - self.lo)
        if any(i < 0 or i >= s for i, s in zip(idx, self.shape)):
            return None
        return idx

    def mask_of(self, points):
        """Boolean mask of the points lying in the ball; others are dropped."""
        m = np.zeros(self.shape, dtype=bool)
        for y in points:
            idx = self.index(y)
            if idx is not None and self.ball[idx]:
                m[idx] = True
        return m


def _shift_add(out, src, v, p):
    dst_sl, src_sl = [], []
    for vj, n in zip(v, src.shape):
        vj = int(vj)
        if abs(vj) >= n:
            return
        dst_sl.append(slice(max(0, vj), n + min(0, vj)))
        src_sl.append(slice(max(0, -vj), n - max(0, vj)))
    out[tuple(dst_sl)] += p * src[tuple(src_sl)]


def _propagate(model, box, mass):
    out = np.zeros_like(mass)
    if box.half:
        edge = np.zeros_like(mass)
        edge[0] = mass[0]
        bulk = mass.copy()
        bulk[0] = 0.0
        for v, p in zip(model.interior.support, model.interior.probs):
            _shift_add(out, bulk, v, p)
        for v, p in zip(model.boundary.support, model.boundary.probs):
            _shift_add(out, edge, v, p)
    else:
        for v, p in zip(model.interior.support, model.interior.probs):
            _shift_add(out, mass, v, p)
    return out


def _iterate(model, z, target_points, R, *, inner=None, horizon=None, min_steps=0,
             max_cells=DEFAULT_MAX_CELLS, keep_profile=True):
    """Core occupancy loop.

    With ``inner = r < R`` the live mass is split into paths that have not
    yet left ``{|y| < r}`` and paths that have; target occupancy is
    accumulated separately for each, so ``G_R - G_r`` is obtained without
    cancellation.
    """
    box = _Box(model, R, max_cells)
    if not len(target_points):
        raise ValueError("target set contains no lattice points")
    tmask = box.mask_of(target_points)
    src = box.index(z)
    if src is None or not box.ball[src] or not model.contains(np.asarray(z)):
        raise ValueError(f"source {list(z)} is not inside the ball of radius {R}")
    if not tmask.any():
        # the target lies outside the ball: nothing is counted before exit
        res = GreenResult(0.0, 0.0, False, np.zeros(1) if keep_profile else None, float(R))
        if inner is not None:
            res.extra.update(gap=0.0, gap_profile=np.zeros(1) if keep_profile else None,
                             inner=float(inner))
        return res
    horizon = HORIZON_FACTOR * math.ceil(R) if horizon is None else int(horizon)

    mass = np.zeros(box.shape)
    mass[src] = 1.0
    split = inner is not None
    if split:
        r2 = sum(np.meshgrid(*[(np.arange(s) + l).astype(float) ** 2
                               for s, l in zip(box.shape, box.lo)], indexing="ij"))
        inner_mask = r2 < inner * inner
        if not inner_mask[src]:
            raise ValueError("source must lie inside the inner radius")
        out_mass = np.zeros(box.shape)
    value = float(mass[tmask].sum())
    gap = 0.0
    profile = [value]
    gap_profile = [0.0]
    live_hist = [1.0]
    absorbed = 0.0
    max_cons = 0.0
    tail = math.inf
    t = 0
    settled = False
    while t < horizon:
        t += 1
        new = _propagate(model, box, mass)
        before = float(mass.sum())
        if split:
            new_out = _propagate(model, box, out_mass)
            before += float(out_mass.sum())
            leaving = new * (box.ball & ~inner_mask)
            mass = new * inner_mask
            out_mass = new_out * box.ball + leaving
            live = float(mass.sum()) + float(out_mass.sum())
            g_t = float(out_mass[tmask].sum())
            gap += g_t
            gap_profile.append(g_t)
        else:
            mass = new * box.ball
            live = float(mass.sum())
        absorbed += before - live
        max_cons = max(max_cons, abs(live + absorbed - 1.0))
        v_t = float(mass[tmask].sum())
        value += v_t
        profile.append(v_t)
        live_hist.append(live)
        if live == 0.0:
            tail = 0.0
            settled = True
            break
        if t >= RHO_WINDOW and live_hist[-RHO_WINDOW - 1] > 0:
            rho = (live / live_hist[-RHO_WINDOW - 1]) ** (1.0 / RHO_WINDOW)
            tail = live / (1.0 - rho) if rho < 1.0 else math.inf
            ref = min(value, gap) if split else value
            if t >= min_steps and ref > 0 and tail < STOP_REL * ref:
                settled = True
                break
            if t >= min_steps and live < 1e-290:
                settled = True
                break
    res = GreenResult(
        value=value,
        horizon_tail_bound=tail,
        truncation_flag=True,
        visits_profile=np.array(profile) if keep_profile else None,
        radius=float(R),
        steps=t,
        live_mass=live_hist[-1],
        absorbed_mass=absorbed,
        max_conservation_error=max_cons,
        horizon_reached=not settled,
    )
    if split:
        res.extra["gap"] = gap
        res.extra["gap_profile"] = np.array(gap_profile) if keep_profile else None
        res.extra["inner"] = float(inner)
    return res


def green_truncated(model: WalkModel, query: GreenQuery, *, min_steps: int = 0,
                    max_cells: int = DEFAULT_MAX_CELLS) -> GreenResult:
    """Truncated Green's function ``G_R(z, B)``.

    Iterates until the live mass times the geometric tail factor drops below
    1e-12 of the accumulated value (never before ``min_steps``), or until
    the horizon.  An explicit ``query.horizon`` is a hard cap; without one
    the cap starts at ``50 R`` and is doubled (at most 6 times) while it,
    rather than the tail criterion, ends the iteration.
    """
    target = query.target
    if target.dim != model.dim:
        raise ValueError("target dimension does not match the model")
    pts = target.points(halfspace=model.state_space is StateSpace.HALFSPACE)

    def run(h):
        return _iterate(model, query.source, pts, query.R, horizon=h,
                        min_steps=min_steps, max_cells=max_cells)

    if query.horizon is not None:
        return run(query.horizon)
    return _settled(run, query.R)


def _default_r0(z, target):
    return 2.0 * (np.linalg.norm(z) + target.scale * (np.linalg.norm(target.center) + target.radius) + 10.0)


def green_full(model: WalkModel, z, target: TargetSet, tol: float = 1e-9, *,
               min_steps: int = 0, r0: float | None = None,
               max_cells: int = DEFAULT_MAX_CELLS) -> GreenResult:
    """Green's function ``G(z, B)`` as the limit of ``G_R`` with doubling ``R``.

    Starts from ``R0 = 2 (|z| + n (|q'| + delta) + 10)`` and doubles until two
    successive values differ by less than ``tol`` relative.  The last
    difference is reported as ``truncation_error``.  At each radius the step
    cap starts at ``50 R`` and is doubled (at most 6 times) while it, rather
    than the tail criterion, ends the iteration; ``horizon_reached`` on the
    result reports a cap that still bit.
    """
    if not model.transient:
        raise ValueError("walk is recurrent (zero drift in dimension < 3); G is infinite")
    z = tuple(int(c) for c in np.atleast_1d(z))
    R = _default_r0(z, target) if r0 is None else float(r0)
    prev = None
    while True:
        res = _settled(lambda h: green_truncated(model, GreenQuery(z, target, R, horizon=h),
                                                 min_steps=min_steps, max_cells=max_cells), R)
        if prev is not None:
            diff = abs(res.value - prev.value)
            if diff <= tol * abs(res.value) or res.value == 0.0:
                res.truncation_flag = False
                res.truncation_error = diff
                return res
        prev = res
        R *= 2.0
        if _cells(model, R) > max_cells:
            raise MemoryCapError(_cells(model, R), max_cells)


def _settled(run, R):
    """Rerun with doubled horizons until the tail criterion, not the cap, stops the loop."""
    h = HORIZON_FACTOR * math.ceil(R)
    res = run(h)
    for _ in range(MAX_HORIZON_DOUBLINGS):
        if not res.horizon_reached:
            break
        h *= 2
        res = run(h)
    return res


def _cells(model, R):
    rc = math.ceil(R)
    side = 2 * rc + 1
    if model.state_space is StateSpace.HALFSPACE:
        return (rc + 1) * side ** (model.dim - 1)
    return side ** model.dim


def _source(n, q0):
    return tuple(int(c) for c in np.rint(n * np.atleast_1d(np.asarray(q0, dtype=float))))


def scaled_measure(model: WalkModel, n: int, q0, target: TargetSet, tol: float = 1e-9,
                   **kw) -> float:
    """``mu_n(B) = G(z_n, nB)`` with ``z_n`` the lattice point nearest ``n q0``."""
    if target.scale != n:
        raise ValueError(f"target scale {target.scale} does not match n = {n}")
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    if not model.in_reachable_cone(q0):
        raise ValueError("q0 is outside the reachable cone")
    return green_full(model, _source(n, q0), target, tol, **kw).value


def localization_gap_detail(model: WalkModel, n: int, q0, target: TargetSet, R: float,
                            tol: float = 1e-9, *, max_cells: int = DEFAULT_MAX_CELLS) -> GreenResult:
    """Occupancy of ``nV`` by paths that already left the ball of radius ``nR``.

    ``extra["gap"]`` holds ``G(z_n, nV) - G_{nR}(z_n, nV)``, computed from the
    split occupancy on a doubling outer radius until it converges to ``tol``.
    """
    q0 = np.atleast_1d(np.asarray(q0, dtype=float))
    if target.scale != n:
        raise ValueError(f"target scale {target.scale} does not match n = {n}")
    if not (R > np.linalg.norm(q0) and R > np.linalg.norm(target.center) + target.radius):
        raise ValueError("R must exceed |q0| and |q'| + delta")
    z = _source(n, q0)
    inner = n * R
    pts = target.points(halfspace=model.state_space is StateSpace.HALFSPACE)
    outer = max(2.0 * inner, _default_r0(z, target))
    prev = None
    while True:
        res = _settled(lambda h: _iterate(model, z, pts, outer, inner=inner, horizon=h,
                                          max_cells=max_cells), outer)
        gap = res.extra["gap"]
        if prev is not None:
            diff = abs(gap - prev)
            if diff <= tol * gap or gap == 0.0:
                res.truncation_flag = False
                res.truncation_error = diff
                return res
        prev = gap
        outer *= 2.0
        if _cells(model, outer) > max_cells:
            raise MemoryCapError(_cells(model, outer), max_cells)


def localization_gap(model: WalkModel, n: int, q0, target: TargetSet, R: float,
                     tol: float = 1e-9, **kw) -> float:
    """``G(z_n, nV) - G_{nR}(z_n, nV)``; nonnegative by construction."""
    return localization_gap_detail(model, n, q0, target, R, tol, **kw).extra["gap"]


# -- profile dump ---------------------------------------------------------------

_HEADER = struct.Struct("<4sIQ")


def write_profile(path, profile) -> None:
    """Write a profile as ``GLDP`` | u32 version | u64 length | float64 data (little endian)."""
    data = np.ascontiguousarray(profile, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(PROFILE_MAGIC, PROFILE_VERSION, data.size))
        fh.write(data.tobytes())


def read_profile(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, version, n = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != PROFILE_MAGIC:
            raise ValueError("not a GLDP profile file")
        if version != PROFILE_VERSION:
            raise ValueError(f"unsupported profile version {version}")
        data = np.frombuffer(fh.read(8 * n), dtype="<f8")
    if data.size != n:
        raise ValueError("truncated profile file")
    return data.copy()
