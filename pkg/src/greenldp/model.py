"""Random-walk models on the integer lattice.

A model is a finite-support jump law (the interior kernel) acting on either
the full lattice Z^d or the half-lattice {z : z_1 >= 0}.  Half-space models
carry a second kernel used on the hyperplane z_1 = 0.
"""

from __future__ import annotations

import enum
import math
import sys
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import tomli_w
from scipy.optimize import linprog

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "JumpDistribution",
    "WalkModel",
    "StateSpace",
    "TransienceMode",
    "CommunicationCertificate",
    "ModelError",
    "load_model",
    "load_model_file",
    "serialize_model",
    "drift",
    "step_kernel",
    "communication_theta",
    "nearest_neighbor",
]

PROB_SUM_TOL = 1e-12
DRIFT_TOL = 1e-12


class ModelError(ValueError):
    """Invalid model definition; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class StateSpace(str, enum.Enum):
    FULL = "full"
    HALFSPACE = "halfspace"


class TransienceMode(str, enum.Enum):
    DRIFT = "drift"
    DIMENSION = "dimension"


@dataclass(frozen=True)
class JumpDistribution:
    """Finite-support law of one lattice step.

    Parameters
    ----------
    support : sequence of integer vectors
        Distinct lattice steps.
    probs : sequence of float
        Strictly positive probabilities summing to one (not renormalized).
    """

    support: tuple[tuple[int, ...], ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        support = tuple(tuple(int(c) for c in v) for v in self.support)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        _validate_jumps(support, probs, "kernel")

    @property
    def dim(self) -> int:
        return len(self.support[0])

    @cached_property
    def steps(self) -> np.ndarray:
        """Support as a read-only ``(k, d)`` float array."""
        out = np.array(self.support, dtype=float)
        out.flags.writeable = False
        return out

    @cached_property
    def p(self) -> np.ndarray:
        out = np.array(self.probs, dtype=float)
        out.flags.writeable = False
        return out

    @cached_property
    def logp(self) -> np.ndarray:
        out = np.log(self.p)
        out.flags.writeable = False
        return out

    @property
    def mean(self) -> np.ndarray:
        return self.p @ self.steps


def _validate_jumps(support, probs, path):
    if len(support) == 0:
        raise ModelError(f"{path}.support", "empty support")
    if len(support) != len(probs):
        raise ModelError(
            f"{path}.probs",
            f"{len(probs)} probabilities for {len(support)} support vectors",
        )
    dims = {len(v) for v in support}
    if len(dims) != 1 or 0 in dims:
        raise ModelError(f"{path}.support", "support vectors must share a positive dimension")
    seen = set()
    for i, v in enumerate(support):
        if v in seen:
            raise ModelError(f"{path}.support[{i}]", f"duplicate support vector {list(v)}")
        seen.add(v)
    for i, p in enumerate(probs):
        if not (p > 0.0) or not math.isfinite(p):
            raise ModelError(f"{path}.probs[{i}]", f"probability {p!r} is not strictly positive")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ModelError(f"{path}.probs", f"probability sum {total!r} differs from 1")


@dataclass(frozen=True)
class WalkModel:
    """Lattice random walk, homogeneous off the half-space boundary.

    ``transience_mode`` is derived from the drift: nonzero drift gives
    ``DRIFT``, zero drift gives ``DIMENSION`` (transient only for d >= 3).
    """

    dim: int
    interior: JumpDistribution
    boundary: JumpDistribution | None = None
    state_space: StateSpace = StateSpace.FULL
    transience_mode: TransienceMode = field(init=False)

    def __post_init__(self):
        state_space = StateSpace(self.state_space)
        object.__setattr__(self, "state_space", state_space)
        if self.dim < 1:
            raise ModelError("dim", "dimension must be a positive integer")
        if self.interior.dim != self.dim:
            raise ModelError("interior.support", f"vectors have dimension {self.interior.dim}, expected {self.dim}")
        if state_space is StateSpace.HALFSPACE:
            if self.boundary is None:
                raise ModelError("boundary", "half-space model requires a boundary kernel")
            if self.boundary.dim != self.dim:
                raise ModelError("boundary.support", f"vectors have dimension {self.boundary.dim}, expected {self.dim}")
            for i, v in enumerate(self.boundary.support):
                if v[0] < 0:
                    raise ModelError(f"boundary.support[{i}]", "boundary step leaves the half-space")
            for i, v in enumerate(self.interior.support):
                if v[0] < -1:
                    raise ModelError(
                        f"interior.support[{i}]",
                        "interior step can jump over the boundary hyperplane",
                    )
        elif self.boundary is not None:
            raise ModelError("boundary", "boundary kernel is only allowed for half-space models")
        m = self.interior.mean
        mode = TransienceMode.DRIFT if np.linalg.norm(m) > DRIFT_TOL else TransienceMode.DIMENSION
        object.__setattr__(self, "transience_mode", mode)

    @property
    def homogeneous(self) -> bool:
        return self.state_space is StateSpace.FULL

    @property
    def transient(self) -> bool:
        return self.transience_mode is TransienceMode.DRIFT or self.dim >= 3

    def contains(self, z) -> bool:
        z = np.asarray(z)
        if z.shape != (self.dim,):
            return False
        return self.state_space is StateSpace.FULL or z[0] >= 0

    def in_reachable_cone(self, q, tol=0.0) -> bool:
        """Membership of a scaled position in the closed cone of limit points."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dim,):
            return False
        return self.state_space is StateSpace.FULL or q[0] >= -tol


def nearest_neighbor(probs: Sequence[float]) -> WalkModel:
    """Full-lattice nearest-neighbour walk.

    ``probs`` lists the probabilities of +e_1, ..., +e_d, -e_1, ..., -e_d.
    """
    if len(probs) % 2:
        raise ValueError("need 2d probabilities")
    d = len(probs) // 2
    eye = np.eye(d, dtype=int)
    support = [tuple(r) for r in eye] + [tuple(-r) for r in eye]
    return WalkModel(d, JumpDistribution(support, probs))


def drift(model: WalkModel) -> np.ndarray:
    """Mean step of the interior kernel."""
    return model.interior.mean


def step_kernel(model: WalkModel, z) -> JumpDistribution:
    """One-step law at lattice point ``z``."""
    z = np.asarray(z)
    if not model.contains(z):
        raise ValueError(f"point {z.tolist()} is outside the state space")
    if model.state_space is StateSpace.HALFSPACE and z[0] == 0:
        return model.boundary
    return model.interior


# -- config documents ---------------------------------------------------------


def _kernel_from_doc(doc, path, dim):
    if not isinstance(doc, Mapping):
        raise ModelError(path, "expected a table")
    extra = set(doc) - {"support", "probs"}
    if extra:
        raise ModelError(f"{path}.{sorted(extra)[0]}", "unknown field")
    for key in ("support", "probs"):
        if key not in doc:
            raise ModelError(f"{path}.{key}", "missing field")
    support, probs = doc["support"], doc["probs"]
    if not isinstance(support, list) or not support:
        raise ModelError(f"{path}.support", "empty support")
    for i, v in enumerate(support):
        if not isinstance(v, list) or not all(isinstance(c, int) and not isinstance(c, bool) for c in v):
            raise ModelError(f"{path}.support[{i}]", "expected an array of integers")
        if len(v) != dim:
            raise ModelError(f"{path}.support[{i}]", f"length {len(v)}, expected dim = {dim}")
    if not isinstance(probs, list):
        raise ModelError(f"{path}.probs", "expected an array of decimals")
    for i, p in enumerate(probs):
        if not isinstance(p, float):
            raise ModelError(f"{path}.probs[{i}]", f"{p!r} is not a decimal literal")
    try:
        return JumpDistribution([tuple(v) for v in support], probs)
    except ModelError as exc:
        raise ModelError(exc.path.replace("kernel", path, 1), str(exc).split(": ", 1)[1]) from None


def load_model(config_text: str) -> WalkModel:
    """Parse and validate a TOML model document.

    Examples
    --------
    >>> m = load_model('''
    ... dim = 1
    ... state_space = "full"
    ... [interior]
    ... support = [[1], [-1]]
    ... probs = [0.7, 0.3]
    ... ''')
    >>> round(float(drift(m)[0]), 12)
    0.4
    """
    try:
        doc = tomllib.loads(config_text)
    except tomllib.TOMLDecodeError as exc:
        raise ModelError("<document>", f"not valid TOML ({exc})") from None
    unknown = set(doc) - {"dim", "state_space", "interior", "boundary"}
    if unknown:
        raise ModelError(sorted(unknown)[0], "unknown field")
    dim = doc.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise ModelError("dim", "expected a positive integer")
    ss = doc.get("state_space", "full")
    try:
        state_space = StateSpace(ss)
    except ValueError:
        raise ModelError("state_space", f"expected 'full' or 'halfspace', got {ss!r}") from None
    if "interior" not in doc:
        raise ModelError("interior", "missing field")
    interior = _kernel_from_doc(doc["interior"], "interior", dim)
    boundary = None
    if "boundary" in doc:
        boundary = _kernel_from_doc(doc["boundary"], "boundary", dim)
    return WalkModel(dim, interior, boundary, state_space)


def load_model_file(path) -> WalkModel:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())


def serialize_model(model: WalkModel) -> str:
    """Inverse of :func:`load_model`."""
    doc = {"dim": model.dim, "state_space": model.state_space.value}
    for name in ("interior", "boundary"):
        kernel = getattr(model, name)
        if kernel is not None:
            doc[name] = {
                "support": [list(v) for v in kernel.support],
                "probs": list(kernel.probs),
            }
    return tomli_w.dumps(doc)


# -- communication condition --------------------------------------------------


@dataclass(frozen=True)
class CommunicationCertificate:
    """Feasible cost rate for the communication condition.

    ``witness_paths`` maps each requested direction (as a tuple) to a step
    sequence, given as indices into the kernel support, whose probability is
    at least ``exp(-theta * (|displacement| + 1))``.
    """

    theta: float
    witness_paths: dict
    per_direction: dict

    def path_cost(self, model: WalkModel, direction) -> tuple[float, np.ndarray]:
        """Return ``(-log probability, net displacement)`` of a stored witness."""
        seq = self.witness_paths[tuple(direction)]
        k = model.interior
        cost = math.fsum(-math.log(k.probs[i]) for i in seq)
        disp = np.sum([k.support[i] for i in seq], axis=0)
        return cost, np.asarray(disp, dtype=float)


def _lp_cost(steps, costs, u):
    res = linprog(costs, A_eq=steps.T, b_eq=u, bounds=(0, None), method="highs")
    if res.status != 0:
        return None, None
    return float(res.fun), res.x


def communication_theta(model: WalkModel, directions) -> CommunicationCertificate:
    """Certify a communication cost ``theta`` along the requested directions.

    For each unit direction ``u`` solves ``min sum_i c_i x_i`` subject to
    ``sum_i x_i v_i = u``, ``x >= 0`` with ``c_i = -log p_i``; ``theta`` is the
    largest optimum.  A lattice witness path is obtained by rounding ``L x``
    for the smallest ``L`` in 1..200 that satisfies the certificate bound.
    """
    k = model.interior
    steps, costs = k.steps, -np.log(k.p)
    theta = 0.0
    per_dir, witnesses, sols = {}, {}, {}
    for u in directions:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        norm = np.linalg.norm(u)
        if u.shape != (model.dim,) or norm == 0:
            raise ValueError(f"bad direction {u.tolist()}")
        u = u / norm
        if not model.in_reachable_cone(u):
            raise ValueError(f"direction {u.tolist()} leaves the state space")
        val, x = _lp_cost(steps, costs, u)
        if val is None:
            raise ValueError(
                f"direction {u.tolist()} is not in the positive span of the support; "
                "communication cannot be certified"
            )
        key = tuple(float(c) for c in u)
        per_dir[key] = val
        sols[key] = x
        theta = max(theta, val)
    for key, x in sols.items():
        witnesses[key] = _witness(steps, costs, x, theta, np.array(key))
    return CommunicationCertificate(theta, witnesses, per_dir)


def _witness(steps, costs, x, theta, u):
    fallback = None
    for scale in range(1, 201):
        counts = np.rint(scale * x).astype(int)
        if counts.sum() == 0:
            continue
        disp = counts @ steps
        norm = np.linalg.norm(disp)
        if norm == 0:
            continue
        cost = math.fsum(float(c) * n for c, n in zip(costs, counts))
        if cost <= theta * norm + theta:
            seq = tuple(i for i, n in enumerate(counts) for _ in range(n))
            if np.linalg.norm(disp / norm - u) <= 0.1:
                return seq
            fallback = fallback or seq
    if fallback is None:
        raise ArithmeticError("no lattice witness path found for the LP solution")
    return fallback
