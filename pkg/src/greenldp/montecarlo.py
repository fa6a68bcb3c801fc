"""Importance-sampling estimates of Green measures and hitting probabilities.

Paths are sampled under the exponentially tilted kernel
``p_i exp(a . v_i) / phi(a)``.  The likelihood ratio of a path after ``t``
steps is ``exp(-a . (Z_t - z)) phi(a)^t``, a function of the endpoint only
when ``phi(a) = 1``.

Randomness is counter based: paths are grouped in fixed blocks of
``BLOCK`` consecutive indices and block ``b`` draws from a Philox stream
keyed by ``SeedSequence(seed, spawn_key=(b,))``, so results do not depend
on how blocks are distributed over threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cgf import phi
from .green import TargetSet
from .model import JumpDistribution, StateSpace, WalkModel, communication_theta

__all__ = [
    "SamplerConfig",
    "MCEstimate",
    "HittingReport",
    "tilted_kernel",
    "mc_green",
    "mc_hitting",
    "path_weights",
    "default_horizon",
    "BLOCK",
]

BLOCK = 4096
LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    paths: int
    horizon: int | None = None
    tilt: tuple | None = None
    threads: int = 1

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be at least 1")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.tilt is not None:
            object.__setattr__(self, "tilt", tuple(float(x) for x in np.atleast_1d(self.tilt)))


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    std_error: float
    paths_used: int
    ess: float
    low_ess: bool = False

    @property
    def rel_error(self):
        return self.std_error / self.mean if self.mean > 0 else math.inf


def tilted_kernel(model, a) -> JumpDistribution:
    """Exponentially tilted step law; its mean is ``grad Lambda(a)``."""
    k = model.interior if isinstance(model, WalkModel) else model
    ev = phi(k, a)
    w = k.p * np.exp(k.steps @ ev.a)
    probs = w / math.fsum(w)
    return JumpDistribution(k.support, probs.tolist())


def _philox(seed, block):
    # (seed, block) is hashed into the 128-bit key; raw keys such as (0, b)
    # are low entropy
    ss = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


class _Sampler:
    def __init__(self, model: WalkModel, a):
        self.model = model
        self.d = model.dim
        self.a = np.zeros(self.d) if a is None else np.asarray(a, dtype=float)
        self.half = model.state_space is StateSpace.HALFSPACE
        self.kernels = [model.interior] + ([model.boundary] if self.half else [])
        self.tables = []
        for k in self.kernels:
            ev = phi(k, self.a)
            tk = tilted_kernel(k, self.a)
            cdf = np.cumsum(tk.p)
            cdf[-1] = 1.0
            # log of true / tilted probability for each step
            logr = ev.lam - k.steps @ self.a
            self.tables.append((np.asarray(k.support, dtype=np.int64), cdf, logr))
        self.log_phi = phi(model.interior, self.a).lam

    def step(self, rng, pos, logw):
        u = rng.random(len(pos))
        steps, cdf, logr = self.tables[0]
        idx = np.searchsorted(cdf, u, side="right")
        jump = steps[idx]
        dl = logr[idx]
        if self.half:
            at = pos[:, 0] == 0
            if at.any():
                bsteps, bcdf, blogr = self.tables[1]
                bidx = np.searchsorted(bcdf, u[at], side="right")
                jump[at] = bsteps[bidx]
                dl[at] = blogr[bidx]
        pos += jump
        if logw is not None:
            logw += dl

    def weight(self, pos, z, t, logw):
        """Likelihood ratio at time ``t``."""
        if logw is not None:
            return np.exp(logw)
        return np.exp(-(pos - z) @ self.a + t * self.log_phi)


def path_weights(model: WalkModel, a, seed: int, paths: int, steps: int):
    """Likelihood ratios of ``paths`` tilted paths after ``steps`` steps,
    computed by the running product of step ratios and by the endpoint
    formula.  Returns ``(incremental, endpoint)``."""
    s = _Sampler(model, a)
    rng = _philox(seed, 0)
    pos = np.zeros((paths, model.dim), dtype=np.int64)
    logw = np.zeros(paths)
    for _ in range(steps):
        s.step(rng, pos, logw)
    inc = np.exp(logw)
    end = s.weight(pos, np.zeros(model.dim), steps, None)
    return inc, end


def default_horizon(model: WalkModel, a, distance: float) -> int:
    """Step budget covering both the travel time and the diffusive time scale.

    ``max(100, 20 * distance, 25 * tr(Cov) / |mean|^2)`` for the tilted step
    law; the last term is the time after which the walk has drifted many
    standard deviations away, so late returns are negligible.
    """
    k = model.interior if a is None else tilted_kernel(model, a)
    mean = k.mean
    cov = (k.steps * k.p[:, None]).T @ k.steps - np.outer(mean, mean)
    speed2 = float(mean @ mean)
    diffusive = 25.0 * float(np.trace(cov)) / speed2 if speed2 > 0 else 0.0
    return int(math.ceil(max(100.0, 20.0 * distance, diffusive)))


def _blocks(paths):
    return [(b, min(BLOCK, paths - b * BLOCK)) for b in range((paths + BLOCK - 1) // BLOCK)]


def _run_blocks(fn, cfg):
    blocks = _blocks(cfg.paths)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            parts = list(ex.map(fn, blocks))
    else:
        parts = [fn(b) for b in blocks]
    return np.concatenate(parts)


def _estimate(y):
    n = len(y)
    mean = float(y.mean())
    se = float(y.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    s2 = float((y * y).sum())
    ess = float(y.sum() ** 2 / s2) if s2 > 0 else 0.0
    low = ess < 0.01 * n
    if low:
        warnings.warn(f"effective sample size {ess:.1f} of {n} paths; tilt badly matched",
                      RuntimeWarning, stacklevel=3)
    return MCEstimate(mean, se, n, ess, low)


def _check_tilt(model, a):
    if a is None:
        return None
    a = np.asarray(a, dtype=float)
    if a.shape != (model.dim,):
        raise ValueError(f"tilt has shape {a.shape}, expected ({model.dim},)")
    return a


def mc_green(model: WalkModel, z, target: TargetSet, cfg: SamplerConfig) -> MCEstimate:
    """Importance-sampling estimate of ``sum_{t <= horizon} P_z(Z(t) in nB)``.

    Each path contributes the sum of its likelihood ratios at the times it
    sits in the target.  Tilts off the level set ``phi(a) = 1`` are allowed
    but carry the time factor ``phi(a)^t`` and are flagged with a warning.
    The default horizon is :func:`default_horizon`.
    """
    z = np.atleast_1d(np.asarray(z, dtype=np.int64))
    if not model.contains(z):
        raise ValueError("source outside the state space")
    a = _check_tilt(model, cfg.tilt)
    s = _Sampler(model, a)
    if a is not None and abs(s.log_phi) > LEVEL_TOL and model.homogeneous:
        warnings.warn("tilt is off the level set phi(a) = 1; weights depend on time",
                      RuntimeWarning, stacklevel=2)
    c = target.lattice_center()
    r = target.scale * target.radius
    horizon = cfg.horizon or default_horizon(model, a, float(np.linalg.norm(c - z)))
    track = s.half

    def block(arg):
        b, m = arg
        rng = _philox(cfg.seed, b)
        pos = np.tile(z, (m, 1))
        logw = np.zeros(m) if track else None
        y = np.zeros(m)
        hit = np.linalg.norm(pos - c, axis=1) < r
        y[hit] += 1.0
        for t in range(1, horizon + 1):
            s.step(rng, pos, logw)
            hit = np.linalg.norm(pos - c, axis=1) < r
            if hit.any():
                y[hit] += s.weight(pos[hit], z, t, None if logw is None else logw[hit])
        return y

    return _estimate(_run_blocks(block, cfg))


@dataclass(frozen=True)
class HittingReport:
    """Hitting-probability estimate against the communication bound.

    ``ratio`` is ``log(estimate) / (-theta |z' - z|)``; values at most 1
    mean the bound ``P >= exp(-theta |z' - z|)`` is respected.
    """

    estimate: MCEstimate
    theta: float
    log_bound: float
    ratio: float
    satisfied: bool


def mc_hitting(model: WalkModel, z, z_prime, cfg: SamplerConfig, theta: float | None = None) -> HittingReport:
    """Estimate ``P_z(Z hits z' within the horizon)`` and compare with ``exp(-theta |z' - z|)``.

    The hitting ball has radius 1, so hitting means landing on ``z'``.
    ``theta`` defaults to the communication certificate in direction
    ``z' - z``.  The bound counts as satisfied when
    ``log P >= -theta |z' - z| - 3 * relative standard error``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=np.int64))
    zp = np.atleast_1d(np.asarray(z_prime, dtype=np.int64))
    if not (model.contains(z) and model.contains(zp)):
        raise ValueError("points outside the state space")
    dist = float(np.linalg.norm(zp - z))
    if dist == 0:
        est = MCEstimate(1.0, 0.0, cfg.paths, float(cfg.paths))
        return HittingReport(est, theta or 0.0, 0.0, 0.0, True)
    if theta is None:
        theta = communication_theta(model, [zp - z]).theta
    a = _check_tilt(model, cfg.tilt)
    s = _Sampler(model, a)
    horizon = cfg.horizon or default_horizon(model, a, dist)

    def block(arg):
        b, m = arg
        rng = _philox(cfg.seed, b)
        pos = np.tile(z, (m, 1))
        logw = np.zeros(m) if s.half else None
        y = np.zeros(m)
        alive = np.ones(m, dtype=bool)
        for t in range(1, horizon + 1):
            s.step(rng, pos, logw)
            hit = alive & np.all(pos == zp, axis=1)
            if hit.any():
                y[hit] = s.weight(pos[hit], z, t, None if logw is None else logw[hit])
                alive &= ~hit
                if not alive.any():
                    break
        return y

    est = _estimate(_run_blocks(block, cfg))
    log_bound = -theta * dist
    if est.mean > 0:
        log_est = math.log(est.mean)
        ratio = log_est / log_bound
        satisfied = log_est >= log_bound - 3.0 * est.rel_error
    else:
        ratio, satisfied = math.inf, False
    return HittingReport(est, theta, log_bound, ratio, satisfied)
