"""Importance sampling for a rare visit: G(0, {-30}) of the (0.7, 0.3) walk.

The exact value is 2.5 (3/7)^30, about 2.3e-11.  Plain simulation with 1e5
paths would expect far fewer than one visit; tilting the steps by the
quasipotential maximizer a* = log(3/7) makes every path walk left.

    python demos/rare_event.py
"""

import math
import warnings

from greenldp import SamplerConfig, TargetSet, mc_green, nearest_neighbor, quasipotential

walk = nearest_neighbor([0.7, 0.3])
target = TargetSet((-30.0,), 0.5, 1)
exact = 2.5 * (3 / 7) ** 30

a_star = quasipotential(walk, [0.0], [-30.0]).a_star
print(f"tilt a* = {a_star[0]:.9f}  (log(3/7) = {math.log(3 / 7):.9f})")

est = mc_green(walk, (0,), target, SamplerConfig(seed=1, paths=100_000, horizon=400, tilt=tuple(a_star)))
print(f"tilted  : {est.mean:.5e} +- {est.std_error:.1e}   ESS {est.ess:.0f}")
print(f"exact   : {exact:.5e}")
print(f"z-score : {(est.mean - exact) / est.std_error:+.2f}")

with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # zero hits, hence zero ESS, is the point
    naive = mc_green(walk, (0,), target, SamplerConfig(seed=1, paths=100_000, horizon=400))
print(f"untilted: {naive.mean:.5e}  (expected number of visiting paths {1e5 * exact / 2.5:.1e})")
