import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenldp.cgf import cgf
from greenldp.green import TargetSet, green_full
from greenldp.model import load_model
from greenldp.montecarlo import (
    BLOCK,
    SamplerConfig,
    default_horizon,
    mc_green,
    mc_hitting,
    path_weights,
    tilted_kernel,
)
from greenldp.oracles import nn1d_green

TILT = (math.log(3 / 7),)


def point(y):
    return TargetSet(tuple(np.atleast_1d(y)), 0.5, 1)


def test_untilted_small_case(walk1d):
    # the drifted walk is near +80 after 200 steps; later returns to -2 are negligible
    est = mc_green(walk1d, (0,), point(-2), SamplerConfig(0, 1_000_000, 200))
    assert abs(est.mean - nn1d_green(0.7, -2)) <= 3 * est.std_error
    assert est.paths_used == 1_000_000 and not est.low_ess


def test_estimator_calibration(walk1d):
    # z-scores over independent seeds should look standard normal
    exact = nn1d_green(0.7, -2)
    z = []
    for seed in range(60):
        est = mc_green(walk1d, (0,), point(-2), SamplerConfig(seed, 4096, 120))
        z.append((est.mean - exact) / est.std_error)
    z = np.array(z)
    assert abs(z.mean()) < 0.5 and 0.7 < z.std() < 1.3


def test_tilted_rare_target(walk1d):
    est = mc_green(walk1d, (0,), point(-30), SamplerConfig(1, 100_000, 200, TILT))
    exact = nn1d_green(0.7, -30)
    assert exact == pytest.approx(2.2837e-11, rel=1e-4)
    assert est.rel_error < 0.2
    assert abs(est.mean - exact) <= 4 * est.std_error


def test_reproducible_across_threads(walk2d):
    cfg = dict(seed=99, paths=3 * BLOCK + 17, horizon=60, tilt=(0.1, -0.2))
    tgt = TargetSet((-2.0, 1.0), 1.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = mc_green(walk2d, (0, 0), tgt, SamplerConfig(threads=1, **cfg))
        b = mc_green(walk2d, (0, 0), tgt, SamplerConfig(threads=3, **cfg))
        c = mc_green(walk2d, (0, 0), tgt, SamplerConfig(threads=1, **cfg))
    assert a == b == c
    d = mc_green(walk2d, (0, 0), tgt, SamplerConfig(seed=100, paths=cfg["paths"], horizon=60))
    assert d.mean != a.mean


def test_weights_endpoint_formula(walk2d):
    inc, end = path_weights(walk2d, np.array([0.3, -0.1]), seed=5, paths=500, steps=80)
    assert np.allclose(inc, end, rtol=1e-12, atol=0)


def test_tilted_kernel_mean_is_cgf_gradient(walk2d):
    a = np.array([-0.4, 0.25])
    k = tilted_kernel(walk2d, a)
    assert k.mean == pytest.approx(cgf(walk2d.interior, a)[1], abs=1e-14)
    assert math.fsum(k.probs) == pytest.approx(1.0, abs=1e-15)


def test_off_level_set_tilt_warns(walk1d):
    with pytest.warns(RuntimeWarning, match="level set"):
        mc_green(walk1d, (0,), point(-1), SamplerConfig(0, 100, 50, (-0.3,)))


def test_low_ess_warning(walk1d):
    # tilting the wrong way starves the target
    with pytest.warns(RuntimeWarning, match="effective sample size"):
        est = mc_green(walk1d, (0,), point(-12), SamplerConfig(0, 2000, 100))
    assert est.low_ess


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(0, 0)
    with pytest.raises(ValueError):
        SamplerConfig(0, 10, horizon=0)


def test_tilt_shape_checked(walk1d):
    with pytest.raises(ValueError):
        mc_green(walk1d, (0,), point(-1), SamplerConfig(0, 10, 10, (0.1, 0.2)))


def test_default_horizon_covers_diffusion(walk1d):
    assert default_horizon(walk1d, None, 1.0) == max(100, math.ceil(25 * 0.84 / 0.16))
    assert default_horizon(walk1d, None, 40.0) == 800


def test_hitting_certificate(walk1d):
    rep = mc_hitting(walk1d, (0,), (-4,), SamplerConfig(3, 20_000, 200, TILT))
    # under the tilt every path reaches -4 with weight (3/7)^4
    assert rep.estimate.mean == pytest.approx((3 / 7) ** 4, rel=1e-12)
    assert rep.satisfied and 0 < rep.ratio <= 1
    same = mc_hitting(walk1d, (2,), (2,), SamplerConfig(0, 10))
    assert same.estimate.mean == 1.0 and same.satisfied


def test_halfspace_estimator_matches_exact():
    model = load_model("""
dim = 2
state_space = "halfspace"
[interior]
support = [[1, 0], [-1, 0], [0, 1], [0, -1]]
probs = [0.2, 0.3, 0.35, 0.15]
[boundary]
support = [[1, 0], [0, 1], [0, -1]]
probs = [0.5, 0.3, 0.2]
""")
    tgt = TargetSet((0.0, 3.0), 1.5)
    exact = green_full(model, (1, 0), tgt).value
    est = mc_green(model, (1, 0), tgt, SamplerConfig(11, 20_000, 400, (0.1, 0.0)))
    assert abs(est.mean - exact) <= 4 * est.std_error


@settings(max_examples=10)
@given(st.integers(0, 2**63 - 1), st.integers(1, 3))
def test_seed_determinism_property(seed, threads):
    from greenldp import nearest_neighbor

    m = nearest_neighbor([0.6, 0.4])
    cfg = SamplerConfig(seed, BLOCK + 5, 40, None, threads)
    a = mc_green(m, (0,), point(-1), cfg)
    b = mc_green(m, (0,), point(-1), SamplerConfig(seed, BLOCK + 5, 40, None, 1))
    assert a == b
