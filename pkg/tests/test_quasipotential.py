import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from greenldp.cgf import legendre
from greenldp.model import JumpDistribution, WalkModel, communication_theta, load_model
from greenldp.oracles import nn1d_legendre, nn1d_quasipotential, nn1d_tilt_root
from greenldp.quasipotential import (
    IDENTITIES,
    identity_suite,
    quasipotential,
    quasipotential_inf_t,
    quasipotential_support,
    rate_finite_t,
)

from strategies import models

LOG73 = math.log(7 / 3)


def test_tilt_root_oracle():
    assert nn1d_tilt_root(0.7) == pytest.approx(math.log(3 / 7), rel=1e-15)
    assert nn1d_quasipotential(0.7, -1.0) == pytest.approx(LOG73, rel=1e-15)


@pytest.mark.parametrize("method", ["support", "inf_t"])
def test_closed_form_1d(walk1d, method):
    r = quasipotential(walk1d, 0.0, -1.0, method=method)
    assert r.value == pytest.approx(LOG73, abs=1e-9)
    assert r.converged
    assert quasipotential(walk1d, 0.0, 1.0, method=method).value == pytest.approx(0.0, abs=1e-9)
    assert quasipotential(walk1d, 2.0, -3.0, method=method).value == pytest.approx(5 * LOG73, abs=1e-9)


def test_optimal_horizon_and_tilt_1d(walk1d):
    r = quasipotential_inf_t(walk1d, 0.0, -1.0)
    # optimal velocity is the reversed drift -0.4, so T* = 2.5
    assert r.t_star == pytest.approx(2.5, rel=1e-6)
    assert r.a_star == pytest.approx([math.log(3 / 7)], abs=1e-6)
    s = quasipotential_support(walk1d, 0.0, -1.0)
    assert s.a_star == pytest.approx([math.log(3 / 7)], abs=1e-9)
    assert s.t_star == pytest.approx(2.5, rel=1e-6)


def test_rate_finite_t_closed_form(walk1d):
    for T, d in [(1.0, -0.5), (3.0, 0.9), (0.5, 0.2)]:
        r = rate_finite_t(walk1d, T, 0.0, d)
        assert r.value == pytest.approx(T * nn1d_legendre(0.7, d / T), abs=1e-12)


def test_diagonal_and_unreachable(walk1d):
    r = quasipotential(walk1d, 0.3, 0.3)
    assert r.value == 0.0 and r.coincident and r.t_star == 0.0
    right = WalkModel(1, JumpDistribution([(1,), (2,)], [0.5, 0.5]))
    assert quasipotential(right, 0.0, -1.0).value == math.inf
    assert quasipotential(right, 0.0, -1.0, method="inf_t").value == math.inf


def test_rejects_halfspace_and_bad_method(walk1d):
    half = load_model("""
dim = 1
state_space = "halfspace"
[interior]
support = [[1], [-1]]
probs = [0.7, 0.3]
[boundary]
support = [[1]]
probs = [1.0]
""")
    with pytest.raises(ValueError):
        quasipotential(half, 1.0, 2.0)
    with pytest.raises(ValueError):
        quasipotential(walk1d, 0.0, 1.0, method="bisect")


def test_2d_against_brute_force_horizon_grid(walk2d):
    q, qp = np.zeros(2), np.array([-0.5, 0.3])
    r = quasipotential_support(walk2d, q, qp)
    Ts = np.geomspace(0.6, 50, 4000)
    brute = min(T * legendre(walk2d, (qp - q) / T).value for T in Ts)
    assert r.value <= brute + 1e-12
    assert r.value == pytest.approx(brute, rel=1e-5)


vec2 = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


@given(models(dim=1), st.floats(-2, 2), st.floats(-2, 2))
def test_methods_agree_1d(m, q, qp):
    a = quasipotential_support(m, q, qp).value
    b = quasipotential_inf_t(m, q, qp).value
    assert abs(a - b) <= 1e-7 * max(1.0, a)


@given(models(dim=2), vec2, vec2)
def test_methods_agree_2d(m, q, qp):
    a = quasipotential_support(m, q, qp).value
    b = quasipotential_inf_t(m, q, qp).value
    assert abs(a - b) <= 1e-7 * max(1.0, a)


@given(models(dim=2), vec2, vec2, st.floats(0.1, 10))
def test_homogeneity_and_translation(m, q, qp, s):
    base = quasipotential_support(m, q, qp).value
    scaled = quasipotential_support(m, s * np.array(q), s * np.array(qp)).value
    assert scaled == pytest.approx(s * base, rel=1e-9, abs=1e-12)
    shifted = quasipotential_support(m, np.array(q) + 1.0, np.array(qp) + 1.0).value
    assert shifted == pytest.approx(base, rel=1e-9, abs=1e-12)


@given(models(dim=2), vec2, vec2, vec2)
def test_triangle_inequality(m, a, b, c):
    ab = quasipotential_support(m, a, b).value
    bc = quasipotential_support(m, b, c).value
    ac = quasipotential_support(m, a, c).value
    assert ac <= ab + bc + 1e-9 * max(1.0, ac)


@given(models(dim=2), vec2)
def test_lipschitz_bound(m, d):
    d = np.array(d)
    if np.linalg.norm(d) < 1e-6:
        return
    theta = communication_theta(m, [d]).theta
    assert quasipotential_support(m, np.zeros(2), d).value <= theta * np.linalg.norm(d) * (1 + 1e-9)


@given(models(dim=2), vec2)
def test_zero_along_drift(m, q):
    qp = np.array(q) + 3.0 * m.interior.mean
    assert quasipotential_support(m, q, qp).value == pytest.approx(0.0, abs=1e-12)


def test_identity_suite_small(walk2d):
    rep = identity_suite(walk2d, samples=40, seed=3)
    assert rep.passed, list(rep.lines())
    assert set(rep.max_violation) == set(IDENTITIES)
    again = identity_suite(walk2d, samples=40, seed=3, threads=3)
    assert again.max_violation == rep.max_violation
