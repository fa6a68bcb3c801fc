import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from greenldp.diagnostics import (
    CSV_COLUMNS,
    DiagnosticSeries,
    ball_infimum,
    cutoff_k,
    cutoff_kappa,
    fit_affine_inverse,
    ldp_scan,
    localization_scan,
)
from greenldp.green import TargetSet
from greenldp.model import JumpDistribution, WalkModel, nearest_neighbor
from greenldp.oracles import nn1d_legendre

LOG73 = math.log(7 / 3)


@pytest.fixture(scope="module")
def scan1d():
    return ldp_scan(nearest_neighbor([0.7, 0.3]), 0.0, -1.0, 0.25, range(4, 84, 4))


def test_fit_recovers_affine_model():
    n = np.array([5, 10, 20, 40])
    a, b, se = fit_affine_inverse(n, 0.3 - 2.0 / n)
    assert a == pytest.approx(0.3, abs=1e-12) and b == pytest.approx(-2.0, abs=1e-10)
    assert se == pytest.approx(0.0, abs=1e-10)


def test_fit_degenerate_lengths():
    assert fit_affine_inverse([7], [0.4]) == (0.4, 0.0, math.inf)
    a, b, se = fit_affine_inverse([5, 10], [0.5, 0.4])
    assert se == math.inf and a == pytest.approx(0.3)


def test_series_invariants():
    with pytest.raises(ValueError):
        DiagnosticSeries([1, 2], [0.1], 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        DiagnosticSeries([2, 2], [0.1, 0.2], 0.0, 0.0, 0.0)


def test_scan_1d_closed_form(scan1d):
    assert scan1d.predicted == pytest.approx(0.75 * LOG73, abs=1e-9)
    assert scan1d.predicted_open == pytest.approx(scan1d.predicted, rel=1e-3)
    assert abs(scan1d.slope_fit - 0.75 * LOG73) <= 0.05 * 0.75 * LOG73
    assert np.isfinite(scan1d.fit_stderr)
    assert scan1d.backends == ["exact"] * 20


def test_sandwich_property(scan1d):
    eps = 0.05 * max(1.0, scan1d.predicted)
    for y in scan1d.log_measures[-2:]:
        assert scan1d.predicted_open - eps <= y <= scan1d.predicted + eps


def test_scan_log_measures_match_geometric_sums(scan1d):
    for n, y in zip(scan1d.n_values, scan1d.log_measures):
        ys = [k for k in range(n - n // 4, n + n // 4 + 1) if abs(k - n) < n / 4]
        mu = math.fsum(2.5 * (3 / 7) ** k for k in ys)
        assert y == pytest.approx(-math.log(mu) / n, rel=1e-8)


def test_drift_ray_target_has_zero_rate(walk1d):
    s = ldp_scan(walk1d, 0.0, 1.0, 0.25, [10, 20, 40])
    assert s.predicted == 0.0
    assert abs(s.log_measures[-1]) < 0.1
    assert abs(s.log_measures[-1]) < abs(s.log_measures[0])


def test_single_n_degenerate_fit(walk1d):
    s = ldp_scan(walk1d, 0.0, -1.0, 0.25, [16])
    assert s.slope_fit == s.log_measures[0]
    assert s.fit_stderr == math.inf


def test_unreachable_n_excluded():
    m = WalkModel(1, JumpDistribution([(2,), (-2,)], [0.7, 0.3]))
    s = ldp_scan(m, 0.0, -1.0, 0.01, [3, 4, 5, 6])
    assert s.excluded == [3, 5]
    assert s.n_values == [4, 6]


def test_scan_preconditions(walk1d):
    with pytest.raises(ValueError):
        ldp_scan(walk1d, 0.0, -1.0, 0.0, [4])
    with pytest.raises(ValueError):
        ldp_scan(nearest_neighbor([0.5, 0.5]), 0.0, -1.0, 0.25, [4])
    with pytest.raises(ValueError):
        ldp_scan(walk1d, 0.0, -1.0, 0.25, [4], backend="gpu")


def test_csv_format(scan1d):
    text = scan1d.to_csv()
    assert "\r" not in text and text.endswith("\n")
    lines = text.split("\n")[:-1]
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 21
    first = lines[1].split(",")
    assert first[0] == "4" and first[5] == "exact" and first[6] == ""
    assert float(first[3]) == scan1d.log_measures[0]


def test_exact_and_mc_backends_agree(walk1d):
    ns = [8, 12]
    ex = ldp_scan(walk1d, 0.0, -1.0, 0.25, ns, backend="exact")
    mc = ldp_scan(walk1d, 0.0, -1.0, 0.25, ns, backend="mc", mc_paths=20000, seed=4)
    assert mc.backends == ["mc", "mc"]
    for y_ex, y_mc, se in zip(ex.log_measures, mc.log_measures, mc.std_errors):
        assert abs(y_ex - y_mc) <= 4 * se
    row = mc.to_csv().split("\n")[1].split(",")
    assert row[1] == "" and row[5] == "mc" and float(row[6]) > 0


def test_ball_infimum_2d_vs_brute(walk2d):
    from greenldp.quasipotential import quasipotential_support

    val, arg = ball_infimum(walk2d, (0, 0), (-0.5, -0.5), 0.25)
    th = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    ring = np.c_[-0.5 + 0.25 * np.cos(th), -0.5 + 0.25 * np.sin(th)]
    brute = min(quasipotential_support(walk2d, (0, 0), p).value for p in ring[::4])
    assert val <= brute + 1e-9
    assert val == pytest.approx(brute, rel=1e-3)


# -- cutoffs -----------------------------------------------------------------------


def test_cutoff_kappa_1d(walk1d):
    r = cutoff_kappa(walk1d, 1.0, 0.0, -1.0)
    assert r.c == 2.0
    assert r.M_c == pytest.approx(0.7 * math.exp(2) + 0.3 * math.exp(-2), rel=1e-15)
    assert r.kappa == A_over(1.0, r.M_c)
    assert r.kappa == pytest.approx(0.30282, abs=1e-5)
    assert r.short_ok


def A_over(A, mc):
    return A / (2 * math.log(mc))


@given(st.floats(0.05, 5.0), st.floats(-3, 3).filter(lambda x: abs(x) > 0.1))
def test_kappa_double_entry(A, qp):
    m = nearest_neighbor([0.7, 0.3])
    r = cutoff_kappa(m, A, 0.0, qp, n_grid=())
    c = 2 * A / abs(qp)
    mc = max(1.0, 0.7 * math.exp(c) + 0.3 * math.exp(-c))
    assert r.c == pytest.approx(c, rel=1e-15)
    assert r.M_c == pytest.approx(mc, rel=1e-14)
    assert r.kappa == A / (2 * math.log(r.M_c))


@settings(max_examples=15)
@given(st.floats(0.05, 3.0))
def test_kappa_decreases_when_A_doubles(A):
    m = nearest_neighbor([0.7, 0.3])
    a = cutoff_kappa(m, A, 0.0, -1.0, n_grid=())
    b = cutoff_kappa(m, 2 * A, 0.0, -1.0, n_grid=())
    assert b.c == 2 * a.c and b.kappa < a.kappa


def test_cutoff_kappa_errors(walk1d):
    with pytest.raises(ValueError):
        cutoff_kappa(walk1d, 1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        cutoff_kappa(walk1d, 0.0, 0.0, 1.0)
    point_mass = WalkModel(1, JumpDistribution([(1,)], [1.0]))
    with pytest.raises(ValueError, match="single"):
        cutoff_kappa(point_mass, 1.0, 0.0, 1.0)


def test_cutoff_k_1d(walk1d):
    r = cutoff_k(walk1d, 1.0, 1.0, 0.0, 1.25, V=((-1.0,), 0.25))
    rate0 = nn1d_legendre(0.7, 0.0)
    assert rate0 == pytest.approx(0.0871767, abs=1e-7)
    assert r.rate_00 == pytest.approx(rate0, rel=1e-12)
    k = next(k for k in range(61) if nn1d_legendre(0.7, min(2.0**-k, 0.4)) >= rate0 / 2)
    assert r.delta0 == 2.0**-k
    assert r.K == max(2.25 / r.delta0, 2.0 / r.rate_00)
    assert r.K >= 2.0 / rate0
    assert r.long_ok


@settings(max_examples=15)
@given(st.floats(0.1, 3.0), st.floats(0.2, 4.0), st.floats(0.0, 3.0))
def test_k_formula_double_entry(A, T, vr):
    m = nearest_neighbor([0.7, 0.3])
    r = cutoff_k(m, A, T, 0.5, vr, n_grid=())
    assert r.K == max((0.5 + vr + 1) / r.delta0, 2 * A * T / r.rate_00)
    assert r.K >= 2 * A * T / r.rate_00
    assert r.rate_00 == pytest.approx(T * nn1d_legendre(0.7, 0.0), rel=1e-12)


def test_cutoff_k_refuses_zero_drift():
    with pytest.raises(ValueError, match="I_T\\(0,0\\)"):
        cutoff_k(nearest_neighbor([0.5, 0.5]), 1.0, 1.0, 0.0, 1.0)


# -- localization ------------------------------------------------------------------


def test_localization_scan_1d(walk1d):
    rep = localization_scan(walk1d, 0.0, TargetSet((-1.0,), 0.25), 1.0, [2.0, 3.0, 4.0], 20)
    assert rep.smallest_R is not None and rep.smallest_R <= 4
    assert rep.monotone
    assert all(b <= a for a, b in zip(rep.log_gaps, rep.log_gaps[1:]))
    assert list(rep.lines())[-1].startswith("smallest_R=")


def test_localization_none_in_grid(walk1d):
    rep = localization_scan(walk1d, 0.0, TargetSet((-1.0,), 0.25), 50.0, [1.5], 20)
    assert rep.smallest_R is None
    assert list(rep.lines())[-1] == "smallest_R=none in grid"


def test_localization_validation(walk1d):
    with pytest.raises(ValueError):
        localization_scan(walk1d, 0.0, TargetSet((-1.0,), 0.25), 1.0, [1.1, 2.0], 20)
