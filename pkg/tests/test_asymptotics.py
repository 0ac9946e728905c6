import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from metasplit.asymptotics import (
    CLOSED_FORM,
    MONTE_CARLO,
    RateEstimate,
    ShapePoint,
    limit_resolvent_quartic,
    limit_resolvent_sq,
    optimize_rho,
    rho_limit,
    rho_sp_mc,
    rho_trtr_mc,
    rho_upper_bound,
    sp_limit_rate,
    sp_optimal_rate,
    stieltjes_mp,
    wishart_spectra,
)
from metasplit.numerics import Rng
from metasplit.solvers import sandwich_parts_stack, split_quadratic_stack
from metasplit.tasks import RealizableModel, SplitConfig, sample_realizable_tasks

positive = st.floats(1e-3, 1e3)


# --- finite (n, d) rates ---------------------------------------------------------


def test_rate_estimate_tags_and_stderr():
    with pytest.raises(ValueError):
        RateEstimate(1.0, 0.1, CLOSED_FORM)
    with pytest.raises(ValueError):
        RateEstimate(1.0, 0.0, MONTE_CARLO)
    with pytest.raises(ValueError):
        RateEstimate(1.0, 0.0, "guess")


def test_trtr_rate_degenerate_spectrum():
    est = rho_trtr_mc(1, 20000, 1.0, 40, Rng(1))
    assert est.method == MONTE_CARLO
    assert est.value == pytest.approx(1.0, rel=0.02)


def test_trtr_rate_near_proportional_limit():
    est = rho_trtr_mc(500, 500, 0.5, 30, Rng(2))
    assert est.value == pytest.approx(32 / 27, rel=0.02)
    est = rho_trtr_mc(500, 500, 1.0, 30, Rng(2))
    assert est.value == pytest.approx(rho_limit(ShapePoint(1.0, 1.0)), rel=0.02)


def test_trtr_rate_scales_with_r_sq_and_stderr_with_samples():
    a = rho_trtr_mc(20, 20, 1.0, 400, Rng(3))
    b = rho_trtr_mc(20, 20, 1.0, 800, Rng(4))
    assert 1.15 < a.stderr / b.stderr < 1.75
    c = rho_trtr_mc(20, 20, 1.0, 400, Rng(3), r_sq=2.5)
    assert c.value == pytest.approx(2.5 * a.value, rel=1e-12)
    with pytest.raises(ValueError):
        rho_trtr_mc(5, 5, 0.0, 10, Rng(0))
    with pytest.raises(ValueError):
        rho_trtr_mc(5, 5, 1.0, 1, Rng(0))


def test_sp_rate_without_training_rows_is_exact():
    est = rho_sp_mc(60, 0, 20, 1.0, 0, Rng(0))
    assert est.value == 4.05 and est.stderr == 0.0 and est.method == CLOSED_FORM


def test_sp_rate_large_lambda_reaches_optimum():
    for d, n1, n2 in ((60, 15, 5), (10, 5, 15), (3, 8, 2)):
        est = rho_sp_mc(d, n1, n2, 1e6, 200, Rng(5))
        assert est.value == pytest.approx((d + n2 + 1) / n2, rel=0.005)


def test_sp_rate_finite_lambda_not_below_optimum():
    est = rho_sp_mc(60, 15, 5, 1.0, 500, Rng(6))
    assert est.value >= sp_optimal_rate(60, 5).value - 2 * est.stderr


@pytest.mark.parametrize("d,n1,n2", [(1, 1, 1), (2, 3, 1), (5, 2, 3), (8, 10, 4)])
def test_sp_rate_lower_bounded_on_lambda_grid(d, n1, n2):
    best = sp_optimal_rate(d, n2).value
    for lam in np.logspace(-2, 4, 13):
        est = rho_sp_mc(d, n1, n2, float(lam), 2000, Rng(7))
        assert est.value >= best - 3 * est.stderr


def test_sp_optimal_rate_examples():
    assert sp_optimal_rate(60, 20, 1.0).value == 4.05
    assert sp_optimal_rate(60, 20, 1.0).stderr == 0.0
    assert sp_optimal_rate(7, 3, 0.0).value == 0.0
    n = 20
    values = [sp_optimal_rate(60, n2).value for n2 in range(1, n + 1)]
    assert int(np.argmin(values)) == n - 1


def test_sp_finite_rate_tends_to_limit():
    for gamma in (0.5, 1.0, 2.0):
        for n in (10, 100, 1000):
            d = round(gamma * n)
            gap = abs(sp_optimal_rate(d, n).value - sp_limit_rate(gamma))
            assert gap <= 1 / n + abs(d / n - gamma) + 1e-12


def test_split_rate_grouping_matches_sandwich():
    """The E[S^2] grouping (not E[S]^2) reproduces the sandwich AsymMSE of the split ERM."""
    d, n1, n2, lam = 1, 1, 1, 1.0
    model = RealizableModel(d, n1 + n2)
    _, X, Y = sample_realizable_tasks(model, Rng(11), 400_000)
    A, c = split_quadratic_stack(X, Y, SplitConfig(n1, n2), lam)
    H, C = sandwich_parts_stack(A, c, model.centroid)
    sandwich = float(np.trace(np.linalg.solve(H, np.linalg.solve(H, C).T)))

    est = rho_sp_mc(d, n1, n2, lam, 20_000, Rng(12))
    sig = wishart_spectra(d, n1, 20_000, Rng(12))
    S = ((lam / (sig + lam)) ** 2).sum(axis=1)
    Q = ((lam / (sig + lam)) ** 4).sum(axis=1)
    other = d / n2 * (S.mean() ** 2 + (n2 + 1) * Q.mean()) / S.mean() ** 2

    assert abs(sandwich - est.value) < 0.15
    assert abs(sandwich - other) > 0.25


# --- Stieltjes transform and proportional limits -----------------------------------


@given(l1=positive, l2=positive, gamma=st.floats(1e-2, 1e2))
def test_stieltjes_scaling_identity(l1, l2, gamma):
    s = stieltjes_mp(l1, l2, gamma)
    assert math.isfinite(s) and s > 0
    assert s == pytest.approx(stieltjes_mp(l1 / l2, 1.0, gamma) / l2, rel=1e-14)


def test_stieltjes_values():
    assert stieltjes_mp(1, 1, 1) == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-15)
    assert stieltjes_mp(1e6, 1, 0.7) == pytest.approx(1e-6, rel=0.01)
    with pytest.raises(ValueError):
        stieltjes_mp(0.0, 1.0, 1.0)


def test_stieltjes_matches_wishart_monte_carlo():
    sig = wishart_spectra(2000, 2000, 1, Rng(13))[0]
    assert np.mean(1 / (sig + 1)) == pytest.approx(stieltjes_mp(1, 1, 1), rel=0.01)


@pytest.mark.parametrize("lam,gamma", [(0.1, 0.5), (0.5, 1.0), (2.0, 2.0), (7.0, 0.2), (0.01, 3.0)])
def test_derivative_trick_finite_differences(lam, gamma):
    h = 1e-5
    fd = -(stieltjes_mp(lam, 1 + h, gamma) - stieltjes_mp(lam, 1 - h, gamma)) / (2 * h)
    assert fd == pytest.approx(limit_resolvent_sq(lam, gamma), rel=1e-6)
    # mixed third derivative: -(1/6) d/dl1 d2/dl2^2 s, by central differences
    k = 3e-3

    def d2(l1):
        return (stieltjes_mp(l1, 1 + k, gamma) - 2 * stieltjes_mp(l1, 1, gamma) + stieltjes_mp(l1, 1 - k, gamma)) / k**2

    e = k * (lam + 0.1)
    third = -(d2(lam + e) - d2(lam - e)) / (2 * e) / 6
    assert third == pytest.approx(limit_resolvent_quartic(lam, gamma), rel=1e-4)


def test_derivative_trick_matches_wishart_monte_carlo():
    sig = wishart_spectra(1000, 1000, 3, Rng(14))
    for lam in (0.5, 1.0):
        mc = np.mean(np.sum(sig / (sig + lam) ** 2, axis=1)) / 1000
        assert mc == pytest.approx(limit_resolvent_sq(lam, 1.0), rel=0.02)
        mc4 = np.mean(np.sum(sig**2 / (sig + lam) ** 4, axis=1)) / 1000
        assert mc4 == pytest.approx(limit_resolvent_quartic(lam, 1.0), rel=0.02)


def test_rho_limit_values():
    assert rho_limit(ShapePoint(0.5, 1.0)) == pytest.approx(32 / 27, rel=1e-14)
    with pytest.raises(ValueError):
        ShapePoint(0.0, 1.0)
    with pytest.raises(ValueError):
        ShapePoint(1.0, float("nan"))


@given(lam=st.floats(1e-3, 1e3), gamma=st.floats(1e-2, 1e2))
def test_rho_limit_is_ratio_of_trace_limits(lam, gamma):
    rho = rho_limit(ShapePoint(lam, gamma))
    assert math.isfinite(rho) and rho > 0
    ratio = limit_resolvent_quartic(lam, gamma) / limit_resolvent_sq(lam, gamma) ** 2
    assert rho == pytest.approx(ratio, rel=1e-9)


def test_rho_limit_continuity():
    # rho blows up as lam -> 0 at gamma = 1, so the grid starts at 1e-2
    for lam in np.logspace(-2, 3, 11):
        for gamma in np.logspace(-2, 1, 10):
            a = rho_limit(ShapePoint(float(lam), float(gamma)))
            b = rho_limit(ShapePoint(float(lam) + 1e-7, float(gamma)))
            assert abs(a - b) <= 1e-4


def test_optimize_rho_at_unit_ratio():
    lam, value = optimize_rho(1.0, tol=1e-10)
    assert value == pytest.approx(32 / 27, abs=1e-10)
    assert lam == pytest.approx(0.5, rel=1e-4)


@pytest.mark.parametrize("gamma", [0.25, 0.5, 1.0, 2.0, 4.0])
def test_optimize_rho_below_bound(gamma):
    tol = 1e-8
    lam, value = optimize_rho(gamma, tol)
    assert value <= rho_upper_bound(gamma) + tol
    assert value < 1 + gamma
    # the optimum is a true minimum on a fine neighbourhood
    for f in (0.9, 1.1):
        assert rho_limit(ShapePoint(lam * f, gamma)) >= value


def test_strict_dominance_margin():
    for gamma in np.linspace(0.05, 4.0, 40):
        gamma = float(gamma)
        margin = sp_limit_rate(gamma) - optimize_rho(gamma).value
        assert margin >= 0.1 * min(1.0, gamma)


def test_bounds_and_split_limit():
    assert rho_upper_bound(1.0) == pytest.approx(32 / 27, rel=1e-15)
    assert rho_upper_bound(1e-9) == pytest.approx(1.0, abs=1e-8)
    assert rho_upper_bound(2.0) == pytest.approx(2 + 5 / 27, rel=1e-15)
    assert sp_limit_rate(1.0) == 2.0
    assert sp_limit_rate(3.0) == 4.0
    for f in (rho_upper_bound, sp_limit_rate):
        with pytest.raises(ValueError):
            f(0.0)
    with pytest.raises(ValueError):
        optimize_rho(-1.0)
