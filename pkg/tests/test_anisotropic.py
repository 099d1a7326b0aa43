import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modelgeom import criteria
from modelgeom.anisotropic import (CERTIFICATE_BOUND, CONSISTENT, LITERAL, ConformalExample,
                                   ExampleError, angular_weight, lambda_eval, laplacian_residual,
                                   max_principle_check, sector_green_mass, sector_mass_table,
                                   sector_mass_verdict, smoothstep5, v_o_eval, v_o_identity_residual,
                                   verify_two_end_hypotheses)
from modelgeom.warp import ModelManifold, Tabulated, make_family


@pytest.fixture(scope="module")
def literal(spliced_model):
    return ConformalExample(spliced_model, LITERAL)


@pytest.fixture(scope="module")
def consistent(spliced_model):
    return ConformalExample(spliced_model, CONSISTENT)


@pytest.fixture(scope="module")
def certificate(literal):
    return max_principle_check(literal)


def test_smoothstep_endpoints():
    assert smoothstep5(0.0) == 0.0 and smoothstep5(1.0) == 1.0
    assert smoothstep5(-3.0) == 0.0 and smoothstep5(7.0) == 1.0
    x = np.linspace(0, 1, 101)
    assert np.all(np.diff(smoothstep5(x)) >= 0)


def test_angular_weight_regions():
    assert np.all(angular_weight(np.linspace(-math.pi / 2, math.pi / 2, 50)) == 0.0)
    assert np.all(angular_weight(np.linspace(3 * math.pi / 4, 5 * math.pi / 4, 50)) == 1.0)


def test_lambda_at_least_one(literal):
    rng = np.random.default_rng(3)
    r = rng.uniform(0.0, 6.0, 100_000)
    th = rng.uniform(-math.pi, 3 * math.pi, 100_000)
    assert np.all(lambda_eval(literal, r, th) >= 1.0)


def test_lambda_examples(literal, spliced_model):
    assert lambda_eval(literal, 5.0, 0.0) == 1.0
    assert lambda_eval(literal, 0.5, math.pi) == 1.0
    G5 = criteria.green_kernel(spliced_model, 5.0).value
    assert lambda_eval(literal, 5.0, math.pi) == pytest.approx(max(1.0, G5 ** -0.5), rel=1e-8)


@given(st.floats(1.0 + 1e-9, 6.0), st.floats(3 * math.pi / 4, 5 * math.pi / 4))
def test_lambda_outer_sector_bound(literal, r, th):
    G = criteria.green_kernel(literal.base, r).value
    assert lambda_eval(literal, r, th) >= G ** -0.5 * (1 - 1e-12)


@given(st.floats(0.0, 6.0), st.floats(-10.0, 10.0))
def test_lambda_periodic(literal, r, th):
    assert lambda_eval(literal, r, th) == pytest.approx(lambda_eval(literal, r, th + 2 * math.pi), rel=1e-12)


def test_lambda_continuously_differentiable(literal):
    # one-sided difference quotients agree at the blend boundaries
    for r, th in [(3.0, math.pi / 2), (3.0, 3 * math.pi / 4), (0.9, math.pi), (1.0, math.pi)]:
        h = 1e-6
        f = lambda a, b: float(literal.log_lambda(a, b))
        dth_l = (f(r, th) - f(r, th - h)) / h
        dth_r = (f(r, th + h) - f(r, th)) / h
        dr_l = (f(r, th) - f(r - h, th)) / h
        dr_r = (f(r + h, th) - f(r, th)) / h
        assert abs(dth_l - dth_r) <= 1e-4 * max(1.0, abs(dth_l))
        assert abs(dr_l - dr_r) <= 1e-4 * max(1.0, abs(dr_l))


def test_lambda_rejects_negative_radius(literal):
    with pytest.raises(ValueError):
        lambda_eval(literal, -1.0, 0.0)


def test_example_preconditions():
    with pytest.raises(ExampleError):
        ConformalExample(ModelManifold(2, make_family("euclidean")))
    with pytest.raises(ExampleError):
        ConformalExample(ModelManifold(3, make_family("spliced_exp_power", a=1.0, p=3.0, t0=1.0)))
    with pytest.raises(ValueError):
        ConformalExample(ModelManifold(2, make_family("spliced_exp_power", a=1.0, p=3.0, t0=1.0)),
                         convention="other")


def test_sector_mass_empty(literal):
    assert sector_green_mass(literal, 1.0).mass == 0.0
    with pytest.raises(ValueError):
        sector_green_mass(literal, 0.5)


def test_sector_mass_monotone(literal, consistent):
    for ex in (literal, consistent):
        masses = [s.mass for s in sector_mass_table(ex, (1.5, 2.0, 3.0, 4.0))]
        assert np.all(np.diff(masses) > 0)


def test_sector_lower_bound_matches_direct_integral(literal):
    from scipy import integrate
    s = sector_green_mass(literal, 4.0)
    ref, _ = integrate.quad(lambda r: math.exp(float(literal.base.warp.log_sigma(r))), 1.0, 4.0,
                            epsrel=1e-13, limit=200)
    assert s.lower_bound == pytest.approx(0.5 * math.pi * ref, rel=1e-10)


def test_consistent_convention_meets_lower_bound(consistent):
    # with dv~ = lambda^2 dv, G lambda^2 sigma = sigma exactly where lambda^2 = 1/G
    for s in sector_mass_table(consistent, (2.0, 4.0, 8.0)):
        assert s.holds
        assert s.mass == pytest.approx(s.lower_bound, rel=1e-8)


def test_literal_convention_falls_short_but_still_diverges(literal):
    # G lambda sigma = G^{1/2} sigma < sigma, so mass >= (pi/2) int sigma does not hold
    # term by term; the mass still diverges
    s = sector_green_mass(literal, 2.0)
    assert not s.holds
    assert s.mass < s.lower_bound
    assert sector_mass_verdict(literal).divergent


def test_sector_verdict_consistent(consistent):
    assert sector_mass_verdict(consistent).divergent


def test_v_o_basics(literal, spliced_model):
    assert v_o_eval(literal, 0.0) == 0.0
    vals = [v_o_eval(literal, r) for r in (0.5, 1.0, 2.0, 4.0)]
    assert np.all(np.diff(vals) > 0)
    F0 = criteria.global_exit_time(spliced_model, 0.0).value
    assert vals[-1] < F0
    # the gap is F(4), whose integrand is ~ 1/(3 t^2)
    assert F0 - vals[-1] == pytest.approx(1 / 12, rel=0.05)


def test_v_o_identity(literal):
    for r in (0.5, 2.0, 3.5):
        assert v_o_identity_residual(literal, r) <= 1e-8


def test_laplacian_identity(literal):
    r = np.geomspace(0.05, 5.0, 40)
    assert laplacian_residual(literal, r).max() <= 1e-6


def test_certificate(certificate):
    assert certificate.passed
    assert certificate.min_value >= CERTIFICATE_BOUND - 1e-9
    assert certificate.n_gated == 200 * 200
    assert certificate.laplacian_residual <= 1e-6
    d = certificate.to_dict()
    assert d["bound"] == 0.3535533905932738


def test_certificate_on_axis_exceeds_half(literal, certificate):
    # at theta = 0, lambda = 1 and the gate gives 1 - v_o / sigma^2 > 1/2
    r = certificate.r_gate + 0.5
    cert = max_principle_check(literal, n_r=5, n_theta=1, r_range=(r, r + 1), theta_range=(0.0, 0.0))
    assert cert.min_value > 0.5


def test_certificate_counts_ungated_points(literal, certificate):
    cert = max_principle_check(literal, n_r=40, n_theta=21, r_range=(0.1, certificate.r_gate + 1),
                               theta_range=(-math.pi / 2, math.pi / 2))
    assert cert.n_skipped > 0
    assert cert.n_gated + cert.n_skipped == 40 * 21
    assert cert.passed


def test_two_end_cases(spliced):
    euc = make_family("euclidean")
    ok = verify_two_end_hypotheses(euc, spliced)
    assert ok.holds is True and "hold" in ok.conclusion
    assert verify_two_end_hypotheses(euc, euc).holds is False
    t = np.linspace(0.0, 400.0, 40001)
    with np.errstate(divide="ignore"):
        decaying = Tabulated(t, log_sigma=np.log(t) - t, dlog=1.0 / t - 1.0)
    rep = verify_two_end_hypotheses(decaying, spliced)
    assert rep.volume_integral.convergent
    assert rep.holds is False
