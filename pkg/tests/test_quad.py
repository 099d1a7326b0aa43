import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from modelgeom.quad import (GAUSS_WEIGHTS, KRONROD_NODES, KRONROD_WEIGHTS, AccuracyError,
                            IntegrandError, NegativeIntegrandError, QuadratureConfig,
                            classify_improper, conservative_tail, gk15, integrate_finite)


def test_kronrod_rule_exactness():
    x = KRONROD_NODES
    for deg in range(23):
        exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
        assert KRONROD_WEIGHTS @ x ** deg == pytest.approx(exact, abs=1e-15)
    for deg in range(14):
        exact = 0.0 if deg % 2 else 2.0 / (deg + 1)
        assert GAUSS_WEIGHTS @ x ** deg == pytest.approx(exact, abs=1e-15)


@pytest.mark.parametrize("f,a,b,exact", [
    (lambda t: t, 0.0, 1.0, 0.5),
    (np.sin, 0.0, math.pi, 2.0),
    (lambda t: t ** -0.5, 0.0, 1.0, 2.0),
    (lambda t: np.exp(-t * t), -5.0, 5.0, math.sqrt(math.pi) * math.erf(5.0)),
])
def test_integrate_finite_examples(f, a, b, exact):
    val, err = integrate_finite(f, a, b)
    assert abs(val - exact) <= max(1e-10, 1e-8 * abs(exact))
    assert err >= 0


def test_integrate_finite_matches_scipy():
    f = lambda t: np.log1p(t) * np.cos(3 * t) ** 2 / (1 + t * t)
    val, _ = integrate_finite(f, 0.0, 7.0, abs_tol=1e-13, rel_tol=1e-12)
    ref, _ = integrate.quad(f, 0.0, 7.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    assert val == pytest.approx(ref, rel=1e-11)


def test_gk15_exact_on_polynomials():
    val, err = gk15(lambda t: 3 * t ** 2 + 1, 0.0, 2.0)
    assert val == pytest.approx(10.0, rel=1e-15)


def test_integrand_error_location():
    with pytest.raises(IntegrandError) as exc:
        integrate_finite(lambda t: np.where(np.abs(t - 0.5) < 0.2, np.nan, t), 0.0, 1.0)
    assert 0.3 <= exc.value.location <= 0.7


def test_accuracy_error_carries_estimate():
    with pytest.raises(AccuracyError) as exc:
        integrate_finite(lambda t: np.sin(1.0 / t) / t, 1e-6, 1.0, max_intervals=10,
                         abs_tol=1e-15, rel_tol=1e-15)
    assert math.isfinite(exc.value.value)


def test_empty_and_reversed_interval():
    assert integrate_finite(np.exp, 1.0, 1.0)[0] == 0.0
    with pytest.raises(ValueError):
        integrate_finite(np.exp, 2.0, 1.0)


@given(st.floats(0.05, 0.95))
def test_additivity(frac):
    f = lambda t: np.exp(-t) * (2 + np.sin(5 * t))
    a, b = 0.0, 4.0
    c = a + frac * (b - a)
    v1, e1 = integrate_finite(f, a, c)
    v2, e2 = integrate_finite(f, c, b)
    v, e = integrate_finite(f, a, b)
    assert abs(v1 + v2 - v) <= 2 * (e1 + e2 + e) + 1e-15


@pytest.mark.parametrize("f,a,value", [
    (lambda t: t ** -2.0, 1.0, 1.0),
    (lambda t: np.exp(-t), 0.0, 1.0),
    (lambda t: t ** -1.5, 1.0, 2.0),
    (lambda t: t ** -3.0, 1.0, 0.5),
])
def test_convergent_examples(f, a, value):
    v = classify_improper(f, a)
    assert v.convergent
    assert abs(v.value - value) <= 1e-8
    assert v.error <= max(1e-10, 1e-8 * abs(v.value))


@pytest.mark.parametrize("f,a", [(lambda t: 1.0 / t, 1.0), (lambda t: t ** -0.5, 1.0),
                                 (lambda t: np.ones_like(t), 0.0), (np.exp, 0.0)])
def test_divergent_examples(f, a):
    v = classify_improper(f, a)
    assert v.divergent
    assert v.witness_cutoff is not None


def test_harmonic_increments_are_log2():
    v = classify_improper(lambda t: 1.0 / t, 1.0)
    inc = np.diff(v.partials)
    assert np.allclose(inc, math.log(2), rtol=1e-8)


def test_negative_integrand_rejected():
    with pytest.raises(NegativeIntegrandError):
        classify_improper(lambda t: np.sin(t) / t, 1.0)


def test_inconclusive_on_short_range():
    v = classify_improper(lambda t: 1.0 / t ** 2, 1.0, upper_limit=10.0)
    assert v.inconclusive
    assert "reason" in v.to_dict()


def test_inconclusive_on_too_few_cutoffs():
    v = classify_improper(lambda t: 1.0 / (t * np.log(t) ** 2), 2.0, QuadratureConfig(j_max=8))
    assert v.inconclusive
    assert len(v.partials) > 0


@pytest.mark.parametrize("lam", [1e-6, 1.0, 1e6])
def test_no_false_convergence_on_scaled_harmonic(lam):
    v = classify_improper(lambda t: lam / t, 1.0)
    assert not v.convergent


@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5, 2.0, 3.0])
def test_verdict_stability(beta):
    f = lambda t: t ** -beta
    base = classify_improper(f, 1.0)
    cfg = QuadratureConfig()
    strict = classify_improper(f, 1.0, QuadratureConfig(abs_tol=cfg.abs_tol / 2, rel_tol=cfg.rel_tol / 2,
                                                        divergence_threshold=2 * cfg.divergence_threshold))
    assert {base.outcome, strict.outcome} != {"convergent", "divergent"}
    assert base.outcome == ("convergent" if beta > 1 else "divergent")


@given(st.floats(1.3, 4.0), st.floats(1e-3, 1e3))
def test_power_law_values_and_scaling(beta, c):
    v = classify_improper(lambda t: c * t ** -beta, 1.0)
    assert v.convergent
    assert v.value == pytest.approx(c / (beta - 1), rel=1e-7)


@given(st.sampled_from([0.3, 0.8, 1.0, 1.3, 2.0]), st.floats(0.0, 5.0))
def test_partials_nondecreasing(beta, a):
    v = classify_improper(lambda t: (1 + t) ** -beta, a)
    p = np.array(v.partials)
    assert np.all(np.diff(p) >= 0)


def test_conservative_tail_clamps_ratio():
    v = classify_improper(lambda t: t ** -2.0, 1.0)
    tail = conservative_tail(v)
    last = v.partials[-1] - v.partials[-2]
    assert tail >= last  # clamped ratio >= 1/2 gives tail >= increment
    assert conservative_tail(classify_improper(lambda t: 1.0 / t, 1.0)) == math.inf


def test_slow_decay_is_never_called_divergent():
    # beta = 1.2 still has tail ~ 1e-3 relative at the last cutoff
    v = classify_improper(lambda t: t ** -1.2, 1.0)
    assert not v.divergent


def test_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(abs_tol=0)
    with pytest.raises(ValueError):
        QuadratureConfig(j_max=5, window=4)
