import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from bravo import qed
from bravo.chain import MmskParams, build_mmsk, d_pi, stationary
from bravo.qed import (
    BETA_SWITCH,
    QedParams,
    QuadratureConfig,
    QuadratureError,
    d0,
    d_beta_eta,
    delay_prob_limit,
    eta_star,
    f_fn,
    g_fn,
    h_fn,
    i_plus,
    j_beta,
    l_eta,
)
from bravo.special import normal_cdf

SHIFT = math.sqrt(math.pi / 2)


def exact_at(s, eta, beta):
    return build_mmsk(MmskParams(s, math.ceil(eta * math.sqrt(s)), 1 - beta / math.sqrt(s)))


# ---------------------------------------------------------------- critical branch

def test_l_eta_identity_and_limit():
    assert abs(2 / 3 - l_eta(0.0) - (1 - 4 * (1 - math.log(2)) / math.pi)) <= 1e-12
    assert l_eta(1e6) < 1e-11
    assert d0(1e6) == pytest.approx(2 / 3, abs=1e-11)
    with pytest.raises(ValueError):
        l_eta(-0.1)


def test_d0_reported_values():
    assert d0(0.0) == pytest.approx(0.6093, abs=5e-5)
    assert d0(0.232) == pytest.approx(0.6018, abs=5e-5)
    assert d0(1.0) == pytest.approx(0.61928, abs=5e-6)


def test_eta_star():
    arg, val = eta_star()
    assert arg == pytest.approx(0.232, abs=5e-4)
    assert val == pytest.approx(0.6018, abs=5e-5)
    assert d0(arg - 0.05) > val and d0(arg + 0.05) > val
    # derivative of the cubic-rational form vanishes there
    assert (d0(arg + 1e-5) - d0(arg - 1e-5)) / 2e-5 == pytest.approx(0.0, abs=1e-7)


def test_d0_range_dense_grid():
    vals = np.array([d0(x) for x in np.linspace(0, 100, 20001)])
    assert vals.min() > 0.6 and vals.max() <= 2 / 3


# ---------------------------------------------------------------- h, f, g

@pytest.mark.parametrize("eta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("beta", [1e-4, -1e-4])
def test_beta_h_small_beta_limit(eta, beta):
    assert abs(beta * h_fn(eta, beta) - 1 / (eta + SHIFT)) <= 1e-3


def test_h_values():
    assert h_fn(1.0, -1.0) == pytest.approx(-0.4213, abs=1e-4)
    assert 0 < h_fn(1.0, 30.0) < 1e-100


def test_h_against_large_s_chain():
    # sqrt(s) pi_s -> beta h at s = 1e6
    s, eta, beta = 10 ** 6, 1.0, -1.0
    p = stationary(exact_at(s, eta, beta)).probabilities
    assert math.sqrt(s) * p[s] == pytest.approx(beta * h_fn(eta, beta), abs=2e-3)


@given(st.floats(0.05, 5), st.floats(-6, 6).filter(lambda b: abs(b) >= 1e-3))
def test_beta_h_positive(eta, beta):
    assert beta * h_fn(eta, beta) > 0


def test_h_rejects_critical_branch():
    with pytest.raises(ValueError):
        h_fn(1.0, 1e-9)
    with pytest.raises(ValueError):
        h_fn(0.0, 1.0)


def test_f_tolerance_reproducible():
    loose = f_fn(1.0, 1.0, QuadratureConfig(abs_tol=1e-8, rel_tol=1e-8))
    tight = f_fn(1.0, 1.0, QuadratureConfig(abs_tol=1e-12, rel_tol=1e-12))
    assert abs(loose - tight) <= 1e-9


@pytest.mark.parametrize("eta,beta", [(1.0, 1.0), (1.0, -1.0), (0.25, -6.0), (4.0, 6.0)])
def test_f_against_plain_quadrature(eta, beta):
    h = h_fn(eta, beta)
    c = beta * math.exp(-beta * eta) * h
    fun = lambda u: (1 - c * normal_cdf(-u) / (math.exp(-u * u / 2) / math.sqrt(2 * math.pi))) * normal_cdf(-u)
    ref, _ = integrate.quad(fun, -beta, 30, epsabs=1e-13, epsrel=1e-13, limit=200)
    assert f_fn(eta, beta) == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_g_values():
    assert abs(g_fn(1.0, 1.0)) < 1
    assert math.isfinite(g_fn(1.0, -1.0))
    assert abs(g_fn(1.0, 30.0)) < 1e-100


def test_g_series_branch_continuous():
    # the cubic-order series and the direct form meet at |beta eta| = 0.05
    for x in (0.05, -0.05):
        left = g_fn(1.0, x * (1 - 1e-9))
        right = g_fn(1.0, x * (1 + 1e-9))
        assert left == pytest.approx(right, rel=1e-7)


def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        QuadratureConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        QuadratureConfig(rel_tol=0.1)


def test_quadrature_error_carries_achieved():
    with pytest.raises(QuadratureError) as info:
        qed._quad(lambda u: math.sin(1 / u) / u, 1e-8, 1.0, QuadratureConfig(max_subintervals=5))
    assert info.value.achieved > 0


def test_qed_params_validation():
    with pytest.raises(ValueError):
        QedParams(1.0, 0.0)
    with pytest.raises(ValueError):
        QedParams(math.inf, 1.0)


# ---------------------------------------------------------------- assembled limit

def test_branch_dispatch():
    ev = d_beta_eta(1.0, BETA_SWITCH / 2)
    assert ev.branch == "critical" and ev.ratio == d0(1.0)
    ev = d_beta_eta(1.0, 2 * BETA_SWITCH)
    assert ev.branch == "noncritical"
    assert ev.ratio == pytest.approx(d0(1.0), abs=1e-4)


@pytest.mark.parametrize("eta", [0.5, 1.0, 2.0])
def test_branch_continuity(eta):
    for beta in (1e-3, -1e-3):
        assert abs(d_beta_eta(eta, beta).ratio - d0(eta)) <= 1e-2


def test_tails():
    for sign in (1, -1):
        far, near = d_beta_eta(1.0, 6.0 * sign).ratio, d_beta_eta(1.0, 4.0 * sign).ratio
        assert far >= 0.95 and far > near


def test_lower_bound_grid():
    for beta in np.arange(-24, 25) * 0.25:
        for eta in (0.25, 0.5, 1.0, 2.0, 4.0):
            assert d_beta_eta(eta, float(beta)).ratio >= 0.5 - 1e-9


@pytest.mark.parametrize("eta,beta", [(1.0, 1.0), (1.0, -1.0), (2.0, 0.5)])
def test_matches_finite_s_and_converges(eta, beta):
    limit = d_beta_eta(eta, beta).ratio
    small = abs(d_pi(exact_at(100, eta, beta)) - limit)
    large = abs(d_pi(exact_at(10_000, eta, beta)) - limit)
    assert large <= 0.02
    assert large < small


def test_intermediates_exposed():
    ev = d_beta_eta(1.0, 1.0)
    assert ev.h_value == h_fn(1.0, 1.0)
    assert ev.f_value == pytest.approx(f_fn(1.0, 1.0))
    assert ev.g_value == g_fn(1.0, 1.0)
    assert ev.delay_probability == delay_prob_limit(1.0, 1.0)


# ---------------------------------------------------------------- delay probability

def test_delay_limits():
    target = 1 / (1 + SHIFT)
    assert target == pytest.approx(0.4438, abs=5e-5)
    assert delay_prob_limit(1.0, 1e-6) == pytest.approx(target, abs=1e-3)
    assert delay_prob_limit(1.0, 1e-7) == pytest.approx(target, abs=1e-15)
    assert delay_prob_limit(1.0, 30.0) < 1e-100
    assert delay_prob_limit(1.0, -30.0) == pytest.approx(1.0, abs=1e-12)


def test_delay_against_finite_s():
    s = 10_000
    finite = stationary(exact_at(s, 1.0, 1.0)).tail(s)
    assert abs(finite - delay_prob_limit(1.0, 1.0)) <= 0.02


def test_delay_range_and_monotone():
    betas = np.arange(-24, 25) * 0.25
    for eta in (0.25, 0.5, 1.0, 2.0, 4.0):
        vals = np.array([delay_prob_limit(eta, float(b)) for b in betas])
        assert np.all((vals >= 0) & (vals <= 1))
        assert np.all(np.diff(vals) < 0)  # increasing in -beta


# ---------------------------------------------------------------- auxiliary integrals

def test_i_plus():
    r = i_plus()
    assert r.abs_error <= 1e-9
    assert r.closed_form == pytest.approx((1 - math.log(math.sqrt(2))) / math.sqrt(2 * math.pi), rel=1e-15)
    assert r.quadrature <= 1 / math.sqrt(2 * math.pi)
    assert not r.printed_form_consistent
    assert r.printed_form == pytest.approx(math.sqrt(2 * math.pi) * (1 - math.log(math.sqrt(2))))


def test_i_plus_relates_to_j0():
    # I+ = 1/sqrt(2 pi) - J_0
    assert i_plus().quadrature + j_beta(0.0).direct == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)


def test_j0():
    assert abs(j_beta(0.0).direct - math.log(math.sqrt(2)) / math.sqrt(2 * math.pi)) <= 1e-9


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0, -0.5, -1.0, -2.0])
def test_j_beta_two_routes(beta):
    r = j_beta(beta)
    assert r.discrepancy <= 1e-8


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_j_beta_printed_positive_form_has_flipped_sign(beta):
    r = j_beta(beta)
    assert r.semiclosed_as_printed == pytest.approx(-r.direct, rel=1e-9)


@pytest.mark.parametrize("beta", [-1.0, 1.0])
def test_j_beta_direct_against_plain_integrand(beta):
    # e^{u^2/2} Phi(-u)^2 integrated without the Mills-ratio rewrite
    val, _ = integrate.quad(lambda u: math.exp(u * u / 2) * normal_cdf(-u) ** 2, beta, 30.0,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    assert j_beta(beta).direct == pytest.approx(val, rel=1e-9)


def test_j_beta_decreasing():
    vals = [j_beta(b).direct for b in np.linspace(-2, 3, 11)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
