"""Many-server QED limits of the departure variance-to-mean ratio.

Servers ``s -> inf`` with load ``rho = 1 - beta/sqrt(s)`` and buffer
``K ~ eta*sqrt(s)``.  At ``beta = 0`` the limit is ``2/3 - L(eta)``; for
``beta != 0`` it is assembled from the auxiliary functions ``h``, ``f``
(a one-dimensional quadrature) and ``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy import integrate
from scipy import special as sp

from .special import SQRT_2PI, mills_ratio, normal_cdf, normal_pdf

__all__ = [
    "BETA_SWITCH",
    "QuadratureConfig",
    "QuadratureError",
    "QedParams",
    "QedEvaluation",
    "IPlusResult",
    "JBetaResult",
    "l_eta",
    "d0",
    "eta_star",
    "golden_section_argmin",
    "h_fn",
    "f_fn",
    "g_fn",
    "d_beta_eta",
    "delay_prob_limit",
    "i_plus",
    "j_beta",
]

BETA_SWITCH = 1e-6
LOG2 = math.log(2.0)

_L_SLOPE = 2.0 - math.pi / 2.0
_L_OFFSET = SQRT_2PI * (1.0 - LOG2 - math.pi / 12.0)
_L_SHIFT = math.sqrt(math.pi / 2.0)


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    truncation_tail_mass: float = 1e-14
    max_subintervals: int = 500

    def __post_init__(self):
        for name in ("abs_tol", "rel_tol", "truncation_tail_mass"):
            v = getattr(self, name)
            if not (0 < v < 1e-3):
                raise ValueError(f"{name} must lie in (0, 1e-3), got {v!r}")


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclass(frozen=True)
class QedParams:
    beta: float
    eta: float

    def __post_init__(self):
        if not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta!r}")
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be finite and > 0, got {self.eta!r}")


@dataclass(frozen=True)
class QedEvaluation:
    params: QedParams
    h_value: float
    f_value: float
    g_value: float
    ratio: float
    branch: str  # "critical" or "noncritical"
    delay_probability: float = field(default=math.nan)


def _quad(fun, a: float, b: float, config: QuadratureConfig) -> float:
    res = integrate.quad(
        fun, a, b,
        epsabs=config.abs_tol, epsrel=config.rel_tol,
        limit=config.max_subintervals, full_output=1,
    )
    value, err = res[0], res[1]
    if len(res) > 3:
        target = max(config.abs_tol, config.rel_tol * abs(value))
        if not (err <= 10.0 * target and math.isfinite(value)):
            raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {res[3]}", err)
    return value


def _truncation_point(envelope, start: float, tail_mass: float) -> float:
    """First point past ``start`` where the (decreasing) envelope drops below ``tail_mass``."""
    u = max(start, 0.0) + 1.0
    while envelope(u) >= tail_mass:
        u += 0.5
        if u > start + 200.0:
            raise QuadratureError("integrand envelope does not decay", envelope(u))
    return u


# ---------------------------------------------------------------- beta == 0

def l_eta(eta: float) -> float:
    """Correction ``L(eta)`` with ``D_{0,eta} = 2/3 - L(eta)``."""
    if not (eta >= 0 and math.isfinite(eta)):
        raise ValueError(f"eta must be finite and >= 0, got {eta!r}")
    return (_L_SLOPE * eta + _L_OFFSET) / (eta + _L_SHIFT) ** 3


def d0(eta: float) -> float:
    return 2.0 / 3.0 - l_eta(eta)


def golden_section_argmin(fun, a: float, b: float, tol: float = 1e-9) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def eta_star() -> tuple[float, float]:
    """Minimiser of ``d0`` and its value, cross-checked by golden-section search."""
    closed = SQRT_2PI * (math.log(8.0) - 2.0) / (4.0 - math.pi)
    numeric = golden_section_argmin(d0, 0.0, 10.0)
    if abs(numeric - closed) > 1e-6:
        raise ArithmeticError(f"closed-form argmin {closed} disagrees with search {numeric}")
    return closed, d0(closed)


# ---------------------------------------------------------------- beta != 0

def _check_noncritical(eta: float, beta: float) -> None:
    if not (math.isfinite(eta) and eta > 0):
        raise ValueError(f"eta must be finite and > 0, got {eta!r}")
    if not math.isfinite(beta):
        raise ValueError(f"beta must be finite, got {beta!r}")
    if abs(beta) < BETA_SWITCH:
        raise ValueError(f"|beta| = {abs(beta)!r} is below {BETA_SWITCH}; use the critical branch")


def h_fn(eta: float, beta: float) -> float:
    """``1 / (1 - exp(-beta eta) + beta Phi(beta)/phi(beta))``."""
    _check_noncritical(eta, beta)
    return 1.0 / (-math.expm1(-beta * eta) + beta * mills_ratio(-beta))


def f_fn(eta: float, beta: float, config: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """``int_{-beta}^inf (1 - beta e^{-beta eta} h Phi(-u)/phi(u)) Phi(-u) du``."""
    h = h_fn(eta, beta)
    c = beta * math.exp(-beta * eta) * h
    lower = -beta
    # Normalise by Phi(-lower) so tolerances act on an O(1) integrand.
    scale = normal_cdf(beta)

    def integrand(u):
        return (1.0 - c * mills_ratio(u)) * normal_cdf(-u) / scale

    def envelope(u):
        return normal_cdf(-u) * (1.0 + abs(c) * mills_ratio(u)) / scale

    upper = _truncation_point(envelope, lower, config.truncation_tail_mass)
    return scale * _quad(integrand, lower, upper, config)


_CUBIC_SERIES = (1 / 3, -1 / 3, 11 / 60, -13 / 180, 19 / 840, -1 / 168,
                 247 / 181440, -251 / 907200, 1013 / 19958400)


def _one_minus_2x_ex_minus_e2x(x: float) -> float:
    """``1 - 2x e^{-x} - e^{-2x}``, which is ``x^3/3 + O(x^4)`` near zero."""
    if abs(x) < 0.05:
        acc = 0.0
        for coef in reversed(_CUBIC_SERIES):
            acc = acc * x + coef
        return acc * x ** 3
    return -math.expm1(-2.0 * x) - 2.0 * x * math.exp(-x)


def g_fn(eta: float, beta: float) -> float:
    h = h_fn(eta, beta)
    x = beta * eta
    e = math.exp(-x)
    first = -(x + math.expm1(-x))  # 1 - x - e^{-x}
    second = _one_minus_2x_ex_minus_e2x(x)
    return 2.0 * e * h * (1.0 + e * h) * (first + second * h)


def delay_prob_limit(eta: float, beta: float) -> float:
    """Limiting probability that an arrival finds all servers busy."""
    if abs(beta) < BETA_SWITCH:
        if not (eta >= 0 and math.isfinite(eta)):
            raise ValueError(f"eta must be finite and >= 0, got {eta!r}")
        return eta / (eta + _L_SHIFT)
    return -math.expm1(-beta * eta) * h_fn(eta, beta)


def d_beta_eta(eta: float, beta: float, config: QuadratureConfig = DEFAULT_QUADRATURE) -> QedEvaluation:
    params = QedParams(beta, eta)
    if abs(beta) < BETA_SWITCH:
        return QedEvaluation(params, math.nan, math.nan, math.nan, d0(eta), "critical",
                             delay_prob_limit(eta, beta))
    h = h_fn(eta, beta)
    f = f_fn(eta, beta, config)
    g = g_fn(eta, beta)
    weight = 2.0 * beta * beta * math.exp(-beta * eta) * h * h / normal_pdf(beta)
    return QedEvaluation(params, h, f, g, 1.0 - weight * f + g, "noncritical",
                         delay_prob_limit(eta, beta))


# ---------------------------------------------------------------- auxiliary integrals

@dataclass(frozen=True)
class IPlusResult:
    quadrature: float
    closed_form: float
    printed_form: float

    @property
    def abs_error(self) -> float:
        return abs(self.quadrature - self.closed_form)

    @property
    def printed_form_consistent(self) -> bool:
        # The integrand is dominated by Phi(-u), whose integral is 1/sqrt(2 pi).
        return self.printed_form <= 1.0 / SQRT_2PI


def i_plus(config: QuadratureConfig = DEFAULT_QUADRATURE) -> IPlusResult:
    """``int_0^inf Phi(-u) [1 - e^{u^2/2} Phi(-u)] du`` with both closed forms."""

    def integrand(u):
        return normal_cdf(-u) * (1.0 - mills_ratio(u) / SQRT_2PI)

    upper = _truncation_point(lambda u: normal_cdf(-u), 0.0, config.truncation_tail_mass)
    value = _quad(integrand, 0.0, upper, config)
    log_root2 = 0.5 * LOG2
    return IPlusResult(value, (1.0 - log_root2) / SQRT_2PI, SQRT_2PI * (1.0 - log_root2))


@dataclass(frozen=True)
class JBetaResult:
    beta: float
    direct: float
    semiclosed: float
    semiclosed_as_printed: float

    @property
    def discrepancy(self) -> float:
        return abs(self.direct - self.semiclosed)

    @property
    def printed_discrepancy(self) -> float:
        return abs(self.direct - self.semiclosed_as_printed)


def _j_direct(beta: float, config: QuadratureConfig) -> float:
    scale = mills_ratio(beta) * normal_cdf(-beta)

    def integrand(u):
        return mills_ratio(u) * normal_cdf(-u) / scale

    upper = _truncation_point(integrand, beta, config.truncation_tail_mass)
    return scale * _quad(integrand, beta, upper, config) / SQRT_2PI


def _log_weighted_gauss(b: float, lo: float, hi: float, coef: float, config) -> float:
    """``int_lo^hi coef * b e^{-b^2 x^2/2} / (2 pi) * log(1 + 1/x^2) dx``."""

    def integrand(x):
        return coef * b * math.exp(-0.5 * b * b * x * x) / (2.0 * math.pi) * math.log1p(1.0 / (x * x))

    if math.isinf(hi):
        hi = max(lo + 1.0, math.sqrt(2.0 * 40.0) / b)
    return _quad(integrand, lo, hi, config)


def _j_positive_semiclosed(b: float, config) -> float:
    return normal_cdf(-b) * LOG2 / SQRT_2PI - _log_weighted_gauss(b, 1.0, math.inf, 1.0, config)


def _half_gauss_growth(b: float) -> float:
    """``int_0^b e^{u^2/2} du`` through the Dawson function."""
    return math.sqrt(2.0) * math.exp(0.5 * b * b) * float(sp.dawsn(b / math.sqrt(2.0)))


def j_beta(beta: float, config: QuadratureConfig = DEFAULT_QUADRATURE) -> JBetaResult:
    """``J_beta = int_beta^inf e^{u^2/2} Phi(-u)^2 du`` by two independent routes.

    ``direct`` integrates the Mills-ratio form.  ``semiclosed`` reduces the
    double integral in polar coordinates to a log-weighted Gaussian residual;
    ``semiclosed_as_printed`` is the reference form of that reduction as stated,
    kept for comparison; it differs in sign for beta > 0 and in several terms for beta < 0.
    """
    if not math.isfinite(beta):
        raise ValueError(f"beta must be finite, got {beta!r}")
    direct = _j_direct(beta, config)
    j0 = 0.5 * LOG2 / SQRT_2PI
    b = abs(beta)
    if b == 0.0:
        return JBetaResult(beta, direct, j0, j0)
    pos = _j_positive_semiclosed(b, config)
    pos_printed = -pos
    if beta > 0:
        return JBetaResult(beta, direct, pos, pos_printed)
    growth = _half_gauss_growth(b)
    neg = (pos + growth + LOG2 / SQRT_2PI * (2.0 * normal_cdf(b) - 1.0)
           - _log_weighted_gauss(b, 0.0, 1.0, 2.0, config))
    neg_printed = (pos_printed - j0 + growth
                   + 4.0 * LOG2 / SQRT_2PI * (normal_cdf(b * math.sqrt(2.0)) - 0.5)
                   - _log_weighted_gauss(b, 0.0, math.sqrt(2.0), 4.0, config))
    return JBetaResult(beta, direct, neg, neg_printed)
