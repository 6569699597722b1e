"""Normal and Poisson kernels, and finite-s diagnostics of their asymptotics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sp

__all__ = [
    "normal_pdf",
    "normal_cdf",
    "mills_ratio",
    "poisson_pmf",
    "log_poisson_pmf",
    "poisson_cdf",
    "poisson_cdf_over_pmf",
    "PoissonAsymptoticsReport",
    "poisson_asymptotics_report",
    "BERRY_ESSEEN_C",
    "POISSON_THIRD_ABS_MOMENT",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)
MILLS_SWITCH = 6.0
# Below this the ratio exceeds the largest double.
MILLS_OVERFLOW_U = -math.sqrt(2.0 * (math.log(np.finfo(float).max) - math.log(SQRT_2PI)))
SUMMATION_LIMIT = 10_000

BERRY_ESSEEN_C = 0.8
POISSON_THIRD_ABS_MOMENT = 1.0 + 2.0 / math.e


def normal_pdf(u):
    if np.ndim(u) == 0:
        return math.exp(-0.5 * float(u) ** 2) / SQRT_2PI
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / SQRT_2PI


def normal_cdf(u):
    """Standard normal distribution function (erfc based, so tails keep relative accuracy)."""
    v = sp.ndtr(u)
    return float(v) if np.ndim(v) == 0 else v


def mills_ratio(u):
    """``Phi(-u) / phi(u)``.

    Uses the plain quotient up to ``u = 6`` and the scaled complementary error
    function beyond, where ``Phi(-u)`` heads for underflow.  Raises
    ``OverflowError`` when the result would exceed the double range.
    """
    arr = np.asarray(u, dtype=float)
    if np.any(arr < MILLS_OVERFLOW_U):
        bad = float(arr[arr < MILLS_OVERFLOW_U].min())
        raise OverflowError(f"Mills ratio overflows at u = {bad!r} (threshold {MILLS_OVERFLOW_U:.4f})")
    direct = arr <= MILLS_SWITCH
    out = np.empty_like(arr)
    ud = arr[direct]
    out[direct] = sp.ndtr(-ud) / (np.exp(-0.5 * ud * ud) / SQRT_2PI)
    ut = arr[~direct]
    out[~direct] = math.sqrt(math.pi / 2.0) * sp.erfcx(ut / math.sqrt(2.0))
    return float(out) if np.ndim(u) == 0 else out


def log_poisson_pmf(i, kappa: float):
    i = np.asarray(i, dtype=float)
    out = i * math.log(kappa) - kappa - sp.gammaln(i + 1.0)
    return float(out) if out.ndim == 0 else out


def poisson_pmf(i, kappa: float):
    """``exp(-kappa) kappa^i / i!`` through log-gamma."""
    _check_poisson(i, kappa)
    out = np.exp(log_poisson_pmf(i, kappa))
    return float(out) if np.ndim(out) == 0 else out


def _check_poisson(i, kappa):
    if not (kappa > 0 and math.isfinite(kappa)):
        raise ValueError(f"Poisson mean must be finite and > 0, got {kappa!r}")
    if np.any(np.asarray(i) < 0):
        raise ValueError("Poisson index must be >= 0")


def poisson_cdf(i: int, kappa: float) -> float:
    """``Pi_i(kappa) = sum_{j<=i} pmf_j``.

    Small ``i`` sums the pmf in log space; large ``i`` uses the regularized
    upper incomplete gamma ``Q(i+1, kappa)`` (the gamma tail identity).
    """
    _check_poisson(i, kappa)
    i = int(i)
    if i <= SUMMATION_LIMIT:
        logs = log_poisson_pmf(np.arange(i + 1), kappa)
        return min(1.0, float(np.exp(np.logaddexp.reduce(np.atleast_1d(logs)))))
    return float(sp.gammaincc(i + 1.0, kappa))


def poisson_cdf_over_pmf(i, kappa: float):
    """``Pi_i(kappa) / pmf_i(kappa)``, evaluated without forming tiny quotients."""
    _check_poisson(i, kappa)
    i = np.asarray(i, dtype=float)
    with np.errstate(divide="ignore"):
        log_cdf = np.log(sp.gammaincc(i + 1.0, kappa))
    out = np.exp(log_cdf - log_poisson_pmf(i, kappa))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PoissonAsymptoticsReport:
    mean_parameter: int
    berry_esseen_sup_dev: float
    scaled_dev: float
    local_clt_max_rel_err: float
    stirling_rel_err: float
    psi_mean: float

    @property
    def berry_esseen_bound(self) -> float:
        return BERRY_ESSEEN_C * POISSON_THIRD_ABS_MOMENT

    @property
    def stirling_bound(self) -> float:
        return 1.0 / (12.0 * self.mean_parameter)


def poisson_asymptotics_report(s: int) -> PoissonAsymptoticsReport:
    """Measured normal-approximation errors for Poisson(s), s an integer >= 10."""
    if int(s) != s or s < 10:
        raise ValueError(f"s must be an integer >= 10, got {s!r}")
    s = int(s)
    root = math.sqrt(s)
    # Beyond s + 40 sqrt(s) both distribution functions equal one in doubles.
    top = s + int(40 * root) + 50
    idx = np.arange(top + 1)
    cdf = sp.gammaincc(idx + 1.0, s)
    dev = cdf - sp.ndtr((idx - s) / root)
    sup_dev = float(np.max(np.abs(dev)))

    log_pmf_s = log_poisson_pmf(s, s)
    window = np.arange(1, int(math.floor(s ** 0.625)) + 1)
    ratio = np.exp(log_poisson_pmf(s - window, s) - log_pmf_s)
    gauss = np.exp(-0.5 * (window / root) ** 2)
    local_err = float(np.max(np.abs(ratio - gauss) / gauss))

    stirling = abs(math.exp(log_pmf_s) * math.sqrt(2 * math.pi * s) - 1.0)
    psi = root * dev[1 : s + 1]
    return PoissonAsymptoticsReport(
        mean_parameter=s,
        berry_esseen_sup_dev=sup_dev,
        scaled_dev=sup_dev * root,
        local_clt_max_rel_err=local_err,
        stirling_rel_err=stirling,
        psi_mean=float(math.fsum(psi) / s),
    )
