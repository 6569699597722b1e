"""Finite birth-death chains and the exact asymptotic variance of their deaths.

A chain lives on ``{0, ..., J}`` with birth rates ``lambda_0..lambda_{J-1}``
and death rates ``mu_1..mu_J``.  The departure (death) counting process has
a limiting variance-to-mean ratio that is available in closed form from the
stationary distribution; this module evaluates it, its constant-birth
simplification, the associated lower bound, and the marked-death variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidChainError",
    "BirthDeathChain",
    "MmskParams",
    "StationaryDistribution",
    "OutputRatioResult",
    "MarkedRatio",
    "build_mmsk",
    "stationary",
    "output_stats",
    "analyze",
    "d_pi",
    "d_pi_constant_birth",
    "d_pi_lower_bound",
    "d_pi_marked",
]

CONSTANT_BIRTH_RTOL = 1e-12


class InvalidChainError(ValueError):
    """Raised for malformed chains, parameters or mark vectors."""


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InvalidChainError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BirthDeathChain:
    """Finite irreducible birth-death process on ``{0, ..., J}``.

    ``birth_rates[i]`` is the rate ``i -> i+1`` and ``death_rates[i]`` is the
    rate ``i+1 -> i``; both have exactly ``J`` strictly positive entries.
    """

    num_states_above_zero: int
    birth_rates: np.ndarray
    death_rates: np.ndarray

    def __post_init__(self):
        J = self.num_states_above_zero
        if isinstance(J, bool) or int(J) != J or J < 1:
            raise InvalidChainError(f"J must be an integer >= 1, got {J!r}")
        object.__setattr__(self, "num_states_above_zero", int(J))
        lam = _frozen(self.birth_rates, "birth_rates")
        mu = _frozen(self.death_rates, "death_rates")
        if lam.size != J or mu.size != J:
            raise InvalidChainError(
                f"expected {J} birth and {J} death rates, got {lam.size} and {mu.size}"
            )
        if np.any(lam <= 0) or np.any(mu <= 0):
            raise InvalidChainError("all rates must be strictly positive (irreducibility)")
        object.__setattr__(self, "birth_rates", lam)
        object.__setattr__(self, "death_rates", mu)

    @classmethod
    def from_rates(cls, birth_rates, death_rates) -> "BirthDeathChain":
        return cls(len(birth_rates), birth_rates, death_rates)

    @property
    def J(self) -> int:
        return self.num_states_above_zero

    @property
    def num_states(self) -> int:
        return self.num_states_above_zero + 1

    def scaled(self, c: float) -> "BirthDeathChain":
        """Same chain on a time scale sped up by ``c``."""
        return BirthDeathChain(self.J, self.birth_rates * c, self.death_rates * c)

    def has_constant_births(self, rtol: float = CONSTANT_BIRTH_RTOL) -> bool:
        return _first_nonconstant_birth(self, rtol) is None


@dataclass(frozen=True)
class MmskParams:
    """M/M/s/K queue: ``s`` servers, ``K`` waiting places, load ``rho``."""

    servers: int
    buffer: int
    traffic_intensity: float

    def __post_init__(self):
        s, K, rho = self.servers, self.buffer, self.traffic_intensity
        if isinstance(s, bool) or int(s) != s or s < 1:
            raise InvalidChainError(f"servers must be an integer >= 1, got {s!r}")
        if isinstance(K, bool) or int(K) != K or K < 0:
            raise InvalidChainError(f"buffer must be an integer >= 0, got {K!r}")
        if not (math.isfinite(rho) and rho > 0):
            raise InvalidChainError(f"traffic intensity must be finite and > 0, got {rho!r}")
        object.__setattr__(self, "servers", int(s))
        object.__setattr__(self, "buffer", int(K))
        object.__setattr__(self, "traffic_intensity", float(rho))

    @property
    def J(self) -> int:
        return self.servers + self.buffer


@dataclass(frozen=True)
class StationaryDistribution:
    probabilities: np.ndarray
    cumulative: np.ndarray
    log_probabilities: np.ndarray
    log_normalizer: float = 0.0

    @property
    def J(self) -> int:
        return self.probabilities.size - 1

    @property
    def pi_J(self) -> float:
        return float(self.probabilities[-1])

    def tail(self, start: int) -> float:
        """``P(Q >= start)``, summed from the top to keep small tails exact."""
        return float(math.fsum(self.probabilities[start:]))


@dataclass(frozen=True)
class OutputRatioResult:
    departure_rate: float
    cumulative_departure_fractions: np.ndarray
    ratio: float | None = None


class MarkedRatio(float):
    """Output ratio of a marked death process; always tagged experimental."""

    experimental = True
    normalization: str = "marked"

    def __new__(cls, value: float, normalization: str = "marked"):
        obj = super().__new__(cls, value)
        obj.normalization = normalization
        return obj

    def __repr__(self) -> str:
        return f"MarkedRatio({float(self)!r}, normalization={self.normalization!r}, experimental=True)"


def build_mmsk(params: MmskParams) -> BirthDeathChain:
    """M/M/s/K as a birth-death chain with unit per-server service rate.

    Births are ``s*rho`` everywhere and the death rate out of state ``i`` is
    ``min(i, s)``.
    """
    s, J = params.servers, params.J
    births = np.full(J, s * params.traffic_intensity)
    deaths = np.minimum(np.arange(1, J + 1), s).astype(float)
    return BirthDeathChain(J, births, deaths)


def stationary(chain: BirthDeathChain) -> StationaryDistribution:
    """Stationary law from detailed balance, accumulated in log space."""
    log_ratios = np.log(chain.birth_rates) - np.log(chain.death_rates)
    logw = np.concatenate(([0.0], np.cumsum(log_ratios)))
    logw -= logw.max()
    log_norm = float(np.logaddexp.reduce(logw))
    if not math.isfinite(log_norm):
        raise InvalidChainError("stationary normalizer is not representable")
    logp = logw - log_norm
    p = np.exp(logp)
    # Cumulative sums in log space so that P_i stays relatively accurate in a
    # deep left tail; the last entry is pinned to exactly one.
    cum = np.exp(np.logaddexp.accumulate(logp))
    cum[-1] = 1.0
    for arr in (p, cum, logp):
        arr.flags.writeable = False
    return StationaryDistribution(p, cum, logp, log_norm)


def output_stats(chain: BirthDeathChain, dist: StationaryDistribution | None = None) -> OutputRatioResult:
    """Departure rate ``lambda*`` and cumulative departure fractions ``Lambda*_i``."""
    if dist is None:
        dist = stationary(chain)
    flow = chain.death_rates * dist.probabilities[1:]
    lam_star = math.fsum(flow)
    cum = np.concatenate(([0.0], np.cumsum(flow))) / lam_star
    cum[-1] = 1.0
    cum.flags.writeable = False
    return OutputRatioResult(lam_star, cum)


def _gap_over_pi(chain: BirthDeathChain, dist: StationaryDistribution, weights: np.ndarray) -> tuple[np.ndarray, float]:
    """``(P_i - Lambda_i) / pi_i`` for ``i = 0..J`` and the weighted rate.

    ``weights[j-1]`` multiplies the death flow out of state ``j`` when forming
    ``Lambda``.  The ratio is built by a forward recurrence below the median
    and a backward one above it: each direction only ever divides by the
    growing side of the distribution, so tiny ``pi_i`` at either end never
    amplify rounding error.
    """
    lam = chain.birth_rates
    mu = chain.death_rates
    p = dist.probabilities
    J = chain.J
    wflow = mu * weights * p[1:]
    rate = math.fsum(wflow)
    # weighted flow into state i+1 relative to pi_i and pi_{i+1}
    down_per_pi_next = (mu * weights) / rate          # w_{i+1} mu_{i+1} / rate
    up_ratio = lam / mu                                 # pi_{i+1} / pi_i
    r = np.zeros(J + 1)
    m = int(np.searchsorted(dist.cumulative, 0.5))
    m = min(max(m, 0), J)
    # forward: r_{i+1} = 1 + (r_i - w_{i+1} mu_{i+1} / (rate * ratio)) / ratio
    ri = 1.0
    r[0] = ri
    for i in range(m):
        ratio = up_ratio[i]
        ri = 1.0 + ri / ratio - down_per_pi_next[i]
        r[i + 1] = ri
    # backward: y_i = (y_{i+1} + w_{i+1} mu_{i+1}/rate - 1) * ratio
    yi = 0.0
    r[J] = 0.0
    for i in range(J - 1, m, -1):
        yi = (yi + down_per_pi_next[i] - 1.0) * up_ratio[i]
        r[i] = yi
    return r, rate


def d_pi(chain: BirthDeathChain, dist: StationaryDistribution | None = None) -> float:
    """Limiting variance-to-mean ratio of the death counting process.

    Evaluates ``1 - 2 sum_i (P_i - L_i)(1 - lambda*/(pi_i lambda_i) (P_i - L_i))``
    for a general chain; the ``i = J`` term is zero because ``P_J = L_J``.
    """
    if dist is None:
        dist = stationary(chain)
    return _marked_sum(chain, dist, np.ones(chain.J), np.ones(chain.J))


def _marked_sum(chain, dist, weights, marks) -> float:
    r, rate = _gap_over_pi(chain, dist, weights)
    p = dist.probabilities[:-1]
    ri = r[:-1]
    terms = p * ri * (marks - rate * ri / chain.birth_rates)
    return 1.0 - 2.0 * math.fsum(terms)


def _first_nonconstant_birth(chain: BirthDeathChain, rtol: float) -> int | None:
    lam = chain.birth_rates
    bad = np.nonzero(np.abs(lam - lam[0]) > rtol * abs(lam[0]))[0]
    return int(bad[0]) if bad.size else None


def d_pi_constant_birth(chain: BirthDeathChain, dist: StationaryDistribution | None = None) -> float:
    """Constant-birth form ``1 - 2 pi_J/(1-pi_J) sum_i P_i (1 - pi_J P_i/pi_i)``."""
    idx = _first_nonconstant_birth(chain, CONSTANT_BIRTH_RTOL)
    if idx is not None:
        raise InvalidChainError(
            f"birth rates are not constant: lambda_{idx} = {chain.birth_rates[idx]!r} "
            f"differs from lambda_0 = {chain.birth_rates[0]!r}"
        )
    if dist is None:
        dist = stationary(chain)
    # R_i = P_i / pi_i from R_i = 1 + R_{i-1} pi_{i-1}/pi_i: positive terms only,
    # so no cancellation even where pi_i dips far below its neighbours.
    back_ratio = chain.death_rates / chain.birth_rates  # pi_{i-1} / pi_i
    R = np.empty(chain.J + 1)
    R[0] = 1.0
    for i in range(chain.J):
        R[i + 1] = 1.0 + R[i] * back_ratio[i]
    p = dist.probabilities
    pJ = dist.pi_J
    terms = p * R * (1.0 - pJ * R)
    return 1.0 - 2.0 * pJ / (1.0 - pJ) * math.fsum(terms)


def d_pi_lower_bound(dist: StationaryDistribution) -> float:
    """``(1/2 - pi_J) / (1 - pi_J)``; valid for constant-birth chains."""
    pJ = dist.pi_J
    return (0.5 - pJ) / (1.0 - pJ)


def d_pi_marked(
    chain: BirthDeathChain,
    counting_probabilities,
    dist: StationaryDistribution | None = None,
    normalization: str = "marked",
) -> MarkedRatio:
    """Output ratio when a death out of state ``j`` counts with probability ``q_j``.

    ``counting_probabilities`` holds ``q_1..q_J``.  With ``normalization="marked"``
    the rate and cumulative fractions are those of the counted deaths
    (``sum mu_j pi_j q_j``); ``"as_printed"`` keeps the unmarked ``lambda*`` and
    ``Lambda*``.  Both coincide when every ``q_j = 1``.
    """
    q = np.asarray(counting_probabilities, dtype=float).reshape(-1)
    if q.size != chain.J:
        raise InvalidChainError(f"expected {chain.J} counting probabilities, got {q.size}")
    if np.any(~np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
        raise InvalidChainError("counting probabilities must lie in [0, 1]")
    if normalization == "marked":
        if not np.any(q > 0):
            raise InvalidChainError("at least one death must be counted")
        weights = q
    elif normalization == "as_printed":
        weights = np.ones(chain.J)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    if dist is None:
        dist = stationary(chain)
    return MarkedRatio(_marked_sum(chain, dist, weights, q), normalization)


def analyze(chain: BirthDeathChain) -> tuple[StationaryDistribution, OutputRatioResult]:
    """Stationary law plus rate, fractions and ratio in one pass."""
    dist = stationary(chain)
    stats = output_stats(chain, dist)
    return dist, OutputRatioResult(stats.departure_rate, stats.cumulative_departure_fractions, d_pi(chain, dist))
