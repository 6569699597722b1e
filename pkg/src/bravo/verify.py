"""Self-verification suite: numbered acceptance checks with measured vs expected values."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chain import (BirthDeathChain, MmskParams, build_mmsk, d_pi, d_pi_constant_birth, d_pi_marked, output_stats,
                    stationary)
from .qed import d0, d_beta_eta, delay_prob_limit, golden_section_argmin, i_plus, j_beta, l_eta
from .special import BERRY_ESSEEN_C, POISSON_THIRD_ABS_MOMENT, poisson_asymptotics_report

__all__ = ["Check", "run_checks", "format_report", "CRITERIA"]


@dataclass(frozen=True)
class Check:
    criterion: int
    name: str
    passed: bool
    measured: str
    expected: str
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        out = f"[{status}] {self.criterion:>2} {self.name}: measured {self.measured}; expected {self.expected}"
        if self.detail:
            out += f" ({self.detail})"
        return out


def _g(x: float) -> str:
    return f"{x:.12g}"


def _qed_exact_chain(s: int, eta: float, beta: float):
    return build_mmsk(MmskParams(s, math.ceil(eta * math.sqrt(s)), 1.0 - beta / math.sqrt(s)))


def check_formula_equivalence() -> list[Check]:
    rng = np.random.default_rng(1601)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        J = int(rng.integers(1, 201))
        lam = float(rng.uniform(0.1, 10.0))
        mu = rng.uniform(0.1, 10.0, size=J)
        chain = BirthDeathChain(J, np.full(J, lam), mu)
        dist = stationary(chain)
        worst = max(worst, abs(d_pi(chain, dist) - d_pi_constant_birth(chain, dist)))
    elapsed = time.perf_counter() - start
    return [
        Check(1, "general and constant-birth ratio formulas agree on 200 random chains",
              worst <= 1e-10, f"max diff {worst:.3e}", "<= 1e-10"),
        Check(1, "formula-equivalence runtime", elapsed < 5.0, f"{elapsed:.2f} s", "< 5 s"),
    ]


def check_renewal() -> list[Check]:
    v = d_pi(BirthDeathChain.from_rates([1.0], [1.0]))
    return [Check(2, "two-state chain ratio", abs(v - 0.5) <= 1e-12, _g(v), "0.5 +- 1e-12")]


def check_mm1k_critical() -> list[Check]:
    v = d_pi(build_mmsk(MmskParams(1, 2000, 1.0)))
    return [Check(3, "M/M/1/K ratio at rho=1, K=2000", 0.656 <= v <= 0.676, _g(v), "in [0.656, 0.676]")]


def check_critical_identity() -> list[Check]:
    lhs = 2.0 / 3.0 - l_eta(0.0)
    rhs = 1.0 - 4.0 * (1.0 - math.log(2.0)) / math.pi
    return [Check(4, "critical ratio identity 2/3 - L(0) = 1 - 4(1 - log 2)/pi",
                  abs(lhs - rhs) <= 1e-12, _g(lhs), f"{_g(rhs)} +- 1e-12")]


def check_minimum() -> list[Check]:
    closed = math.sqrt(2 * math.pi) * (math.log(8.0) - 2.0) / (4.0 - math.pi)
    numeric = golden_section_argmin(d0, 0.0, 10.0)
    value = d0(numeric)
    return [
        Check(5, "argmin of critical ratio", abs(numeric - closed) <= 1e-6, _g(numeric), f"{_g(closed)} +- 1e-6"),
        Check(5, "minimum of critical ratio", abs(value - 0.6018) <= 5e-4, _g(value), "0.6018 +- 5e-4"),
    ]


def check_range() -> list[Check]:
    vals = np.array([d0(0.01 * k) for k in range(10001)])
    lo, hi = float(vals.min()), float(vals.max())
    ok = lo > 0.6 and hi <= 2.0 / 3.0
    return [Check(6, "critical ratio range on eta in [0, 100]", ok, f"[{_g(lo)}, {_g(hi)}]", "within (0.6, 2/3]")]


def check_i_plus() -> list[Check]:
    r = i_plus()
    flag = "printed domination constant consistent" if r.printed_form_consistent else \
        f"printed domination constant {_g(r.printed_form)} is inconsistent (exceeds 1/sqrt(2 pi))"
    return [
        Check(7, "I+ quadrature against stated decimal", abs(r.quadrature - 0.2606845) <= 1e-7,
              _g(r.quadrature), "0.2606845 +- 1e-7",
              f"stated decimal differs from (1 - log sqrt2)/sqrt(2 pi) = {_g(r.closed_form)}"),
        Check(7, "I+ quadrature against (1 - log sqrt2)/sqrt(2 pi)", r.abs_error <= 1e-9,
              _g(r.quadrature), f"{_g(r.closed_form)} +- 1e-9", flag),
    ]


def check_j_beta() -> list[Check]:
    out = []
    for beta in (0.5, 1.0, 2.0, -0.5, -1.0):
        r = j_beta(beta)
        label = "positive" if beta > 0 else "negative"
        out.append(Check(
            8, f"J_beta direct vs stated {label}-beta reduction at beta={beta:g}",
            r.printed_discrepancy <= 1e-8,
            _g(r.semiclosed_as_printed), f"direct {_g(r.direct)} +- 1e-8",
            f"re-derived reduction {_g(r.semiclosed)} differs by {r.discrepancy:.1e}",
        ))
    r0 = j_beta(0.0)
    target = 0.5 * math.log(2.0) / math.sqrt(2 * math.pi)
    out.append(Check(8, "J_0 = log sqrt2 / sqrt(2 pi)", abs(r0.direct - target) <= 1e-9,
                     _g(r0.direct), f"{_g(target)} +- 1e-9"))
    return out


def check_finite_s_convergence() -> list[Check]:
    start = time.perf_counter()
    out = []
    for eta, beta in ((1.0, -1.0), (1.0, 1.0), (2.0, 0.5)):
        limit = d_beta_eta(eta, beta).ratio
        small = abs(d_pi(_qed_exact_chain(100, eta, beta)) - limit)
        large = abs(d_pi(_qed_exact_chain(10_000, eta, beta)) - limit)
        out.append(Check(9, f"finite-s ratio approaches limit at eta={eta:g}, beta={beta:g}",
                         large <= 0.02 and large < small,
                         f"|diff| {large:.3e} at s=1e4, {small:.3e} at s=1e2",
                         "<= 0.02 and shrinking"))
    elapsed = time.perf_counter() - start
    out.append(Check(9, "finite-s convergence runtime", elapsed < 30.0, f"{elapsed:.2f} s", "< 30 s"))
    return out


def check_continuity() -> list[Check]:
    worst = 0.0
    for eta in (0.5, 1.0, 2.0):
        for beta in (1e-3, -1e-3):
            worst = max(worst, abs(d_beta_eta(eta, beta).ratio - d0(eta)))
    return [Check(10, "continuity across the critical branch", worst <= 1e-2, f"max diff {worst:.3e}", "<= 1e-2")]


def check_tails() -> list[Check]:
    out = []
    for sign in (1.0, -1.0):
        far = d_beta_eta(1.0, 6.0 * sign).ratio
        near = d_beta_eta(1.0, 4.0 * sign).ratio
        out.append(Check(11, f"tail at beta={6 * sign:+g}", far >= 0.95 and far > near,
                         f"{_g(far)} (beta={4 * sign:+g}: {_g(near)})", ">= 0.95 and above the |beta|=4 value"))
    return out


def check_lower_bound() -> list[Check]:
    worst = math.inf
    for beta in np.arange(-24, 25) * 0.25:
        for eta in (0.25, 0.5, 1.0, 2.0, 4.0):
            worst = min(worst, d_beta_eta(eta, float(beta)).ratio)
    return [Check(12, "limit ratio lower bound on the (beta, eta) grid", worst >= 0.5 - 1e-9,
                  f"min {_g(worst)}", ">= 0.5 - 1e-9")]


def check_delay() -> list[Check]:
    s = 10_000
    chain = _qed_exact_chain(s, 1.0, 1.0)
    finite = stationary(chain).tail(s)
    limit = delay_prob_limit(1.0, 1.0)
    small_beta = delay_prob_limit(1.0, 1e-6)
    target = 1.0 / (1.0 + math.sqrt(math.pi / 2.0))
    return [
        Check(13, "delay probability at s=1e4 vs limit", abs(finite - limit) <= 0.02,
              _g(finite), f"{_g(limit)} +- 0.02"),
        Check(13, "small-beta delay limit", abs(small_beta - target) <= 1e-3,
              _g(small_beta), f"{_g(target)} +- 1e-3"),
    ]


def check_simulation() -> list[Check]:
    from .simulate import SimConfig, simulate_marked_ratio, simulate_ratio

    start = time.perf_counter()
    chain = build_mmsk(MmskParams(5, 7, 1.0))
    # about 5000 departures per batch, 2e7 in total
    rate = output_stats(chain).departure_rate
    est = simulate_ratio(chain, SimConfig(master_seed=14, batch_count=500, replications=8, warmup_time=0.0,
                                          batch_length=5000.0 / rate))
    exact = d_pi(chain)
    marked_chain = build_mmsk(MmskParams(1, 2, 1.0))
    q = [1.0, 1.0, 0.0]
    mest = simulate_marked_ratio(marked_chain, q, SimConfig(master_seed=15, batch_count=500, replications=8,
                                                            warmup_time=0.0, batch_length=10000.0))
    mexact = float(d_pi_marked(marked_chain, q))
    unmarked_norm = float(d_pi_marked(marked_chain, q, normalization="as_printed"))
    elapsed = time.perf_counter() - start
    return [
        Check(14, "simulated M/M/5/7 ratio vs exact", est.total_departures >= 2_000_000
              and abs(est.ratio_estimate - exact) <= 3 * est.standard_error,
              f"{_g(est.ratio_estimate)} +- {est.standard_error:.2e} ({est.total_departures} departures)",
              f"{_g(exact)} within 3 SE"),
        Check(14, "simulated marked M/M/1/3 ratio vs marked formula",
              abs(mest.ratio_estimate - mexact) <= 3 * mest.standard_error,
              f"{_g(mest.ratio_estimate)} +- {mest.standard_error:.2e}", f"{_g(mexact)} within 3 SE",
              f"unmarked-rate normalization would give {_g(unmarked_norm)}"),
        Check(14, "simulation cross-validation runtime", elapsed < 60.0, f"{elapsed:.2f} s", "< 60 s"),
    ]


def check_poisson() -> list[Check]:
    small = poisson_asymptotics_report(100)
    large = poisson_asymptotics_report(10_000)
    bound = BERRY_ESSEEN_C * POISSON_THIRD_ABS_MOMENT
    worst = max(small.scaled_dev, large.scaled_dev)
    return [
        Check(15, "scaled Berry-Esseen deviation", worst <= bound, f"max {_g(worst)}", f"<= {_g(bound)}"),
        Check(15, "local normal approximation error shrinks from s=1e2 to s=1e4",
              large.local_clt_max_rel_err < small.local_clt_max_rel_err,
              f"{_g(large.local_clt_max_rel_err)} at s=1e4", f"< {_g(small.local_clt_max_rel_err)} at s=1e2"),
        Check(15, "|psi_mean| shrinks from s=1e2 to s=1e4", abs(large.psi_mean) < abs(small.psi_mean),
              f"{_g(abs(large.psi_mean))} at s=1e4", f"< {_g(abs(small.psi_mean))} at s=1e2"),
    ]


def check_determinism() -> list[Check]:
    from .cli import simulate_output

    kwargs = dict(s=2, k=3, rho=0.9, marks=None, seed=16, replications=4, batch_count=20,
                  batch_length=500.0, warmup=10.0, initial_state="stationary-sampled", fmt="csv")
    serial = simulate_output(workers=1, **kwargs)
    again = simulate_output(workers=1, **kwargs)
    parallel = simulate_output(workers=4, **kwargs)
    ok = serial == again == parallel
    return [Check(16, "simulate output byte-identical across repeats and thread counts", ok,
                  "identical" if ok else "differs", "identical")]


CRITERIA: list[tuple[int, Callable[[], list[Check]], bool]] = [
    (1, check_formula_equivalence, False),
    (2, check_renewal, False),
    (3, check_mm1k_critical, False),
    (4, check_critical_identity, False),
    (5, check_minimum, False),
    (6, check_range, False),
    (7, check_i_plus, False),
    (8, check_j_beta, False),
    (9, check_finite_s_convergence, False),
    (10, check_continuity, False),
    (11, check_tails, False),
    (12, check_lower_bound, False),
    (13, check_delay, False),
    (14, check_simulation, True),
    (15, check_poisson, False),
    (16, check_determinism, True),
]


def run_checks(level: str = "fast") -> list[Check]:
    """Run every criterion; ``fast`` skips the simulation-backed ones."""
    if level not in ("fast", "full"):
        raise ValueError(f"level must be 'fast' or 'full', got {level!r}")
    checks: list[Check] = []
    for number, fn, needs_sim in CRITERIA:
        if needs_sim and level == "fast":
            continue
        try:
            checks.extend(fn())
        except Exception as exc:  # a crash is a failed check, not a crashed report
            checks.append(Check(number, fn.__name__, False, f"error: {exc}", "no error"))
    return checks


def format_report(checks: list[Check]) -> str:
    lines = [c.line() for c in checks]
    failed = sum(not c.passed for c in checks)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    return "\n".join(lines)
