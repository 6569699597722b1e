"""Event-driven simulation of birth-death chains with batch-means output analysis.

Each replication draws from its own Philox streams spawned off the master
seed, so results do not depend on how replications are scheduled.  Inside a
replication the event skeleton (holding times, up/down choices) and the
death marks come from separate streams: a marked and an unmarked run with
the same seed see the same trajectory.
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numba as nb
import numpy as np

from .chain import BirthDeathChain, InvalidChainError, output_stats, stationary

__all__ = [
    "SimConfig",
    "SimEstimate",
    "DelayEstimate",
    "simulate_ratio",
    "simulate_marked_ratio",
    "empirical_delay_prob",
    "empirical_occupancy",
    "default_workers",
]

CHUNK = 1 << 18
MIN_BATCHES = 20


@dataclass(frozen=True)
class SimConfig:
    master_seed: int = 0
    warmup_time: float | None = None
    batch_count: int = 100
    batch_length: float | None = None
    replications: int = 1
    initial_state: int | str = "stationary-sampled"

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.batch_count < MIN_BATCHES:
            raise ValueError(f"batch_count must be >= {MIN_BATCHES}, got {self.batch_count}")
        if self.warmup_time is not None and not self.warmup_time >= 0:
            raise ValueError("warmup_time must be >= 0")
        if self.batch_length is not None and not self.batch_length > 0:
            raise ValueError("batch_length must be > 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if isinstance(self.initial_state, str) and self.initial_state not in ("stationary", "stationary-sampled"):
            raise ValueError(f"unknown initial_state {self.initial_state!r}")


@dataclass(frozen=True)
class SimEstimate:
    ratio_estimate: float
    standard_error: float
    ci95: tuple[float, float]
    total_departures: int
    mean_rate_estimate: float
    mean_rate_standard_error: float
    master_seed: int
    replications: int
    batch_count: int
    batch_length: float
    warmup_time: float
    low_quality: bool = False
    experimental: bool = False

    @property
    def seed_provenance(self) -> dict:
        return {"master_seed": self.master_seed, "replications": self.replications}

    def as_dict(self) -> dict:
        return {
            "ratio_estimate": self.ratio_estimate,
            "standard_error": self.standard_error,
            "ci95_low": self.ci95[0],
            "ci95_high": self.ci95[1],
            "total_departures": self.total_departures,
            "mean_rate_estimate": self.mean_rate_estimate,
            "mean_rate_standard_error": self.mean_rate_standard_error,
            "master_seed": self.master_seed,
            "replications": self.replications,
            "batch_count": self.batch_count,
            "batch_length": self.batch_length,
            "warmup_time": self.warmup_time,
            "low_quality": self.low_quality,
            "experimental": self.experimental,
        }


class DelayEstimate(NamedTuple):
    probability: float
    standard_error: float


@nb.njit(cache=True, nogil=True)
def _advance(state, t, lam, mu, q, expo, u_dir, u_mark, t_begin, batch_len, n_batch,
             threshold, counts, busy, occ):
    """Run events from the given draws until they run out or the horizon is hit."""
    t_end = t_begin + batch_len * n_batch
    n = expo.shape[0]
    for k in range(n):
        rate = lam[state] + mu[state]
        t_next = t + expo[k] / rate
        a = max(t, t_begin)
        b = min(t_next, t_end)
        if b > a:
            occ[state] += b - a
            if state >= threshold:
                ba = min(int((a - t_begin) / batch_len), n_batch - 1)
                bb = min(int((b - t_begin) / batch_len), n_batch - 1)
                if ba == bb:
                    busy[ba] += b - a
                else:
                    busy[ba] += t_begin + (ba + 1) * batch_len - a
                    for m in range(ba + 1, bb):
                        busy[m] += batch_len
                    busy[bb] += b - (t_begin + bb * batch_len)
        if t_next >= t_end:
            return state, t_end, True
        if u_dir[k] * rate < lam[state]:
            state += 1
        else:
            if t_next >= t_begin and u_mark[k] < q[state]:
                counts[min(int((t_next - t_begin) / batch_len), n_batch - 1)] += 1
            state -= 1
        t = t_next
    return state, t, False


def default_workers() -> int:
    env = os.environ.get("BRAVO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _resolve(chain: BirthDeathChain, config: SimConfig):
    dist = stationary(chain)
    lam_star = output_stats(chain, dist).departure_rate
    batch_length = config.batch_length if config.batch_length is not None else 1e4 / lam_star
    if config.warmup_time is not None:
        warmup = float(config.warmup_time)
    else:
        slowest = min(chain.birth_rates.min(), chain.death_rates.min())
        warmup = 100.0 * chain.J / slowest
    return dist, float(batch_length), warmup


def _replication(seq, chain, dist, marks, config, batch_length, warmup, threshold):
    skeleton_seq, mark_seq, init_seq = seq.spawn(3)
    skel = np.random.Generator(np.random.Philox(skeleton_seq))
    mark_rng = np.random.Generator(np.random.Philox(mark_seq))
    if isinstance(config.initial_state, str):
        init = np.random.Generator(np.random.Philox(init_seq))
        state = int(init.choice(chain.num_states, p=dist.probabilities))
    else:
        state = int(config.initial_state)
    J = chain.J
    lam = np.zeros(J + 1)
    lam[:J] = chain.birth_rates
    mu = np.zeros(J + 1)
    mu[1:] = chain.death_rates
    q = np.zeros(J + 1)
    q[1:] = marks
    B = config.batch_count
    counts = np.zeros(B, dtype=np.int64)
    busy = np.zeros(B)
    occ = np.zeros(J + 1)
    t = 0.0
    done = False
    while not done:
        expo = skel.standard_exponential(CHUNK)
        u_dir = skel.random(CHUNK)
        u_mark = mark_rng.random(CHUNK)
        state, t, done = _advance(state, t, lam, mu, q, expo, u_dir, u_mark, warmup,
                                  batch_length, B, threshold, counts, busy, occ)
    return counts, busy, occ


def _run(chain, marks, config, threshold, workers):
    if not isinstance(config.initial_state, str) and not 0 <= int(config.initial_state) <= chain.J:
        raise ValueError(f"initial_state must lie in [0, {chain.J}]")
    dist, batch_length, warmup = _resolve(chain, config)
    seqs = np.random.SeedSequence(int(config.master_seed)).spawn(config.replications)
    workers = default_workers() if workers is None else max(1, int(workers))

    def task(seq):
        return _replication(seq, chain, dist, marks, config, batch_length, warmup, threshold)

    if workers == 1 or config.replications == 1:
        results = [task(seq) for seq in seqs]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, config.replications)) as pool:
            results = list(pool.map(task, seqs))  # map keeps replication order
    counts = np.stack([r[0] for r in results])
    busy = np.stack([r[1] for r in results])
    occ = np.sum([r[2] for r in results], axis=0)
    return counts, busy, occ, batch_length, warmup


def _ratio_estimate(counts: np.ndarray, batch_length: float, config: SimConfig, experimental: bool) -> SimEstimate:
    R, B = counts.shape
    c = counts.astype(float)
    n = R * B
    dof = R * (B - 1)
    dev = c - c.mean(axis=1, keepdims=True)
    mean = c.mean()
    total = int(counts.sum())
    low_quality = bool(np.any(counts == 0)) or mean <= 0
    if mean <= 0:
        warnings.warn("no counted departures; ratio estimate is undefined", RuntimeWarning)
        nan = math.nan
        return SimEstimate(nan, nan, (nan, nan), total, 0.0, nan, int(config.master_seed),
                           R, B, batch_length, 0.0, True, experimental)
    if low_quality:
        warnings.warn("some batches recorded no departures; estimate flagged low quality", RuntimeWarning)
    s2 = float(np.sum(dev ** 2) / dof)
    m3 = float(np.mean(dev ** 3))
    m4 = float(np.mean(dev ** 4))
    ratio = s2 / mean
    # delta method for S^2 / mean
    var_s2 = max(m4 - s2 * s2, 0.0) / dof
    var_mean = s2 / n
    cov = m3 / n
    var_ratio = var_s2 / mean ** 2 + s2 * s2 * var_mean / mean ** 4 - 2.0 * s2 * cov / mean ** 3
    se = math.sqrt(max(var_ratio, 0.0))
    rate = mean / batch_length
    rate_se = math.sqrt(s2 / n) / batch_length
    return SimEstimate(
        ratio_estimate=ratio,
        standard_error=se,
        ci95=(ratio - 1.96 * se, ratio + 1.96 * se),
        total_departures=total,
        mean_rate_estimate=rate,
        mean_rate_standard_error=rate_se,
        master_seed=int(config.master_seed),
        replications=R,
        batch_count=B,
        batch_length=batch_length,
        warmup_time=0.0,
        low_quality=low_quality,
        experimental=experimental,
    )


def simulate_ratio(chain: BirthDeathChain, config: SimConfig, workers: int | None = None) -> SimEstimate:
    """Batch-means estimate of the death-count variance-to-mean ratio."""
    return simulate_marked_ratio(chain, np.ones(chain.J), config, workers, _experimental=False)


def simulate_marked_ratio(chain: BirthDeathChain, q, config: SimConfig, workers: int | None = None,
                          _experimental: bool = True) -> SimEstimate:
    """As :func:`simulate_ratio`, counting a death out of state ``j`` with probability ``q_j``."""
    marks = np.asarray(q, dtype=float).reshape(-1)
    if marks.size != chain.J:
        raise InvalidChainError(f"expected {chain.J} counting probabilities, got {marks.size}")
    if np.any(marks < 0) or np.any(marks > 1):
        raise InvalidChainError("counting probabilities must lie in [0, 1]")
    counts, _, _, batch_length, warmup = _run(chain, marks, config, chain.J + 1, workers)
    est = _ratio_estimate(counts, batch_length, config, _experimental)
    return _with_warmup(est, warmup)


def _with_warmup(est: SimEstimate, warmup: float) -> SimEstimate:
    d = est.__dict__.copy()
    d["warmup_time"] = warmup
    return SimEstimate(**d)


def empirical_delay_prob(chain: BirthDeathChain, s: int, config: SimConfig,
                         workers: int | None = None) -> DelayEstimate:
    """Post-warmup fraction of time with at least ``s`` customers present."""
    if not 0 <= int(s) <= chain.J:
        raise ValueError(f"s must lie in [0, {chain.J}]")
    _, busy, _, batch_length, _ = _run(chain, np.ones(chain.J), config, int(s), workers)
    frac = busy.reshape(-1) / batch_length
    se = float(frac.std(ddof=1) / math.sqrt(frac.size))
    return DelayEstimate(float(frac.mean()), se)


def empirical_occupancy(chain: BirthDeathChain, config: SimConfig, workers: int | None = None) -> np.ndarray:
    """Long-run fraction of post-warmup time spent in each state."""
    _, _, occ, _, _ = _run(chain, np.ones(chain.J), config, chain.J + 1, workers)
    return occ / occ.sum()
