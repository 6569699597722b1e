import math
import warnings

import numpy as np
import pytest

from bravo.chain import BirthDeathChain, MmskParams, build_mmsk, d_pi, d_pi_marked, output_stats, stationary
from bravo.qed import delay_prob_limit
from bravo.simulate import (
    SimConfig,
    empirical_delay_prob,
    empirical_occupancy,
    simulate_marked_ratio,
    simulate_ratio,
)

TWO_STATE = BirthDeathChain.from_rates([1.0], [1.0])


def within(est, target, k=3.0):
    return abs(est.ratio_estimate - target) <= k * est.standard_error


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(batch_count=19)
    with pytest.raises(ValueError):
        SimConfig(warmup_time=-1.0)
    with pytest.raises(ValueError):
        SimConfig(batch_length=0.0)
    with pytest.raises(ValueError):
        SimConfig(replications=0)
    with pytest.raises(ValueError):
        SimConfig(master_seed=-1)
    with pytest.raises(ValueError):
        SimConfig(initial_state="empty")


def test_initial_state_out_of_range():
    with pytest.raises(ValueError):
        simulate_ratio(TWO_STATE, SimConfig(initial_state=5, batch_length=10.0))


def test_defaults_follow_rates():
    chain = build_mmsk(MmskParams(2, 2, 0.9))
    est = simulate_ratio(chain, SimConfig(master_seed=1, batch_count=20))
    assert est.batch_length == pytest.approx(1e4 / output_stats(chain).departure_rate)
    assert est.warmup_time == pytest.approx(100 * chain.J / 1.0)


def test_bit_identical_repeats_and_threads():
    chain = build_mmsk(MmskParams(3, 4, 1.0))
    cfg = SimConfig(master_seed=99, batch_count=30, batch_length=200.0, replications=6, warmup_time=5.0)
    a = simulate_ratio(chain, cfg, workers=1)
    b = simulate_ratio(chain, cfg, workers=1)
    c = simulate_ratio(chain, cfg, workers=4)
    assert a == b == c
    assert a.seed_provenance == {"master_seed": 99, "replications": 6}


def test_different_seeds_differ():
    cfg = SimConfig(master_seed=1, batch_count=20, batch_length=100.0)
    other = SimConfig(master_seed=2, batch_count=20, batch_length=100.0)
    assert simulate_ratio(TWO_STATE, cfg).ratio_estimate != simulate_ratio(TWO_STATE, other).ratio_estimate


def test_estimate_shape():
    est = simulate_ratio(TWO_STATE, SimConfig(master_seed=3, batch_count=40, batch_length=500.0, replications=2))
    lo, hi = est.ci95
    assert lo < est.ratio_estimate < hi
    assert est.standard_error > 0
    assert not est.low_quality and not est.experimental
    assert est.total_departures > 0


def test_two_state_ratio():
    est = simulate_ratio(TWO_STATE, SimConfig(master_seed=5, batch_count=200, batch_length=2e4, replications=4,
                                              warmup_time=0.0))
    assert within(est, 0.5)


@pytest.mark.slow
def test_mm5_7_matches_exact():
    chain = build_mmsk(MmskParams(5, 7, 1.0))
    rate = output_stats(chain).departure_rate
    est = simulate_ratio(chain, SimConfig(master_seed=7, batch_count=200, batch_length=5000 / rate,
                                          replications=4, warmup_time=0.0))
    assert within(est, d_pi(chain))


def test_marks_all_one_share_the_skeleton():
    chain = build_mmsk(MmskParams(2, 3, 0.9))
    cfg = SimConfig(master_seed=11, batch_count=25, batch_length=300.0, replications=3)
    plain = simulate_ratio(chain, cfg)
    marked = simulate_marked_ratio(chain, np.ones(chain.J), cfg)
    assert marked.experimental
    assert marked.ratio_estimate == plain.ratio_estimate
    assert marked.total_departures == plain.total_departures


@pytest.mark.slow
def test_marked_half_on_mm2_2():
    chain = build_mmsk(MmskParams(2, 2, 0.8))
    q = np.full(chain.J, 0.5)
    est = simulate_marked_ratio(chain, q, SimConfig(master_seed=12, batch_count=200, batch_length=5000.0,
                                                    replications=4, warmup_time=0.0))
    assert within(est, float(d_pi_marked(chain, q)))


@pytest.mark.slow
def test_marked_mm1_3():
    chain = build_mmsk(MmskParams(1, 2, 1.0))  # capacity 3: states 0..3
    q = [1.0, 1.0, 0.0]
    est = simulate_marked_ratio(chain, q, SimConfig(master_seed=13, batch_count=200, batch_length=10000.0,
                                                    replications=4, warmup_time=0.0))
    assert within(est, float(d_pi_marked(chain, q)))
    # the unmarked-rate normalization (0.75) is far outside the interval
    assert not within(est, float(d_pi_marked(chain, q, normalization="as_printed")))


def test_marked_validation():
    chain = build_mmsk(MmskParams(1, 2, 1.0))
    cfg = SimConfig(batch_length=10.0)
    with pytest.raises(ValueError):
        simulate_marked_ratio(chain, [1.0, 1.0], cfg)
    with pytest.raises(ValueError):
        simulate_marked_ratio(chain, [1.0, 2.0, 0.0], cfg)


def test_zero_count_batches_flagged():
    chain = build_mmsk(MmskParams(1, 2, 1.0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = simulate_ratio(chain, SimConfig(master_seed=4, batch_count=50, batch_length=0.05))
    assert est.low_quality
    assert any("low quality" in str(w.message) for w in caught)


def test_no_counted_deaths_is_nan():
    chain = build_mmsk(MmskParams(1, 2, 1.0))
    with pytest.warns(RuntimeWarning):
        est = simulate_marked_ratio(chain, [0.0, 0.0, 0.0], SimConfig(batch_count=20, batch_length=10.0))
    assert math.isnan(est.ratio_estimate) and est.low_quality


def test_delay_two_state():
    est = empirical_delay_prob(TWO_STATE, 1, SimConfig(master_seed=21, batch_count=100, batch_length=1000.0,
                                                       warmup_time=0.0))
    assert abs(est.probability - 0.5) <= 3 * est.standard_error


@pytest.mark.slow
def test_delay_qed_sized():
    s = 400
    chain = build_mmsk(MmskParams(s, 20, 1 - 1 / math.sqrt(s)))
    est = empirical_delay_prob(chain, s, SimConfig(master_seed=22, batch_count=50, batch_length=50.0,
                                                   replications=4, warmup_time=0.0))
    assert abs(est.probability - delay_prob_limit(1.0, 1.0)) <= 0.03
    assert abs(est.probability - stationary(chain).tail(s)) <= 3 * est.standard_error


def test_delay_matches_stationary_tail():
    chain = build_mmsk(MmskParams(3, 5, 1.1))
    est = empirical_delay_prob(chain, 3, SimConfig(master_seed=23, batch_count=100, batch_length=500.0,
                                                   replications=2))
    assert abs(est.probability - stationary(chain).tail(3)) <= 3 * est.standard_error


def test_occupancy_total_variation():
    chain = BirthDeathChain.from_rates(np.linspace(1, 3, 30), np.linspace(2, 1, 30))
    # about 2e6 events: each event is one birth or one death
    cfg = SimConfig(master_seed=31, batch_count=20, batch_length=2e6 / (2 * output_stats(chain).departure_rate) / 20,
                    warmup_time=0.0)
    occ = empirical_occupancy(chain, cfg)
    tv = 0.5 * np.abs(occ - stationary(chain).probabilities).sum()
    assert tv <= 0.01


def test_rate_law():
    chain = build_mmsk(MmskParams(4, 3, 0.95))
    est = simulate_ratio(chain, SimConfig(master_seed=41, batch_count=100, batch_length=200.0, replications=2))
    lam = output_stats(chain).departure_rate
    assert abs(est.mean_rate_estimate - lam) <= 3 * est.mean_rate_standard_error


def test_standard_error_scaling():
    chain = build_mmsk(MmskParams(2, 3, 1.0))
    base = dict(master_seed=51, batch_count=50, batch_length=400.0, warmup_time=0.0)
    small = simulate_ratio(chain, SimConfig(replications=4, **base))
    large = simulate_ratio(chain, SimConfig(replications=8, **base))
    ratio = small.standard_error / large.standard_error
    assert math.sqrt(2) / 1.5 <= ratio <= math.sqrt(2) * 1.5
