"""Variance-to-mean ratio of departures from finite birth-death queues."""

from .chain import (
    BirthDeathChain,
    InvalidChainError,
    MarkedRatio,
    MmskParams,
    OutputRatioResult,
    StationaryDistribution,
    analyze,
    build_mmsk,
    d_pi,
    d_pi_constant_birth,
    d_pi_lower_bound,
    d_pi_marked,
    output_stats,
    stationary,
)
from .qed import (
    BETA_SWITCH,
    QedEvaluation,
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
from .simulate import (
    DelayEstimate,
    SimConfig,
    SimEstimate,
    empirical_delay_prob,
    empirical_occupancy,
    simulate_marked_ratio,
    simulate_ratio,
)
from .special import (
    PoissonAsymptoticsReport,
    mills_ratio,
    normal_cdf,
    normal_pdf,
    poisson_asymptotics_report,
    poisson_cdf,
    poisson_cdf_over_pmf,
    poisson_pmf,
)

__version__ = "0.1.0"
