"""Bridge particle filters for highly informative observations.

Sequential Monte Carlo with weighting and resampling at intermediate
times between observations, guiding particles toward pinned terminal
states or tight observations, plus normalising-constant estimation,
guide-function fitting, PMMH parameter estimation and a replicated
comparison harness.
"""

from .core import (
    ess_weights,
    log_sum_exp,
    resample_multinomial,
    resample_systematic,
    resample_trigger,
)
from .smc import (
    AncestryMatrix,
    FilterOutput,
    Observations,
    ParticleSystem,
    Schedule,
    bridge_block,
    extract_trajectories,
    run_bootstrap_filter,
    run_bridge_filter,
    simulate_path,
    weighted_expectation,
)
from .guides import (
    ConstantGuide,
    ExactTransitionGuide,
    GpGuide,
    GpGuideParams,
    PdGuide,
    PdGuideParams,
    fit_gp_guide,
    fit_pd_guide,
    gp_condition,
    gp_guide_logpdf,
    gp_marginal_loglik,
    pd_guide_logpdf,
    sq_exp_cov,
)
from .optimize import nelder_mead

__version__ = "0.1.0"
