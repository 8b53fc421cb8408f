from .base import substep_count
from .integrators import (
    RkControl,
    StepSizeUnderflow,
    adaptive_rk_step,
    euler_maruyama_logpdf,
    euler_maruyama_step,
    integrate_adaptive,
    integrate_adaptive_batch,
)
from .observation import EpsilonBallObservation, GaussianObservation, epsilon_ball_loglik
from .ou import OuModel, OuParams, ou_logpdf, ou_moments, ou_sample_step
from .periodic import PdParams, PeriodicDriftModel
from .sir import OuHyper, SirModel, SirParams, sir_rhs

__all__ = [
    "EpsilonBallObservation",
    "GaussianObservation",
    "OuHyper",
    "OuModel",
    "OuParams",
    "PdParams",
    "PeriodicDriftModel",
    "RkControl",
    "SirModel",
    "SirParams",
    "StepSizeUnderflow",
    "adaptive_rk_step",
    "epsilon_ball_loglik",
    "euler_maruyama_logpdf",
    "euler_maruyama_step",
    "integrate_adaptive",
    "integrate_adaptive_batch",
    "ou_logpdf",
    "ou_moments",
    "ou_sample_step",
    "sir_rhs",
    "substep_count",
]
