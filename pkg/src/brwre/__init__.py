"""Branching random walks in random environment on Z^d."""

from .envmodel import (
    EnvironmentLaw,
    OffspringLaw,
    Regime,
    RegimeReport,
    c0,
    classify_regime,
    entropy_criterion,
    env_moments,
    named_environment,
)
from .engine import PopulationState, RunStatus, Status, final_state, init_state, run, step
from .observables import ObservableRecord, localization_ratio, overlap_and_max, overlap_power_ratio
from .walkkernel import pi_d, return_prob, t0_epsilon

__version__ = "0.1.0"
