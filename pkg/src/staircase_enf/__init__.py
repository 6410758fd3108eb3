"""Excess noise factors of n-step staircase avalanche multipliers.

Closed forms (Capasso's formula and its equivalents, Friis cascades with
power gains or with electron gains) live in :mod:`staircase_enf.formulas`;
the exact branching-process distribution and a seeded Monte Carlo
simulator live in :mod:`staircase_enf.oracle`.
"""

__version__ = "0.1.0"

from .errors import DomainError, ResourceCapError
from .formulas import (
    CascadeStage,
    EnfComparisonReport,
    PowerGainRule,
    StepMoments,
    StepProfile,
    capasso_enf,
    capasso_enf_delta,
    capasso_enf_heterogeneous,
    capasso_enf_moments,
    cascade_total_gain_variant,
    compare,
    friis_total,
    mean_staircase_gain,
    stages_from_profile,
    stepwise_enf,
)
from .oracle import (
    EnfEstimate,
    GainDistribution,
    SimConfig,
    enf_from_distribution,
    exact_gain_pmf,
    mc_gain_histogram,
    mc_simulate,
)
