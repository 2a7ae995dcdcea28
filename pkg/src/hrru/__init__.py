"""Randomly reinforced urn simulation and limit-theorem checks.

An urn holds balls of two colors.  Each step draws a batch without
replacement, returns it, and adds new balls of the drawn colors in
proportion to a random reinforcement.  This package simulates such
urns exactly over integers, estimates the limiting proportion and its
fluctuation variance from a single trajectory, couples several urns
through common random factors, and runs replicated experiments that
check the asymptotic normality of the standard estimators.
"""

from .estimators import (
    FROM_MN,
    FROM_ZN,
    ConfidenceInterval,
    PlugInEstimates,
    VarianceEstimates,
    confidence_interval,
    mean_interval,
    normal_cdf,
    normal_quantile,
    plugin_estimates,
    proportion_interval,
    trajectory_variances,
    variance_estimates,
    variance_terms,
)
from .gof import ks_distance, ks_two_sample, max_ecdf_jump
from .montecarlo import (
    CltDiagnostics,
    CoverageReport,
    HittingEstimate,
    LimitLawReport,
    MeanCltDiagnostics,
    MTestFrequency,
    ReplicationPlan,
    RepRecords,
    clt_check_mn,
    clt_check_zn,
    coverage_experiment,
    hitting_probability_check,
    limit_law_suite,
    linear_combination_coverage,
    mtest_rejection,
    replicate,
    walk_absorption_probability,
)
from .multi_urn import (
    CommonFactors,
    CrossIncrementStat,
    MeanReinforcementTest,
    SystemState,
    SystemTrajectory,
    UrnSpec,
    UrnSystem,
    conditional_independence_stat,
    linear_combination_ci,
    mean_reinforcement_test,
    per_urn_summary,
    run_system,
    system_step,
)
from .rng import Stream, SystemStreams, UrnStreams, derive_key, mix64, stream_value
from .urn_core import (
    AbsorbingRandomWalk,
    ConfigError,
    ConstantOne,
    ConstantReinforcement,
    CustomRule,
    DeterministicSchedule,
    DiscreteDraw,
    DiscreteReinforcement,
    IidUniform,
    IntegerDistribution,
    ModelViolationError,
    ParameterError,
    StepRecord,
    Trajectory,
    UniformReinforcement,
    UrnConfig,
    UrnState,
    increment_identity_check,
    run_trajectory,
    sample_hypergeometric,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "AbsorbingRandomWalk",
    "CltDiagnostics",
    "CommonFactors",
    "ConfidenceInterval",
    "ConfigError",
    "ConstantOne",
    "ConstantReinforcement",
    "CoverageReport",
    "CrossIncrementStat",
    "CustomRule",
    "DeterministicSchedule",
    "DiscreteDraw",
    "DiscreteReinforcement",
    "FROM_MN",
    "FROM_ZN",
    "HittingEstimate",
    "IidUniform",
    "IntegerDistribution",
    "LimitLawReport",
    "MTestFrequency",
    "MeanCltDiagnostics",
    "MeanReinforcementTest",
    "ModelViolationError",
    "ParameterError",
    "PlugInEstimates",
    "RepRecords",
    "ReplicationPlan",
    "StepRecord",
    "Stream",
    "SystemState",
    "SystemStreams",
    "SystemTrajectory",
    "Trajectory",
    "UniformReinforcement",
    "UrnConfig",
    "UrnSpec",
    "UrnState",
    "UrnStreams",
    "VarianceEstimates",
    "clt_check_mn",
    "clt_check_zn",
    "conditional_independence_stat",
    "confidence_interval",
    "coverage_experiment",
    "derive_key",
    "hitting_probability_check",
    "increment_identity_check",
    "ks_distance",
    "ks_two_sample",
    "limit_law_suite",
    "linear_combination_ci",
    "linear_combination_coverage",
    "max_ecdf_jump",
    "mean_interval",
    "mean_reinforcement_test",
    "mix64",
    "mtest_rejection",
    "normal_cdf",
    "normal_quantile",
    "per_urn_summary",
    "plugin_estimates",
    "proportion_interval",
    "replicate",
    "run_system",
    "run_trajectory",
    "sample_hypergeometric",
    "step",
    "stream_value",
    "trajectory_variances",
    "variance_estimates",
    "variance_terms",
    "walk_absorption_probability",
    "__version__",
]
