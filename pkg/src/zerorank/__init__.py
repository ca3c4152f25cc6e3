"""Truncated rank-based tests for non-negative data with excessive zeros.

Zero-heavy data (microbiome relative abundances, expression counts, ...)
drown classical rank tests in tied zeros.  The tests here first discard an
equal-and-maximal share of zeros from every group, then apply a Wilcoxon
(two groups) or Kruskal-Wallis (K groups) style statistic whose null
variance accounts for the data-driven truncation.  Closed-form asymptotic
relative efficiency calculators, permutation engines and a simulation
harness round out the package; the ``zerorank`` CLI exposes the lot.
"""

from .are_calc import are_k_sample, are_two_sample, beta_delta_matrix, delta_beta, delta_fg_mc
from .data_io import (
    AbundanceTable,
    ResultRow,
    SampleMetadata,
    bh_fdr,
    load_metadata,
    load_table,
    run_differential_abundance,
    run_longitudinal,
)
from .errors import (
    ConfigError,
    DegenerateAllZeros,
    DegenerateConstant,
    DegenerateData,
    DegenerateVariance,
    MetadataMismatch,
    TableParseError,
    UndefinedARE,
    ZeroRankError,
)
from .k_sample import (
    KSampleStats,
    McVarianceConfig,
    estimate_var_u,
    kruskal_wallis_standard,
    kruskal_wallis_truncated,
    kw_truncated_equal,
    kw_truncated_unequal,
)
from .permutation import (
    LongFormat,
    PermutationResult,
    perm_test_groups,
    perm_test_within_subject,
)
from .rank_core import (
    GroupSample,
    RankSumMoments,
    TruncatedPool,
    midranks,
    ranksum_moments_exact,
    truncate,
)
from .twopart_sim import (
    DepthReductionSpec,
    ExperimentConfig,
    TwoPartSpec,
    apply_depth_reduction,
    run_empirical_are,
    run_power,
    run_type1,
    sample_two_part,
)
from .two_sample import (
    TestOutcome,
    TwoSampleStats,
    two_sample_stats,
    wilcoxon_standard,
    wilcoxon_truncated,
)

__version__ = "0.1.0"

__all__ = [
    "AbundanceTable",
    "ConfigError",
    "DegenerateAllZeros",
    "DegenerateConstant",
    "DegenerateData",
    "DegenerateVariance",
    "DepthReductionSpec",
    "ExperimentConfig",
    "GroupSample",
    "KSampleStats",
    "LongFormat",
    "McVarianceConfig",
    "MetadataMismatch",
    "PermutationResult",
    "RankSumMoments",
    "ResultRow",
    "SampleMetadata",
    "TableParseError",
    "TestOutcome",
    "TruncatedPool",
    "TwoPartSpec",
    "TwoSampleStats",
    "UndefinedARE",
    "ZeroRankError",
    "apply_depth_reduction",
    "are_k_sample",
    "are_two_sample",
    "beta_delta_matrix",
    "bh_fdr",
    "delta_beta",
    "delta_fg_mc",
    "estimate_var_u",
    "kruskal_wallis_standard",
    "kruskal_wallis_truncated",
    "kw_truncated_equal",
    "kw_truncated_unequal",
    "load_metadata",
    "load_table",
    "midranks",
    "perm_test_groups",
    "perm_test_within_subject",
    "ranksum_moments_exact",
    "run_differential_abundance",
    "run_empirical_are",
    "run_longitudinal",
    "run_power",
    "run_type1",
    "sample_two_part",
    "truncate",
    "two_sample_stats",
    "wilcoxon_standard",
    "wilcoxon_truncated",
]
