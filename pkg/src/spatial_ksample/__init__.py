"""Distribution-free k-sample test for spatially indexed observations.

Populations are compared through kernel-smoothed empirical CDFs evaluated on
a spatial grid; the null distribution of the resulting statistic comes from
label permutation or a spatial block bootstrap.
"""

from .data_model import (
    Bandwidth,
    EvaluationGrid,
    KernelFamily,
    KernelSpec,
    Method,
    Observation,
    SpatialDataset,
    TestConfig,
    TestResult,
    validate_dataset,
)
from .errors import *  # noqa: F401,F403
from .estimator import (
    SmoothedCdfField,
    asymptotic_variance,
    build_cdf_fields,
    pooled_ecdf,
    smoothed_cdf,
    variance_diagnostic,
)
from .kernels import (
    kernel_eval,
    rule_of_thumb_bandwidth,
    scaled_kernel,
    select_bandwidth_cv,
    squared_integral,
)
from .resampling import (
    BlockPartition,
    block_bootstrap_sample,
    null_distribution,
    p_value,
    partition_blocks,
    permute_labels,
    run_test,
)
from .simulation import (
    FieldModel,
    LocationModel,
    Margin,
    ScenarioSpec,
    consistency_curve,
    generate_dataset,
    monte_carlo_rejection_rate,
    plugin_C,
)
from .statistic import StatisticBreakdown, build_grid, compute_Tn

__version__ = "0.1.0"
