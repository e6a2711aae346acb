"""Adaptive importance sampling with proximal Newton proposal updates.

The package targets densities of the form pi(x) proportional to
exp(-f(x) - g(x)) with f smooth and g convex but possibly non-smooth
(indicators of constraint sets, l1 penalties). Proposal means move through
damped proximal Newton steps computed by a dual inner solver; covariances
follow the step metric. A benchmark harness reproduces the reference
experiments against quadrature ground truth.
"""

from .core import (
    AdaptationMode,
    CovarianceMode,
    Proposal,
    ResamplingMode,
    RunResult,
    SamplerConfig,
    SpdMatrix,
    TargetModel,
    WeightedSample,
    gaussian_log_density,
    gaussian_sample,
    substream,
)
from .engine import (
    DegenerateIterationError,
    ResampledSet,
    adapt_proposal_grad,
    adapt_proposal_newton,
    backtrack_theta,
    estimate,
    estimate_z,
    newton_scaling,
    relative_mse,
    relative_mse_pooled,
    resample_global,
    resample_glocal,
    resample_local,
    run_sampler,
    weight_samples,
)
from .harness import (
    ExperimentSpec,
    ReportRow,
    builtin_ablation,
    builtin_dimsweep,
    cell_seed,
    emit_report,
    make_target,
    read_report,
    run_experiment,
)
from .prox import ProxConvergenceWarning, ProxFn, prox_in_metric, project_l2_ball, project_simplex, soft_threshold
from .targets import (
    GroundTruth,
    banana_ground_truth,
    grid_ground_truth,
    make_example_a,
    make_example_b,
    make_example_c,
    make_gaussian,
)

__version__ = "0.1.0"
