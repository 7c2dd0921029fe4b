"""Differentially private follow-the-regularized-leader via tree aggregation."""

from dpftrl.harness import (
    BoundParams, RegretRecord, SyntheticStream, compute_regret, excess_risk, gen_stream,
    noise_table, online_to_batch, regret_bound_general, run_online,
)
from dpftrl.optimizers import (
    DPFTRL, DPFTRLLeastSquares, IndefiniteSystemError, OptimizerConfig,
    UnsupportedConfigurationError, equivalence_check,
)
from dpftrl.primitives import InvalidInputError, NoiseSource, clip, project_ball
from dpftrl.privacy import (
    CalibrationError, RdpCurve, ResourceError, SensitivityReport, calibrate_noise, compose_rdp,
    epsilon_for, rdp_to_dp, sensitivity_dp, sensitivity_given_order, sensitivity_level_wise,
)
from dpftrl.tree import AggregationTree, OrderingError, SensitivityViolationError

__version__ = "0.1.0"
