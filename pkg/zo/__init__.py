from .estimator import (
    DEFAULT_LAMBDA,
    EmptyDirectionsError,
    InvalidDimensionError,
    NonFiniteLossError,
    SmoothingConfig,
    ZoEstimate,
    sample_direction,
    sample_directions,
    zo_estimate,
    zo_estimate_averaged,
    zo_estimate_batch,
)
from .oracles import (
    LogCoshLoss,
    NonSymmetricMatrixError,
    QuadraticLoss,
    bias_bound,
    second_moment_bound,
    smoothed_gradient_oracle,
)

__all__ = [
    "DEFAULT_LAMBDA",
    "EmptyDirectionsError",
    "InvalidDimensionError",
    "NonFiniteLossError",
    "SmoothingConfig",
    "ZoEstimate",
    "sample_direction",
    "sample_directions",
    "zo_estimate",
    "zo_estimate_averaged",
    "zo_estimate_batch",
    "LogCoshLoss",
    "NonSymmetricMatrixError",
    "QuadraticLoss",
    "bias_bound",
    "second_moment_bound",
    "smoothed_gradient_oracle",
]
