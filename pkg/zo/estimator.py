"""
Two-point zeroth-order gradient estimation.

Directions are drawn uniformly from the sphere of radius sqrt(d); the estimate
for a single direction u is

    g = (f(x + lambda*u) - f(x - lambda*u)) / (2*lambda) * u

Loss evaluations always run on fresh arrays, the caller's x is never mutated.
"""

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

DEFAULT_LAMBDA = 0.005
DEFAULT_NUM_PERTURBATIONS = 1

LossFn = Callable[[np.ndarray], float]


class InvalidDimensionError(ValueError):
    """Raised when a direction is requested for a non-positive dimension."""


class EmptyDirectionsError(ValueError):
    """Raised when an averaged estimate is requested with no directions."""


class NonFiniteLossError(ArithmeticError):
    """A loss evaluation returned NaN or +/-inf."""

    def __init__(self, which: str, value: float, step: int | None = None):
        self.which = which
        self.value = value
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"Non-finite loss {value!r} from {which}{where}")


@dataclass(frozen=True)
class ZoEstimate:
    gradient: np.ndarray
    loss_plus: float
    loss_minus: float
    delta: float


@dataclass(frozen=True)
class SmoothingConfig:
    """Perturbation scale and number of directions averaged per estimate."""

    lam: float = DEFAULT_LAMBDA
    num_perturbations: int = DEFAULT_NUM_PERTURBATIONS

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.num_perturbations < 1:
            raise ValueError(
                f"num_perturbations must be >= 1, got {self.num_perturbations}"
            )


def sample_direction(d: int, rng: np.random.Generator) -> np.ndarray:
    """
    Sample a direction uniformly from the sphere of radius sqrt(d).

    A standard Gaussian vector is normalized and rescaled, which is exactly
    uniform on the sphere.

    Args:
        d: Dimension, must be >= 1
        rng: Generator the draw is taken from

    Returns:
        float64 vector of length d with Euclidean norm sqrt(d)
    """
    if d < 1:
        raise InvalidDimensionError(f"Direction dimension must be >= 1, got {d}")
    z = rng.standard_normal(d)
    return z * (np.sqrt(d) / np.linalg.norm(z))


def sample_directions(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Sample `count` sphere directions at once, one per row."""
    if d < 1:
        raise InvalidDimensionError(f"Direction dimension must be >= 1, got {d}")
    z = rng.standard_normal((count, d))
    return z * (np.sqrt(d) / np.linalg.norm(z, axis=1, keepdims=True))


def check_finite(value: float, which: str, step: int | None = None) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise NonFiniteLossError(which, value, step)
    return value


def zo_estimate(loss_at: LossFn, x: np.ndarray, u: np.ndarray, lam: float) -> ZoEstimate:
    """
    Two-point estimate of the gradient of `loss_at` at x along u.

    Exactly two loss evaluations are made, at x + lam*u and x - lam*u.

    Args:
        loss_at: Scalar loss of a parameter vector
        x: Parameter vector (not modified)
        u: Direction, same shape as x
        lam: Perturbation scale, > 0

    Returns:
        ZoEstimate with gradient = (delta / 2 lam) * u
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    if x.shape != u.shape:
        raise InvalidDimensionError(
            f"Direction shape {u.shape} does not match parameter shape {x.shape}"
        )

    step = lam * u
    loss_plus = check_finite(loss_at(x + step), "loss at x + lambda*u")
    loss_minus = check_finite(loss_at(x - step), "loss at x - lambda*u")
    delta = loss_plus - loss_minus
    return ZoEstimate(
        gradient=(delta / (2.0 * lam)) * u,
        loss_plus=loss_plus,
        loss_minus=loss_minus,
        delta=delta,
    )


def zo_estimate_averaged(
    loss_at: LossFn, x: np.ndarray, directions: Sequence[np.ndarray], lam: float
) -> ZoEstimate:
    """
    Average of single-direction estimates over several directions.

    With one direction the result is the zo_estimate output itself.
    """
    if len(directions) == 0:
        raise EmptyDirectionsError("At least one direction is required")
    dims = {np.shape(u) for u in directions}
    if len(dims) != 1:
        raise InvalidDimensionError(f"Directions have mixed shapes: {sorted(dims)}")

    estimates = [zo_estimate(loss_at, x, u, lam) for u in directions]
    if len(estimates) == 1:
        return estimates[0]

    count = len(estimates)
    gradient = np.zeros_like(estimates[0].gradient)
    for est in estimates:
        gradient += est.gradient
    return ZoEstimate(
        gradient=gradient / count,
        loss_plus=sum(e.loss_plus for e in estimates) / count,
        loss_minus=sum(e.loss_minus for e in estimates) / count,
        delta=sum(e.delta for e in estimates) / count,
    )


def zo_estimate_batch(
    loss_rows: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    directions: np.ndarray,
    lam: float,
) -> np.ndarray:
    """
    Row-wise estimates for many directions with a vectorized loss.

    `loss_rows` maps an (n, d) array of parameter vectors to n losses. Used by
    the Monte-Carlo property checks, where 10^5 single calls would be slow.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    step = lam * directions
    loss_plus = np.asarray(loss_rows(x + step), dtype=np.float64)
    loss_minus = np.asarray(loss_rows(x - step), dtype=np.float64)
    if not (np.all(np.isfinite(loss_plus)) and np.all(np.isfinite(loss_minus))):
        raise NonFiniteLossError("batched loss evaluation", float("nan"))
    delta = loss_plus - loss_minus
    return (delta / (2.0 * lam))[:, None] * directions
