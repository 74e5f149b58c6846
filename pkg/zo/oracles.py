"""
Analytic oracles for checking the estimator.

For a quadratic f(x) = 1/2 x^T A x + b^T x, smoothing over the ball only adds
a constant, so the smoothed gradient is Ax + b for every lambda.
"""

import numpy as np


class NonSymmetricMatrixError(ValueError):
    """Raised when a quadratic is built from a non-symmetric matrix."""


def _check_symmetric(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NonSymmetricMatrixError(f"Quadratic matrix must be square, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12):
        raise NonSymmetricMatrixError("Quadratic matrix must be symmetric")
    return A


class QuadraticLoss:
    """f(x) = 1/2 x^T A x + b^T x with symmetric A."""

    def __init__(self, A: np.ndarray, b: np.ndarray | None = None):
        self.A = _check_symmetric(A)
        d = self.A.shape[0]
        self.b = np.zeros(d) if b is None else np.asarray(b, dtype=np.float64)
        if self.b.shape != (d,):
            raise ValueError(f"b must have shape ({d},), got {self.b.shape}")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def smoothness(self) -> float:
        """Lipschitz constant of the gradient, the spectral norm of A."""
        return float(np.max(np.abs(np.linalg.eigvalsh(self.A))))

    def __call__(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.A @ x + self.b @ x)

    def rows(self, X: np.ndarray) -> np.ndarray:
        """Loss for each row of X."""
        return 0.5 * np.sum((X @ self.A) * X, axis=1) + X @ self.b

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self.b


class LogCoshLoss:
    """f(x) = sum(log cosh(x_i - c_i)); 1-smooth and not quadratic."""

    smoothness = 1.0

    def __init__(self, center: np.ndarray):
        self.center = np.asarray(center, dtype=np.float64)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def __call__(self, x: np.ndarray) -> float:
        return float(np.sum(np.logaddexp(x - self.center, self.center - x) - np.log(2.0)))

    def rows(self, X: np.ndarray) -> np.ndarray:
        Z = X - self.center
        return np.sum(np.logaddexp(Z, -Z) - np.log(2.0), axis=1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x - self.center)


def smoothed_gradient_oracle(
    A: np.ndarray, b: np.ndarray, x: np.ndarray, lam: float
) -> np.ndarray:
    """
    Gradient of the ball-smoothed quadratic at x.

    Args:
        A: Symmetric matrix of the quadratic
        b: Linear term
        x: Evaluation point
        lam: Smoothing radius; does not change the result for a quadratic

    Returns:
        Ax + b
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    A = _check_symmetric(A)
    return A @ np.asarray(x, dtype=np.float64) + np.asarray(b, dtype=np.float64)


def bias_bound(smoothness: float, lam: float, d: int) -> float:
    """Upper bound on ||grad f - grad f_lambda||: (L/2) lambda d^{3/2}."""
    return 0.5 * smoothness * lam * d ** 1.5


def second_moment_bound(grad_norm_sq: float, smoothness: float, lam: float, d: int) -> float:
    """Upper bound on E||g||^2: 2d ||grad f||^2 + (L^2/2) lambda^2 d^3."""
    return 2.0 * d * grad_norm_sq + 0.5 * smoothness ** 2 * lam ** 2 * d ** 3
