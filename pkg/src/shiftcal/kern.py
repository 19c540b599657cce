"""Kernels, bandwidth selection, and the regularized Gram solve.

Two Gaussian-type kernels drive the calibration: one on parameter
vectors, and one on length-n output vectors whose squared distance is
importance-weighted coordinate-wise, so output discrepancies at inputs
that matter for the test distribution count for more.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

SOLVE_RTOL = 1e-10


class DegenerateBandwidthError(ValueError):
    """Median pairwise distance is zero; no usable bandwidth exists."""


class SolveError(RuntimeError):
    """Regularized Gram system could not be solved to tolerance."""


def _as_matrix(vectors) -> np.ndarray:
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"expected a collection of vectors, got shape {arr.shape}")
    return arr


def pairwise_sqdist(vectors, weights=None) -> np.ndarray:
    """All-pairs (weighted) squared Euclidean distances.

    Computed row-against-block with explicit differences rather than the
    norm-expansion trick: slightly slower, but exact for coincident
    points and free of cancellation.
    """
    mat = _as_matrix(vectors)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        if w.shape != (mat.shape[1],):
            raise ValueError(f"weight length {w.shape} does not match vector length {mat.shape[1]}")
        mat = mat * np.sqrt(w)
    m = mat.shape[0]
    out = np.zeros((m, m))
    for j in range(m - 1):
        diff = mat[j + 1 :] - mat[j]
        row = np.einsum("ij,ij->i", diff, diff)
        out[j, j + 1 :] = row
        out[j + 1 :, j] = row
    return out


def _upper_triangle(dist: np.ndarray) -> np.ndarray:
    idx = np.triu_indices_from(dist, k=1)
    return dist[idx]


def median_heuristic(vectors, weights=None) -> float:
    """Bandwidth sigma^2 = median of pairwise (weighted) squared distances.

    The median over an even pair count is the lower middle value, so the
    result is always an attained distance and runs are deterministic.
    """
    mat = _as_matrix(vectors)
    if mat.shape[0] < 2:
        raise ValueError(f"median heuristic needs at least 2 vectors, got {mat.shape[0]}")
    pairs = np.sort(_upper_triangle(pairwise_sqdist(mat, weights)))
    sigma2 = float(pairs[(pairs.size - 1) // 2])
    if sigma2 <= 0:
        raise DegenerateBandwidthError(
            "median pairwise squared distance is zero; points are (mostly) duplicated"
        )
    return sigma2


@dataclass(frozen=True)
class ParamKernel:
    """Gaussian kernel on parameter space: exp(-||a - b||^2 / (2 sigma2))."""

    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"kernel bandwidth must be positive, got {self.sigma2}")

    def eval(self, theta_a, theta_b) -> float:
        a = np.asarray(theta_a, dtype=float)
        b = np.asarray(theta_b, dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"parameter dimension mismatch: {a.shape} vs {b.shape}")
        diff = a - b
        return float(np.exp(-diff.dot(diff) / (2.0 * self.sigma2)))

    def cross(self, left, right) -> np.ndarray:
        """Kernel matrix between two point collections, shape (len(left), len(right))."""
        left = _as_matrix(left)
        right = _as_matrix(right)
        if left.shape[1] != right.shape[1]:
            raise ValueError(f"parameter dimension mismatch: {left.shape[1]} vs {right.shape[1]}")
        sq = (
            np.einsum("ij,ij->i", left, left)[:, None]
            + np.einsum("ij,ij->i", right, right)[None, :]
            - 2.0 * left @ right.T
        )
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * self.sigma2))

    def gram(self, points) -> np.ndarray:
        dist = pairwise_sqdist(points)
        gram = np.exp(-dist / (2.0 * self.sigma2))
        np.fill_diagonal(gram, 1.0)
        return gram


def param_kernel_eval(theta_a, theta_b, sigma2_theta: float) -> float:
    return ParamKernel(sigma2_theta).eval(theta_a, theta_b)


@dataclass(frozen=True)
class WeightedOutputKernel:
    """Gaussian kernel on output vectors with importance-weighted distance.

    k(Ya, Yb) = exp(-(1 / 2 sigma2) * sum_i beta_i (Ya_i - Yb_i)^2).
    With beta identically 1 this is the plain Gaussian kernel on R^n.
    """

    sigma2: float
    beta: np.ndarray

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"kernel bandwidth must be positive, got {self.sigma2}")
        beta = np.asarray(self.beta, dtype=float)
        object.__setattr__(self, "beta", beta)
        if beta.ndim != 1 or not np.all(np.isfinite(beta)) or np.any(beta < 0):
            raise ValueError("importance weights must be a finite non-negative vector")

    @property
    def n(self) -> int:
        return self.beta.size

    def eval(self, ya, yb) -> float:
        ya = np.asarray(ya, dtype=float)
        yb = np.asarray(yb, dtype=float)
        if ya.shape != yb.shape or ya.shape != self.beta.shape:
            raise ValueError(
                f"output vectors and weights must share length {self.n}, "
                f"got {ya.shape} and {yb.shape}"
            )
        diff = ya - yb
        return float(np.exp(-np.sum(self.beta * diff * diff) / (2.0 * self.sigma2)))

    def gram(self, outputs) -> np.ndarray:
        """Kernel matrix over pseudo-output rows, exactly symmetric, unit diagonal."""
        outputs = self._check_outputs(outputs)
        dist = pairwise_sqdist(outputs, self.beta)
        gram = np.exp(-dist / (2.0 * self.sigma2))
        np.fill_diagonal(gram, 1.0)
        return gram

    def against(self, outputs, observed) -> np.ndarray:
        """Vector of kernel values between each pseudo-output row and the data."""
        outputs = self._check_outputs(outputs)
        observed = np.asarray(observed, dtype=float)
        if observed.shape != (self.n,):
            raise ValueError(f"observed outputs must have length {self.n}, got {observed.shape}")
        diff = outputs - observed
        sq = np.einsum("ij,ij,j->i", diff, diff, self.beta)
        return np.exp(-sq / (2.0 * self.sigma2))

    def _check_outputs(self, outputs) -> np.ndarray:
        outputs = np.asarray(outputs, dtype=float)
        if outputs.ndim != 2 or outputs.shape[1] != self.n:
            raise ValueError(
                f"pseudo-outputs must be shaped (m, {self.n}), got {outputs.shape}"
            )
        return outputs


def weighted_output_kernel_eval(ya, yb, beta, sigma2: float) -> float:
    return WeightedOutputKernel(sigma2, np.asarray(beta, dtype=float)).eval(ya, yb)


@dataclass(frozen=True)
class GramSystem:
    """The linear system behind the posterior-embedding weights.

    ``gram`` holds output-kernel values among the m pseudo-output
    vectors; ``rhs`` their kernel values against the observed data;
    ``epsilon`` the Tikhonov constant applied as (G + m eps I).
    """

    gram: np.ndarray
    rhs: np.ndarray
    epsilon: float

    def __post_init__(self):
        gram = np.asarray(self.gram, dtype=float)
        rhs = np.asarray(self.rhs, dtype=float)
        object.__setattr__(self, "gram", gram)
        object.__setattr__(self, "rhs", rhs)
        m = gram.shape[0]
        if gram.shape != (m, m) or rhs.shape != (m,):
            raise ValueError(f"inconsistent system shapes: {gram.shape}, {rhs.shape}")
        if not self.epsilon > 0:
            raise ValueError(f"regularizer must be positive, got {self.epsilon}")

    @property
    def m(self) -> int:
        return self.rhs.size


def gram_and_rhs(pseudo_outputs, observed, kernel: WeightedOutputKernel, epsilon: float) -> GramSystem:
    """Assemble the Gram matrix and data-kernel vector for the solve."""
    return GramSystem(
        gram=kernel.gram(pseudo_outputs),
        rhs=kernel.against(pseudo_outputs, observed),
        epsilon=epsilon,
    )


def regularized_solve(system: GramSystem, m: int | None = None) -> np.ndarray:
    """Solve (G + m eps I) w = rhs by Cholesky factorization.

    The shifted matrix is symmetric positive definite for any eps > 0.
    One step of iterative refinement is applied if the residual exceeds
    SOLVE_RTOL * max(1, ||rhs||_inf); failure past that raises.
    """
    if m is None:
        m = system.m
    lhs = system.gram + (m * system.epsilon) * np.eye(system.m)
    if not np.all(np.isfinite(lhs)) or not np.all(np.isfinite(system.rhs)):
        raise SolveError("non-finite entries in the regularized system")
    try:
        factor = cho_factor(lhs, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SolveError(f"factorization failed: {exc}") from exc
    w = cho_solve(factor, system.rhs, check_finite=False)

    bound = SOLVE_RTOL * max(1.0, float(np.max(np.abs(system.rhs))))
    residual = lhs @ w - system.rhs
    if np.max(np.abs(residual)) > bound:
        w = w - cho_solve(factor, residual, check_finite=False)
        residual = lhs @ w - system.rhs
        if np.max(np.abs(residual)) > bound:
            raise SolveError(
                f"solve residual {np.max(np.abs(residual)):.3e} exceeds bound {bound:.3e}"
            )
    return w
