"""Sine eigenbasis on the interval (0, length) with Dirichlet boundary.

Fields are plain float64 arrays of eigenmode coefficients ("modal fields").
The basis functions are sqrt(2/l)*sin(k*pi*x/l), k = 1..N, evaluated at the
interior collocation nodes x_j = j*l/(M+1), j = 1..M.  On that node set the
discrete sine transform is exactly invertible for N <= M, and the quadrature
weight l/(M+1) makes the modal Parseval identity exact, so synthesize/analyze
round-trips are lossless up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationRejectedError, InvalidParameterError

__all__ = [
    "GridSpec",
    "SpectralOperator",
    "dirichlet_eigenpairs",
    "semigroup_apply",
    "synthesize",
    "analyze",
    "fractional_norm",
    "check_noise_regularity",
    "lp_norm",
    "as_modal_field",
]


def as_modal_field(coeffs, n_modes: int | None = None) -> np.ndarray:
    """Validate and normalize a modal coefficient vector to float64."""
    arr = np.asarray(coeffs, dtype=float)
    if arr.ndim != 1:
        raise InvalidParameterError(f"modal field must be 1-D, got shape {arr.shape}")
    if n_modes is not None and arr.size != n_modes:
        raise InvalidParameterError(
            f"modal field has {arr.size} modes, expected {n_modes}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("modal field contains non-finite coefficients")
    return arr


@dataclass(frozen=True)
class GridSpec:
    """Collocation grid: N retained modes, M interior nodes, domain length."""

    n_modes: int
    n_quad: int
    length: float = 1.0

    def __post_init__(self):
        if self.n_modes < 1:
            raise InvalidParameterError("n_modes must be >= 1")
        if self.length <= 0:
            raise InvalidParameterError("length must be positive")
        # M >= 2N keeps polynomial nonlinearities clear of aliasing.
        if self.n_quad < 2 * self.n_modes:
            raise InvalidParameterError(
                f"n_quad={self.n_quad} violates anti-aliasing margin "
                f"n_quad >= 2*n_modes={2 * self.n_modes}"
            )

    @property
    def nodes(self) -> np.ndarray:
        return _grid_nodes(self.n_quad, self.length)

    @property
    def quad_weight(self) -> float:
        return self.length / (self.n_quad + 1)


@lru_cache(maxsize=32)
def _grid_nodes(n_quad: int, length: float) -> np.ndarray:
    j = np.arange(1, n_quad + 1, dtype=float)
    return j * length / (n_quad + 1)


@lru_cache(maxsize=32)
def _sine_matrix(n_modes: int, n_quad: int, length: float) -> np.ndarray:
    """(M, N) matrix of basis values sqrt(2/l)*sin(k*pi*x_j/l)."""
    nodes = _grid_nodes(n_quad, length)
    k = np.arange(1, n_modes + 1, dtype=float)
    return np.sqrt(2.0 / length) * np.sin(np.outer(nodes, k) * np.pi / length)


def dirichlet_eigenpairs(n_modes: int, nu: float, length: float) -> np.ndarray:
    """Eigenvalues nu*(k*pi/length)^2 of -nu*Laplacian with Dirichlet walls."""
    if n_modes < 1:
        raise InvalidParameterError("n_modes must be >= 1")
    if nu <= 0:
        raise InvalidParameterError("diffusivity nu must be positive")
    if length <= 0:
        raise InvalidParameterError("length must be positive")
    k = np.arange(1, n_modes + 1, dtype=float)
    return nu * (k * np.pi / length) ** 2


def check_noise_regularity(alpha_exponent: float, lambda_exponent: float,
                           gamma: float) -> bool:
    """Exponent test for sum_k lambda_k^2 alpha_k^(2*gamma-1) < infinity.

    For power laws alpha_k ~ k^a and lambda_k ~ k^(-s) the series converges
    iff a*(2*gamma - 1) - 2*s < -1.  Decided analytically: every finite
    partial sum is finite, so a numeric check would be meaningless.
    """
    return alpha_exponent * (2.0 * gamma - 1.0) - 2.0 * lambda_exponent < -1.0


@dataclass(frozen=True)
class SpectralOperator:
    """Diagonal operator pair (A, Q): decay rates alpha_k and noise amplitudes
    lambda_k on the shared sine eigenbasis, with declared regularity exponent."""

    alphas: np.ndarray
    lambdas: np.ndarray
    gamma_reg: float
    # Power-law exponents behind alphas/lambdas; used by the regularity gate.
    alpha_exponent: float = field(default=2.0)
    lambda_exponent: float = field(default=1.0)

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float)
        lambdas = np.asarray(self.lambdas, dtype=float)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "lambdas", lambdas)
        if alphas.ndim != 1 or lambdas.shape != alphas.shape:
            raise InvalidParameterError("alphas and lambdas must be matching 1-D arrays")
        if alphas[0] <= 0 or np.any(np.diff(alphas) < 0):
            raise InvalidParameterError(
                "alphas must be positive and nondecreasing with alpha_1 > 0"
            )
        if np.any(lambdas < 0) or not np.all(np.isfinite(lambdas)):
            raise InvalidParameterError("lambdas must be finite and nonnegative")
        if self.gamma_reg <= 0:
            raise InvalidParameterError("gamma_reg must be positive")

    @property
    def n_modes(self) -> int:
        return self.alphas.size

    @property
    def gamma_star(self) -> float:
        """Holder threshold gamma ^ 1/2 used by increment statistics."""
        return min(self.gamma_reg, 0.5)

    @classmethod
    def from_power_law(cls, n_modes: int, nu: float, length: float,
                       lambda0: float, decay_exponent: float,
                       gamma_reg: float, label: str = "operator") -> "SpectralOperator":
        """Dirichlet Laplacian scales with lambda_k = lambda0 * k^(-s).

        Rejects the combination when the declared gamma_reg fails the
        regularity exponent test.
        """
        if lambda0 < 0:
            raise InvalidParameterError("lambda0 must be nonnegative")
        if decay_exponent < 0:
            raise InvalidParameterError("lambda decay exponent must be >= 0")
        alphas = dirichlet_eigenpairs(n_modes, nu, length)
        k = np.arange(1, n_modes + 1, dtype=float)
        lambdas = lambda0 * k ** (-decay_exponent)
        if lambda0 > 0 and not check_noise_regularity(2.0, decay_exponent, gamma_reg):
            exponent = 2.0 * (2.0 * gamma_reg - 1.0) - 2.0 * decay_exponent
            raise ConfigurationRejectedError(
                f"Hypothesis 2.1(3): noise regularity violated for {label} "
                f"(series exponent a(2γ-1)-2s = {exponent:g} is not < -1 for "
                f"γ={gamma_reg:g}, s={decay_exponent:g})"
            )
        return cls(alphas=alphas, lambdas=lambdas, gamma_reg=gamma_reg,
                   alpha_exponent=2.0, lambda_exponent=decay_exponent)


def semigroup_apply(op: SpectralOperator, t: float, coeffs: np.ndarray) -> np.ndarray:
    """Apply exp(t*A) mode by mode: coefficient k is scaled by exp(-alpha_k*t)."""
    if t < 0:
        raise InvalidParameterError(f"semigroup time must be nonnegative, got {t}")
    f = as_modal_field(coeffs, op.n_modes)
    return np.exp(-op.alphas * t) * f


def synthesize(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Evaluate a modal field at the interior collocation nodes."""
    f = as_modal_field(coeffs, grid.n_modes)
    return _sine_matrix(grid.n_modes, grid.n_quad, grid.length) @ f


def analyze(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Exact discrete inverse of synthesize on the collocation node set."""
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.n_quad,):
        raise InvalidParameterError(
            f"expected {grid.n_quad} nodal values, got shape {v.shape}"
        )
    mat = _sine_matrix(grid.n_modes, grid.n_quad, grid.length)
    return grid.quad_weight * (mat.T @ v)


def fractional_norm(coeffs: np.ndarray, op: SpectralOperator, gamma: float) -> float:
    """Norm of (-A)^gamma f: sqrt(sum_k alpha_k^(2*gamma) * f_k^2)."""
    if gamma < 0:
        raise InvalidParameterError("gamma must be nonnegative")
    f = as_modal_field(coeffs, op.n_modes)
    if gamma == 0.0:
        return float(np.linalg.norm(f))
    return float(np.sqrt(np.sum(op.alphas ** (2.0 * gamma) * f * f)))


def lp_norm(values: np.ndarray, grid: GridSpec, p: float) -> float:
    """L^p norm by collocation quadrature with weight length/(M+1)."""
    if p <= 0:
        raise InvalidParameterError("p must be positive")
    v = np.asarray(values, dtype=float)
    return float((grid.quad_weight * np.sum(np.abs(v) ** p)) ** (1.0 / p))
