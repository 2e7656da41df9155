"""Discretized elliptic covariance models on [0, 1] with Dirichlet ends.

Conservative flux-form finite differences for -(a u')' with the coefficient
evaluated at cell midpoints, fractional operator powers through the full
eigendecomposition, the composite two-operator covariances used for
discontinuity-location recovery, and the deterministic Green-function truth.

The discrete inner product is <u, v> = h * sum_i u_i v_i; eigensystems record
columns orthonormal in that inner product, while matrix powers of the
operator matrix itself are plain spectral calculus (so the s = 1 covariance
is literally the inverse of the assembled operator matrix).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .gram import MatrixKernel
from .torus import GridField


class OffGridSourceError(ValueError):
    """The requested point-source location is not a grid point."""


@dataclass(frozen=True)
class IntervalGrid:
    """Uniform interior grid of (0, 1): x_i = i h, i = 1..n, h = 1/(n+1)."""

    n_interior: int

    def __post_init__(self):
        if self.n_interior < 1:
            raise ValueError("need at least one interior point")

    @property
    def h(self) -> float:
        return 1.0 / (self.n_interior + 1)

    @property
    def points(self) -> np.ndarray:
        return np.arange(1, self.n_interior + 1) * self.h

    def index_of(self, x: float) -> int:
        i = int(round(float(x) / self.h))
        if not (1 <= i <= self.n_interior) or abs(i * self.h - x) > 1e-12:
            raise OffGridSourceError(f"{x} is not an interior grid point")
        return i - 1

    def dyadic_observation_indices(self, level: int) -> np.ndarray:
        """Indices of the interior points lying on {j 2^{-level}}.

        Requires the grid spacing to refine the dyadic level; the boundary
        points 0 and 1 are not interior and are excluded.
        """
        step = (self.n_interior + 1) // (1 << level)
        if step * (1 << level) != self.n_interior + 1 or step < 1:
            raise ValueError("grid does not refine the requested dyadic level")
        return np.arange(step, self.n_interior + 1, step) - 1


@dataclass(frozen=True)
class CoefficientField:
    """Strictly positive conductivity: constant, or two levels with one jump."""

    kind: str  # "constant" | "piecewise"
    value: float = 1.0
    left: float = 1.0
    right: float = 2.0
    breakpoint: float = 0.5

    @classmethod
    def constant(cls, a: float) -> "CoefficientField":
        if not a > 0:
            raise ValueError("coefficient must be positive")
        return cls("constant", value=a)

    @classmethod
    def piecewise(cls, left: float, right: float, breakpoint: float) -> "CoefficientField":
        if not (left > 0 and right > 0):
            raise ValueError("coefficient values must be positive")
        if not (0.0 < breakpoint < 1.0):
            raise ValueError("breakpoint must lie in (0, 1)")
        return cls("piecewise", left=left, right=right, breakpoint=breakpoint)

    def at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.value)
        return np.where(x <= self.breakpoint, self.left, self.right)


def _flux_coefficients(a: CoefficientField, grid: IntervalGrid) -> np.ndarray:
    """Coefficient at the n+1 cell midpoints x_{i+1/2}, i = 0..n."""
    mid = (np.arange(grid.n_interior + 1) + 0.5) * grid.h
    return a.at(mid)


def elliptic_banded(a: CoefficientField, grid: IntervalGrid) -> tuple[np.ndarray, np.ndarray]:
    """(diagonal, subdiagonal) of the flux-form discretization of -(a u')'."""
    am = _flux_coefficients(a, grid)
    h2 = grid.h**2
    diag = (am[:-1] + am[1:]) / h2
    off = -am[1:-1] / h2
    return diag, off


def assemble_elliptic(a: CoefficientField, grid: IntervalGrid) -> np.ndarray:
    """Dense symmetric matrix of the flux-form discretization of -(a u')'
    with homogeneous Dirichlet boundary conditions."""
    diag, off = elliptic_banded(a, grid)
    A = np.diag(diag)
    idx = np.arange(grid.n_interior - 1)
    A[idx, idx + 1] = off
    A[idx + 1, idx] = off
    return A


@dataclass
class OperatorEigensystem:
    """Full spectrum of a discretized elliptic operator.

    ``basis`` has Euclidean-orthonormal columns; ``eigenvectors`` rescales
    them to be orthonormal in the h-weighted inner product.
    """

    eigenvalues: np.ndarray  # ascending, positive
    basis: np.ndarray        # Euclidean-orthonormal columns
    grid: IntervalGrid

    @classmethod
    def from_coefficient(cls, a: CoefficientField, grid: IntervalGrid) -> "OperatorEigensystem":
        diag, off = elliptic_banded(a, grid)
        vals, vecs = sla.eigh_tridiagonal(diag, off)
        if vals[0] <= 0:
            raise ValueError("discretized operator is not positive definite")
        return cls(vals, vecs, grid)

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.basis / np.sqrt(self.grid.h)

    def operator_matrix(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T

    def matrix_power(self, s: float) -> np.ndarray:
        """Plain spectral calculus: basis diag(lambda^s) basis^T."""
        return (self.basis * self.eigenvalues**s) @ self.basis.T

    def apply_power(self, s: float, v: np.ndarray) -> np.ndarray:
        return self.basis @ (self.eigenvalues**s * (self.basis.T @ v))


@dataclass
class MatrixCovariance:
    """Dense SPD covariance on an interval grid, with a square-root factor for
    sampling (computed lazily from the eigendecomposition if not provided)."""

    grid: IntervalGrid
    matrix: np.ndarray
    sqrt_factor: np.ndarray = None

    _eig: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        asym = np.max(np.abs(self.matrix - self.matrix.T))
        if asym > 1e-12 * max(1.0, np.max(np.abs(self.matrix))):
            raise ValueError(f"covariance not symmetric (defect {asym:.3e})")
        self.matrix = 0.5 * (self.matrix + self.matrix.T)

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        if self._eig is None:
            vals, vecs = sla.eigh(self.matrix)
            self._eig = (vals, vecs)
        return self._eig

    def _sqrt(self) -> np.ndarray:
        if self.sqrt_factor is None:
            vals, vecs = self.eigensystem()
            if vals[0] <= 0:
                raise ValueError("covariance is not positive definite")
            self.sqrt_factor = vecs * np.sqrt(vals)
        return self.sqrt_factor

    def as_kernel(self) -> MatrixKernel:
        return MatrixKernel(self.grid.points, self.matrix)


def fractional_covariance(eig: OperatorEigensystem, s: float) -> MatrixCovariance:
    """Covariance matrix of the operator raised to the power -s:
    basis diag(lambda^{-s}) basis^T.  s = 0 gives the identity and s = 1 the
    plain inverse of the assembled operator."""
    cov = eig.matrix_power(-s)
    sqrt = eig.basis * eig.eigenvalues ** (-s / 2)
    return MatrixCovariance(eig.grid, cov, sqrt_factor=sqrt)


@lru_cache(maxsize=8)
def _laplacian_eigensystem(n_interior: int) -> OperatorEigensystem:
    grid = IntervalGrid(n_interior)
    return OperatorEigensystem.from_coefficient(CoefficientField.constant(1.0), grid)


@lru_cache(maxsize=32)
def _laplacian_power(n_interior: int, s: float) -> np.ndarray:
    return _laplacian_eigensystem(n_interior).matrix_power(s)


def composite_covariance(theta: float, s: float, grid: IntervalGrid) -> MatrixCovariance:
    """Covariance A_theta^{-1} L^{-s} A_theta^{-1} where A_theta discretizes
    -(a_theta u')' with the two-level conductivity jumping at theta, and L is
    the Dirichlet Laplacian."""
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")
    if not s > 0:
        raise ValueError("s must be positive")
    a = CoefficientField.piecewise(1.0, 2.0, theta)
    diag, off = elliptic_banded(a, grid)
    ab = np.zeros((2, grid.n_interior))
    ab[0, 1:] = off
    ab[1, :] = diag
    mid = _laplacian_power(grid.n_interior, -s)
    X = sla.solveh_banded(ab, mid)            # A^{-1} L^{-s}
    C = sla.solveh_banded(ab, X.T)            # A^{-1} L^{-s} A^{-1}
    C = 0.5 * (C + C.T)
    eig_l = _laplacian_eigensystem(grid.n_interior)
    half = eig_l.basis * eig_l.eigenvalues ** (-s / 2)
    sqrt = sla.solveh_banded(ab, half)        # A^{-1} L^{-s/2}
    return MatrixCovariance(grid, C, sqrt_factor=sqrt)


def sample_matrix_gaussian(cov: MatrixCovariance, seed) -> GridField:
    """Deterministic-per-seed draw from N(0, cov) on the covariance's grid."""
    S = cov._sqrt()
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    z = rng.standard_normal(S.shape[1])
    return GridField(cov.grid, S @ z)


def green_truth(s: float, source: float, grid: IntervalGrid) -> GridField:
    """Discrete solution of L^s u = delta(. - source) with Dirichlet ends:
    the fractional Laplacian power applied to the discrete delta e_i / h."""
    if not s > 0.25:
        raise ValueError("need s > 1/4 for a meaningful discrete field")
    i0 = grid.index_of(source)
    eig = _laplacian_eigensystem(grid.n_interior)
    e = np.zeros(grid.n_interior)
    e[i0] = 1.0 / grid.h
    return GridField(grid, eig.apply_power(-s, e))
