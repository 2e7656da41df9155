"""Gram-matrix Gaussian process regression.

Kernel models (torus-spectral and dense matrix covariances), symmetric
factorization with log-determinant, conditional means, and the empirical-Bayes
and kernel-flow losses.

On a dyadic torus lattice the Gram matrix of a spectral kernel is circulant
with symbol equal to the aliased eigenvalue sums, so assembly there is exact
(no series truncation): the kernel value at a lattice offset is the inverse
DFT of the periodized symbol.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .torus import (
    FrequencyBox,
    GridField,
    MaternLikeParams,
    TorusLattice,
    mercer_kernel,
    periodized_eigenvalues,
)


class GramNotPositiveDefiniteError(RuntimeError):
    """Factorization breakdown: duplicated points, insufficient truncation, or
    a genuinely indefinite matrix."""


class ZeroDenominatorError(ZeroDivisionError):
    """Kernel-flow loss is undefined for data with vanishing quadratic form."""


DIAG_RATIO_GUARD = 1e14

_MAX_LATTICE_LEVEL = 20


def _as_points(X) -> np.ndarray:
    if isinstance(X, TorusLattice):
        return X.points
    pts = np.asarray(X, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    return pts


def _lattice_indices(points: np.ndarray):
    """Detect the minimal dyadic level Q with points = k 2^{-Q}; None if off-lattice."""
    for Q in range(_MAX_LATTICE_LEVEL + 1):
        scaled = points * (1 << Q)
        k = np.rint(scaled)
        if np.max(np.abs(scaled - k)) < 1e-9:
            return Q, k.astype(np.int64)
    return None


@dataclass
class GramFactorization:
    """Cholesky factorization of a symmetric positive definite Gram matrix."""

    matrix: np.ndarray
    factor: np.ndarray  # lower triangular
    log_det: float
    jitter: float = 0.0

    @classmethod
    def from_matrix(cls, K: np.ndarray, jitter: float = 0.0) -> "GramFactorization":
        K = np.asarray(K, dtype=float)
        A = K if jitter == 0.0 else K + jitter * np.eye(K.shape[0])
        try:
            L = sla.cholesky(A, lower=True)
        except sla.LinAlgError as exc:
            raise GramNotPositiveDefiniteError(
                f"Cholesky breakdown on {K.shape[0]}x{K.shape[0]} Gram matrix: {exc}"
            ) from exc
        diag = np.diag(L)
        ratio = diag.max() / diag.min()
        if ratio > DIAG_RATIO_GUARD:
            warnings.warn(
                f"Gram factor diagonal ratio {ratio:.3e} exceeds {DIAG_RATIO_GUARD:.0e}; "
                "results may be dominated by rounding", RuntimeWarning)
        return cls(A, L, float(2.0 * np.sum(np.log(diag))), jitter)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = sla.solve_triangular(self.factor, b, lower=True)
        return sla.solve_triangular(self.factor.T, y, lower=False)

    def quad_form(self, y: np.ndarray) -> float:
        """y^T K^{-1} y via one triangular solve."""
        w = sla.solve_triangular(self.factor, y, lower=True)
        return float(w @ w)


@dataclass
class TorusSpectralKernel:
    """Stationary kernel on the d-torus defined by a positive eigenvalue per
    nonzero frequency: Matern-like parameters or an arbitrary symbol.

    ``trunc_limit`` bounds the direct Mercer sum used for off-lattice points;
    on dyadic lattices assembly goes through the aliased symbol and is exact.
    """

    params: MaternLikeParams | None = None
    symbol: callable = None  # symbol(members (n,d) int) -> eigenvalues (n,)
    d: int = 1
    trunc_limit: int = 1024
    mercer_tol: float = 1e-9

    _lattice_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if (self.params is None) == (self.symbol is None):
            raise ValueError("provide exactly one of params or symbol")

    def scaled(self, factor: float) -> "TorusSpectralKernel":
        """Kernel with all eigenvalues multiplied by ``factor`` (> 0)."""
        if self.params is not None:
            p = self.params
            newp = MaternLikeParams(p.sigma * np.sqrt(factor), p.tau, p.s)
            return TorusSpectralKernel(params=newp, d=self.d,
                                       trunc_limit=self.trunc_limit,
                                       mercer_tol=self.mercer_tol)
        sym = self.symbol
        return TorusSpectralKernel(symbol=lambda m: factor * sym(m), d=self.d,
                                   trunc_limit=self.trunc_limit,
                                   mercer_tol=self.mercer_tol)

    def aliased_symbol(self, q: int) -> np.ndarray:
        """Periodized eigenvalue sums over the level-q frequency box."""
        if self.params is not None:
            return periodized_eigenvalues(q, self.params, d=self.d)
        box = FrequencyBox(q, self.d)
        total = np.zeros(box.size)
        n = 1 << q
        B = 1
        prev = None
        while True:
            rng = np.arange(-B, B + 1, dtype=np.int64)
            if self.d == 1:
                betas = rng.reshape(-1, 1)
            else:
                import itertools
                betas = np.array(list(itertools.product(rng, repeat=self.d)),
                                 dtype=np.int64)
            total[:] = 0.0
            for b in betas:
                m = box.members + n * b
                lam = np.where(np.any(m != 0, axis=1), self.symbol(m), 0.0)
                total += lam
            if prev is not None and np.allclose(total, prev, rtol=1e-12, atol=0):
                break
            if B >= 4096:
                break
            prev = total.copy()
            B *= 2
        return total

    def values_on_lattice(self, Q: int) -> np.ndarray:
        """Kernel values k(x) for every offset x in the level-Q lattice."""
        if Q not in self._lattice_cache:
            n = 1 << Q
            sym = self.aliased_symbol(Q)
            box = FrequencyBox(Q, self.d)
            arr = np.zeros((n,) * self.d)
            idx = tuple(box.members[:, k] % n for k in range(self.d))
            arr[idx] = sym
            vals = np.fft.ifftn(arr) * arr.size
            self._lattice_cache[Q] = np.real(vals)
        return self._lattice_cache[Q]

    def __call__(self, x, y) -> float:
        """Pointwise kernel value; translation invariant in x - y (mod 1)."""
        if self.params is None:
            raise NotImplementedError("pointwise values need Matern-like params")
        return mercer_kernel(x, y, self.params, self.trunc_limit, d=self.d,
                             tol=self.mercer_tol)

    def pairwise(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Kernel matrix K(A, B); exact on dyadic lattices."""
        A = _as_points(A)
        B = _as_points(B)
        joint = _lattice_indices(np.vstack([A, B]))
        if joint is not None:
            Q, k = joint
            ka, kb = k[: len(A)], k[len(A):]
            gen = self.values_on_lattice(Q)
            n = 1 << Q
            diff = (ka[:, None, :] - kb[None, :, :]) % n
            if self.d == 1:
                return gen[diff[:, :, 0]]
            return gen[tuple(diff[:, :, k] for k in range(self.d))]
        if self.params is None:
            raise NotImplementedError("off-lattice points need Matern-like params")
        out = np.empty((len(A), len(B)))
        for i, xa in enumerate(A):
            for j, xb in enumerate(B):
                out[i, j] = mercer_kernel(xa, xb, self.params, self.trunc_limit,
                                          d=self.d, tol=self.mercer_tol)
        return out


@dataclass
class MatrixKernel:
    """Kernel given by a dense SPD matrix over a fixed set of support points
    (discretized covariance operators on an interval grid)."""

    support: np.ndarray  # (n,) or (n, d) coordinates
    matrix: np.ndarray   # (n, n) SPD

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float)
        if self.support.ndim == 1:
            self.support = self.support.reshape(-1, 1)
        self.matrix = np.asarray(self.matrix, dtype=float)

    def _locate(self, pts: np.ndarray) -> np.ndarray:
        sup = self.support[:, 0]
        order = np.argsort(sup)
        pos = np.searchsorted(sup[order], pts[:, 0])
        pos = np.clip(pos, 0, len(sup) - 1)
        # nearest of the two candidates
        left = np.clip(pos - 1, 0, len(sup) - 1)
        take_left = np.abs(sup[order][left] - pts[:, 0]) < np.abs(sup[order][pos] - pts[:, 0])
        pos = np.where(take_left, left, pos)
        idx = order[pos]
        if np.max(np.abs(sup[idx] - pts[:, 0])) > 1e-12:
            raise ValueError("points must coincide with the covariance support grid")
        return idx

    def pairwise(self, A, B) -> np.ndarray:
        ia = self._locate(_as_points(A))
        ib = self._locate(_as_points(B))
        return self.matrix[np.ix_(ia, ib)]


@dataclass(frozen=True)
class SubsampleScheme:
    """Equidistributed coarsen-by-two, or an explicit index subset."""

    kind: str = "coarsen"
    indices: tuple = None

    def select(self, X) -> np.ndarray:
        if self.kind == "indices":
            return np.asarray(self.indices, dtype=np.int64)
        if self.kind != "coarsen":
            raise ValueError(f"unknown subsample kind {self.kind!r}")
        if isinstance(X, TorusLattice):
            return X.coarsen_indices()
        n = np.shape(_as_points(X))[0]
        return np.arange(0, n, 2, dtype=np.int64)


def gram_matrix(kernel, points, jitter: float = 0.0) -> GramFactorization:
    """Assemble and factorize the Gram matrix K(X, X).

    No silent jitter: ``jitter`` defaults to 0 and any breakdown raises
    :class:`GramNotPositiveDefiniteError`.
    """
    pts = _as_points(points)
    if len(np.unique(pts, axis=0)) != len(pts):
        raise GramNotPositiveDefiniteError("duplicated points in the design")
    K = kernel.pairwise(pts, pts)
    return GramFactorization.from_matrix(K, jitter=jitter)


def conditional_mean(kernel, X, y, E, jitter: float = 0.0,
                     fact: GramFactorization = None) -> np.ndarray:
    """GPR conditional mean K(E, X) K(X, X)^{-1} y; interpolates y at X."""
    y = np.asarray(y, dtype=float)
    if fact is None:
        fact = gram_matrix(kernel, X, jitter=jitter)
    cross = kernel.pairwise(E, X)
    return cross @ fact.solve(y)


def eb_loss(kernel, X, y, jitter: float = 0.0,
            fact: GramFactorization = None) -> float:
    """Empirical-Bayes objective y^T K^{-1} y + log det K (twice the negative
    marginal log likelihood, up to an additive constant)."""
    y = np.asarray(y, dtype=float)
    if fact is None:
        fact = gram_matrix(kernel, X, jitter=jitter)
    return fact.quad_form(y) + fact.log_det


def kf_loss(kernel, X, scheme: SubsampleScheme, y, jitter: float = 0.0,
            fact: GramFactorization = None,
            fact_sub: GramFactorization = None) -> float:
    """Kernel-flow objective 1 - [y_pi^T K_pi^{-1} y_pi] / [y^T K^{-1} y].

    Equals the squared relative RKHS distance between the interpolants on the
    full data and on the subsample (Galerkin orthogonality), so it lies in
    [0, 1] up to roundoff and is invariant to rescaling the kernel.
    """
    y = np.asarray(y, dtype=float)
    pts = _as_points(X)
    sel = scheme.select(X)
    if scheme.kind == "coarsen" and len(sel) >= len(pts):
        raise ValueError("coarsening must select a strict subset")
    if fact is None:
        fact = gram_matrix(kernel, X, jitter=jitter)
    if fact_sub is None:
        fact_sub = gram_matrix(kernel, pts[sel], jitter=jitter)
    denom = fact.quad_form(y)
    if denom <= 0.0:
        raise ZeroDenominatorError("y^T K^{-1} y vanishes; kernel-flow loss undefined")
    return 1.0 - fact_sub.quad_form(y[sel]) / denom
