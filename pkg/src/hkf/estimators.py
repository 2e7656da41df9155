"""Bounded derivative-free minimization for loss curves and surfaces.

Coarse-grid scan with golden-section refinement for one-dimensional losses
(loss curves are cheap and the empirical-Bayes curve blows up sharply past
its minimizer, which punishes purely local methods), a restarted Nelder-Mead
simplex with box projection for joint estimation, and the closed-form
amplitude estimator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import Bounds, minimize

DELTA_DEFAULT = 0.1

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class AllNonFiniteError(RuntimeError):
    """No grid point produced a finite loss value."""


class NonFiniteStartError(ValueError):
    """The simplex start point has a non-finite loss."""


def regularity_bounds(d: int, delta: float = DELTA_DEFAULT) -> tuple[float, float]:
    """Compactified search interval for the regularity exponent."""
    return (d / 2 + delta, 1.0 / delta)


@dataclass(frozen=True)
class ParamSpace:
    """Named box bounds for the free parameters of a loss."""

    names: tuple
    bounds: tuple  # ((lo, hi), ...)

    def __post_init__(self):
        if len(self.names) != len(self.bounds):
            raise ValueError("names and bounds must align")
        for lo, hi in self.bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid bounds ({lo}, {hi})")

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])


def default_param_space(d: int = 1, delta: float = DELTA_DEFAULT) -> ParamSpace:
    lo, hi = regularity_bounds(d, delta)
    return ParamSpace(
        names=("s", "log_sigma", "log_tau", "theta"),
        bounds=((lo, hi), (-5.0, 5.0), (-2.0, 2.0), (0.3, 0.7)),
    )


@dataclass
class EstimateResult:
    """Outcome of one bounded minimization."""

    argmin: np.ndarray          # (k,)
    min_loss: float
    hit_boundary: tuple         # per parameter
    evaluations: int
    loss_curve: np.ndarray = None   # (n, 2) sampled (param, loss), 1-D runs only
    n_nonfinite: int = 0
    indeterminate: tuple = None     # per parameter, simplex runs only
    restart_spread: np.ndarray = None

    @property
    def value(self) -> float:
        """Scalar argmin for one-dimensional runs."""
        if self.argmin.shape != (1,):
            raise ValueError("value is only defined for scalar estimates")
        return float(self.argmin[0])


def _finite(v) -> float:
    v = float(v)
    return v if np.isfinite(v) else np.inf


def minimize_scalar(loss, bounds, coarse_n: int = 200, tol: float = 1e-4) -> EstimateResult:
    """Global coarse scan followed by golden-section refinement.

    Non-finite grid values are excluded with a warning; ties on the grid
    resolve to the smaller parameter.  The refinement shrinks the bracket
    around the best grid point to width ``tol``, so the result is
    deterministic and invariant under strictly increasing transforms of the
    loss.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not lo < hi:
        raise ValueError("bounds must satisfy lo < hi")
    grid = np.linspace(lo, hi, coarse_n)
    vals = np.array([_finite(loss(x)) for x in grid])
    return refine_scalar(loss, grid, vals, tol)


def refine_scalar(loss, grid, vals, tol: float = 1e-4) -> EstimateResult:
    """Golden-section refinement around the best point of a precomputed scan
    (the scan may have been evaluated in bulk, e.g. with shared
    factorizations across instances)."""
    grid = np.asarray(grid, dtype=float)
    vals = np.asarray(vals, dtype=float)
    coarse_n = grid.shape[0]
    lo, hi = float(grid[0]), float(grid[-1])
    evaluations = coarse_n
    finite = np.isfinite(vals)
    n_bad = int(np.sum(~finite))
    if n_bad == coarse_n:
        raise AllNonFiniteError("loss is non-finite on the entire coarse grid")
    if n_bad:
        warnings.warn(f"{n_bad} non-finite loss values excluded from the coarse scan",
                      RuntimeWarning)
    i = int(np.argmin(np.where(finite, vals, np.inf)))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, coarse_n - 1)]
    best_x, best_f = grid[i], vals[i]

    # golden-section on [a, b]; non-finite values compare as +inf
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = _finite(loss(x1)), _finite(loss(x2))
    evaluations += 2
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = _finite(loss(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = _finite(loss(x2))
        evaluations += 1
    for x, f in ((x1, f1), (x2, f2)):
        if f < best_f:
            best_x, best_f = x, f
    hit = bool(best_x - lo <= tol or hi - best_x <= tol)
    return EstimateResult(
        argmin=np.array([best_x]),
        min_loss=float(best_f),
        hit_boundary=(hit,),
        evaluations=evaluations,
        loss_curve=np.column_stack([grid, vals]),
        n_nonfinite=n_bad,
    )


def minimize_simplex(loss, start, bounds: ParamSpace, tol: float = 1e-4,
                     maxiter: int = 4000) -> EstimateResult:
    """Nelder-Mead with box projection, restarted from three deterministic
    points (the given start, the box center, and the 3/4 point); the best
    restart wins.

    A parameter whose near-optimal restarts scatter more widely than the
    refinement tolerance is flagged indeterminate (the loss is flat there);
    the spread across restarts is reported.
    """
    start = np.asarray(start, dtype=float)
    k = start.shape[0]
    if k > 4:
        raise ValueError("simplex search is limited to at most 4 parameters")
    lo, hi = bounds.lower, bounds.upper
    if start.shape != lo.shape:
        raise ValueError("start does not match the parameter space")

    evaluations = 0

    def wrapped(x):
        nonlocal evaluations
        evaluations += 1
        return _finite(loss(np.clip(x, lo, hi)))

    if not np.isfinite(wrapped(start)):
        raise NonFiniteStartError("loss is non-finite at the start point")

    starts = [start, 0.5 * (lo + hi), lo + 0.75 * (hi - lo)]
    results = []
    for s0 in starts:
        if not np.isfinite(wrapped(s0)):
            warnings.warn("skipping a non-finite restart point", RuntimeWarning)
            continue
        res = minimize(wrapped, np.clip(s0, lo, hi), method="Nelder-Mead",
                       bounds=Bounds(lo, hi),
                       options={"xatol": tol, "fatol": 1e-12, "maxiter": maxiter})
        results.append((np.clip(res.x, lo, hi), float(res.fun)))
    best_x, best_f = min(results, key=lambda r: r[1])
    near = [x for x, f in results if f <= best_f + 1e-7 * abs(best_f) + 1e-12]
    spread = (np.max(near, axis=0) - np.min(near, axis=0)) if len(near) > 1 else np.zeros(k)
    hit = tuple(bool(best_x[j] - lo[j] <= tol or hi[j] - best_x[j] <= tol)
                for j in range(k))
    indet = tuple(bool(spread[j] > 100 * tol) for j in range(k))
    return EstimateResult(
        argmin=best_x,
        min_loss=best_f,
        hit_boundary=hit,
        evaluations=evaluations,
        indeterminate=indet,
        restart_spread=spread,
    )


def sigma_eb_closed_form(y, fact, n: int = None) -> float:
    """Amplitude minimizer of the empirical-Bayes loss over the scale family
    varsigma^2 K: sqrt(y^T K^{-1} y / n), with K factorized at unit amplitude."""
    y = np.asarray(y, dtype=float)
    if n is None:
        n = y.shape[0]
    return float(np.sqrt(fact.quad_form(y) / n))
