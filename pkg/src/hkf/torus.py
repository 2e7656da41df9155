"""Fourier lattice bookkeeping on the d-torus.

Frequency alias cells, dyadic sampling lattices, periodized (aliased) kernel
symbols, truncated Mercer kernel evaluation, and Karhunen-Loeve sampling of
Matern-like random fields.

Conventions
-----------
* Functions on the torus are mean zero; the zero frequency never carries mass.
* The alias cell at level ``q`` is the integer box ``[-2^{q-1}, 2^{q-1}-1]^d``
  (canonical representatives of the residues modulo ``2^q``).
* A Matern-like field has eigenvalue ``sigma^2 (4 pi^2 |m|^2 + tau^2)^{-s}``
  at frequency ``m != 0``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import zeta as _hurwitz_zeta


class DivergentExponentError(ValueError):
    """Raised when a lattice symbol sum does not converge (t <= d/2)."""


class InsufficientTruncationError(RuntimeError):
    """Raised when a truncated kernel sum cannot meet the requested tolerance."""


def _as_freq_array(m, d: int) -> np.ndarray:
    m = np.asarray(m, dtype=np.int64)
    if m.ndim == 0:
        if d != 1:
            raise ValueError("scalar frequency only valid for d=1")
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        if m.shape[0] == d:
            m = m.reshape(1, d)
        elif d == 1:
            m = m.reshape(-1, 1)
        else:
            raise ValueError(f"frequency array of shape {m.shape} does not match d={d}")
    return m


def alias_representative(m, q: int, d: int = 1) -> np.ndarray:
    """Reduce frequencies componentwise into the canonical cell [-2^{q-1}, 2^{q-1}-1]."""
    m = _as_freq_array(m, d)
    n = 1 << q
    half = n >> 1 if q >= 1 else 0
    return ((m + half) % n) - half


@dataclass(frozen=True)
class FrequencyBox:
    """The set of retained Fourier modes at level q: all integer vectors with
    components in [-2^{q-1}, 2^{q-1}-1]. Cardinality 2^{qd}."""

    q: int
    d: int

    def __post_init__(self):
        if self.q < 0 or self.d < 1:
            raise ValueError("require q >= 0 and d >= 1")

    @property
    def size(self) -> int:
        return 1 << (self.q * self.d)

    @property
    def members(self) -> np.ndarray:
        """All members, lexicographic order, shape (2^{qd}, d)."""
        return _box_members(self.q, self.d)

    def index_of(self, m) -> np.ndarray:
        """Positions of (alias representatives of) frequencies in member order."""
        m = alias_representative(m, self.q, self.d)
        n = 1 << self.q
        half = n >> 1 if self.q >= 1 else 0
        digits = m + half  # componentwise in [0, 2^q)
        idx = np.zeros(m.shape[0], dtype=np.int64)
        for k in range(self.d):
            idx = idx * n + digits[:, k]
        return idx


@lru_cache(maxsize=None)
def _box_members(q: int, d: int) -> np.ndarray:
    n = 1 << q
    half = n >> 1 if q >= 1 else 0
    rng = np.arange(-half, -half + n, dtype=np.int64)
    if d == 1:
        out = rng.reshape(-1, 1)
    else:
        out = np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64)
    out.setflags(write=False)
    return out


def frequency_box(q: int, d: int) -> FrequencyBox:
    return FrequencyBox(q, d)


@dataclass(frozen=True)
class TorusLattice:
    """Dyadic sampling lattice X_q = {j 2^{-q} : j in {0,...,2^q-1}^d}."""

    q: int
    d: int

    def __post_init__(self):
        if self.q < 0 or self.d < 1:
            raise ValueError("require q >= 0 and d >= 1")

    @property
    def size(self) -> int:
        return 1 << (self.q * self.d)

    @property
    def indices(self) -> np.ndarray:
        """Multi-indices j, lexicographic, shape (2^{qd}, d)."""
        n = 1 << self.q
        rng = np.arange(n, dtype=np.int64)
        if self.d == 1:
            return rng.reshape(-1, 1)
        return np.array(list(itertools.product(rng, repeat=self.d)), dtype=np.int64)

    @property
    def points(self) -> np.ndarray:
        return self.indices * (2.0 ** -self.q)

    def coarsen_indices(self) -> np.ndarray:
        """Row positions of the points of X_{q-1} inside X_q (even multi-indices)."""
        if self.q < 1:
            raise ValueError("cannot coarsen a level-0 lattice")
        keep = np.all(self.indices % 2 == 0, axis=1)
        return np.nonzero(keep)[0]

    def coarse(self) -> "TorusLattice":
        return TorusLattice(self.q - 1, self.d)


@dataclass(frozen=True)
class MaternLikeParams:
    """Amplitude sigma > 0, inverse lengthscale tau >= 0, regularity s (> d/2
    wherever pointwise kernel values are required)."""

    sigma: float = 1.0
    tau: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0):
            raise ValueError("sigma must be positive")
        if not (self.tau >= 0):
            raise ValueError("tau must be nonnegative")
        if not (self.s > 0):
            raise ValueError("s must be positive")

    def eigenvalue(self, m) -> np.ndarray:
        """sigma^2 (4 pi^2 |m|^2 + tau^2)^{-s}; the zero mode is excluded by convention."""
        m = np.asarray(m, dtype=float)
        msq = m * m if m.ndim <= 1 else np.sum(m * m, axis=-1)
        return self.sigma**2 * (4 * np.pi**2 * msq + self.tau**2) ** (-self.s)


@dataclass
class GridField:
    """Real values of a function at the points of a lattice or grid.

    ``lattice`` is any object exposing ``.points``; torus-only operations
    require a :class:`TorusLattice`. ``mean_subtracted`` records the constant
    removed at construction when the mean-zero convention was applied.
    """

    lattice: object
    values: np.ndarray
    mean_subtracted: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = np.shape(self.lattice.points)[0]
        if self.values.shape != (n,):
            raise ValueError(f"expected {n} values, got shape {self.values.shape}")

    @classmethod
    def mean_zero(cls, lattice, values) -> "GridField":
        """Construct with the arithmetic mean removed (torus convention)."""
        values = np.asarray(values, dtype=float)
        mean = float(values.mean())
        return cls(lattice, values - mean, mean_subtracted=mean)

    def restrict(self, indices, sublattice) -> "GridField":
        """Raw restriction to a subset of points; values are not re-centered."""
        return GridField(sublattice, self.values[np.asarray(indices)])


@dataclass
class SpectralField:
    """Complex coefficients attached to a finite set of frequencies.

    For real-valued fields the coefficients are Hermitian,
    ``c(-m) = conj(c(m))``, and the zero mode carries no mass.
    """

    freqs: np.ndarray  # (n, d) int
    coeffs: np.ndarray  # (n,) complex
    d: int

    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=np.int64)
        if self.freqs.ndim == 1:
            self.freqs = self.freqs.reshape(-1, 1)
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != (self.freqs.shape[0],):
            raise ValueError("coeffs must align with freqs")

    def coeff_at(self, m) -> complex:
        if self._index is None:
            self._index = {tuple(f): i for i, f in enumerate(self.freqs)}
        key = tuple(np.atleast_1d(np.asarray(m, dtype=np.int64)))
        i = self._index.get(key)
        return complex(self.coeffs[i]) if i is not None else 0.0

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Real part of the Fourier series at the given points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        phase = 2j * np.pi * (points @ self.freqs.T.astype(float))
        return np.real(np.exp(phase) @ self.coeffs)

    def hermitian_defect(self) -> float:
        """Deviation from the real-field symmetry c(-m) = conj(c(m)).

        Frequencies whose mirror is absent (self-paired alias classes such as
        the Nyquist mode of an alias cell) must carry real coefficients."""
        if self._index is None:
            self._index = {tuple(f): i for i, f in enumerate(self.freqs)}
        defect = 0.0
        for f, c in zip(self.freqs, self.coeffs):
            j = self._index.get(tuple(-f))
            if j is None:
                defect = max(defect, abs(np.imag(c)))
            else:
                defect = max(defect, abs(self.coeffs[j] - np.conj(c)))
        return defect


# ---------------------------------------------------------------------------
# Periodized symbols
# ---------------------------------------------------------------------------

def _check_exponent(t: float, d: int):
    if not (t > d / 2):
        raise DivergentExponentError(f"symbol sum diverges: need t > d/2, got t={t}, d={d}")


def _power_sum_1d(x: np.ndarray, p: float) -> np.ndarray:
    """sum_{beta in Z} |x + beta|^{-p} for x in [0, 1/2], p > 1, via Hurwitz zeta.

    The term beta = 0 is dropped when x = 0 (zero-mode convention of the
    aliased symbol)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    zero = x == 0.0
    if np.any(zero):
        out[zero] = 2.0 * _hurwitz_zeta(p, 1.0)
    if np.any(~zero):
        xv = x[~zero]
        out[~zero] = _hurwitz_zeta(p, xv) + _hurwitz_zeta(p, 1.0 - xv)
    return out


def periodized_symbol(m, q: int, t: float, d: int = 1, tol: float = 1e-12,
                      beta_range: int = 64) -> float | np.ndarray:
    """Aliased power symbol: the 2^q-periodic sum over the frequency lattice.

    Returns ``sum_{beta != 0} |2^q beta|^{-2t}`` when ``m`` is a multiple of
    ``2^q`` and ``sum_{beta} |m + 2^q beta|^{-2t}`` otherwise, evaluated on the
    canonical alias representative (so the result is exactly periodic).

    For d = 1 the sum is exact (direct terms plus a Hurwitz-zeta tail).  For
    d >= 2 direct summation over ``[-beta_range, beta_range]^d`` is extended
    adaptively until the analytic integral tail bound is below ``tol``
    (relative), and the tail integral is added as a correction.
    """
    _check_exponent(t, d)
    marr = alias_representative(m, q, d)
    scalar = np.asarray(m).ndim == 0 or (np.asarray(m).ndim == 1 and d > 1)
    if d == 1:
        x = np.abs(marr[:, 0]) * (2.0 ** -q)
        vals = (2.0 ** (-2 * q * t)) * _power_sum_1d(x, 2 * t)
    else:
        vals = np.array([
            _periodized_symbol_nd(mm, q, t, d, tol, beta_range) for mm in marr
        ])
    return float(vals[0]) if scalar else vals


def _periodized_symbol_nd(m: np.ndarray, q: int, t: float, d: int,
                          tol: float, beta_range: int) -> float:
    # direct shell summation of sum_beta |x + beta|^{-2t}, x = m / 2^q, with a
    # midpoint-rule integral standing in for the omitted far field; the box is
    # doubled until the tail-corrected estimate stabilizes to tol
    x = m.astype(float) * (2.0 ** -q)
    p = 2 * t
    grid = np.arange(-beta_range, beta_range + 1)
    mesh = np.stack(np.meshgrid(*([grid] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pts = mesh + x
    r2 = np.sum(pts * pts, axis=1)
    mask = r2 > 0
    partial = float(np.sum(r2[mask] ** (-t)))
    B = beta_range
    est = partial + _tail_integral_nd(B, p, d)
    while B < 2048:
        newB = 2 * B
        shell = _shell_points(B, newB, d) + x
        r2s = np.sum(shell * shell, axis=1)
        partial += float(np.sum(r2s ** (-t)))
        new_est = partial + _tail_integral_nd(newB, p, d)
        done = abs(new_est - est) <= tol * abs(new_est)
        est, B = new_est, newB
        if done:
            break
    return (2.0 ** (-q * p)) * est


def _shell_points(b_in: int, b_out: int, d: int) -> np.ndarray:
    grid = np.arange(-b_out, b_out + 1)
    mesh = np.stack(np.meshgrid(*([grid] * d), indexing="ij"), axis=-1).reshape(-1, d)
    inner = np.max(np.abs(mesh), axis=1) <= b_in
    return mesh[~inner]


@lru_cache(maxsize=None)
def _angular_factor_2d(p: float) -> float:
    from scipy.integrate import quad
    val, _ = quad(lambda th: np.cos(th) ** (p - 2), 0.0, np.pi / 4)
    return 8.0 * val


def _tail_integral_nd(B: int, p: float, d: int) -> float:
    # midpoint-rule integral of |y|^{-p} over the complement of [-B-1/2, B+1/2]^d
    c = B + 0.5
    if d == 1:
        return 2.0 * c ** (1 - p) / (p - 1)
    if d == 2:
        return c ** (2 - p) / (p - 2) * _angular_factor_2d(p)
    return 0.0  # d >= 3: termination already guaranteed by the tail bound


def periodized_symbol_box(q: int, t: float, d: int = 1, **kw) -> np.ndarray:
    """Aliased power symbol over the whole level-q frequency box, member order."""
    return np.atleast_1d(periodized_symbol(FrequencyBox(q, d).members, q, t, d=d, **kw))


def periodized_eigenvalues(q: int, params: MaternLikeParams, d: int = 1,
                           tol: float = 1e-13, beta_range: int = 64) -> np.ndarray:
    """Aliased Matern-like eigenvalue sums over the level-q frequency box.

    Entry for m is ``sum_beta sigma^2 (4 pi^2 |m + 2^q beta|^2 + tau^2)^{-s}``
    with the zero term dropped at m = 0.  For d = 1 the out-of-range tail is
    resummed analytically (Hurwitz zeta with a binomial correction in tau), so
    the result is accurate to near machine precision for tau^2 << (2^q B)^2.
    """
    s, tau, sig2 = params.s, params.tau, params.sigma**2
    _check_exponent(s, d)
    if tau == 0.0:
        return sig2 * (4 * np.pi**2) ** (-s) * periodized_symbol_box(q, s, d=d, tol=tol)
    if d != 1:
        # direct shells with the tau-shifted symbol; tail bounded by the tau=0 tail
        members = FrequencyBox(q, d).members
        out = np.empty(members.shape[0])
        for i, mm in enumerate(members):
            out[i] = _matern_periodized_nd(mm, q, params, d, tol, beta_range)
        return out
    members = FrequencyBox(q, 1).members[:, 0]
    n = 1 << q
    x = members.astype(float) / n
    betas = np.arange(-beta_range, beta_range + 1, dtype=float)
    u = x[:, None] + betas[None, :]  # (n, 2B+1)
    term = (4 * np.pi**2 * (n * u) ** 2 + params.tau**2) ** (-s)
    if q == 0:
        term[0, beta_range] = 0.0  # drop the zero frequency itself
    else:
        zero_rows = members == 0
        term[zero_rows, beta_range] = 0.0
    main = term.sum(axis=1)
    # analytic tail: binomial expansion of (1 + c/u^2)^{-s} about the power law
    c = params.tau**2 / (4 * np.pi**2 * n**2)
    a_plus = beta_range + 1 + x
    a_minus = beta_range + 1 - x
    tail = np.zeros_like(x)
    coeff = 1.0
    for k in range(3):
        zterm = _hurwitz_zeta(2 * s + 2 * k, a_plus) + _hurwitz_zeta(2 * s + 2 * k, a_minus)
        tail += coeff * zterm
        coeff *= -(s + k) * c / (k + 1)
    tail *= (4 * np.pi**2 * n**2) ** (-s)
    return sig2 * (main + tail)


def _matern_periodized_nd(m, q, params, d, tol, beta_range):
    n = 1 << q
    x = m.astype(float) / n
    amp = (4 * np.pi**2 * n**2) ** (-params.s)
    grid = np.arange(-beta_range, beta_range + 1)
    mesh = np.stack(np.meshgrid(*([grid] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pts = (mesh + x) * n
    r2 = np.sum(pts * pts, axis=1)
    mask = r2 > 0
    partial = float(np.sum((4 * np.pi**2 * r2[mask] + params.tau**2) ** (-params.s)))
    B = beta_range
    est = partial + amp * _tail_integral_nd(B, 2 * params.s, d)
    while B < 2048:
        newB = 2 * B
        shell = (_shell_points(B, newB, d) + x) * n
        r2s = np.sum(shell * shell, axis=1)
        partial += float(np.sum((4 * np.pi**2 * r2s + params.tau**2) ** (-params.s)))
        new_est = partial + amp * _tail_integral_nd(newB, 2 * params.s, d)
        done = abs(new_est - est) <= tol * abs(new_est)
        est, B = new_est, newB
        if done:
            break
    return params.sigma**2 * est


# ---------------------------------------------------------------------------
# Mercer kernel and sampling
# ---------------------------------------------------------------------------

def default_truncation_limit(q: int, extra: int = 4) -> int:
    """Max |m_k| of the symmetric truncation box for a level-q lattice.

    ``extra`` counts doublings beyond the grid resolution; ``extra=0``
    truncates at the grid's own alias cell, ``extra=4`` oversamples 16x per
    axis (the default)."""
    return 1 << (q + extra - 1)


def symmetric_box_members(limit: int, d: int) -> np.ndarray:
    """All nonzero integer vectors with each component in [-limit, limit]."""
    rng = np.arange(-limit, limit + 1, dtype=np.int64)
    if d == 1:
        out = rng.reshape(-1, 1)
    else:
        out = np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64)
    return out[np.any(out != 0, axis=1)]


def mercer_tail_bound(params: MaternLikeParams, limit: int, d: int) -> float:
    """Upper bound on the kernel mass beyond the symmetric truncation box."""
    s = params.s
    if s <= d / 2:
        return np.inf
    amp = params.sigma**2 * (4 * np.pi**2) ** (-s)
    if d == 1:
        return amp * 2.0 * _hurwitz_zeta(2 * s, limit + 1.0)
    # points outside the box have |m|_2 > limit
    surface = {2: 2 * np.pi, 3: 4 * np.pi}.get(d, 2 * np.pi ** (d / 2) * 4)
    c = max(limit - np.sqrt(d), 1.0)
    return amp * 3.0**d * surface * c ** (d - 2 * s) / (2 * s - d)


def mercer_kernel(x, y, params: MaternLikeParams, trunc_limit: int, d: int = 1,
                  tol: float = 1e-9) -> float:
    """Truncated Mercer sum of the Matern-like kernel at (x, y).

    Translation invariant and symmetric; raises
    :class:`InsufficientTruncationError` when the analytic tail bound exceeds
    ``tol`` (absolute, on kernel values).
    """
    _check_exponent(params.s, d)
    bound = mercer_tail_bound(params, trunc_limit, d)
    if not bound <= tol:
        raise InsufficientTruncationError(
            f"mercer tail bound {bound:.3e} exceeds tolerance {tol:.3e}; "
            f"increase the truncation limit (currently {trunc_limit})")
    h = np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if d == 1:
        m = np.arange(1, trunc_limit + 1, dtype=float)
        lam = params.eigenvalue(m)
        return float(2.0 * np.sum(lam * np.cos(2 * np.pi * m * h[0])))
    members = symmetric_box_members(trunc_limit, d)
    lam = params.eigenvalue(members)
    return float(np.sum(lam * np.cos(2 * np.pi * (members @ h))))


def _half_box_1d(limit: int) -> np.ndarray:
    return np.arange(1, limit + 1, dtype=np.int64).reshape(-1, 1)


def _half_box(limit: int, d: int) -> np.ndarray:
    """Lexicographically positive half of the symmetric box (one per +-m pair)."""
    if d == 1:
        return _half_box_1d(limit)
    members = symmetric_box_members(limit, d)
    keep = []
    for mm in members:
        nz = np.nonzero(mm)[0]
        if mm[nz[0]] > 0:
            keep.append(mm)
    return np.array(keep, dtype=np.int64)


def kl_sample(params: MaternLikeParams, grid: TorusLattice, trunc_limit: int,
              seed) -> GridField:
    """Draw a real Matern-like field on the lattice by truncated eigen-expansion.

    One complex standard normal per +-m frequency pair (Hermitian symmetry
    keeps the field real), scaled by the square-root eigenvalue.  The draw is
    a pure function of ``seed``; normals are consumed in the lexicographic
    order of the positive half box, so refining the grid with the same seed
    reuses the same coefficients.  Values are mean-centered on return.
    """
    half = _half_box(trunc_limit, grid.d)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    ab = rng.standard_normal((half.shape[0], 2))
    scale = params.sigma * (4 * np.pi**2 * np.sum(half * half, axis=1)
                            + params.tau**2) ** (-params.s / 2)
    pts = grid.points
    theta = 2 * np.pi * (pts @ half.T.astype(float))  # (N, n_half)
    coeff_cos = np.sqrt(2.0) * scale * ab[:, 0]
    coeff_sin = -np.sqrt(2.0) * scale * ab[:, 1]
    values = np.cos(theta) @ coeff_cos + np.sin(theta) @ coeff_sin
    return GridField.mean_zero(grid, values)


def dft_alias(fld: GridField) -> SpectralField:
    """Normalized discrete Fourier transform onto the level-q alias cell.

    Computes ``2^{-qd} sum_j u(x_j) exp(-2 pi i <m, x_j>)`` for every m in the
    alias cell, which equals the periodization of the true Fourier
    coefficients whenever the field is a truncated Fourier series.
    """
    lat = fld.lattice
    if not isinstance(lat, TorusLattice):
        raise TypeError("dft_alias requires a field on a TorusLattice")
    n = 1 << lat.q
    shape = (n,) * lat.d
    fhat = np.fft.fftn(fld.values.reshape(shape)) / lat.size
    box = FrequencyBox(lat.q, lat.d)
    members = box.members
    idx = tuple(members[:, k] % n for k in range(lat.d))
    return SpectralField(members, fhat[idx], lat.d)
