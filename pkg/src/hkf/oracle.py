"""Fourier-domain oracle for torus regression with equidistributed data.

Every quantity the Gram-matrix path computes on a dyadic torus lattice has a
closed form in terms of the aliased Fourier coefficients of the data and the
periodized kernel symbol: the interpolant's coefficients, its native-space
norm, the two-level interaction norm, the Gram spectrum, and hence both loss
functions.  These formulas never form a matrix, so they provide an
independent cross-check and a fast path for high-resolution runs.
"""

from __future__ import annotations

import numpy as np

from .torus import (
    DivergentExponentError,
    FrequencyBox,
    GridField,
    SpectralField,
    TorusLattice,
    alias_representative,
    periodized_symbol_box,
)


class InconsistentPeriodizationError(ValueError):
    """The two coefficient sets do not come from the same underlying field."""


def _box_coeffs(Tq_u: SpectralField, q: int, d: int) -> np.ndarray:
    box = FrequencyBox(q, d)
    if Tq_u.coeffs.shape[0] != box.size or not np.array_equal(Tq_u.freqs, box.members):
        raise ValueError(f"expected coefficients on the full level-{q} frequency box")
    return Tq_u.coeffs


def fold_coeffs(Tq_u: SpectralField, q: int) -> SpectralField:
    """Periodize level-q aliased coefficients one level down.

    T_{q-1} u(n) = sum over the 2^d level-q residue classes that merge into n.
    """
    d = Tq_u.d
    c = _box_coeffs(Tq_u, q, d)
    boxq = FrequencyBox(q, d)
    coarse = FrequencyBox(q - 1, d)
    out = np.zeros(coarse.size, dtype=complex)
    shifts = FrequencyBox(1, d).members * (1 << (q - 1))  # {0, -2^{q-1}}^d offsets
    for sh in shifts:
        idx = boxq.index_of(coarse.members + sh)
        np.add.at(out, np.arange(coarse.size), c[idx])
    return SpectralField(coarse.members, out, d)


def interpolant_coeffs(Tq_u: SpectralField, t: float, q: int,
                       out_freqs: np.ndarray) -> SpectralField:
    """Fourier coefficients of the GPR interpolant with kernel exponent t.

    cf(m) = |m|^{-2t} * Tq_u(alias(m)) / M(alias(m)) for m != 0, and 0 at the
    zero frequency, where M is the aliased power symbol at level q.
    """
    d = Tq_u.d
    if not (t > d / 2):
        raise DivergentExponentError(f"need t > d/2, got t={t}")
    c = _box_coeffs(Tq_u, q, d)
    M = periodized_symbol_box(q, t, d=d)
    box = FrequencyBox(q, d)
    out_freqs = np.asarray(out_freqs, dtype=np.int64)
    if out_freqs.ndim == 1:
        out_freqs = out_freqs.reshape(-1, d)
    idx = box.index_of(out_freqs)
    msq = np.sum(out_freqs.astype(float) ** 2, axis=1)
    nonzero = msq > 0
    coeffs = np.zeros(out_freqs.shape[0], dtype=complex)
    coeffs[nonzero] = (msq[nonzero] ** (-t)) * c[idx[nonzero]] / M[idx[nonzero]]
    return SpectralField(out_freqs, coeffs, d)


def ht_norm_sq(fld: SpectralField, t: float) -> float:
    """Sobolev-like seminorm: sum (4 pi^2 |m|^2)^t |c(m)|^2 over m != 0."""
    msq = np.sum(fld.freqs.astype(float) ** 2, axis=1)
    nz = msq > 0
    return float(np.sum((4 * np.pi**2 * msq[nz]) ** t * np.abs(fld.coeffs[nz]) ** 2))


def quad_form_aliased(coeffs: np.ndarray, aliased_symbol: np.ndarray) -> float:
    """Interpolant quadratic form sum |c(m)|^2 / P(m) for a general aliased
    kernel symbol P; equals y^T K^{-1} y on the lattice."""
    return float(np.sum(np.abs(coeffs) ** 2 / aliased_symbol))


def log_det_aliased(aliased_symbol: np.ndarray, q: int, d: int) -> float:
    """log det of the lattice Gram matrix: sum log(2^{qd} P(m))."""
    return float(np.sum(np.log((2.0 ** (q * d)) * aliased_symbol)))


def interpolant_ht_norm_sq(Tq_u: SpectralField, t: float, q: int) -> float:
    """Native-space norm^2 of the interpolant:
    (4 pi^2)^t sum_{m in box} |Tq_u(m)|^2 / M(m).  Finite sum, no truncation."""
    d = Tq_u.d
    if not (t > d / 2):
        raise DivergentExponentError(f"need t > d/2, got t={t}")
    c = _box_coeffs(Tq_u, q, d)
    M = periodized_symbol_box(q, t, d=d)
    return (4 * np.pi**2) ** t * quad_form_aliased(c, M)


def interaction_ht_norm_sq(Tq_u: SpectralField, Tqm1_u: SpectralField,
                           t: float, q: int, fold_tol: float = 1e-10) -> float:
    """Native-space norm^2 of the difference between the level-q and
    level-(q-1) interpolants:
    (4 pi^2)^t sum_{m in box_q} M_q(m) |Tq_u(m)/M_q(m) - Tqm1_u(m)/M_{q-1}(m)|^2.

    Validates that ``Tqm1_u`` is the one-level periodization of ``Tq_u``.
    """
    d = Tq_u.d
    if not (t > d / 2):
        raise DivergentExponentError(f"need t > d/2, got t={t}")
    cq = _box_coeffs(Tq_u, q, d)
    cqm1 = _box_coeffs(Tqm1_u, q - 1, d)
    folded = fold_coeffs(Tq_u, q).coeffs
    scale = np.max(np.abs(cqm1)) + 1e-300
    if np.max(np.abs(folded - cqm1)) > fold_tol * scale:
        raise InconsistentPeriodizationError(
            "coarse coefficients are not the periodization of the fine ones")
    Mq = periodized_symbol_box(q, t, d=d)
    Mqm1 = periodized_symbol_box(q - 1, t, d=d)
    boxq = FrequencyBox(q, d)
    coarse_idx = FrequencyBox(q - 1, d).index_of(boxq.members)
    diff = cq / Mq - cqm1[coarse_idx] / Mqm1[coarse_idx]
    return (4 * np.pi**2) ** t * float(np.sum(Mq * np.abs(diff) ** 2))


def gram_eigenvalues(t: float, q: int, d: int = 1) -> np.ndarray:
    """Exact spectrum of the lattice Gram matrix of the power kernel:
    2^{qd} (4 pi^2)^{-t} M(m) per frequency m in the alias cell, member order."""
    if not (t > d / 2):
        raise DivergentExponentError(f"need t > d/2, got t={t}")
    return (2.0 ** (q * d)) * (4 * np.pi**2) ** (-t) * periodized_symbol_box(q, t, d=d)


def gram_log_det(t: float, q: int, d: int = 1) -> float:
    return float(np.sum(np.log(gram_eigenvalues(t, q, d))))


def eb_loss_spectral(t: float, q: int, Tq_u: SpectralField) -> float:
    """Empirical-Bayes loss via the spectral path: interpolant norm plus the
    closed-form log-determinant.  Agrees with the Gram-matrix loss."""
    return interpolant_ht_norm_sq(Tq_u, t, q) + gram_log_det(t, q, Tq_u.d)


def kf_loss_spectral(t: float, q: int, Tq_u: SpectralField,
                     Tqm1_u: SpectralField) -> float:
    """Kernel-flow loss via the spectral path: interaction norm over
    interpolant norm.  Lies in [0, 1] up to roundoff."""
    denom = interpolant_ht_norm_sq(Tq_u, t, q)
    if denom <= 0.0:
        raise ZeroDivisionError("interpolant norm vanishes; kernel-flow loss undefined")
    return interaction_ht_norm_sq(Tq_u, Tqm1_u, t, q) / denom


def interpolant_on_lattice_general(Tq_u: SpectralField, q: int, Q: int,
                                   symbol_q: np.ndarray,
                                   symbol_Q: np.ndarray) -> GridField:
    """Values of the level-q interpolant on the finer lattice X_Q, for a
    kernel described by its aliased symbol at both levels (same normalization
    at both, so constant spectral prefactors cancel).

    The level-Q aliased coefficients of the interpolant are
    P_Q(n) * Tq_u(alias_q(n)) / P_q(alias_q(n)), so one inverse DFT gives the
    grid values with no further approximation.
    """
    d = Tq_u.d
    if Q < q:
        raise ValueError("evaluation lattice must be at least as fine as the data")
    c = _box_coeffs(Tq_u, q, d)
    symbol_q = np.asarray(symbol_q, dtype=float)
    symbol_Q = np.asarray(symbol_Q, dtype=float)
    if np.any(symbol_q <= 0):
        raise ValueError("level-q aliased symbol must be strictly positive")
    boxQ = FrequencyBox(Q, d)
    idx_q = FrequencyBox(q, d).index_of(boxQ.members)
    coeff_Q = symbol_Q * c[idx_q] / symbol_q[idx_q]
    n = 1 << Q
    arr = np.zeros((n,) * d, dtype=complex)
    pos = tuple(boxQ.members[:, k] % n for k in range(d))
    arr[pos] = coeff_Q
    values = np.real(np.fft.ifftn(arr)) * arr.size
    return GridField(TorusLattice(Q, d), values)


def interpolant_on_lattice(Tq_u: SpectralField, t: float, q: int,
                           Q: int) -> GridField:
    """Exact fine-lattice values of the power-kernel interpolant."""
    d = Tq_u.d
    if not (t > d / 2):
        raise DivergentExponentError(f"need t > d/2, got t={t}")
    return interpolant_on_lattice_general(
        Tq_u, q, Q,
        periodized_symbol_box(q, t, d=d),
        periodized_symbol_box(Q, t, d=d))


def truncated_power_symbol_box(q: int, t: float, limit: int,
                               d: int = 1) -> np.ndarray:
    """Aliased power sums of a kernel truncated to the symmetric box
    {0 < |m|_inf <= limit}: finite for every t >= 0, which makes the
    sub-critical exponents (t <= d/2) of truncated-series kernels evaluable.

    Residue classes with no retained mode get a zero entry (possible when the
    level's alias cell extends beyond the truncation); the data-level symbol
    fed to the interpolant formulas must be strictly positive, which holds
    whenever limit >= 2^{q-1}.
    """
    n = 1 << q
    members = FrequencyBox(q, d).members
    B = limit // n + 1
    betas = np.arange(-B, B + 1, dtype=np.int64)
    if d == 1:
        mm = members[:, 0][:, None] + n * betas[None, :]
        ok = (np.abs(mm) > 0) & (np.abs(mm) <= limit)
        vals = np.where(ok, np.abs(np.where(ok, mm, 1)).astype(float) ** (-2 * t), 0.0)
        return vals.sum(axis=1)
    import itertools
    bgrid = np.array(list(itertools.product(betas, repeat=d)), dtype=np.int64)
    out = np.empty(members.shape[0])
    for i, m in enumerate(members):
        mm = m[None, :] + n * bgrid
        sup = np.max(np.abs(mm), axis=1)
        ok = (np.any(mm != 0, axis=1)) & (sup <= limit)
        r2 = np.sum(mm[ok].astype(float) ** 2, axis=1)
        out[i] = float(np.sum(r2 ** (-t)))
    return out


def periodized_data(fld: GridField) -> SpectralField:
    """Aliased Fourier coefficients of lattice data (thin alias of dft_alias)."""
    from .torus import dft_alias
    return dft_alias(fld)
