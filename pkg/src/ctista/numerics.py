"""Complex linear-algebra primitives, RNG streams, and the inverse-DFT matrix.

Everything here operates on plain numpy arrays: a "CVector" is a 1-D
complex128 array, a "CMatrix" a 2-D complex128 array.  All functions are
pure; the only stateful object is the numpy Generator returned by
``rng_stream``, which is owned by exactly one caller.
"""

from __future__ import annotations

import numpy as np
from numpy.linalg import LinAlgError
from scipy.linalg import cho_factor, cho_solve

from .errors import RankDeficientMatrixError

# Relative pivot tolerance for Cholesky solves of Gram matrices.
GRAM_PIVOT_TOL = 1e-12


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Deterministic generator for (seed, stream id) pairs.

    Identical arguments always yield an identical sample sequence.  Extra
    integers extend the stream path, which is how per-worker and per-chunk
    streams are carved out of one master seed without overlap.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(stream)))


def as_cvector(v) -> np.ndarray:
    """Validate and return ``v`` as a finite 1-D complex128 array."""
    out = np.asarray(v, dtype=np.complex128)
    if out.ndim != 1 or out.size == 0:
        raise ValueError(f"expected a nonempty 1-D vector, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("vector contains non-finite entries")
    return out


def as_cmatrix(a) -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D complex128 array."""
    out = np.asarray(a, dtype=np.complex128)
    if out.ndim != 2 or out.size == 0:
        raise ValueError(f"expected a nonempty 2-D matrix, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError("matrix contains non-finite entries")
    return out


def hermitian_transpose(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return np.conj(np.asarray(a)).T


def trace_gram(a: np.ndarray) -> float:
    """Trace of the Gram matrix of ``a``, i.e. the sum of squared moduli."""
    a = np.asarray(a)
    return float(np.sum(np.abs(a) ** 2))


def pseudo_inverse(a: np.ndarray, tol: float = GRAM_PIVOT_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a full-rank complex matrix.

    For a fat matrix (m <= n) with full row rank this is A^H (A A^H)^-1,
    computed through a Cholesky factorization of the Gram matrix; tall
    matrices use the mirrored formula.  If the Cholesky pivots fall below
    ``tol`` relative to the largest one, an SVD fallback decides between an
    ill-conditioned-but-full-rank matrix and a genuinely rank-deficient one.

    Raises
    ------
    RankDeficientMatrixError
        If the smallest singular value of the Gram matrix is below ``tol``
        times the largest.
    """
    a = as_cmatrix(a)
    m, n = a.shape
    gram = a @ a.conj().T if m <= n else a.conj().T @ a
    try:
        factor = cho_factor(gram, lower=True, check_finite=False)
        pivots = np.abs(np.diag(factor[0])) ** 2
        if pivots.min() <= tol * pivots.max():
            raise LinAlgError("pivot below tolerance")
        if m <= n:
            # W = A^H G^-1 = (G^-1 A)^H since G is Hermitian
            return cho_solve(factor, a, check_finite=False).conj().T
        return cho_solve(factor, a.conj().T, check_finite=False)
    except LinAlgError:
        pass
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    # singular values of the Gram matrix are s**2
    if s[-1] ** 2 <= tol * s[0] ** 2:
        raise RankDeficientMatrixError(
            f"matrix of shape {a.shape} is numerically rank-deficient "
            f"(gram singular values span {s[-1]**2:.3e} .. {s[0]**2:.3e})"
        )
    return (vh.conj().T / s) @ u.conj().T


def idft_matrix(n: int) -> np.ndarray:
    """The unitary n x n inverse-DFT matrix.

    Entry (k, i) is exp(2j*pi*k*i/n)/sqrt(n) with 0-based indices k, i.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def widen(a: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Real-valued doubling of a complex system.

    Returns the 2m x 2n block matrix [[Re A, -Im A], [Im A, Re A]] and the
    stacked vector [Re v; Im v], so that widen respects products:
    widen(A) @ widen_vec(x) == widen_vec(A @ x).
    """
    a = as_cmatrix(a)
    wide = np.block([[a.real, -a.imag], [a.imag, a.real]])
    return wide, widen_vec(v)


def widen_vec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)
    return np.concatenate([v.real, v.imag], axis=0)


def unwiden_vec(v: np.ndarray) -> np.ndarray:
    """Inverse of ``widen_vec``: reassemble a complex vector."""
    v = np.asarray(v, dtype=np.float64)
    half = v.shape[0] // 2
    if v.shape[0] != 2 * half:
        raise ValueError("widened vector must have even length")
    return v[:half] + 1j * v[half:]


def sample_cgaussian(
    mean: complex, var: float, rng: np.random.Generator, count: int
) -> np.ndarray:
    """Draw ``count`` i.i.d. circularly-symmetric complex Gaussians.

    Real and imaginary parts are independent N(0, var/2), so the total
    per-component variance is ``var``.
    """
    if var < 0:
        raise ValueError("variance must be >= 0")
    scale = np.sqrt(var / 2.0)
    z = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    return mean + scale * z
