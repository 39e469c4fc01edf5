"""Component-wise complex maps, Wirtinger derivatives, and the LMS gradient.

A ComponentwiseMap bundles a scalar function f: C -> C with closed-form
evaluators for the two conjugate-coordinate derivatives that drive the
gradient of the squared-error objective g(x) = ||y - f(Ax)||^2:

    d_f_dzc(z)     evaluates  df/dz*
    d_fconj_dzc(z) evaluates  df*/dz*   (always the conjugate of df/dz)

``wirtinger_fd`` is the independent finite-difference oracle every
closed-form evaluator is checked against.  Maps may optionally carry the
three second-order evaluators; those are only needed by the reverse-mode
parameter gradients in the training module and are re-verified against the
oracle applied to the first-order evaluators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DivergenceError
from .numerics import as_cmatrix, as_cvector, hermitian_transpose

CFunc = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ComponentwiseMap:
    """A scalar complex map applied coordinate-wise, with its derivatives.

    Attributes
    ----------
    name : str
        Identifier used in configs and reports.
    eval : callable
        Vectorized evaluation of f.
    d_f_dzc : callable
        Vectorized df/dz*.
    d_fconj_dzc : callable
        Vectorized df*/dz*.
    smooth_everywhere : bool
        False when the map has non-smooth loci.
    nonsmooth_distance : callable or None
        Distance from each input point to the nearest non-smooth locus;
        required when ``smooth_everywhere`` is False.
    d2_dz2, d2_dzdzc, d2_dzc2 : callable or None
        Optional second-order Wirtinger derivatives of f.  When absent,
        reverse-mode training gradients are unavailable for this map.
    """

    name: str
    eval: CFunc
    d_f_dzc: CFunc
    d_fconj_dzc: CFunc
    smooth_everywhere: bool = True
    nonsmooth_distance: Optional[CFunc] = None
    d2_dz2: Optional[CFunc] = None
    d2_dzdzc: Optional[CFunc] = None
    d2_dzc2: Optional[CFunc] = None

    def d_f_dz(self, z: np.ndarray) -> np.ndarray:
        """df/dz, recovered from df*/dz* by conjugation."""
        return np.conj(self.d_fconj_dzc(z))

    @property
    def has_second_derivatives(self) -> bool:
        return (
            self.d2_dz2 is not None
            and self.d2_dzdzc is not None
            and self.d2_dzc2 is not None
        )


def identity_map() -> ComponentwiseMap:
    """f(z) = z.  df/dz* = 0 and df*/dz* = 1."""
    zero = lambda z: np.zeros_like(np.asarray(z, dtype=np.complex128))
    one = lambda z: np.ones_like(np.asarray(z, dtype=np.complex128))
    return ComponentwiseMap(
        name="identity",
        eval=lambda z: np.asarray(z, dtype=np.complex128),
        d_f_dzc=zero,
        d_fconj_dzc=one,
        d2_dz2=zero,
        d2_dzdzc=zero,
        d2_dzc2=zero,
    )


def analytic_map(name: str, fn: CFunc, dfn: CFunc, d2fn: Optional[CFunc] = None) -> ComponentwiseMap:
    """Wrap an analytic (holomorphic) f given its complex derivative f'.

    For analytic f, df/dz* vanishes and df*/dz* = conj(f'); the optional
    second complex derivative f'' supplies the second-order evaluators.
    """
    zero = lambda z: np.zeros_like(np.asarray(z, dtype=np.complex128))
    return ComponentwiseMap(
        name=name,
        eval=fn,
        d_f_dzc=zero,
        d_fconj_dzc=lambda z: np.conj(dfn(z)),
        d2_dz2=(lambda z: np.asarray(d2fn(z), dtype=np.complex128)) if d2fn else None,
        d2_dzdzc=zero if d2fn else None,
        d2_dzc2=zero if d2fn else None,
    )


def clip_map(alpha: float) -> ComponentwiseMap:
    """Amplitude clipping: identity inside |z| <= alpha, alpha*e^{i phase(z)} outside.

    The closed-form Wirtinger derivatives (interior: df/dz* = 0,
    df*/dz* = 1; exterior: df/dz* = -alpha*z^2/(2|z|^3),
    df*/dz* = alpha/(2|z|)) follow from f(z) = alpha*z*(z z*)^{-1/2} on the
    exterior; the circle |z| = alpha is the non-smooth locus and takes the
    interior branch.
    """
    if not alpha > 0:
        raise ValueError("clipping level alpha must be > 0")

    def _eval(z):
        z = np.asarray(z, dtype=np.complex128)
        mag = np.abs(z)
        with np.errstate(invalid="ignore", divide="ignore"):
            clipped = np.where(mag > alpha, alpha * z / np.where(mag > 0, mag, 1.0), z)
        return clipped

    def _outside(z):
        return np.abs(np.asarray(z)) > alpha

    def _d_f_dzc(z):
        z = np.asarray(z, dtype=np.complex128)
        mag = np.abs(z)
        out = np.zeros_like(z)
        sel = _outside(z)
        out[sel] = -alpha * z[sel] ** 2 / (2.0 * mag[sel] ** 3)
        return out

    def _d_fconj_dzc(z):
        z = np.asarray(z, dtype=np.complex128)
        mag = np.abs(z)
        out = np.ones_like(z)
        sel = _outside(z)
        out[sel] = alpha / (2.0 * mag[sel])
        return out

    def _d2_dz2(z):
        z = np.asarray(z, dtype=np.complex128)
        mag = np.abs(z)
        out = np.zeros_like(z)
        sel = _outside(z)
        out[sel] = -alpha * np.conj(z[sel]) / (4.0 * mag[sel] ** 3)
        return out

    def _d2_dzdzc(z):
        z = np.asarray(z, dtype=np.complex128)
        mag = np.abs(z)
        out = np.zeros_like(z)
        sel = _outside(z)
        out[sel] = -alpha * z[sel] / (4.0 * mag[sel] ** 3)
        return out

    def _d2_dzc2(z):
        z = np.asarray(z, dtype=np.complex128)
        mag = np.abs(z)
        out = np.zeros_like(z)
        sel = _outside(z)
        out[sel] = 3.0 * alpha * z[sel] ** 3 / (4.0 * mag[sel] ** 5)
        return out

    return ComponentwiseMap(
        name=f"clip({alpha:g})",
        eval=_eval,
        d_f_dzc=_d_f_dzc,
        d_fconj_dzc=_d_fconj_dzc,
        smooth_everywhere=False,
        nonsmooth_distance=lambda z: np.abs(np.abs(np.asarray(z)) - alpha),
        d2_dz2=_d2_dz2,
        d2_dzdzc=_d2_dzdzc,
        d2_dzc2=_d2_dzc2,
    )


def central_wirtinger(fn: CFunc, z, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference Wirtinger derivatives of an arbitrary callable.

    Central differences along the real and imaginary axes combined into
    (df/dz, df/dz*).  The caller is responsible for staying away from
    non-smooth points; see ``wirtinger_fd`` for the guarded version.
    """
    z = np.asarray(z, dtype=np.complex128)
    d_re = (fn(z + h) - fn(z - h)) / (2.0 * h)
    d_im = (fn(z + 1j * h) - fn(z - 1j * h)) / (2.0 * h)
    df_dz = 0.5 * (d_re - 1j * d_im)
    df_dzc = 0.5 * (d_re + 1j * d_im)
    return df_dz, df_dzc


def wirtinger_fd(
    f: ComponentwiseMap, z, h: Optional[float] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference oracle for (df/dz, df/dz*) at points ``z``.

    Default step is 1e-5 * max(1, |z|) per point.  Points within 2h of a
    declared non-smooth locus are rejected, since central differences
    straddling a kink are meaningless.
    """
    z = np.asarray(z, dtype=np.complex128)
    hs = np.asarray(h if h is not None else 1e-5 * np.maximum(1.0, np.abs(z)))
    if np.any(hs <= 0):
        raise ValueError("step h must be > 0")
    if not f.smooth_everywhere:
        dist = f.nonsmooth_distance(z)
        if np.any(dist <= 2.0 * hs):
            raise ValueError(
                f"point within 2h of a non-smooth locus of {f.name}; "
                "the finite-difference oracle is unreliable there"
            )
    if np.ndim(hs) == 0:
        return central_wirtinger(f.eval, z, float(hs))
    df_dz = np.empty_like(z)
    df_dzc = np.empty_like(z)
    for idx in np.ndindex(z.shape):
        df_dz[idx], df_dzc[idx] = central_wirtinger(f.eval, z[idx], float(hs[idx]))
    return df_dz, df_dzc


def lms_objective(a: np.ndarray, y: np.ndarray, f: ComponentwiseMap, x: np.ndarray) -> float:
    """g(x) = ||y - f(Ax)||^2."""
    resid = y - f.eval(a @ x)
    return float(np.real(np.vdot(resid, resid)))


def grad_lms(
    a: np.ndarray, y: np.ndarray, f: ComponentwiseMap, x: np.ndarray
) -> np.ndarray:
    """Wirtinger gradient of the squared-error objective.

    Returns -(1/2) A^H [ (y - f(Ax))* . df/dz*(Ax) + (y - f(Ax)) . df*/dz*(Ax) ],
    the steepest-descent direction being its negative.  For identity f this
    collapses to -(1/2) A^H (y - Ax).
    """
    a = as_cmatrix(a)
    y = as_cvector(y)
    x = np.asarray(x, dtype=np.complex128)
    if a.shape[0] != y.shape[0] or a.shape[1] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: A is {a.shape}, |y|={y.shape[0]}, |x|={x.shape[0]}"
        )
    u = a @ x
    resid = y - f.eval(u)
    bracket = np.conj(resid) * f.d_f_dzc(u) + resid * f.d_fconj_dzc(u)
    return -0.5 * (hermitian_transpose(a) @ bracket)


def gradient_descent(
    a: np.ndarray,
    y: np.ndarray,
    f: ComponentwiseMap,
    beta: float,
    iterations: int,
    x0: np.ndarray,
) -> np.ndarray:
    """Plain gradient descent x <- x - 2*beta*grad on the LMS objective."""
    if not beta > 0:
        raise ValueError("step size beta must be > 0")
    if iterations < 0:
        raise ValueError("iteration count must be >= 0")
    x = np.array(x0, dtype=np.complex128)
    for t in range(1, iterations + 1):
        x = x - 2.0 * beta * grad_lms(a, y, f, x)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("gradient descent produced a non-finite iterate", t)
    return x
