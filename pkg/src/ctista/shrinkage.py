"""Shrinkage estimators for the projection step, and signal constellations.

Two families are provided: complex soft thresholding (magnitude shrink,
phase preserved) for sparse priors, and the posterior-mean estimator of a
virtual AWGN channel with a finite-constellation prior.  Both expose the
derivatives the reverse-mode training gradients need.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Constellation:
    """Finite set of complex signal points.

    ``avg_power`` is the mean squared modulus, computed once; hard decisions
    break ties toward the lowest point index.
    """

    points: np.ndarray
    name: str
    avg_power: float = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128)
        if pts.ndim != 1 or pts.size == 0:
            raise ValueError("constellation needs a nonempty 1-D point list")
        if len(np.unique(pts)) != pts.size:
            raise ValueError("constellation points must be distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "avg_power", float(np.mean(np.abs(pts) ** 2)))

    def __len__(self) -> int:
        return self.points.size


def make_psk(m: int) -> Constellation:
    """M-ary PSK: unit-circle points exp(2j*pi*k/m), k = 0..m-1."""
    if m < 2:
        raise ValueError("PSK order must be >= 2")
    pts = np.exp(2j * np.pi * np.arange(m) / m)
    return Constellation(points=pts, name="8psk" if m == 8 else f"mpsk:{m}")


def make_qam16() -> Constellation:
    """16-QAM on the unnormalized {+-1, +-3}^2 lattice (average power 10)."""
    axis = np.array([-3.0, -1.0, 1.0, 3.0])
    pts = (axis[:, None] + 1j * axis[None, :]).ravel()
    return Constellation(points=pts, name="qam16")


def constellation_from_name(name: str) -> Constellation:
    """Parse the constellation names accepted in config files."""
    key = name.strip().lower()
    if key == "8psk":
        return make_psk(8)
    if key == "qam16":
        return make_qam16()
    if key.startswith("mpsk:"):
        return make_psk(int(key.split(":", 1)[1]))
    raise ValueError(f"unknown constellation {name!r} (use 8psk, qam16, or mpsk:<M>)")


def soft_real(x, lam: float):
    """Real soft thresholding max(|x| - lam, 0) * sign(x)."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("threshold must be >= 0")
    x = np.asarray(x)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def soft_complex(x, lam):
    """Complex soft thresholding: shrink the magnitude, keep the phase."""
    if np.any(np.asarray(lam) < 0):
        raise ValueError("threshold must be >= 0")
    x = np.asarray(x, dtype=np.complex128)
    mag = np.abs(x)
    shrunk = np.maximum(mag - lam, 0.0)
    safe = np.where(mag > 0, mag, 1.0)
    return x * (shrunk / safe)


def _posterior_moments(y, lam, s: Constellation):
    """Softmax weights over constellation points and the posterior moments.

    Returns (mean, mean_sq, mean_abs_sq, mean_d, mean_s_d) where d is the
    squared distance |y - s|^2; the exponent is shifted by its per-point
    minimum before exponentiation so small lam never underflows to 0/0.
    """
    y = np.asarray(y, dtype=np.complex128)
    lam = np.asarray(lam, dtype=np.float64)
    pts = s.points.reshape((1,) * y.ndim + (-1,))
    diff = y[..., None] - pts
    d = diff.real**2 + diff.imag**2
    expo = -d / lam[..., None]
    expo -= expo.max(axis=-1, keepdims=True)
    w = np.exp(expo)
    w /= w.sum(axis=-1, keepdims=True)
    mean = (w * pts).sum(axis=-1)
    mean_sq = (w * pts**2).sum(axis=-1)
    mean_abs_sq = (w * np.abs(pts) ** 2).sum(axis=-1)
    mean_d = (w * d).sum(axis=-1)
    mean_s_d = (w * pts * d).sum(axis=-1)
    return mean, mean_sq, mean_abs_sq, mean_d, mean_s_d


def mmse_shrink(y, lam, s: Constellation):
    """Posterior mean of a constellation point seen through AWGN of variance lam.

    lam = 0 is the nearest-point limit and delegates to ``hard_decision``.
    """
    if np.any(np.asarray(lam) < 0):
        raise ValueError("lam must be >= 0")
    if np.all(np.asarray(lam) == 0):
        return hard_decision(y, s)
    mean, *_ = _posterior_moments(y, lam, s)
    return mean


def hard_decision(y, s: Constellation):
    """Nearest constellation point; ties go to the lowest point index."""
    y = np.asarray(y, dtype=np.complex128)
    pts = s.points.reshape((1,) * y.ndim + (-1,))
    diff = y[..., None] - pts
    idx = np.argmin(diff.real**2 + diff.imag**2, axis=-1)
    return s.points[idx]


def hard_decision_index(y, s: Constellation):
    """Index of the nearest constellation point (same tie-break)."""
    y = np.asarray(y, dtype=np.complex128)
    pts = s.points.reshape((1,) * y.ndim + (-1,))
    diff = y[..., None] - pts
    return np.argmin(diff.real**2 + diff.imag**2, axis=-1)


@dataclass(frozen=True)
class ShrinkageFn:
    """Projection-step estimator: either complex-soft or constellation MMSE."""

    kind: str
    constellation: Optional[Constellation] = None

    def __post_init__(self):
        if self.kind not in ("complex-soft", "mmse"):
            raise ValueError(f"unknown shrinkage kind {self.kind!r}")
        if self.kind == "mmse" and self.constellation is None:
            raise ValueError("mmse shrinkage needs a constellation")

    @classmethod
    def complex_soft(cls) -> "ShrinkageFn":
        return cls(kind="complex-soft")

    @classmethod
    def mmse(cls, constellation: Constellation) -> "ShrinkageFn":
        return cls(kind="mmse", constellation=constellation)

    def __call__(self, r, lam):
        if self.kind == "complex-soft":
            return soft_complex(r, lam)
        return mmse_shrink(r, lam, self.constellation)

    def with_grads(self, r, lam):
        """Value plus (d_eta/dr, d_eta/dr*, d_eta/dlam) for reverse mode.

        The soft branch uses the zero branch on |r| <= lam (measure-zero
        boundary included); the mmse derivatives are posterior covariances:
        d/dr = (E|s|^2 - |eta|^2)/lam, d/dr* = (E[s^2] - eta^2)/lam,
        d/dlam = Cov(s, |r-s|^2)/lam^2.
        """
        r = np.asarray(r, dtype=np.complex128)
        lam = np.asarray(lam, dtype=np.float64)
        if self.kind == "complex-soft":
            mag = np.abs(r)
            active = mag > lam
            safe = np.where(mag > 0, mag, 1.0)
            unit = r / safe
            eta = np.where(active, r - lam * unit, 0.0)
            d_dr = np.where(active, 1.0 - lam / (2.0 * safe), 0.0).astype(np.complex128)
            d_drc = np.where(active, lam * unit**2 / (2.0 * safe), 0.0)
            d_dlam = np.where(active, -unit, 0.0)
            return eta, d_dr, d_drc, d_dlam
        mean, mean_sq, mean_abs_sq, mean_d, mean_s_d = _posterior_moments(
            r, lam, self.constellation
        )
        d_dr = ((mean_abs_sq - np.abs(mean) ** 2) / lam).astype(np.complex128)
        d_drc = (mean_sq - mean**2) / lam
        d_dlam = (mean_s_d - mean * mean_d) / lam**2
        return mean, d_dr, d_drc, d_dlam
