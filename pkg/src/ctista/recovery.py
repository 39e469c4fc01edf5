"""The trainable unrolled recovery recursion and the zero-forcing detector.

One layer t of the recursion, starting from the zero-forcing point
s1 = W y, is

    r_t     = s_t + beta_t * h(s_t)
    s_{t+1} = eta(r_t; lambda_t)
    lambda_t = a_t + b_t * ||y - f(A s_t)||^2 / Tr(A^H A)

with h(s) = W [ (y - f(As))* . df/dz*(As) + (y - f(As)) . df*/dz*(As) ],
the pseudo-inverse W standing in for A^H in the Wirtinger gradient step.
The per-layer scalars (beta_t, a_t, b_t) are the trainable parameters.

All entry points accept a single observation (shape (m,)) or a batch of
columns (shape (m, L)); tracing is only available for single observations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergenceError
from .nonlinearity import ComponentwiseMap
from .numerics import as_cmatrix, hermitian_transpose, pseudo_inverse, trace_gram
from .shrinkage import ShrinkageFn

# Lower clamp for the estimated error variance; the mmse shrinkage needs
# a strictly positive lambda.
LAMBDA_FLOOR = 1e-9


@dataclass
class CtistaParams:
    """The 3T trainable real scalars: per-layer step sizes and the affine
    coefficients of the error-variance estimate."""

    beta: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if not (self.beta.shape == self.a.shape == self.b.shape) or self.beta.ndim != 1:
            raise ValueError("beta, a, b must be 1-D arrays of equal length")
        if not all(np.all(np.isfinite(v)) for v in (self.beta, self.a, self.b)):
            raise ValueError("parameters must be finite")

    @property
    def depth(self) -> int:
        return self.beta.size

    @classmethod
    def initial(cls, depth: int, noise_var: Optional[float] = None) -> "CtistaParams":
        """Untrained starting point: beta = 1, b = 1, a = known noise
        variance (0.01 when unknown)."""
        a0 = 0.01 if noise_var is None else float(noise_var)
        return cls(
            beta=np.ones(depth),
            a=np.full(depth, a0),
            b=np.ones(depth),
        )

    def to_vector(self, depth: Optional[int] = None) -> np.ndarray:
        """Flatten the first ``depth`` layers as [beta..., a..., b...]."""
        t = self.depth if depth is None else depth
        return np.concatenate([self.beta[:t], self.a[:t], self.b[:t]])

    def with_vector(self, vec: np.ndarray, depth: Optional[int] = None) -> "CtistaParams":
        """Copy of self with the first ``depth`` layers replaced from a flat vector."""
        t = self.depth if depth is None else depth
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (3 * t,):
            raise ValueError(f"expected a flat vector of length {3*t}")
        beta, a, b = self.beta.copy(), self.a.copy(), self.b.copy()
        beta[:t], a[:t], b[:t] = vec[:t], vec[t : 2 * t], vec[2 * t :]
        return CtistaParams(beta=beta, a=a, b=b)

    def copy(self) -> "CtistaParams":
        return CtistaParams(self.beta.copy(), self.a.copy(), self.b.copy())


@dataclass(frozen=True)
class CtistaModel:
    """Frozen problem context: system matrix, its pseudo-inverse, the
    nonlinearity, the shrinkage, and the layer count."""

    a_mat: np.ndarray
    w_mat: np.ndarray
    gram_trace: float
    f: ComponentwiseMap
    eta: ShrinkageFn
    depth: int
    h_matrix: str = "pinv"  # "pinv" uses W in h(s); "adjoint" uses A^H (ablation)

    @classmethod
    def build(
        cls,
        a_mat: np.ndarray,
        f: ComponentwiseMap,
        eta: ShrinkageFn,
        depth: int,
        h_matrix: str = "pinv",
    ) -> "CtistaModel":
        a_mat = as_cmatrix(a_mat)
        if depth < 1:
            raise ValueError("layer count must be >= 1")
        if h_matrix not in ("pinv", "adjoint"):
            raise ValueError("h_matrix must be 'pinv' or 'adjoint'")
        return cls(
            a_mat=a_mat,
            w_mat=pseudo_inverse(a_mat),
            gram_trace=trace_gram(a_mat),
            f=f,
            eta=eta,
            depth=depth,
            h_matrix=h_matrix,
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.a_mat.shape

    def gradient_matrix(self) -> np.ndarray:
        if self.h_matrix == "adjoint":
            return hermitian_transpose(self.a_mat)
        return self.w_mat


@dataclass
class RecoveryTrace:
    """Per-iteration internals of a single-observation forward pass."""

    s_pre: np.ndarray      # (T, n): s^(t) entering step t
    r: np.ndarray          # (T, n): gradient-step outputs
    lam: np.ndarray        # (T,): clamped error-variance estimates
    residual_sq: np.ndarray  # (T,): ||y - f(A s^(t))||^2
    estimates: np.ndarray  # (T, n): s^(t+1) leaving step t


def _check_obs(model: CtistaModel, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.complex128)
    m = model.shape[0]
    if y.shape[0] != m or y.ndim not in (1, 2):
        raise ValueError(f"observation must have {m} rows, got shape {y.shape}")
    return y


def h_step(model: CtistaModel, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient-direction vector h(s); accepts (n,) or (n, L) iterates."""
    y = _check_obs(model, y)
    s = np.asarray(s, dtype=np.complex128)
    if s.shape[0] != model.shape[1] or s.ndim != y.ndim:
        raise ValueError(f"iterate shape {s.shape} inconsistent with model {model.shape}")
    u = model.a_mat @ s
    resid = y - model.f.eval(u)
    bracket = np.conj(resid) * model.f.d_f_dzc(u) + resid * model.f.d_fconj_dzc(u)
    return model.gradient_matrix() @ bracket


def residual_sq(model: CtistaModel, s: np.ndarray, y: np.ndarray):
    """||y - f(As)||^2 per observation (scalar for (m,), vector for (m, L))."""
    resid = y - model.f.eval(model.a_mat @ s)
    return np.sum(np.abs(resid) ** 2, axis=0)


def lambda_est(
    model: CtistaModel, params: CtistaParams, t: int, s: np.ndarray, y: np.ndarray
):
    """Clamped error-variance estimate of layer t (1-based)."""
    if not 1 <= t <= params.depth:
        raise ValueError(f"layer index {t} outside 1..{params.depth}")
    raw = params.a[t - 1] + params.b[t - 1] * residual_sq(model, s, y) / model.gram_trace
    return np.maximum(raw, LAMBDA_FLOOR)


def ctista_forward(
    model: CtistaModel,
    params: CtistaParams,
    y: np.ndarray,
    layers: Optional[int] = None,
) -> tuple[np.ndarray, RecoveryTrace]:
    """Run the unrolled recursion on one observation, recording a full trace.

    Returns the estimate after ``layers`` steps (all of them by default)
    and the per-iteration trace.  Raises DivergenceError with the offending
    iteration index if any iterate goes non-finite.
    """
    y = _check_obs(model, y)
    if y.ndim != 1:
        raise ValueError("tracing supports a single observation; use ctista_batch")
    depth = _resolve_depth(model, params, layers)
    n = model.shape[1]
    s = model.w_mat @ y
    s_pre = np.empty((depth, n), dtype=np.complex128)
    r_all = np.empty((depth, n), dtype=np.complex128)
    lam_all = np.empty(depth)
    res_all = np.empty(depth)
    est_all = np.empty((depth, n), dtype=np.complex128)
    for t in range(1, depth + 1):
        s_pre[t - 1] = s
        res = residual_sq(model, s, y)
        lam = max(
            params.a[t - 1] + params.b[t - 1] * res / model.gram_trace, LAMBDA_FLOOR
        )
        r = s + params.beta[t - 1] * h_step(model, s, y)
        s = model.eta(r, lam)
        if not np.all(np.isfinite(s)):
            raise DivergenceError("recovery iterate became non-finite", t)
        r_all[t - 1] = r
        lam_all[t - 1] = lam
        res_all[t - 1] = res
        est_all[t - 1] = s
    trace = RecoveryTrace(
        s_pre=s_pre, r=r_all, lam=lam_all, residual_sq=res_all, estimates=est_all
    )
    return s, trace


def ctista_batch(
    model: CtistaModel,
    params: CtistaParams,
    y: np.ndarray,
    layers: Optional[int] = None,
    collect_iterates: bool = False,
):
    """Vectorized forward pass over a batch of observation columns.

    ``y`` has shape (m, L).  Returns the (n, L) estimates, or with
    ``collect_iterates`` a (layers, n, L) array of the estimate after every
    layer (the last slice is the final estimate).
    """
    y = _check_obs(model, y)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    depth = _resolve_depth(model, params, layers)
    s = model.w_mat @ y
    iterates = []
    for t in range(1, depth + 1):
        lam = np.maximum(
            params.a[t - 1]
            + params.b[t - 1] * residual_sq(model, s, y) / model.gram_trace,
            LAMBDA_FLOOR,
        )
        r = s + params.beta[t - 1] * h_step(model, s, y)
        s = model.eta(r, lam[None, :])
        if not np.all(np.isfinite(s)):
            raise DivergenceError("recovery iterate became non-finite", t)
        if collect_iterates:
            iterates.append(s)
    if collect_iterates:
        out = np.stack(iterates, axis=0)
        return out[:, :, 0] if squeeze else out
    return s[:, 0] if squeeze else s


def _resolve_depth(model: CtistaModel, params: CtistaParams, layers: Optional[int]) -> int:
    if params.depth != model.depth:
        raise ValueError(
            f"parameter depth {params.depth} does not match model depth {model.depth}"
        )
    depth = model.depth if layers is None else layers
    if not 1 <= depth <= model.depth:
        raise ValueError(f"layers must be in 1..{model.depth}")
    return depth


def zf_detect(w_mat: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Zero-forcing estimate W y."""
    w_mat = np.asarray(w_mat, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if w_mat.shape[1] != y.shape[0]:
        raise ValueError(
            f"dimension mismatch: W is {w_mat.shape}, observation has {y.shape[0]} rows"
        )
    return w_mat @ y
