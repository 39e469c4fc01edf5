"""Incremental training of the unrolled recovery network.

The trainable parameters are the 3T real scalars (beta_t, a_t, b_t).
Generation t fits the first 3t of them on fresh minibatches with the
network truncated to t layers, so early layers are already sensible when
later ones start training.  Each generation restarts Adam from zero state.

Gradients come from a reverse-mode sweep through the unrolled recursion
written directly in Wirtinger form (cotangent c_z = dL/d conj(z)), with a
central finite-difference fallback.  The analytic path is only enabled
after it reproduces the finite-difference gradient on a probe batch, so a
wrong derivative can never train silently.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DivergenceError
from .numerics import hermitian_transpose
from .recovery import LAMBDA_FLOOR, CtistaModel, CtistaParams, _resolve_depth

BatchFn = Callable[[int, int], tuple[np.ndarray, np.ndarray]]

FD_REL_STEP = 1e-4
ADJOINT_TOL = 1e-4


# ---------------------------------------------------------------------------
# Adam

@dataclass
class AdamState:
    """First/second moment accumulators for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), step=0)


def adam_step(
    state: AdamState,
    theta: np.ndarray,
    grad: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One bias-corrected Adam update; mutates ``state``, returns new theta."""
    grad = np.asarray(grad, dtype=np.float64)
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad**2
    m_hat = state.m / (1.0 - beta1**state.step)
    v_hat = state.v / (1.0 - beta2**state.step)
    return theta - lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# loss and gradients

def _check_batch(model: CtistaModel, y: np.ndarray, x: np.ndarray):
    y = np.asarray(y, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    m, n = model.shape
    if y.ndim != 2 or x.ndim != 2 or y.shape[1] != x.shape[1]:
        raise ValueError("expected column batches y (m, L) and x (n, L)")
    if y.shape[0] != m or x.shape[0] != n:
        raise ValueError(
            f"batch shapes {y.shape}/{x.shape} inconsistent with model {model.shape}"
        )
    return y, x


@dataclass
class _Stash:
    """Per-layer forward intermediates kept for the reverse sweep."""

    s: list          # iterates s_1..s_{T+1}, each (n, L)
    u: list          # A s_t, (m, L)
    e: list          # y - f(A s_t), (m, L)
    rho: list        # residual_sq / trace, (L,)
    lam: list        # clamped threshold, (L,)
    lam_active: list # bool (L,), False where the floor clamp is in force
    h: list          # gradient-direction vector, (n, L)
    eta_grads: list  # (d_dr, d_drc, d_dlam) at (r_t, lam_t)


def _forward_stash(
    model: CtistaModel, params: CtistaParams, y: np.ndarray, depth: int
) -> _Stash:
    """Unrolled forward pass mirroring ``ctista_batch``, keeping intermediates."""
    g_mat = model.gradient_matrix()
    s = model.w_mat @ y
    stash = _Stash(s=[s], u=[], e=[], rho=[], lam=[], lam_active=[], h=[], eta_grads=[])
    for t in range(1, depth + 1):
        u = model.a_mat @ s
        e = y - model.f.eval(u)
        rho = np.sum(e.real**2 + e.imag**2, axis=0) / model.gram_trace
        raw = params.a[t - 1] + params.b[t - 1] * rho
        lam = np.maximum(raw, LAMBDA_FLOOR)
        h = g_mat @ (np.conj(e) * model.f.d_f_dzc(u) + e * model.f.d_fconj_dzc(u))
        r = s + params.beta[t - 1] * h
        eta, d_dr, d_drc, d_dlam = model.eta.with_grads(r, lam)
        if not np.all(np.isfinite(eta)):
            raise DivergenceError("recovery iterate became non-finite", t)
        s = eta
        stash.s.append(s)
        stash.u.append(u)
        stash.e.append(e)
        stash.rho.append(rho)
        stash.lam.append(lam)
        stash.lam_active.append(raw > LAMBDA_FLOOR)
        stash.h.append(h)
        stash.eta_grads.append((d_dr, d_drc, d_dlam))
    return stash


def batch_loss(
    model: CtistaModel,
    params: CtistaParams,
    y: np.ndarray,
    x: np.ndarray,
    layers: Optional[int] = None,
) -> float:
    """Mean over the batch of ||s_final - x||^2 at the truncated depth."""
    y, x = _check_batch(model, y, x)
    depth = _resolve_depth(model, params, layers)
    stash = _forward_stash(model, params, y, depth)
    diff = stash.s[-1] - x
    return float(np.mean(np.sum(diff.real**2 + diff.imag**2, axis=0)))


def grad_adjoint(
    model: CtistaModel,
    params: CtistaParams,
    y: np.ndarray,
    x: np.ndarray,
    layers: Optional[int] = None,
) -> tuple[float, np.ndarray]:
    """Loss and its exact gradient w.r.t. the 3*depth active scalars.

    Reverse sweep in Wirtinger form with the conjugate cotangent convention
    c_z = dL/d conj(z): a linear stage w = M z pulls back as c_z += M^H c_w,
    a componentwise stage w = g(z, conj(z)) as
    c_z = conj(c_w) * dg/dzbar + c_w * conj(dg/dz), and a real parameter
    collects dL/dtheta = 2 Re sum(conj(c_w) * dw/dtheta).  Needs second
    Wirtinger derivatives of the nonlinearity (the gradient-direction vector
    differentiates through the first derivatives of f).
    """
    if not model.f.has_second_derivatives:
        raise ValueError(
            f"nonlinearity {model.f.name!r} lacks second derivatives; use grad_fd"
        )
    y, x = _check_batch(model, y, x)
    depth = _resolve_depth(model, params, layers)
    stash = _forward_stash(model, params, y, depth)
    count = y.shape[1]

    diff = stash.s[-1] - x
    loss = float(np.mean(np.sum(diff.real**2 + diff.imag**2, axis=0)))

    g_beta = np.zeros(depth)
    g_a = np.zeros(depth)
    g_b = np.zeros(depth)
    a_h = hermitian_transpose(model.a_mat)
    g_h = hermitian_transpose(model.gradient_matrix())

    c_s = diff / count  # dL/d conj(s_{T+1})
    for t in range(depth, 0, -1):
        d_dr, d_drc, d_dlam = stash.eta_grads[t - 1]
        u, e, h = stash.u[t - 1], stash.e[t - 1], stash.h[t - 1]

        # through the shrinkage: s_{t+1} = eta(r_t; lam_t)
        c_r = np.conj(c_s) * d_drc + c_s * np.conj(d_dr)
        d_loss_d_lam = 2.0 * np.sum(
            (np.conj(c_s) * d_dlam).real, axis=0
        )  # per column

        # lam_t = max(a_t + b_t rho_t, floor); clamped columns pass nothing
        lam_gate = np.where(stash.lam_active[t - 1], d_loss_d_lam, 0.0)
        g_a[t - 1] = np.sum(lam_gate)
        g_b[t - 1] = float(np.dot(lam_gate, stash.rho[t - 1]))
        c_e = (params.b[t - 1] / model.gram_trace) * lam_gate[None, :] * e

        # r_t = s_t + beta_t h_t
        g_beta[t - 1] = 2.0 * float(np.sum((np.conj(c_r) * h).real))
        c_h = params.beta[t - 1] * c_r

        # h_t = G v with v = conj(e) p + e q, p = df/dzbar(u), q = dfbar/dzbar(u)
        c_v = g_h @ c_h
        p = model.f.d_f_dzc(u)
        q = model.f.d_fconj_dzc(u)
        c_e += np.conj(c_v) * p + c_v * np.conj(q)
        h20 = model.f.d2_dz2(u)
        h11 = model.f.d2_dzdzc(u)
        h02 = model.f.d2_dzc2(u)
        c_u = np.conj(c_v) * (np.conj(e) * h02 + e * np.conj(h20)) + c_v * (
            e * np.conj(h11) + np.conj(e) * h11
        )

        # e_t = y - f(u_t), then u_t = A s_t
        c_u += -np.conj(c_e) * p - c_e * q
        c_s = c_r + a_h @ c_u

    return loss, np.concatenate([g_beta, g_a, g_b])


def grad_fd(
    model: CtistaModel,
    params: CtistaParams,
    y: np.ndarray,
    x: np.ndarray,
    layers: Optional[int] = None,
    rel_step: float = FD_REL_STEP,
) -> tuple[float, np.ndarray]:
    """Central finite-difference gradient over the 3*depth active scalars.

    The batch is held fixed across all evaluations (common random numbers),
    with per-coordinate step h_i = rel_step * max(1, |theta_i|).
    """
    y, x = _check_batch(model, y, x)
    depth = _resolve_depth(model, params, layers)
    theta = params.to_vector(depth)
    grad = np.empty(theta.size)
    for i in range(theta.size):
        h = rel_step * max(1.0, abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += h
        dn[i] -= h
        loss_up = batch_loss(model, params.with_vector(up, depth), y, x, depth)
        loss_dn = batch_loss(model, params.with_vector(dn, depth), y, x, depth)
        grad[i] = (loss_up - loss_dn) / (2.0 * h)
    return batch_loss(model, params, y, x, depth), grad


def verify_adjoint(
    model: CtistaModel,
    params: CtistaParams,
    y: np.ndarray,
    x: np.ndarray,
    layers: Optional[int] = None,
) -> float:
    """Worst relative disagreement between the adjoint and FD gradients."""
    _, g_adj = grad_adjoint(model, params, y, x, layers)
    _, g_fd = grad_fd(model, params, y, x, layers)
    scale = np.maximum(1.0, np.abs(g_fd))
    return float(np.max(np.abs(g_adj - g_fd) / scale))


# ---------------------------------------------------------------------------
# incremental training

@dataclass
class TrainReport:
    """Outcome of one training run."""

    params: CtistaParams
    losses: np.ndarray          # (depth, batches) per-step minibatch loss
    gradient_mode: str          # "adjoint" or "fd"
    adjoint_rel_err: Optional[float]  # probe disagreement, None when not probed
    generation_params: list = None  # snapshot after each generation (depth entries)


def incremental_train(
    model: CtistaModel,
    batch_fn: BatchFn,
    *,
    batches: int,
    lr: float,
    noise_var: Optional[float] = None,
    init: Optional[CtistaParams] = None,
    gradient: str = "auto",
    verify_tol: float = ADJOINT_TOL,
    freeze_trained: bool = False,
    progress: Optional[Callable[[int, int, float], None]] = None,
) -> TrainReport:
    """Layer-by-layer training of the 3T scalars.

    ``batch_fn(generation, step)`` must return a fresh (x, y) column batch;
    generations are 1-based and steps 0-based so the caller can derive
    disjoint RNG streams.  ``gradient`` is "auto" (probe the adjoint against
    finite differences, fall back on disagreement), "adjoint" (probe and
    raise on disagreement) or "fd".  ``freeze_trained`` restricts generation
    t to its own 3 scalars instead of re-optimizing all 3t (ablation).
    """
    if gradient not in ("auto", "adjoint", "fd"):
        raise ValueError("gradient must be 'auto', 'adjoint' or 'fd'")
    if batches < 0 or lr <= 0:
        raise ValueError("need batches >= 0 and lr > 0")
    params = (init or CtistaParams.initial(model.depth, noise_var)).copy()
    if params.depth != model.depth:
        raise ValueError("initial parameters do not match the model depth")
    depth = model.depth

    mode = gradient
    rel_err = None
    if batches > 0 and gradient in ("auto", "adjoint"):
        if model.f.has_second_derivatives:
            probe_x, probe_y = batch_fn(1, 0)
            rel_err = verify_adjoint(
                model, params, probe_y, probe_x, min(2, depth)
            )
            mode = "adjoint" if rel_err <= verify_tol else "fd"
        else:
            mode = "fd"
        if gradient == "adjoint" and mode != "adjoint":
            raise ValueError(
                f"adjoint gradient failed verification (rel err {rel_err})"
            )

    grad_of = grad_adjoint if mode == "adjoint" else grad_fd
    losses = np.full((depth, batches), np.nan)
    snapshots = []
    for t in range(1, depth + 1):
        if freeze_trained:
            pick = np.array([t - 1, t + t - 1, 2 * t + t - 1])
        else:
            pick = np.arange(3 * t)
        state = AdamState.zeros(pick.size)
        for k in range(batches):
            x, y = batch_fn(t, k)
            loss, grad = grad_of(model, params, y, x, t)
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(
                    f"training loss/gradient became non-finite at generation {t}", t
                )
            losses[t - 1, k] = loss
            theta = params.to_vector(t)
            theta[pick] = adam_step(state, theta[pick], grad[pick], lr)
            params = params.with_vector(theta, t)
            if progress is not None and (k % 100 == 0 or k == batches - 1):
                progress(t, k, loss)
        snapshots.append(params.copy())
    return TrainReport(
        params=params,
        losses=losses,
        gradient_mode=mode,
        adjoint_rel_err=rel_err,
        generation_params=snapshots,
    )


def train_scenario(sc, *, gradient: str = "auto", progress=None) -> TrainReport:
    """Train a realized scenario with its own hyperparameters and RNG streams.

    Minibatch (generation, step) draws from the scenario's training stream,
    disjoint from matrix, calibration and evaluation streams; the noise level
    is the scenario's calibrated variance.
    """
    from .scenarios import STREAM_TRAIN, calibrate_noise, generate_batch, initial_params

    cfg = sc.cfg
    sigma2 = calibrate_noise(sc)

    def batch_fn(gen: int, step: int):
        rng = sc.rng(STREAM_TRAIN, gen, step)
        batch = generate_batch(sc, cfg.train_l, rng, sigma2)
        return batch.x, batch.y

    return incremental_train(
        sc.model,
        batch_fn,
        batches=cfg.train_k,
        lr=cfg.train_xi,
        init=initial_params(sc),
        gradient=gradient,
        progress=progress,
    )


# ---------------------------------------------------------------------------
# parameter files

PARAMS_VERSION = 1


def save_params(
    path: str,
    params: CtistaParams,
    *,
    scenario_digest: str = "",
    seed: int = 0,
) -> None:
    """Write trained scalars to JSON with the fixed key set."""
    payload = {
        "version": PARAMS_VERSION,
        "T": params.depth,
        "beta": [float(v) for v in params.beta],
        "a": [float(v) for v in params.a],
        "b": [float(v) for v in params.b],
        "scenario_digest": scenario_digest,
        "seed": int(seed),
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_params(
    path: str,
    *,
    expect_depth: Optional[int] = None,
    expect_digest: Optional[str] = None,
) -> tuple[CtistaParams, dict]:
    """Read a parameter file back, validating version, depth and finiteness."""
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != PARAMS_VERSION:
        raise ConfigError(f"unsupported parameter file version {payload.get('version')!r}")
    try:
        depth = int(payload["T"])
        beta = np.asarray(payload["beta"], dtype=np.float64)
        a = np.asarray(payload["a"], dtype=np.float64)
        b = np.asarray(payload["b"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed parameter file: {exc}") from exc
    if not (beta.shape == a.shape == b.shape == (depth,)):
        raise ConfigError("parameter arrays do not match the declared layer count")
    if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ConfigError("parameter file contains non-finite values")
    if expect_depth is not None and depth != expect_depth:
        raise ConfigError(f"parameter depth {depth} does not match the model ({expect_depth})")
    if expect_digest is not None and payload.get("scenario_digest") not in ("", expect_digest):
        raise ConfigError("parameter file was trained on a different scenario")
    return CtistaParams(beta=beta, a=a, b=b), payload
