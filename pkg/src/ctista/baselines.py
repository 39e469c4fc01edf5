"""Reference detectors: real-valued AMP on the widened system, and the
plain DFT hard-decision receiver for clipped multicarrier blocks."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergenceError
from .numerics import hermitian_transpose, idft_matrix, unwiden_vec, widen
from .shrinkage import Constellation, hard_decision

# tau^2 guard against a residual that collapses to exactly zero
_TAU2_FLOOR = 1e-18


@dataclass(frozen=True)
class AmpConfig:
    """Iteration budget and the Bernoulli-Gaussian prior of a real system.

    ``nonzero_var`` is the per-component variance of the nonzero (Gaussian)
    coefficients; ``noise_var`` is carried for provenance, the iteration
    itself tracks the effective noise empirically from the residual.

    ``denoiser`` selects the per-component estimator: ``"soft"`` is the
    classic soft-threshold update with threshold ``threshold_scale * tau``
    (the form the published -22 dB reference curve corresponds to);
    ``"bayes"`` is the posterior mean under the Bernoulli-Gaussian prior,
    which converges several dB lower on the same ensemble.
    """

    iterations: int
    p: float
    nonzero_var: float
    noise_var: float = 0.0
    denoiser: str = "soft"
    threshold_scale: float = 1.2

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError("sparsity p must be in (0, 1]")
        if self.nonzero_var < 0 or self.noise_var < 0:
            raise ValueError("variances must be >= 0")
        if self.iterations < 0:
            raise ValueError("iteration count must be >= 0")
        if self.denoiser not in ("soft", "bayes"):
            raise ValueError(f"unknown denoiser {self.denoiser!r}")
        if self.threshold_scale <= 0:
            raise ValueError("threshold_scale must be > 0")


@dataclass
class AmpTrace:
    tau2: np.ndarray        # (T,): empirical effective-noise variance per iteration
    estimates: np.ndarray   # (T, n): signal estimate after each iteration


def _bg_posterior(s, tau2, p, v):
    """Posterior mean and its derivative for the real Bernoulli-Gaussian prior.

    Spike-and-slab responsibility times the Wiener gain:
        xhat = rho(s) * v/(v+tau2) * s
    with rho the posterior probability of the slab.  The derivative is the
    analytic d xhat / d s used in the Onsager term.
    """
    nu = v / (v + tau2)
    gamma = v / (2.0 * tau2 * (v + tau2))
    odds = (1.0 - p) / p * np.sqrt((v + tau2) / tau2) * np.exp(-gamma * s**2)
    rho = 1.0 / (1.0 + odds)
    xhat = rho * nu * s
    deriv = nu * rho * (1.0 + 2.0 * gamma * s**2 * (1.0 - rho))
    return xhat, deriv


def amp_real(
    a_mat: np.ndarray, y: np.ndarray, cfg: AmpConfig
) -> tuple[np.ndarray, AmpTrace]:
    """Approximate message passing for a real Bernoulli-Gaussian source.

    Expects a sensing matrix with i.i.d. zero-mean entries of variance 1/m
    (unit expected column norm); off-convention scalings are normalized
    internally and undone on output.  The effective-noise variance tau^2 is
    tracked empirically as ||z||^2 / m, and the Onsager reaction term uses
    the mean derivative of whichever denoiser ``cfg`` selects.
    """
    a_mat = np.asarray(a_mat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    m, n = a_mat.shape
    if y.shape != (m,):
        raise ValueError(f"observation must have shape ({m},), got {y.shape}")

    # rescale to the unit-column-norm convention: y = (A/c)(c x) + w
    col_sq = float(np.mean(np.sum(a_mat**2, axis=0)))
    c = np.sqrt(col_sq) if abs(col_sq - 1.0) > 1e-6 else 1.0
    a_u = a_mat / c
    v = cfg.nonzero_var * c**2

    x = np.zeros(n)
    z = y.copy()
    tau2_all = np.empty(cfg.iterations)
    est_all = np.empty((cfg.iterations, n))
    for t in range(1, cfg.iterations + 1):
        tau2 = max(float(np.sum(z**2)) / m, _TAU2_FLOOR)
        s = x + a_u.T @ z
        if cfg.denoiser == "bayes":
            x, deriv = _bg_posterior(s, tau2, cfg.p, v)
            deriv_mean = float(np.mean(deriv))
        else:
            theta = cfg.threshold_scale * np.sqrt(tau2)
            active = np.abs(s) > theta
            x = np.where(active, s - np.sign(s) * theta, 0.0)
            deriv_mean = float(np.mean(active))
        z = y - a_u @ x + (n / m) * deriv_mean * z
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise DivergenceError("AMP iterate became non-finite", t)
        tau2_all[t - 1] = tau2
        est_all[t - 1] = x / c
    return x / c, AmpTrace(tau2=tau2_all, estimates=est_all)


def widened_amp_recover(
    a_mat: np.ndarray, y: np.ndarray, cfg: AmpConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Run real AMP on the widened double-size system of a complex one.

    ``cfg`` describes the complex source: p is kept and the per-component
    real variance becomes nonzero_var / 2 (likewise for the noise).
    Returns the complex estimate and the (T, n) complex per-iteration
    estimates reassembled from the widened halves.
    """
    a_wide, y_wide = widen(a_mat, y)
    cfg_real = replace(
        cfg, nonzero_var=cfg.nonzero_var / 2.0, noise_var=cfg.noise_var / 2.0
    )
    x_wide, trace = amp_real(a_wide, y_wide, cfg_real)
    est = np.stack([unwiden_vec(row) for row in trace.estimates], axis=0)
    return unwiden_vec(x_wide), est


def dft_receiver(
    y: np.ndarray, n: int, constellation: Constellation
) -> tuple[np.ndarray, np.ndarray]:
    """Forward-DFT demodulation of a time-domain block plus hard decisions.

    ``soft`` is F^H y with F the unitary inverse-DFT matrix, so with no
    clipping and no noise it returns the sent symbols exactly; ``hard`` is
    the per-component nearest constellation point.  Accepts (n,) or (n, L).
    """
    y = np.asarray(y, dtype=np.complex128)
    if y.shape[0] != n:
        raise ValueError(f"block length {y.shape[0]} does not match n={n}")
    soft = hermitian_transpose(idft_matrix(n)) @ y
    return soft, hard_decision(soft, constellation)
