"""Generative experiment descriptions, SNR/PAPR calibration, and metrics.

A ScenarioConfig is the serializable description of one experiment (source
prior, matrix ensemble, nonlinearity, noise, layer count, training
hyperparameters, master seed).  ``realize`` draws the one fixed system
matrix, computes the clipping level and transmit power, and returns a
Scenario holding the ready-to-run model.  The three built-in kinds:

    cs-sparse      Gaussian-Bernoulli source, CN(0, 1/m) matrix, identity f,
                   fixed noise variance, complex soft shrinkage.
    psk8-under     uniform 8-PSK source, CN(0, 1) matrix, identity f, noise
                   set by SNR, constellation mmse shrinkage.
    clipped-ofdm   uniform 16-QAM source, inverse-DFT matrix, amplitude
                   clipping at a target PAPR, noise set by SNR, mmse
                   shrinkage.

RNG discipline: every consumer derives its generator from the master seed
with a dedicated stream id, so the matrix draw, power calibration, training
and evaluation never share a stream.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError
from .nonlinearity import ComponentwiseMap, clip_map, identity_map
from .numerics import idft_matrix, rng_stream, sample_cgaussian
from .recovery import CtistaModel, CtistaParams
from .shrinkage import Constellation, ShrinkageFn, constellation_from_name, hard_decision

# stream ids carved out of the master seed (train/eval disjoint by construction)
STREAM_MATRIX = 0
STREAM_CALIBRATION = 1
STREAM_TRAIN = 2
STREAM_EVAL = 3

CALIBRATION_BLOCKS = 10_000

SCENARIO_KINDS = ("cs-sparse", "psk8-under", "clipped-ofdm")
MATRIX_KINDS = ("cn-unit-over-m", "cn-unit", "idft")


@dataclass(frozen=True)
class ScenarioConfig:
    """Serializable description of one experiment."""

    kind: str
    n: int
    m: int
    depth: int
    seed: int
    # source prior: (p, sigma_x2) for the sparse kind, constellation otherwise
    p: Optional[float] = None
    sigma_x2: Optional[float] = None
    constellation: Optional[str] = None
    matrix: str = "cn-unit-over-m"
    nonlinearity: str = "identity"
    papr_db: Optional[float] = None
    # noise: exactly one of a fixed variance or an SNR in dB
    sigma2: Optional[float] = None
    snr_db: Optional[float] = None
    # incremental-training hyperparameters
    train_k: int = 500
    train_l: int = 200
    train_xi: float = 5e-4
    trials: int = 1000

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.matrix not in MATRIX_KINDS:
            raise ConfigError(f"unknown matrix ensemble {self.matrix!r}")
        if not (0 < self.m <= self.n):
            raise ConfigError(f"need 0 < m <= n, got (n, m) = ({self.n}, {self.m})")
        if self.nonlinearity not in ("identity", "clip"):
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.nonlinearity == "clip" and self.papr_db is None:
            raise ConfigError("clip nonlinearity needs papr_db")
        if (self.sigma2 is None) == (self.snr_db is None):
            raise ConfigError("specify exactly one of sigma2 or snr_db")
        if self.kind == "cs-sparse":
            if self.p is None or self.sigma_x2 is None:
                raise ConfigError("cs-sparse needs p and sigma_x2")
            if not 0 < self.p <= 1:
                raise ConfigError("p must be in (0, 1]")
            if not self.sigma_x2 > 0:
                raise ConfigError("sigma_x2 must be > 0")
        else:
            if self.constellation is None:
                raise ConfigError(f"{self.kind} needs a constellation")
        if self.matrix == "idft" and self.m != self.n:
            raise ConfigError("idft ensemble requires m == n")
        if self.depth < 1 or self.train_k < 0 or self.train_l < 1:
            raise ConfigError("invalid depth / training sizes")

    def digest(self) -> str:
        """Content hash of the scenario identity (stable key order).

        The evaluation trial count is excluded: parameters trained for a
        scenario stay valid when the number of evaluation trials changes.
        """
        payload = asdict(self)
        payload.pop("trials")
        encoded = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(encoded).hexdigest()[:16]


def cs_sparse_config(**overrides) -> ScenarioConfig:
    """Sparse complex recovery at the reference scale."""
    base = dict(
        kind="cs-sparse", n=300, m=150, depth=12, seed=1234,
        p=0.1, sigma_x2=1.0, matrix="cn-unit-over-m",
        sigma2=0.02**2, train_k=1000, train_l=200, train_xi=5e-4,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def psk8_config(**overrides) -> ScenarioConfig:
    """Underdetermined 8-PSK detection at the reference scale."""
    base = dict(
        kind="psk8-under", n=200, m=160, depth=10, seed=1234,
        constellation="8psk", matrix="cn-unit", snr_db=20.0,
        train_k=500, train_l=200, train_xi=5e-4,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def clipped_ofdm_config(papr_db: float = 3.0, **overrides) -> ScenarioConfig:
    """Clipped 16-QAM multicarrier detection at the reference scale."""
    base = dict(
        kind="clipped-ofdm", n=128, m=128, depth=10, seed=1234,
        constellation="qam16", matrix="idft",
        nonlinearity="clip", papr_db=papr_db, snr_db=17.5,
        train_k=500, train_l=200, train_xi=5e-4,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@dataclass(frozen=True)
class Scenario:
    """A realized experiment: fixed matrix, nonlinearity, shrinkage, power."""

    cfg: ScenarioConfig
    model: CtistaModel
    constellation: Optional[Constellation]
    clip_alpha: Optional[float]
    tx_power: float  # E ||f(Ax)||^2 for SNR calibration

    @property
    def a_mat(self) -> np.ndarray:
        return self.model.a_mat

    @property
    def f(self) -> ComponentwiseMap:
        return self.model.f

    def rng(self, stream: int, *path: int) -> np.random.Generator:
        return rng_stream(self.cfg.seed, stream, *path)


@dataclass
class InstanceBatch:
    """L drawn instances sharing one system: columns of X and Y = f(AX) + W."""

    x: np.ndarray
    y: np.ndarray
    sigma2: float


def sample_bg_source(n: int, p: float, sigma_x2: float, rng: np.random.Generator):
    """Gaussian-Bernoulli source: zero w.p. 1-p, else CN(0, sigma_x2)."""
    if not 0 < p <= 1:
        raise ConfigError("p must be in (0, 1]")
    if not sigma_x2 > 0:
        raise ConfigError("sigma_x2 must be > 0")
    mask = rng.random(n) < p
    values = sample_cgaussian(0.0, sigma_x2, rng, n)
    return np.where(mask, values, 0.0 + 0.0j)


def sample_const_source(n: int, constellation: Constellation, rng: np.random.Generator):
    """Uniform i.i.d. draw from a constellation."""
    idx = rng.integers(0, len(constellation), size=n)
    return constellation.points[idx]


def sample_matrix(kind: str, m: int, n: int, rng: np.random.Generator):
    """Draw (or construct) the system matrix for one experiment."""
    if kind == "cn-unit-over-m":
        return sample_cgaussian(0.0, 1.0 / m, rng, m * n).reshape(m, n)
    if kind == "cn-unit":
        return sample_cgaussian(0.0, 1.0, rng, m * n).reshape(m, n)
    if kind == "idft":
        if m != n:
            raise ConfigError("idft ensemble requires m == n")
        return idft_matrix(n)
    raise ConfigError(f"unknown matrix ensemble {kind!r}")


def clip_level_from_papr(papr_db: float, constellation: Constellation, n: int) -> float:
    """Clipping level for a target peak-to-average ratio.

    alpha = sqrt(P_avg * 10^(papr_db/10)) with P_avg the average per-sample
    power of the unclipped time-domain block, which by unitarity of the DFT
    equals the constellation's average power.  papr_db = +inf means no
    clipping.
    """
    if math.isinf(papr_db) and papr_db > 0:
        return math.inf
    return math.sqrt(constellation.avg_power * 10.0 ** (papr_db / 10.0))


def papr_of(time_signal: np.ndarray, p_avg: float) -> float:
    """Peak power of a block over the average per-sample power, in dB."""
    if not p_avg > 0:
        raise ValueError("p_avg must be > 0")
    peak = float(np.max(np.abs(time_signal) ** 2))
    return 10.0 * math.log10(peak / p_avg)


def _source_sampler(sc: Scenario):
    cfg = sc.cfg
    if cfg.kind == "cs-sparse":
        return lambda rng, count: sample_bg_source(count, cfg.p, cfg.sigma_x2, rng)
    return lambda rng, count: sample_const_source(count, sc.constellation, rng)


def _tx_power(cfg: ScenarioConfig, a_mat, f, constellation) -> float:
    """E ||f(Ax)||^2, analytic for the linear i.i.d. ensembles, Monte-Carlo
    over CALIBRATION_BLOCKS blocks for the clipped case."""
    if cfg.nonlinearity == "identity":
        if cfg.kind == "cs-sparse":
            e_x2 = cfg.p * cfg.sigma_x2
            var_a = 1.0 / cfg.m if cfg.matrix == "cn-unit-over-m" else 1.0
        else:
            e_x2 = constellation.avg_power
            var_a = 1.0 if cfg.matrix == "cn-unit" else 1.0 / cfg.m
        if cfg.matrix == "idft":
            return cfg.n * e_x2  # unitary matrix: E||Fx||^2 = E||x||^2
        return cfg.m * cfg.n * var_a * e_x2
    rng = rng_stream(cfg.seed, STREAM_CALIBRATION)
    idx = rng.integers(0, len(constellation), size=(cfg.n, CALIBRATION_BLOCKS))
    x = constellation.points[idx]
    tx = f.eval(a_mat @ x)
    return float(np.mean(np.sum(np.abs(tx) ** 2, axis=0)))


def realize(cfg: ScenarioConfig) -> Scenario:
    """Draw the fixed system matrix and assemble the ready-to-run model."""
    rng = rng_stream(cfg.seed, STREAM_MATRIX)
    a_mat = sample_matrix(cfg.matrix, cfg.m, cfg.n, rng)
    constellation = (
        constellation_from_name(cfg.constellation) if cfg.constellation else None
    )
    clip_alpha = None
    if cfg.nonlinearity == "clip":
        clip_alpha = clip_level_from_papr(cfg.papr_db, constellation, cfg.n)
        f = identity_map() if math.isinf(clip_alpha) else clip_map(clip_alpha)
    else:
        f = identity_map()
    eta = (
        ShrinkageFn.complex_soft()
        if cfg.kind == "cs-sparse"
        else ShrinkageFn.mmse(constellation)
    )
    model = CtistaModel.build(a_mat, f, eta, cfg.depth)
    tx_power = _tx_power(cfg, a_mat, f, constellation)
    return Scenario(
        cfg=cfg,
        model=model,
        constellation=constellation,
        clip_alpha=clip_alpha,
        tx_power=tx_power,
    )


def calibrate_noise(sc: Scenario, snr_db: Optional[float] = None) -> float:
    """Per-component noise variance for the scenario's noise setting.

    A fixed sigma2 passes through; an SNR (given or from the config) maps to
    sigma2 = E||f(Ax)||^2 / (m * 10^(SNR/10)).
    """
    cfg = sc.cfg
    if snr_db is None:
        if cfg.sigma2 is not None:
            return cfg.sigma2
        snr_db = cfg.snr_db
    return sc.tx_power / (cfg.m * 10.0 ** (snr_db / 10.0))


def input_error_floor(sc: Scenario) -> float:
    """Per-component error variance of the network input W y.

    The shrinkage step models its input as truth plus Gaussian error, so
    the variance-estimate floor a_t should start on the scale of that
    error, which lives in the signal domain rather than the observation
    domain.  For a symbol constellation recovered through W = A^+ the
    input misses the nullspace part of x and carries filtered noise:

        (1 - m/n) * E|x_i|^2  +  sigma2 * ||W||_F^2 / n.

    With a unitary W (m = n) this reduces to sigma2 exactly.  The sparse
    source has no constellation; its shrinkage thresholds rather than
    averages, and the observation noise variance is the natural starting
    threshold, so sigma2 is returned unchanged.
    """
    sigma2 = calibrate_noise(sc)
    if sc.constellation is None:
        return sigma2
    cfg = sc.cfg
    nullspace = (1.0 - cfg.m / cfg.n) * sc.constellation.avg_power
    filtered = sigma2 * float(np.sum(np.abs(sc.model.w_mat) ** 2)) / cfg.n
    return nullspace + filtered


def initial_params(sc: Scenario) -> CtistaParams:
    """Untrained per-layer scalars with the floor matched to the scenario."""
    return CtistaParams.initial(sc.cfg.depth, input_error_floor(sc))


def generate_batch(
    sc: Scenario,
    count: int,
    rng: np.random.Generator,
    sigma2: Optional[float] = None,
) -> InstanceBatch:
    """Draw ``count`` instances (x, y = f(Ax) + w) as matrix columns."""
    if count < 1:
        raise ConfigError("batch size must be >= 1")
    cfg = sc.cfg
    if sigma2 is None:
        sigma2 = calibrate_noise(sc)
    sampler = _source_sampler(sc)
    x = sampler(rng, cfg.n * count).reshape(cfg.n, count)
    w = sample_cgaussian(0.0, sigma2, rng, cfg.m * count).reshape(cfg.m, count)
    y = sc.f.eval(sc.a_mat @ x) + w
    return InstanceBatch(x=x, y=y, sigma2=float(sigma2))


def generate_instance(
    sc: Scenario, rng: np.random.Generator, sigma2: Optional[float] = None
):
    """Single (x, y) draw."""
    batch = generate_batch(sc, 1, rng, sigma2)
    return batch.x[:, 0], batch.y[:, 0]


# ---------------------------------------------------------------------------
# metrics

NMSE_FLOOR_DB = -150.0


class NmseAccumulator:
    """Streaming mean of per-trial ratios ||xhat - x||^2 / ||x||^2.

    Zero-norm truths are skipped and counted.  The dB value is taken of the
    mean ratio, with a floor for exact recovery.
    """

    def __init__(self):
        self.sum_ratio = 0.0
        self.sum_ratio_sq = 0.0
        self.count = 0
        self.skipped = 0

    def add(self, xhat: np.ndarray, x: np.ndarray) -> None:
        xhat = np.atleast_2d(np.asarray(xhat).T).T
        x = np.atleast_2d(np.asarray(x).T).T
        err = np.sum(np.abs(xhat - x) ** 2, axis=0)
        norm = np.sum(np.abs(x) ** 2, axis=0)
        good = norm > 0
        self.skipped += int(np.sum(~good))
        ratios = err[good] / norm[good]
        self.sum_ratio += float(np.sum(ratios))
        self.sum_ratio_sq += float(np.sum(ratios**2))
        self.count += int(ratios.size)

    @property
    def mean_ratio(self) -> float:
        if self.count == 0:
            raise ValueError("no trials accumulated")
        return self.sum_ratio / self.count

    def db(self) -> float:
        mean = self.mean_ratio
        if mean <= 10.0 ** (NMSE_FLOOR_DB / 10.0):
            return NMSE_FLOOR_DB
        return 10.0 * math.log10(mean)

    def stderr_db(self) -> float:
        """Delta-method standard error of the dB value."""
        if self.count < 2:
            return float("nan")
        var = max(self.sum_ratio_sq / self.count - self.mean_ratio**2, 0.0)
        se_mean = math.sqrt(var / self.count)
        if self.mean_ratio <= 0:
            return float("nan")
        return 10.0 / math.log(10.0) * se_mean / self.mean_ratio


def nmse(xhat: np.ndarray, x: np.ndarray) -> float:
    """NMSE in dB over trial columns (or one trial)."""
    acc = NmseAccumulator()
    acc.add(xhat, x)
    return acc.db()


def mse(xhat: np.ndarray, x: np.ndarray) -> float:
    """Per-symbol mean squared error."""
    xhat = np.asarray(xhat)
    x = np.asarray(x)
    return float(np.mean(np.abs(xhat - x) ** 2))


def ser(xhat: np.ndarray, x: np.ndarray, constellation: Constellation) -> float:
    """Symbol error rate of nearest-point decisions against the true symbols."""
    x = np.asarray(x)
    if not np.all(np.isin(x.ravel(), constellation.points)):
        raise ValueError("true symbols must be constellation points")
    decided = hard_decision(xhat, constellation)
    return float(np.mean(decided != x))


def _scenario_with(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    return replace(cfg, **changes)
