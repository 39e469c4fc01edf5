"""Trainable unrolled recovery for complex-field observation models.

The estimator runs a fixed number of gradient-plus-shrinkage layers on
y = f(Ax) + w, where f acts componentwise (identity or amplitude clipping)
and the gradient step is written in Wirtinger form so everything stays in
the complex field.  Three real scalars per layer (step size and two error
variance coefficients) are fitted layer by layer on synthetic draws.
"""

from .errors import (
    ConfigError,
    CtistaError,
    DivergenceError,
    RankDeficientMatrixError,
)
from .numerics import (
    hermitian_transpose,
    idft_matrix,
    pseudo_inverse,
    rng_stream,
    sample_cgaussian,
    trace_gram,
    unwiden_vec,
    widen,
    widen_vec,
)
from .nonlinearity import (
    ComponentwiseMap,
    analytic_map,
    central_wirtinger,
    clip_map,
    grad_lms,
    gradient_descent,
    identity_map,
    lms_objective,
    wirtinger_fd,
)
from .shrinkage import (
    Constellation,
    ShrinkageFn,
    constellation_from_name,
    hard_decision,
    make_psk,
    make_qam16,
    mmse_shrink,
    soft_complex,
)
from .recovery import (
    LAMBDA_FLOOR,
    CtistaModel,
    CtistaParams,
    RecoveryTrace,
    ctista_batch,
    ctista_forward,
    zf_detect,
)
from .baselines import AmpConfig, AmpTrace, amp_real, dft_receiver, widened_amp_recover
from .scenarios import (
    STREAM_CALIBRATION,
    STREAM_EVAL,
    STREAM_MATRIX,
    STREAM_TRAIN,
    InstanceBatch,
    NmseAccumulator,
    Scenario,
    ScenarioConfig,
    calibrate_noise,
    clip_level_from_papr,
    clipped_ofdm_config,
    cs_sparse_config,
    generate_batch,
    generate_instance,
    initial_params,
    input_error_floor,
    mse,
    nmse,
    papr_of,
    psk8_config,
    realize,
    sample_bg_source,
    sample_const_source,
    sample_matrix,
    ser,
)
from .training import (
    AdamState,
    TrainReport,
    adam_step,
    batch_loss,
    grad_adjoint,
    grad_fd,
    incremental_train,
    load_params,
    save_params,
    train_scenario,
    verify_adjoint,
)

__version__ = "1.0.0"

__all__ = [
    "STREAM_CALIBRATION",
    "STREAM_EVAL",
    "STREAM_MATRIX",
    "STREAM_TRAIN",
    "AdamState",
    "AmpConfig",
    "AmpTrace",
    "ComponentwiseMap",
    "ConfigError",
    "Constellation",
    "CtistaError",
    "CtistaModel",
    "CtistaParams",
    "DivergenceError",
    "InstanceBatch",
    "LAMBDA_FLOOR",
    "NmseAccumulator",
    "RankDeficientMatrixError",
    "RecoveryTrace",
    "Scenario",
    "ScenarioConfig",
    "ShrinkageFn",
    "TrainReport",
    "adam_step",
    "amp_real",
    "analytic_map",
    "batch_loss",
    "calibrate_noise",
    "central_wirtinger",
    "clip_level_from_papr",
    "clip_map",
    "clipped_ofdm_config",
    "constellation_from_name",
    "cs_sparse_config",
    "ctista_batch",
    "ctista_forward",
    "dft_receiver",
    "generate_batch",
    "generate_instance",
    "initial_params",
    "input_error_floor",
    "grad_adjoint",
    "grad_fd",
    "grad_lms",
    "gradient_descent",
    "hard_decision",
    "hermitian_transpose",
    "identity_map",
    "idft_matrix",
    "incremental_train",
    "lms_objective",
    "load_params",
    "make_psk",
    "make_qam16",
    "mmse_shrink",
    "mse",
    "nmse",
    "papr_of",
    "pseudo_inverse",
    "psk8_config",
    "realize",
    "rng_stream",
    "sample_bg_source",
    "sample_cgaussian",
    "sample_const_source",
    "sample_matrix",
    "save_params",
    "ser",
    "soft_complex",
    "trace_gram",
    "train_scenario",
    "unwiden_vec",
    "verify_adjoint",
    "widen",
    "widen_vec",
    "widened_amp_recover",
    "zf_detect",
]
