import math

import numpy as np
import pytest

from ctista.errors import ConfigError
from ctista.numerics import idft_matrix, rng_stream
from ctista.scenarios import (
    NMSE_FLOOR_DB,
    STREAM_EVAL,
    STREAM_TRAIN,
    NmseAccumulator,
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
from ctista.shrinkage import constellation_from_name


class TestScenarioConfig:
    def test_factories_validate(self):
        assert cs_sparse_config().kind == "cs-sparse"
        assert psk8_config().kind == "psk8-under"
        assert clipped_ofdm_config(5.0).papr_db == 5.0

    def test_reference_scales(self):
        cs = cs_sparse_config()
        assert (cs.n, cs.m, cs.depth) == (300, 150, 12)
        assert cs.sigma2 == pytest.approx(0.0004)
        psk = psk8_config()
        assert (psk.n, psk.m, psk.depth) == (200, 160, 10)
        assert (psk.train_k, psk.train_l, psk.train_xi) == (500, 200, 5e-4)
        ofdm = clipped_ofdm_config()
        assert (ofdm.n, ofdm.m, ofdm.depth) == (128, 128, 10)
        assert ofdm.constellation == "qam16"

    def test_rejects_unknown_kind(self):
        with pytest.raises(ConfigError):
            cs_sparse_config(kind="mystery")

    def test_rejects_m_larger_than_n(self):
        with pytest.raises(ConfigError):
            cs_sparse_config(n=10, m=11)

    def test_noise_spec_exactly_one(self):
        with pytest.raises(ConfigError):
            cs_sparse_config(sigma2=None, snr_db=None)
        with pytest.raises(ConfigError):
            cs_sparse_config(snr_db=10.0)  # factory already sets sigma2

    def test_sparse_kind_needs_prior(self):
        with pytest.raises(ConfigError):
            cs_sparse_config(p=None)
        with pytest.raises(ConfigError):
            cs_sparse_config(p=1.5)

    def test_clip_needs_papr(self):
        with pytest.raises(ConfigError):
            clipped_ofdm_config(papr_db=None)

    def test_idft_needs_square(self):
        with pytest.raises(ConfigError):
            clipped_ofdm_config(n=128, m=64)

    def test_constellation_required_for_detection_kinds(self):
        with pytest.raises(ConfigError):
            psk8_config(constellation=None)

    def test_digest_stable_and_sensitive(self):
        a = cs_sparse_config()
        b = cs_sparse_config()
        c = cs_sparse_config(seed=9)
        assert a.digest() == b.digest()
        assert a.digest() != c.digest()
        assert len(a.digest()) == 16
        int(a.digest(), 16)  # hex


class TestSources:
    def test_dense_limit_is_gaussian(self):
        rng = rng_stream(31, 0)
        x = sample_bg_source(20000, 1.0, 2.0, rng)
        assert np.all(x != 0)
        assert np.mean(np.abs(x) ** 2) == pytest.approx(2.0, rel=0.05)
        # circular symmetry: pseudo-variance vanishes
        assert abs(np.mean(x**2)) < 0.05

    def test_sparsity_fraction(self):
        rng = rng_stream(31, 1)
        x = sample_bg_source(100_000, 0.1, 1.0, rng)
        frac = np.mean(x != 0)
        assert abs(frac - 0.1) < 0.005

    def test_nonzero_second_moment(self):
        rng = rng_stream(31, 2)
        x = sample_bg_source(100_000, 0.1, 1.0, rng)
        nz = x[x != 0]
        se = 1.0 / math.sqrt(nz.size)  # Var(|x|^2) = sigma_x2^2 = 1
        assert abs(np.mean(np.abs(nz) ** 2) - 1.0) < 3 * se

    def test_source_parameter_validation(self):
        rng = rng_stream(31, 3)
        with pytest.raises(ConfigError):
            sample_bg_source(10, 0.0, 1.0, rng)
        with pytest.raises(ConfigError):
            sample_bg_source(10, 0.5, 0.0, rng)

    def test_constellation_source_uniform(self):
        const = constellation_from_name("8psk")
        rng = rng_stream(31, 4)
        x = sample_const_source(100_000, const, rng)
        assert np.all(np.isin(x, const.points))
        for point in const.points:
            assert abs(np.mean(x == point) - 0.125) < 0.005


class TestMatrices:
    def test_idft_kind_is_the_unitary_matrix(self):
        rng = rng_stream(31, 5)
        assert np.array_equal(sample_matrix("idft", 128, 128, rng), idft_matrix(128))

    def test_entry_variance(self):
        m, n = 100, 100
        rng = rng_stream(31, 6)
        a = sample_matrix("cn-unit-over-m", m, n, rng)
        v = 1.0 / m
        assert abs(np.mean(np.abs(a) ** 2) - v) < 3 * v / math.sqrt(m * n)
        rng = rng_stream(31, 7)
        b = sample_matrix("cn-unit", m, n, rng)
        assert abs(np.mean(np.abs(b) ** 2) - 1.0) < 3 / math.sqrt(m * n)

    def test_distinct_streams_differ(self):
        a = sample_matrix("cn-unit", 8, 8, rng_stream(31, 8))
        b = sample_matrix("cn-unit", 8, 8, rng_stream(31, 9))
        assert not np.array_equal(a, b)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            sample_matrix("hadamard", 4, 4, rng_stream(31, 10))
        with pytest.raises(ConfigError):
            sample_matrix("idft", 4, 8, rng_stream(31, 11))


class TestClippingCalibration:
    def test_zero_papr_level(self):
        const = constellation_from_name("qam16")
        assert clip_level_from_papr(0.0, const, 128) == pytest.approx(math.sqrt(10.0))

    def test_three_db_level(self):
        const = constellation_from_name("qam16")
        alpha = clip_level_from_papr(3.0, const, 128)
        assert alpha == pytest.approx(math.sqrt(10.0 * 10.0**0.3))
        assert alpha == pytest.approx(4.4668359215, abs=1e-9)

    def test_infinite_papr_means_no_clipping(self):
        const = constellation_from_name("qam16")
        assert clip_level_from_papr(math.inf, const, 128) == math.inf
        sc = realize(clipped_ofdm_config(papr_db=math.inf))
        z = np.array([0.1 + 0.2j, 5.0 - 7.0j])
        assert np.array_equal(sc.f.eval(z), z)

    def test_clipped_blocks_respect_target(self):
        sc = realize(clipped_ofdm_config(papr_db=5.0))
        rng = sc.rng(STREAM_EVAL, 999)
        batch = generate_batch(sc, 50, rng, sigma2=0.0)
        tx = sc.f.eval(sc.a_mat @ batch.x)
        for col in range(tx.shape[1]):
            measured = papr_of(tx[:, col], sc.constellation.avg_power)
            assert measured <= 5.0 + 1e-9

    def test_papr_of_basics(self):
        flat = np.full(16, 2.0 + 0.0j)
        assert papr_of(flat, 4.0) == pytest.approx(0.0)
        one_up = flat.copy()
        one_up[3] *= 2.0
        assert papr_of(one_up, 4.0) == pytest.approx(20.0 * math.log10(2.0))
        with pytest.raises(ValueError):
            papr_of(flat, 0.0)

    def test_clipping_reduces_transmit_power(self):
        clipped = realize(clipped_ofdm_config(papr_db=3.0))
        p_avg = clipped.constellation.avg_power
        assert 0.5 * clipped.cfg.n * p_avg < clipped.tx_power < clipped.cfg.n * p_avg


class TestNoiseCalibration:
    def test_fixed_sigma2_passthrough(self):
        sc = realize(cs_sparse_config())
        assert calibrate_noise(sc) == pytest.approx(0.0004)

    def test_psk_zero_db_analytic(self):
        sc = realize(psk8_config(snr_db=0.0))
        # E||Ax||^2 = m n for unit-variance entries and unit-modulus symbols
        assert sc.tx_power == pytest.approx(sc.cfg.m * sc.cfg.n)
        assert calibrate_noise(sc) == pytest.approx(sc.cfg.n)

    def test_snr_limit(self):
        sc = realize(psk8_config(snr_db=20.0))
        assert calibrate_noise(sc, snr_db=300.0) < 1e-25
        assert calibrate_noise(sc, snr_db=10.0) > calibrate_noise(sc, snr_db=20.0)

    def test_round_trip_measured_snr(self):
        # generate at SNR 10 and measure the realized ratio
        target = 10.0
        sc = realize(psk8_config(n=100, m=80, depth=2, snr_db=target))
        sigma2 = calibrate_noise(sc)
        rng = sc.rng(STREAM_EVAL, 7)
        batch = generate_batch(sc, 10_000, rng, sigma2=sigma2)
        signal = sc.a_mat @ batch.x
        noise = batch.y - signal
        measured = 10.0 * math.log10(
            float(np.mean(np.sum(np.abs(signal) ** 2, axis=0)))
            / float(np.mean(np.sum(np.abs(noise) ** 2, axis=0)))
        )
        assert abs(measured - target) < 0.1


class TestInitialParams:
    def test_sparse_floor_is_noise_variance(self):
        sc = realize(cs_sparse_config())
        assert input_error_floor(sc) == pytest.approx(calibrate_noise(sc))

    def test_unitary_receiver_floor_is_noise_variance(self):
        # m = n with an orthonormal matrix: no nullspace loss, no gain
        sc = realize(clipped_ofdm_config(3.0))
        assert input_error_floor(sc) == pytest.approx(calibrate_noise(sc))

    def test_underdetermined_floor_matches_measured_input_error(self):
        sc = realize(psk8_config(n=120, m=96, depth=2, snr_db=20.0))
        floor = input_error_floor(sc)
        rng = sc.rng(STREAM_EVAL, 3)
        batch = generate_batch(sc, 2_000, rng)
        err = sc.model.w_mat @ batch.y - batch.x
        measured = float(np.mean(np.abs(err) ** 2))
        assert 0.5 * measured < floor < 2.0 * measured

    def test_params_carry_floor(self):
        sc = realize(psk8_config(n=30, m=24, depth=4))
        params = initial_params(sc)
        floor = input_error_floor(sc)
        assert params.a.shape == (4,)
        assert np.allclose(params.a, floor)
        assert np.allclose(params.b, 1.0)
        assert np.allclose(params.beta, 1.0)


class TestGeneration:
    def test_noiseless_identity_is_exact(self):
        sc = realize(cs_sparse_config(n=40, m=20, depth=3))
        rng = sc.rng(STREAM_EVAL, 0)
        batch = generate_batch(sc, 5, rng, sigma2=0.0)
        assert np.array_equal(batch.y, sc.a_mat @ batch.x)
        assert batch.x.shape == (40, 5)
        assert batch.y.shape == (20, 5)

    def test_instance_is_one_column(self):
        sc = realize(cs_sparse_config(n=40, m=20, depth=3))
        x, y = generate_instance(sc, sc.rng(STREAM_EVAL, 1))
        assert x.shape == (40,)
        assert y.shape == (20,)

    def test_determinism_and_stream_separation(self):
        sc = realize(cs_sparse_config(n=30, m=15, depth=3))
        b1 = generate_batch(sc, 4, sc.rng(STREAM_EVAL, 2, 0))
        b2 = generate_batch(sc, 4, sc.rng(STREAM_EVAL, 2, 0))
        b3 = generate_batch(sc, 4, sc.rng(STREAM_TRAIN, 2, 0))
        assert np.array_equal(b1.x, b2.x) and np.array_equal(b1.y, b2.y)
        assert not np.array_equal(b1.x, b3.x)

    def test_realized_noise_level(self):
        sc = realize(cs_sparse_config(n=50, m=25, depth=3, sigma2=0.09))
        batch = generate_batch(sc, 10_000, sc.rng(STREAM_EVAL, 3))
        w = batch.y - sc.a_mat @ batch.x
        per_comp = float(np.mean(np.abs(w) ** 2))
        se = 0.09 / math.sqrt(w.size)  # Var(|w|^2) = sigma^4
        assert abs(per_comp - 0.09) < 3 * se

    def test_unitary_matrix_preserves_energy(self):
        sc = realize(clipped_ofdm_config(papr_db=math.inf))
        batch = generate_batch(sc, 8, sc.rng(STREAM_EVAL, 4), sigma2=0.0)
        for col in range(8):
            assert np.sum(np.abs(batch.y[:, col]) ** 2) == pytest.approx(
                np.sum(np.abs(batch.x[:, col]) ** 2), rel=1e-10
            )

    def test_batch_size_validated(self):
        sc = realize(cs_sparse_config(n=30, m=15, depth=3))
        with pytest.raises(ConfigError):
            generate_batch(sc, 0, sc.rng(STREAM_EVAL, 5))

    def test_matrix_fixed_across_realizations(self):
        a1 = realize(cs_sparse_config(n=30, m=15, depth=3)).a_mat
        a2 = realize(cs_sparse_config(n=30, m=15, depth=3)).a_mat
        assert np.array_equal(a1, a2)


class TestMetrics:
    def test_exact_recovery_hits_floor(self):
        x = np.array([1.0 + 1.0j, 2.0 - 0.5j])
        assert nmse(x, x) == NMSE_FLOOR_DB
        assert mse(x, x) == 0.0

    def test_zero_estimate_is_zero_db(self):
        x = np.array([1.0 + 1.0j, 2.0 - 0.5j])
        assert nmse(np.zeros_like(x), x) == pytest.approx(0.0, abs=1e-12)

    def test_known_ratio(self):
        rng = rng_stream(31, 12)
        x = rng.normal(size=(8, 5)) + 1j * rng.normal(size=(8, 5))
        assert nmse(1.1 * x, x) == pytest.approx(-20.0, abs=1e-9)

    def test_accumulator_skips_zero_norm_truth(self):
        acc = NmseAccumulator()
        x = np.zeros((4, 3), dtype=np.complex128)
        x[:, 1] = 1.0
        xhat = x + 0.1
        acc.add(xhat, x)
        assert acc.count == 1
        assert acc.skipped == 2

    def test_accumulator_stderr(self):
        acc = NmseAccumulator()
        x = np.ones((4, 6), dtype=np.complex128)
        acc.add(1.1 * x, x)  # identical ratio every trial
        assert acc.stderr_db() == pytest.approx(0.0, abs=1e-12)
        single = NmseAccumulator()
        single.add(1.1 * np.ones(4), np.ones(4))
        assert math.isnan(single.stderr_db())
        with pytest.raises(ValueError):
            NmseAccumulator().db()

    def test_mse_per_symbol_convention(self):
        xhat = np.array([1.0 + 0.0j, 0.0 + 2.0j])
        assert mse(xhat, np.zeros(2, dtype=np.complex128)) == pytest.approx(2.5)

    def test_ser_basics(self):
        const = constellation_from_name("8psk")
        rng = rng_stream(31, 13)
        x = const.points[rng.integers(0, 8, 1000)]
        assert ser(x, x, const) == 0.0
        noisy = x + 0.05 * (rng.normal(size=1000) + 1j * rng.normal(size=1000))
        assert ser(noisy, x, const) < 0.01

    def test_ser_rotation_invariance(self):
        const = constellation_from_name("8psk")
        rng = rng_stream(31, 14)
        x = const.points[rng.integers(0, 8, 2000)]
        xhat = x + 0.3 * (rng.normal(size=2000) + 1j * rng.normal(size=2000))
        rot = np.exp(1j * np.pi / 4.0)
        base = ser(xhat, x, const)
        # rotating both arguments by a constellation symmetry leaves SER alone
        rotated_truth = const.points[
            np.argmin(np.abs((rot * x)[:, None] - const.points[None, :]), axis=1)
        ]
        assert ser(rot * xhat, rotated_truth, const) == pytest.approx(base, abs=2e-3)

    def test_ser_requires_constellation_truth(self):
        const = constellation_from_name("qam16")
        with pytest.raises(ValueError):
            ser(np.zeros(3, dtype=complex), np.array([0.5 + 0.5j] * 3), const)
