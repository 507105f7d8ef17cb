import numpy as np
import pytest

from audiosds.errors import CapabilityError, InvalidInputError
from audiosds.prior import Conditioning, FrozenTargetBackend, OracleBackend
from audiosds.prior.wire import BridgeBackend, LoopbackPriorServer
from audiosds.render.base import IdentityRenderer, RenderSpec
from audiosds.sds import (
    SDSConfig,
    sample_timestep,
    sds_update,
    sds_update_classic,
    sds_update_decoder,
    sds_update_spec_decoder,
)
from audiosds.spectrogram import SpectrogramConfig
from audiosds.waveform import Waveform

from helpers import relative_error

SR = 8000
T = 64


def identity_setup(seed=0):
    rng = np.random.default_rng(seed)
    renderer = IdentityRenderer(RenderSpec(T / SR, SR))
    theta = rng.standard_normal((2, T)) * 0.4
    return renderer, theta


def spec_cfg():
    return SpectrogramConfig(window_sizes=(16, 32))


class TestSampleTimestep:
    def test_degenerate_interval(self):
        cfg = SDSConfig(t_min=0.5, t_max=0.5)
        rng = np.random.default_rng(0)
        assert all(sample_timestep(cfg, rng) == 0.5 for _ in range(10))

    def test_mean_of_uniform_draws(self):
        cfg = SDSConfig(t_min=0.6, t_max=1.0)
        rng = np.random.default_rng(1)
        draws = [sample_timestep(cfg, rng) for _ in range(10_000)]
        assert np.mean(draws) == pytest.approx(0.8, abs=0.01)
        assert min(draws) >= 0.6 and max(draws) <= 1.0

    def test_seeded_reproducibility(self):
        cfg = SDSConfig(t_min=0.1, t_max=0.9)
        a = [sample_timestep(cfg, np.random.default_rng(7)) for _ in range(3)]
        b = [sample_timestep(cfg, np.random.default_rng(7)) for _ in range(3)]
        assert a == b


class TestOracleFixedPoints:
    @pytest.mark.parametrize("variant", ["classic", "decoder", "spec_decoder"])
    @pytest.mark.parametrize("t", [0.1, 0.5, 0.9])
    def test_zero_gradient_for_any_theta(self, variant, t):
        renderer, theta = identity_setup(seed=3)
        backend = OracleBackend(sample_rate=SR)
        cfg = SDSConfig(
            t_min=t, t_max=t, batch_size=2, update_variant=variant,
            spectrogram=spec_cfg(), seed=5,
        )
        report = sds_update(theta, renderer, backend, None, cfg)
        gnorm = np.linalg.norm(renderer.params_to_vector(report.gradient))
        assert gnorm <= 1e-6 * max(1.0, np.linalg.norm(theta))

    @pytest.mark.parametrize("n_steps", [1, 2, 5, 10])
    def test_zero_gradient_across_step_counts(self, n_steps):
        renderer, theta = identity_setup(seed=4)
        backend = OracleBackend(sample_rate=SR)
        cfg = SDSConfig(
            t_min=0.5, t_max=0.5, batch_size=1, n_denoise_steps=n_steps,
            update_variant="decoder", seed=6,
        )
        report = sds_update(theta, renderer, backend, None, cfg)
        gnorm = np.linalg.norm(renderer.params_to_vector(report.gradient))
        assert gnorm <= 1e-6 * max(1.0, np.linalg.norm(theta))


class TestClassic:
    def test_identity_chain_matches_hand_computation(self):
        # identity codec + identity renderer + constant weight: the gradient
        # must equal the batch mean of alpha(t) (eps_hat - eps).
        renderer, theta = identity_setup(seed=8)

        class BiasedOracle(OracleBackend):
            def predict_noise(self, z, t, cond):
                return super().predict_noise(z, t, cond) + 0.25

        backend = BiasedOracle(sample_rate=SR)
        cfg = SDSConfig(t_min=0.3, t_max=0.7, batch_size=3, update_variant="classic",
                        seed=9)
        report = sds_update_classic(theta, renderer, backend, None, cfg)
        expected = np.zeros_like(theta)
        for b, t in enumerate(report.t_values):
            alpha = backend.schedule.alpha(t)
            expected += alpha * 0.25 * np.ones_like(theta)
        expected /= cfg.batch_size
        assert relative_error(report.gradient, expected) < 1e-9

    def test_capability_error_without_encoder_vjp(self):
        renderer, theta = identity_setup()
        backend = OracleBackend(sample_rate=SR)
        with LoopbackPriorServer(backend) as server:
            client = BridgeBackend(server.address)
            cfg = SDSConfig(update_variant="classic", batch_size=1)
            with pytest.raises(CapabilityError):
                sds_update_classic(theta, renderer, client, None, cfg)
            client.close()

    def test_bit_reproducible_across_calls(self):
        renderer, theta = identity_setup(seed=10)

        class BiasedOracle(OracleBackend):
            def predict_noise(self, z, t, cond):
                return super().predict_noise(z, t, cond) + 0.1

        backend = BiasedOracle(sample_rate=SR)
        cfg = SDSConfig(t_min=0.2, t_max=0.8, batch_size=8, update_variant="classic",
                        seed=11)
        a = sds_update(theta, renderer, backend, None, cfg)
        b = sds_update(theta, renderer, backend, None, cfg)
        assert np.array_equal(a.gradient, b.gradient)
        assert a.t_values == b.t_values


class TestDecoder:
    def test_frozen_target_gradient_and_linear_convergence(self):
        rng = np.random.default_rng(12)
        renderer, theta = identity_setup(seed=13)
        target = Waveform(rng.standard_normal((2, T)) * 0.3, SR)
        backend = FrozenTargetBackend(target)
        cfg = SDSConfig(batch_size=2, update_variant="decoder", seed=14)
        report = sds_update_decoder(theta, renderer, backend, None, cfg)
        assert relative_error(report.gradient, theta - target.samples) < 1e-12

        # plain gradient descent at lr 0.1 contracts linearly toward x*
        x = theta.copy()
        dist0 = np.linalg.norm(x - target.samples)
        for _ in range(200):
            rep = sds_update_decoder(x, renderer, backend, None, cfg)
            x = x - 0.1 * rep.gradient
        assert np.linalg.norm(x - target.samples) < 1e-3
        assert np.linalg.norm(x - target.samples) < dist0

    def test_descent_direction_strictly_decreases_distance(self):
        rng = np.random.default_rng(15)
        renderer, theta = identity_setup(seed=16)
        target = Waveform(rng.standard_normal((2, T)), SR)
        backend = FrozenTargetBackend(target)
        cfg = SDSConfig(batch_size=1, update_variant="decoder", seed=17)
        x = theta.copy()
        dists = [np.linalg.norm(x - target.samples)]
        for lr in (0.9, 0.5, 0.1):
            rep = sds_update_decoder(x, renderer, backend, None, cfg)
            x = x - lr * rep.gradient
            dists.append(np.linalg.norm(x - target.samples))
        assert all(b < a for a, b in zip(dists, dists[1:]))

    def test_batch_equals_mean_of_singles_with_same_seeds(self):
        renderer, theta = identity_setup(seed=18)

        class BiasedOracle(OracleBackend):
            def predict_noise(self, z, t, cond):
                return super().predict_noise(z, t, cond) + 0.2

        backend = BiasedOracle(sample_rate=SR)
        cfg4 = SDSConfig(t_min=0.2, t_max=0.8, batch_size=4, update_variant="decoder",
                         seed=19)
        batched = sds_update(theta, renderer, backend, None, cfg4, step=3)
        singles = []
        for b in range(4):
            cfg1 = SDSConfig(t_min=0.2, t_max=0.8, batch_size=1,
                             update_variant="decoder", seed=19)
            rep = sds_update(theta, renderer, backend, None, cfg1, step=3,
                             sample_seeds=[[19, 3, b]])
            singles.append(rep.gradient)
        assert relative_error(batched.gradient, np.mean(singles, axis=0)) < 1e-12


class TestSpecDecoder:
    def test_oracle_fixed_point(self):
        renderer, theta = identity_setup(seed=20)
        backend = OracleBackend(sample_rate=SR)
        cfg = SDSConfig(t_min=0.4, t_max=0.6, batch_size=2,
                        update_variant="spec_decoder", spectrogram=spec_cfg(), seed=21)
        report = sds_update_spec_decoder(theta, renderer, backend, None, cfg)
        gnorm = np.linalg.norm(renderer.params_to_vector(report.gradient))
        assert gnorm <= 1e-6 * max(1.0, np.linalg.norm(theta))

    def test_single_scale_matches_composed_finite_differences(self):
        # With a frozen target the update is the exact gradient of
        # 0.5 * sum_m ||S_m(x) - S_m(x*)||^2; check against dense FD.
        rng = np.random.default_rng(22)
        small_T = 32
        renderer = IdentityRenderer(RenderSpec(small_T / SR, SR))
        theta = rng.standard_normal((2, small_T)) * 0.3
        target = Waveform(rng.standard_normal((2, small_T)) * 0.3, SR)
        backend = FrozenTargetBackend(target)
        cfg = SDSConfig(batch_size=1, update_variant="spec_decoder",
                        spectrogram=SpectrogramConfig(window_sizes=(16,)), seed=23)
        report = sds_update_spec_decoder(theta, renderer, backend, None, cfg)

        from audiosds.spectrogram import multiscale_spectrogram

        def half_loss(flat):
            w = Waveform(flat.reshape(2, -1), SR)
            s = multiscale_spectrogram(w, cfg.spectrogram)
            st = multiscale_spectrogram(target, cfg.spectrogram)
            return 0.5 * sum(
                np.sum((a - b) ** 2) for a, b in zip(s.grids, st.grids)
            )

        from helpers import central_diff, assert_close_rel

        fd = central_diff(half_loss, theta.ravel(), eps=1e-6)
        assert_close_rel(report.gradient.ravel(), fd, 1e-4, atol=1e-7,
                         label="spec decoder vs composed fd")

    def test_scale_additivity_of_gradients(self):
        rng = np.random.default_rng(24)
        renderer, theta = identity_setup(seed=25)
        target = Waveform(rng.standard_normal((2, T)) * 0.3, SR)
        backend = FrozenTargetBackend(target)

        def grad_for(windows):
            cfg = SDSConfig(batch_size=1, update_variant="spec_decoder",
                            spectrogram=SpectrogramConfig(window_sizes=windows),
                            seed=26)
            return sds_update_spec_decoder(theta, renderer, backend, None, cfg).gradient

        combined = grad_for((16, 32))
        parts = grad_for((16,)) + grad_for((32,))
        assert relative_error(combined, parts) < 1e-12

    def test_missing_spectrogram_config_rejected(self):
        with pytest.raises(InvalidInputError):
            SDSConfig(update_variant="spec_decoder")


class TestBackendInterchangeability:
    def test_loopback_matches_in_process_within_wire_precision(self):
        renderer, theta = identity_setup(seed=27)
        theta = theta.astype(np.float32).astype(np.float64)  # wire-exact params

        class BiasedOracle(OracleBackend):
            def predict_noise(self, z, t, cond):
                return super().predict_noise(z, t, cond) + 0.25

        local = BiasedOracle(sample_rate=SR)
        served = BiasedOracle(sample_rate=SR)
        cfg = SDSConfig(t_min=0.3, t_max=0.7, batch_size=2, update_variant="decoder",
                        seed=28)
        local_rep = sds_update(theta, renderer, local, None, cfg)
        with LoopbackPriorServer(served) as server:
            client = BridgeBackend(server.address)
            wire_rep = sds_update(theta, renderer, client, None, cfg)
            client.close()
        assert local_rep.t_values == wire_rep.t_values
        assert relative_error(local_rep.gradient, wire_rep.gradient) < 1e-5


class TestWeightMode:
    def test_sigma_sq_weighting_scales_classic_gradient(self):
        renderer, theta = identity_setup(seed=33)

        class BiasedOracle(OracleBackend):
            def predict_noise(self, z, t, cond):
                return super().predict_noise(z, t, cond) + 0.5

        backend = BiasedOracle(sample_rate=SR)
        t_fixed = 0.6
        base = SDSConfig(t_min=t_fixed, t_max=t_fixed, batch_size=1,
                         update_variant="classic", seed=34)
        weighted = SDSConfig(t_min=t_fixed, t_max=t_fixed, batch_size=1,
                             update_variant="classic", weight_mode="sigma_sq",
                             seed=34)
        g_const = sds_update(theta, renderer, backend, None, base).gradient
        g_sigma = sds_update(theta, renderer, backend, None, weighted).gradient
        sigma_sq = backend.schedule.sigma(t_fixed) ** 2
        assert relative_error(np.asarray(g_sigma), sigma_sq * np.asarray(g_const)) < 1e-12
