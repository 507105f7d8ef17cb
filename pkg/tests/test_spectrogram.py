import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from audiosds.errors import InvalidInputError
from audiosds.spectrogram import (
    SpectrogramConfig,
    SpectrogramStack,
    hann_periodic,
    multiscale_jvp,
    multiscale_spectrogram,
    multiscale_vjp,
    spectral_recon_loss,
    stft_magnitude,
)
from audiosds.waveform import Waveform, silence

from helpers import central_diff, directional_diff, assert_close_rel


def rand_wave(T, sr=8000, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return Waveform(rng.standard_normal((2, T)) * scale, sr)


def dft_magnitude_oracle(frame):
    """Brute-force DFT magnitudes of one windowed frame (O(W^2))."""
    W = frame.shape[0]
    bins = W // 2 + 1
    out = np.zeros(bins)
    for f in range(bins):
        re = sum(frame[n] * np.cos(2 * np.pi * f * n / W) for n in range(W))
        im = -sum(frame[n] * np.sin(2 * np.pi * f * n / W) for n in range(W))
        out[f] = np.hypot(re, im)
    return out


class TestStftMagnitude:
    def test_zero_waveform_gives_zero_grid(self):
        grid = stft_magnitude(silence(300, 8000), 64, 16)
        assert grid.shape == (33, 16, 2)
        assert np.all(grid == 0)

    def test_unit_impulse_first_frame_matches_windowed_delta(self):
        # Impulse at sample 0, window 8, hop 8: first frame is w[0] * delta,
        # whose DFT magnitude is w[0] at every bin.
        x = np.zeros(32)
        x[0] = 1.0
        grid = stft_magnitude(Waveform(x, 8000), 8, 8)
        win = hann_periodic(8)
        oracle = dft_magnitude_oracle(win * np.concatenate([[1.0], np.zeros(7)]))
        assert np.allclose(grid[:, 0, 0], oracle, atol=1e-12)
        assert np.allclose(grid[:, 0, 0], win[0])

    def test_matches_bruteforce_dft_on_random_frames(self):
        w = rand_wave(96, seed=3)
        window, hop = 32, 8
        grid = stft_magnitude(w, window, hop)
        win = hann_periodic(window)
        for j in [0, 1, 4]:
            frame = w.samples[0, j * hop : j * hop + window] * win
            assert_close_rel(grid[:, j, 0], dft_magnitude_oracle(frame), 1e-10,
                             atol=1e-12, label="stft vs dft oracle")

    def test_bin_centered_sinusoid_dominates_with_hann_sidelobes(self):
        sr = 44100
        window = 1024
        bin_idx = 40
        freq = bin_idx * sr / window
        t = np.arange(window * 4) / sr
        w = Waveform(np.sin(2 * np.pi * freq * t), sr)
        grid = stft_magnitude(w, window, window // 4)
        frame = grid[:, 1, 0]
        peak = frame[bin_idx]
        assert peak == frame.max()
        # Hann first sidelobe sits ~31 dB down; anything past the main lobe
        # (peak +/- 2 bins) must be below -13 dB of peak.
        others = np.concatenate([frame[: bin_idx - 2], frame[bin_idx + 3 :]])
        assert np.max(others) < peak * 10 ** (-13 / 20)

    def test_empty_waveform_rejected(self):
        with pytest.raises(InvalidInputError):
            Waveform(np.zeros((2, 0)), 8000)


class TestMultiscale:
    def test_zero_waveform_stack(self):
        cfg = SpectrogramConfig(window_sizes=(16, 32))
        stack = multiscale_spectrogram(silence(100, 8000), cfg)
        assert len(stack.grids) == 2
        assert all(np.all(g == 0) for g in stack.grids)

    def test_single_scale_equals_stft(self):
        cfg = SpectrogramConfig(window_sizes=(64,))
        w = rand_wave(256, seed=1)
        stack = multiscale_spectrogram(w, cfg)
        direct = stft_magnitude(w, 64, cfg.hop(64))
        assert np.array_equal(stack.grids[0], direct)

    def test_white_noise_energy_agrees_across_scales(self):
        # Parseval oracle: per frame, sum of squared |rfft| (with Hermitian
        # doubling) equals W * windowed-frame energy. For long stationary
        # noise, energy per scale normalized by frame count and window
        # energy agrees across scales.
        rng = np.random.default_rng(7)
        T = 1 << 16
        w = Waveform(rng.standard_normal((2, T)), 44100)
        cfg = SpectrogramConfig(window_sizes=(1024, 2048, 4096))
        stack = multiscale_spectrogram(w, cfg)
        normalized = []
        for grid, window in zip(stack.grids, cfg.window_sizes):
            doubling = np.full(grid.shape[0], 2.0)
            doubling[0] = doubling[-1] = 1.0
            energy = np.sum(grid**2 * doubling[:, None, None])
            n_frames = grid.shape[1]
            win_energy = np.sum(hann_periodic(window) ** 2)
            normalized.append(energy / (n_frames * win_energy * window))
        normalized = np.array(normalized)
        assert np.all(np.abs(normalized / normalized.mean() - 1) < 0.01)

    def test_nonnegativity_invariant(self):
        stack = multiscale_spectrogram(rand_wave(300, seed=9), SpectrogramConfig((16, 64)))
        for g in stack.grids:
            assert np.all(g >= 0)
            assert np.all(np.isfinite(g))


class TestVJP:
    def test_zero_cotangent_zero_gradient(self):
        cfg = SpectrogramConfig(window_sizes=(16,))
        w = rand_wave(64, seed=2)
        stack = multiscale_spectrogram(w, cfg)
        zero = SpectrogramStack([np.zeros_like(g) for g in stack.grids], cfg)
        grad = multiscale_vjp(w, zero, cfg)
        assert np.all(grad.samples == 0)

    @pytest.mark.parametrize("seed", range(6))
    def test_adjoint_identity_against_fd_directional(self, seed):
        cfg = SpectrogramConfig(window_sizes=(16, 32))
        rng = np.random.default_rng(seed)
        w = rand_wave(80, seed=seed)
        y = SpectrogramStack(
            [rng.standard_normal(g.shape) for g in multiscale_spectrogram(w, cfg).grids],
            cfg,
        )
        delta = rng.standard_normal(w.samples.shape)

        def weighted(mat_flat):
            ww = Waveform(mat_flat.reshape(2, -1), w.sample_rate)
            stack = multiscale_spectrogram(ww, cfg)
            return sum(np.sum(g * yy) for g, yy in zip(stack.grids, y.grids))

        lhs = directional_diff(weighted, w.samples.ravel(), delta.ravel(), eps=1e-6)
        rhs = float(np.sum(delta * multiscale_vjp(w, y, cfg).samples))
        assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), abs(rhs), 1e-9)

    @pytest.mark.parametrize("seed", range(4))
    def test_adjoint_identity_against_analytic_jvp(self, seed):
        cfg = SpectrogramConfig(window_sizes=(16, 64))
        rng = np.random.default_rng(100 + seed)
        w = rand_wave(120, seed=50 + seed)
        stack = multiscale_spectrogram(w, cfg)
        y = SpectrogramStack([rng.standard_normal(g.shape) for g in stack.grids], cfg)
        delta = Waveform(rng.standard_normal(w.samples.shape), w.sample_rate)
        jvp = multiscale_jvp(w, delta, cfg)
        lhs = sum(np.sum(a * b) for a, b in zip(jvp.grids, y.grids))
        rhs = np.sum(delta.samples * multiscale_vjp(w, y, cfg).samples)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs))

    def test_impulse_ones_cotangent_matches_dense_fd(self):
        cfg = SpectrogramConfig(window_sizes=(8,))
        x = np.zeros((2, 24))
        x[:, 0] = 1.0
        w = Waveform(x, 8000)
        stack = multiscale_spectrogram(w, cfg)
        ones = SpectrogramStack([np.ones_like(g) for g in stack.grids], cfg)
        grad = multiscale_vjp(w, ones, cfg)

        def total(mat_flat):
            ww = Waveform(mat_flat.reshape(2, -1), 8000)
            return sum(np.sum(g) for g in multiscale_spectrogram(ww, cfg).grids)

        fd = central_diff(total, w.samples.ravel(), eps=1e-5)
        assert_close_rel(grad.samples.ravel(), fd, 1e-4, atol=1e-7,
                         label="impulse vjp vs fd")

    def test_shape_mismatch_rejected(self):
        cfg = SpectrogramConfig(window_sizes=(16,))
        w = rand_wave(64, seed=4)
        bad = SpectrogramStack([np.zeros((9, 1, 2))], cfg)
        with pytest.raises(InvalidInputError):
            multiscale_vjp(w, bad, cfg)


class TestReconLoss:
    def test_identical_inputs_zero_loss_zero_gradient(self):
        cfg = SpectrogramConfig(window_sizes=(16, 32))
        w = rand_wave(100, seed=5)
        loss, grad = spectral_recon_loss(w, w, cfg)
        assert loss == 0.0
        assert np.all(grad.samples == 0)

    def test_zero_target_reduces_to_energy(self):
        cfg = SpectrogramConfig(window_sizes=(16,))
        w = rand_wave(64, seed=6)
        loss, _ = spectral_recon_loss(silence(64, w.sample_rate), w, cfg)
        stack = multiscale_spectrogram(w, cfg)
        assert loss == pytest.approx(stack.norm_sq(), rel=1e-12)

    def test_gradient_matches_fd(self):
        cfg = SpectrogramConfig(window_sizes=(8, 16))
        target = rand_wave(40, seed=7)
        est = rand_wave(40, seed=8)
        _, grad = spectral_recon_loss(target, est, cfg)

        def loss_of(mat_flat):
            ww = Waveform(mat_flat.reshape(2, -1), est.sample_rate)
            return spectral_recon_loss(target, ww, cfg)[0]

        fd = central_diff(loss_of, est.samples.ravel(), eps=1e-6)
        assert_close_rel(grad.samples.ravel(), fd, 1e-4, atol=1e-7,
                         label="recon loss grad vs fd")

    def test_length_mismatch_rejected(self):
        cfg = SpectrogramConfig(window_sizes=(8,))
        with pytest.raises(InvalidInputError):
            spectral_recon_loss(rand_wave(40), rand_wave(48), cfg)

    def test_scale_additivity(self):
        a = SpectrogramConfig(window_sizes=(16,))
        b = SpectrogramConfig(window_sizes=(32,))
        both = SpectrogramConfig(window_sizes=(16, 32))
        t, e = rand_wave(90, seed=11), rand_wave(90, seed=12)
        la, _ = spectral_recon_loss(t, e, a)
        lb, _ = spectral_recon_loss(t, e, b)
        lab, _ = spectral_recon_loss(t, e, both)
        assert lab == pytest.approx(la + lb, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), T=st.integers(8, 200))
def test_zero_fixed_point_property(seed, T):
    cfg = SpectrogramConfig(window_sizes=(8,))
    w = rand_wave(T, seed=seed)
    loss, grad = spectral_recon_loss(w, w, cfg)
    assert loss == 0.0
    assert np.all(grad.samples == 0)


def test_csv_export_schema(tmp_path):
    from audiosds.spectrogram import grid_to_csv, spectrogram_to_csv

    w = rand_wave(64, seed=30)
    cfg = SpectrogramConfig(window_sizes=(16, 32))
    stack = multiscale_spectrogram(w, cfg)
    paths = spectrogram_to_csv(stack, tmp_path / "spec")
    assert [p.split("_w")[-1] for p in paths] == ["16.csv", "32.csv"]
    lines = open(paths[0]).read().splitlines()
    assert lines[0] == "freq_bin,frame,channel,magnitude"
    bins, frames, channels = stack.grids[0].shape
    assert len(lines) == 1 + bins * frames * channels
    f, j, ch, mag = lines[1].split(",")
    assert (int(f), int(j), int(ch)) == (0, 0, 0)
    assert abs(float(mag) - stack.grids[0][0, 0, 0]) < 1e-8
