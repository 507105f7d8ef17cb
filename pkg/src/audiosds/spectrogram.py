"""Multiscale STFT magnitudes with an exact vector-Jacobian product.

The forward map slices each channel into hop-spaced frames, applies a
periodic Hann window, and takes one-sided FFT magnitudes. The adjoint
is computed in closed form rather than by tracing the windowing: the
magnitude cotangent is rotated onto the complex spectrum (zero at
zero-magnitude bins), pushed through the inverse FFT with half-weights
on the interior bins to undo the Hermitian doubling, re-windowed, and
overlap-added back onto the signal. This keeps the reverse pass as one
FFT per frame with no extra memory.

Conventions (fixed here, not externally imposed):
    * hop = window * hop_fraction (default 1/4), at least 1 sample
    * the tail is zero-padded so every sample is covered by >= 1 frame
    * channels are transformed independently; losses sum over channels
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .waveform import Waveform


@dataclass(frozen=True)
class SpectrogramConfig:
    """Window sizes and hop policy for the multiscale transform."""

    window_sizes: tuple = (1024, 2048, 4096)
    hop_fraction: float = 0.25

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.window_sizes)
        if len(sizes) < 1:
            raise InvalidInputError("need at least one window size")
        for s in sizes:
            if s < 2 or s % 2 != 0:
                raise InvalidInputError(f"window sizes must be even and >= 2, got {s}")
        if not (0 < self.hop_fraction <= 1):
            raise InvalidInputError(f"hop_fraction must be in (0, 1], got {self.hop_fraction}")
        object.__setattr__(self, "window_sizes", sizes)

    def hop(self, window_size: int) -> int:
        return max(1, int(round(window_size * self.hop_fraction)))

    @property
    def num_scales(self) -> int:
        return len(self.window_sizes)


@dataclass
class SpectrogramStack:
    """Per-scale magnitude grids, each (freq_bins, frames, channels)."""

    grids: list
    config: SpectrogramConfig = field(default_factory=SpectrogramConfig)

    def __post_init__(self):
        if len(self.grids) != self.config.num_scales:
            raise InvalidInputError(
                f"stack holds {len(self.grids)} grids but config names "
                f"{self.config.num_scales} scales"
            )

    def __sub__(self, other: "SpectrogramStack") -> "SpectrogramStack":
        self._check_shapes(other)
        return SpectrogramStack(
            [a - b for a, b in zip(self.grids, other.grids)], self.config
        )

    def scaled(self, factor: float) -> "SpectrogramStack":
        return SpectrogramStack([g * factor for g in self.grids], self.config)

    def norm_sq(self) -> float:
        return float(sum(np.sum(g * g) for g in self.grids))

    def _check_shapes(self, other: "SpectrogramStack"):
        if len(self.grids) != len(other.grids) or any(
            a.shape != b.shape for a, b in zip(self.grids, other.grids)
        ):
            raise InvalidInputError("spectrogram stacks have mismatched shapes")


def hann_periodic(window_size: int) -> np.ndarray:
    n = np.arange(window_size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / window_size)


def _frame_count(num_samples: int, window: int, hop: int) -> int:
    if num_samples <= window:
        return 1
    return int(np.ceil((num_samples - window) / hop)) + 1


def _frames(channel: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Slice one channel into (frames, window), zero-padding the tail."""
    T = channel.shape[0]
    n_frames = _frame_count(T, window, hop)
    padded_len = (n_frames - 1) * hop + window
    padded = np.zeros(padded_len)
    padded[:T] = channel
    strided = np.lib.stride_tricks.sliding_window_view(padded, window)[::hop]
    return np.ascontiguousarray(strided)


def stft_magnitude(w: Waveform, window_size: int, hop: int | None = None) -> np.ndarray:
    """One-sided STFT magnitudes, shape (window//2 + 1, frames, channels)."""
    if window_size < 2 or window_size % 2 != 0:
        raise InvalidInputError(f"window size must be even and >= 2, got {window_size}")
    if hop is None:
        hop = max(1, window_size // 4)
    if hop < 1:
        raise InvalidInputError(f"hop must be >= 1 sample, got {hop}")
    win = hann_periodic(window_size)
    mags = []
    for ch in range(2):
        frames = _frames(w.samples[ch], window_size, hop) * win
        spec = np.fft.rfft(frames, axis=1)
        mags.append(np.abs(spec).T)  # (bins, frames)
    return np.stack(mags, axis=-1)


def multiscale_spectrogram(w: Waveform, cfg: SpectrogramConfig) -> SpectrogramStack:
    grids = [stft_magnitude(w, size, cfg.hop(size)) for size in cfg.window_sizes]
    return SpectrogramStack(grids, cfg)


def _complex_stft(channel: np.ndarray, window: int, hop: int, win: np.ndarray):
    frames = _frames(channel, window, hop) * win
    return np.fft.rfft(frames, axis=1)  # (frames, bins)


def _adjoint_rfft(cotangent: np.ndarray, window: int) -> np.ndarray:
    """Adjoint of rfft under the real inner product on (Re, Im) parts.

    Interior bins appear twice in the full spectrum, so they carry half
    weight before the inverse transform reassembles the real signal.
    """
    half = cotangent.copy()
    half[:, 1:-1] *= 0.5
    return np.fft.irfft(half, n=window, axis=1) * window


def multiscale_vjp(
    w: Waveform, cotangent: SpectrogramStack, cfg: SpectrogramConfig
) -> Waveform:
    """Exact VJP of multiscale_spectrogram at w, as a Waveform-shaped gradient.

    Zero-magnitude bins contribute zero gradient (subgradient choice for |z|
    at the origin).
    """
    if len(cotangent.grids) != cfg.num_scales:
        raise InvalidInputError("cotangent scale count does not match config")
    T = w.num_samples
    grad = np.zeros_like(w.samples)
    for grid, window in zip(cotangent.grids, cfg.window_sizes):
        hop = cfg.hop(window)
        win = hann_periodic(window)
        n_frames = _frame_count(T, window, hop)
        bins = window // 2 + 1
        for ch in range(2):
            expected = (bins, n_frames)
            if grid.shape[:2] != expected or grid.shape[2] != 2:
                raise InvalidInputError(
                    f"cotangent grid shape {grid.shape} does not match "
                    f"expected {(bins, n_frames, 2)} for window {window}"
                )
            spec = _complex_stft(w.samples[ch], window, hop, win)  # (frames, bins)
            mag = np.abs(spec)
            y = grid[:, :, ch].T  # (frames, bins)
            phase = np.zeros_like(spec)
            nz = mag > 0
            phase[nz] = spec[nz] / mag[nz]
            frame_grad = _adjoint_rfft(y * phase, window) * win
            # overlap-add back onto the padded signal, then truncate the pad
            padded = np.zeros((n_frames - 1) * hop + window)
            for j in range(n_frames):
                padded[j * hop : j * hop + window] += frame_grad[j]
            grad[ch] += padded[:T]
    return Waveform(grad, w.sample_rate)


def multiscale_jvp(
    w: Waveform, direction: Waveform, cfg: SpectrogramConfig
) -> SpectrogramStack:
    """Forward-mode derivative of the magnitude map along `direction`.

    Independent of the VJP code path; used to cross-check the adjoint
    identity in tests.
    """
    w.require_compatible(direction)
    grids = []
    for window in cfg.window_sizes:
        hop = cfg.hop(window)
        win = hann_periodic(window)
        per_channel = []
        for ch in range(2):
            spec = _complex_stft(w.samples[ch], window, hop, win)
            dspec = _complex_stft(direction.samples[ch], window, hop, win)
            mag = np.abs(spec)
            dmag = np.zeros_like(mag)
            nz = mag > 0
            dmag[nz] = (
                spec.real[nz] * dspec.real[nz] + spec.imag[nz] * dspec.imag[nz]
            ) / mag[nz]
            per_channel.append(dmag.T)
        grids.append(np.stack(per_channel, axis=-1))
    return SpectrogramStack(grids, cfg)


def spectral_recon_loss(
    target: Waveform, estimate: Waveform, cfg: SpectrogramConfig
):
    """Sum over scales of squared magnitude differences, with its exact gradient.

    Returns (loss, gradient-with-respect-to-estimate as a Waveform).
    """
    target.require_compatible(estimate)
    s_target = multiscale_spectrogram(target, cfg)
    s_est = multiscale_spectrogram(estimate, cfg)
    diff = s_est - s_target
    loss = diff.norm_sq()
    grad = multiscale_vjp(estimate, diff.scaled(2.0), cfg)
    return loss, grad


def grid_to_csv(grid: np.ndarray, path) -> None:
    """Flat CSV export of one magnitude grid: freq_bin, frame, channel, magnitude."""
    bins, frames, channels = grid.shape
    with open(path, "w") as fh:
        fh.write("freq_bin,frame,channel,magnitude\n")
        for ch in range(channels):
            for j in range(frames):
                col = grid[:, j, ch]
                for f in range(bins):
                    fh.write(f"{f},{j},{ch},{col[f]:.9g}\n")


def spectrogram_to_csv(stack: SpectrogramStack, path_prefix) -> list:
    """One CSV per scale, suffixed with the window size; returns the paths."""
    paths = []
    for grid, window in zip(stack.grids, stack.config.window_sizes):
        path = f"{path_prefix}_w{window}.csv"
        grid_to_csv(grid, path)
        paths.append(path)
    return paths
