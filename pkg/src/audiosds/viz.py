"""PNG plots for run artifacts: dB spectrograms and loss curves."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .spectrogram import stft_magnitude  # noqa: E402
from .waveform import Waveform  # noqa: E402

_FLOOR_DB = -80.0


def _magnitude_image(w: Waveform, window: int):
    window = min(window, max(4, 1 << int(np.log2(max(4, w.num_samples)))))
    grid = stft_magnitude(w, window, max(1, window // 4))
    return grid.mean(axis=2)


def spectrogram_pair_png(before: Waveform, after: Waveform, path, window: int = 1024,
                         labels=("initial", "final")):
    """Two-panel dB spectrogram; both panels share one reference and scale."""
    mags = [_magnitude_image(before, window), _magnitude_image(after, window)]
    ref = max(m.max() for m in mags)
    if ref <= 0:
        imgs = [np.full(m.shape, _FLOOR_DB) for m in mags]
    else:
        imgs = [
            np.maximum(20 * np.log10(np.maximum(m, 1e-12) / ref), _FLOOR_DB)
            for m in mags
        ]
    vmax = 0.0
    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=False)
    for ax, img, label in zip(axes, imgs, labels):
        extent = [0, before.duration, 0, before.sample_rate / 2]
        im = ax.imshow(img, origin="lower", aspect="auto", cmap="magma",
                       vmin=_FLOOR_DB, vmax=vmax, extent=extent)
        ax.set_ylabel("Hz")
        ax.set_title(label)
    axes[-1].set_xlabel("seconds")
    fig.colorbar(im, ax=axes, label="dB")
    fig.savefig(path, dpi=110)
    plt.close(fig)


def loss_curve_png(records, key, path, title):
    steps = [r["step"] for r in records if key in r]
    vals = [r[key] for r in records if key in r]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, vals)
    ax.set_xlabel("step")
    ax.set_ylabel(key)
    ax.set_title(title)
    if vals and min(vals) > 0:
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
