"""Stereo waveform container.

All audio in the toolkit is stereo float64 in a nominal [-1, 1] range.
Mono arrays are duplicated across channels on construction so every
downstream consumer can rely on a fixed (2, T) layout.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

DEFAULT_SAMPLE_RATE = 44100


class Waveform:
    """Immutable stereo audio buffer.

    Attributes:
        samples: (2, T) float64 array, read-only.
        sample_rate: samples per second, positive integer.
    """

    __slots__ = ("samples", "sample_rate")

    def __init__(self, samples, sample_rate):
        arr = np.asarray(samples, dtype=np.float64)
        if arr.ndim == 1:
            arr = np.stack([arr, arr])
        elif arr.ndim == 2 and arr.shape[0] == 1:
            arr = np.concatenate([arr, arr], axis=0)
        if arr.ndim != 2 or arr.shape[0] != 2:
            raise InvalidInputError(
                f"expected mono (T,) or stereo (2, T) samples, got shape {np.shape(samples)}"
            )
        if arr.shape[1] == 0:
            raise InvalidInputError("waveform must contain at least one sample")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("waveform samples must be finite")
        rate = int(sample_rate)
        if rate <= 0:
            raise InvalidInputError(f"sample rate must be positive, got {sample_rate}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", rate)

    def __setattr__(self, name, value):
        raise AttributeError("Waveform is immutable")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.samples.shape[1] / self.sample_rate

    def is_compatible(self, other: "Waveform") -> bool:
        return (
            self.sample_rate == other.sample_rate
            and self.num_samples == other.num_samples
        )

    def require_compatible(self, other: "Waveform", what="waveforms"):
        if not self.is_compatible(other):
            raise InvalidInputError(
                f"{what} must share length and sample rate: "
                f"({self.num_samples} @ {self.sample_rate} Hz) vs "
                f"({other.num_samples} @ {other.sample_rate} Hz)"
            )

    def __add__(self, other: "Waveform") -> "Waveform":
        self.require_compatible(other)
        return Waveform(self.samples + other.samples, self.sample_rate)

    def __sub__(self, other: "Waveform") -> "Waveform":
        self.require_compatible(other)
        return Waveform(self.samples - other.samples, self.sample_rate)

    def __mul__(self, scalar) -> "Waveform":
        return Waveform(self.samples * float(scalar), self.sample_rate)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.samples))

    def __repr__(self):
        return f"Waveform(T={self.num_samples}, sr={self.sample_rate})"


def zeros_like(w: Waveform) -> Waveform:
    return Waveform(np.zeros_like(w.samples), w.sample_rate)


def silence(num_samples: int, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    return Waveform(np.zeros((2, num_samples)), sample_rate)
