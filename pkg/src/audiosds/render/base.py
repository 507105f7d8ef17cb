"""Renderer contract and the trivial identity renderer.

A renderer maps an optimizable parameter object to a stereo Waveform and
exposes the exact reverse-mode derivative of that map:

    render(params) -> Waveform
    vjp(params, cotangent: Waveform) -> parameter-shaped gradient
    params_to_vector / params_from_vector: flat float64 views for optimizers
    project(params): optional clamp back onto the valid parameter set

Cotangents arrive per-channel; renderers that duplicate a mono signal to
stereo must fold both channels into their mono derivative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..waveform import Waveform


@dataclass(frozen=True)
class RenderSpec:
    """Target duration and rate for a render; duration * rate must be whole."""

    duration: float
    sample_rate: int

    def __post_init__(self):
        if self.duration <= 0:
            raise InvalidInputError(f"duration must be positive, got {self.duration}")
        if self.sample_rate <= 0:
            raise InvalidInputError(f"sample rate must be positive, got {self.sample_rate}")
        n = self.duration * self.sample_rate
        if abs(n - round(n)) > 1e-9:
            raise InvalidInputError(
                f"duration * sample_rate must be an integer sample count, got {n}"
            )

    @property
    def num_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def times(self) -> np.ndarray:
        return np.arange(self.num_samples) / self.sample_rate


class IdentityRenderer:
    """Parameters are the stereo samples themselves; render is the identity."""

    def __init__(self, spec: RenderSpec):
        self.spec = spec

    def render(self, params: np.ndarray) -> Waveform:
        arr = np.asarray(params, dtype=np.float64)
        if arr.shape != (2, self.spec.num_samples):
            raise InvalidInputError(
                f"identity renderer expects (2, {self.spec.num_samples}) parameters, "
                f"got {arr.shape}"
            )
        return Waveform(arr, self.spec.sample_rate)

    def vjp(self, params: np.ndarray, cotangent: Waveform) -> np.ndarray:
        return np.array(cotangent.samples)

    def params_to_vector(self, params: np.ndarray) -> np.ndarray:
        return np.asarray(params, dtype=np.float64).ravel().copy()

    def params_from_vector(self, vec: np.ndarray, like=None) -> np.ndarray:
        return np.asarray(vec, dtype=np.float64).reshape(2, self.spec.num_samples)

    def project(self, params):
        return params


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad(x):
    s = sigmoid(x)
    return s * (1.0 - s)


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))
