"""Differentiable frequency-modulation synthesizer.

A bank of V sine oscillators, each modulating the others' phase through a
positive coupling matrix, shaped by per-oscillator attack/decay envelopes:

    u_v[n] = sin(t_n * omega_v + <A_v, u[:, n-1]>) * f_v(t_n),  t_n = n / sr
    x[n]   = <A_out, u[:, n-1]>,                               u[:, -1] = 0

The coupling matrix has V modulation rows plus one output row, stored in
log space so the effective matrix stays entrywise positive. Fundamental
frequencies and envelope times live behind bounded smooth maps so the
optimizer works on unconstrained reals:

    frequency_hz = 20 + (8000 - 20) * sigmoid(raw_ratio)
    attack, decay = sigmoid(raw) seconds, each in (0, 1)

The render output is mono, duplicated to stereo. The recurrence and its
reverse sweep live in ``_kernels``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import InvalidInputError, NumericOverflowError
from ..waveform import Waveform
from .base import RenderSpec, logit, sigmoid, sigmoid_grad

FREQ_MIN_HZ = 20.0
FREQ_MAX_HZ = 8000.0


def envelope(t, attack, decay):
    """Attack/decay envelope, vectorized over t. attack, decay in (0, 1) seconds."""
    t = np.asarray(t, dtype=np.float64)
    rise = t / (attack + 1e-5)
    fall = np.exp(attack - t) / (decay * decay)
    tail = (decay - t - attack) / decay
    return np.maximum(0.0, np.minimum(rise, fall) * tail)


@dataclass
class FMParams:
    """Raw (pre-mapping) synthesizer parameters.

    log_fm_matrix: (V+1, V); rows 0..V-1 modulate oscillators, row V mixes
    the output. raw_ratios/raw_attacks/raw_decays: (V,) unconstrained reals.
    """

    log_fm_matrix: np.ndarray
    raw_ratios: np.ndarray
    raw_attacks: np.ndarray
    raw_decays: np.ndarray

    def __post_init__(self):
        self.log_fm_matrix = np.asarray(self.log_fm_matrix, dtype=np.float64)
        self.raw_ratios = np.asarray(self.raw_ratios, dtype=np.float64)
        self.raw_attacks = np.asarray(self.raw_attacks, dtype=np.float64)
        self.raw_decays = np.asarray(self.raw_decays, dtype=np.float64)
        V = self.raw_ratios.shape[0]
        if V < 1:
            raise InvalidInputError("need at least one oscillator")
        if self.log_fm_matrix.shape != (V + 1, V):
            raise InvalidInputError(
                f"log_fm_matrix must be (V+1, V) = {(V + 1, V)}, "
                f"got {self.log_fm_matrix.shape}"
            )
        for name, arr in (("raw_attacks", self.raw_attacks), ("raw_decays", self.raw_decays)):
            if arr.shape != (V,):
                raise InvalidInputError(f"{name} must have shape ({V},), got {arr.shape}")
        if not all(
            np.all(np.isfinite(a))
            for a in (self.log_fm_matrix, self.raw_ratios, self.raw_attacks, self.raw_decays)
        ):
            raise InvalidInputError("FM parameters must be finite")

    @property
    def num_oscillators(self) -> int:
        return self.raw_ratios.shape[0]

    def fm_matrix(self) -> np.ndarray:
        return np.exp(self.log_fm_matrix)

    def frequencies_hz(self) -> np.ndarray:
        return FREQ_MIN_HZ + (FREQ_MAX_HZ - FREQ_MIN_HZ) * sigmoid(self.raw_ratios)

    def angular_frequencies(self) -> np.ndarray:
        return 2.0 * np.pi * self.frequencies_hz()

    def attacks(self) -> np.ndarray:
        return sigmoid(self.raw_attacks)

    def decays(self) -> np.ndarray:
        return sigmoid(self.raw_decays)

    def copy(self) -> "FMParams":
        return FMParams(
            self.log_fm_matrix.copy(),
            self.raw_ratios.copy(),
            self.raw_attacks.copy(),
            self.raw_decays.copy(),
        )


def default_fm_params(num_oscillators: int = 4, seed: int = 0) -> FMParams:
    """Starting point: near-silent modulation, output mix close to [1, 0, ..., 0]."""
    rng = np.random.default_rng(seed)
    V = num_oscillators
    log_a = np.full((V + 1, V), -4.0) + 0.1 * rng.standard_normal((V + 1, V))
    log_a[V] = -8.0
    log_a[V, 0] = 0.0
    log_a[V] += 0.01 * rng.standard_normal(V)
    raw_ratios = rng.normal(-1.0, 0.5, V)  # biased toward the low end
    raw_attacks = np.full(V, logit(0.02)) + 0.1 * rng.standard_normal(V)
    raw_decays = np.full(V, logit(0.5)) + 0.1 * rng.standard_normal(V)
    return FMParams(log_a, raw_ratios, raw_attacks, raw_decays)


class FMRenderer:
    """Renders FMParams through the oscillator recurrence; exact VJP."""

    def __init__(self, spec: RenderSpec):
        self.spec = spec

    def _mapped(self, p: FMParams):
        return p.fm_matrix(), p.angular_frequencies(), p.attacks(), p.decays()

    def render(self, p: FMParams) -> Waveform:
        A, omega, attack, decay = self._mapped(p)
        _, _, _, x = _kernels.fm_forward(
            A, omega, attack, decay, self.spec.num_samples, float(self.spec.sample_rate)
        )
        bad = np.flatnonzero(~np.isfinite(x))
        if bad.size:
            raise NumericOverflowError(
                "FM render produced a non-finite sample", sample_index=int(bad[0])
            )
        return Waveform(x, self.spec.sample_rate)

    def vjp(self, p: FMParams, cotangent: Waveform) -> FMParams:
        """Gradient with respect to the raw parameters, as an FMParams-shaped object."""
        A, omega, attack, decay = self._mapped(p)
        T = self.spec.num_samples
        sr = float(self.spec.sample_rate)
        u, phase, env, x = _kernels.fm_forward(A, omega, attack, decay, T, sr)
        bad = np.flatnonzero(~np.isfinite(x))
        if bad.size:
            raise NumericOverflowError(
                "FM render produced a non-finite sample", sample_index=int(bad[0])
            )
        xbar = cotangent.samples.sum(axis=0)  # mono render feeds both channels
        Abar, omegabar, attackbar, decaybar = _kernels.fm_backward(
            A, omega, attack, decay, u, phase, env, xbar, sr
        )
        # chain through the parameter maps
        log_bar = Abar * A
        ratio_bar = (
            omegabar * 2.0 * np.pi * (FREQ_MAX_HZ - FREQ_MIN_HZ) * sigmoid_grad(p.raw_ratios)
        )
        attack_bar = attackbar * sigmoid_grad(p.raw_attacks)
        decay_bar = decaybar * sigmoid_grad(p.raw_decays)
        return FMParams(log_bar, ratio_bar, attack_bar, decay_bar)

    def params_to_vector(self, p: FMParams) -> np.ndarray:
        return np.concatenate(
            [p.log_fm_matrix.ravel(), p.raw_ratios, p.raw_attacks, p.raw_decays]
        )

    def params_from_vector(self, vec: np.ndarray, like: FMParams | None = None) -> FMParams:
        vec = np.asarray(vec, dtype=np.float64)
        V = self._infer_v(vec.size)
        mat = vec[: (V + 1) * V].reshape(V + 1, V)
        rest = vec[(V + 1) * V :]
        return FMParams(mat, rest[:V], rest[V : 2 * V], rest[2 * V :])

    @staticmethod
    def _infer_v(size: int) -> int:
        # size = (V+1)V + 3V = V^2 + 4V
        V = int(round((-4 + np.sqrt(16 + 4 * size)) / 2))
        if V * V + 4 * V != size:
            raise InvalidInputError(f"vector of size {size} is not an FM parameter pack")
        return V

    def project(self, p: FMParams) -> FMParams:
        return p
