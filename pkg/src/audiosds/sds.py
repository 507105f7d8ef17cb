"""Score-distillation updates, generic over renderer and prior backend.

Three variants, all returned as DESCENT directions (a minimizing
optimizer subtracts them):

classic       residual between predicted and injected noise, computed in
              latent space and pulled back through the encoder and the
              renderer. Needs an encoder VJP; kept for A/B studies.
decoder       the noised latent is partially denoised and decoded; the
              update pulls the render toward the batch-mean decoded
              audio: gradient = VJP_theta[x - mean(x_hat)].
spec_decoder  the decoder residual, but measured per scale in multiscale
              STFT magnitude space and pulled back through the exact
              spectrogram adjoint before the renderer VJP.

Per-sample randomness is keyed by (seed, step, sample index), so a batch
gradient is exactly the mean of the B single-sample gradients with the
same keys, and repeated calls are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, InvalidInputError
from .prior.ops import add_noise, guided_prediction
from .spectrogram import (
    SpectrogramConfig,
    SpectrogramStack,
    multiscale_spectrogram,
    multiscale_vjp,
)
from .waveform import Waveform

VARIANTS = ("classic", "decoder", "spec_decoder")
WEIGHT_MODES = ("constant", "sigma_sq")


@dataclass
class SDSConfig:
    t_min: float = 0.02
    t_max: float = 0.98
    guidance_scale: float = 1.0
    batch_size: int = 1
    n_denoise_steps: int = 1
    weight_mode: str = "constant"
    update_variant: str = "decoder"
    spectrogram: SpectrogramConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.t_min <= self.t_max <= 1.0):
            raise InvalidInputError(
                f"need 0 <= t_min <= t_max <= 1, got [{self.t_min}, {self.t_max}]"
            )
        if self.t_max == 0.0:
            raise InvalidInputError("t_max must be positive (t' = 0 adds no noise)")
        if self.batch_size < 1:
            raise InvalidInputError("batch size must be >= 1")
        if self.n_denoise_steps < 1:
            raise InvalidInputError("denoising step count must be >= 1")
        if self.weight_mode not in WEIGHT_MODES:
            raise InvalidInputError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.update_variant not in VARIANTS:
            raise InvalidInputError(f"update_variant must be one of {VARIANTS}")
        if self.update_variant == "spec_decoder" and self.spectrogram is None:
            raise InvalidInputError("spec_decoder variant needs a spectrogram config")


@dataclass
class UpdateReport:
    """Parameter-shaped gradient plus the per-update diagnostics stream record."""

    gradient: object
    variant: str
    t_values: list
    residual_norms: list
    gradient_norm: float
    denoised_mean: Waveform | None = None

    @property
    def mean_residual(self) -> float:
        return float(np.mean(self.residual_norms)) if self.residual_norms else 0.0

    def log_record(self, step: int) -> dict:
        return {
            "step": step,
            "variant": self.variant,
            "mean_residual": self.mean_residual,
            "t_values": [round(float(t), 12) for t in self.t_values],
            "gradient_norm": self.gradient_norm,
        }


def sample_timestep(cfg: SDSConfig, rng) -> float:
    """t' ~ Uniform[t_min, t_max]."""
    return float(rng.uniform(cfg.t_min, cfg.t_max))


def _weight(cfg: SDSConfig, schedule, t: float) -> float:
    if cfg.weight_mode == "sigma_sq":
        return schedule.sigma(t) ** 2
    return 1.0


def _sample_rngs(cfg: SDSConfig, step: int, sample_seeds):
    if sample_seeds is not None:
        if len(sample_seeds) != cfg.batch_size:
            raise InvalidInputError("sample_seeds length must equal batch size")
        return [np.random.default_rng(s) for s in sample_seeds]
    return [
        np.random.default_rng([cfg.seed, step, b]) for b in range(cfg.batch_size)
    ]


def sds_update(theta, renderer, prior, cond, cfg: SDSConfig, step: int = 0,
               sample_seeds=None) -> UpdateReport:
    """Dispatch one batched update for the configured variant."""
    if cfg.update_variant == "classic":
        return sds_update_classic(theta, renderer, prior, cond, cfg, step, sample_seeds)
    if cfg.update_variant == "decoder":
        return sds_update_decoder(theta, renderer, prior, cond, cfg, step, sample_seeds)
    return sds_update_spec_decoder(theta, renderer, prior, cond, cfg, step, sample_seeds)


def sds_update_classic(theta, renderer, prior, cond, cfg: SDSConfig, step: int = 0,
                       sample_seeds=None) -> UpdateReport:
    if not prior.has_encode_vjp:
        raise CapabilityError(
            "classic update differentiates the encoder, which the active "
            "backend does not expose; use the decoder variants instead"
        )
    x = renderer.render(theta)
    h = prior.encode(x)
    rngs = _sample_rngs(cfg, step, sample_seeds)
    grads = []
    t_values = []
    residual_norms = []
    for rng in rngs:
        t = sample_timestep(cfg, rng)
        eps = rng.standard_normal(h.values.shape)
        z = add_noise(h, t, eps, prior.schedule)
        eps_hat = guided_prediction(prior, z, t, cond, cfg.guidance_scale)
        residual = _weight(cfg, prior.schedule, t) * prior.schedule.alpha(t) * (
            eps_hat - eps
        )
        x_cot = prior.encode_vjp(x, residual)
        g = renderer.vjp(theta, x_cot)
        grads.append(renderer.params_to_vector(g))
        t_values.append(t)
        residual_norms.append(float(np.linalg.norm(eps_hat - eps)))
    mean_grad = np.mean(grads, axis=0)
    return UpdateReport(
        gradient=renderer.params_from_vector(mean_grad, like=theta),
        variant="classic",
        t_values=t_values,
        residual_norms=residual_norms,
        gradient_norm=float(np.linalg.norm(mean_grad)),
    )


def _denoised_batch(x, prior, cond, cfg: SDSConfig, rngs):
    """Per-sample decoded partial-denoise targets x_hat and their t' draws."""
    h = prior.encode(x)
    outs = []
    t_values = []
    for rng in rngs:
        t = sample_timestep(cfg, rng)
        eps = rng.standard_normal(h.values.shape)
        z = add_noise(h, t, eps, prior.schedule)
        h_hat = prior.denoise_multistep(z, t, cond, cfg.n_denoise_steps,
                                        cfg.guidance_scale)
        outs.append(prior.decode(h_hat))
        t_values.append(t)
    return outs, t_values


def sds_update_decoder(theta, renderer, prior, cond, cfg: SDSConfig, step: int = 0,
                       sample_seeds=None) -> UpdateReport:
    x = renderer.render(theta)
    rngs = _sample_rngs(cfg, step, sample_seeds)
    x_hats, t_values = _denoised_batch(x, prior, cond, cfg, rngs)
    mean_hat = np.mean([w.samples for w in x_hats], axis=0)
    cot = Waveform(x.samples - mean_hat, x.sample_rate)
    g = renderer.vjp(theta, cot)
    gvec = renderer.params_to_vector(g)
    return UpdateReport(
        gradient=g,
        variant="decoder",
        t_values=t_values,
        residual_norms=[float(np.linalg.norm(x.samples - w.samples)) for w in x_hats],
        gradient_norm=float(np.linalg.norm(gvec)),
        denoised_mean=Waveform(mean_hat, x.sample_rate),
    )


def sds_update_spec_decoder(theta, renderer, prior, cond, cfg: SDSConfig,
                            step: int = 0, sample_seeds=None) -> UpdateReport:
    if cfg.spectrogram is None:
        raise InvalidInputError("spec_decoder variant needs a spectrogram config")
    x = renderer.render(theta)
    rngs = _sample_rngs(cfg, step, sample_seeds)
    x_hats, t_values = _denoised_batch(x, prior, cond, cfg, rngs)
    s_render = multiscale_spectrogram(x, cfg.spectrogram)
    hat_stacks = [multiscale_spectrogram(w, cfg.spectrogram) for w in x_hats]
    mean_grids = [
        np.mean([st.grids[m] for st in hat_stacks], axis=0)
        for m in range(cfg.spectrogram.num_scales)
    ]
    cot_stack = SpectrogramStack(
        [s - m for s, m in zip(s_render.grids, mean_grids)], cfg.spectrogram
    )
    x_cot = multiscale_vjp(x, cot_stack, cfg.spectrogram)
    g = renderer.vjp(theta, x_cot)
    gvec = renderer.params_to_vector(g)
    residuals = []
    for st in hat_stacks:
        sq = sum(
            np.sum((s_render.grids[m] - st.grids[m]) ** 2)
            for m in range(cfg.spectrogram.num_scales)
        )
        residuals.append(float(np.sqrt(sq)))
    mean_hat = np.mean([w.samples for w in x_hats], axis=0)
    return UpdateReport(
        gradient=g,
        variant="spec_decoder",
        t_values=t_values,
        residual_norms=residuals,
        gradient_norm=float(np.linalg.norm(gvec)),
        denoised_mean=Waveform(mean_hat, x.sample_rate),
    )
