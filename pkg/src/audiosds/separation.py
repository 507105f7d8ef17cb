"""Prompt-guided source separation.

A mixture is decomposed into K sources, each with its own conditioning
and parametrization:

latent     the source is a latent tensor decoded through the prior's
           codec (the default; far fewer parameters)
waveform   the source is its raw stereo samples (encoder-free; works
           against backends without a decoder VJP)

Each optimizer step combines the multiscale spectral reconstruction
gradient with a weighted per-source score-distillation term:

    grad_k = d L_rec / d theta_k + gamma * sds_grad_k

Per-source randomness is keyed by a seed attached to the source spec, so
permuting (source, prompt) pairs permutes the gradients identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AudioSDSError, CapabilityError, InvalidInputError
from .metrics import si_sdr
from .optimize import OptimizerSettings, Trajectory, VectorOptimizer
from .prior.types import Conditioning, Latent
from .sds import SDSConfig, sds_update
from .spectrogram import (
    SpectrogramConfig,
    multiscale_spectrogram,
    multiscale_vjp,
)
from .waveform import Waveform


class LatentSourceRenderer:
    """Renderer over latent parameters: render = decode, VJP = decoder adjoint."""

    def __init__(self, prior, template: Latent):
        if not prior.has_decode_vjp:
            raise CapabilityError(
                "latent-parametrized sources need a decoder VJP; this backend "
                "does not expose one (use waveform parametrization)"
            )
        self.prior = prior
        self.shape = template.values.shape
        self.compression = template.compression

    def render(self, h: Latent) -> Waveform:
        return self.prior.decode(h)

    def vjp(self, h: Latent, cotangent: Waveform) -> Latent:
        return Latent(self.prior.decode_vjp(h, cotangent), self.compression)

    def params_to_vector(self, h: Latent) -> np.ndarray:
        return h.values.ravel().copy()

    def params_from_vector(self, vec, like=None) -> Latent:
        return Latent(np.asarray(vec, dtype=np.float64).reshape(self.shape),
                      self.compression)

    def project(self, h: Latent) -> Latent:
        return h


@dataclass
class SourceSpec:
    """One source: parametrization, conditioning, optional explicit init.

    The seed travels with the source, so permuting the source list
    permutes the resulting gradients identically.
    """

    conditioning: Conditioning | None
    parametrization: str = "latent"  # latent | waveform
    initial: object = None
    seed: int | None = None
    name: str = ""

    def __post_init__(self):
        if self.parametrization not in ("latent", "waveform"):
            raise InvalidInputError(
                f"unknown parametrization {self.parametrization!r}"
            )


@dataclass
class SeparationProblem:
    mixture: Waveform
    sources: list
    prior: object
    gamma: float = 0.02
    sds: SDSConfig = field(default_factory=lambda: SDSConfig(
        t_min=0.025, t_max=0.875, guidance_scale=60.0, batch_size=10,
        n_denoise_steps=2, update_variant="spec_decoder",
        spectrogram=SpectrogramConfig(),
    ))
    spectrogram: SpectrogramConfig = field(default_factory=SpectrogramConfig)
    optimizer: OptimizerSettings = field(default_factory=lambda: OptimizerSettings(
        lr=5e-2, steps=1000, checkpoint_every=200,
    ))
    init_noise_std: float = 0.01
    name: str = "separation"

    def __post_init__(self):
        if len(self.sources) < 2:
            raise InvalidInputError("separation needs at least two sources")
        if self.gamma <= 0:
            raise InvalidInputError("gamma must be positive")
        for k, s in enumerate(self.sources):
            if s.seed is None:
                self.sources[k] = replace(s, seed=1000 + k)

    def renderers(self):
        out = []
        for s in self.sources:
            if s.parametrization == "latent":
                template = self.prior.encode(self.mixture)
                out.append(LatentSourceRenderer(self.prior, template))
            else:
                from .render.base import IdentityRenderer, RenderSpec

                spec = RenderSpec(
                    self.mixture.num_samples / self.mixture.sample_rate,
                    self.mixture.sample_rate,
                )
                out.append(IdentityRenderer(spec))
        return out

    def initial_thetas(self):
        """Mixture-share initialization: enc(m/K) (or m/K) plus small noise."""
        K = len(self.sources)
        out = []
        for k, s in enumerate(self.sources):
            rng = np.random.default_rng([s.seed, 17])
            if s.initial is not None:
                out.append(s.initial)
            elif s.parametrization == "latent":
                base = self.prior.encode(self.mixture * (1.0 / K))
                noisy = base.values + self.init_noise_std * rng.standard_normal(
                    base.values.shape
                )
                out.append(Latent(noisy, base.compression))
            else:
                base = self.mixture.samples / K
                out.append(base + self.init_noise_std * rng.standard_normal(base.shape))
        return out


def baseline_assignment(mixture: Waveform, num_sources: int):
    """The trivial decomposition: every source is m / K (sources still sum to m)."""
    if num_sources < 1:
        raise InvalidInputError("need at least one source")
    return [mixture * (1.0 / num_sources) for _ in range(num_sources)]


def mixture_residual(problem: SeparationProblem, thetas, renderers=None):
    """Multiscale spectral reconstruction loss and its per-source gradients."""
    renderers = renderers or problem.renderers()
    renders = [r.render(t) for r, t in zip(renderers, thetas)]
    total = renders[0]
    for w in renders[1:]:
        total = total + w
    problem.mixture.require_compatible(total, "mixture and source sum")
    s_mix = multiscale_spectrogram(problem.mixture, problem.spectrogram)
    s_tot = multiscale_spectrogram(total, problem.spectrogram)
    diff = s_tot - s_mix
    loss = diff.norm_sq()
    wave_cot = multiscale_vjp(total, diff.scaled(2.0), problem.spectrogram)
    grads = [r.vjp(t, wave_cot) for r, t in zip(renderers, thetas)]
    return loss, grads, renders


def separation_update(problem: SeparationProblem, thetas, step: int = 0,
                      renderers=None):
    """Combined update per source: reconstruction gradient + gamma * SDS term."""
    renderers = renderers or problem.renderers()
    rec_loss, rec_grads, renders = mixture_residual(problem, thetas, renderers)
    grads = []
    diagnostics = {"step": step, "rec_loss": rec_loss, "sources": []}
    for k, (src, renderer, theta) in enumerate(zip(problem.sources, renderers, thetas)):
        cfg = replace(problem.sds, seed=src.seed, spectrogram=problem.spectrogram)
        try:
            report = sds_update(theta, renderer, problem.prior, src.conditioning,
                                cfg, step=step)
        except AudioSDSError as exc:
            exc.args = (f"source {k}: {exc}",)
            raise
        rec_vec = renderer.params_to_vector(rec_grads[k])
        sds_vec = renderer.params_to_vector(report.gradient)
        combined = rec_vec + problem.gamma * sds_vec
        grads.append(renderer.params_from_vector(combined, like=theta))
        diagnostics["sources"].append(
            {
                "index": k,
                "mean_residual": report.mean_residual,
                "sds_grad_norm": report.gradient_norm,
                "combined_grad_norm": float(np.linalg.norm(combined)),
            }
        )
    return grads, diagnostics, renders


def optimize_separation(problem: SeparationProblem) -> Trajectory:
    renderers = problem.renderers()
    thetas = problem.initial_thetas()
    vecs = [r.params_to_vector(t) for r, t in zip(renderers, thetas)]
    opts = [VectorOptimizer(v.size, problem.optimizer) for v in vecs]
    traj = Trajectory()
    traj.checkpoints.append((0, [v.copy() for v in vecs]))
    last_good = [v.copy() for v in vecs]
    last_good_step = 0
    for step in range(problem.optimizer.steps):
        grads, diag, renders = separation_update(problem, thetas, step, renderers)
        bad = False
        for k in range(len(thetas)):
            vecs[k] = opts[k].step(vecs[k], renderers[k].params_to_vector(grads[k]))
            if not np.all(np.isfinite(vecs[k])):
                bad = True
                break
        if bad:
            traj.aborted = True
            traj.abort_reason = f"non-finite parameter at step {step}"
            vecs = last_good
            break
        thetas = [
            r.project(r.params_from_vector(v, like=t))
            for r, v, t in zip(renderers, vecs, thetas)
        ]
        vecs = [r.params_to_vector(t) for r, t in zip(renderers, thetas)]
        last_good = [v.copy() for v in vecs]
        last_good_step = step + 1

        total = renders[0]
        for w in renders[1:]:
            total = total + w
        diag["mixture_sdr"] = si_sdr(problem.mixture, total)
        traj.records.append(diag)
        if (step + 1) % problem.optimizer.checkpoint_every == 0:
            traj.checkpoints.append((step + 1, [v.copy() for v in vecs]))
    traj.final_params = [
        r.params_from_vector(v, like=t) for r, v, t in zip(renderers, last_good, thetas)
    ]
    if traj.checkpoints[-1][0] != last_good_step:
        traj.checkpoints.append((last_good_step, [v.copy() for v in last_good]))
    traj.final_renders = [r.render(t) for r, t in zip(renderers, traj.final_params)]
    return traj
