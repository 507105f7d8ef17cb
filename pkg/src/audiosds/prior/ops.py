"""Core diffusion operations shared by every backend."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from .types import Latent


def add_noise(h: Latent, t: float, eps: np.ndarray, schedule) -> Latent:
    """z = alpha(t) * h + sigma(t) * eps."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != h.values.shape:
        raise InvalidInputError(
            f"noise shape {eps.shape} does not match latent {h.values.shape}"
        )
    return h.like(schedule.alpha(t) * h.values + schedule.sigma(t) * eps)


def cfg_combine(eps_cond, eps_uncond, guidance_scale: float) -> np.ndarray:
    """Classifier-free guidance: eps_uncond + s * (eps_cond - eps_uncond).

    ``guidance_scale`` is s = 1 + tau; s = 1 returns the conditional
    prediction, s = 0 the unconditional one.
    """
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    if eps_cond.shape != eps_uncond.shape:
        raise InvalidInputError(
            f"prediction shapes differ: {eps_cond.shape} vs {eps_uncond.shape}"
        )
    s = float(guidance_scale)
    if s < 0:
        raise InvalidInputError(f"guidance scale must be >= 0, got {s}")
    # (1 + tau) cond - tau uncond with s = 1 + tau; exact at both endpoints
    return s * eps_cond + (1.0 - s) * eps_uncond


def guided_prediction(backend, z: Latent, t: float, cond, guidance_scale: float):
    """CFG-combined noise prediction; skips the second call when it cannot matter."""
    if cond is None:
        return backend.predict_noise(z, t, None)
    eps_cond = backend.predict_noise(z, t, cond)
    if guidance_scale == 1.0:
        return eps_cond
    eps_uncond = backend.predict_noise(z, t, None)
    return cfg_combine(eps_cond, eps_uncond, guidance_scale)


def ddim_partial_chain(
    backend, z: Latent, t_start: float, cond, n_steps: int, guidance_scale: float = 1.0
) -> Latent:
    """Deterministic partial sampling chain from t_start back to 0.

    Uses a uniform time grid; each step reconstructs the clean estimate
    from the guided noise prediction and re-noises at the next grid time:

        x0  = (z_i - sigma_i * eps_hat) / alpha_i
        z'  = alpha_next * x0 + sigma_next * eps_hat
    """
    if n_steps < 1:
        raise InvalidInputError(f"n_steps must be >= 1, got {n_steps}")
    t_start = float(t_start)
    if not (0.0 < t_start <= 1.0):
        raise InvalidInputError(f"t_start must lie in (0, 1], got {t_start}")
    sched = backend.schedule
    values = z.values
    for i in range(n_steps):
        t_i = t_start * (1.0 - i / n_steps)
        t_next = t_start * (1.0 - (i + 1) / n_steps)
        eps_hat = guided_prediction(backend, z.like(values), t_i, cond, guidance_scale)
        a_i = sched.alpha(t_i)
        x0 = (values - sched.sigma(t_i) * eps_hat) / a_i
        values = sched.alpha(t_next) * x0 + sched.sigma(t_next) * eps_hat
    return z.like(values)
