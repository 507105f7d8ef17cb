"""Prior backends: the trained toy prior plus the test doubles.

Every backend exposes the same surface:

    schedule                       noise schedule (alpha/sigma on [0, 1])
    predict_noise(z, t, cond)      same-shape noise prediction
    encode(x) / decode(h)          codec between waveforms and latents
    decode_vjp(h, cotangent)       exact decoder derivative (if supported)
    encode_vjp(x, cotangent)       exact encoder derivative (if supported)
    denoise_multistep(...)         partial DDIM chain (local loop by default)

Remote backends (the wire client) may lack the VJP operations; callers
check ``has_encode_vjp`` / ``has_decode_vjp`` and raise CapabilityError.
"""

from __future__ import annotations

import numpy as np

from ..errors import CapabilityError, ConfigurationError, InvalidInputError
from ..waveform import Waveform
from .nets import LinearCodec, ToyDenoiser
from .ops import ddim_partial_chain
from .schedule import CosineSchedule
from .toy import ToyPriorCheckpoint
from .types import Conditioning, Latent


class PriorBackend:
    """Shared default behavior; concrete backends override the pieces they own."""

    schedule = CosineSchedule()
    has_encode_vjp = False
    has_decode_vjp = False

    def predict_noise(self, z: Latent, t: float, cond) -> np.ndarray:
        raise NotImplementedError

    def encode(self, x: Waveform) -> Latent:
        raise NotImplementedError

    def decode(self, h: Latent) -> Waveform:
        raise NotImplementedError

    def decode_vjp(self, h: Latent, cotangent: Waveform) -> np.ndarray:
        raise CapabilityError(f"{type(self).__name__} does not expose a decoder VJP")

    def encode_vjp(self, x: Waveform, cotangent: np.ndarray) -> Waveform:
        raise CapabilityError(f"{type(self).__name__} does not expose an encoder VJP")

    def denoise_multistep(
        self, z: Latent, t: float, cond, n_steps: int, guidance_scale: float = 1.0
    ) -> Latent:
        return ddim_partial_chain(self, z, t, cond, n_steps, guidance_scale)


class _IdentityCodecMixin:
    """Waveforms and latents are the same numbers; both VJPs are trivial."""

    has_encode_vjp = True
    has_decode_vjp = True
    sample_rate = 8000

    def encode(self, x: Waveform) -> Latent:
        return Latent(x.samples.copy(), compression=1)

    def decode(self, h: Latent) -> Waveform:
        return Waveform(h.values.copy(), self.sample_rate)

    def decode_vjp(self, h: Latent, cotangent: Waveform) -> np.ndarray:
        return np.array(cotangent.samples)

    def encode_vjp(self, x: Waveform, cotangent: np.ndarray) -> Waveform:
        return Waveform(np.array(cotangent), self.sample_rate)


class OracleBackend(_IdentityCodecMixin, PriorBackend):
    """Test double that returns exactly the noise the caller injected.

    Works algebraically: it remembers the latent it last encoded and
    recovers eps = (z - alpha h) / sigma, which matches the injected
    noise to rounding for any z built by add_noise on that latent.
    """

    def __init__(self, sample_rate: int = 8000):
        self.sample_rate = sample_rate
        self._last_latent = None

    def encode(self, x: Waveform) -> Latent:
        h = Latent(x.samples.copy(), compression=1)
        self._last_latent = h.values
        return h

    def predict_noise(self, z: Latent, t: float, cond) -> np.ndarray:
        if self._last_latent is None:
            raise InvalidInputError("oracle backend has not encoded a reference yet")
        if self._last_latent.shape != z.values.shape:
            raise InvalidInputError("oracle reference shape does not match input")
        sigma = self.schedule.sigma(t)
        if sigma == 0.0:
            raise InvalidInputError("oracle prediction undefined at t = 0")
        return (z.values - self.schedule.alpha(t) * self._last_latent) / sigma


class FrozenTargetBackend(_IdentityCodecMixin, PriorBackend):
    """Decoder double whose denoised-and-decoded output is a fixed target."""

    def __init__(self, target: Waveform):
        self.target = target
        self.sample_rate = target.sample_rate

    def predict_noise(self, z: Latent, t: float, cond) -> np.ndarray:
        return np.zeros_like(z.values)

    def denoise_multistep(self, z, t, cond, n_steps, guidance_scale=1.0) -> Latent:
        return Latent(self.target.samples.copy(), compression=1)

    def decode(self, h: Latent) -> Waveform:
        return self.target

    def decode_vjp(self, h: Latent, cotangent: Waveform) -> np.ndarray:
        return np.zeros((2, self.target.num_samples))  # constant map


class ToyPriorBackend(PriorBackend):
    """Inference over a trained ToyPriorCheckpoint (conv or identity codec)."""

    has_encode_vjp = True
    has_decode_vjp = True

    def __init__(self, checkpoint: ToyPriorCheckpoint):
        meta = checkpoint.meta
        if meta.get("kind") != "toy-prior":
            raise ConfigurationError("checkpoint is not a toy prior")
        if meta.get("parametrization") != "epsilon":
            raise ConfigurationError(
                f"unsupported parametrization {meta.get('parametrization')!r}"
            )
        self.meta = meta
        self.sample_rate = int(meta["sample_rate"])
        self.class_names = list(meta["class_names"])
        self.compression = int(meta["compression"])
        self.latent_channels = int(meta["latent_channels"])
        net = ToyDenoiser(
            int(meta["latent_channels"]), int(meta["hidden"]), len(self.class_names)
        )
        for k in net.params:
            net.params[k] = checkpoint.arrays[f"denoiser/{k}"]
        self._net = net
        if meta["codec"] == "conv":
            codec = LinearCodec(int(meta["latent_channels"]), self.compression)
            codec.params["enc_w"] = checkpoint.arrays["codec/enc_w"]
            codec.params["dec_w"] = checkpoint.arrays["codec/dec_w"]
            codec.latent_scale = float(meta["latent_scale"])
            self._codec = codec
        else:
            self._codec = None

    # -- conditioning ------------------------------------------------------

    def _class_index(self, cond) -> int:
        """Embedding row: 0 is unconditional, classes start at 1."""
        if cond is None:
            return 0
        if isinstance(cond, Conditioning):
            if cond.class_id is not None:
                cid = int(cond.class_id)
            else:
                try:
                    cid = self.class_names.index(cond.prompt)
                except ValueError:
                    raise ConfigurationError(
                        f"prompt {cond.prompt!r} is not a known class; "
                        f"toy classes: {self.class_names}"
                    )
        else:
            cid = int(cond)
        if not (0 <= cid < len(self.class_names)):
            raise InvalidInputError(
                f"class id {cid} outside vocabulary of {len(self.class_names)}"
            )
        return cid + 1

    # -- backend surface -----------------------------------------------------

    def predict_noise(self, z: Latent, t: float, cond) -> np.ndarray:
        idx = np.array([self._class_index(cond)])
        out = self._net.forward(z.values[None], np.array([float(t)]), idx)
        return out[0]

    def encode(self, x: Waveform) -> Latent:
        if self._codec is None:
            return Latent(x.samples.copy(), compression=1)
        return Latent(self._codec.encode(x.samples), compression=self.compression)

    def decode(self, h: Latent) -> Waveform:
        if self._codec is None:
            return Waveform(h.values.copy(), self.sample_rate)
        return Waveform(self._codec.decode(h.values), self.sample_rate)

    def decode_vjp(self, h: Latent, cotangent: Waveform) -> np.ndarray:
        if self._codec is None:
            return np.array(cotangent.samples)
        return self._codec.decode_vjp(cotangent.samples)

    def encode_vjp(self, x: Waveform, cotangent: np.ndarray) -> Waveform:
        if self._codec is None:
            return Waveform(np.array(cotangent), self.sample_rate)
        return Waveform(self._codec.encode_vjp(cotangent), self.sample_rate)
