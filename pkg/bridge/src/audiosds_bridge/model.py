"""Checkpoint loading and inference for the bridge.

Two model kinds:

EchoModel           protocol-identity stand-in (no checkpoint); predictions
                    echo their input tensor bit-exactly.
CheckpointModel     loads the flat deterministic checkpoint container
                    (JSON header + little-endian float64 arrays) and runs
                    the conv denoiser plus the linear strided-patch codec.

The wire contract is epsilon-prediction. Checkpoints declaring a
v-parametrization are adapted at prediction time via

    eps = alpha(t) * v_hat + sigma(t) * z

which is exact for variance-preserving schedules.
"""

from __future__ import annotations

import json
import struct

import numpy as np


class ModelError(RuntimeError):
    pass


_MAGIC = b"ASDS-CKPT-1\n"


def load_checkpoint(path):
    """Parse the checkpoint container into (meta, arrays)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(_MAGIC):
        raise ModelError(f"{path}: not a prior checkpoint (bad magic)")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from(">I", data, off)
    off += 4
    header = json.loads(data[off : off + hlen])
    off += hlen
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"]))
        arrays[entry["name"]] = (
            np.frombuffer(data, dtype="<f8", count=count, offset=off)
            .reshape(entry["shape"])
            .copy()
        )
        off += count * 8
    return header["meta"], arrays


def cosine_schedule_table(points=256):
    ts = np.linspace(0.0, 1.0, points)
    return [[float(t), float(np.cos(0.5 * np.pi * t)), float(np.sin(0.5 * np.pi * t))]
            for t in ts]


def _alpha(t):
    return float(np.cos(0.5 * np.pi * t))


def _sigma(t):
    return float(np.sin(0.5 * np.pi * t))


def eps_from_prediction(pred, z, t, parametrization):
    """Adapt a raw model output to the protocol's epsilon contract."""
    if parametrization == "epsilon":
        return pred
    if parametrization == "v":
        return _alpha(t) * pred + _sigma(t) * z
    raise ModelError(f"unknown noise parametrization {parametrization!r}")


def _conv1d_same(x, w, b):
    """x: (C_in, F), w: (C_out, C_in, K) with odd K, b: (C_out,)."""
    cin, F = x.shape
    cout, _, k = w.shape
    pad = k // 2
    xp = np.zeros((cin, F + 2 * pad))
    xp[:, pad : pad + F] = x
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)  # (Cin, F, K)
    return np.einsum("oik,ifk->of", w, windows) + b[:, None]


class EchoModel:
    latent_channels = 2
    compression = 1
    sample_rate = 44100
    schedule_table = staticmethod(cosine_schedule_table)

    def predict_noise(self, z, t, conditioning):
        return z.copy()

    def encode(self, audio, sample_rate):
        return audio.copy()

    def decode(self, latent):
        return latent.copy(), self.sample_rate

    def denoise_multistep(self, z, t, conditioning, n_steps, guidance_scale):
        return z.copy()


class CheckpointModel:
    """Inference over the toy-prior checkpoint format."""

    def __init__(self, path):
        meta, arrays = load_checkpoint(path)
        if meta.get("kind") != "toy-prior":
            raise ModelError(f"unsupported checkpoint kind {meta.get('kind')!r}")
        if meta.get("schedule") != "cosine-vp":
            raise ModelError(f"unsupported schedule {meta.get('schedule')!r}")
        self.meta = meta
        self.parametrization = meta.get("parametrization", "epsilon")
        if self.parametrization not in ("epsilon", "v"):
            raise ModelError(
                f"cannot adapt parametrization {self.parametrization!r} to epsilon"
            )
        self.latent_channels = int(meta["latent_channels"])
        self.compression = int(meta["compression"])
        self.sample_rate = int(meta["sample_rate"])
        self.hidden = int(meta["hidden"])
        self.class_names = list(meta["class_names"])
        self.latent_scale = float(meta.get("latent_scale", 1.0))
        self.identity_codec = meta.get("codec") == "identity"
        self.p = {k.split("/", 1)[1]: v for k, v in arrays.items()
                  if k.startswith("denoiser/")}
        if not self.identity_codec:
            self.enc_w = arrays["codec/enc_w"]
            self.dec_w = arrays["codec/dec_w"]

    def schedule_table(self, points=256):
        return cosine_schedule_table(points)

    # -- conditioning --------------------------------------------------------

    def _class_index(self, conditioning) -> int:
        if conditioning is None:
            return 0
        if "class_id" in conditioning:
            cid = int(conditioning["class_id"])
        else:
            prompt = str(conditioning.get("prompt", ""))
            if prompt not in self.class_names:
                raise ModelError(
                    f"prompt {prompt!r} is not a class of this checkpoint; "
                    f"classes: {self.class_names}"
                )
            cid = self.class_names.index(prompt)
        if not (0 <= cid < len(self.class_names)):
            raise ModelError(f"class id {cid} outside vocabulary")
        return cid + 1

    # -- denoiser forward ------------------------------------------------------

    def _cond_vector(self, t, class_index):
        freqs = np.array([1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
        ang = 2.0 * np.pi * t * freqs
        tf = np.concatenate([np.sin(ang), np.cos(ang), [t]])
        emb = self.p["class_emb"][class_index]
        cond_in = np.concatenate([tf, emb])
        return np.tanh(self.p["cond_w"] @ cond_in + self.p["cond_b"])

    def _raw_forward(self, z, t, class_index):
        p = self.p
        H = self.hidden
        c = self._cond_vector(float(t), class_index)
        film1 = p["film1_w"] @ c + p["film1_b"]
        film2 = p["film2_w"] @ c + p["film2_b"]
        s1, b1 = film1[:H], film1[H:]
        s2, b2 = film2[:H], film2[H:]
        h0 = np.tanh(_conv1d_same(z, p["conv_in_w"], p["conv_in_b"]))
        y1 = _conv1d_same(h0, p["conv1_w"], p["conv1_b"])
        h1 = np.tanh(y1 * (1.0 + s1[:, None]) + b1[:, None]) + h0
        y2 = _conv1d_same(h1, p["conv2_w"], p["conv2_b"])
        h2 = np.tanh(y2 * (1.0 + s2[:, None]) + b2[:, None]) + h1
        return _conv1d_same(h2, p["conv_out_w"], p["conv_out_b"])

    def predict_noise(self, z, t, conditioning):
        if z.ndim != 2 or z.shape[0] != self.latent_channels:
            raise ModelError(
                f"latent shape {z.shape} does not match the model's "
                f"{self.latent_channels} channels"
            )
        pred = self._raw_forward(z, t, self._class_index(conditioning))
        return eps_from_prediction(pred, z, float(t), self.parametrization)

    # -- codec -------------------------------------------------------------------

    def encode(self, audio, sample_rate):
        if sample_rate != self.sample_rate:
            raise ModelError(
                f"input sample rate {sample_rate} does not match the model's "
                f"{self.sample_rate}"
            )
        if audio.ndim != 2 or audio.shape[0] != 2:
            raise ModelError(f"audio must be (2, T), got {audio.shape}")
        if self.identity_codec:
            return audio.copy()
        P = self.compression
        frames = audio.shape[1] // P  # floor: trailing remainder is dropped
        if frames < 1:
            raise ModelError(f"audio shorter than one latent frame ({P} samples)")
        patches = audio[:, : frames * P].reshape(2, frames, P)
        return np.einsum("cqp,qfp->cf", self.enc_w, patches) / self.latent_scale

    def decode(self, latent):
        if self.identity_codec:
            return latent.copy(), self.sample_rate
        out = np.einsum("cqp,cf->qfp", self.dec_w, latent * self.latent_scale)
        return out.reshape(2, -1), self.sample_rate

    # -- sampling ----------------------------------------------------------------

    def denoise_multistep(self, z, t, conditioning, n_steps, guidance_scale):
        if n_steps < 1:
            raise ModelError(f"n_steps must be >= 1, got {n_steps}")
        t = float(t)
        if not (0.0 < t <= 1.0):
            raise ModelError(f"t must lie in (0, 1], got {t}")
        values = z
        for i in range(n_steps):
            t_i = t * (1.0 - i / n_steps)
            t_next = t * (1.0 - (i + 1) / n_steps)
            eps_c = self.predict_noise(values, t_i, conditioning)
            if conditioning is None or guidance_scale == 1.0:
                eps_hat = eps_c
            else:
                eps_u = self.predict_noise(values, t_i, None)
                eps_hat = guidance_scale * eps_c + (1.0 - guidance_scale) * eps_u
            x0 = (values - _sigma(t_i) * eps_hat) / _alpha(t_i)
            values = _alpha(t_next) * x0 + _sigma(t_next) * eps_hat
        return values
