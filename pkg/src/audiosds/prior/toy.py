"""Trainable desk-scale conditional prior over synthetic signal classes.

The corpus generator produces three families of 1-second-scale signals
(band-limited noise, decaying sinusoids, linear chirps), each confined to
a frequency band and fully determined by (corpus seed, class, item). The
prior is a noise-prediction conv net trained on latents from either the
linear patch codec or an identity codec, with classifier-free dropout so
guided predictions work at inference time.

Checkpoints use a flat deterministic container (JSON header + raw
little-endian float64 arrays) so identical training runs hash identically.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, InvalidInputError, TrainingError
from ..waveform import Waveform
from .nets import AdamState, LinearCodec, ToyDenoiser

_MAGIC = b"ASDS-CKPT-1\n"


# -- synthetic corpus -------------------------------------------------------


@dataclass(frozen=True)
class SignalClassSpec:
    """One signal family confined to [f_lo_hz, f_hi_hz]."""

    name: str
    kind: str  # band_noise | decaying_sine | chirp
    f_lo_hz: float
    f_hi_hz: float

    def __post_init__(self):
        if self.kind not in ("band_noise", "decaying_sine", "chirp"):
            raise InvalidInputError(f"unknown signal kind {self.kind!r}")
        if not (0 < self.f_lo_hz < self.f_hi_hz):
            raise InvalidInputError("need 0 < f_lo < f_hi")


@dataclass(frozen=True)
class CorpusSpec:
    classes: tuple
    sample_rate: int = 8000
    duration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        nyq = self.sample_rate / 2
        for c in self.classes:
            if c.f_hi_hz >= nyq:
                raise InvalidInputError(
                    f"class {c.name!r} band reaches {c.f_hi_hz} Hz >= Nyquist {nyq}"
                )

    @property
    def num_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def class_names(self):
        return [c.name for c in self.classes]

    def to_json(self):
        return {
            "classes": [
                {"name": c.name, "kind": c.kind, "f_lo_hz": c.f_lo_hz, "f_hi_hz": c.f_hi_hz}
                for c in self.classes
            ],
            "sample_rate": self.sample_rate,
            "duration": self.duration,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(obj) -> "CorpusSpec":
        return CorpusSpec(
            classes=tuple(SignalClassSpec(**c) for c in obj["classes"]),
            sample_rate=obj["sample_rate"],
            duration=obj["duration"],
            seed=obj["seed"],
        )


def two_band_corpus(sample_rate=8000, duration=1.0, seed=0) -> CorpusSpec:
    """Two disjoint-band noise classes; the default separation study corpus.

    Band edges scale with the sample rate (300-800 Hz and 1500-2500 Hz at
    8 kHz) so smaller test rates stay inside Nyquist.
    """
    f = sample_rate / 8000.0
    return CorpusSpec(
        classes=(
            SignalClassSpec("low_band", "band_noise", 300.0 * f, 800.0 * f),
            SignalClassSpec("high_band", "band_noise", 1500.0 * f, 2500.0 * f),
        ),
        sample_rate=sample_rate,
        duration=duration,
        seed=seed,
    )


def generate_item(corpus: CorpusSpec, class_index: int, item_index: int) -> Waveform:
    """Deterministic corpus item; mono signal duplicated to stereo."""
    spec = corpus.classes[class_index]
    rng = np.random.default_rng([corpus.seed, class_index, item_index])
    sr, T = corpus.sample_rate, corpus.num_samples
    t = np.arange(T) / sr
    if spec.kind == "band_noise":
        white = rng.standard_normal(T)
        spectrum = np.fft.rfft(white)
        freqs = np.fft.rfftfreq(T, 1.0 / sr)
        mask = (freqs >= spec.f_lo_hz) & (freqs <= spec.f_hi_hz)
        x = np.fft.irfft(spectrum * mask, T)
        rms = np.sqrt(np.mean(x * x))
        x = 0.15 * x / max(rms, 1e-12)
    elif spec.kind == "decaying_sine":
        f = rng.uniform(spec.f_lo_hz, spec.f_hi_hz)
        phase = rng.uniform(0, 2 * np.pi)
        damp = rng.uniform(1.0, 4.0)
        x = 0.3 * np.exp(-damp * t) * np.sin(2 * np.pi * f * t + phase)
    else:  # chirp
        f0 = rng.uniform(spec.f_lo_hz, spec.f_hi_hz)
        f1 = rng.uniform(spec.f_lo_hz, spec.f_hi_hz)
        sweep = f0 * t + (f1 - f0) * t * t / (2 * corpus.duration)
        fade = np.minimum(1.0, 10 * (1.0 - t / corpus.duration))
        x = 0.3 * np.sin(2 * np.pi * sweep) * fade
    return Waveform(x, sr)


# -- checkpoint container ----------------------------------------------------


class ToyPriorCheckpoint:
    """Denoiser + codec weights with training metadata; deterministic bytes."""

    def __init__(self, meta: dict, arrays: dict):
        self.meta = meta
        self.arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}

    def to_bytes(self) -> bytes:
        names = sorted(self.arrays)
        header = json.dumps(
            {
                "meta": self.meta,
                "arrays": [
                    {"name": n, "shape": list(self.arrays[n].shape)} for n in names
                ],
            },
            sort_keys=True,
            separators=(",", ":"),
        ).encode()
        blob = bytearray(_MAGIC)
        blob += struct.pack(">I", len(header))
        blob += header
        for n in names:
            blob += np.ascontiguousarray(self.arrays[n], dtype="<f8").tobytes()
        return bytes(blob)

    @staticmethod
    def from_bytes(data: bytes) -> "ToyPriorCheckpoint":
        if not data.startswith(_MAGIC):
            raise ConfigurationError("not a toy prior checkpoint (bad magic)")
        off = len(_MAGIC)
        (hlen,) = struct.unpack_from(">I", data, off)
        off += 4
        header = json.loads(data[off : off + hlen])
        off += hlen
        arrays = {}
        for entry in header["arrays"]:
            count = int(np.prod(entry["shape"]))
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
            arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
            off += count * 8
        return ToyPriorCheckpoint(header["meta"], arrays)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @staticmethod
    def load(path) -> "ToyPriorCheckpoint":
        with open(path, "rb") as fh:
            return ToyPriorCheckpoint.from_bytes(fh.read())

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


# -- training ----------------------------------------------------------------


@dataclass
class TrainingConfig:
    steps: int = 2000
    batch_size: int = 8
    lr: float = 2e-3
    hidden: int = 32
    codec: str = "conv"  # conv | identity
    latent_channels: int = 20
    patch: int = 32
    codec_steps: int = 800
    codec_lr: float = 1e-2
    items_per_class: int = 24
    p_uncond: float = 0.15
    seed: int = 0
    log_every: int = 50

    def __post_init__(self):
        if self.codec not in ("conv", "identity"):
            raise InvalidInputError(f"unknown codec mode {self.codec!r}")


def _train_codec(corpus: CorpusSpec, cfg: TrainingConfig, rng):
    codec = LinearCodec(cfg.latent_channels, cfg.patch, seed=cfg.seed)
    adam = AdamState(codec.params, lr=cfg.codec_lr)
    items = [
        generate_item(corpus, c, i).samples
        for c in range(len(corpus.classes))
        for i in range(cfg.items_per_class)
    ]
    for step in range(cfg.codec_steps):
        x = items[rng.integers(len(items))]
        loss, grads = codec.reconstruction_grads(x)
        if not np.isfinite(loss):
            raise TrainingError("codec training diverged", step=step)
        adam.update(codec.params, grads)
    # latents should be near unit scale for the denoiser
    stds = [np.std(codec.encode_raw(x)) for x in items]
    codec.latent_scale = float(np.mean(stds))
    return codec


def train_toy_prior(corpus: CorpusSpec, cfg: TrainingConfig) -> ToyPriorCheckpoint:
    """Denoising-MSE training of the class-conditional toy prior."""
    rng = np.random.default_rng([cfg.seed, 101])
    n_classes = len(corpus.classes)

    if cfg.codec == "conv":
        codec = _train_codec(corpus, cfg, rng)
        latent_channels = cfg.latent_channels
        compression = cfg.patch
        encode = codec.encode
    else:
        codec = None
        latent_channels = 2
        compression = 1
        encode = lambda samples: samples.copy()

    latents = np.stack([
        np.stack([
            encode(generate_item(corpus, c, i).samples)
            for i in range(cfg.items_per_class)
        ])
        for c in range(n_classes)
    ])  # (classes, items, C, F)

    net = ToyDenoiser(latent_channels, cfg.hidden, n_classes, seed=cfg.seed)
    adam = AdamState(net.params, lr=cfg.lr)
    loss_curve = []
    for step in range(cfg.steps):
        cls = rng.integers(0, n_classes, size=cfg.batch_size)
        item = rng.integers(0, cfg.items_per_class, size=cfg.batch_size)
        h = latents[cls, item]
        t = rng.uniform(0.0, 1.0, size=cfg.batch_size)
        eps = rng.standard_normal(h.shape)
        alpha = np.cos(0.5 * np.pi * t)[:, None, None]
        sigma = np.sin(0.5 * np.pi * t)[:, None, None]
        z = alpha * h + sigma * eps
        # classifier-free dropout: index 0 is the unconditional embedding
        drop = rng.uniform(size=cfg.batch_size) < cfg.p_uncond
        class_idx = np.where(drop, 0, cls + 1)
        pred, cache = net.forward(z, t, class_idx, want_cache=True)
        diff = pred - eps
        loss = float(np.mean(diff * diff))
        if not np.isfinite(loss):
            raise TrainingError("denoiser training diverged", step=step)
        if step % cfg.log_every == 0 or step == cfg.steps - 1:
            loss_curve.append([step, loss])
        grads, _ = net.backward(cache, 2.0 * diff / diff.size)
        adam.update(net.params, grads)

    meta = {
        "kind": "toy-prior",
        "parametrization": "epsilon",
        "schedule": "cosine-vp",
        "corpus": corpus.to_json(),
        "class_names": corpus.class_names(),
        "codec": cfg.codec,
        "latent_channels": latent_channels,
        "compression": compression,
        "hidden": cfg.hidden,
        "sample_rate": corpus.sample_rate,
        "seed": cfg.seed,
        "steps": cfg.steps,
        "loss_curve": loss_curve,
        "latent_scale": codec.latent_scale if codec else 1.0,
    }
    arrays = {f"denoiser/{k}": v for k, v in net.params.items()}
    if codec is not None:
        arrays["codec/enc_w"] = codec.params["enc_w"]
        arrays["codec/dec_w"] = codec.params["dec_w"]
    return ToyPriorCheckpoint(meta, arrays)
