#!/usr/bin/env python3
"""Regenerate the bridge test fixtures.

Trains a tiny checkpoint with the audiosds toolkit and freezes golden
predict/encode/decode outputs computed by the toolkit's own in-process
backend, so the bridge's reimplemented inference can be verified without
importing the toolkit at test time.
"""

import json
from pathlib import Path

import numpy as np

from audiosds.prior import Conditioning, Latent
from audiosds.prior.backends import ToyPriorBackend
from audiosds.prior.toy import TrainingConfig, train_toy_prior, two_band_corpus

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    corpus = two_band_corpus(sample_rate=4000, duration=0.512, seed=13)
    cfg = TrainingConfig(steps=120, codec_steps=120, items_per_class=6, seed=13,
                         patch=16, latent_channels=10, hidden=16)
    ckpt = train_toy_prior(corpus, cfg)
    ckpt.save(FIXTURES / "tiny_prior.ckpt")

    backend = ToyPriorBackend(ckpt)
    rng = np.random.default_rng(99)
    z = rng.standard_normal((10, 32)).astype(np.float32).astype(np.float64)
    audio = (0.3 * rng.standard_normal((2, 512))).astype(np.float32).astype(np.float64)

    latent = backend.encode(
        __import__("audiosds.waveform", fromlist=["Waveform"]).Waveform(audio, 4000)
    )
    decoded = backend.decode(Latent(z[:, :32], compression=16))
    golden = {
        "z": z.tolist(),
        "audio": audio.tolist(),
        "t": 0.375,
        "eps_cond": backend.predict_noise(
            Latent(z), 0.375, Conditioning(class_id=1)
        ).tolist(),
        "eps_uncond": backend.predict_noise(Latent(z), 0.375, None).tolist(),
        "denoise_2step": backend.denoise_multistep(
            Latent(z), 0.375, Conditioning(class_id=0), 2, 2.0
        ).values.tolist(),
        "encoded": latent.values.tolist(),
        "decoded": decoded.samples.tolist(),
        "checkpoint_hash": ckpt.content_hash(),
    }
    with open(FIXTURES / "golden_inference.json", "w") as fh:
        json.dump(golden, fh)
    print("bridge fixtures written to", FIXTURES)


if __name__ == "__main__":
    main()
