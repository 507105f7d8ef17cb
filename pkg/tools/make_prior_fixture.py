#!/usr/bin/env python3
"""Regenerate the frozen prior fixture under tests/fixtures/.

Trains a tiny deterministic checkpoint and freezes denoise outputs so the
multistep sampler is regression-locked against drift.
"""

import json
from pathlib import Path

import numpy as np

from audiosds.prior import Conditioning, Latent
from audiosds.prior.backends import ToyPriorBackend
from audiosds.prior.toy import TrainingConfig, train_toy_prior, two_band_corpus

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def main():
    corpus = two_band_corpus(sample_rate=4000, duration=0.512, seed=21)
    cfg = TrainingConfig(steps=150, codec_steps=150, items_per_class=6, seed=21,
                         patch=16, latent_channels=10, hidden=16)
    ckpt = train_toy_prior(corpus, cfg)
    ckpt.save(FIXTURES / "tiny_prior.ckpt")

    backend = ToyPriorBackend(ckpt)
    rng = np.random.default_rng(31)
    z = Latent(rng.standard_normal((10, 32)).astype(np.float32).astype(np.float64))
    cond = Conditioning(class_id=1)
    golden = {
        "z": z.values.tolist(),
        "t": 0.65,
        "guidance_scale": 2.0,
        "one_step": backend.denoise_multistep(z, 0.65, cond, 1, 2.0).values.tolist(),
        "two_step": backend.denoise_multistep(z, 0.65, cond, 2, 2.0).values.tolist(),
        "checkpoint_hash": ckpt.content_hash(),
    }
    with open(FIXTURES / "golden_denoise.json", "w") as fh:
        json.dump(golden, fh)
    print("prior fixture written to", FIXTURES)


if __name__ == "__main__":
    main()
