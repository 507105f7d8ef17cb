"""Built-in task defaults and config layering.

The default tables pin the published optimization, guidance, and problem
hyperparameters per task; a config file overrides defaults, and CLI flags
override the file. Where a source gives a range, the default is the
range's conservative end and the field stays overridable:

    synth-fm      lr 1e-2 of [5e-3, 3e-2]; 4 denoising steps of 3-5
    synth-impact  lr 5e-3 of [5e-3, 1e-2]; 1000 iters of 1000-5000;
                  10 denoising steps of 10-25
    separate      all values are point estimates

``defaults_hash()`` guards the tables against silent drift.
"""

from __future__ import annotations

import hashlib
import json

TASK_DEFAULTS = {
    "synth-fm": {
        "batch_size": 8,
        "lr": 1e-2,
        "steps": 1000,
        "t_min": 0.6,
        "t_max": 1.0,
        "guidance_scale": 15.0,
        "n_denoise_steps": 4,
        "duration": 3.0,
        "sample_rate": 44100,
        "update_variant": "decoder",
        "operators": 4,
    },
    "synth-impact": {
        "batch_size": 8,
        "lr": 5e-3,
        "steps": 1000,
        "t_min": 0.7,
        "t_max": 1.0,
        "guidance_scale": 15.0,
        "n_denoise_steps": 10,
        "duration": 3.0,
        "sample_rate": 44100,
        "update_variant": "decoder",
        "modes": 2048,
        "freq_init_lo_hz": 100.0,
        "freq_init_hi_hz": 18000.0,
    },
    "separate": {
        "batch_size": 10,
        "lr": 5e-2,
        "steps": 1000,
        "t_min": 0.025,
        "t_max": 0.875,
        "guidance_scale": 60.0,
        "n_denoise_steps": 2,
        "gamma": 0.02,
        "window_sizes": [1024, 2048, 4096],
        "duration": 10.0,
        "sample_rate": 44100,
        "update_variant": "spec_decoder",
        "parametrization": "latent",
    },
}

# frozen fingerprint of the tables above; tests recompute and compare
DEFAULTS_SHA256 = "f1b7ae47c52d8cda7bd52e29459288cacf3d739dfca3e13cd87fce4690511b64"


def defaults_hash() -> str:
    canon = json.dumps(TASK_DEFAULTS, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def layered_config(task: str, file_config: dict | None, flag_overrides: dict) -> dict:
    """defaults < config file < command-line flags."""
    merged = dict(TASK_DEFAULTS.get(task, {}))
    for layer in (file_config or {}), flag_overrides:
        for key, value in layer.items():
            if value is not None:
                merged[key] = value
    return merged
