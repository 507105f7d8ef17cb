"""Parameter checkpoints as structured text.

One line per field: ``<key> <JSON value>``. The first line identifies the
pack format. Values are the raw (pre-mapping) parameters, so a checkpoint
round-trips bit-exactly through ``repr``-faithful JSON floats.

Formats:
    fm-params-v1       log_fm_matrix, raw_ratios, raw_attacks, raw_decays
    impact-params-v1   amps, damps, freqs, reverb_*, noise_seed
    waveform-params-v1 samples (2 x T), sample_rate
    latent-params-v1   values (C x F), compression
"""

from __future__ import annotations

import json

import numpy as np

from .errors import FormatError
from .prior.types import Latent
from .render.fm import FMParams
from .render.impact import ImpactParams


def _emit(lines, key, value):
    if isinstance(value, np.ndarray):
        value = value.tolist()
    lines.append(f"{key} {json.dumps(value)}")


def params_to_text(params) -> str:
    lines = []
    if isinstance(params, FMParams):
        _emit(lines, "format", "fm-params-v1")
        _emit(lines, "log_fm_matrix", params.log_fm_matrix)
        _emit(lines, "raw_ratios", params.raw_ratios)
        _emit(lines, "raw_attacks", params.raw_attacks)
        _emit(lines, "raw_decays", params.raw_decays)
    elif isinstance(params, ImpactParams):
        _emit(lines, "format", "impact-params-v1")
        for key in ("amps", "damps", "freqs", "reverb_amps", "reverb_damps",
                    "reverb_freqs"):
            _emit(lines, key, getattr(params, key))
        _emit(lines, "noise_seed", params.noise_seed)
    elif isinstance(params, Latent):
        _emit(lines, "format", "latent-params-v1")
        _emit(lines, "values", params.values)
        _emit(lines, "compression", params.compression)
    elif isinstance(params, np.ndarray):
        _emit(lines, "format", "waveform-params-v1")
        _emit(lines, "samples", params)
    else:
        raise FormatError(f"no checkpoint format for {type(params).__name__}")
    return "\n".join(lines) + "\n"


def params_from_text(text: str):
    fields = {}
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        key, _, raw = line.partition(" ")
        try:
            fields[key] = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise FormatError(f"bad JSON on checkpoint line {i + 1}: {exc}")
    kind = fields.get("format")
    if kind == "fm-params-v1":
        return FMParams(
            np.array(fields["log_fm_matrix"]),
            np.array(fields["raw_ratios"]),
            np.array(fields["raw_attacks"]),
            np.array(fields["raw_decays"]),
        )
    if kind == "impact-params-v1":
        return ImpactParams(
            np.array(fields["amps"]), np.array(fields["damps"]),
            np.array(fields["freqs"]), np.array(fields["reverb_amps"]),
            np.array(fields["reverb_damps"]), np.array(fields["reverb_freqs"]),
            noise_seed=int(fields["noise_seed"]),
        )
    if kind == "latent-params-v1":
        return Latent(np.array(fields["values"]), int(fields["compression"]))
    if kind == "waveform-params-v1":
        return np.array(fields["samples"], dtype=np.float64)
    raise FormatError(f"unknown checkpoint format {kind!r}")


def save_params(params, path) -> None:
    with open(path, "w") as fh:
        fh.write(params_to_text(params))


def load_params(path):
    with open(path) as fh:
        return params_from_text(fh.read())
