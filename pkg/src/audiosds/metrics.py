"""Separation metrics and report assembly.

SI-SDR is the default distortion measure: the estimate is projected onto
the reference before the residual power is measured, so pure rescalings
score at the cap. Plain SDR is available behind a flag. Infinite ratios
are capped at +100 dB to keep reports serializable.

The optional CLAP alignment score is strictly an external service; when
no client is configured the report marks the field unavailable instead
of inventing a number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ProtocolError, UndefinedMetricError
from .waveform import Waveform

SDR_CAP_DB = 100.0
_CAP_RATIO = 10.0 ** (SDR_CAP_DB / 10.0)


def _channel_sdr(ref: np.ndarray, est: np.ndarray, scale_invariant: bool) -> float:
    if scale_invariant:
        target = (np.dot(est, ref) / np.dot(ref, ref)) * ref
    else:
        target = ref
    noise = est - target
    num = float(np.dot(target, target))
    den = float(np.dot(noise, noise))
    if den <= num / _CAP_RATIO:
        return SDR_CAP_DB
    if num == 0.0:
        return -SDR_CAP_DB
    return float(10.0 * np.log10(num / den))


def si_sdr(reference: Waveform, estimate: Waveform, scale_invariant: bool = True) -> float:
    """Scale-invariant SDR in dB, averaged over channels; capped at +/-100 dB."""
    reference.require_compatible(estimate, "metric inputs")
    if not np.any(reference.samples):
        raise UndefinedMetricError("SI-SDR is undefined for a silent reference")
    vals = [
        _channel_sdr(reference.samples[ch], estimate.samples[ch], scale_invariant)
        for ch in range(2)
    ]
    return float(np.mean(vals))


def _window_slice(w: Waveform, window: str) -> Waveform:
    if window == "full":
        return w
    if window == "first_half":
        half = w.num_samples // 2
        if half < 1:
            raise InvalidInputError("clip too short for a first-half window")
        return Waveform(w.samples[:, :half], w.sample_rate)
    raise InvalidInputError(f"unknown report window {window!r}")


@dataclass
class ReportRow:
    mixture_id: str
    source_index: int  # -1 marks the reconstructed-mixture row
    window: str
    sdr_db: float | None
    clap: float | None
    run_id: str

    def csv_fields(self):
        return [
            self.mixture_id,
            str(self.source_index),
            self.window,
            "" if self.sdr_db is None else f"{self.sdr_db:.6f}",
            "" if self.clap is None else f"{self.clap:.6f}",
            self.run_id,
        ]


@dataclass
class SeparationReport:
    rows: list = field(default_factory=list)

    CSV_HEADER = "mixture_id,source_index,window,sdr_db,clap,run_id"

    def to_csv(self, path=None) -> str:
        lines = [self.CSV_HEADER]
        lines += [",".join(r.csv_fields()) for r in self.rows]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def sdr(self, source_index: int, window: str = "full"):
        for r in self.rows:
            if r.source_index == source_index and r.window == window:
                return r.sdr_db
        return None


def build_separation_report(
    mixture: Waveform,
    estimates: list,
    references: list | None = None,
    windows=("full", "first_half"),
    prompts: list | None = None,
    clap_client=None,
    mixture_id: str = "mixture",
    run_id: str = "run",
    scale_invariant: bool = True,
) -> SeparationReport:
    """Rows per (source, window) plus the reconstructed-mixture row.

    Per-source SDR columns need ground-truth references; without them the
    field is left empty. Window metrics are computed from identical sample
    ranges for every source.
    """
    for w in windows:
        if w == "first_half" and mixture.num_samples < 2:
            raise InvalidInputError("clip too short for a first-half window")
    if references is not None and len(references) != len(estimates):
        raise InvalidInputError("need one reference per estimate")

    recon = estimates[0]
    for est in estimates[1:]:
        recon = recon + est

    rows = []
    for window in windows:
        for k, est in enumerate(estimates):
            sdr_val = None
            if references is not None:
                sdr_val = si_sdr(
                    _window_slice(references[k], window),
                    _window_slice(est, window),
                    scale_invariant,
                )
            clap_val = None
            if clap_client is not None and prompts is not None:
                clap_val = clap_score(est, prompts[k], clap_client)
            rows.append(ReportRow(mixture_id, k, window, sdr_val, clap_val, run_id))
        rows.append(
            ReportRow(
                mixture_id,
                -1,
                window,
                si_sdr(_window_slice(mixture, window), _window_slice(recon, window),
                       scale_invariant),
                None,
                run_id,
            )
        )
    return SeparationReport(rows)


def clap_score(audio: Waveform, prompt: str, client) -> float:
    """Audio-text alignment in [-1, 1] from an external scoring client."""
    from .wavio import wav_bytes
    import base64
    import json

    payload = json.dumps(
        {
            "audio_wav_b64": base64.b64encode(wav_bytes(audio)).decode("ascii"),
            "prompt": prompt,
        }
    )
    raw = client.post(payload)
    try:
        score = float(str(raw).strip())
    except ValueError as exc:
        raise ProtocolError(f"CLAP service returned a non-numeric score: {raw!r}") from exc
    if not (-1.0 <= score <= 1.0):
        raise ProtocolError(f"CLAP score {score} outside [-1, 1]")
    return score
