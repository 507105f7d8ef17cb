"""Minimal RIFF/WAVE reader and writer.

Supports the two codecs the toolkit emits and consumes:

* PCM-16 (format tag 1), little-endian signed shorts
* IEEE float-32 (format tag 3)

The reader walks the chunk list explicitly so malformed files can be
reported with the byte offset of the first inconsistency. Mono files are
duplicated to stereo on read; files with more than two channels are
rejected. Write-then-read round trips are bit-exact for float-32 and
within one LSB (1/32768) for PCM-16.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError, InvalidInputError
from .waveform import Waveform

_PCM16 = 1
_FLOAT32 = 3


def wav_read(path) -> Waveform:
    """Read a WAV file into a stereo Waveform."""
    with open(path, "rb") as fh:
        data = fh.read()
    return _parse_wav(data)


def _parse_wav(data: bytes) -> Waveform:
    if len(data) < 12:
        raise FormatError("file too short for a RIFF header", offset=len(data))
    if data[0:4] != b"RIFF":
        raise FormatError("missing RIFF magic", offset=0)
    if data[8:12] != b"WAVE":
        raise FormatError("missing WAVE form type", offset=8)

    fmt = None
    samples = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        body_end = body_start + chunk_size
        if body_end > len(data):
            raise FormatError(
                f"chunk {chunk_id!r} of size {chunk_size} overruns the file", offset=pos
            )
        body = data[body_start:body_end]
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise FormatError("fmt chunk shorter than 16 bytes", offset=pos)
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if fmt is None:
                raise FormatError("data chunk before fmt chunk", offset=pos)
            samples = _decode_samples(body, fmt, body_start)
        pos = body_end + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None:
        raise FormatError("no fmt chunk found", offset=len(data))
    if samples is None:
        raise FormatError("no data chunk found", offset=len(data))
    return Waveform(samples, fmt[2])


def _decode_samples(body: bytes, fmt, body_offset: int) -> np.ndarray:
    tag, channels, _rate, _byte_rate, block_align, bits = fmt
    if tag == _PCM16 and bits == 16:
        dtype = np.dtype("<i2")
    elif tag == _FLOAT32 and bits == 32:
        dtype = np.dtype("<f4")
    else:
        raise FormatError(
            f"unsupported codec: format tag {tag}, {bits}-bit", offset=body_offset
        )
    if channels not in (1, 2):
        raise FormatError(f"unsupported channel count {channels}", offset=body_offset)
    expected_align = channels * dtype.itemsize
    if block_align not in (0, expected_align):
        raise FormatError(
            f"block align {block_align} inconsistent with {channels}ch {bits}-bit",
            offset=body_offset,
        )
    if len(body) % expected_align != 0:
        raise FormatError(
            "data chunk size is not a whole number of frames",
            offset=body_offset + len(body),
        )
    flat = np.frombuffer(body, dtype=dtype)
    if flat.size == 0:
        raise FormatError("data chunk holds zero frames", offset=body_offset)
    frames = flat.reshape(-1, channels).T.astype(np.float64)
    if tag == _PCM16:
        frames = frames / 32768.0
    return frames


def wav_bytes(w: Waveform, bit_depth: int = 32) -> bytes:
    """Serialize a Waveform as PCM-16 (bit_depth=16) or IEEE float-32 (bit_depth=32)."""
    if bit_depth == 16:
        tag, dtype = _PCM16, np.dtype("<i2")
        scaled = np.clip(np.round(w.samples * 32768.0), -32768, 32767)
        payload = scaled.T.astype(dtype).tobytes()
    elif bit_depth == 32:
        tag, dtype = _FLOAT32, np.dtype("<f4")
        payload = w.samples.T.astype(dtype).tobytes()
    else:
        raise InvalidInputError(f"bit_depth must be 16 or 32, got {bit_depth}")

    channels = 2
    byte_rate = w.sample_rate * channels * dtype.itemsize
    block_align = channels * dtype.itemsize
    fmt_body = struct.pack(
        "<HHIIHH", tag, channels, w.sample_rate, byte_rate, block_align, dtype.itemsize * 8
    )
    riff_size = 4 + (8 + len(fmt_body)) + (8 + len(payload))
    out = bytearray()
    out += b"RIFF" + struct.pack("<I", riff_size) + b"WAVE"
    out += b"fmt " + struct.pack("<I", len(fmt_body)) + fmt_body
    out += b"data" + struct.pack("<I", len(payload)) + payload
    return bytes(out)


def wav_write(w: Waveform, path, bit_depth: int = 32) -> None:
    with open(path, "wb") as fh:
        fh.write(wav_bytes(w, bit_depth=bit_depth))
