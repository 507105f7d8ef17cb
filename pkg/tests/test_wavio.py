import struct

import numpy as np
import pytest

from audiosds.errors import FormatError
from audiosds.waveform import Waveform
from audiosds.wavio import wav_bytes, wav_read, wav_write


def noise_wave(T=500, sr=44100, seed=0):
    rng = np.random.default_rng(seed)
    return Waveform(rng.uniform(-0.9, 0.9, size=(2, T)), sr)


def test_float32_round_trip_bit_exact(tmp_path):
    w = Waveform(noise_wave().samples.astype(np.float32).astype(np.float64), 44100)
    path = tmp_path / "f32.wav"
    wav_write(w, path, bit_depth=32)
    back = wav_read(path)
    assert back.sample_rate == 44100
    assert np.array_equal(back.samples, w.samples)


def test_pcm16_round_trip_within_one_lsb(tmp_path):
    w = noise_wave(seed=1)
    path = tmp_path / "p16.wav"
    wav_write(w, path, bit_depth=16)
    back = wav_read(path)
    assert np.max(np.abs(back.samples - w.samples)) <= 1.0 / 32768.0


def test_mono_file_duplicates_channels(tmp_path):
    rng = np.random.default_rng(2)
    mono = rng.uniform(-0.5, 0.5, 64).astype(np.float32)
    fmt = struct.pack("<HHIIHH", 3, 1, 8000, 8000 * 4, 4, 32)
    payload = mono.tobytes()
    blob = (
        b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + len(payload)) + b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"data" + struct.pack("<I", len(payload)) + payload
    )
    path = tmp_path / "mono.wav"
    path.write_bytes(blob)
    w = wav_read(path)
    assert w.samples.shape[0] == 2
    assert np.array_equal(w.samples[0], w.samples[1])
    assert np.allclose(w.samples[0], mono.astype(np.float64))


def test_truncated_file_raises_format_error_with_offset(tmp_path):
    w = noise_wave(seed=3)
    blob = wav_bytes(w, bit_depth=32)
    path = tmp_path / "trunc.wav"
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(FormatError) as exc:
        wav_read(path)
    assert exc.value.offset is not None


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"JUNK" + b"\x00" * 64)
    with pytest.raises(FormatError) as exc:
        wav_read(path)
    assert exc.value.offset == 0


def test_unsupported_codec_rejected(tmp_path):
    fmt = struct.pack("<HHIIHH", 7, 2, 8000, 8000, 2, 8)  # mu-law
    blob = (
        b"RIFF" + struct.pack("<I", 4 + 8 + len(fmt) + 8 + 4) + b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"data" + struct.pack("<I", 4) + b"\x00\x00\x00\x00"
    )
    path = tmp_path / "mulaw.wav"
    path.write_bytes(blob)
    with pytest.raises(FormatError):
        wav_read(path)
