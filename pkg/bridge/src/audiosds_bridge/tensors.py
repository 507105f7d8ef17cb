"""Tensor payloads: {"shape", "dtype": "f32", "data": base64 little-endian}."""

from __future__ import annotations

import base64

import numpy as np


class TensorError(ValueError):
    pass


def encode_tensor(arr) -> dict:
    arr = np.asarray(arr)
    return {
        "shape": [int(s) for s in arr.shape],
        "dtype": "f32",
        "data": base64.b64encode(
            np.ascontiguousarray(arr, dtype="<f4").tobytes()
        ).decode("ascii"),
    }


def decode_tensor(obj) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in obj["shape"])
        dtype = obj["dtype"]
        raw = base64.b64decode(obj["data"])
    except (KeyError, TypeError, ValueError) as exc:
        raise TensorError(f"malformed tensor payload: {exc}") from exc
    if dtype != "f32":
        raise TensorError(f"unsupported tensor dtype {dtype!r}")
    count = int(np.prod(shape)) if shape else 1
    if len(raw) != 4 * count:
        raise TensorError(f"tensor holds {len(raw)} bytes, expected {4 * count}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
