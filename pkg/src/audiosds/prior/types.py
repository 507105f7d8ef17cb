"""Latent tensors and conditioning descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError


class Latent:
    """Compressed diffusion-space tensor, (channels, frames).

    ``compression`` is the number of audio samples per latent frame
    (1 for the identity codec).
    """

    __slots__ = ("values", "compression")

    def __init__(self, values, compression: int = 1):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidInputError(f"latent must be 2-D (C, F), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("latent entries must be finite")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "compression", int(compression))

    def __setattr__(self, name, value):
        raise AttributeError("Latent is immutable; build a new one")

    @property
    def shape(self):
        return self.values.shape

    def like(self, values) -> "Latent":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise InvalidInputError(
                f"latent shape {values.shape} does not match {self.values.shape}"
            )
        return Latent(values, self.compression)

    def copy(self) -> "Latent":
        return Latent(self.values.copy(), self.compression)

    def __repr__(self):
        return f"Latent(shape={self.values.shape}, compression={self.compression})"


@dataclass(frozen=True)
class Conditioning:
    """Either a text prompt (bridge backend) or a class id (toy backend).

    Pass ``None`` instead of a Conditioning for the unconditional branch.
    """

    prompt: str | None = None
    class_id: int | None = None

    def __post_init__(self):
        if (self.prompt is None) == (self.class_id is None):
            raise InvalidInputError(
                "conditioning needs exactly one of prompt or class_id; "
                "use None for unconditional"
            )

    def to_json(self):
        if self.prompt is not None:
            return {"prompt": self.prompt}
        return {"class_id": int(self.class_id)}

    @staticmethod
    def from_json(obj):
        if obj is None:
            return None
        if "prompt" in obj:
            return Conditioning(prompt=obj["prompt"])
        if "class_id" in obj:
            return Conditioning(class_id=int(obj["class_id"]))
        raise InvalidInputError(f"unrecognized conditioning payload: {obj!r}")
