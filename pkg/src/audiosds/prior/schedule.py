"""Noise schedules: signal scale alpha(t) and noise scale sigma(t) on t in [0, 1].

Both schedules here are variance preserving (alpha^2 + sigma^2 = 1) with
the clean endpoint alpha(0) = 1, sigma(0) = 0. The cosine form is the
built-in default; the table form interpolates whatever a remote backend
advertises in its handshake.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError


def _check_t(t):
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise InvalidInputError(f"diffusion time must lie in [0, 1], got {t}")
    return t


class CosineSchedule:
    """alpha = cos(pi t / 2), sigma = sin(pi t / 2)."""

    def alpha(self, t) -> float:
        return float(np.cos(0.5 * np.pi * _check_t(t)))

    def sigma(self, t) -> float:
        return float(np.sin(0.5 * np.pi * _check_t(t)))

    def table(self, points: int = 256):
        ts = np.linspace(0.0, 1.0, points)
        return [[float(t), self.alpha(t), self.sigma(t)] for t in ts]


class TableSchedule:
    """Linear interpolation over sampled (t, alpha, sigma) triples."""

    def __init__(self, table):
        rows = sorted((float(t), float(a), float(s)) for t, a, s in table)
        if len(rows) < 2:
            raise InvalidInputError("schedule table needs at least two rows")
        self._t = np.array([r[0] for r in rows])
        self._a = np.array([r[1] for r in rows])
        self._s = np.array([r[2] for r in rows])
        if self._t[0] > 0.0 or self._t[-1] < 1.0:
            raise InvalidInputError("schedule table must cover [0, 1]")

    def alpha(self, t) -> float:
        return float(np.interp(_check_t(t), self._t, self._a))

    def sigma(self, t) -> float:
        return float(np.interp(_check_t(t), self._t, self._s))

    def table(self, points: int = 256):
        ts = np.linspace(0.0, 1.0, points)
        return [[float(t), self.alpha(t), self.sigma(t)] for t in ts]
