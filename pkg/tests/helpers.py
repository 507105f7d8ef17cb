"""Shared test utilities: finite-difference oracles and tolerance checks."""

import numpy as np


def central_diff(f, x0, eps=1e-6):
    """Dense central finite-difference gradient of scalar f at flat vector x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += eps
        xm[i] -= eps
        grad[i] = (f(xp) - f(xm)) / (2 * eps)
    return grad


def directional_diff(f, x0, direction, eps=1e-6):
    """Central finite difference of f along a direction (f may return arrays)."""
    x0 = np.asarray(x0, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    return (f(x0 + eps * d) - f(x0 - eps * d)) / (2 * eps)


def assert_close_rel(actual, expected, rtol, atol=0.0, label=""):
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = np.maximum(np.abs(actual), np.abs(expected))
    err = np.abs(actual - expected)
    bad = err > rtol * scale + atol
    if np.any(bad):
        worst = np.argmax(err - rtol * scale)
        raise AssertionError(
            f"{label} mismatch: worst |{actual.flat[worst]:.6e} - "
            f"{expected.flat[worst]:.6e}| at flat index {worst} "
            f"(rel {err.flat[worst] / max(scale.flat[worst], 1e-300):.3e}, rtol {rtol})"
        )


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return np.linalg.norm(a - b) / denom
