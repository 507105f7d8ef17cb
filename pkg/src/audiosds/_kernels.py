"""Hot inner loops for the oscillator-bank renderer.

The frequency-modulation recurrence is strictly sequential in time, so it
is the one place in the toolkit where a compiled kernel pays off. Each
kernel has two implementations with identical operation order:

* a numba ``@njit`` version (default when numba imports cleanly)
* a pure-numpy/Python fallback

Set ``AUDIOSDS_PURE_NUMPY=1`` to force the fallback; ``KERNEL_BACKEND``
reports which path is active. ``benchmarks/benchmark_kernels.py`` compares
the two.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = "AUDIOSDS_PURE_NUMPY"


def _pure_numpy_requested() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip() not in ("", "0", "false", "False")


def envelope_scalar(t, attack, decay):
    """Attack/decay envelope; clamped to zero outside its support.

    value = max(0, min(t / (attack + 1e-5), exp(attack - t) / decay^2)
                   * (decay - t - attack) / decay)
    """
    a = t / (attack + 1e-5)
    b = math.exp(attack - t) / (decay * decay)
    c = (decay - t - attack) / decay
    g = min(a, b) * c
    return g if g > 0.0 else 0.0


def envelope_grad_scalar(t, attack, decay):
    """(d/d attack, d/d decay) of envelope_scalar; zero on the clamped region."""
    a = t / (attack + 1e-5)
    b = math.exp(attack - t) / (decay * decay)
    c = (decay - t - attack) / decay
    m = min(a, b)
    g = m * c
    if g <= 0.0:
        return 0.0, 0.0
    if a <= b:
        dm_da = -t / ((attack + 1e-5) * (attack + 1e-5))
        dm_dd = 0.0
    else:
        dm_da = b
        dm_dd = -2.0 * b / decay
    dc_da = -1.0 / decay
    dc_dd = (t + attack) / (decay * decay)
    return dm_da * c + m * dc_da, dm_dd * c + m * dc_dd


def _fm_forward_py(A, omega, attack, decay, T, sr):
    """Oscillator-bank recurrence. A is (V+1, V): V modulation rows + output row.

    u[v, n] = sin(n/sr * omega[v] + <A[v], u[:, n-1]>) * env_v(n/sr)
    x[n]    = <A[V], u[:, n-1]>,   u[:, -1] = 0
    Returns (u, phase, env, x); phase and env cached for the reverse sweep.
    """
    V = omega.shape[0]
    u = np.zeros((V, T))
    phase = np.zeros((V, T))
    env = np.zeros((V, T))
    x = np.zeros(T)
    uprev = np.zeros(V)
    for n in range(T):
        t = n / sr
        acc = 0.0
        for j in range(V):
            acc += A[V, j] * uprev[j]
        x[n] = acc
        for v in range(V):
            p = t * omega[v]
            for j in range(V):
                p += A[v, j] * uprev[j]
            phase[v, n] = p
            e = envelope_scalar(t, attack[v], decay[v])
            env[v, n] = e
            u[v, n] = math.sin(p) * e
        for v in range(V):
            uprev[v] = u[v, n]
    return u, phase, env, x


def _fm_backward_py(A, omega, attack, decay, u, phase, env, xbar, sr):
    """Reverse sweep through the recurrence. Returns per-parameter cotangents."""
    V = omega.shape[0]
    T = u.shape[1]
    Abar = np.zeros_like(A)
    omegabar = np.zeros(V)
    attackbar = np.zeros(V)
    decaybar = np.zeros(V)
    ubar = np.zeros(V)
    for n in range(T - 1, -1, -1):
        t = n / sr
        ubar_prev = np.zeros(V)
        g_out = xbar[n]
        if g_out != 0.0:
            for j in range(V):
                if n > 0:
                    Abar[V, j] += g_out * u[j, n - 1]
                ubar_prev[j] += g_out * A[V, j]
        for v in range(V):
            g = ubar[v]
            if g != 0.0:
                s = math.sin(phase[v, n])
                c = math.cos(phase[v, n])
                envbar = g * s
                phasebar = g * c * env[v, n]
                da, dd = envelope_grad_scalar(t, attack[v], decay[v])
                attackbar[v] += envbar * da
                decaybar[v] += envbar * dd
                omegabar[v] += phasebar * t
                for j in range(V):
                    if n > 0:
                        Abar[v, j] += phasebar * u[j, n - 1]
                    ubar_prev[j] += phasebar * A[v, j]
        ubar = ubar_prev
    return Abar, omegabar, attackbar, decaybar


def _build_numba_kernels():
    from numba import njit

    env_jit = njit(cache=True)(envelope_scalar)
    env_grad_jit = njit(cache=True)(envelope_grad_scalar)

    @njit(cache=True)
    def fm_forward(A, omega, attack, decay, T, sr):
        V = omega.shape[0]
        u = np.zeros((V, T))
        phase = np.zeros((V, T))
        env = np.zeros((V, T))
        x = np.zeros(T)
        uprev = np.zeros(V)
        for n in range(T):
            t = n / sr
            acc = 0.0
            for j in range(V):
                acc += A[V, j] * uprev[j]
            x[n] = acc
            for v in range(V):
                p = t * omega[v]
                for j in range(V):
                    p += A[v, j] * uprev[j]
                phase[v, n] = p
                e = env_jit(t, attack[v], decay[v])
                env[v, n] = e
                u[v, n] = math.sin(p) * e
            for v in range(V):
                uprev[v] = u[v, n]
        return u, phase, env, x

    @njit(cache=True)
    def fm_backward(A, omega, attack, decay, u, phase, env, xbar, sr):
        V = omega.shape[0]
        T = u.shape[1]
        Abar = np.zeros_like(A)
        omegabar = np.zeros(V)
        attackbar = np.zeros(V)
        decaybar = np.zeros(V)
        ubar = np.zeros(V)
        for n in range(T - 1, -1, -1):
            t = n / sr
            ubar_prev = np.zeros(V)
            g_out = xbar[n]
            if g_out != 0.0:
                for j in range(V):
                    if n > 0:
                        Abar[V, j] += g_out * u[j, n - 1]
                    ubar_prev[j] += g_out * A[V, j]
            for v in range(V):
                g = ubar[v]
                if g != 0.0:
                    s = math.sin(phase[v, n])
                    c = math.cos(phase[v, n])
                    envbar = g * s
                    phasebar = g * c * env[v, n]
                    da, dd = env_grad_jit(t, attack[v], decay[v])
                    attackbar[v] += envbar * da
                    decaybar[v] += envbar * dd
                    omegabar[v] += phasebar * t
                    for j in range(V):
                        if n > 0:
                            Abar[v, j] += phasebar * u[j, n - 1]
                        ubar_prev[j] += phasebar * A[v, j]
            ubar = ubar_prev
        return Abar, omegabar, attackbar, decaybar

    return fm_forward, fm_backward


KERNEL_BACKEND = "numpy"
fm_forward = _fm_forward_py
fm_backward = _fm_backward_py

if not _pure_numpy_requested():
    try:
        fm_forward, fm_backward = _build_numba_kernels()
        KERNEL_BACKEND = "numba"
    except Exception:  # numba missing or failed to compile; fall back silently
        KERNEL_BACKEND = "numpy"


def pure_numpy_kernels():
    """Expose the fallback pair regardless of the active backend (benchmarks)."""
    return _fm_forward_py, _fm_backward_py
