import math

import numpy as np
import pytest

from audiosds import _kernels
from audiosds.errors import NumericOverflowError
from audiosds.render import FMParams, FMRenderer, RenderSpec, envelope
from audiosds.render.base import logit
from audiosds.render.fm import FREQ_MAX_HZ, FREQ_MIN_HZ, default_fm_params
from audiosds.waveform import Waveform

from helpers import central_diff, assert_close_rel


def naive_fm_oracle(A, omega, attack, decay, T, sr):
    """Straight-loop reference implementation of the oscillator recurrence."""
    V = len(omega)
    uprev = [0.0] * V
    out = []
    for n in range(T):
        t = n / sr
        out.append(sum(A[V][j] * uprev[j] for j in range(V)))
        unew = []
        for v in range(V):
            p = t * omega[v] + sum(A[v][j] * uprev[j] for j in range(V))
            a = t / (attack[v] + 1e-5)
            b = math.exp(attack[v] - t) / decay[v] ** 2
            c = (decay[v] - t - attack[v]) / decay[v]
            f = max(0.0, min(a, b) * c)
            unew.append(math.sin(p) * f)
        uprev = unew
    return np.array(out)


def random_params(V=4, seed=0, coupling=-2.0):
    rng = np.random.default_rng(seed)
    return FMParams(
        log_fm_matrix=coupling + 0.5 * rng.standard_normal((V + 1, V)),
        raw_ratios=rng.normal(0, 1, V),
        raw_attacks=rng.normal(logit(0.05), 0.3, V),
        raw_decays=rng.normal(logit(0.4), 0.3, V),
    )


class TestEnvelope:
    def test_zero_at_t0(self):
        assert envelope(0.0, 0.1, 0.5) == 0.0

    def test_zero_past_support(self):
        for a, d in [(0.1, 0.5), (0.3, 0.2), (0.05, 0.9)]:
            for t in np.linspace(a + d, a + d + 2, 7):
                assert envelope(t, a, d) == 0.0

    def test_direct_formula_point(self):
        a, d, t = 0.1, 0.5, 0.05
        expected = max(
            0.0, min(t / (a + 1e-5), math.exp(a - t) / d**2) * (d - t - a) / d
        )
        assert envelope(t, a, d) == pytest.approx(expected, rel=1e-15)
        assert _kernels.envelope_scalar(t, a, d) == pytest.approx(expected, rel=1e-15)

    def test_vectorized_matches_scalar(self):
        ts = np.linspace(0, 1.2, 50)
        a, d = 0.2, 0.6
        vec = envelope(ts, a, d)
        scal = np.array([_kernels.envelope_scalar(t, a, d) for t in ts])
        assert np.allclose(vec, scal, atol=1e-15)

    def test_grad_matches_fd(self):
        for t in (0.03, 0.2, 0.45):
            a, d = 0.15, 0.5
            da, dd = _kernels.envelope_grad_scalar(t, a, d)
            fd_a = central_diff(lambda v: _kernels.envelope_scalar(t, v[0], d), [a], 1e-7)[0]
            fd_d = central_diff(lambda v: _kernels.envelope_scalar(t, a, v[0]), [d], 1e-7)[0]
            assert da == pytest.approx(fd_a, rel=1e-5, abs=1e-8)
            assert dd == pytest.approx(fd_d, rel=1e-5, abs=1e-8)


class TestFMRender:
    def test_zero_modulation_matches_closed_form(self):
        # Oscillator rows ~0, output row ~[1, 0, ...]: the output reduces to
        # the first oscillator's enveloped sine with a one-sample delay.
        V = 4
        log_a = np.full((V + 1, V), -40.0)
        log_a[V, 0] = 0.0
        p = FMParams(log_a, np.zeros(V), np.full(V, logit(0.1)), np.full(V, logit(0.5)))
        spec = RenderSpec(duration=0.02, sample_rate=8000)
        x = FMRenderer(spec).render(p).samples[0]

        omega = p.angular_frequencies()[0]
        a, d = p.attacks()[0], p.decays()[0]
        n = np.arange(spec.num_samples)
        t_prev = (n - 1) / spec.sample_rate
        closed = np.where(
            n == 0, 0.0, np.sin(t_prev * omega) * envelope(np.maximum(t_prev, 0), a, d)
        )
        assert_close_rel(x, closed, 1e-6, atol=1e-9, label="fm closed form")

    def test_envelope_support_silences_tail(self):
        V = 2
        log_a = np.full((V + 1, V), -40.0)
        log_a[V] = 0.0
        p = FMParams(
            log_a, np.zeros(V), np.full(V, logit(0.01)), np.full(V, logit(0.02))
        )
        spec = RenderSpec(duration=0.1, sample_rate=8000)
        x = FMRenderer(spec).render(p).samples[0]
        # support ends at attack + decay = 0.03 s; allow one delayed sample
        cutoff = int(0.031 * spec.sample_rate) + 2
        assert np.all(x[cutoff:] == 0.0)
        assert np.any(x[:cutoff] != 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_naive_recurrence_oracle(self, seed):
        p = random_params(V=4, seed=seed)
        spec = RenderSpec(duration=64 / 8000, sample_rate=8000)
        got = FMRenderer(spec).render(p).samples[0]
        oracle = naive_fm_oracle(
            p.fm_matrix().tolist(),
            p.angular_frequencies().tolist(),
            p.attacks().tolist(),
            p.decays().tolist(),
            spec.num_samples,
            spec.sample_rate,
        )
        assert_close_rel(got, oracle, 1e-12, atol=1e-14, label="fm vs naive loop")

    def test_stereo_duplication(self):
        p = random_params(seed=9)
        w = FMRenderer(RenderSpec(0.01, 8000)).render(p)
        assert np.array_equal(w.samples[0], w.samples[1])

    def test_overflow_reports_first_bad_sample(self):
        V = 2
        log_a = np.full((V + 1, V), 800.0)  # exp(800) = inf, inf * 0 state = nan
        p = FMParams(log_a, np.zeros(V), np.zeros(V), np.zeros(V))
        with np.errstate(over="ignore"), pytest.raises(NumericOverflowError) as exc:
            FMRenderer(RenderSpec(0.01, 8000)).render(p)
        assert exc.value.sample_index is not None

    def test_determinism(self):
        p = random_params(seed=3)
        spec = RenderSpec(0.02, 8000)
        a = FMRenderer(spec).render(p).samples
        b = FMRenderer(spec).render(p).samples
        assert np.array_equal(a, b)


class TestFMVJP:
    def test_zero_cotangent(self):
        p = random_params(seed=1)
        spec = RenderSpec(0.01, 8000)
        r = FMRenderer(spec)
        g = r.vjp(p, Waveform(np.zeros((2, spec.num_samples)), 8000))
        assert np.all(g.log_fm_matrix == 0)
        assert np.all(g.raw_ratios == 0)
        assert np.all(g.raw_attacks == 0)
        assert np.all(g.raw_decays == 0)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_finite_differences(self, seed):
        V = 2
        p = random_params(V=V, seed=seed)
        spec = RenderSpec(32 / 8000, 8000)
        r = FMRenderer(spec)
        rng = np.random.default_rng(1000 + seed)
        cot = Waveform(rng.standard_normal((2, spec.num_samples)), 8000)
        g = r.vjp(p, cot)
        gvec = r.params_to_vector(g)

        def loss(vec):
            q = r.params_from_vector(vec)
            return float(np.sum(r.render(q).samples * cot.samples))

        fd = central_diff(loss, r.params_to_vector(p), eps=1e-6)
        assert_close_rel(gvec, fd, 1e-4, atol=1e-8, label=f"fm vjp vs fd (seed {seed})")

    def test_output_row_gradient_matches_linear_closed_form(self):
        # With zero modulation the render is linear in the output row:
        # x[n] = sum_j exp(L[V, j]) u[j, n-1], so dx/dL[V, j] = A[V,j] u[j, n-1].
        V = 3
        log_a = np.full((V + 1, V), -40.0)
        log_a[V] = np.array([0.0, -1.0, -2.0])
        p = FMParams(log_a, np.linspace(-1, 1, V), np.full(V, logit(0.1)),
                     np.full(V, logit(0.5)))
        spec = RenderSpec(48 / 8000, 8000)
        r = FMRenderer(spec)
        rng = np.random.default_rng(5)
        cot_mono = rng.standard_normal(spec.num_samples)
        cot = Waveform(np.stack([cot_mono, np.zeros_like(cot_mono)]), 8000)

        omega, a, d = p.angular_frequencies(), p.attacks(), p.decays()
        t = spec.times()
        u = np.stack([np.sin(t * omega[v]) * envelope(t, a[v], d[v]) for v in range(V)])
        A_out = p.fm_matrix()[V]
        expected = np.array([
            A_out[j] * float(np.sum(cot_mono[1:] * u[j, :-1])) for j in range(V)
        ])
        g = r.vjp(p, cot)
        assert_close_rel(g.log_fm_matrix[V], expected, 1e-9, atol=1e-12,
                         label="output row closed form")


def test_numba_and_numpy_kernels_agree():
    p = random_params(seed=42)
    spec = RenderSpec(40 / 8000, 8000)
    A, omega = p.fm_matrix(), p.angular_frequencies()
    a, d = p.attacks(), p.decays()
    fwd_py, bwd_py = _kernels.pure_numpy_kernels()
    u1, ph1, e1, x1 = _kernels.fm_forward(A, omega, a, d, spec.num_samples, 8000.0)
    u2, ph2, e2, x2 = fwd_py(A, omega, a, d, spec.num_samples, 8000.0)
    assert np.array_equal(x1, x2)
    assert np.array_equal(u1, u2)
    rng = np.random.default_rng(0)
    xbar = rng.standard_normal(spec.num_samples)
    g1 = _kernels.fm_backward(A, omega, a, d, u1, ph1, e1, xbar, 8000.0)
    g2 = bwd_py(A, omega, a, d, u2, ph2, e2, xbar, 8000.0)
    for lhs, rhs in zip(g1, g2):
        assert np.array_equal(lhs, rhs)


def test_default_params_start_near_single_oscillator():
    p = default_fm_params(4, seed=0)
    A = p.fm_matrix()
    out = A[4]
    assert out[0] == pytest.approx(1.0, abs=0.05)
    assert np.all(out[1:] < 0.01)
    assert np.all((FREQ_MIN_HZ < p.frequencies_hz()) & (p.frequencies_hz() < FREQ_MAX_HZ))
