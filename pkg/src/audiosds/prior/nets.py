"""Small numpy networks for the built-in trainable prior.

Everything here is deliberately tiny and hand-differentiated: a linear
strided-patch codec and a three-block 1-D conv denoiser with FiLM
conditioning on (time, class). Weights live in plain dicts so the
checkpoint container and Adam can treat them uniformly.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError


# -- primitive layers -----------------------------------------------------


def conv1d_forward(x, w, b):
    """Same-padded 1-D convolution. x: (B, Cin, F), w: (Cout, Cin, K), b: (Cout,)."""
    B, Cin, F = x.shape
    Cout, _, K = w.shape
    pad = K // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    cols = np.lib.stride_tricks.sliding_window_view(xp, K, axis=2)  # (B, Cin, F, K)
    cols2 = cols.transpose(0, 2, 1, 3).reshape(B * F, Cin * K)
    w2 = w.reshape(Cout, Cin * K)
    y = (cols2 @ w2.T).reshape(B, F, Cout).transpose(0, 2, 1) + b[None, :, None]
    return y, (cols2, w2, x.shape, K)


def conv1d_backward(cache, gy):
    cols2, w2, xshape, K = cache
    B, Cin, F = xshape
    Cout = w2.shape[0]
    gy2 = gy.transpose(0, 2, 1).reshape(B * F, Cout)
    gw = (gy2.T @ cols2).reshape(Cout, Cin, K)
    gb = gy.sum(axis=(0, 2))
    gcols = (gy2 @ w2).reshape(B, F, Cin, K).transpose(0, 2, 1, 3)
    pad = K // 2
    gxp = np.zeros((B, Cin, F + 2 * pad))
    for k in range(K):
        gxp[:, :, k : k + F] += gcols[:, :, :, k]
    gx = gxp[:, :, pad : pad + F]
    return gx, gw, gb


def linear_forward(x, w, b):
    """x: (B, D_in), w: (D_out, D_in)."""
    return x @ w.T + b[None, :], x


def linear_backward(cache, gy, w):
    x = cache
    return gy @ w, gy.T @ x, gy.sum(axis=0)


def tanh_forward(x):
    y = np.tanh(x)
    return y, y


def tanh_backward(cache, gy):
    return gy * (1.0 - cache * cache)


def time_features(t):
    """Fourier features of the diffusion time, (B, 13)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    freqs = np.array([1.0, 2.0, 4.0, 8.0, 16.0, 32.0])
    ang = 2.0 * np.pi * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang), t[:, None]], axis=1)


# -- denoiser --------------------------------------------------------------

_COND_DIM = 32
_CLASS_EMB = 16


class ToyDenoiser:
    """Conv trunk with FiLM conditioning; predicts the added noise.

    Inputs: z (B, C, F), t (B,), class indices (B,) with 0 = unconditional.
    """

    def __init__(self, channels: int, hidden: int, num_classes: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        C, H = channels, hidden
        k = 5

        def winit(*shape, fan_in):
            return rng.standard_normal(shape) / np.sqrt(fan_in)

        self.channels = C
        self.hidden = H
        self.num_classes = num_classes
        self.params = {
            "class_emb": 0.1 * rng.standard_normal((num_classes + 1, _CLASS_EMB)),
            "cond_w": winit(_COND_DIM, 13 + _CLASS_EMB, fan_in=13 + _CLASS_EMB),
            "cond_b": np.zeros(_COND_DIM),
            "film1_w": winit(2 * H, _COND_DIM, fan_in=_COND_DIM),
            "film1_b": np.zeros(2 * H),
            "film2_w": winit(2 * H, _COND_DIM, fan_in=_COND_DIM),
            "film2_b": np.zeros(2 * H),
            "conv_in_w": winit(H, C, k, fan_in=C * k),
            "conv_in_b": np.zeros(H),
            "conv1_w": winit(H, H, k, fan_in=H * k),
            "conv1_b": np.zeros(H),
            "conv2_w": winit(H, H, k, fan_in=H * k),
            "conv2_b": np.zeros(H),
            "conv_out_w": 0.1 * winit(C, H, k, fan_in=H * k),
            "conv_out_b": np.zeros(C),
        }

    def forward(self, z, t, class_idx, want_cache=False):
        p = self.params
        B = z.shape[0]
        emb = p["class_emb"][class_idx]  # (B, EMB)
        cond_in = np.concatenate([time_features(t), emb], axis=1)
        c_pre, c_cache = linear_forward(cond_in, p["cond_w"], p["cond_b"])
        c, c_tanh = tanh_forward(c_pre)
        film1, f1_cache = linear_forward(c, p["film1_w"], p["film1_b"])
        film2, f2_cache = linear_forward(c, p["film2_w"], p["film2_b"])
        H = self.hidden
        s1, b1 = film1[:, :H], film1[:, H:]
        s2, b2 = film2[:, :H], film2[:, H:]

        y0, cin_cache = conv1d_forward(z, p["conv_in_w"], p["conv_in_b"])
        h0, h0_tanh = tanh_forward(y0)

        y1, c1_cache = conv1d_forward(h0, p["conv1_w"], p["conv1_b"])
        y1f = y1 * (1.0 + s1[:, :, None]) + b1[:, :, None]
        a1, a1_tanh = tanh_forward(y1f)
        h1 = a1 + h0

        y2, c2_cache = conv1d_forward(h1, p["conv2_w"], p["conv2_b"])
        y2f = y2 * (1.0 + s2[:, :, None]) + b2[:, :, None]
        a2, a2_tanh = tanh_forward(y2f)
        h2 = a2 + h1

        out, cout_cache = conv1d_forward(h2, p["conv_out_w"], p["conv_out_b"])
        if not want_cache:
            return out
        cache = dict(
            class_idx=class_idx, c_cache=c_cache, c_tanh=c_tanh,
            f1_cache=f1_cache, f2_cache=f2_cache, s1=s1, s2=s2,
            cin_cache=cin_cache, h0_tanh=h0_tanh, c1_cache=c1_cache,
            y1=y1, a1_tanh=a1_tanh, c2_cache=c2_cache, y2=y2,
            a2_tanh=a2_tanh, cout_cache=cout_cache, B=B,
        )
        return out, cache

    def backward(self, cache, g_out):
        """Parameter gradients for a scalar loss with d loss / d output = g_out."""
        p = self.params
        H = self.hidden
        grads = {}

        gh2, grads["conv_out_w"], grads["conv_out_b"] = conv1d_backward(
            cache["cout_cache"], g_out
        )
        ga2 = tanh_backward(cache["a2_tanh"], gh2)
        gy2 = ga2 * (1.0 + cache["s2"][:, :, None])
        gs2 = (ga2 * cache["y2"]).sum(axis=2)
        gb2 = ga2.sum(axis=2)
        gh1_conv, grads["conv2_w"], grads["conv2_b"] = conv1d_backward(
            cache["c2_cache"], gy2
        )
        gh1 = gh1_conv + gh2  # residual

        ga1 = tanh_backward(cache["a1_tanh"], gh1)
        gy1 = ga1 * (1.0 + cache["s1"][:, :, None])
        gs1 = (ga1 * cache["y1"]).sum(axis=2)
        gb1 = ga1.sum(axis=2)
        gh0_conv, grads["conv1_w"], grads["conv1_b"] = conv1d_backward(
            cache["c1_cache"], gy1
        )
        gh0 = gh0_conv + gh1

        gy0 = tanh_backward(cache["h0_tanh"], gh0)
        gz, grads["conv_in_w"], grads["conv_in_b"] = conv1d_backward(
            cache["cin_cache"], gy0
        )

        gfilm1 = np.concatenate([gs1, gb1], axis=1)
        gfilm2 = np.concatenate([gs2, gb2], axis=1)
        gc1, grads["film1_w"], grads["film1_b"] = linear_backward(
            cache["f1_cache"], gfilm1, p["film1_w"]
        )
        gc2, grads["film2_w"], grads["film2_b"] = linear_backward(
            cache["f2_cache"], gfilm2, p["film2_w"]
        )
        gc_pre = tanh_backward(cache["c_tanh"], gc1 + gc2)
        gcond_in, grads["cond_w"], grads["cond_b"] = linear_backward(
            cache["c_cache"], gc_pre, p["cond_w"]
        )
        gemb = gcond_in[:, 13:]
        g_class = np.zeros_like(p["class_emb"])
        np.add.at(g_class, cache["class_idx"], gemb)
        grads["class_emb"] = g_class
        return grads, gz


# -- linear strided-patch codec --------------------------------------------


class LinearCodec:
    """Bias-free strided analysis/synthesis pair over non-overlapping patches.

    encode: (2, T) -> (C, T/P) via enc_w (C, 2, P), then / latent_scale
    decode: the transposed map via dec_w (C, 2, P), then * latent_scale

    Linear by construction, so both VJPs are exact transposes.
    """

    def __init__(self, latent_channels: int, patch: int, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.patch = patch
        self.latent_channels = latent_channels
        scale = 1.0 / np.sqrt(2 * patch)
        self.params = {
            "enc_w": scale * rng.standard_normal((latent_channels, 2, patch)),
            "dec_w": scale * rng.standard_normal((latent_channels, 2, patch)),
        }
        self.latent_scale = 1.0

    def _patches(self, samples):
        T = samples.shape[1]
        if T % self.patch != 0:
            raise InvalidInputError(
                f"sample count {T} is not a multiple of the codec patch {self.patch}"
            )
        return samples.reshape(2, T // self.patch, self.patch)

    def encode_raw(self, samples):
        pt = self._patches(samples)
        return np.einsum("cqp,qfp->cf", self.params["enc_w"], pt)

    def decode_raw(self, latent_values):
        out = np.einsum("cqp,cf->qfp", self.params["dec_w"], latent_values)
        return out.reshape(2, -1)

    def encode(self, samples):
        return self.encode_raw(samples) / self.latent_scale

    def decode(self, latent_values):
        return self.decode_raw(latent_values * self.latent_scale)

    def decode_vjp(self, cotangent_samples):
        pt = self._patches(cotangent_samples)
        return np.einsum("cqp,qfp->cf", self.params["dec_w"], pt) * self.latent_scale

    def encode_vjp(self, cotangent_latent):
        out = np.einsum("cqp,cf->qfp", self.params["enc_w"],
                        cotangent_latent / self.latent_scale)
        return out.reshape(2, -1)

    def reconstruction_grads(self, samples):
        """MSE(decode_raw(encode_raw(x)), x) and its weight gradients."""
        pt = self._patches(samples)
        h = np.einsum("cqp,qfp->cf", self.params["enc_w"], pt)
        rec = np.einsum("cqp,cf->qfp", self.params["dec_w"], h)
        diff = rec - pt
        loss = float(np.mean(diff * diff))
        g_rec = 2.0 * diff / diff.size
        g_dec = np.einsum("qfp,cf->cqp", g_rec, h)
        g_h = np.einsum("cqp,qfp->cf", self.params["dec_w"], g_rec)
        g_enc = np.einsum("cf,qfp->cqp", g_h, pt)
        return loss, {"enc_w": g_enc, "dec_w": g_dec}


class AdamState:
    """Adam over a dict of arrays; deterministic given the gradient stream."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def update(self, params, grads):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1**self.step_count
        bias2 = 1.0 - b2**self.step_count
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / bias1
            vhat = self.v[k] / bias2
            params[k] = params[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)
