"""Layers with hand-written backward passes.

Every layer caches what it needs during ``forward`` and consumes the cache in
``backward``, which accumulates parameter gradients into ``Parameter.grad`` and
returns the gradient with respect to the layer input. Arrays are batch-first.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, ShapeError


class Parameter:
    __slots__ = ("name", "data", "grad", "trainable")

    def __init__(self, name: str, data: np.ndarray, trainable: bool = True):
        self.name = name
        self.data = data
        self.grad = np.zeros_like(data)
        self.trainable = trainable

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape}, trainable={self.trainable})"


class Module:
    """Container that discovers parameters and sub-modules from its attributes."""

    training = True

    def _children(self):
        for key, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        out: dict[str, Parameter] = {}
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                out[name] = value
            else:
                out.update(value.named_parameters(name + "."))
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())

    def modules(self):
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _sigmoid(z):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter("weight", _uniform(rng, (out_features, in_features), in_features, dtype))
        self.bias = Parameter("bias", np.zeros(out_features, dtype=dtype))

    def forward(self, x):
        if x.shape[-1] != self.in_features:
            raise ShapeError(
                f"linear: input shape {x.shape} incompatible with weight shape {self.weight.shape}"
            )
        self._x = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, dy):
        x = self._x
        x2 = x.reshape(-1, self.in_features)
        dy2 = dy.reshape(-1, self.out_features)
        self.weight.grad += dy2.T @ x2
        self.bias.grad += dy2.sum(axis=0)
        return dy @ self.weight.data

    def macs(self, n_positions: int = 1) -> int:
        return n_positions * self.in_features * self.out_features


class ReLU(Module):
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class GELU(Module):
    """Tanh-approximated GELU. Smooth, so finite-difference checks see no kinks."""

    _c = math.sqrt(2.0 / math.pi)

    def forward(self, x):
        u = self._c * (x + 0.044715 * x ** 3)
        t = np.tanh(u)
        self._cache = (x, t)
        return 0.5 * x * (1.0 + t)

    def backward(self, dy):
        x, t = self._cache
        du = self._c * (1.0 + 3 * 0.044715 * x * x)
        return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


class Dropout(Module):
    """Inverted dropout; the identity in eval mode."""

    def __init__(self, p: float, rng=None):
        if not 0.0 <= p < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {p}")
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def forward(self, x):
        if not self.training or self.p == 0.0:
            self._mask = None
            return x
        keep = self.rng.random(x.shape) >= self.p
        self._mask = keep.astype(x.dtype) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5, dtype=np.float32):
        self.d = d
        self.eps = eps
        self.gamma = Parameter("gamma", np.ones(d, dtype=dtype))
        self.beta = Parameter("beta", np.zeros(d, dtype=dtype))

    def forward(self, x):
        if x.shape[-1] != self.d:
            raise ShapeError(f"layer norm: input shape {x.shape} does not end in {self.d}")
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        self._inv = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mu) * self._inv
        return self._xhat * self.gamma.data + self.beta.data

    def backward(self, dy):
        xhat = self._xhat
        self.gamma.grad += (dy * xhat).reshape(-1, self.d).sum(axis=0)
        self.beta.grad += dy.reshape(-1, self.d).sum(axis=0)
        dxhat = dy * self.gamma.data
        return self._inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )


class LSTM(Module):
    """Single LSTM layer over a batch-first sequence ``[B, T, in]``.

    Gate layout along the stacked axis is (input, forget, cell, output). One
    bias vector per gate, so the parameter count is ``4h(in + h + 1)``.
    """

    def __init__(self, input_size: int, hidden_size: int, rng=None, dtype=np.float32,
                 forget_bias: float = 1.0):
        if hidden_size <= 0 or input_size <= 0:
            raise ConfigError("LSTM sizes must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        h = hidden_size
        self.input_size = input_size
        self.hidden_size = h
        self.weight_ih = Parameter("weight_ih", _uniform(rng, (4 * h, input_size), input_size, dtype))
        self.weight_hh = Parameter("weight_hh", _uniform(rng, (4 * h, h), h, dtype))
        bias = np.zeros(4 * h, dtype=dtype)
        bias[h:2 * h] = forget_bias
        self.bias = Parameter("bias", bias)

    def forward(self, x, state=None):
        if x.ndim != 3 or x.shape[-1] != self.input_size:
            raise ShapeError(
                f"lstm: input shape {x.shape} incompatible with weight_ih shape {self.weight_ih.shape}"
            )
        B, T, _ = x.shape
        h = self.hidden_size
        dt = self.weight_ih.data.dtype
        if state is None:
            h_prev = np.zeros((B, h), dtype=dt)
            c_prev = np.zeros((B, h), dtype=dt)
        else:
            h_prev, c_prev = state
        xw = x @ self.weight_ih.data.T + self.bias.data
        w_hh_t = self.weight_hh.data.T
        gates = np.empty((B, T, 4 * h), dtype=xw.dtype)
        cs = np.empty((B, T + 1, h), dtype=xw.dtype)
        hs = np.empty((B, T + 1, h), dtype=xw.dtype)
        hs[:, 0] = h_prev
        cs[:, 0] = c_prev
        for t in range(T):
            z = xw[:, t] + hs[:, t] @ w_hh_t
            g = gates[:, t]
            g[:, :2 * h] = _sigmoid(z[:, :2 * h])
            g[:, 2 * h:3 * h] = np.tanh(z[:, 2 * h:3 * h])
            g[:, 3 * h:] = _sigmoid(z[:, 3 * h:])
            cs[:, t + 1] = g[:, h:2 * h] * cs[:, t] + g[:, :h] * g[:, 2 * h:3 * h]
            hs[:, t + 1] = g[:, 3 * h:] * np.tanh(cs[:, t + 1])
        self._cache = (x, gates, cs, hs)
        self.final_state = (hs[:, T].copy(), cs[:, T].copy())
        return hs[:, 1:]

    def backward(self, dhs, dstate=None):
        """Backpropagate through time. ``dstate`` is ``(dh_T, dc_T)`` or None.

        Returns the input gradient; the gradient with respect to the initial
        state is kept in ``self.dinit_state``.
        """
        x, gates, cs, hs = self._cache
        B, T, _ = x.shape
        h = self.hidden_size
        w_hh = self.weight_hh.data
        if dstate is None:
            dh_next = np.zeros((B, h), dtype=hs.dtype)
            dc_next = np.zeros((B, h), dtype=hs.dtype)
        else:
            dh_next, dc_next = (a.copy() for a in dstate)
        dz = np.empty_like(gates)
        for t in range(T - 1, -1, -1):
            g = gates[:, t]
            i, f, gg, o = g[:, :h], g[:, h:2 * h], g[:, 2 * h:3 * h], g[:, 3 * h:]
            tc = np.tanh(cs[:, t + 1])
            dh = dhs[:, t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            d = dz[:, t]
            d[:, :h] = dc * gg * i * (1.0 - i)
            d[:, h:2 * h] = dc * cs[:, t] * f * (1.0 - f)
            d[:, 2 * h:3 * h] = dc * i * (1.0 - gg * gg)
            d[:, 3 * h:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = d @ w_hh
        dz2 = dz.reshape(-1, 4 * h)
        self.weight_hh.grad += dz2.T @ hs[:, :T].reshape(-1, h)
        self.weight_ih.grad += dz2.T @ x.reshape(-1, self.input_size)
        self.bias.grad += dz2.sum(axis=0)
        self.dinit_state = (dh_next, dc_next)
        return dz @ self.weight_ih.data

    def macs(self, seq_len: int) -> int:
        return seq_len * 4 * self.hidden_size * (self.input_size + self.hidden_size)


class MultiHeadAttention(Module):
    """Scaled dot-product self-attention with separate Q/K/V/output projections."""

    def __init__(self, d_model: int, n_heads: int, rng=None, dtype=np.float32):
        if n_heads <= 0 or d_model % n_heads:
            raise ConfigError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_model = d_model
        self.n_heads = n_heads
        self.q_proj = Linear(d_model, d_model, rng, dtype)
        self.k_proj = Linear(d_model, d_model, rng, dtype)
        self.v_proj = Linear(d_model, d_model, rng, dtype)
        self.out_proj = Linear(d_model, d_model, rng, dtype)

    def _split(self, z):
        B, T, _ = z.shape
        return z.reshape(B, T, self.n_heads, -1).transpose(0, 2, 1, 3)

    def forward(self, x):
        if x.ndim != 3 or x.shape[-1] != self.d_model:
            raise ShapeError(f"attention: input shape {x.shape} does not end in d_model={self.d_model}")
        B, T, d = x.shape
        q = self._split(self.q_proj(x))
        k = self._split(self.k_proj(x))
        v = self._split(self.v_proj(x))
        scale = 1.0 / math.sqrt(d // self.n_heads)
        attn = softmax((q @ k.transpose(0, 1, 3, 2)) * scale, axis=-1)
        ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(B, T, d)
        self._cache = (q, k, v, attn, scale)
        self.attention = attn
        return self.out_proj(ctx)

    def backward(self, dy):
        q, k, v, attn, scale = self._cache
        B, H, T, dh = q.shape
        dctx = self._split(self.out_proj.backward(dy))
        dattn = dctx @ v.transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dctx
        ds = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q

        def merge(z):
            return z.transpose(0, 2, 1, 3).reshape(B, T, H * dh)

        return (self.q_proj.backward(merge(dq))
                + self.k_proj.backward(merge(dk))
                + self.v_proj.backward(merge(dv)))

    def macs(self, seq_len: int) -> int:
        return 2 * seq_len * seq_len * self.d_model + 4 * seq_len * self.d_model ** 2


def sinusoidal_encoding(seq_len: int, d_model: int, dtype=np.float32) -> np.ndarray:
    pos = np.arange(seq_len)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle)).astype(dtype)


class TransformerEncoderLayer(Module):
    """Pre-norm encoder block: x + MHA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, d_model: int, n_heads: int, ffn_dim: int, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.norm1 = LayerNorm(d_model, dtype=dtype)
        self.attn = MultiHeadAttention(d_model, n_heads, rng, dtype)
        self.norm2 = LayerNorm(d_model, dtype=dtype)
        self.ff1 = Linear(d_model, ffn_dim, rng, dtype)
        self.act = GELU()
        self.ff2 = Linear(ffn_dim, d_model, rng, dtype)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ff2(self.act(self.ff1(self.norm2(x))))

    def backward(self, dy):
        dmid = dy + self.norm2.backward(self.ff1.backward(self.act.backward(self.ff2.backward(dy))))
        return dmid + self.norm1.backward(self.attn.backward(dmid))

    def macs(self, seq_len: int) -> int:
        return self.attn.macs(seq_len) + self.ff1.macs(seq_len) + self.ff2.macs(seq_len)


class CausalConv1d(Module):
    """Dilated causal convolution over ``[B, C, T]`` with left zero padding."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, dilation: int = 1,
                 rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.dilation = dilation
        fan_in = in_channels * kernel_size
        self.weight = Parameter(
            "weight", _uniform(rng, (out_channels, in_channels, kernel_size), fan_in, dtype))
        self.bias = Parameter("bias", np.zeros(out_channels, dtype=dtype))

    def forward(self, x):
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(
                f"conv: input shape {x.shape} incompatible with weight shape {self.weight.shape}"
            )
        T = x.shape[2]
        pad = (self.kernel_size - 1) * self.dilation
        xp = np.pad(x, ((0, 0), (0, 0), (pad, 0))) if pad else x
        y = np.zeros((x.shape[0], self.out_channels, T), dtype=np.result_type(x, self.weight.data))
        for j in range(self.kernel_size):
            s = j * self.dilation
            y += self.weight.data[:, :, j] @ xp[:, :, s:s + T]
        y += self.bias.data[:, None]
        self._xp = xp
        return y

    def backward(self, dy):
        xp = self._xp
        T = dy.shape[2]
        pad = xp.shape[2] - T
        dxp = np.zeros_like(xp)
        for j in range(self.kernel_size):
            s = j * self.dilation
            w = self.weight.data[:, :, j]
            self.weight.grad[:, :, j] += np.einsum("bot,bct->oc", dy, xp[:, :, s:s + T])
            dxp[:, :, s:s + T] += w.T @ dy
        self.bias.grad += dy.sum(axis=(0, 2))
        return dxp[:, :, pad:]

    def macs(self, seq_len: int) -> int:
        return seq_len * self.kernel_size * self.in_channels * self.out_channels


class TemporalBlock(Module):
    """Two causal convolutions with GELU plus a residual path.

    ``out = gelu(conv2(gelu(conv1(x)))) + skip(x)`` where ``skip`` is the
    identity when channel counts match and a 1x1 convolution otherwise.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, dilation: int,
                 rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.conv1 = CausalConv1d(in_channels, out_channels, kernel_size, dilation, rng, dtype)
        self.act1 = GELU()
        self.conv2 = CausalConv1d(out_channels, out_channels, kernel_size, dilation, rng, dtype)
        self.act2 = GELU()
        self.downsample = (CausalConv1d(in_channels, out_channels, 1, 1, rng, dtype)
                           if in_channels != out_channels else None)

    def forward(self, x):
        branch = self.act2(self.conv2(self.act1(self.conv1(x))))
        skip = x if self.downsample is None else self.downsample(x)
        return branch + skip

    def backward(self, dy):
        dx = self.conv1.backward(self.act1.backward(self.conv2.backward(self.act2.backward(dy))))
        return dx + (dy if self.downsample is None else self.downsample.backward(dy))

    def macs(self, seq_len: int) -> int:
        m = self.conv1.macs(seq_len) + self.conv2.macs(seq_len)
        return m + (self.downsample.macs(seq_len) if self.downsample is not None else 0)


class TCN(Module):
    def __init__(self, in_channels: int, channels: int, kernel_size: int, dilations, rng=None,
                 dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.blocks = []
        c = in_channels
        for d in dilations:
            self.blocks.append(TemporalBlock(c, channels, kernel_size, d, rng, dtype))
            c = channels

    def forward(self, x):
        for b in self.blocks:
            x = b(x)
        return x

    def backward(self, dy):
        for b in reversed(self.blocks):
            dy = b.backward(dy)
        return dy

    def macs(self, seq_len: int) -> int:
        return sum(b.macs(seq_len) for b in self.blocks)


class AttentionPool(Module):
    """Additive attention pooling: ``score_t = v . tanh(W x_t + b)``, softmax over t."""

    def __init__(self, d: int, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d = d
        self.proj = Linear(d, d, rng, dtype)
        self.score = Parameter("score", _uniform(rng, (d,), d, dtype))

    def forward(self, x):
        if x.ndim != 3 or x.shape[-1] != self.d:
            raise ShapeError(f"attention pool: input shape {x.shape} does not end in {self.d}")
        u = np.tanh(self.proj(x))
        a = softmax(u @ self.score.data, axis=-1)
        self._cache = (x, u, a)
        self.weights = a
        return np.einsum("bt,btd->bd", a, x)

    def backward(self, dy):
        x, u, a = self._cache
        dx = a[:, :, None] * dy[:, None, :]
        da = np.einsum("btd,bd->bt", x, dy)
        ds = a * (da - (a * da).sum(axis=-1, keepdims=True))
        self.score.grad += np.einsum("bt,btd->d", ds, u)
        dz = ds[:, :, None] * self.score.data * (1.0 - u * u)
        return dx + self.proj.backward(dz)

    def macs(self, seq_len: int) -> int:
        return self.proj.macs(seq_len) + 2 * seq_len * self.d
