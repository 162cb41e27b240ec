"""Stateless forward entry points for the layer set.

These build a throwaway layer around caller-supplied weights; use the layer
classes directly when gradients are needed.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .layers import LSTM, TCN, AttentionPool, Linear, MultiHeadAttention


def _load(module, arrays: dict):
    params = module.named_parameters()
    for name, value in arrays.items():
        p = params[name]
        value = np.asarray(value, dtype=p.data.dtype)
        if value.shape != p.data.shape:
            raise ShapeError(f"parameter {name!r}: expected shape {p.data.shape}, got {value.shape}")
        p.data = value.copy()
    return module


def linear_apply(x, weight, bias):
    weight = np.asarray(weight)
    x = np.asarray(x, dtype=weight.dtype)
    layer = Linear(weight.shape[1], weight.shape[0], dtype=weight.dtype)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input shape {x.shape} incompatible with weight shape {weight.shape}")
    return _load(layer, {"weight": weight, "bias": bias}).forward(x)


def lstm_apply(x, weight_ih, weight_hh, bias, state=None):
    """Run one LSTM layer over ``x`` of shape ``[seq, in]``; returns ``(hs, (h, c))``."""
    weight_ih = np.asarray(weight_ih)
    x = np.asarray(x, dtype=weight_ih.dtype)
    h = weight_hh.shape[1]
    layer = LSTM(weight_ih.shape[1], h, dtype=weight_ih.dtype)
    _load(layer, {"weight_ih": weight_ih, "weight_hh": weight_hh, "bias": bias})
    if state is not None:
        state = tuple(np.asarray(s, dtype=weight_ih.dtype)[None] for s in state)
    hs = layer.forward(x[None], state)
    h_t, c_t = layer.final_state
    return hs[0], (h_t[0], c_t[0])


def mha_apply(x, n_heads: int, params: dict):
    """Self-attention over ``[seq, d_model]``; ``params`` keyed like ``q_proj.weight``."""
    x = np.asarray(x)
    layer = MultiHeadAttention(x.shape[-1], n_heads, dtype=x.dtype)
    return _load(layer, params).forward(x[None])[0]


def tcn_apply(x, kernel_size: int, dilations, channels: int, params: dict):
    """Temporal convolution stack over ``[channels_in, seq]``."""
    x = np.asarray(x)
    net = TCN(x.shape[0], channels, kernel_size, dilations, dtype=x.dtype)
    return _load(net, params).forward(x[None])[0]


def attention_pool(x, proj_weight, proj_bias, score):
    x = np.asarray(x)
    pool = AttentionPool(x.shape[-1], dtype=x.dtype)
    _load(pool, {"proj.weight": proj_weight, "proj.bias": proj_bias, "score": score})
    return pool.forward(x[None])[0]
