"""Differentiable kernels under gradient verification, with their input shapes."""
import numpy as np

from gazepred.neural import (LSTM, TCN, AttentionPool, CausalConv1d, CrossEntropyLoss,
                             EuclideanLoss, GELU, LayerNorm, Linear, Module, MultiHeadAttention,
                             TemporalBlock, TransformerEncoderLayer)


class CrossEntropyOp(Module):
    """Cross-entropy with fixed labels, including masked INVALID steps."""

    def __init__(self, seed):
        labels = np.random.default_rng(seed + 100).integers(0, 4, size=(3, 4))
        labels[0, 0] = 3
        self.loss = CrossEntropyLoss(labels)

    def forward(self, logits):
        return self.loss.forward(logits)

    def backward(self, d):
        return self.loss.backward(d)


def _rng(seed):
    return np.random.default_rng(1000 + seed)


# name -> factory(seed) returning (op, input_shapes)
KERNELS = {
    "linear": lambda s: (Linear(5, 3, _rng(s), np.float64), [(4, 5)]),
    "lstm": lambda s: (LSTM(3, 4, _rng(s), np.float64), [(2, 5, 3)]),
    "mha": lambda s: (MultiHeadAttention(8, 2, _rng(s), np.float64), [(1, 5, 8)]),
    "tcn": lambda s: (TCN(3, 4, 3, (1, 2, 4), _rng(s), np.float64), [(1, 3, 12)]),
    "layer_norm": lambda s: (LayerNorm(6, dtype=np.float64), [(3, 6)]),
    "attention_pool": lambda s: (AttentionPool(5, _rng(s), np.float64), [(2, 6, 5)]),
    "euclidean_loss": lambda s: (EuclideanLoss(), [(3, 4, 2), (3, 4, 2)]),
    "cross_entropy_loss": lambda s: (CrossEntropyOp(s), [(3, 4, 4)]),
}

# building blocks composed from the kernels above
EXTRA_KERNELS = {
    "gelu": lambda s: (GELU(), [(4, 7)]),
    "causal_conv": lambda s: (CausalConv1d(3, 4, 3, 2, _rng(s), np.float64), [(2, 3, 9)]),
    "temporal_block": lambda s: (TemporalBlock(3, 5, 3, 2, _rng(s), np.float64), [(2, 3, 9)]),
    "encoder_layer": lambda s: (TransformerEncoderLayer(8, 2, 12, _rng(s), np.float64),
                                [(2, 5, 8)]),
}


def randomize_norm(op, seed):
    """Give LayerNorm non-trivial affine parameters so their gradients are exercised."""
    rng = np.random.default_rng(seed)
    for p in op.parameters():
        if p.data.ndim == 1:
            p.data = rng.standard_normal(p.data.shape)
    return op
