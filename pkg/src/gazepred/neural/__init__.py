from .functional import attention_pool, linear_apply, lstm_apply, mha_apply, tcn_apply
from .gradcheck import check_gradients
from .layers import (
    LSTM,
    TCN,
    AttentionPool,
    CausalConv1d,
    Dropout,
    GELU,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Parameter,
    ReLU,
    TemporalBlock,
    TransformerEncoderLayer,
    sinusoidal_encoding,
    softmax,
)
from .losses import CrossEntropyLoss, EuclideanLoss, cross_entropy_loss, euclidean_loss
from .optim import Adam, AdamState, adam_step

__all__ = [
    "LSTM", "TCN", "AttentionPool", "CausalConv1d", "Dropout", "GELU", "LayerNorm", "Linear", "Module",
    "MultiHeadAttention", "Parameter", "ReLU", "TemporalBlock", "TransformerEncoderLayer",
    "sinusoidal_encoding", "softmax", "CrossEntropyLoss", "EuclideanLoss", "cross_entropy_loss",
    "euclidean_loss", "Adam", "AdamState", "adam_step", "check_gradients", "attention_pool",
    "linear_apply", "lstm_apply", "mha_apply", "tcn_apply",
]
