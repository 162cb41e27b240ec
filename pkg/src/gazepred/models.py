"""The three forecasters (LSTM, transformer encoder, classification-predictor).

All models take features shaped ``[batch, channels, window_len]`` and return
``(deltas [batch, pi_samples, 2], class_logits [batch, pi_samples, n_classes] | None)``.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, ShapeError
from .neural import (
    LSTM,
    TCN,
    AttentionPool,
    Dropout,
    LayerNorm,
    Linear,
    Module,
    TransformerEncoderLayer,
    sinusoidal_encoding,
)
from .signal import FeatureSet, WindowSample


class Arch(str, enum.Enum):
    LSTM = "LSTM"
    TF = "TF"
    CLPR = "CLPR"


ARCH_DEFAULTS = {
    Arch.LSTM: dict(window_len=12, feature_set=FeatureSet.VEL_HEADING_4, n_layers=3),
    Arch.TF: dict(window_len=18, feature_set=FeatureSet.VEL_HEADING_3, n_layers=2),
    Arch.CLPR: dict(window_len=16, feature_set=FeatureSet.VEL_HEADING_3, n_layers=1),
}


@dataclass(frozen=True)
class ModelConfig:
    arch: Arch = Arch.LSTM
    window_len: int | None = None
    pi_samples: int = 4
    feature_set: FeatureSet | None = None
    hidden_size: int = 128
    n_layers: int | None = None
    n_heads: int = 4
    d_model: int = 64
    ffn_dim: int = 128
    tcn_channels: int = 32
    tcn_kernel: int = 3
    tcn_dilations: tuple = (1, 2, 4)
    dropout: float = 0.2
    n_classes: int = 4
    lambda_cls: float = 1.0
    labels_as_input: bool = False
    positional_encoding: bool = True
    init_seed: int = 0

    def __post_init__(self):
        arch = Arch(self.arch)
        object.__setattr__(self, "arch", arch)
        for key, value in ARCH_DEFAULTS[arch].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        object.__setattr__(self, "feature_set", FeatureSet(self.feature_set))
        object.__setattr__(self, "tcn_dilations", tuple(int(d) for d in self.tcn_dilations))
        for name in ("window_len", "pi_samples", "hidden_size", "n_layers", "n_heads", "d_model",
                     "ffn_dim", "tcn_channels", "tcn_kernel", "n_classes"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.tcn_dilations or min(self.tcn_dilations) <= 0:
            raise ConfigError("tcn_dilations must be a non-empty list of positive integers")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.labels_as_input and arch is not Arch.CLPR:
            raise ConfigError("labels_as_input is only supported for CLPR")

    @property
    def n_channels(self) -> int:
        extra = self.n_classes if self.labels_as_input else 0
        return self.feature_set.n_channels + extra

    @property
    def input_shape(self) -> tuple[int, int]:
        return (self.n_channels, self.window_len)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.value
        d["feature_set"] = self.feature_set.value
        d["tcn_dilations"] = list(self.tcn_dilations)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config key(s): {sorted(unknown)}")
        return cls(**d)


def default_config(arch, **overrides) -> ModelConfig:
    arch = arch if isinstance(arch, Arch) else Arch(str(arch).upper())
    return ModelConfig(arch=arch, **overrides)


@dataclass
class PredictionOutput:
    deltas: np.ndarray
    class_logits: np.ndarray | None = None


class Forecaster(Module):
    """Shared plumbing: config, checkpoint metadata, flat predictions."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.normalization = None
        self.meta: dict = {}
        self._rng = np.random.default_rng(cfg.init_seed)

    def _check(self, x):
        if x.ndim != 3 or x.shape[1:] != self.cfg.input_shape:
            raise ShapeError(
                f"{self.cfg.arch.value}: input shape {x.shape[1:] if x.ndim == 3 else x.shape} "
                f"does not match model input shape {self.cfg.input_shape}"
            )

    def _split_head(self, y, width):
        return y.reshape(y.shape[0], self.cfg.pi_samples, width)


class LSTMForecaster(Forecaster):
    """Stacked LSTM; the last hidden state feeds a linear head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg)
        rng, dt = self._rng, np.float32
        sizes = [cfg.n_channels] + [cfg.hidden_size] * cfg.n_layers
        self.layers = [LSTM(sizes[i], sizes[i + 1], rng, dt) for i in range(cfg.n_layers)]
        self.drops = [Dropout(cfg.dropout, rng) for _ in range(cfg.n_layers - 1)]
        self.head_drop = Dropout(cfg.dropout, rng)
        self.head = Linear(cfg.hidden_size, cfg.pi_samples * 2, rng, dt)

    def forward(self, x):
        self._check(x)
        h = x.transpose(0, 2, 1)
        for i, layer in enumerate(self.layers):
            if i:
                h = self.drops[i - 1](h)
            h = layer(h)
        self._last_shape = h.shape
        y = self.head(self.head_drop(h[:, -1]))
        return self._split_head(y, 2), None

    def backward(self, ddeltas, dlogits=None):
        dlast = self.head_drop.backward(self.head.backward(ddeltas.reshape(ddeltas.shape[0], -1)))
        dh = np.zeros(self._last_shape, dtype=dlast.dtype)
        dh[:, -1] = dlast
        for i in range(len(self.layers) - 1, -1, -1):
            dh = self.layers[i].backward(dh)
            if i:
                dh = self.drops[i - 1].backward(dh)
        return dh.transpose(0, 2, 1)

    def macs(self, seq_len: int) -> int:
        return sum(l.macs(seq_len) for l in self.layers) + self.head.macs(1)


class TFForecaster(Forecaster):
    """Linear projection + positional encoding, pre-norm encoder stack, flattened head."""

    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg)
        rng, dt = self._rng, np.float32
        self.proj = Linear(cfg.n_channels, cfg.d_model, rng, dt)
        self.encoder = [TransformerEncoderLayer(cfg.d_model, cfg.n_heads, cfg.ffn_dim, rng, dt)
                        for _ in range(cfg.n_layers)]
        self.norm = LayerNorm(cfg.d_model, dtype=dt)
        self.head_drop = Dropout(cfg.dropout, rng)
        self.head = Linear(cfg.window_len * cfg.d_model, cfg.pi_samples * 2, rng, dt)
        self._pe = sinusoidal_encoding(cfg.window_len, cfg.d_model)

    def encode(self, x):
        """Per-token encoder output ``[B, T, d_model]`` before the head."""
        h = self.proj(x.transpose(0, 2, 1))
        if self.cfg.positional_encoding:
            h = h + self._pe.astype(h.dtype)
        for layer in self.encoder:
            h = layer(h)
        return self.norm(h)

    def forward(self, x):
        self._check(x)
        h = self.encode(x)
        self._enc_shape = h.shape
        y = self.head(self.head_drop(h.reshape(h.shape[0], -1)))
        return self._split_head(y, 2), None

    def backward(self, ddeltas, dlogits=None):
        dflat = self.head_drop.backward(self.head.backward(ddeltas.reshape(ddeltas.shape[0], -1)))
        dh = self.norm.backward(dflat.reshape(self._enc_shape))
        for layer in reversed(self.encoder):
            dh = layer.backward(dh)
        return self.proj.backward(dh).transpose(0, 2, 1)

    def macs(self, seq_len: int) -> int:
        return (self.proj.macs(seq_len) + sum(l.macs(seq_len) for l in self.encoder)
                + self.head.macs(1))


class ClPrForecaster(Forecaster):
    """TCN encoder -> LSTM -> attention pooling -> regression and classification heads."""

    def __init__(self, cfg: ModelConfig):
        super().__init__(cfg)
        rng, dt = self._rng, np.float32
        self.tcn = TCN(cfg.n_channels, cfg.tcn_channels, cfg.tcn_kernel, cfg.tcn_dilations, rng, dt)
        self.lstm = LSTM(cfg.tcn_channels, cfg.hidden_size, rng, dt)
        self.pool = AttentionPool(cfg.hidden_size, rng, dt)
        self.head_drop = Dropout(cfg.dropout, rng)
        self.reg_head = Linear(cfg.hidden_size, cfg.pi_samples * 2, rng, dt)
        self.cls_head = Linear(cfg.hidden_size, cfg.pi_samples * cfg.n_classes, rng, dt)

    def forward(self, x):
        self._check(x)
        z = self.tcn(x)
        self.tcn_output = z
        hs = self.lstm(z.transpose(0, 2, 1))
        pooled = self.head_drop(self.pool(hs))
        deltas = self._split_head(self.reg_head(pooled), 2)
        logits = self._split_head(self.cls_head(pooled), self.cfg.n_classes)
        return deltas, logits

    def backward(self, ddeltas, dlogits=None):
        B = ddeltas.shape[0]
        dpooled = self.reg_head.backward(ddeltas.reshape(B, -1))
        if dlogits is None:
            dlogits = np.zeros((B, self.cfg.pi_samples, self.cfg.n_classes), dtype=ddeltas.dtype)
        dpooled = dpooled + self.cls_head.backward(dlogits.reshape(B, -1))
        dhs = self.lstm.backward(self.pool.backward(self.head_drop.backward(dpooled)))
        return self.tcn.backward(dhs.transpose(0, 2, 1))

    def macs(self, seq_len: int) -> int:
        return (self.tcn.macs(seq_len) + self.lstm.macs(seq_len) + self.pool.macs(seq_len)
                + self.reg_head.macs(1) + self.cls_head.macs(1))


class ZeroDisplacement(Forecaster):
    """Baseline that always predicts no motion over the horizon."""

    def forward(self, x):
        self._check(x)
        return np.zeros((x.shape[0], self.cfg.pi_samples, 2), dtype=np.float32), None

    def backward(self, ddeltas, dlogits=None):
        raise NotImplementedError("the zero-displacement baseline has no parameters")

    def macs(self, seq_len: int) -> int:
        return 0


_BUILDERS = {Arch.LSTM: LSTMForecaster, Arch.TF: TFForecaster, Arch.CLPR: ClPrForecaster}


def build_lstm_forecaster(cfg: ModelConfig) -> LSTMForecaster:
    if cfg.arch is not Arch.LSTM:
        raise ConfigError(f"expected arch LSTM, got {cfg.arch.value}")
    return LSTMForecaster(cfg)


def build_tf_forecaster(cfg: ModelConfig) -> TFForecaster:
    if cfg.arch is not Arch.TF:
        raise ConfigError(f"expected arch TF, got {cfg.arch.value}")
    return TFForecaster(cfg)


def build_clpr(cfg: ModelConfig) -> ClPrForecaster:
    if cfg.arch is not Arch.CLPR:
        raise ConfigError(f"expected arch CLPR, got {cfg.arch.value}")
    return ClPrForecaster(cfg)


def build_model(cfg: ModelConfig) -> Forecaster:
    return _BUILDERS[cfg.arch](cfg)


def predict(model: Forecaster, window: WindowSample | np.ndarray) -> PredictionOutput:
    """Eval-mode forward pass on a single window."""
    feats = window.features if isinstance(window, WindowSample) else np.asarray(window)
    model.eval()
    deltas, logits = model.forward(np.asarray(feats, dtype=np.float32)[None])
    return PredictionOutput(deltas[0], None if logits is None else logits[0])


def predict_batch(model: Forecaster, features: np.ndarray, batch_size: int = 1024):
    """Eval-mode predictions for stacked windows; returns ``(deltas, logits | None)``."""
    model.eval()
    outs, logits = [], []
    for i in range(0, len(features), batch_size):
        d, l = model.forward(np.asarray(features[i:i + batch_size], dtype=np.float32))
        outs.append(d)
        if l is not None:
            logits.append(l)
    if not outs:
        P = model.cfg.pi_samples
        return np.zeros((0, P, 2), np.float32), None
    return np.concatenate(outs), (np.concatenate(logits) if logits else None)


def count_params(model: Module) -> int:
    return sum(p.size for p in model.parameters() if p.trainable)


def count_macs(model: Forecaster, input_shape=None) -> int:
    """Analytic multiply-accumulate count of one forward pass on one window.

    Rules: linear ``in*out`` per position; LSTM ``4h(in+h)`` per step;
    attention ``2 T^2 d + 4 T d^2`` per layer; convolution ``k c_in c_out`` per
    output position; attention pooling ``T d^2 + 2 T d``.
    """
    if input_shape is None:
        input_shape = model.cfg.input_shape
    channels, seq_len = input_shape
    if channels != model.cfg.n_channels:
        raise ShapeError(f"input shape {tuple(input_shape)} has {channels} channels, "
                         f"model expects {model.cfg.n_channels}")
    if isinstance(model, TFForecaster) and seq_len != model.cfg.window_len:
        raise ShapeError("the TF head is sized for the configured window length")
    return int(model.macs(int(seq_len)))


# closed-form parameter counts, used to cross-check count_params

def lstm_param_formula(n_in: int, hidden: int, n_layers: int, pi_samples: int) -> int:
    first = 4 * hidden * (n_in + hidden + 1)
    rest = (n_layers - 1) * 4 * hidden * (2 * hidden + 1)
    return first + rest + hidden * 2 * pi_samples + 2 * pi_samples


def tf_param_formula(n_in: int, d: int, n_layers: int, ffn: int, window: int, pi_samples: int) -> int:
    proj = n_in * d + d
    layer = 2 * 2 * d + 4 * (d * d + d) + (d * ffn + ffn) + (ffn * d + d)
    return proj + n_layers * layer + 2 * d + window * d * 2 * pi_samples + 2 * pi_samples


def clpr_param_formula(n_in: int, ch: int, k: int, n_blocks: int, hidden: int, pi_samples: int,
                       n_classes: int) -> int:
    tcn = 0
    c = n_in
    for _ in range(n_blocks):
        tcn += (k * c * ch + ch) + (k * ch * ch + ch)
        if c != ch:
            tcn += c * ch + ch
        c = ch
    lstm = 4 * hidden * (ch + hidden + 1)
    pool = hidden * hidden + hidden + hidden
    heads = (hidden * 2 * pi_samples + 2 * pi_samples) + (hidden * n_classes * pi_samples
                                                          + n_classes * pi_samples)
    return tcn + lstm + pool + heads
