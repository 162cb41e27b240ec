"""Subject-level splits, mini-batch training and checkpoint files."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, DataError, FormatError, NumericError
from .models import Arch, Forecaster, ModelConfig, build_model
from .neural import Adam, cross_entropy_loss, euclidean_loss
from .signal import Normalization, WindowSet

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"GAZEPRED-CHECKPOINT\n"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    lr: float = 3e-4
    epochs: int = 20
    seed: int = 0
    train_fraction: float = 66 / 78
    val_fraction: float = 0.1
    pi_ms: float = 44.0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.lr < 0:
            raise ConfigError("lr must be non-negative")
        if not self.pi_ms > 0:
            raise ConfigError("pi_ms must be positive")

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_loss)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_subjects(subject_ids, train_fraction: float, seed: int):
    """Seeded shuffle of the unique subject ids, cut into (train, test)."""
    ids = sorted(set(subject_ids))
    if len(ids) < 2:
        raise ConfigError(f"need at least 2 subjects to split, got {len(ids)}")
    n_train = _round_half_up(len(ids) * train_fraction)
    if n_train < 1 or n_train > len(ids) - 1:
        raise ConfigError(
            f"train_fraction {train_fraction} leaves an empty side for {len(ids)} subjects")
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return sorted(shuffled[:n_train]), sorted(shuffled[n_train:])


def holdout_subjects(train_ids, val_fraction: float, seed: int):
    """Hold a fraction of the training subjects out for the validation curve.

    At least one subject is held out whenever two or more are available and
    ``val_fraction > 0``.
    """
    ids = sorted(train_ids)
    if val_fraction <= 0 or len(ids) < 2:
        return ids, []
    n_val = min(len(ids) - 1, max(1, _round_half_up(len(ids) * val_fraction)))
    order = np.random.default_rng(seed + 1).permutation(len(ids))
    val = sorted(ids[i] for i in order[:n_val])
    return [i for i in ids if i not in val], val


def check_no_leakage(*window_sets: WindowSet) -> None:
    seen: dict[str, int] = {}
    for k, ws in enumerate(window_sets):
        if ws is None:
            continue
        for sid in set(ws.subject_ids.tolist()):
            if sid in seen and seen[sid] != k:
                raise DataError(f"subject {sid!r} contributes windows to more than one split")
            seen[sid] = k


def batch_loss(model: Forecaster, feats, deltas, labels, backward: bool = True) -> float:
    """Forward, loss and (optionally) backward for one batch."""
    pred, logits = model.forward(feats)
    loss, dpred = euclidean_loss(pred, deltas)
    dlogits = None
    if model.cfg.arch is Arch.CLPR:
        ce, dlogits = cross_entropy_loss(logits, labels)
        lam = model.cfg.lambda_cls
        loss += lam * ce
        dlogits = (dlogits * lam).astype(pred.dtype)
    if backward:
        model.backward(dpred.astype(pred.dtype), dlogits)
    return loss


def evaluate_loss(model: Forecaster, windows: WindowSet, batch_size: int = 1024) -> float:
    if windows is None or len(windows) == 0:
        return math.nan
    model.eval()
    total = 0.0
    for i in range(0, len(windows), batch_size):
        sl = slice(i, i + batch_size)
        n = len(windows.anchor_index[sl])
        total += n * batch_loss(model, windows.features[sl], windows.target_deltas[sl],
                                windows.target_labels[sl], backward=False)
    return total / len(windows)


def train(model: Forecaster, train_windows: WindowSet, val_windows: WindowSet | None,
          cfg: TrainConfig, on_epoch=None):
    """Shuffled mini-batch Adam training; returns ``(model, history)``."""
    if isinstance(train_windows, list):
        train_windows = WindowSet.from_samples(train_windows)
    if isinstance(val_windows, list):
        val_windows = WindowSet.from_samples(val_windows) if val_windows else None
    check_no_leakage(train_windows, val_windows)
    if len(train_windows) == 0:
        raise DataError("no training windows")
    expected = (len(train_windows),) + model.cfg.input_shape
    if train_windows.features.shape != expected:
        raise DataError(f"window features {train_windows.features.shape[1:]} do not match "
                        f"model input {model.cfg.input_shape}")

    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.lr)
    history = TrainHistory()
    n = len(train_windows)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        model.train()
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            opt.zero_grad()
            loss = batch_loss(model, train_windows.features[idx], train_windows.target_deltas[idx],
                              train_windows.target_labels[idx])
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss {loss} at epoch {epoch + 1}, batch {b + 1}")
            opt.step()
            total += loss * len(idx)
        history.train_loss.append(total / n)
        history.val_loss.append(evaluate_loss(model, val_windows))
        history.seconds.append(time.perf_counter() - t0)
        log.info("epoch %d: train %.5f val %.5f (%.1fs)", epoch + 1, history.train_loss[-1],
                 history.val_loss[-1], history.seconds[-1])
        if on_epoch is not None:
            on_epoch(epoch + 1, history)
    model.eval()
    return model, history


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(model: Forecaster, path) -> None:
    """Write a JSON header line followed by little-endian float32 tensors."""
    tensors = []
    blobs = []
    for name, p in model.named_parameters().items():
        data = np.ascontiguousarray(p.data, dtype="<f4")
        tensors.append({"name": name, "shape": list(data.shape), "nbytes": data.nbytes,
                        "trainable": p.trainable})
        blobs.append(data.tobytes())
    norm = model.normalization
    header = {
        "format_version": CHECKPOINT_VERSION,
        "arch": model.cfg.arch.value,
        "config": model.cfg.to_dict(),
        "normalization": None if norm is None else {
            "mean": [float(v) for v in norm.mean], "std": [float(v) for v in norm.std]},
        "train_seed": model.meta.get("train_seed"),
        "meta": {k: v for k, v in model.meta.items() if k != "train_seed"},
        "tensors": tensors,
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path, expected_arch: Arch | str | None = None) -> Forecaster:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise FormatError(f"{path}: not a checkpoint file")
    nl = raw.find(b"\n", len(CHECKPOINT_MAGIC))
    if nl < 0:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[len(CHECKPOINT_MAGIC):nl])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: unreadable header ({exc})") from None
    version = header.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(
            f"{path}: checkpoint format version {version} does not match supported version "
            f"{CHECKPOINT_VERSION}")
    if expected_arch is not None and header.get("arch") != Arch(str(expected_arch).upper()).value:
        raise FormatError(f"{path}: checkpoint arch {header.get('arch')} does not match expected "
                          f"{Arch(str(expected_arch).upper()).value}")
    cfg = ModelConfig.from_dict(header["config"])
    model = build_model(cfg)
    params = model.named_parameters()
    offset = nl + 1
    seen = set()
    for spec in header["tensors"]:
        name = spec["name"]
        if name not in params:
            raise FormatError(f"{path}: unknown tensor {name!r}")
        shape = tuple(spec["shape"])
        want = int(np.prod(shape, dtype=np.int64)) * 4
        if spec["nbytes"] != want or shape != params[name].data.shape:
            raise FormatError(f"{path}: tensor {name!r} declares {spec['nbytes']} bytes / shape "
                              f"{shape}, expected {params[name].data.size * 4} bytes / shape "
                              f"{params[name].data.shape}")
        if offset + want > len(raw):
            raise FormatError(f"{path}: truncated data for tensor {name!r}")
        params[name].data = np.frombuffer(raw, dtype="<f4", count=want // 4,
                                          offset=offset).reshape(shape).astype(np.float32)
        params[name].grad = np.zeros_like(params[name].data)
        params[name].trainable = bool(spec.get("trainable", True))
        offset += want
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise FormatError(f"{path}: missing tensor(s) {sorted(missing)}")
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} unexpected trailing bytes")
    norm = header.get("normalization")
    if norm is not None:
        model.normalization = Normalization(np.array(norm["mean"]), np.array(norm["std"]))
    model.meta = dict(header.get("meta") or {})
    model.meta["train_seed"] = header.get("train_seed")
    model.eval()
    return model
