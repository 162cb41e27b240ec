import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazepred.errors import ConfigError, DataError, FormatError, NumericError
from gazepred.models import build_model, default_config, predict_batch
from gazepred.neural import Adam
from gazepred.pipeline import (fit_subject_normalization, subject_windows,
                               train_on_subjects)
from gazepred.training import (CHECKPOINT_MAGIC, TrainConfig, batch_loss, check_no_leakage,
                               holdout_subjects, load_checkpoint, save_checkpoint,
                               split_subjects, train)


def _windows(subjects, arch, n=None):
    cfg = default_config(arch)
    norm = fit_subject_normalization(subjects, cfg)
    ws = subject_windows(subjects, cfg, norm)
    return (ws if n is None else ws.take(np.arange(n))), cfg, norm


# splitting

def test_split_78_subjects():
    ids = [f"P{i:02d}" for i in range(78)]
    tr, te = split_subjects(ids, 66 / 78, 0)
    assert (len(tr), len(te)) == (66, 12)
    assert set(tr).isdisjoint(te) and set(tr) | set(te) == set(ids)
    assert split_subjects(ids, 66 / 78, 0) == (tr, te)
    assert split_subjects(ids, 66 / 78, 1) != (tr, te)


@settings(max_examples=60)
@given(st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 10_000))
def test_split_is_partition(n, frac, seed):
    ids = [f"s{i}" for i in range(n)]
    try:
        tr, te = split_subjects(ids, frac, seed)
    except ConfigError:
        k = int(np.floor(n * frac + 0.5))
        assert k < 1 or k > n - 1
        return
    assert set(tr).isdisjoint(te) and sorted(tr + te) == sorted(ids)


def test_split_errors():
    with pytest.raises(ConfigError):
        split_subjects(["a"], 0.5, 0)
    with pytest.raises(ConfigError):
        split_subjects(["a", "b", "c"], 0.9, 0)


def test_holdout():
    fit, val = holdout_subjects([f"s{i}" for i in range(20)], 0.1, 0)
    assert len(val) == 2 and len(fit) == 18 and set(fit).isdisjoint(val)
    assert holdout_subjects(["a"], 0.1, 0) == (["a"], [])
    assert len(holdout_subjects(["a", "b", "c"], 0.1, 0)[1]) == 1


def test_leakage_check(small_subjects):
    a, _, _ = _windows(small_subjects[:2], "lstm")
    b, _, _ = _windows(small_subjects[1:3], "lstm")
    with pytest.raises(DataError, match="S001"):
        check_no_leakage(a, b)
    c, _, _ = _windows(small_subjects[2:], "lstm")
    check_no_leakage(a, c, None)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(train_fraction=1.0)


# training loop

def test_batches_per_epoch(small_subjects):
    ws, cfg, _ = _windows(small_subjects[:1], "lstm", n=100)
    model = build_model(cfg)
    sizes = []
    fwd = model.forward
    model.forward = lambda x: (sizes.append(len(x)), fwd(x))[1]
    train(model, ws, None, TrainConfig(epochs=1, batch_size=32))
    assert sizes == [32, 32, 32, 4]


def test_shuffle_keeps_window_multiset(small_subjects):
    ws, cfg, _ = _windows(small_subjects[:1], "lstm", n=70)
    ws.anchor_index = np.arange(70)
    model = build_model(cfg)
    seen = []
    fwd = model.forward

    def spy(x):
        # recover window identity from the feature bytes
        lookup = {ws.features[i].tobytes(): i for i in range(70)}
        seen.extend(lookup[w.tobytes()] for w in x)
        return fwd(x)

    model.forward = spy
    train(model, ws, None, TrainConfig(epochs=2, batch_size=16, lr=0.0))
    assert sorted(seen[:70]) == list(range(70)) == sorted(seen[70:])
    assert seen[:70] != seen[70:]


@pytest.mark.parametrize("arch", ["lstm", "clpr"])
def test_zero_lr_leaves_parameters(small_subjects, arch):
    ws, cfg, _ = _windows(small_subjects[:1], arch, n=50)
    model = build_model(cfg)
    before = {k: p.data.copy() for k, p in model.named_parameters().items()}
    train(model, ws, None, TrainConfig(epochs=2, lr=0.0))
    for k, p in model.named_parameters().items():
        np.testing.assert_array_equal(p.data, before[k])


def test_training_bit_reproducible(small_subjects):
    ws, cfg, _ = _windows(small_subjects[:2], "tf", n=120)
    va, _, _ = _windows(small_subjects[2:3], "tf", n=40)

    def run():
        m = build_model(cfg)
        _, h = train(m, ws, va, TrainConfig(epochs=2, seed=5))
        return h, {k: p.data for k, p in m.named_parameters().items()}

    (h1, p1), (h2, p2) = run(), run()
    assert h1.train_loss == h2.train_loss and h1.val_loss == h2.val_loss
    for k in p1:
        np.testing.assert_array_equal(p1[k], p2[k])


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("arch", ["lstm", "tf", "clpr"])
def test_fixed_batch_loss_decreases(small_subjects, arch, seed):
    ws, _, _ = _windows(small_subjects[:1], arch)
    cfg = default_config(arch, init_seed=seed)
    idx = np.random.default_rng(seed).choice(len(ws), 32, replace=False)
    feats, deltas, labels = ws.features[idx], ws.target_deltas[idx], ws.target_labels[idx]
    model = build_model(cfg).eval()  # dropout off so the objective is fixed
    opt = Adam(model.parameters(), lr=3e-4)
    losses = []
    for _ in range(6):
        opt.zero_grad()
        losses.append(batch_loss(model, feats, deltas, labels))
        opt.step()
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_non_finite_loss_aborts(small_subjects):
    ws, cfg, _ = _windows(small_subjects[:1], "lstm", n=40)
    ws.target_deltas = ws.target_deltas.copy()
    ws.target_deltas[5, 0, 0] = np.nan
    with pytest.raises(NumericError, match="epoch 1, batch 1"):
        train(build_model(cfg), ws, None, TrainConfig(epochs=1, shuffle=False))


def test_window_shape_mismatch(small_subjects):
    ws, _, _ = _windows(small_subjects[:1], "lstm", n=10)
    with pytest.raises(DataError):
        train(build_model(default_config("tf")), ws, None, TrainConfig(epochs=1))


def test_train_on_subjects_split(small_subjects):
    run = train_on_subjects(small_subjects, default_config("lstm", hidden_size=8, n_layers=1),
                            TrainConfig(epochs=1, train_fraction=0.75))
    ids = {s.subject_id for s in small_subjects}
    assert set(run.train_ids + run.val_ids + run.test_ids) == ids
    assert len(run.test_ids) == 1 and len(run.val_ids) == 1
    assert run.model.meta["test_subjects"] == run.test_ids
    assert len(run.history) == 1


# checkpoints

@pytest.fixture
def trained(small_subjects):
    ws, cfg, norm = _windows(small_subjects[:1], "clpr", n=40)
    model = build_model(cfg)
    train(model, ws, None, TrainConfig(epochs=1))
    model.normalization = norm
    model.meta = {"train_seed": 0, "test_subjects": ["S003"]}
    return model, ws


def test_checkpoint_round_trip_bit_exact(tmp_path, trained):
    model, ws = trained
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path, "clpr")
    assert loaded.cfg == model.cfg
    for k, p in model.named_parameters().items():
        q = loaded.named_parameters()[k]
        assert q.data.dtype == np.float32
        assert q.data.tobytes() == p.data.tobytes()
    np.testing.assert_array_equal(loaded.normalization.mean, model.normalization.mean)
    np.testing.assert_array_equal(loaded.normalization.std, model.normalization.std)
    assert loaded.meta["test_subjects"] == ["S003"]
    a, la = predict_batch(model, ws.features)
    b, lb = predict_batch(loaded, ws.features)
    assert a.tobytes() == b.tobytes() and la.tobytes() == lb.tobytes()
    save_checkpoint(loaded, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def _rewrite_header(path, edit):
    raw = path.read_bytes()
    nl = raw.index(b"\n", len(CHECKPOINT_MAGIC))
    header = json.loads(raw[len(CHECKPOINT_MAGIC):nl])
    edit(header)
    path.write_bytes(CHECKPOINT_MAGIC + json.dumps(header).encode() + raw[nl:])


def test_checkpoint_errors(tmp_path, trained):
    model, _ = trained
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    with pytest.raises(FormatError, match="CLPR does not match expected LSTM"):
        load_checkpoint(path, "lstm")

    bad = tmp_path / "v.ckpt"
    bad.write_bytes(path.read_bytes())
    _rewrite_header(bad, lambda h: h.update(format_version=7))
    with pytest.raises(FormatError, match="version 7 .* version 1"):
        load_checkpoint(bad)

    bad.write_bytes(path.read_bytes())

    def shrink(h):
        h["tensors"][2]["nbytes"] -= 4
    _rewrite_header(bad, shrink)
    name = json.loads(path.read_bytes().split(b"\n")[1])["tensors"][2]["name"]
    with pytest.raises(FormatError, match=repr(name).replace(".", r"\.")):
        load_checkpoint(bad)

    bad.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(FormatError, match="truncated"):
        load_checkpoint(bad)
    bad.write_bytes(b"hello")
    with pytest.raises(FormatError):
        load_checkpoint(bad)
