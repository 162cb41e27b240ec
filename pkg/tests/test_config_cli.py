import csv
import hashlib
import json

import pytest

from gazepred import config as cfgmod
from gazepred.cli import main
from gazepred.errors import ConfigError, IOFailure
from gazepred.training import load_checkpoint

SMALL = "hidden_size = 16\nn_layers = 1\nd_model = 16\nffn_dim = 16\ntcn_channels = 8\n"
BINS = ("full", "fix_short", "fix_long", "sac_small", "sac_large", "cep")


def _digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.iterdir()) if p.is_file()}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# config files

def test_parse_config():
    text = "# run\narch = tf\nlr = 0.001  # faster\nshuffle = no\ntcn_dilations = 1, 2\nsubjects=3\n"
    c = cfgmod.parse_config_text(text)
    assert c == {"arch": "TF", "lr": 0.001, "shuffle": False, "tcn_dilations": (1, 2),
                 "subjects": 3}
    parts = cfgmod.split_config(c)
    assert parts["model"] == {"arch": "TF", "tcn_dilations": (1, 2)}
    assert parts["train"] == {"lr": 0.001, "shuffle": False}
    assert parts["synth"] == {"subjects": 3}
    assert cfgmod.parse_config_text(cfgmod.format_config(c)) == c


@pytest.mark.parametrize("text,match", [("learning_rate = 1\n", "'learning_rate'"),
                                        ("lr = 1\nlr = 2\n", "duplicate config key 'lr'"),
                                        ("epochs = many\n", "'epochs'"),
                                        ("just text\n", "expected 'key = value'")])
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        cfgmod.parse_config_text(text)


def test_config_keys_cover_dataclasses():
    for key in ("batch_size", "lr", "epochs", "seed", "train_fraction", "pi_ms", "shuffle",
                "arch", "window_len", "pi_samples", "feature_set", "hidden_size", "lambda_cls",
                "onset_threshold_dps", "merge_gap_ms", "subjects", "duration_s"):
        assert key in cfgmod.KNOWN_KEYS


def test_missing_config_file(tmp_path):
    with pytest.raises(IOFailure):
        cfgmod.load_config(tmp_path / "nope.cfg")


# commands

@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "small.cfg").write_text(SMALL)
    assert main(["synth", "--subjects", "5", "--duration-s", "20", "--seed", "1",
                 "--out", str(root / "data")]) == 0
    assert main(["--threads", "1", "--config", str(root / "small.cfg"), "train",
                 "--data", str(root / "data"), "--out", str(root / "run" / "m.ckpt"),
                 "--arch", "clpr", "--pi-ms", "44", "--epochs", "1", "--seed", "3"]) == 0
    return root


def test_synth_outputs(workspace):
    data = workspace / "data"
    names = sorted(p.name for p in data.iterdir())
    assert [n for n in names if n.endswith(".labels.csv")] == \
        [f"S00{i}.labels.csv" for i in range(5)]
    assert sum(1 for n in names if n.endswith(".csv") and "labels" not in n) == 5
    assert "synth.manifest.json" in names
    lines = (data / "subjects.txt").read_text().splitlines()
    assert json.loads(lines[0])["subject_id"] == "S000"


def test_synth_deterministic(tmp_path, workspace):
    main(["synth", "--subjects", "5", "--duration-s", "20", "--seed", "1",
          "--out", str(tmp_path / "again")])
    a, b = _digest(workspace / "data"), _digest(tmp_path / "again")
    a.pop("synth.manifest.json")
    b.pop("synth.manifest.json")
    assert a == b


def test_synth_zero_subjects(tmp_path, capsys):
    assert main(["synth", "--subjects", "0", "--out", str(tmp_path / "x")]) == 2
    assert "--subjects" in capsys.readouterr().err


def test_synth_unknown_config_key(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("subjectz = 3\n")
    assert main(["--config", str(tmp_path / "bad.cfg"), "synth", "--out", str(tmp_path / "x")]) == 2
    assert "'subjectz'" in capsys.readouterr().err


def test_synth_unwritable_out(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["synth", "--subjects", "1", "--duration-s", "5", "--out", str(blocker / "sub")]) == 5


def test_train_checkpoint_header(workspace):
    model = load_checkpoint(workspace / "run" / "m.ckpt")
    assert model.cfg.arch.value == "CLPR" and model.cfg.pi_samples == 4
    assert model.cfg.hidden_size == 16 and model.cfg.init_seed == 3
    assert model.meta["train_seed"] == 3 and len(model.meta["test_subjects"]) == 1
    hist = _rows(workspace / "run" / "history.csv")
    assert list(hist[0]) == ["epoch", "train_loss", "val_loss", "seconds"] and len(hist) == 1
    manifest = json.loads((workspace / "run" / "train.manifest.json").read_text())
    assert manifest["effective_config"]["model"]["arch"] == "CLPR"
    assert manifest["seed"] == 3 and manifest["threads"] == 1


def test_train_tf_default_window(tmp_path, workspace):
    ckpt = tmp_path / "tf.ckpt"
    assert main(["--config", str(workspace / "small.cfg"), "train", "--data",
                 str(workspace / "data"), "--out", str(ckpt), "--arch", "tf", "--epochs", "0"]) == 0
    assert load_checkpoint(ckpt).cfg.window_len == 18


def test_train_missing_data_dir(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "m.ckpt"),
                 "--epochs", "50"]) == 5
    assert not (tmp_path / "m.ckpt").exists()


def test_train_single_subject(tmp_path):
    main(["synth", "--subjects", "1", "--duration-s", "10", "--out", str(tmp_path / "d")])
    assert main(["train", "--data", str(tmp_path / "d"), "--out", str(tmp_path / "m.ckpt")]) == 2


def test_train_pi_conflict(tmp_path, workspace):
    (tmp_path / "c.cfg").write_text("pi_samples = 6\n")
    assert main(["--config", str(tmp_path / "c.cfg"), "train", "--data", str(workspace / "data"),
                 "--out", str(tmp_path / "m.ckpt"), "--pi-ms", "44"]) == 2


def test_evaluate_outputs(tmp_path, workspace):
    before = _digest(workspace / "data")
    out = tmp_path / "ev"
    assert main(["--threads", "1", "evaluate", "--checkpoint", str(workspace / "run" / "m.ckpt"),
                 "--data", str(workspace / "data"), "--out", str(out), "--plots"]) == 0
    assert _digest(workspace / "data") == before
    for b in BINS:
        rows = _rows(out / f"cdf_{b}.csv")
        assert (out / f"cdf_p95_{b}.csv").exists()
        if rows:
            assert list(rows[0]) == ["error_deg", "fraction"]
            assert float(rows[-1]["fraction"]) == 1.0
    names = {p.name for p in out.iterdir()}
    assert {"profiles.csv", "boxplots.csv", "summary.csv", "report.txt",
            "evaluate.manifest.json"} <= names
    assert any(n.endswith(".svg") for n in names)
    prof = _rows(out / "profiles.csv")
    assert list(prof[0]) == ["subject_id", "event_type", "p50_median_deg", "p95_median_deg",
                             "n_events"]
    assert all(float(r["p50_median_deg"]) <= float(r["p95_median_deg"]) for r in prof)
    assert "non-overlapping 1-second windows" in (out / "report.txt").read_text()

    again = tmp_path / "ev2"
    main(["--threads", "1", "evaluate", "--checkpoint", str(workspace / "run" / "m.ckpt"),
          "--data", str(workspace / "data"), "--out", str(again)])
    a, b = _digest(out), _digest(again)
    for name in a:
        if name.endswith(".csv"):
            assert a[name] == b[name], name

    assert main(["report", "--eval-dir", str(out), "--out", str(tmp_path / "fig")]) == 0
    assert (tmp_path / "fig" / "index.txt").exists()


def test_evaluate_feature_set_mismatch(tmp_path, workspace):
    assert main(["evaluate", "--checkpoint", str(workspace / "run" / "m.ckpt"), "--data",
                 str(workspace / "data"), "--out", str(tmp_path), "--feature-set",
                 "VEL_HEADING_4"]) == 2


def test_evaluate_bad_checkpoint(tmp_path, workspace):
    (tmp_path / "bad.ckpt").write_bytes(b"garbage")
    assert main(["evaluate", "--checkpoint", str(tmp_path / "bad.ckpt"), "--data",
                 str(workspace / "data"), "--out", str(tmp_path / "o")]) == 3


def test_bench(tmp_path):
    assert main(["bench", "--arch", "lstm", "--runs", "200", "--out", str(tmp_path)]) == 0
    (row,) = _rows(tmp_path / "bench.csv")
    assert list(row) == ["model", "input_shape", "mean_ms", "std_ms", "macs", "params"]
    assert row["params"] == "332296" and row["input_shape"] == "4x12"
    assert float(row["std_ms"]) >= 0
    manifest = json.loads((tmp_path / "bench.manifest.json").read_text())
    assert manifest["effective_config"]["runs"] == 200


def test_bench_checkpoint(tmp_path, workspace):
    assert main(["bench", "--checkpoint", str(workspace / "run" / "m.ckpt"), "--runs", "5",
                 "--out", str(tmp_path)]) == 0
    assert _rows(tmp_path / "bench.csv")[0]["model"] == "CLPR"


def test_classify(tmp_path, workspace):
    assert main(["classify", "--data", str(workspace / "data"), "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.labels.csv"))) == 5
    ev = _rows(tmp_path / "events.csv")
    assert {r["class"] for r in ev} >= {"fixation", "saccade"}


def test_global_flags_either_side(tmp_path):
    assert main(["bench", "--arch", "tf", "--runs", "1", "--warmup", "0", "--seed", "2",
                 "--threads", "1", "--out", str(tmp_path)]) == 0
    assert main(["--threads", "0", "bench", "--out", str(tmp_path)]) == 2
