import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gazepred.errors import DataError, FormatError
from gazepred.signal import (CSV_COLUMNS, FeatureSet, WindowSet, build_window_set, build_windows,
                             differentiate, fit_normalization, heading, load_recording,
                             make_features, make_recording, pi_to_samples, save_recording,
                             valid_anchors)

FS = 90.0


def write_csv(path, rows, header=",".join(CSV_COLUMNS)):
    path.write_text(header + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
    return path


# -- load / save ---------------------------------------------------------------

def test_load_minimal(tmp_path):
    p = write_csv(tmp_path / "r.csv", ["S1,RAN,0,0,0,1", "S1,RAN,11.11,1,0,1", "S1,RAN,22.22,2,0,1"])
    rec = load_recording(p, FS)
    assert len(rec) == 3 and rec.valid.all()
    assert rec.subject_id == "S1" and rec.task_id == "RAN"
    np.testing.assert_array_equal(rec.x_deg, [0, 1, 2])


def test_empty_x_marks_invalid(tmp_path):
    p = write_csv(tmp_path / "r.csv", ["S1,RAN,0,0,0,1", "S1,RAN,11.11,,0,1", "S1,RAN,22.22,2,0,1"])
    rec = load_recording(p, FS)
    assert not rec.valid[1] and math.isnan(rec.x_deg[1])
    assert rec.valid[0] and rec.valid[2]


def test_valid_zero_row_kept_invalid(tmp_path):
    p = write_csv(tmp_path / "r.csv", ["S1,RAN,0,0,0,1", "S1,RAN,11.11,5,5,0", "S1,RAN,22.22,2,0,1"])
    rec = load_recording(p, FS)
    assert len(rec) == 3 and not rec.valid[1] and math.isnan(rec.y_deg[1])


def test_decreasing_timestamp_cites_row(tmp_path):
    rows = [f"S1,RAN,{i * 1000 / FS},0,0,1" for i in range(56)]
    rows.append("S1,RAN,1.0,0,0,1")  # data row 57
    rows += [f"S1,RAN,{(i + 100) * 1000 / FS},0,0,1" for i in range(3)]
    with pytest.raises(DataError, match="row 57"):
        load_recording(write_csv(tmp_path / "r.csv", rows), FS)


def test_bad_header_names_column(tmp_path):
    p = write_csv(tmp_path / "r.csv", ["S1,RAN,0,0,0,1"] * 2,
                  header="subject_id,task_id,time,x_deg,y_deg,valid")
    with pytest.raises(FormatError, match="'time'"):
        load_recording(p, FS)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=50)
    valid = np.ones(50, bool)
    valid[10:14] = False
    rec = make_recording(x, -x, FS, valid, subject_id="S9")
    save_recording(rec, tmp_path / "r.csv")
    back = load_recording(tmp_path / "r.csv", FS)
    np.testing.assert_array_equal(back.valid, rec.valid)
    np.testing.assert_array_equal(back.x_deg[valid], rec.x_deg[valid])
    np.testing.assert_array_equal(back.t_ms, rec.t_ms)


def test_recording_invariants():
    with pytest.raises(DataError):
        make_recording([0.0], [0.0])
    with pytest.raises(DataError):
        make_recording([0, 1, 2], [0, 0, 0], t_ms=[0, 11, 11])
    with pytest.raises(DataError):
        make_recording([0, 1, 2], [0, 0, 0], t_ms=[0, 50, 100])  # interval far from 11.1 ms


# -- differentiation -------------------------------------------------------------

def test_constant_position_zero_velocity():
    kin = differentiate(make_recording(np.full(20, 3.0), np.full(20, -1.0)))
    assert np.all(kin.vx_dps == 0) and np.all(kin.speed_dps == 0)


def test_unit_ramp():
    n = 30
    kin = differentiate(make_recording(np.arange(n) / FS, np.zeros(n)))
    np.testing.assert_allclose(kin.vx_dps[1:-1], 1.0, rtol=1e-12)


def test_hand_central_difference():
    kin = differentiate(make_recording([0.0, 1.0, 4.0], [0.0, 0.0, 0.0]))
    assert kin.vx_dps[1] == pytest.approx(180.0)
    assert kin.vx_dps[0] == pytest.approx(90.0)  # one-sided (1-0)*90
    assert kin.vx_dps[2] == pytest.approx(270.0)


def test_neighbours_of_invalid_marked_invalid():
    valid = np.ones(12, bool)
    valid[5] = False
    kin = differentiate(make_recording(np.arange(12.0), np.zeros(12), valid=valid))
    assert not kin.valid[4] and not kin.valid[5] and not kin.valid[6]
    assert kin.valid[3] and kin.valid[7]


def test_too_few_consecutive_valid():
    valid = np.array([1, 1, 0, 1, 1, 0, 1, 1], bool)
    with pytest.raises(DataError):
        differentiate(make_recording(np.arange(8.0), np.zeros(8), valid=valid))


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3), st.integers(0, 10_000))
def test_differentiation_linearity(a, seed):
    rng = np.random.default_rng(seed)
    rec = make_recording(np.cumsum(rng.normal(size=40)), np.cumsum(rng.normal(size=40)))
    k1 = differentiate(rec.scaled(a))
    k0 = differentiate(rec)
    np.testing.assert_allclose(k1.vx_dps, a * k0.vx_dps, rtol=1e-12, atol=1e-9)
    np.testing.assert_allclose(k1.vy_dps, a * k0.vy_dps, rtol=1e-12, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_speed_and_heading_invariants(seed):
    rng = np.random.default_rng(seed)
    rec = make_recording(np.cumsum(rng.normal(0, 0.05, 60)), np.cumsum(rng.normal(0, 0.05, 60)))
    kin = differentiate(rec)
    np.testing.assert_allclose(kin.speed_dps, np.hypot(kin.vx_dps, kin.vy_dps), rtol=1e-9)
    assert np.all(kin.heading_rad > -np.pi) and np.all(kin.heading_rad <= np.pi)
    last = 0.0
    for t in range(len(kin)):
        if kin.speed_dps[t] >= 1.0:
            last = math.atan2(kin.vy_dps[t], kin.vx_dps[t])
            if last == -math.pi:
                last = math.pi
        assert kin.heading_rad[t] == pytest.approx(last, abs=1e-12)


def test_heading_axes():
    from gazepred.signal import KinematicSeries
    one = np.ones(1)
    k = KinematicSeries(one, 0 * one, one, 0 * one, one.astype(bool))
    assert heading(k, 1.0).heading_rad[0] == 0.0
    k = KinematicSeries(0 * one, one, one, 0 * one, one.astype(bool))
    assert heading(k, 1.0).heading_rad[0] == pytest.approx(np.pi / 2)
    k = KinematicSeries(-one, 0 * one, one, 0 * one, one.astype(bool))
    assert heading(k, 1.0).heading_rad[0] == pytest.approx(np.pi)


def test_heading_carried_forward_below_eps():
    from gazepred.signal import KinematicSeries
    vx = np.array([0.1, 2.0, 0.5, 0.0])
    vy = np.array([0.0, 2.0, -0.5, 0.0])
    k = KinematicSeries(vx, vy, np.hypot(vx, vy), np.zeros(4), np.ones(4, bool))
    h = heading(k, 1.0).heading_rad
    np.testing.assert_allclose(h, [0.0, np.pi / 4, np.pi / 4, np.pi / 4])


# -- features and normalization ----------------------------------------------------

def test_feature_sets():
    rec = make_recording(np.sin(np.arange(40) / 5), np.cos(np.arange(40) / 7))
    kin = differentiate(rec)
    f3 = make_features(kin, FeatureSet.VEL_HEADING_3)
    f4 = make_features(kin, "VEL_HEADING_4")
    assert f3.n_channels == 3 and f4.n_channels == 4
    np.testing.assert_allclose(f4.channels[2] ** 2 + f4.channels[3] ** 2, 1.0)


def test_normalization_zero_mean_unit_std_and_idempotent():
    rng = np.random.default_rng(3)
    series = []
    for _ in range(3):
        rec = make_recording(np.cumsum(rng.normal(size=200)), np.cumsum(rng.normal(size=200)))
        series.append(make_features(differentiate(rec), FeatureSet.VEL_HEADING_4))
    norm = fit_normalization(series)
    normed = [norm.apply(s) for s in series]
    data = np.concatenate([s.channels[:, s.valid] for s in normed], axis=1)
    assert np.all(np.abs(data.mean(axis=1)) < 1e-6)
    np.testing.assert_allclose(data.std(axis=1), 1.0, atol=1e-6)
    again = fit_normalization(normed)
    np.testing.assert_allclose(again.apply(normed[0]).channels, normed[0].channels, atol=1e-9)


def test_normalization_ignores_invalid_samples():
    valid = np.ones(50, bool)
    valid[20:25] = False
    x = np.arange(50.0)
    rec = make_recording(x, np.zeros(50), valid=valid)
    f = make_features(differentiate(rec), FeatureSet.VEL_HEADING_3)
    norm = fit_normalization([f])
    assert norm.mean[0] == pytest.approx(np.mean(f.channels[0, f.valid]))


# -- prediction interval -----------------------------------------------------------

@pytest.mark.parametrize("ms,n", [(22, 2), (44, 4), (66, 6)])
def test_pi_to_samples_protocol(ms, n):
    assert pi_to_samples(ms, 90) == n


def test_pi_to_samples_edges():
    assert pi_to_samples(1, 90) == 1
    assert pi_to_samples(1000 / 90 * 2.5, 90) == 3  # half rounds up
    with pytest.raises(ValueError):
        pi_to_samples(0, 90)


@given(st.floats(0.1, 1000), st.floats(0.1, 1000))
def test_pi_to_samples_monotone(a, b):
    lo, hi = sorted((a, b))
    assert pi_to_samples(lo, 90) <= pi_to_samples(hi, 90)


# -- windows ----------------------------------------------------------------------

def _rec_feats(n=60, seed=0, valid=None):
    rng = np.random.default_rng(seed)
    rec = make_recording(np.cumsum(rng.normal(size=n)), np.cumsum(rng.normal(size=n)), valid=valid)
    return rec, make_features(differentiate(rec), FeatureSet.VEL_HEADING_3)


def test_window_reconstruction_exact():
    rec, f = _rec_feats()
    labels = np.zeros(len(rec), np.int8)
    for w in build_windows(f, rec, labels, 12, 4):
        t = w.anchor_index
        for k in range(4):
            for arr, col in ((rec.x_deg, 0), (rec.y_deg, 1)):
                a, b = arr[t], arr[t + k + 1]
                # one subtraction and one addition: at most a couple of ulps
                ulp = np.spacing(max(abs(a), abs(b)))
                assert abs(a + (b - a) - b) <= 2 * ulp
                # stored deltas are the float32 rounding of the exact difference
                assert w.target_deltas[k, col] == np.float32(b - a)
        np.testing.assert_array_equal(w.features, f.channels[:, t - 11:t + 1].astype(np.float32))


def test_windows_exclude_invalid_spans():
    valid = np.ones(60, bool)
    valid[30] = False
    rec, f = _rec_feats(valid=valid)
    ws = build_window_set(f, rec, np.zeros(60), 12, 4)
    kv = f.valid & rec.valid
    for t in ws.anchor_index:
        assert kv[t - 11:t + 5].all()
    # count agrees with a brute-force scan
    brute = [t for t in range(11, 60 - 4) if kv[t - 11:t + 5].all()]
    np.testing.assert_array_equal(ws.anchor_index, brute)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=80), st.integers(1, 10), st.integers(1, 6))
def test_valid_anchors_brute_force(mask, w, p):
    valid = np.array(mask, bool)
    got = valid_anchors(valid, w, p)
    brute = [t for t in range(w - 1, len(valid) - p) if valid[t - w + 1:t + p + 1].all()]
    np.testing.assert_array_equal(got, brute)


def test_window_set_concat_and_take():
    rec, f = _rec_feats()
    ws = build_window_set(f, rec, np.zeros(60), 12, 4)
    both = WindowSet.concat([ws, ws])
    assert len(both) == 2 * len(ws)
    sub = both.take(np.arange(3))
    assert len(sub) == 3 and sub.features.dtype == np.float32
    again = WindowSet.from_samples(ws.samples())
    np.testing.assert_array_equal(again.features, ws.features)
