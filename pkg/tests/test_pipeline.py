import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import f1_table
from sparsehar.pipeline import (
    UNKNOWN,
    UNLABELED,
    FrameSet,
    PipelineError,
    ProtocolConfig,
    SensorStream,
    SynthClass,
    SynthSpec,
    _random_rotation,
    aggregate_reports,
    chronological_prefix,
    concat_frames,
    cross_user,
    default_fixture,
    evaluate,
    f1_report,
    frame_count,
    frame_stream,
    ingest_csv,
    magnitude,
    majority_label,
    run_fold,
    run_protocol,
    stratified_prefix,
    synth_generate,
    write_csv,
)

# rows = truth, columns = prediction: Still, Walking, Bus, Train, Metro, Tram
TRANSPORT_CONFUSION = [
    [37445, 38, 127, 65, 120, 587],
    [2, 13052, 169, 6, 11, 50],
    [670, 70, 4682, 87, 219, 1068],
    [1098, 16, 212, 463, 394, 363],
    [1662, 8, 415, 296, 1087, 278],
    [3613, 8, 1245, 76, 91, 2955],
]


def _write(path, text):
    path.write_text(text)
    return path


def test_ingest_three_rows(tmp_path):
    p = _write(tmp_path / "a.csv", "timestamp,x,y,z\n0.00,1,2,3\n0.01,1,2,3\n0.02,1,2,3\n")
    s = ingest_csv(p)
    assert len(s) == 3
    assert s.sample_rate == pytest.approx(100.0)
    assert np.all(s.labels == UNLABELED)


def test_ingest_partial_labels(tmp_path):
    p = _write(tmp_path / "a.csv", "timestamp,x,y,z,label\n0,1,0,0,walk\n0.01,1,0,0,\n0.02,0,1,0,still\n")
    s = ingest_csv(p)
    assert s.vocabulary == ["still", "walk"]
    assert s.labels.tolist() == [1, UNLABELED, 0]


@pytest.mark.parametrize("body,line", [
    ("0,1,2\n", 2),
    ("0,1,2,3\n0.01,a,2,3\n", 3),
    ("0,1,2,3\n0.02,1,2,3\n0.01,1,2,3\n", 4),
    ("0,1,2,nan\n", 2),
])
def test_ingest_errors_carry_line_number(tmp_path, body, line):
    p = _write(tmp_path / "bad.csv", "timestamp,x,y,z\n" + body)
    with pytest.raises(PipelineError, match=f":{line}:"):
        ingest_csv(p)


def test_ingest_bad_header(tmp_path):
    with pytest.raises(PipelineError, match=":1:"):
        ingest_csv(_write(tmp_path / "h.csv", "t,a,b,c\n0,1,2,3\n"))


def test_ingest_rate_mismatch_warns(tmp_path):
    p = _write(tmp_path / "a.csv", "timestamp,x,y,z\n0,1,2,3\n0.5,1,2,3\n1.0,1,2,3\n")
    with pytest.warns(UserWarning, match="inconsistent"):
        ingest_csv(p, sample_rate=100.0)


def test_csv_round_trip_1000_rows(tmp_path, rng):
    N = 1000
    names = ["", "bike", "run"]
    lab = rng.integers(-1, 2, size=N)
    s = SensorStream(100.0, np.arange(N) / 100.0, rng.normal(size=(N, 3)) * 5, np.where(lab < 0, UNLABELED, lab),
                     vocabulary=names[1:])
    write_csv(s, tmp_path / "r.csv")
    back = ingest_csv(tmp_path / "r.csv", sample_rate=100.0)
    assert back.axes.tobytes() == s.axes.tobytes()
    assert back.timestamps.tobytes() == s.timestamps.tobytes()
    assert back.label_names() == s.label_names()


def test_stream_rejects_regression():
    with pytest.raises(PipelineError, match="sample 2"):
        SensorStream(10.0, [0.0, 0.2, 0.1], np.zeros((3, 3)), [0, 0, 0], ["a"])


def test_magnitude_examples():
    np.testing.assert_array_equal(magnitude(np.array([[3.0, 4.0, 0.0], [0.0, 0.0, 0.0]])), [5.0, 0.0])


@given(st.integers(0, 2**32 - 1))
def test_magnitude_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 3)) * 10
    R = _random_rotation(rng)
    np.testing.assert_allclose(magnitude(X @ R.T), magnitude(X), atol=1e-9)


def test_frame_example_200_samples():
    fs = frame_stream(np.arange(200.0), sample_rate=100.0)
    assert len(fs) == 3
    assert fs.starts.tolist() == [0, 50, 100]
    np.testing.assert_array_equal(fs.values[1], np.arange(50.0, 150.0))


def test_frame_exactly_one_window():
    assert len(frame_stream(np.ones(100), sample_rate=100.0)) == 1


def test_concat_mode_layout_at_30hz():
    X = np.arange(90.0).reshape(30, 3)
    fs = frame_stream(X, mode="concat", sample_rate=30.0)
    assert fs.values.shape == (1, 90)
    np.testing.assert_array_equal(fs.values[0], np.r_[X[:, 0], X[:, 1], X[:, 2]])


def test_short_stream_warns_zero_frames():
    with pytest.warns(UserWarning, match="shorter"):
        fs = frame_stream(np.ones(40), sample_rate=100.0)
    assert len(fs) == 0 and fs.values.shape == (0, 100)


def test_framing_validation():
    with pytest.raises(PipelineError):
        frame_stream(np.ones(10), sample_rate=1.0)
    with pytest.raises(PipelineError):
        frame_stream(np.ones(300), overlap=1.0, sample_rate=100.0)
    with pytest.raises(PipelineError):
        frame_stream(np.ones(300))


@given(st.integers(0, 2000), st.integers(2, 300), st.floats(0, 0.95))
def test_frame_count_arithmetic(N, w, overlap):
    stride = max(1, round(w * (1 - overlap)))
    expected = 0 if N < w else (N - w) // stride + 1
    assert frame_count(N, w, overlap) == expected
    if expected:
        # the last frame ends inside the series and one more would not fit
        last = (expected - 1) * stride
        assert last + w <= N < last + stride + w


def test_majority_examples():
    assert majority_label([1] * 60 + [0] * 40) == 1
    tie = [0] * 50 + [1] * 50
    assert majority_label(tie, 5) in (0, 1)
    assert majority_label(tie, 5) == majority_label(tie, 5)
    assert {majority_label(tie, s) for s in range(40)} == {0, 1}
    assert majority_label([UNLABELED] * 10) == UNLABELED
    assert majority_label([UNLABELED] * 9 + [2]) == 2


@given(st.lists(st.integers(-1, 4), min_size=1, max_size=80))
def test_majority_matches_counting(labels):
    counts = {}
    for lab in labels:
        if lab >= 0:
            counts[lab] = counts.get(lab, 0) + 1
    got = majority_label(labels, 0)
    if not counts:
        assert got == UNLABELED
    else:
        assert counts[got] == max(counts.values())


def test_frame_labels_by_majority():
    s = SensorStream(100.0, np.arange(200) / 100.0, np.ones((200, 3)), [0] * 130 + [1] * 70, ["a", "b"])
    fs = frame_stream(s)
    # windows [0,100) all a, [50,150) 80 a, [100,200) 30 a vs 70 b
    assert fs.labels.tolist() == [0, 0, 1]


def test_relabel_and_concat():
    a = FrameSet(np.zeros((2, 3)), np.array([0, 1]), np.array([0, 1]), ["x", "y"], "u0")
    b = FrameSet(np.ones((1, 3)), np.array([0]), np.array([0]), ["z"], "u1")
    r = b.relabel(["x", "y"])
    assert r.labels.tolist() == [UNKNOWN]
    both = concat_frames([a, b])
    assert both.vocabulary == ["x", "y", "z"] and both.labels.tolist() == [0, 1, 2]


def test_still_row_of_transport_table():
    rep = f1_report(TRANSPORT_CONFUSION)
    assert round(rep.precision[0], 1) == 84.2
    assert round(rep.recall[0], 1) == 97.6
    assert round(rep.f1[0], 1) == 90.4


def test_perfect_diagonal():
    rep = f1_report(np.diag([3, 5, 7]))
    assert np.all(rep.f1 == 100) and rep.f1m == 100


@given(st.lists(st.integers(0, 50), min_size=9, max_size=9))
def test_report_matches_recomputation(cells):
    conf = np.array(cells).reshape(3, 3)
    if conf.sum(axis=1).min() == 0:
        return
    rep = f1_report(conf)
    prec, rec, f1, avg = f1_table(conf.tolist())
    d = rep.to_dict()
    np.testing.assert_allclose(d["precision"], prec, atol=0.05 + 1e-9)
    np.testing.assert_allclose(d["recall"], rec, atol=0.05 + 1e-9)
    np.testing.assert_allclose(d["f1"], f1, atol=0.05 + 1e-9)
    assert abs(d["f1m"] - avg[2]) <= 0.05 + 1e-9
    assert rep.support.tolist() == conf.sum(axis=1).tolist()
    assert rep.f1.min() - 1e-9 <= rep.f1m <= rep.f1.max() + 1e-9


def test_report_never_predicted_class_has_zero_precision():
    rep = f1_report([[4, 0], [3, 0]])
    assert rep.precision[1] == 0 and rep.f1[1] == 0


def test_report_rejections():
    with pytest.raises(PipelineError):
        f1_report(np.zeros((2, 2)))
    with pytest.raises(PipelineError):
        f1_report([[1, -1], [0, 1]])
    with pytest.raises(PipelineError):
        f1_report([[1, 2, 3]])


def test_evaluate_unknown_row_excluded():
    rep = evaluate([0, 1, UNKNOWN, UNKNOWN, UNLABELED], [0, 1, 1, 1, 0], ["a", "b"])
    assert rep.confusion.tolist() == [[1, 0], [0, 1]]
    assert rep.unknown.tolist() == [0, 2]
    assert rep.f1m == 100.0
    assert "unknown" in rep.to_text()
    d = json.loads(rep.to_json())
    assert d["unknown"] == [0, 2] and d["version"] == 1


def test_aggregate_sums_confusions():
    a, b = f1_report([[2, 1], [0, 3]]), f1_report([[1, 0], [1, 1]])
    assert aggregate_reports([a, b]).confusion.tolist() == [[3, 1], [1, 4]]


def test_prefixes():
    fs = FrameSet(np.zeros((10, 2)), np.array([0, 0, 1, 0, 1, 1, 0, 1, 0, 1]), np.arange(10), ["a", "b"])
    assert chronological_prefix(fs, 0.3).starts.tolist() == [0, 1, 2]
    # first 40% of each class in time order
    assert stratified_prefix(fs, 0.4).starts.tolist() == [0, 1, 2, 4]
    assert stratified_prefix(fs, 0.0).starts.tolist() == [0, 2]


def test_synth_constant_class_zero_variance():
    spec = SynthSpec(classes=[SynthClass("still", "constant")], users=1, segments_per_class=1, segment_seconds=2.0)
    (s,) = synth_generate(spec)
    assert np.all(s.axes.var(axis=0) < 1e-20)


def test_synth_walk_far_more_variable_than_still(walk_still_spec):
    (s,) = synth_generate(walk_still_spec, seed=0)
    m = magnitude(s)
    walk, still = s.vocabulary.index("walk"), s.vocabulary.index("still")
    assert m[s.labels == walk].var() > 10 * m[s.labels == still].var()


def test_synth_deterministic_and_shaped():
    spec = default_fixture(users=2, segments_per_class=1, segment_seconds=3.0)
    a, b = synth_generate(spec, 4), synth_generate(spec, 4)
    for x, y in zip(a, b):
        assert x.axes.tobytes() == y.axes.tobytes()
    assert len(a[0]) == 900 and a[1].meta["user"] == "user1"
    assert a[0].vocabulary == ["ramp_down", "ramp_up", "still"]


def test_synth_rejects_empty_and_unknown_waveform():
    with pytest.raises(PipelineError):
        synth_generate(SynthSpec(classes=[]))
    with pytest.raises(PipelineError):
        synth_generate(SynthSpec(classes=[SynthClass("x", "square")]))


def test_spec_from_dict_round_trip():
    from dataclasses import asdict
    spec = default_fixture(users=2)
    assert SynthSpec.from_dict(json.loads(json.dumps(asdict(spec)))) == spec


def _quick(**kw):
    return ProtocolConfig(codebook_size=24, max_epochs=5, **kw)


def test_cross_user_six_folds_reproducible(small_streams):
    reports, agg = cross_user(small_streams, _quick())
    assert len(reports) == 6
    assert agg.confusion.sum() == sum(r.confusion.sum() for r in reports)
    _, again = cross_user(small_streams, _quick())
    assert again.to_json() == agg.to_json()
    assert agg.f1m >= 80


def test_cross_user_needs_three_streams(small_streams):
    with pytest.raises(PipelineError):
        cross_user(small_streams[:2], _quick())


def test_fold_rejects_shared_train_test(small_streams):
    fs = frame_stream(small_streams[0], stream_id="u0")
    with pytest.raises(PipelineError, match="both"):
        run_fold(fs, fs, fs, _quick())


def test_growing_curves_have_one_point_per_budget(small_streams):
    cfg = _quick(features="engineered")
    curve = run_protocol("growing_unlabeled", small_streams, cfg, budgets=(0.0, 0.5, 1.0))
    assert [b for b, _ in curve] == [0.0, 0.5, 1.0]
    curve = run_protocol("growing_labeled", small_streams, cfg, budgets=(0.1, 1.0))
    assert curve[0][1].meta["labeled_frames"] < curve[1][1].meta["labeled_frames"]
    with pytest.raises(PipelineError):
        run_protocol("growing_labeled", small_streams, cfg, roles=(0, 1, 1))
    with pytest.raises(PipelineError):
        run_protocol("nope", small_streams, cfg)


def test_growing_unlabeled_sparse_zero_budget_falls_back(small_streams):
    curve = run_protocol("growing_unlabeled", small_streams, _quick(), budgets=(0.0,))
    assert curve[0][1].meta["unlabeled_frames"] == 0
    assert math.isfinite(curve[0][1].f1m)


def test_selected_codebook_equals_restricted_parent(small_streams):
    from sparsehar.codebook import Codebook
    from sparsehar.pipeline import fit_extractor
    fs = [frame_stream(s, stream_id=str(i)) for i, s in enumerate(small_streams)]
    cfg = _quick()
    transform, book = fit_extractor(fs[0], cfg)
    restricted = Codebook(basis=book.parent.basis[:, book.kept], alpha=book.alpha)
    from sparsehar.features import extract_activations
    ext = (lambda F: extract_activations(restricted, F), restricted)
    a = run_fold(fs[0], fs[1], fs[2], cfg, (transform, book))
    b = run_fold(fs[0], fs[1], fs[2], cfg, ext)
    assert a.to_json() == b.to_json()


def test_protocol_config_validation():
    with pytest.raises(PipelineError):
        ProtocolConfig(features="wavelet")
    with pytest.raises(PipelineError):
        ProtocolConfig(mode="stacked")
