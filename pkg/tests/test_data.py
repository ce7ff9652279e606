import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lstmvad import data, synth
from lstmvad.data import (ANOMALOUS, CHANNELS_4, CHANNELS_17, Execution, NormStats, ParseError,
                          extract_features, load_execution, loads_execution, normalize_apply,
                          normalize_fit, resample, save_execution)


def make_ex(T=10, D=17, anomalous=False, seed=0, rate=20.0):
    r = np.random.default_rng(seed)
    ch = CHANNELS_17 if D == 17 else CHANNELS_4
    kw = dict(label=ANOMALOUS, anomaly_type="force_bump", onset=4) if anomalous else {}
    return Execution(f"e{seed}", "g00", ch, r.normal(size=(T, D)), rate, **kw)


# -- resample ------------------------------------------------------------------------

def test_resample_same_length_identity():
    X = np.random.default_rng(0).normal(size=(30, 3))
    assert np.max(np.abs(resample(X, 30) - X)) <= 1e-12


def test_resample_linear():
    np.testing.assert_allclose(resample(np.array([[0.0], [1.0]]), 3)[:, 0], [0.0, 0.5, 1.0])


@pytest.mark.parametrize("T", [2, 7, 140, 500])
def test_resample_constant(T):
    out = resample(np.full((13, 2), 4.2), T)
    assert out.shape == (T, 2) and np.all(out == 4.2)


def test_resample_errors():
    with pytest.raises(ValueError):
        resample(np.zeros((1, 2)), 5)
    with pytest.raises(ValueError):
        resample(np.zeros((5, 2)), 1)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 60), T=st.integers(2, 200), seed=st.integers(0, 1000))
def test_resample_range_and_endpoints(n, T, seed):
    X = np.random.default_rng(seed).normal(size=(n, 3))
    Y = resample(X, T)
    assert np.all(Y.min(0) >= X.min(0) - 1e-12) and np.all(Y.max(0) <= X.max(0) + 1e-12)
    np.testing.assert_allclose(Y[0], X[0])
    np.testing.assert_allclose(Y[-1], X[-1])


def test_resample_execution_maps_onset():
    ex = make_ex(T=21, anomalous=True)  # onset 4 of 0..20
    out = data.resample_execution(ex, 41)
    assert out.onset == 8 and out.T == 41
    assert out.rate_hz == pytest.approx(40.0)


# -- normalisation ---------------------------------------------------------------------

def test_normalize_fixtures():
    stats = NormStats(np.array([2.0]), np.array([4.0]))
    assert stats.apply(np.array([[3.0]]))[0, 0] == 0.5
    assert stats.apply(np.array([[6.0]]))[0, 0] == 2.0  # not clipped


def test_degenerate_channel_maps_to_zero():
    stats = normalize_fit([np.array([[1.0, 5.0], [2.0, 5.0]])])
    out = stats.apply(np.array([[1.5, 5.0], [3.0, 9.0]]))
    assert np.all(out[:, 1] == 0.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_normalize_train_into_unit_interval(seed):
    r = np.random.default_rng(seed)
    exs = [make_ex(T=int(r.integers(5, 20)), seed=int(s)) for s in r.integers(0, 1000, 3)]
    stats = normalize_fit(exs)
    allv = np.concatenate([normalize_apply(e, stats).signals for e in exs])
    assert allv.min() >= 0.0 and allv.max() <= 1.0
    np.testing.assert_array_equal(allv.min(0), 0.0)
    np.testing.assert_allclose(allv.max(0), 1.0, atol=1e-15)


# -- file format --------------------------------------------------------------------------

def test_roundtrip(tmp_path):
    for ex in (make_ex(), make_ex(anomalous=True, seed=3), make_ex(D=4, seed=5)):
        path = tmp_path / f"{ex.id}.csv"
        save_execution(ex, path)
        back = load_execution(path)
        assert np.array_equal(back.signals, ex.signals)
        fields = ("id", "group", "label", "anomaly_type", "onset", "rate_hz", "channels")
        assert all(getattr(back, f) == getattr(ex, f) for f in fields)


def test_header_format(tmp_path):
    ex = make_ex(anomalous=True)
    lines = data.dumps_execution(ex).splitlines()
    assert lines[0] == "# meta: id=e0, group=g00, label=anomalous, type=force_bump, onset=4, rate_hz=20.0"
    assert lines[1].split(",") == CHANNELS_17


def test_missing_onset_for_anomalous():
    with pytest.raises(ValueError):
        Execution("x", "g", CHANNELS_4, np.zeros((3, 4)), label=ANOMALOUS)
    text = data.dumps_execution(make_ex(anomalous=True)).replace("onset=4", "onset=-")
    with pytest.raises(ParseError):
        loads_execution(text)


def test_short_row_is_parse_error():
    lines = data.dumps_execution(make_ex()).splitlines()
    lines[4] = ",".join(lines[4].split(",")[:16])
    with pytest.raises(ParseError) as err:
        loads_execution("\n".join(lines), path="x.csv")
    assert err.value.line == 5 and "x.csv:5" in str(err.value)


@pytest.mark.parametrize("mutate", [
    lambda ls: ["id=1"] + ls[1:],
    lambda ls: [ls[0], "a,b,c"] + ls[2:],
    lambda ls: ls[:2] + ["1.0,nope" + ls[2][ls[2].index(","):].split(",", 1)[1]],
    lambda ls: ls[:1],
])
def test_malformed_files(mutate):
    lines = data.dumps_execution(make_ex(D=4)).splitlines()
    with pytest.raises(ParseError):
        loads_execution("\n".join(mutate(lines)))


def test_layout_enforced():
    with pytest.raises(ParseError):
        loads_execution(data.dumps_execution(make_ex(D=4)), layout="raw17")


def test_dataset_roundtrip(tmp_path):
    ds = synth.generate_benchmark(synth.BenchmarkConfig(n_groups=2, executions_per_group=5))
    data.save_dataset(ds, tmp_path)
    back = data.load_dataset(tmp_path)
    assert back.splits == ds.splits
    assert [e.id for e in back.executions] == [e.id for e in ds.executions]
    assert all(np.array_equal(a.signals, b.signals) for a, b in zip(ds.executions, back.executions))


# -- features --------------------------------------------------------------------------------

def test_features_zero_force():
    ex = make_ex(T=30)
    ex.signals[:, 1:4] = 0.0
    f = extract_features(ex)
    assert f.channels == CHANNELS_4 and np.all(f.signals[:, 2] == 0.0)


def test_features_spoon_at_mouth():
    ex = make_ex(T=10)
    ex.signals[6, 11:14] = ex.signals[6, 14:17]
    assert extract_features(ex).signals[6, 3] == 0.0


def test_accumulated_force_riemann_sum():
    ex = make_ex(T=40, rate=20.0)
    ex.signals[:, 1:4] = np.array([0.6, 0.0, 0.8])  # magnitude 1
    assert extract_features(ex).signals[-1, 2] == pytest.approx(2.0, abs=1e-12)


def test_features_pass_through_and_wrong_layout():
    ex = make_ex(T=12)
    f = extract_features(ex)
    np.testing.assert_array_equal(f.signals[:, 0], ex.signals[:, 0])
    np.testing.assert_array_equal(f.signals[:, 1], ex.signals[:, 4])
    with pytest.raises(ValueError):
        extract_features(f)


# -- generator ---------------------------------------------------------------------------------

def test_generator_byte_identical(tmp_path):
    cfg = synth.BenchmarkConfig(n_groups=2, executions_per_group=6, seed=4)
    data.save_dataset(synth.generate_benchmark(cfg), tmp_path / "a")
    data.save_dataset(synth.generate_benchmark(cfg), tmp_path / "b")
    assert data.dataset_hash(tmp_path / "a") == data.dataset_hash(tmp_path / "b")
    data.save_dataset(synth.generate_benchmark(synth.BenchmarkConfig(
        n_groups=2, executions_per_group=6, seed=5)), tmp_path / "c")
    assert data.dataset_hash(tmp_path / "a") != data.dataset_hash(tmp_path / "c")


def test_generator_exact_counts():
    cfg = synth.BenchmarkConfig(n_groups=5, executions_per_group=40, anomaly_fraction=0.45)
    ds = synth.generate_benchmark(cfg)
    assert len(ds.executions) == 200
    assert sum(e.is_anomalous for e in ds.executions) == 90
    default = synth.generate_benchmark()
    assert len(default.executions) == 320 and len(default.groups) == 8
    assert sum(e.is_anomalous for e in default.executions) == 144
    assert {e.anomaly_type for e in default.executions if e.is_anomalous} == set(synth.ANOMALY_TYPES)


def test_generator_executions_valid_and_splits_normal():
    ds = synth.generate_benchmark(synth.BenchmarkConfig(n_groups=3, executions_per_group=10))
    for e in ds.executions:
        assert e.D == 17 and np.all(np.isfinite(e.signals))
        assert (e.onset is not None) == e.is_anomalous
        if e.is_anomalous:
            assert 0 < e.onset < e.T
    for split in ("train", "val"):
        assert not any(e.is_anomalous for e in ds.split(split))


@pytest.mark.parametrize("kw", [dict(anomaly_fraction=1.5), dict(anomaly_fraction=0.0),
                                dict(n_groups=1), dict(anomaly_types=("meteor",))])
def test_generator_invalid_config(kw):
    with pytest.raises(ValueError):
        synth.BenchmarkConfig(**kw)


def _draws(kind, n, seed=0):
    cfg = synth.BenchmarkConfig()
    r = np.random.default_rng(seed)
    mech = synth._mechanics(r)
    grp = synth._group(r, 0)
    for _ in range(n):
        X, phases = synth._clean_execution(r, mech, grp, cfg)
        T = X.shape[0]
        onset = int(r.integers(int(0.15 * T), int(0.85 * T)))
        yield X, synth.inject(X, kind, onset, r, mech, cfg, phases), onset


def test_force_bump_self_check():
    ok = []
    for X, A, onset in _draws("force_bump", 200):
        ch = 1 + int(np.argmax(np.abs(A - X)[:, 1:4].sum(axis=0)))
        ok.append(A[onset:, ch].mean() - A[:onset, ch].mean() >= 3 * X[:, ch].std())
    assert np.mean(ok) >= 0.95


def _paired_p(d):
    from scipy.stats import ttest_1samp

    if np.all(d == 0):
        return 1.0
    if np.ptp(d) == 0:
        return 0.0
    return float(ttest_1samp(d, 0.0).pvalue)


@pytest.mark.parametrize("kind", synth.ANOMALY_TYPES)
def test_post_onset_shift_detectable(kind):
    """Per-channel paired t-test against the clean twin, Bonferroni over channels and windows."""
    pytest.importorskip("scipy")
    for X, A, onset in _draws(kind, 60, seed=synth.ANOMALY_TYPES.index(kind)):
        windows = (slice(onset, onset + 20), slice(onset, None))
        p = min(_paired_p(A[w, d] - X[w, d]) for d in range(17) for w in windows)
        assert p * 17 * len(windows) < 0.05


def test_inject_leaves_pre_onset_untouched():
    for kind in synth.ANOMALY_TYPES:
        for X, A, onset in _draws(kind, 5):
            np.testing.assert_array_equal(A[:onset], X[:onset])
