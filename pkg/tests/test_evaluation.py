import warnings

import numpy as np
import pytest

from lstmvad import data, evaluation as ev, synth
from lstmvad.detector import Detector, fit_threshold_regressor
from lstmvad.evaluation import RocPoint, UndefinedRateError, auc, roc_curve
from lstmvad.model import LstmVae, LstmVaeConfig
from lstmvad.threshold import ConstantRegressor

TINY = {"lstmvae": {"hidden_enc": 4, "hidden_dec": 4, "max_epochs": 2},
        "ae": {"max_epochs": 2}, "encdecad": {"hidden": 4, "max_epochs": 1},
        "osvm": {"max_train": 200}}


def tiny_dataset(groups=2, per=10, seed=0):
    return synth.generate_benchmark(synth.BenchmarkConfig(
        n_groups=groups, executions_per_group=per, duration_s=(2.0, 2.5), seed=seed))


def tiny_eval(seed=0):
    return ev.EvalConfig(seq_len=24, sweep_points=11, seed=seed)


# -- auc --------------------------------------------------------------------------------

def test_auc_fixtures():
    assert auc([(0, 0), (0, 1), (1, 1)]) == 1.0
    assert auc([(0, 0), (1, 1)]) == 0.5
    # unsorted input with a bulge at (0.2, 0.8)
    pts = [(0.5, 0.5), (1, 1), (0.2, 0.8), (0, 0)]
    expect = 0.2 * (0 + 0.8) / 2 + 0.3 * (0.8 + 0.5) / 2 + 0.5 * (0.5 + 1) / 2
    assert auc(pts) == pytest.approx(expect, abs=1e-15)
    assert expect == pytest.approx(0.65)


def test_auc_needs_two_points():
    with pytest.raises(ValueError):
        auc([(0, 0)])


def test_auc_accepts_roc_points():
    assert auc([RocPoint(None, 0.0, 0.0), RocPoint(1.0, 1.0, 0.0), RocPoint(None, 1.0, 1.0)]) == 1.0


# -- roc ---------------------------------------------------------------------------------

def test_perfect_separation_hits_corner():
    s = np.r_[np.full(5, 10.0), np.zeros(5)]
    lab = np.r_[np.ones(5, bool), np.zeros(5, bool)]
    pts = roc_curve(s, lab, np.linspace(-1, 11, 13))
    assert any(p.tpr == 1.0 and p.fpr == 0.0 for p in pts)
    assert auc(pts) == 1.0


def test_endpoints_appended():
    pts = roc_curve(np.array([0.1, 0.9]), np.array([True, False]), [0.5])
    assert (pts[0].fpr, pts[0].tpr) == (0.0, 0.0) and (pts[-1].fpr, pts[-1].tpr) == (1.0, 1.0)


def test_shuffled_labels_near_diagonal():
    r = np.random.default_rng(0)
    s = r.normal(size=400)
    lab = r.permutation(np.r_[np.ones(200, bool), np.zeros(200, bool)])
    a = auc(roc_curve(s, lab, np.sort(s)))
    assert 0.4 <= a <= 0.6


def test_rates_monotone_in_c():
    r = np.random.default_rng(1)
    s = r.normal(size=(60, 10))
    lab = r.random(60) < 0.5
    pts = roc_curve(s, lab, np.linspace(-3, 3, 25))[1:-1]
    assert all(a.tpr >= b.tpr and a.fpr >= b.fpr for a, b in zip(pts, pts[1:]))


def test_single_class_is_undefined():
    with pytest.raises(UndefinedRateError):
        roc_curve(np.zeros(4), np.zeros(4, bool), [0.0])


@pytest.mark.parametrize("f", [np.exp, lambda v: v ** 3 + 2 * v, lambda v: -1.0 / (1 + np.exp(v))])
def test_auc_invariant_under_monotone_transform(f):
    r = np.random.default_rng(2)
    lab = r.random(80) < 0.4
    s = r.normal(size=80) + lab
    grid = np.sort(s)
    assert auc(roc_curve(f(s), lab, f(grid))) == pytest.approx(auc(roc_curve(s, lab, grid)), abs=1e-12)


def test_sweep_grid_and_first_indices():
    g = ev.sweep_grid([[1.0, 3.0], [2.0, 0.0]], n=5, pad=1.0)
    np.testing.assert_allclose(g, [-1, 0.25, 1.5, 2.75, 4])
    fi = ev.first_indices(np.array([[0.0, 2.0, 5.0], [0.0, 0.0, 0.0]]), [1.0, 3.0, 9.0], offset=2)
    assert fi.tolist() == [[3, -1], [4, -1], [-1, -1]]


def test_pooled_roc_is_union_of_fold_decisions():
    class F:
        def __init__(self, g, labels):
            self.group = g
            self.test = [data.Execution(f"{g}{i}", g, data.CHANNELS_4, np.zeros((2, 4)),
                                        label="anomalous" if l else "non_anomalous",
                                        anomaly_type="x" if l else None, onset=1 if l else None)
                         for i, l in enumerate(labels)]

    f1, f2 = F("a", [1, 0]), F("b", [1, 0, 0])
    r1 = ev.SweepResult(np.array([0.0, 1.0]), np.array([[1, 1], [1, 0]], bool), np.array([1, -1]))
    r2 = ev.SweepResult(np.array([5.0, 6.0]), np.array([[1, 1, 0], [0, 0, 0]], bool), np.array([0, -1, -1]))
    rep = ev.build_report("m", "raw17", [(f1, r1, {}), (f2, r2, {})])
    # sweep 0: TPR 2/2, FPR 2/3; sweep 1: TPR 1/2, FPR 0
    core = [(p.tpr, p.fpr) for p in rep.roc[1:-1]]
    assert core == [(1.0, pytest.approx(2 / 3)), (0.5, 0.0)]
    # delays: 1 - 1 = 0 and 0 - 1 = -1
    assert rep.delay["n_detected"] == 2 and rep.delay["median"] == -0.5


def test_delay_stats():
    d = ev.delay_stats([("a", 10, 12), ("a", 5, 3), ("b", 7, -1)])
    assert d["n_anomalous"] == 3 and d["n_detected"] == 2
    assert d["median"] == 0.0 and d["frac_at_or_after_onset"] == 0.5
    assert d["by_type"]["b"]["median"] is None


# -- folds -------------------------------------------------------------------------------------

def test_two_groups_two_folds_and_train_only_stats():
    ds = tiny_dataset()
    cfg = tiny_eval()
    folds = ev.make_folds(ds, cfg)
    assert len(folds) == 2 and [f.group for f in folds] == ["g00", "g01"]
    f = folds[0]
    assert {e.group for e in f.test} == {"g00"}
    assert all(e.group == "g01" and not e.is_anomalous for e in f.train + f.val)
    raw_train = [data.resample_execution(e, cfg.seq_len) for e in ds.executions
                 if e.id in {x.id for x in f.train}]
    ref = data.normalize_fit(raw_train)
    np.testing.assert_array_equal(f.stats.min, ref.min)
    np.testing.assert_array_equal(f.stats.max, ref.max)


def test_single_class_group_is_skipped():
    ds = tiny_dataset(groups=3)
    ds.executions = [e for e in ds.executions if not (e.group == "g02" and e.is_anomalous)]
    with pytest.warns(UserWarning, match="g02"):
        folds = ev.make_folds(ds, tiny_eval())
    assert [f.group for f in folds] == ["g00", "g01"]


def test_features4_folds():
    folds = ev.make_folds(tiny_dataset(), tiny_eval(), layout="features4")
    assert folds[0].train[0].channels == data.CHANNELS_4


def test_fold_seeds_distinct_and_stable():
    assert ev.fold_seed(0, 1) == ev.fold_seed(0, 1)
    assert len({ev.fold_seed(m, k) for m in range(3) for k in range(8)}) == 24


# -- full harness on a tiny benchmark ---------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_reports():
    ds = tiny_dataset()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = ev.run_folds(ds, list(ev.METHODS), tiny_eval(), "raw17", TINY)
        b = ev.run_folds(ds, list(ev.METHODS), tiny_eval(), "raw17", TINY)
    return ds, a, b


def test_all_variants_reported(tiny_reports):
    _, a, _ = tiny_reports
    assert set(a) == {"lstmvae", "lstmvae_fixed", "encdecad", "ae", "osvm", "osvm_offset", "random"}
    for rep in a.values():
        assert 0.0 <= rep.pooled_auc <= 1.0
        assert set(rep.fold_aucs) == {"g00", "g01"}
        assert (rep.roc[0].fpr, rep.roc[-1].fpr) == (0.0, 1.0)


def test_report_hash_deterministic(tiny_reports):
    _, a, b = tiny_reports
    for name in a:
        assert a[name].content_hash() == b[name].content_hash(), name


def test_canary_test_data_cannot_leak(tiny_reports):
    ds, a, _ = tiny_reports
    r = np.random.default_rng(9)
    for e in ds.executions:
        if e.group == "g00":
            e.signals = e.signals + r.normal(scale=5.0, size=e.signals.shape)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        c = ev.run_folds(ds, list(ev.METHODS), tiny_eval(), "raw17", TINY)
    for name in a:
        before = {f["group"]: f["model_hash"] for f in a[name].folds}
        after = {f["group"]: f["model_hash"] for f in c[name].folds}
        assert before["g00"] == after["g00"], name  # g00 was the test group of this fold
        assert before["g01"] != after["g01"] or name == "random"


def test_report_files(tiny_reports, tmp_path):
    import json

    _, a, _ = tiny_reports
    ev.write_report(a["lstmvae"], tmp_path / "r.json")
    ev.write_roc_csv(a["lstmvae"].roc, tmp_path / "r.csv")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["schema_version"] == ev.SCHEMA_VERSION and d["content_hash"] == a["lstmvae"].content_hash()
    assert d["created"]
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "param,fpr,tpr" and len(lines) == 1 + len(a["lstmvae"].roc)


def test_cross_validate_headline():
    ds = tiny_dataset()
    rep = ev.cross_validate(ds, "random", tiny_eval(), overrides=TINY)
    assert rep.method == "random"
    with pytest.raises(ValueError):
        ev.method_factory("hmm", 17, 0)


# -- threshold ablation ---------------------------------------------------------------------------

def _ablation_setup():
    r = np.random.default_rng(0)
    cfg = LstmVaeConfig(input_dim=2, latent_dim=2, hidden_enc=4, hidden_dec=4)
    m = LstmVae(cfg)
    val = r.uniform(size=(8, 20, 2))
    test = r.uniform(size=(10, 20, 2))
    test[:5, 12:] += 1.0
    labels = np.r_[np.ones(5, bool), np.zeros(5, bool)]
    return m, val, test, labels


def test_ablation_constant_regressor_curves_coincide():
    m, val, test, labels = _ablation_setup()
    s_val, _ = Detector(m, None).score_batch(val)
    det = Detector(m, ConstantRegressor(float(np.mean(s_val))))
    out = ev.threshold_ablation(det, val, test, labels, ev.EvalConfig())
    assert [(p.tpr, p.fpr) for p in out["state"]] == [(p.tpr, p.fpr) for p in out["fixed"]]


def test_ablation_shared_endpoints():
    m, val, test, labels = _ablation_setup()
    det = Detector(m, fit_threshold_regressor(val, m))
    out = ev.threshold_ablation(det, val, test, labels)
    for pts in out.values():
        assert (pts[0].fpr, pts[0].tpr) == (0.0, 0.0) and (pts[-1].fpr, pts[-1].tpr) == (1.0, 1.0)
