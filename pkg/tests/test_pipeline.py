import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqmix import numerics as nx
from freqmix import pipeline as pl
from freqmix.data import Dataset, SynthSpec, synth_confusable
from freqmix.model import FreqMixFormer, ModelConfig
from freqmix.numerics import Parameter, make_rng
from freqmix.pipeline import ScoreFile, TrainingSchedule

TINY = ModelConfig(J=5, C=8, F=8, n=2, depth=1, num_classes=3, n_high=2, seed=1)


def tiny_dataset(N=12, seed=0):
    rng = make_rng(seed)
    x = rng.normal(size=(N, 5, 3, 8))
    labels = np.arange(N) % 3
    split = (np.arange(N) >= N * 2 // 3).astype(np.uint8)
    return Dataset(x, labels, split, 3)


# ---------------------------------------------------------------------------
# schedule

def test_lr_schedule_values():
    s = TrainingSchedule()
    assert lr_list(s, [0, 4, 5, 34]) == [0.02, 0.1, 0.1, 0.1]
    assert pl.lr_at(s, 40) == 0.01
    assert pl.lr_at(s, 60) == pytest.approx(0.001, rel=1e-12)
    assert pl.lr_at(s, 80) == pytest.approx(0.0001, rel=1e-12)
    with pytest.raises(ValueError):
        pl.lr_at(s, 100)
    with pytest.raises(ValueError):
        pl.lr_at(s, -1)


def lr_list(s, epochs):
    return [pl.lr_at(s, e) for e in epochs]


def test_schedule_validation():
    for kw in ({"decay_milestones": (55, 35)}, {"decay_milestones": (35, 120)}, {"warmup_epochs": 40},
               {"base_lr": 0.0}, {"epochs": 0}, {"clip_norm": 0.0}):
        with pytest.raises(ValueError):
            TrainingSchedule(**kw)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5), st.lists(st.integers(6, 59), min_size=0, max_size=4, unique=True))
def test_lr_non_increasing_after_warmup(warmup, ms):
    s = TrainingSchedule(epochs=60, warmup_epochs=warmup, decay_milestones=tuple(sorted(ms)))
    lrs = lr_list(s, range(warmup, 60))
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))
    bounds = [warmup] + sorted(ms) + [60]
    for lo, hi in zip(bounds, bounds[1:]):
        assert len(set(lr_list(s, range(max(lo, warmup), hi)))) <= 1


# ---------------------------------------------------------------------------
# metrics, score files, ensembles

def test_perfect_scores_and_trace_identity():
    labels = np.array([0, 1, 2, 2, 1])
    m = pl.metrics_from_scores(np.eye(3)[labels], labels, 3)
    assert m.top1 == 1.0
    rng = make_rng(0)
    m2 = pl.metrics_from_scores(rng.normal(size=(50, 3)), rng.integers(0, 3, 50), 3)
    assert m2.top1 == np.trace(m2.confusion) / m2.total
    assert np.all((m2.per_class >= 0) & (m2.per_class <= 1))
    with pytest.raises(ValueError):
        pl.metrics_from_scores(np.zeros((0, 3)), [], 3)


def test_uniform_random_scores_near_chance():
    k, N = 4, 4000
    rng = make_rng(1)
    m = pl.metrics_from_scores(rng.uniform(size=(N, k)), rng.integers(0, k, N), k)
    sigma = math.sqrt((1 / k) * (1 - 1 / k) / N)
    assert abs(m.top1 - 1 / k) < 3 * sigma


def test_score_file_round_trip(tmp_path):
    sf = ScoreFile(["a", "b"], make_rng(2).normal(size=(2, 3)))
    sf.write(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "id,c0,c1,c2"
    back = ScoreFile.read(tmp_path / "s.csv")
    assert back.ids == ["a", "b"] and back.scores.tobytes() == sf.scores.tobytes()


def test_ensemble_self_and_zero_weight():
    rng = make_rng(3)
    labels = rng.integers(0, 4, 30)
    a = ScoreFile([str(i) for i in range(30)], rng.normal(size=(30, 4)))
    b = ScoreFile(a.ids, rng.normal(size=(30, 4)))
    base = pl.metrics_from_scores(a.scores, labels, 4)
    assert pl.ensemble([a, a], [1, 1], labels).top1 == base.top1
    np.testing.assert_array_equal(pl.fuse_scores([a, a]).argmax(1), a.scores.argmax(1))
    m = pl.ensemble([a, b], [1, 0], labels)
    np.testing.assert_array_equal(m.confusion, base.confusion)
    np.testing.assert_array_equal(pl.fuse_scores([a, b], [2, 3]).argmax(1), pl.fuse_scores([a, b], [4, 6]).argmax(1))


def test_ensemble_of_complementary_oracles():
    N, k = 20, 3
    labels = np.arange(N) % k
    conf = np.full((N, k), 0.0)
    s1, s2 = conf.copy(), conf.copy()
    s1[:10] = 10 * np.eye(k)[labels[:10]]
    s2[10:] = 10 * np.eye(k)[labels[10:]]
    s1[10:] = 0.01 * make_rng(4).normal(size=(10, k))
    s2[:10] = 0.01 * make_rng(5).normal(size=(10, k))
    ids = [str(i) for i in range(N)]
    assert pl.ensemble([ScoreFile(ids, s1), ScoreFile(ids, s2)], [1, 1], labels).top1 == 1.0


def test_ensemble_rejects_misaligned():
    a = ScoreFile(["1", "2"], np.zeros((2, 3)))
    with pytest.raises(ValueError):
        pl.fuse_scores([a, ScoreFile(["2", "1"], np.zeros((2, 3)))])
    with pytest.raises(ValueError):
        pl.fuse_scores([a, ScoreFile(["1", "2"], np.zeros((2, 4)))])
    with pytest.raises(ValueError):
        pl.fuse_scores([a, a], [1.0])


# ---------------------------------------------------------------------------
# training

def test_single_sample_loss_decreases():
    ds = tiny_dataset(N=1)
    ds.split[:] = 0
    model = FreqMixFormer(TINY)
    before = float(nx.cross_entropy(model.forward(ds.x), ds.labels))
    pl.train(model, ds, TrainingSchedule(epochs=1, batch_size=1, base_lr=0.01, warmup_epochs=0,
                                         decay_milestones=()), validate=False)
    assert float(nx.cross_entropy(model.forward(ds.x), ds.labels)) < before


def test_training_is_deterministic(tmp_path):
    ds = tiny_dataset()
    sched = TrainingSchedule(epochs=3, batch_size=4, base_lr=0.05, warmup_epochs=1, decay_milestones=(2,))
    runs = []
    for tag in ("a", "b"):
        res = pl.train(FreqMixFormer(TINY), ds, sched, out_dir=tmp_path / tag)
        runs.append(res)
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == ["best.ckpt", "epoch000.ckpt", "epoch001.ckpt", "epoch002.ckpt", "last.ckpt", "log.csv"]
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "log.csv").read_text().splitlines()[0]
    assert header == "epoch,lr,loss,train_acc,val_acc"
    assert [r["lr"] for r in runs[0].log] == [0.05, 0.05, 0.005]


def test_training_requires_train_samples():
    ds = tiny_dataset()
    ds.split[:] = 1
    with pytest.raises(ValueError):
        pl.train(FreqMixFormer(TINY), ds, TrainingSchedule(epochs=1, decay_milestones=(), warmup_epochs=0))


def test_divergence_guard_names_epoch():
    ds = tiny_dataset()
    model = FreqMixFormer(TINY)
    model.params["head.w"].value[...] = np.nan
    with pytest.raises(pl.DivergenceError, match="epoch 0 batch 0"):
        pl.train(model, ds, TrainingSchedule(epochs=1, batch_size=4, decay_milestones=(), warmup_epochs=0))


def test_evaluate_emits_one_row_per_test_sample():
    ds = tiny_dataset()
    metrics, scores = pl.evaluate(FreqMixFormer(TINY), ds)
    assert scores.scores.shape == (4, 3)
    assert scores.ids == [ds.sources[i] for i in ds.indices("test")]
    assert metrics.total == 4
    ds.split[:] = 0
    with pytest.raises(ValueError):
        pl.evaluate(FreqMixFormer(TINY), ds)


def test_tiny_synthetic_task_is_learned():
    spec = SynthSpec(J=6, F=16, samples=120, jitter_joints=(2, 4), n_high=4)
    ds = synth_confusable(spec, 0)
    cfg = ModelConfig(J=6, C=8, F=16, n=2, depth=1, num_classes=2, n_high=4, seed=0)
    sched = TrainingSchedule(epochs=15, batch_size=16, base_lr=0.05, warmup_epochs=1, decay_milestones=())
    res = pl.train(FreqMixFormer(cfg), ds, sched)
    assert res.log[-1]["val_acc"] >= 0.95


# ---------------------------------------------------------------------------
# gradient checks

def test_grad_check_linear_softmax_toy():
    rng = make_rng(6)
    x, y = rng.normal(size=(5, 4)), np.array([0, 1, 2, 1, 0])
    w, b = Parameter("w", rng.normal(size=(4, 3))), Parameter("b", rng.normal(size=3))

    def loss_fn(tape):
        W, B = (tape.watch(w), tape.watch(b)) if tape else (w.value, b.value)
        return nx.cross_entropy(nx.add(nx.matmul(x, W), B), y)

    rep = pl.grad_check_fn([w, b], loss_fn)
    assert rep.max_rel_error < 1e-8 and rep.checked == 15
    bad = pl.grad_check_fn([w, b], loss_fn, corrupt="b")
    assert bad.worst_param == "b" and bad.max_rel_error > 0.1
    with pytest.raises(ValueError):
        pl.grad_check_fn([w, b], loss_fn, epsilon=0.0)


def test_grad_check_tiny_model_with_fault_injection():
    model = FreqMixFormer(TINY.replace(depth=1, C=4, J=3, F=4, n_high=1))
    x = make_rng(7).normal(size=(3, 3, 4))
    rep = pl.grad_check(model, x, 2)
    assert rep.max_rel_error < 1e-4
    bad = pl.grad_check(model, x, 2, corrupt="blocks.0.fab.1.w_k")
    assert bad.worst_param == "blocks.0.fab.1.w_k"


def test_grad_check_warns_for_large_models():
    p = Parameter("w", np.zeros(11))
    with pytest.warns(UserWarning):
        pl.grad_check_fn([p], lambda tape: nx.sum_(tape.watch(p)) if tape else p.value.sum(), warn_above=10)


def test_relative_error_floor():
    assert pl.relative_error(0.0, 1e-9) == pytest.approx(1e-3)
    assert pl.relative_error(2.0, 1.0) == 0.5


# ---------------------------------------------------------------------------
# difficulty sets

def test_difficulty_examples():
    rep = pl.difficulty_report([0.714, 0.952, 0.80, 0.90, 0.7999, 0.9001])
    assert rep == {"Hard": [0, 4], "Medium": [2, 3], "Easy": [1, 5]}
    with pytest.raises(ValueError):
        pl.difficulty_report([1.2])
    means = pl.difficulty_means([0.5, 0.7, 0.95])
    assert means["Hard"] == pytest.approx(0.6) and math.isnan(means["Medium"])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), max_size=30))
def test_difficulty_sets_partition(acc):
    rep = pl.difficulty_report(acc)
    members = sorted(rep["Hard"] + rep["Medium"] + rep["Easy"])
    assert members == list(range(len(acc)))
