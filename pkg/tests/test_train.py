import numpy as np
import pytest

from relearn.augment import AugmentConfig
from relearn.datamodel import Dataset, ProjectionModel, RelearnError, RelevanceTable
from relearn.model import Gradients, LossConfig, TripletBatch, loss_gradients
from relearn.synth import SynthConfig, generate
from relearn.train import (AdamState, TrainConfig, adam_step, hard_negative_select, sample_triplets, train)

SMALL = SynthConfig(num_videos=60, num_clusters=6, d=8, min_frames=4, max_frames=8, seed=0)


def small_cfg(**kw):
    base = dict(projection_dim=16, max_epochs=4, augment=AugmentConfig(enable_frame_level=False), seed=0)
    base.update(kw)
    return TrainConfig(**base)


class TestSampleTriplets:
    def test_forced_negative(self):
        rel = RelevanceTable({"a": ("b",)}, {"a": "train", "b": "train", "c": "train"})
        feats = {v: np.full(2, float(i + 1)) for i, v in enumerate("abc")}
        batches = list(sample_triplets(rel, feats, np.random.default_rng(0)))
        assert len(batches) == 1
        b = batches[0]
        assert b.anchor_ids == ("a",) and b.positive_ids == ("b",) and b.negative_ids == ("c",)

    def test_no_lists_gives_empty_stream(self):
        rel = RelevanceTable({}, {"a": "train", "b": "train"})
        feats = {"a": np.ones(2), "b": np.ones(2)}
        assert list(sample_triplets(rel, feats, np.random.default_rng(0))) == []

    def test_degenerate_pool(self):
        rel = RelevanceTable({"a": ("b",)}, {"a": "train", "b": "train"})
        feats = {"a": np.ones(2), "b": np.ones(2)}
        with pytest.raises(RelearnError):
            list(sample_triplets(rel, feats, np.random.default_rng(0)))

    def test_deterministic_and_complete(self):
        ds = generate(SMALL).dataset
        rel = ds.relevance

        def run():
            return [(b.anchor_ids, b.positive_ids, b.negative_ids)
                    for b in sample_triplets(rel, ds.features, np.random.default_rng(5), batch_size=7)]

        first = run()
        assert first == run()
        train = set(rel.ids_in("train"))
        pairs = sorted((a, p) for ids in first for a, p in zip(ids[0], ids[1]))
        expected = sorted((v, r) for v in train for r in rel.relevant(v) if r in train)
        assert pairs == expected
        for a_ids, _, n_ids in first:
            for a, n in zip(a_ids, n_ids):
                assert n in train and n != a and n not in rel.relevant(a)
        assert all(len(ids[0]) == 7 for ids in first[:-1])

    def test_instances_multiply_pairs(self):
        rel = RelevanceTable({"a": ("b",)}, {"a": "train", "b": "train", "c": "train"})
        inst = {"a": np.ones((3, 2)), "b": np.ones((2, 2)), "c": np.ones((1, 2))}
        batches = list(sample_triplets(rel, inst, np.random.default_rng(0), batch_size=100))
        assert len(batches[0]) == 3


class TestHardNegative:
    def make_batch(self):
        anchors = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        positives = np.array([[1.0, 0.1], [0.2, 1.0], [0.9, 0.1]])
        negatives = np.array([[-1.0, 0.0], [-1.0, -1.0], [0.95, 0.05]])
        return TripletBatch(anchors, positives, negatives, ("a0", "a1", "a2"), ("p0", "p1", "p2"),
                            ("n0", "n1", "n2"))

    def test_matches_brute_force(self):
        batch = self.make_batch()
        rel = RelevanceTable({"a0": ("p0",), "a1": ("p1",), "a2": ("p2",)}, {})
        model = ProjectionModel.identity(2)
        out = hard_negative_select(batch, model, rel)
        for i in range(3):
            best, best_id = -np.inf, None
            for j in range(3):
                if j == i:
                    continue
                for vec, vid in ((batch.positives[j], batch.positive_ids[j]), (batch.negatives[j], batch.negative_ids[j])):
                    if vid in rel.relevant(batch.anchor_ids[i]):
                        continue
                    s = vec @ batch.anchors[i] / np.linalg.norm(vec) / np.linalg.norm(batch.anchors[i])
                    if s > best:
                        best, best_id = s, vid
            assert out.negative_ids[i] == best_id

    def test_relevant_never_selected(self):
        batch = self.make_batch()
        # p2 and n2 are the closest to a0; forbid them
        rel = RelevanceTable({"a0": ("p0", "p2", "n2")}, {})
        out = hard_negative_select(batch, ProjectionModel.identity(2), rel)
        assert out.negative_ids[0] not in ("p0", "p2", "n2")

    def test_ties_pick_lowest_index(self):
        same = np.ones((3, 2))
        batch = TripletBatch(same, same, same, ("a", "b", "c"), ("pa", "pb", "pc"), ("na", "nb", "nc"))
        out = hard_negative_select(batch, ProjectionModel.identity(2), RelevanceTable({}, {}))
        assert out.negative_ids == ("pb", "pa", "pa")

    def test_single_triplet_unchanged(self):
        batch = TripletBatch(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2)), ("a",), ("p",), ("n",))
        assert hard_negative_select(batch, ProjectionModel.identity(2), RelevanceTable({}, {})) is batch


class TestAdam:
    def test_zero_gradient(self):
        model = ProjectionModel(np.ones((2, 3)), np.ones(2))
        new, state = adam_step(model, Gradients(np.zeros((2, 3)), np.zeros(2)), AdamState.zeros_like(model), 0.1)
        np.testing.assert_array_equal(new.W, model.W)
        np.testing.assert_array_equal(new.b, model.b)
        assert state.step == 1

    def test_scalar_oracle(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        g = [0.3, -1.2, 0.05]
        theta, m, v = 2.0, 0.0, 0.0
        model = ProjectionModel(np.array([[theta]]), np.array([0.0]))
        state = AdamState.zeros_like(model)
        for t, gt in enumerate(g, start=1):
            m = b1 * m + (1 - b1) * gt
            v = b2 * v + (1 - b2) * gt * gt
            theta -= lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
            model, state = adam_step(model, Gradients(np.array([[gt]]), np.array([0.0])), state, lr)
            assert model.W[0, 0] == pytest.approx(theta, rel=1e-14)
        # first step moves by almost exactly lr against the gradient sign
        first, _ = adam_step(ProjectionModel(np.array([[0.0]]), np.array([0.0])),
                             Gradients(np.array([[5.0]]), np.array([0.0])),
                             AdamState.zeros_like(ProjectionModel(np.zeros((1, 1)), np.zeros(1))), lr)
        assert first.W[0, 0] == pytest.approx(-lr * 5.0 / (5.0 + eps), rel=1e-12)

    def test_no_cross_talk(self):
        model = ProjectionModel(np.zeros((1, 1)), np.zeros(1))
        new, _ = adam_step(model, Gradients(np.array([[1.0]]), np.array([0.0])), AdamState.zeros_like(model), 0.1)
        assert new.b[0] == 0.0 and new.W[0, 0] < 0

    def test_non_finite(self):
        model = ProjectionModel(np.zeros((1, 1)), np.zeros(1))
        with pytest.raises(RelearnError):
            adam_step(model, Gradients(np.array([[np.nan]]), np.array([0.0])), AdamState.zeros_like(model), 0.1)

    def test_small_step_decreases_loss(self):
        rng = np.random.default_rng(9)
        model = ProjectionModel(rng.standard_normal((6, 4)), rng.standard_normal(6) * 0.1)
        batch = TripletBatch(*(rng.standard_normal((16, 4)) for _ in range(3)))
        cfg = LossConfig(kind="netrl")
        before, grads = loss_gradients(model, batch, cfg)
        assert before > 0
        new, _ = adam_step(model, grads, AdamState.zeros_like(model), 1e-5)
        after, _ = loss_gradients(new, batch, cfg)
        assert after < before


class TestTrain:
    def test_zero_epochs(self):
        ds = generate(SMALL).dataset
        model, history = train(small_cfg(max_epochs=0), ds)
        assert history.epochs == []
        expected = ProjectionModel.init(ds.dim, 16, np.random.default_rng(0))
        np.testing.assert_array_equal(model.W, expected.W)

    def test_deterministic(self):
        ds = generate(SMALL).dataset
        m1, h1 = train(small_cfg(), ds)
        m2, h2 = train(small_cfg(), ds)
        assert h1.lines() == h2.lines()
        assert np.array_equal(m1.W, m2.W) and np.array_equal(m1.b, m2.b)

    def test_returns_best_snapshot(self):
        ds = generate(SMALL).dataset
        model, history = train(small_cfg(max_epochs=6), ds)
        from relearn.evaluation import evaluate

        best = max(r.val_sum for r in history.epochs)
        assert history.epochs[history.best_epoch - 1].val_sum == best
        assert evaluate(model, ds, "val").sum == pytest.approx(best)

    def test_lr_schedule_is_halving(self):
        ds = generate(SMALL).dataset
        _, history = train(small_cfg(max_epochs=15, lr_halve_patience=1, early_stop_patience=50,
                                     initial_lr=0.05), ds)
        lrs = [r.lr for r in history.epochs]
        assert all(a >= b for a, b in zip(lrs, lrs[1:]))
        for lr in lrs:
            k = np.log2(0.05 / lr)
            assert abs(k - round(k)) < 1e-12
        assert lrs[-1] < lrs[0]

    def test_early_stop(self):
        ds = generate(SMALL).dataset
        _, history = train(small_cfg(max_epochs=50, early_stop_patience=1), ds)
        assert len(history.epochs) < 50
        assert history.epochs[-1].val_sum <= max(r.val_sum for r in history.epochs[:-1])

    @pytest.mark.parametrize("kind", ["trl", "itrl", "contrastive"])
    def test_all_losses_run(self, kind):
        ds = generate(SMALL).dataset
        _, history = train(small_cfg(max_epochs=2, loss=LossConfig(kind=kind)), ds)
        assert len(history.epochs) == 2

    def test_with_augmentation_and_checkpoints(self):
        ds = generate(SMALL).dataset
        aug = AugmentConfig(stride=3, enable_frame_level=True, enable_video_level=True)
        _, history = train(small_cfg(max_epochs=2, augment=aug, val_every=10), ds)
        plain = train(small_cfg(max_epochs=2), ds)[1]
        assert history.epochs[-1].iterations > plain.epochs[-1].iterations
        assert [it for it, _ in history.checkpoints] == list(range(10, history.epochs[-1].iterations + 1, 10))

    def test_refuses_without_lists(self):
        ds = generate(SMALL).dataset
        empty = Dataset(ds.features, RelevanceTable({}, ds.relevance.split))
        with pytest.raises(RelearnError):
            train(small_cfg(), empty)

    def test_beats_raw_features(self):
        from relearn.evaluation import evaluate

        ds = generate(SynthConfig(num_videos=120, num_clusters=12, d=32, seed=2)).dataset
        model, _ = train(small_cfg(projection_dim=64, max_epochs=15), ds)
        raw = evaluate(ProjectionModel.identity(ds.dim), ds, "val").sum
        assert evaluate(model, ds, "val").sum > raw
