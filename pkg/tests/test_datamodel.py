import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from relearn.datamodel import (Dataset, ParseError, ProjectionModel, RelearnError, RelevanceTable,
                               load_dataset, load_frame_features, load_model, load_relevance, load_splits,
                               load_video_features, mean_pool, save_model, write_video_features)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestVideoFeatures:
    def test_single_row(self, tmp_path):
        feats = load_video_features(write(tmp_path, "f.tsv", "#dim 2\na\t1.0 2.0\n"))
        assert list(feats) == ["a"]
        np.testing.assert_array_equal(feats["a"], [1.0, 2.0])

    def test_empty_body(self, tmp_path):
        assert load_video_features(write(tmp_path, "f.tsv", "#dim 2\n")) == {}

    def test_wrong_width_names_line(self, tmp_path):
        path = write(tmp_path, "f.tsv", "#dim 2\na\t1 2\nb\t1 2 3\n")
        with pytest.raises(ParseError) as err:
            load_video_features(path)
        assert err.value.lineno == 3

    def test_duplicate_id(self, tmp_path):
        with pytest.raises(ParseError):
            load_video_features(write(tmp_path, "f.tsv", "#dim 1\na\t1\na\t2\n"))

    @pytest.mark.parametrize("bad", ["nan", "inf", "-inf", "abc"])
    def test_non_finite(self, tmp_path, bad):
        with pytest.raises(ParseError):
            load_video_features(write(tmp_path, "f.tsv", f"#dim 2\na\t1 {bad}\n"))

    def test_missing_header(self, tmp_path):
        with pytest.raises(ParseError) as err:
            load_video_features(write(tmp_path, "f.tsv", "a\t1 2\n"))
        assert err.value.lineno == 1

    def test_arrays_are_read_only(self, tmp_path):
        feats = load_video_features(write(tmp_path, "f.tsv", "#dim 1\na\t1\n"))
        with pytest.raises(ValueError):
            feats["a"][0] = 5.0


class TestFrameFeatures:
    def test_reordered(self, tmp_path):
        frames = load_frame_features(write(tmp_path, "f.tsv", "#dim 2\na\t2\t0 1\na\t1\t1 0\n"))
        np.testing.assert_array_equal(frames["a"], [[1, 0], [0, 1]])

    def test_missing_frame(self, tmp_path):
        with pytest.raises(RelearnError, match="missing frame 2"):
            load_frame_features(write(tmp_path, "f.tsv", "#dim 1\na\t1\t0\na\t3\t1\n"))

    def test_single_frame(self, tmp_path):
        frames = load_frame_features(write(tmp_path, "f.tsv", "#dim 1\na\t1\t4\n"))
        assert frames["a"].shape == (1, 1)

    def test_duplicate_frame(self, tmp_path):
        with pytest.raises(ParseError):
            load_frame_features(write(tmp_path, "f.tsv", "#dim 1\na\t1\t0\na\t1\t1\n"))


class TestMeanPool:
    def test_hand_values(self):
        np.testing.assert_allclose(mean_pool([[1], [3], [5], [7]]), [4])
        np.testing.assert_allclose(mean_pool([[1, 0], [0, 1]]), [0.5, 0.5])

    def test_single_frame_identity(self):
        np.testing.assert_array_equal(mean_pool([[2.5, -1.0]]), [2.5, -1.0])

    def test_empty(self):
        with pytest.raises(RelearnError):
            mean_pool(np.zeros((0, 3)))

    @given(hnp.arrays(float, st.tuples(st.integers(1, 8), st.integers(1, 5)),
                      elements=st.floats(-1e3, 1e3)),
           st.floats(-10, 10), st.randoms())
    def test_permutation_invariant_and_linear(self, frames, alpha, random):
        perm = list(range(len(frames)))
        random.shuffle(perm)
        pooled = mean_pool(frames)
        np.testing.assert_allclose(mean_pool(frames[perm]), pooled, rtol=1e-12, atol=1e-9)
        np.testing.assert_allclose(mean_pool(alpha * frames), alpha * pooled, rtol=1e-12, atol=1e-9)


class TestRelevanceAndSplits:
    def test_ordered_lists(self, tmp_path):
        lists = load_relevance(write(tmp_path, "r.tsv", "a\tc,b\nb\ta\n"))
        assert lists == {"a": ("c", "b"), "b": ("a",)}

    def test_self_reference_rejected(self, tmp_path):
        with pytest.raises(ParseError):
            load_relevance(write(tmp_path, "r.tsv", "a\tb,a\n"))

    def test_duplicates_rejected(self, tmp_path):
        with pytest.raises(ParseError):
            load_relevance(write(tmp_path, "r.tsv", "a\tb,b\n"))

    def test_bad_split(self, tmp_path):
        with pytest.raises(ParseError):
            load_splits(write(tmp_path, "s.tsv", "a\ttraining\n"))

    def test_unknown_reference_rejected(self):
        feats = {"a": np.ones(2), "b": np.ones(2)}
        with pytest.raises(RelearnError, match="unknown video"):
            Dataset(feats, RelevanceTable({"a": ("zz",)}, {"a": "train"}))

    def test_load_dataset_from_frames(self, tmp_path):
        frames = write(tmp_path, "fr.tsv", "#dim 1\na\t1\t1\na\t2\t3\nb\t1\t5\n")
        rel = write(tmp_path, "r.tsv", "a\tb\n")
        spl = write(tmp_path, "s.tsv", "a\ttrain\nb\tval\n")
        ds = load_dataset(rel, spl, frames=frames)
        np.testing.assert_allclose(ds.features["a"], [2.0])
        assert ds.relevance.ids_in("train", "val") == ["a", "b"]


class TestModelFile:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        model = ProjectionModel(rng.standard_normal((2, 3)), rng.standard_normal(2))
        save_model(model, tmp_path / "m.txt")
        back = load_model(tmp_path / "m.txt")
        np.testing.assert_allclose(back.W, model.W, rtol=1e-15)
        np.testing.assert_allclose(back.b, model.b, rtol=1e-15)

    @given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
    def test_round_trip_random_sizes_lossless(self, p, d, seed):
        import tempfile
        from pathlib import Path

        rng = np.random.default_rng(seed)
        model = ProjectionModel(rng.standard_normal((p, d)) * 10.0 ** rng.integers(-5, 5), rng.standard_normal(p))
        with tempfile.TemporaryDirectory() as tmp:
            save_model(model, Path(tmp) / "m.txt")
            back = load_model(Path(tmp) / "m.txt")
        assert np.array_equal(back.W, model.W) and np.array_equal(back.b, model.b)

    def test_truncated(self, tmp_path):
        model = ProjectionModel(np.ones((3, 2)), np.zeros(3))
        save_model(model, tmp_path / "m.txt")
        lines = (tmp_path / "m.txt").read_text().splitlines()
        (tmp_path / "t.txt").write_text("\n".join(lines[:-2]) + "\n")
        with pytest.raises(ParseError):
            load_model(tmp_path / "t.txt")

    def test_bad_header(self, tmp_path):
        (tmp_path / "m.txt").write_text("#relearn-model v2\nd=1 p=1\n1\n0\n")
        with pytest.raises(ParseError):
            load_model(tmp_path / "m.txt")

    def test_wrong_columns(self, tmp_path):
        (tmp_path / "m.txt").write_text("#relearn-model v1\nd=2 p=1\n1\n0\n")
        with pytest.raises(ParseError):
            load_model(tmp_path / "m.txt")

    def test_dimension_mismatch_at_use_site(self):
        from relearn.model import project

        model = ProjectionModel(np.ones((2, 3)), np.zeros(2))
        with pytest.raises(RelearnError):
            project(model, np.ones(4))


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 4))
def test_corrupted_feature_lines_are_rejected_with_line_number(seed, rows, d):
    """Random single-line corruption of a well-formed file always yields a located error."""
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(seed)
    feats = {f"v{i}": rng.standard_normal(d) for i in range(rows)}
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "f.tsv"
        write_video_features(path, feats)
        assert set(load_video_features(path)) == set(feats)
        lines = path.read_text().splitlines()
        target = int(rng.integers(1, len(lines)))
        vid, values = lines[target].split("\t")
        corruption = int(rng.integers(4))
        if corruption == 0:
            lines[target] = f"{vid}\t{values} 1.0"
        elif corruption == 1:
            lines[target] = f"{vid}\t{values.rsplit(' ', 1)[0] if d > 1 else ''}"
        elif corruption == 2:
            lines[target] = f"{vid}\t{values.replace(values.split()[0], 'x1', 1)}"
        else:
            lines[target] = f"{vid} {values}"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as err:
            load_video_features(path)
        assert err.value.lineno == target + 1
