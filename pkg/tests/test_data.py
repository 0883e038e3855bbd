import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from recoproc import synthetic
from recoproc.data import (ClassSplit, Dataset, PairSet, load_dataset, make_pairs, restrict_to_classes,
                           split_classes)
from recoproc.degradations import DegradationSpec, GAUSSIAN_NOISE
from recoproc.errors import DecodeError, InvalidDataset, InvalidSplit, NotFound, ShapeError


def _write(path, value, size=8):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.full((size, size, 3), value, np.uint8)).save(path)


@pytest.fixture
def small_root(tmp_path):
    for i in range(2):
        _write(tmp_path / "train" / "a" / f"{i}.png", 10 * i)
    for i in range(3):
        _write(tmp_path / "train" / "b" / f"{i}.png", 100 + i)
    return tmp_path


def _dataset(n, size, num_classes=3, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.random((n, size, size, 3)).astype(np.float32),
                   rng.integers(0, num_classes, n).astype(np.int64),
                   [f"c{i}" for i in range(num_classes)], "train")


class TestLoader:
    def test_counts_and_labels(self, small_root):
        ds = load_dataset(small_root, "train")
        assert len(ds) == 5
        assert ds.labels.tolist() == [0, 0, 1, 1, 1]
        assert ds.class_names == ["a", "b"]
        assert ds.images.dtype == np.float32 and ds.images.shape == (5, 8, 8, 3)

    def test_stable_order(self, small_root):
        a = load_dataset(small_root, "train")
        b = load_dataset(small_root, "train")
        assert a.samples == b.samples
        assert np.array_equal(a.images, b.images)

    def test_missing_root(self, tmp_path):
        with pytest.raises(NotFound):
            load_dataset(tmp_path / "nope", "train")

    def test_empty(self, tmp_path):
        (tmp_path / "train").mkdir()
        with pytest.raises(InvalidDataset):
            load_dataset(tmp_path, "train")

    def test_empty_class(self, small_root):
        (small_root / "train" / "c").mkdir()
        with pytest.raises(InvalidDataset):
            load_dataset(small_root, "train")

    def test_undecodable_names_file(self, small_root):
        bad = small_root / "train" / "b" / "broken.png"
        bad.write_bytes(b"not a png")
        with pytest.raises(DecodeError, match="broken.png"):
            load_dataset(small_root, "train")

    def test_bad_split(self, small_root):
        with pytest.raises(InvalidDataset):
            load_dataset(small_root, "test")


class TestPairs:
    def test_sigma_zero_identity(self):
        ds = _dataset(4, 16)
        pairs = make_pairs(ds, DegradationSpec(GAUSSIAN_NOISE, sigma=0.0), seed=0)
        assert np.array_equal(pairs.inputs, pairs.targets)

    def test_sr_shapes(self):
        pairs = make_pairs(_dataset(3, 64), DegradationSpec.make("sr"), seed=0)
        assert pairs.inputs.shape == (3, 16, 16, 3)
        assert pairs.targets.shape == (3, 64, 64, 3)

    def test_sr_not_divisible(self):
        with pytest.raises(ShapeError):
            make_pairs(_dataset(2, 30), DegradationSpec.make("sr"), seed=0)

    @pytest.mark.parametrize("kind", ["sr", "noise", "jpeg"])
    def test_deterministic(self, kind):
        ds = _dataset(5, 32)
        spec = DegradationSpec.make(kind)
        assert make_pairs(ds, spec, 3).digest() == make_pairs(ds, spec, 3).digest()

    def test_seed_changes_noise(self):
        ds = _dataset(3, 16)
        spec = DegradationSpec.make("noise")
        assert make_pairs(ds, spec, 0).digest() != make_pairs(ds, spec, 1).digest()

    def test_per_sample_stream_independent_of_subset(self):
        # Sample k's noise does not depend on which other samples are present.
        ds = _dataset(6, 16)
        spec = DegradationSpec.make("noise")
        full = make_pairs(ds, spec, 9)
        head = make_pairs(ds.subset(range(3)), spec, 9)
        assert np.array_equal(full.inputs[:3], head.inputs)

    def test_sequence_protocol(self):
        pairs = make_pairs(_dataset(4, 16), DegradationSpec.make("noise"), seed=0)
        assert len(pairs) == 4
        sample = pairs[2]
        assert np.array_equal(sample.input, pairs.inputs[2]) and sample.label == pairs.labels[2]
        assert isinstance(pairs[1:3], PairSet) and len(pairs[1:3]) == 2


class TestSplit:
    def test_hundred_classes(self):
        s = split_classes(100, seed=0)
        assert len(s.split_a) == len(s.split_b) == 50
        assert not s.split_a & s.split_b
        assert s.split_a | s.split_b == set(range(100))

    def test_two_classes(self):
        s = split_classes(2, seed=5)
        assert len(s.split_a) == len(s.split_b) == 1

    def test_same_seed(self):
        assert split_classes(10, 4) == split_classes(10, 4)

    def test_too_few(self):
        with pytest.raises(InvalidSplit):
            split_classes(1, 0)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 200), st.integers(0, 2**31))
    def test_partition(self, n, seed):
        s = split_classes(n, seed)
        assert not s.split_a & s.split_b
        assert s.split_a | s.split_b == set(range(n))
        assert abs(len(s.split_a) - len(s.split_b)) <= 1
        assert sorted(s.relabel_a.values()) == list(range(len(s.split_a)))

    def test_restrict_relabels(self):
        ds = _dataset(30, 8, num_classes=4)
        s = split_classes(ds, 0)
        sub = restrict_to_classes(ds, s.relabel_b)
        assert set(sub.labels.tolist()) <= set(range(len(s.split_b)))
        assert len(sub) == int(np.isin(ds.labels, list(s.split_b)).sum())
        assert sub.class_names == [ds.class_names[c] for c in sorted(s.split_b)]


class TestSynthetic:
    def test_generate_layout(self, tiny_root, tiny_train, tiny_val):
        assert (tiny_root / "classes.json").is_file()
        assert tiny_train.num_classes == 4 and len(tiny_train) == 48 and len(tiny_val) == 24
        assert tiny_train.images.shape[1:] == (32, 32, 3)

    def test_render_deterministic(self):
        a = synthetic.render("ring", np.random.default_rng(1))
        b = synthetic.render("ring", np.random.default_rng(1))
        assert np.array_equal(a, b) and a.min() >= 0 and a.max() <= 1

    @pytest.mark.parametrize("name", synthetic.CLASS_NAMES)
    def test_every_class_draws_something(self, name):
        img = synthetic.render(name, np.random.default_rng(0))
        assert img.std() > 0.05
