import math

import numpy as np
import pytest
from scipy import stats

from paractive.data import (
    DataFormatError,
    Dataset,
    EmptyTaskError,
    load_idx,
    load_sparse,
    make_binary_task,
    partition_stream,
    scale_pixels,
    shuffle,
    synth_checkerboard,
    synth_gaussian,
    synth_threshold,
    write_idx,
)


def _idx_pair(tmp_path, n=10, rows=28, cols=28, labels=None):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (n, rows, cols), dtype=np.uint8)
    labels = np.arange(n) % 10 if labels is None else np.asarray(labels)
    ip, lp = tmp_path / "img", tmp_path / "lab"
    write_idx(ip, lp, images, labels)
    return ip, lp, images, labels


def test_load_idx_counts_and_layout(tmp_path):
    ip, lp, images, labels = _idx_pair(tmp_path)
    ds = load_idx(ip, lp)
    assert len(ds) == 10 and ds.dim == 784
    assert np.array_equal(ds.X[3], images[3].reshape(-1))
    assert np.array_equal(ds.digits, labels)
    assert ds.scale_range == (0.0, 255.0)


def test_load_idx_wrong_label_magic(tmp_path):
    ip, lp, _, _ = _idx_pair(tmp_path)
    raw = bytearray(lp.read_bytes())
    raw[:4] = (0x803).to_bytes(4, "big")
    lp.write_bytes(bytes(raw))
    with pytest.raises(DataFormatError, match="magic"):
        load_idx(ip, lp)


def test_load_idx_count_mismatch(tmp_path):
    ip, _, images, _ = _idx_pair(tmp_path)
    lp2 = tmp_path / "lab2"
    write_idx(tmp_path / "junk", lp2, images[:9], np.zeros(9))
    with pytest.raises(DataFormatError, match="count"):
        load_idx(ip, lp2)


def test_load_idx_truncated(tmp_path):
    ip, lp, _, _ = _idx_pair(tmp_path)
    ip.write_bytes(ip.read_bytes()[:-5])
    with pytest.raises(OSError, match="truncated"):
        load_idx(ip, lp)


def test_binary_tasks_from_one_corpus(tmp_path):
    ip, lp, _, _ = _idx_pair(tmp_path, n=40)
    raw = load_idx(ip, lp)
    svm_task = make_binary_task(raw, {3, 1}, {5, 7})
    nn_task = make_binary_task(raw, {3}, {5})
    assert set(np.unique(svm_task.digits)) == {1, 3, 5, 7}
    assert np.all(svm_task.y[np.isin(svm_task.digits, [1, 3])] == 1)
    assert np.all(svm_task.y[np.isin(svm_task.digits, [5, 7])] == -1)
    assert len(nn_task) == 8
    # stream order preserved
    keep = np.flatnonzero(np.isin(raw.digits, [1, 3, 5, 7]))
    assert np.array_equal(svm_task.X, raw.X[keep])


def test_binary_task_errors(tmp_path):
    ip, lp, _, _ = _idx_pair(tmp_path, labels=[0] * 10)
    raw = load_idx(ip, lp)
    with pytest.raises(ValueError, match="overlap"):
        make_binary_task(raw, {3}, {3})
    with pytest.raises(EmptyTaskError):
        make_binary_task(raw, {3}, {5})


def test_scale_pixels_endpoints_and_midpoint():
    raw = Dataset(np.array([[0.0, 128.0, 255.0]]), np.array([1]), (0.0, 255.0))
    unit = scale_pixels(raw, (0.0, 1.0))
    sym = scale_pixels(raw, (-1.0, 1.0))
    assert unit.X[0, 0] == 0.0
    assert sym.X[0, 2] == 1.0
    assert sym.X[0, 1] == pytest.approx(2 * 128 / 255 - 1, abs=1e-15)
    assert sym.X[0, 1] == pytest.approx(0.00392, abs=1e-5)
    assert sym.scale_range == (-1.0, 1.0)


def test_scale_pixels_idempotent_and_range_check():
    raw = Dataset(np.array([[0.0, 17.0, 255.0]]), np.array([1]), (0.0, 255.0))
    once = scale_pixels(raw, (-1.0, 1.0))
    twice = scale_pixels(once, (-1.0, 1.0))
    assert np.max(np.abs(once.X - twice.X)) <= 1e-12
    bad = Dataset(np.array([[300.0]]), np.array([1]), (0.0, 255.0))
    with pytest.raises(ValueError):
        scale_pixels(bad, (0.0, 1.0))


def test_load_sparse(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("1 1:0.5 3:-1\n0 2:2.0  # comment\n\n-1 3:1\n")
    ds = load_sparse(p)
    assert ds.dim == 3
    assert np.array_equal(ds.y, [1, -1, -1])
    assert np.array_equal(ds.X, [[0.5, 0, -1], [0, 2.0, 0], [0, 0, 1]])
    p.write_text("1 0:1\n")
    with pytest.raises(DataFormatError, match=":1"):
        load_sparse(p)


def test_dataset_is_immutable():
    ds = synth_gaussian(0, 10, 2, 1.0)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 1.0


def test_gaussian_determinism_and_symmetry():
    a = synth_gaussian(5, 100, 2, 0.0)
    b = synth_gaussian(5, 100, 2, 0.0)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()
    # no separation: class means coincide (both classes centred at the origin)
    big = synth_gaussian(1, 20000, 2, 0.0)
    m_pos = big.X[big.y == 1].mean(axis=0)
    m_neg = big.X[big.y == -1].mean(axis=0)
    assert np.all(np.abs(m_pos - m_neg) < 0.06)


def test_gaussian_bayes_error():
    ds = synth_gaussian(3, 10000, 2, 4.0)
    err = np.mean(np.where(ds.X[:, 0] >= 0, 1, -1) != ds.y)
    # Phi(-2) with a binomial 99% band for n = 10000
    expected = stats.norm.cdf(-2.0)
    band = 2.576 * math.sqrt(expected * (1 - expected) / 10000)
    assert abs(err - expected) <= band
    assert expected == pytest.approx(0.0228, abs=1e-4)


def test_threshold_task():
    clean = synth_threshold(0, 1000, 0.0)
    assert clean.meta["threshold"] == 0.5
    assert np.all(np.where(clean.X[:, 0] >= 0.5, 1, -1) == clean.y)
    noisy = synth_threshold(0, 1000, 0.1)
    lo, hi = stats.binom.interval(0.99, 1000, 0.1)
    assert lo <= noisy.meta["flips"] <= hi
    with pytest.raises(ValueError):
        synth_threshold(0, 10, 0.5)


def test_checkerboard_labels_follow_cells():
    ds = synth_checkerboard(0, 2000, grid=4, spread=0.05)
    cells = np.rint(ds.X).astype(int)
    assert np.mean(np.where(cells.sum(axis=1) % 2 == 0, 1, -1) == ds.y) > 0.99


def test_shuffle_is_explicit_and_seeded():
    ds = synth_gaussian(0, 50, 2, 1.0)
    a, b = shuffle(ds, 9), shuffle(ds, 9)
    assert np.array_equal(a.X, b.X)
    assert sorted(map(tuple, a.X)) == sorted(map(tuple, ds.X))
    assert a.meta["shuffled_with"] == 9


def test_partition_small_case():
    streams = partition_stream(8, 2, 4)
    assert [s.tolist() for s in streams[0].slices] == [[0, 1], [4, 5]]
    assert [s.tolist() for s in streams[1].slices] == [[2, 3], [6, 7]]


def test_partition_sequential_and_default_batch():
    one = partition_stream(5, 1, 1)
    assert [s.tolist() for s in one[0].slices] == [[0], [1], [2], [3], [4]]
    streams = partition_stream(4000, 64, 3968)
    assert len(streams[5].slices[0]) == 62


@pytest.mark.parametrize("n,k,B", [(100, 4, 8), (101, 3, 9), (7, 7, 7), (1000, 16, 48), (5, 2, 10)])
def test_partition_completeness(n, k, B):
    streams = partition_stream(n, k, B)
    allidx = np.concatenate([sl for s in streams for sl in s.slices])
    assert np.array_equal(np.sort(allidx), np.arange(n))


def test_partition_rejects_indivisible_batch():
    with pytest.raises(ValueError, match="nearest valid B is 3968"):
        partition_stream(100, 64, 3970)
