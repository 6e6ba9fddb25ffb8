"""Stream tests: IDX ingestion, separable subsets, non-stationarity generators."""

import gzip
import struct

import numpy as np
import pytest

from plastica.nn import EngineError
from plastica.streams import (
    Dataset, IdxBadMagic, IdxCountMismatch, IdxTruncated,
    batches, class_incremental_stream, label_noise_stream, load_idx,
    make_blob_dataset, make_linearly_separable_subset, make_uniform_dataset,
    pixel_permutation_stream, probe_accuracy, random_label_stream,
)


def write_idx_pair(tmp_path, images, labels, gz=False, prefix=""):
    n, rows, cols = images.shape
    img_bytes = struct.pack(">IIII", 0x803, n, rows, cols) + images.astype(np.uint8).tobytes()
    lab_bytes = struct.pack(">II", 0x801, len(labels)) + bytes(int(v) for v in labels)
    ip, lp = tmp_path / f"{prefix}imgs.idx", tmp_path / f"{prefix}labs.idx"
    if gz:
        img_bytes, lab_bytes = gzip.compress(img_bytes), gzip.compress(lab_bytes)
    ip.write_bytes(img_bytes)
    lp.write_bytes(lab_bytes)
    return ip, lp


@pytest.fixture
def tiny_idx(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(12, 3, 4), dtype=np.uint8)
    images[0, 0, 0] = 255
    labels = rng.integers(0, 5, size=12)
    labels[0] = 4
    return write_idx_pair(tmp_path, images, labels), images, labels


# ---------------------------------------------------------------------------
# IDX ingestion
# ---------------------------------------------------------------------------

def test_load_idx_roundtrip(tiny_idx):
    (ip, lp), images, labels = tiny_idx
    ds = load_idx(ip, lp)
    assert ds.size == 12 and ds.dim == 12
    assert ds.num_classes == 5
    assert np.array_equal(ds.labels, labels)
    assert np.allclose(ds.images, images.reshape(12, -1) / 255.0)
    assert ds.images[0, 0] == 1.0            # byte 255 scales to exactly 1.0


def test_load_idx_gzip(tmp_path):
    rng = np.random.default_rng(1)
    images = rng.integers(0, 256, size=(5, 2, 2), dtype=np.uint8)
    labels = rng.integers(0, 3, size=5)
    ip, lp = write_idx_pair(tmp_path, images, labels, gz=True)
    ds = load_idx(ip, lp)
    assert ds.size == 5 and ds.dim == 4


def test_load_idx_bad_magic(tmp_path, tiny_idx):
    (ip, lp), _, _ = tiny_idx
    with pytest.raises(IdxBadMagic):
        load_idx(lp, lp)                      # labels magic where images expected
    with pytest.raises(IdxBadMagic):
        load_idx(ip, ip)                      # images magic where labels expected


def test_load_idx_truncated(tmp_path):
    rng = np.random.default_rng(2)
    images = rng.integers(0, 256, size=(4, 2, 2), dtype=np.uint8)
    labels = rng.integers(0, 2, size=4)
    ip, lp = write_idx_pair(tmp_path, images, labels)
    ip.write_bytes(ip.read_bytes()[:-3])
    with pytest.raises(IdxTruncated):
        load_idx(ip, lp)


def test_load_idx_count_mismatch(tmp_path):
    rng = np.random.default_rng(3)
    images = rng.integers(0, 256, size=(4, 2, 2), dtype=np.uint8)
    ip, _ = write_idx_pair(tmp_path, images, rng.integers(0, 2, size=4), prefix="a_")
    _, lp = write_idx_pair(tmp_path, images[:3], rng.integers(0, 2, size=3), prefix="b_")
    with pytest.raises(IdxCountMismatch):
        load_idx(ip, lp)


# ---------------------------------------------------------------------------
# linearly separable subsets
# ---------------------------------------------------------------------------

def test_separable_subset_certificate_and_refit_oracle():
    ds = make_blob_dataset(400, 16, 5, seed=0, noise=0.25)
    sub = make_linearly_separable_subset(ds, 80, seed=1)
    assert sub.probe_accuracy == 1.0
    # independent refit from scratch must also reach 100%
    assert probe_accuracy(sub) == 1.0
    assert sub.size <= 80


def test_separable_subset_single_point():
    ds = make_blob_dataset(10, 4, 3, seed=0)
    sub = make_linearly_separable_subset(ds, 1, seed=0)
    assert sub.size == 1
    assert sub.probe_accuracy == 1.0


def test_separable_subset_contradiction_collapses():
    images = np.tile(np.array([[0.3, 0.7]]), (2, 1))   # identical points
    ds = Dataset(images, np.array([0, 1]), num_classes=2)
    with pytest.raises(EngineError, match="smaller n"):
        make_linearly_separable_subset(ds, 2, seed=0)


def test_separable_subset_n_too_large():
    ds = make_blob_dataset(10, 4, 2, seed=0)
    with pytest.raises(EngineError):
        make_linearly_separable_subset(ds, 11, seed=0)


# ---------------------------------------------------------------------------
# random label stream
# ---------------------------------------------------------------------------

def test_random_labels_deterministic():
    ds = make_blob_dataset(100, 8, 10, seed=0)
    a = random_label_stream(ds, 3, seed=5)
    b = random_label_stream(ds, 3, seed=5)
    for t in range(3):
        assert np.array_equal(a.train_data(t)[1], b.train_data(t)[1])
    assert not np.array_equal(a.train_data(0)[1], a.train_data(1)[1])


def test_random_labels_histogram_concentration():
    ds = make_blob_dataset(12800, 4, 10, seed=1)
    stream = random_label_stream(ds, 2, seed=2)
    _, y = stream.train_data(0)
    freq = np.bincount(y, minlength=10) / y.size
    assert np.all(np.abs(freq - 0.1) <= 0.01)


def test_random_labels_cross_task_independence():
    ds = make_blob_dataset(12800, 4, 10, seed=1)
    stream = random_label_stream(ds, 2, seed=3)
    y0, y1 = stream.train_data(0)[1], stream.train_data(1)[1]
    agreement = float((y0 == y1).mean())
    assert abs(agreement - 0.1) <= 0.02


def test_random_labels_eval_split_keeps_true_labels():
    ds = make_blob_dataset(50, 4, 5, seed=0)
    stream = random_label_stream(ds, 2, seed=0)
    x, y = stream.eval_data(1)
    assert np.array_equal(y, ds.labels)
    assert stream.eval_is_train


def test_random_labels_inputs_unchanged():
    ds = make_blob_dataset(30, 4, 5, seed=0)
    stream = random_label_stream(ds, 2, seed=0)
    assert np.array_equal(stream.train_data(1)[0], ds.images)


# ---------------------------------------------------------------------------
# label noise stream
# ---------------------------------------------------------------------------

def test_label_noise_schedule_endpoints_and_interior():
    ds = make_blob_dataset(60, 4, 5, seed=0)
    stream = label_noise_stream(ds, seed=0, num_tasks=10, initial_noise=0.5)
    assert stream.noise_fraction(0) == pytest.approx(0.5)
    assert stream.noise_fraction(9) == 0.0
    assert stream.noise_fraction(3) == pytest.approx(0.5 * 6 / 9)
    fracs = [stream.noise_fraction(t) for t in range(10)]
    assert all(a >= b for a, b in zip(fracs, fracs[1:]))


def test_label_noise_zero_noise_is_clean():
    ds = make_blob_dataset(60, 4, 5, seed=0)
    stream = label_noise_stream(ds, seed=0, num_tasks=4, initial_noise=0.0)
    for t in range(4):
        assert np.array_equal(stream.train_data(t)[1], ds.labels)


def test_label_noise_corruption_fraction_matches():
    ds = make_blob_dataset(1000, 4, 10, seed=0)
    stream = label_noise_stream(ds, seed=7, num_tasks=10, initial_noise=0.5)
    _, y = stream.train_data(0)
    # corrupted entries got uniform labels; about 1/10 of them match by luck
    changed = float((y != ds.labels).mean())
    assert 0.40 <= changed <= 0.50
    _, y_last = stream.train_data(9)
    assert np.array_equal(y_last, ds.labels)


def test_label_noise_eval_always_clean():
    ds = make_blob_dataset(60, 4, 5, seed=0)
    test = make_blob_dataset(30, 4, 5, seed=1)
    stream = label_noise_stream(ds, seed=0, num_tasks=5, test=test)
    for t in range(5):
        x, y = stream.eval_data(t)
        assert np.array_equal(y, test.labels)


def test_label_noise_requires_two_tasks():
    ds = make_blob_dataset(20, 4, 5, seed=0)
    with pytest.raises(EngineError):
        label_noise_stream(ds, seed=0, num_tasks=1)


# ---------------------------------------------------------------------------
# class incremental stream
# ---------------------------------------------------------------------------

def test_class_incremental_pool_growth():
    ds = make_blob_dataset(400, 6, 10, seed=0)
    stream = class_incremental_stream(ds, seed=0, classes_per_task=5)
    assert stream.num_tasks == 2
    assert len(stream.class_pool(0)) == 5
    assert len(stream.class_pool(1)) == 10
    y0 = set(np.unique(stream.train_data(0)[1]))
    y1 = set(np.unique(stream.train_data(1)[1]))
    assert y0 < y1


def test_class_incremental_monotone_sizes():
    ds = make_blob_dataset(500, 6, 12, seed=1)
    stream = class_incremental_stream(ds, seed=3, classes_per_task=3, num_tasks=6)
    sizes = [stream.task_train_size(t) for t in range(6)]
    assert all(a <= b for a, b in zip(sizes, sizes[1:]))
    pools = [set(stream.class_pool(t)) for t in range(6)]
    assert all(a <= b for a, b in zip(pools, pools[1:]))


def test_class_incremental_full_coverage_repeats():
    ds = make_blob_dataset(2000, 4, 100, seed=2)
    stream = class_incremental_stream(ds, seed=0, classes_per_task=5, num_tasks=25)
    x19, y19 = stream.train_data(19)
    assert x19.shape[0] == ds.size           # 20 * 5 = 100 classes at task 19
    x24, _ = stream.train_data(24)
    assert x24.shape[0] == ds.size


def test_class_incremental_eval_is_full_test_set():
    ds = make_blob_dataset(200, 4, 10, seed=0)
    test = make_blob_dataset(100, 4, 10, seed=9)
    stream = class_incremental_stream(ds, seed=0, classes_per_task=5, test=test)
    x, y = stream.eval_data(0)
    assert x.shape[0] == 100
    assert np.array_equal(y, test.labels)


# ---------------------------------------------------------------------------
# pixel permutation stream
# ---------------------------------------------------------------------------

def test_pixel_permutation_task0_identity():
    ds = make_blob_dataset(40, 8, 5, seed=0)
    stream = pixel_permutation_stream(ds, 3, seed=0)
    assert np.array_equal(stream.train_data(0)[0], ds.images)


def test_pixel_permutation_preserves_value_multiset():
    ds = make_blob_dataset(40, 8, 5, seed=0)
    stream = pixel_permutation_stream(ds, 3, seed=0)
    x = stream.train_data(2)[0]
    assert np.allclose(np.sort(x, axis=1), np.sort(ds.images, axis=1))
    assert not np.array_equal(x, ds.images)


def test_pixel_permutation_seeds_differ():
    ds = make_blob_dataset(10, 32, 5, seed=0)
    a = pixel_permutation_stream(ds, 2, seed=1).permutation(1)
    b = pixel_permutation_stream(ds, 2, seed=2).permutation(1)
    assert not np.array_equal(a, b)


def test_pixel_permutation_applies_to_eval_too():
    ds = make_blob_dataset(20, 8, 5, seed=0)
    test = make_blob_dataset(10, 8, 5, seed=1)
    stream = pixel_permutation_stream(ds, 3, seed=4, test=test)
    perm = stream.permutation(2)
    x, _ = stream.eval_data(2)
    assert np.array_equal(x, test.images[:, perm])


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

def test_batches_partition_and_sizes():
    ds = make_blob_dataset(1000, 4, 5, seed=0)
    stream = random_label_stream(ds, 1, seed=0)
    got = list(batches(stream, 0, 0, 256))
    assert [b.x.shape[0] for b in got] == [256, 256, 256, 232]
    seen = np.concatenate([b.x for b in got])
    assert np.allclose(np.sort(seen, axis=0), np.sort(ds.images, axis=0))


def test_batches_epoch_covers_every_example_once():
    ds = make_blob_dataset(101, 3, 4, seed=0)
    ds.images[:, 0] = np.arange(101)          # unique tag per example
    stream = random_label_stream(ds, 1, seed=0)
    tags = np.concatenate([b.x[:, 0] for b in batches(stream, 0, 0, 16)])
    assert sorted(tags.tolist()) == list(range(101))


def test_batches_deterministic_per_epoch():
    ds = make_blob_dataset(64, 3, 4, seed=0)
    stream = random_label_stream(ds, 2, seed=0)
    a = [b.x for b in batches(stream, 1, 3, 16)]
    b_ = [b.x for b in batches(stream, 1, 3, 16)]
    for xa, xb in zip(a, b_):
        assert np.array_equal(xa, xb)
    c = [b.x for b in batches(stream, 1, 4, 16)]
    assert not all(np.array_equal(xa, xc) for xa, xc in zip(a, c))


def test_batches_rejects_bad_batch_size():
    ds = make_blob_dataset(10, 3, 2, seed=0)
    stream = random_label_stream(ds, 1, seed=0)
    with pytest.raises(EngineError):
        list(batches(stream, 0, 0, 0))


def test_stream_purity_bitwise_regeneration():
    ds = make_blob_dataset(80, 6, 5, seed=0)
    for make in (lambda: random_label_stream(ds, 3, seed=11),
                 lambda: label_noise_stream(ds, seed=11, num_tasks=3),
                 lambda: pixel_permutation_stream(ds, 3, seed=11)):
        s1, s2 = make(), make()
        for t in range(3):
            x1, y1 = s1.train_data(t)
            x2, y2 = s2.train_data(t)
            assert np.array_equal(x1, x2) and np.array_equal(y1, y2)


def test_task_index_bounds_checked():
    ds = make_blob_dataset(10, 3, 2, seed=0)
    stream = random_label_stream(ds, 2, seed=0)
    with pytest.raises(EngineError):
        stream.train_data(2)


def test_uniform_dataset_shape_and_determinism():
    a = make_uniform_dataset(50, 7, 4, seed=3)
    b = make_uniform_dataset(50, 7, 4, seed=3)
    assert a.size == 50 and a.dim == 7 and a.num_classes == 4
    assert np.all((a.images >= 0) & (a.images <= 1))
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    c = make_uniform_dataset(50, 7, 4, seed=4)
    assert not np.array_equal(a.images, c.images)
