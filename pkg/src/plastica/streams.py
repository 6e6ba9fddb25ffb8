"""Dataset ingestion and non-stationarity generators.

A TaskStream turns a base dataset into a finite sequence of tasks. Every
per-task quantity (label tables, noise sets, class pools, permutations,
batch orders) is a pure function of (base, kind, seed, task), so any task
can be regenerated bitwise at any time.
"""

from __future__ import annotations

import gzip
from dataclasses import dataclass

import numpy as np

from .nn import EngineError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

RANDOM_LABELS = "random_labels"
LABEL_NOISE = "label_noise"
CLASS_INCREMENTAL = "class_incremental"
PIXEL_PERMUTATION = "pixel_permutation"


class IdxError(ValueError):
    """Base class for IDX ingestion failures."""


class IdxBadMagic(IdxError):
    pass


class IdxTruncated(IdxError):
    pass


class IdxCountMismatch(IdxError):
    pass


@dataclass
class Dataset:
    images: np.ndarray          # (N, d) float64 in [0, 1]
    labels: np.ndarray          # (N,) int64 class indices
    num_classes: int
    name: str = "dataset"
    probe_accuracy: float | None = None   # separability certificate, when present

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 2 or self.images.shape[0] == 0:
            raise EngineError("images must be a non-empty (N, d) array")
        if self.labels.shape != (self.images.shape[0],):
            raise EngineError("labels must be one class index per image")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise EngineError("label outside [0, num_classes)")

    @property
    def size(self) -> int:
        return self.images.shape[0]

    @property
    def dim(self) -> int:
        return self.images.shape[1]


# ---------------------------------------------------------------------------
# IDX ingestion
# ---------------------------------------------------------------------------

def _read_maybe_gzip(path) -> bytes:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _parse_idx_images(raw: bytes, path) -> np.ndarray:
    if len(raw) < 16:
        raise IdxTruncated(f"{path}: header shorter than 16 bytes")
    magic = int.from_bytes(raw[0:4], "big")
    if magic != IMAGES_MAGIC:
        raise IdxBadMagic(f"{path}: expected image magic 0x{IMAGES_MAGIC:08x}, got 0x{magic:08x}")
    n = int.from_bytes(raw[4:8], "big")
    rows = int.from_bytes(raw[8:12], "big")
    cols = int.from_bytes(raw[12:16], "big")
    expected = 16 + n * rows * cols
    if len(raw) != expected:
        raise IdxTruncated(f"{path}: payload is {len(raw) - 16} bytes, expected {n * rows * cols}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
    return pixels.reshape(n, rows * cols).astype(np.float64) / 255.0


def _parse_idx_labels(raw: bytes, path) -> np.ndarray:
    if len(raw) < 8:
        raise IdxTruncated(f"{path}: header shorter than 8 bytes")
    magic = int.from_bytes(raw[0:4], "big")
    if magic != LABELS_MAGIC:
        raise IdxBadMagic(f"{path}: expected label magic 0x{LABELS_MAGIC:08x}, got 0x{magic:08x}")
    n = int.from_bytes(raw[4:8], "big")
    if len(raw) != 8 + n:
        raise IdxTruncated(f"{path}: payload is {len(raw) - 8} bytes, expected {n}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8).astype(np.int64)


def load_idx(images_path, labels_path, name: str = "idx") -> Dataset:
    """Parse a big-endian IDX image/label file pair, optionally gzipped.

    Pixel bytes are scaled to [0, 1]; the class count is inferred from the
    largest label present.
    """
    images = _parse_idx_images(_read_maybe_gzip(images_path), images_path)
    labels = _parse_idx_labels(_read_maybe_gzip(labels_path), labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatch(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    return Dataset(images, labels, num_classes=int(labels.max()) + 1, name=name)


# ---------------------------------------------------------------------------
# Synthetic data (desk-scale stand-in when no IDX files are available)
# ---------------------------------------------------------------------------

def make_blob_dataset(n: int, dim: int, num_classes: int, seed: int,
                      noise: float = 0.12, name: str = "blobs") -> Dataset:
    """Gaussian class blobs with centers in [0.2, 0.8]^dim, clipped to [0, 1]."""
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = rng.uniform(0.2, 0.8, size=(num_classes, dim))
    labels = rng.integers(0, num_classes, size=n)
    images = centers[labels] + rng.normal(0.0, noise, size=(n, dim))
    return Dataset(np.clip(images, 0.0, 1.0), labels, num_classes, name=name)


def make_uniform_dataset(n: int, dim: int, num_classes: int, seed: int,
                         name: str = "uniform") -> Dataset:
    """Uniform inputs in [0, 1]^dim with uniform labels.

    Every example is far from every other, so arbitrary labelings are
    memorizable; the right substrate for random-label trainability streams,
    where clustered inputs would cap accuracy near chance.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    return Dataset(rng.uniform(0.0, 1.0, size=(n, dim)),
                   rng.integers(0, num_classes, size=n), num_classes, name=name)


# ---------------------------------------------------------------------------
# Linear probe and separable subsets
# ---------------------------------------------------------------------------

def _fit_linear_probe(images: np.ndarray, labels: np.ndarray, num_classes: int,
                      max_steps: int = 5000):
    """Full-batch GD on multinomial logistic regression; stops at 100% accuracy.

    Returns (weights, bias, train_accuracy)."""
    n, d = images.shape
    w = np.zeros((num_classes, d))
    b = np.zeros(num_classes)
    # 1/L step size from the softmax Hessian bound 0.5 * lambda_max(X^T X) / n.
    aug = np.hstack([images, np.ones((n, 1))])
    sq = aug.T @ aug
    lam = float(np.linalg.eigvalsh(sq)[-1]) / n
    lr = 1.0 / (0.5 * lam + 1e-12)
    rows = np.arange(n)
    acc = 0.0
    for _ in range(max_steps):
        logits = images @ w.T + b
        pred = logits.argmax(axis=1)
        acc = float((pred == labels).mean())
        if acc == 1.0:
            break
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        probs[rows, labels] -= 1.0
        probs /= n
        w -= lr * (probs.T @ images)
        b -= lr * probs.sum(axis=0)
    else:
        logits = images @ w.T + b
        acc = float((logits.argmax(axis=1) == labels).mean())
    return w, b, acc


def probe_accuracy(ds: Dataset, max_steps: int = 5000) -> float:
    """Train accuracy of a fresh multinomial-logistic probe on the dataset."""
    _, _, acc = _fit_linear_probe(ds.images, ds.labels, ds.num_classes, max_steps)
    return acc


def make_linearly_separable_subset(ds: Dataset, n: int, seed: int,
                                   max_probe_steps: int = 5000) -> Dataset:
    """Random n-subset pruned until a linear probe fits it perfectly.

    Fit a probe, drop every misclassified example, refit, repeat. The returned
    dataset carries probe_accuracy == 1.0 as its separability certificate.
    Raises if pruning eats half the subset or more.
    """
    if n > ds.size:
        raise EngineError(f"requested {n} examples from a dataset of {ds.size}")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.choice(ds.size, size=n, replace=False)
    images = ds.images[idx]
    labels = ds.labels[idx]
    while True:
        w, b, acc = _fit_linear_probe(images, labels, ds.num_classes, max_probe_steps)
        if acc == 1.0:
            break
        pred = (images @ w.T + b).argmax(axis=1)
        keep = pred == labels
        images = images[keep]
        labels = labels[keep]
        if 2 * images.shape[0] <= n:
            raise EngineError(
                f"subset collapsed to {images.shape[0]} survivors of {n}; try a smaller n"
            )
    return Dataset(images, labels, ds.num_classes,
                   name=f"{ds.name}-separable", probe_accuracy=acc)


# ---------------------------------------------------------------------------
# Task streams
# ---------------------------------------------------------------------------

def _task_rng(seed: int, task: int, salt: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, task, salt))))


@dataclass
class Batch:
    x: np.ndarray
    y: np.ndarray
    task_id: int


@dataclass
class TaskStream:
    """A finite task sequence over a base dataset.

    eval_is_train marks memorization streams whose evaluation inputs are the
    training inputs (with the base dataset's true labels, which stay clean).
    """

    base: Dataset
    kind: str
    num_tasks: int
    seed: int
    test: Dataset | None = None
    initial_noise: float = 0.5
    classes_per_task: int = 5
    eval_is_train: bool = False

    def __post_init__(self):
        if self.num_tasks < 1:
            raise EngineError("num_tasks must be >= 1")

    def _check_task(self, task: int):
        if not 0 <= task < self.num_tasks:
            raise EngineError(f"task {task} outside [0, {self.num_tasks})")

    # -- per-task derived state (pure in (base, kind, seed, task)) ---------

    def _random_labels(self, task: int) -> np.ndarray:
        rng = _task_rng(self.seed, task)
        return rng.integers(0, self.base.num_classes, size=self.base.size)

    def noise_fraction(self, task: int) -> float:
        if self.num_tasks < 2:
            raise EngineError("label-noise schedule needs num_tasks >= 2")
        return self.initial_noise * (self.num_tasks - 1 - task) / (self.num_tasks - 1)

    def _noisy_labels(self, task: int) -> np.ndarray:
        rng = _task_rng(self.seed, task)
        labels = self.base.labels.copy()
        k = int(round(self.noise_fraction(task) * self.base.size))
        if k > 0:
            corrupted = rng.choice(self.base.size, size=k, replace=False)
            labels[corrupted] = rng.integers(0, self.base.num_classes, size=k)
        return labels

    def class_order(self) -> np.ndarray:
        rng = _task_rng(self.seed, 0, salt=1)
        return rng.permutation(self.base.num_classes)

    def class_pool(self, task: int) -> np.ndarray:
        count = min((task + 1) * self.classes_per_task, self.base.num_classes)
        return self.class_order()[:count]

    def permutation(self, task: int) -> np.ndarray:
        if task == 0:
            return np.arange(self.base.dim)
        return _task_rng(self.seed, task).permutation(self.base.dim)

    # -- task views --------------------------------------------------------

    def train_data(self, task: int):
        self._check_task(task)
        if self.kind == RANDOM_LABELS:
            return self.base.images, self._random_labels(task)
        if self.kind == LABEL_NOISE:
            return self.base.images, self._noisy_labels(task)
        if self.kind == CLASS_INCREMENTAL:
            mask = np.isin(self.base.labels, self.class_pool(task))
            return self.base.images[mask], self.base.labels[mask]
        if self.kind == PIXEL_PERMUTATION:
            return self.base.images[:, self.permutation(task)], self.base.labels
        raise EngineError(f"unknown stream kind: {self.kind!r}")

    def eval_data(self, task: int):
        """Evaluation split for a task: always carries true (clean) labels."""
        self._check_task(task)
        source = self.test if self.test is not None else self.base
        if self.kind == PIXEL_PERMUTATION:
            return source.images[:, self.permutation(task)], source.labels
        return source.images, source.labels

    def task_train_size(self, task: int) -> int:
        return self.train_data(task)[0].shape[0]


def random_label_stream(ds: Dataset, num_tasks: int, seed: int) -> TaskStream:
    """Every task assigns fresh i.i.d. uniform labels to every example."""
    return TaskStream(ds, RANDOM_LABELS, num_tasks, seed, eval_is_train=True)


def label_noise_stream(ds: Dataset, seed: int, num_tasks: int = 10,
                       initial_noise: float = 0.5,
                       test: Dataset | None = None) -> TaskStream:
    """Linearly diminishing label corruption: initial_noise down to clean."""
    if not 0.0 <= initial_noise <= 1.0:
        raise EngineError("initial_noise must be in [0, 1]")
    if num_tasks < 2:
        raise EngineError("label-noise stream needs num_tasks >= 2")
    return TaskStream(ds, LABEL_NOISE, num_tasks, seed, test=test,
                      initial_noise=initial_noise)


def class_incremental_stream(ds: Dataset, seed: int, classes_per_task: int = 5,
                             num_tasks: int | None = None,
                             test: Dataset | None = None) -> TaskStream:
    """Growing class pool in a seed-derived order; extra tasks repeat the full set."""
    if classes_per_task > ds.num_classes:
        raise EngineError("classes_per_task exceeds the number of classes")
    if num_tasks is None:
        num_tasks = -(-ds.num_classes // classes_per_task)
    return TaskStream(ds, CLASS_INCREMENTAL, num_tasks, seed, test=test,
                      classes_per_task=classes_per_task)


def pixel_permutation_stream(ds: Dataset, num_tasks: int, seed: int,
                             test: Dataset | None = None) -> TaskStream:
    """Task 0 is the identity; later tasks permute input coordinates."""
    return TaskStream(ds, PIXEL_PERMUTATION, num_tasks, seed, test=test)


def batches(stream: TaskStream, task: int, epoch: int, batch_size: int):
    """Shuffled minibatches covering the task's training set exactly once."""
    if batch_size <= 0:
        raise EngineError("batch_size must be positive")
    stream._check_task(task)
    x, y = stream.train_data(task)
    order = _task_rng(stream.seed, task, salt=1000 + epoch).permutation(x.shape[0])
    for start in range(0, x.shape[0], batch_size):
        sel = order[start:start + batch_size]
        yield Batch(x[sel], y[sel], task_id=task)
