"""Plasticity diagnostics: sign entropy, singular values, accuracy, norms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import EngineError


def positive_fraction(h_batch: np.ndarray) -> np.ndarray:
    """Per-unit fraction of the batch with output strictly above zero.

    An output of exactly zero (a dead ReLU unit, say) counts as non-positive.
    """
    h_batch = np.asarray(h_batch)
    if h_batch.ndim != 2 or h_batch.shape[0] == 0:
        raise EngineError("need a non-empty (batch, units) array")
    return (h_batch > 0).mean(axis=0)


def binary_entropy(p: np.ndarray) -> np.ndarray:
    """Entropy of a Bernoulli(p) in bits, with 0 log 0 := 0."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    interior = (p > 0) & (p < 1)
    q = p[interior]
    out[interior] = -q * np.log2(q) - (1 - q) * np.log2(1 - q)
    return out


def unit_sign_entropy(h_batch: np.ndarray) -> np.ndarray:
    """Binary entropy of each unit's sign over the batch; 1 at half-positive,
    0 for saturated or always-positive (linearized) units."""
    return binary_entropy(positive_fraction(h_batch))


def min_singular_value(m: np.ndarray) -> float:
    m = np.asarray(m)
    if m.ndim != 2:
        raise EngineError(f"expected a 2-D array, got ndim={m.ndim}")
    return float(np.linalg.svd(m, compute_uv=False).min())


def spectral_norm(m: np.ndarray) -> float:
    m = np.asarray(m)
    if m.ndim != 2:
        raise EngineError(f"expected a 2-D array, got ndim={m.ndim}")
    return float(np.linalg.svd(m, compute_uv=False).max())


def accuracy(logits: np.ndarray, labels) -> float:
    """Fraction of rows whose argmax matches the label; ties go to the lowest index."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.shape[0] != labels.shape[0]:
        raise EngineError("logits and labels disagree on batch size")
    return float((logits.argmax(axis=1) == labels).mean())


def param_l2(net) -> float:
    total = 0.0
    for w in net.weights:
        total += float(np.sum(w * w))
    for b in net.biases:
        total += float(np.sum(b * b))
    return float(np.sqrt(total))


@dataclass
class MetricsRecord:
    """One telemetry row of an experiment run."""

    seed: int
    task: int
    epoch: int
    iteration: int
    train_loss: float | None = None
    train_acc: float | None = None
    test_acc: float | None = None
    mean_sign_entropy: list = field(default_factory=list)   # per hidden layer
    mean_pos_frac: list = field(default_factory=list)       # per hidden layer
    spectral_norms: list = field(default_factory=list)      # per weight layer
    min_sv: float | None = None                             # deep-linear runs only
    param_l2: float | None = None
    task_end: bool = False
    aborted: bool = False
