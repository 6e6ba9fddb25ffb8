"""Optimizers and plasticity interventions.

Two families of intervention: penalty gradients added to the loss gradient
every step (L2 towards zero / towards the init, spectral), and reset rules
applied at task boundaries (shrink-and-perturb, dormant-unit recycling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    EngineError,
    Gradients,
    Network,
    glorot_bound,
    is_width_doubling,
)


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

SGD = "sgd"
ADAM = "adam"


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = SGD
    step_size: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in (SGD, ADAM):
            raise EngineError(f"unknown optimizer kind: {self.kind!r}")
        if self.step_size <= 0:
            raise EngineError("step_size must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise EngineError("betas must be in [0, 1)")


class OptimizerState:
    """Adam moment buffers plus a step counter; inert for SGD."""

    def __init__(self, net: Network):
        self.step = 0
        self.m_w = [np.zeros_like(w) for w in net.weights]
        self.v_w = [np.zeros_like(w) for w in net.weights]
        self.m_b = [np.zeros_like(b) for b in net.biases]
        self.v_b = [np.zeros_like(b) for b in net.biases]


def optimizer_step(net: Network, state: OptimizerState, grads: Gradients,
                   cfg: OptimizerConfig) -> None:
    """In-place parameter update. Errors name the offending parameter."""
    for l in range(net.num_layers):
        for name, g in (("weights", grads.weights[l]), ("biases", grads.biases[l])):
            if not np.all(np.isfinite(g)):
                raise EngineError(f"non-finite gradient for layer {l} {name}")
    lr = cfg.step_size
    if cfg.kind == SGD:
        for l in range(net.num_layers):
            net.weights[l] -= lr * grads.weights[l]
            net.biases[l] -= lr * grads.biases[l]
        state.step += 1
        return
    state.step += 1
    t = state.step
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for l in range(net.num_layers):
        for g, m, v, p in (
            (grads.weights[l], state.m_w[l], state.v_w[l], net.weights[l]),
            (grads.biases[l], state.m_b[l], state.v_b[l], net.biases[l]),
        ):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# Intervention configs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoIntervention:
    pass


@dataclass(frozen=True)
class L2Zero:
    strength: float

    def __post_init__(self):
        if self.strength < 0:
            raise EngineError("strength must be >= 0")


@dataclass(frozen=True)
class L2Init:
    strength: float

    def __post_init__(self):
        if self.strength < 0:
            raise EngineError("strength must be >= 0")


@dataclass(frozen=True)
class Spectral:
    strength: float
    power_iters: int = 10

    def __post_init__(self):
        if self.strength < 0:
            raise EngineError("strength must be >= 0")
        if self.power_iters < 1:
            raise EngineError("power_iters must be >= 1")


@dataclass(frozen=True)
class ShrinkPerturb:
    shrink: float = 0.8
    noise_std: float = 0.01
    every_n_tasks: int = 1

    def __post_init__(self):
        if not 0 < self.shrink <= 1:
            raise EngineError("shrink must be in (0, 1]")
        if self.noise_std < 0:
            raise EngineError("noise_std must be >= 0")


@dataclass(frozen=True)
class ReDO:
    threshold: float = 0.03
    every_n_tasks: int = 1

    def __post_init__(self):
        if self.threshold < 0:
            raise EngineError("threshold must be >= 0")


REGULARIZER_KINDS = (NoIntervention, L2Zero, L2Init, Spectral)
RESET_KINDS = (ShrinkPerturb, ReDO)


# ---------------------------------------------------------------------------
# Regularizer gradients
# ---------------------------------------------------------------------------

def power_iteration_top_singular(w: np.ndarray, iters: int, v0=None):
    """Leading singular triple of w estimated by power iteration on w^T w.

    Deterministic start (normalized ones) unless a warm-start vector is given.
    Returns (sigma, u, v).
    """
    n = w.shape[1]
    if v0 is None:
        v = np.full(n, 1.0 / np.sqrt(n))
    else:
        v = v0
    for _ in range(iters):
        v = w.T @ (w @ v)
        norm = np.linalg.norm(v)
        if norm == 0.0:
            v = np.full(n, 1.0 / np.sqrt(n))
            continue
        v = v / norm
    wv = w @ v
    sigma = float(np.linalg.norm(wv))
    u = wv / sigma if sigma > 0 else np.zeros(w.shape[0])
    return sigma, u, v


def spectral_penalty(net: Network, strength: float) -> float:
    """Exact penalty value strength * sum_l (sigma_max(W_l) - 1)^2, via SVD.

    Used as the independent value route; the gradient path below estimates
    the singular pair by power iteration instead.
    """
    total = 0.0
    for w in net.weights:
        sigma = np.linalg.svd(w, compute_uv=False)[0]
        total += (sigma - 1.0) ** 2
    return strength * total


def regularizer_grad(net: Network, cfg, power_state: dict | None = None) -> Gradients:
    """Gradient of the configured penalty at the current parameters.

    power_state, when provided, carries warm-start vectors for the spectral
    power iteration between steps (keyed by layer index).
    """
    if isinstance(cfg, RESET_KINDS):
        raise EngineError(f"{type(cfg).__name__} is a reset rule, not a regularizer")
    grads = net.zero_gradients()
    if isinstance(cfg, NoIntervention):
        return grads
    if isinstance(cfg, L2Zero):
        for l in range(net.num_layers):
            grads.weights[l] += 2.0 * cfg.strength * net.weights[l]
            grads.biases[l] += 2.0 * cfg.strength * net.biases[l]
        return grads
    if isinstance(cfg, L2Init):
        for l in range(net.num_layers):
            grads.weights[l] += 2.0 * cfg.strength * (net.weights[l] - net.init_weights[l])
            grads.biases[l] += 2.0 * cfg.strength * (net.biases[l] - net.init_biases[l])
        return grads
    if isinstance(cfg, Spectral):
        # d sigma_max / dW = u v^T with the singular vectors held constant.
        for l, w in enumerate(net.weights):
            v0 = power_state.get(l) if power_state is not None else None
            sigma, u, v = power_iteration_top_singular(w, cfg.power_iters, v0)
            if power_state is not None:
                power_state[l] = v
            grads.weights[l] += 2.0 * cfg.strength * (sigma - 1.0) * np.outer(u, v)
        return grads
    raise EngineError(f"unknown intervention: {cfg!r}")


# ---------------------------------------------------------------------------
# Reset rules
# ---------------------------------------------------------------------------

def shrink_and_perturb(net: Network, shrink: float, noise_std: float, seed: int) -> None:
    """theta <- shrink * theta + N(0, noise_std^2), in place, seed-deterministic."""
    rng = np.random.Generator(np.random.PCG64(seed))
    for l in range(net.num_layers):
        net.weights[l] *= shrink
        net.weights[l] += rng.normal(0.0, noise_std, size=net.weights[l].shape)
        net.biases[l] *= shrink
        net.biases[l] += rng.normal(0.0, noise_std, size=net.biases[l].shape)


def redo_unit_scores(net: Network, trace) -> list:
    """Normalized mean-|activation| score per pre-activation unit, hidden layers only.

    The two outputs sharing a pre-activation under a pair-producing activation
    count as one unit. A layer whose activations are all exactly zero scores
    zero everywhere.
    """
    scores = []
    for l in range(net.num_layers - 1):
        h = np.abs(trace.outputs[l])
        if is_width_doubling(net.layers[l].activation):
            h = h.reshape(h.shape[0], -1, 2).mean(axis=2)
        unit_means = h.mean(axis=0)
        layer_mean = unit_means.mean()
        if layer_mean == 0.0:
            scores.append(np.zeros_like(unit_means))
        else:
            scores.append(unit_means / layer_mean)
    return scores


def redo_reset(net: Network, trace, threshold: float, seed: int) -> int:
    """Recycle dormant units: fresh Glorot row in, zeroed bias and outgoing columns.

    Returns the number of recycled pre-activation units.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    count = 0
    for l, unit_scores in enumerate(redo_unit_scores(net, trace)):
        layer = net.layers[l]
        bound = glorot_bound(layer.in_dim, layer.pre_dim)
        doubled = is_width_doubling(layer.activation)
        for i in np.flatnonzero(unit_scores <= threshold):
            net.weights[l][i, :] = rng.uniform(-bound, bound, size=layer.in_dim)
            net.biases[l][i] = 0.0
            cols = (2 * i, 2 * i + 1) if doubled else (i,)
            for c in cols:
                net.weights[l + 1][:, c] = 0.0
            count += 1
    return count
