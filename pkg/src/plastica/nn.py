"""Dense feed-forward networks with manual backpropagation.

Everything is plain float64 numpy. A network is a list of layers, each a
linear map (weight rows = pre-activation units) optionally followed by a
normalizer and an element-wise or pair-producing activation. Activations
that emit two outputs per pre-activation (Fourier, CReLU) interleave them:
output 2i and 2i+1 both belong to pre-activation i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LAYERNORM_EPS = 1e-5

LAYERNORM = "layernorm"
LINEARIZED_LAYERNORM = "linearized_layernorm"
_NORM_KINDS = (None, LAYERNORM, LINEARIZED_LAYERNORM)


class EngineError(ValueError):
    """Raised on shape mismatches, invalid configs, or non-finite values."""


def _require_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise EngineError(f"non-finite values in {what}")


# ---------------------------------------------------------------------------
# Activation kinds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class LeakyReLU:
    leak: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.leak <= 1.0:
            raise EngineError(f"leak must be in [0, 1], got {self.leak}")


@dataclass(frozen=True)
class Sin:
    pass


@dataclass(frozen=True)
class CReLU:
    pass


@dataclass(frozen=True)
class Fourier:
    pass


@dataclass(frozen=True)
class AlphaLinearized:
    """Convex blend of an activation with the identity: a*x + (1-a)*phi(x)."""

    base: object
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise EngineError(f"alpha must be in [0, 1], got {self.alpha}")
        if is_width_doubling(self.base):
            raise EngineError("AlphaLinearized cannot wrap a width-doubling activation")


def is_width_doubling(kind) -> bool:
    return isinstance(kind, (CReLU, Fourier))


def activation_out_dim(kind, pre_dim: int) -> int:
    return 2 * pre_dim if is_width_doubling(kind) else pre_dim


def apply_activation(kind, z: np.ndarray) -> np.ndarray:
    """Element-wise activation; pair-producing kinds interleave their two halves."""
    if isinstance(kind, Identity):
        return z
    if isinstance(kind, ReLU):
        return np.maximum(z, 0.0)
    if isinstance(kind, LeakyReLU):
        return np.where(z > 0, z, kind.leak * z)
    if isinstance(kind, Sin):
        return np.sin(z)
    if isinstance(kind, CReLU):
        out = np.empty(z.shape[:-1] + (2 * z.shape[-1],), dtype=z.dtype)
        out[..., 0::2] = np.maximum(z, 0.0)
        out[..., 1::2] = np.maximum(-z, 0.0)
        return out
    if isinstance(kind, Fourier):
        out = np.empty(z.shape[:-1] + (2 * z.shape[-1],), dtype=z.dtype)
        out[..., 0::2] = np.sin(z)
        out[..., 1::2] = np.cos(z)
        return out
    if isinstance(kind, AlphaLinearized):
        return kind.alpha * z + (1.0 - kind.alpha) * apply_activation(kind.base, z)
    raise EngineError(f"unknown activation kind: {kind!r}")


def activation_backward(kind, z: np.ndarray, dh: np.ndarray) -> np.ndarray:
    """Chain an upstream gradient dh (w.r.t. activation output) back to z.

    Subgradient conventions: ReLU'(0) = 0, LeakyReLU'(0) = leak,
    sin' = cos, cos' = -sin.
    """
    if isinstance(kind, Identity):
        return dh
    if isinstance(kind, ReLU):
        return dh * (z > 0)
    if isinstance(kind, LeakyReLU):
        return dh * np.where(z > 0, 1.0, kind.leak)
    if isinstance(kind, Sin):
        return dh * np.cos(z)
    if isinstance(kind, CReLU):
        return dh[..., 0::2] * (z > 0) - dh[..., 1::2] * (z < 0)
    if isinstance(kind, Fourier):
        return dh[..., 0::2] * np.cos(z) - dh[..., 1::2] * np.sin(z)
    if isinstance(kind, AlphaLinearized):
        return kind.alpha * dh + (1.0 - kind.alpha) * activation_backward(kind.base, z, dh)
    raise EngineError(f"unknown activation kind: {kind!r}")


# ---------------------------------------------------------------------------
# Layers and networks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    pre_dim: int
    activation: object = field(default_factory=Identity)
    use_bias: bool = True
    norm: str | None = None

    def __post_init__(self):
        if self.in_dim < 1 or self.pre_dim < 1:
            raise EngineError("layer dims must be positive")
        if self.norm not in _NORM_KINDS:
            raise EngineError(f"unknown norm kind: {self.norm!r}")
        apply_activation(self.activation, np.zeros(1))  # validates the kind

    @property
    def out_dim(self) -> int:
        return activation_out_dim(self.activation, self.pre_dim)


@dataclass
class Gradients:
    """Per-parameter gradients, shapes mirroring Network.weights/biases."""

    weights: list
    biases: list

    def add_(self, other: "Gradients") -> "Gradients":
        for gw, ow in zip(self.weights, other.weights):
            gw += ow
        for gb, ob in zip(self.biases, other.biases):
            gb += ob
        return self


class Network:
    """Dense network: live parameters plus a frozen snapshot of the init.

    weights[l] has shape (pre_dim, in_dim); biases[l] has shape (pre_dim,).
    The init snapshot is write-protected and never touched by updates.
    """

    def __init__(self, layers, weights, biases):
        self.layers = list(layers)
        self.weights = weights
        self.biases = biases
        self.init_weights = [w.copy() for w in weights]
        self.init_biases = [b.copy() for b in biases]
        for arr in self.init_weights + self.init_biases:
            arr.setflags(write=False)
        self.output_dim = self.layers[-1].out_dim

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    def zero_gradients(self) -> Gradients:
        return Gradients(
            weights=[np.zeros_like(w) for w in self.weights],
            biases=[np.zeros_like(b) for b in self.biases],
        )


def glorot_bound(in_dim: int, pre_dim: int) -> float:
    return float(np.sqrt(6.0 / (in_dim + pre_dim)))


def init_network(spec, seed: int) -> Network:
    """Build a network: Glorot-uniform weights, zero biases, deterministic in seed."""
    spec = list(spec)
    if not spec:
        raise EngineError("network needs at least one layer")
    for prev, cur in zip(spec, spec[1:]):
        if cur.in_dim != prev.out_dim:
            raise EngineError(
                f"dimension chain broken: layer out_dim {prev.out_dim} "
                f"feeds layer in_dim {cur.in_dim}"
            )
    rng = np.random.Generator(np.random.PCG64(seed))
    weights, biases = [], []
    for layer in spec:
        b = glorot_bound(layer.in_dim, layer.pre_dim)
        weights.append(rng.uniform(-b, b, size=(layer.pre_dim, layer.in_dim)))
        biases.append(np.zeros(layer.pre_dim))
    return Network(spec, weights, biases)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

@dataclass
class ForwardTrace:
    """Everything backward needs: per-layer inputs, raw and normalized
    pre-activations, norm scales, and outputs. logits is outputs[-1]."""

    inputs: list
    pre_acts: list
    normed: list
    norm_scales: list
    outputs: list
    batch_size: int

    @property
    def logits(self) -> np.ndarray:
        return self.outputs[-1]


def _layernorm_forward(z, override_scale=None):
    mu = z.mean(axis=1, keepdims=True)
    if override_scale is None:
        s = np.sqrt(z.var(axis=1, keepdims=True) + LAYERNORM_EPS)
    else:
        s = override_scale
    return (z - mu) / s, s


def _layernorm_backward(dy, y, s, linearized: bool):
    # Exact LayerNorm gradient, or the stop-gradient-on-std variant where
    # the per-example scale s is treated as a constant.
    dz = dy - dy.mean(axis=1, keepdims=True)
    if not linearized:
        dz = dz - y * (dy * y).mean(axis=1, keepdims=True)
    return dz / s


def forward(net: Network, x_batch: np.ndarray, norm_scale_override=None) -> ForwardTrace:
    """Run the network on a batch of rows, recording the full trace.

    norm_scale_override, when given, is a per-layer list of frozen LayerNorm
    scales; it exists so finite-difference oracles can probe the
    stop-gradient variant against the function its backward actually
    differentiates.
    """
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if x_batch.ndim != 2 or x_batch.shape[1] != net.input_dim:
        raise EngineError(
            f"input batch must have shape (M, {net.input_dim}), got {x_batch.shape}"
        )
    _require_finite(x_batch, "input batch")
    h = x_batch
    inputs, pre_acts, normed, scales, outputs = [], [], [], [], []
    for l, layer in enumerate(net.layers):
        inputs.append(h)
        z = h @ net.weights[l].T
        if layer.use_bias:
            z = z + net.biases[l]
        pre_acts.append(z)
        if layer.norm is not None:
            override = None if norm_scale_override is None else norm_scale_override[l]
            z_used, s = _layernorm_forward(z, override)
            normed.append(z_used)
            scales.append(s)
        else:
            z_used = z
            normed.append(None)
            scales.append(None)
        h = apply_activation(layer.activation, z_used)
        _require_finite(h, f"layer {l} output")
        outputs.append(h)
    return ForwardTrace(inputs, pre_acts, normed, scales, outputs, x_batch.shape[0])


def backward(net: Network, trace: ForwardTrace, dL_dlogits: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients for every weight and bias."""
    if len(trace.outputs) != net.num_layers:
        raise EngineError("trace does not match network depth")
    if dL_dlogits.shape != trace.logits.shape:
        raise EngineError(
            f"upstream gradient shape {dL_dlogits.shape} does not match "
            f"logits shape {trace.logits.shape}"
        )
    grads = Gradients(weights=[None] * net.num_layers, biases=[None] * net.num_layers)
    dh = dL_dlogits
    for l in range(net.num_layers - 1, -1, -1):
        layer = net.layers[l]
        z = trace.pre_acts[l]
        if trace.inputs[l].shape[0] != trace.logits.shape[0]:
            raise EngineError("stale trace: batch size drifted")
        z_used = trace.normed[l] if layer.norm is not None else z
        dz = activation_backward(layer.activation, z_used, dh)
        if layer.norm is not None:
            dz = _layernorm_backward(
                dz, trace.normed[l], trace.norm_scales[l],
                linearized=(layer.norm == LINEARIZED_LAYERNORM),
            )
        grads.weights[l] = dz.T @ trace.inputs[l]
        grads.biases[l] = dz.sum(axis=0) if layer.use_bias else np.zeros_like(net.biases[l])
        if l > 0:
            dh = dz @ net.weights[l]
        _require_finite(grads.weights[l], f"layer {l} weight gradient")
    return grads


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

SQUARED_ERROR = "squared_error"
SOFTMAX_CROSS_ENTROPY = "softmax_cross_entropy"


def loss_and_grad(logits: np.ndarray, targets, loss: str):
    """Mean loss over the batch and its gradient w.r.t. the logits.

    Squared error sums over outputs per example; cross-entropy expects
    integer class targets and uses a max-subtracted softmax.
    """
    M = logits.shape[0]
    if loss == SQUARED_ERROR:
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != logits.shape:
            raise EngineError(
                f"target shape {targets.shape} does not match logits {logits.shape}"
            )
        diff = logits - targets
        value = float(np.sum(diff * diff) / M)
        return value, 2.0 * diff / M
    if loss == SOFTMAX_CROSS_ENTROPY:
        y = np.asarray(targets)
        if y.shape != (M,):
            raise EngineError(f"class targets must have shape ({M},), got {y.shape}")
        if y.min() < 0 or y.max() >= logits.shape[1]:
            raise EngineError(
                f"class index out of range [0, {logits.shape[1]}): "
                f"min {y.min()}, max {y.max()}"
            )
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        rows = np.arange(M)
        value = float(-np.mean(shifted[rows, y] - np.log(exp.sum(axis=1))))
        grad = probs
        grad[rows, y] -= 1.0
        return value, grad / M
    raise EngineError(f"unknown loss: {loss!r}")


# ---------------------------------------------------------------------------
# Deep-linear utilities
# ---------------------------------------------------------------------------

def product_matrix(net: Network) -> np.ndarray:
    """Product of the weight matrices W_L ... W_1 of a deep linear network.

    Requires every activation to be Identity and no normalizers; biases are
    ignored by definition.
    """
    for l, layer in enumerate(net.layers):
        if not isinstance(layer.activation, Identity):
            raise EngineError(f"layer {l} is not Identity; product matrix undefined")
        if layer.norm is not None:
            raise EngineError(f"layer {l} has a normalizer; product matrix undefined")
    prod = net.weights[0]
    for w in net.weights[1:]:
        prod = w @ prod
    return prod


def build_mlp(input_dim: int, output_dim: int, depth: int, width: int,
              hidden_activation, norm: str | None = None,
              first_layer_activation=None, use_bias: bool = True):
    """Layer specs for an MLP at a given effective width.

    depth counts weight layers; depth 1 is a plain linear model. Pair-producing
    activations use pre_dim = width // 2 so the layer still emits `width`
    outputs, preserving the parameter handicap of the doubled kinds. The final
    layer is always Identity with no normalizer.
    """
    if depth < 1:
        raise EngineError("depth must be >= 1")
    specs = []
    in_dim = input_dim
    for l in range(depth - 1):
        act = hidden_activation
        if l == 0 and first_layer_activation is not None:
            act = first_layer_activation
        if is_width_doubling(act):
            if width % 2 != 0:
                raise EngineError("width must be even for pair-producing activations")
            pre = width // 2
        else:
            pre = width
        specs.append(LayerSpec(in_dim, pre, act, use_bias=use_bias, norm=norm))
        in_dim = specs[-1].out_dim
    specs.append(LayerSpec(in_dim, output_dim, Identity(), use_bias=use_bias, norm=None))
    return specs
