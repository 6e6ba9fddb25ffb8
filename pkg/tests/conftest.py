"""Shared oracles for the test suite.

The central one is a finite-difference gradient checker: central differences
with step 1e-5 on the scalar loss, compared tensor-by-tensor against the
engine's analytic gradients. For the stop-gradient LayerNorm variant the
probed function freezes the per-example scales at their unperturbed values,
which is exactly the function that backward differentiates.
"""

import numpy as np
import pytest

from plastica.nn import (
    LINEARIZED_LAYERNORM, backward, forward, loss_and_grad,
)

FD_STEP = 1e-5
FD_REL_TOL = 1e-5


def loss_of(net, x, y, loss_kind, frozen_scales=None):
    trace = forward(net, x, norm_scale_override=frozen_scales)
    return loss_and_grad(trace.logits, y, loss_kind)[0]


def numerical_gradients(net, x, y, loss_kind, h=FD_STEP):
    """Central-difference gradients of the batch loss w.r.t. every parameter."""
    frozen = None
    if any(layer.norm == LINEARIZED_LAYERNORM for layer in net.layers):
        frozen = forward(net, x).norm_scales
    num_w = [np.zeros_like(w) for w in net.weights]
    num_b = [np.zeros_like(b) for b in net.biases]
    for l in range(net.num_layers):
        for arr, out in ((net.weights[l], num_w[l]), (net.biases[l], num_b[l])):
            flat = arr.reshape(-1)
            target = out.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                hi = loss_of(net, x, y, loss_kind, frozen)
                flat[i] = orig - h
                lo = loss_of(net, x, y, loss_kind, frozen)
                flat[i] = orig
                target[i] = (hi - lo) / (2 * h)
    return num_w, num_b


def relative_error(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 and nb < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / max(na, nb))


def check_gradients(net, x, y, loss_kind, rel_tol=FD_REL_TOL):
    """Assert analytic vs finite-difference agreement; returns the worst error."""
    trace = forward(net, x)
    _, dlogits = loss_and_grad(trace.logits, y, loss_kind)
    analytic = backward(net, trace, dlogits)
    num_w, num_b = numerical_gradients(net, x, y, loss_kind)
    worst = 0.0
    for l in range(net.num_layers):
        worst = max(worst, relative_error(analytic.weights[l], num_w[l]))
        if net.layers[l].use_bias:
            worst = max(worst, relative_error(analytic.biases[l], num_b[l]))
    assert worst <= rel_tol, f"gradient mismatch: relative error {worst}"
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(0)
