"""Gradient fidelity tour.

Builds a small network for every activation family and norm variant, then
compares the engine's analytic gradients against central finite differences.
Run: python demos/01_gradient_check.py
"""

import numpy as np

from plastica import (
    AlphaLinearized, CReLU, Fourier, Identity, LayerSpec, LeakyReLU, ReLU, Sin,
    LAYERNORM, LINEARIZED_LAYERNORM, SOFTMAX_CROSS_ENTROPY, SQUARED_ERROR,
    backward, forward, init_network, loss_and_grad,
)

H = 1e-5


def finite_difference_grads(net, x, y, loss_kind, frozen_scales):
    num = []
    for l in range(net.num_layers):
        g = np.zeros_like(net.weights[l])
        flat, out = net.weights[l].reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + H
            hi = loss_and_grad(forward(net, x, frozen_scales).logits, y, loss_kind)[0]
            flat[i] = orig - H
            lo = loss_and_grad(forward(net, x, frozen_scales).logits, y, loss_kind)[0]
            flat[i] = orig
            out[i] = (hi - lo) / (2 * H)
        num.append(g)
    return num


def check(name, act, norm=None, loss_kind=SOFTMAX_CROSS_ENTROPY):
    rng = np.random.default_rng(0)
    spec = [LayerSpec(5, 4, act, norm=norm), LayerSpec(4 * (2 if isinstance(act, (CReLU, Fourier)) else 1), 3)]
    net = init_network(spec, seed=1)
    x = rng.normal(size=(6, 5))
    y = rng.integers(0, 3, size=6) if loss_kind == SOFTMAX_CROSS_ENTROPY \
        else rng.normal(size=(6, 3))
    trace = forward(net, x)
    _, dlogits = loss_and_grad(trace.logits, y, loss_kind)
    analytic = backward(net, trace, dlogits)
    frozen = trace.norm_scales if norm == LINEARIZED_LAYERNORM else None
    numeric = finite_difference_grads(net, x, y, loss_kind, frozen)
    worst = max(
        np.linalg.norm(a - n) / max(np.linalg.norm(n), 1e-12)
        for a, n in zip(analytic.weights, numeric)
    )
    print(f"{name:32s} worst relative error {worst:.2e}  "
          f"{'ok' if worst <= 1e-5 else 'MISMATCH'}")


if __name__ == "__main__":
    check("identity / squared error", Identity(), loss_kind=SQUARED_ERROR)
    check("relu", ReLU())
    check("leaky relu (0.1)", LeakyReLU(0.1))
    check("sin", Sin())
    check("crelu (pair outputs)", CReLU())
    check("fourier (pair outputs)", Fourier())
    check("alpha-linearized relu (0.5)", AlphaLinearized(ReLU(), 0.5))
    check("alpha-linearized sin (0.3)", AlphaLinearized(Sin(), 0.3))
    check("relu + layernorm", ReLU(), norm=LAYERNORM)
    check("relu + linearized layernorm", ReLU(), norm=LINEARIZED_LAYERNORM)
