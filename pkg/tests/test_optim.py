"""Optimizer and intervention tests, with SVD and finite-difference oracles."""

import numpy as np
import pytest

from plastica.nn import (
    EngineError, Identity, LayerSpec, ReLU, forward, init_network,
)
from plastica.optim import (
    ADAM, SGD, L2Init, L2Zero, NoIntervention, OptimizerConfig, OptimizerState,
    ReDO, ShrinkPerturb, Spectral, optimizer_step, power_iteration_top_singular,
    redo_reset, redo_unit_scores, regularizer_grad, shrink_and_perturb,
    spectral_penalty,
)


def scalar_net(value=1.0):
    net = init_network([LayerSpec(1, 1, Identity(), use_bias=False)], seed=0)
    net.weights[0][:] = value
    return net


def hidden_net(seed=0, in_dim=4, hidden=6, out=3, act=None):
    spec = [LayerSpec(in_dim, hidden, act or ReLU()), LayerSpec(hidden, out)]
    return init_network(spec, seed)


# ---------------------------------------------------------------------------
# optimizer steps
# ---------------------------------------------------------------------------

def test_sgd_step_example():
    net = scalar_net(1.0)
    grads = net.zero_gradients()
    grads.weights[0][:] = 2.0
    optimizer_step(net, OptimizerState(net), grads, OptimizerConfig(SGD, 0.1))
    assert net.weights[0][0, 0] == pytest.approx(0.8)


def test_sgd_zero_grads_bitwise_noop():
    net = hidden_net()
    before = [w.copy() for w in net.weights]
    optimizer_step(net, OptimizerState(net), net.zero_gradients(),
                   OptimizerConfig(SGD, 0.5))
    for w, b in zip(net.weights, before):
        assert np.array_equal(w, b)


def test_adam_first_step_magnitude_is_step_size():
    # m_hat / (sqrt(v_hat) + eps) = g / (|g| + eps) ~ sign(g) on step one
    for g in (0.37, -120.0, 1e-4):
        net = scalar_net(1.0)
        grads = net.zero_gradients()
        grads.weights[0][:] = g
        cfg = OptimizerConfig(ADAM, step_size=0.01)
        optimizer_step(net, OptimizerState(net), grads, cfg)
        update = net.weights[0][0, 0] - 1.0
        expected = -0.01 * g / (abs(g) + cfg.adam_eps)
        assert update == pytest.approx(expected, rel=1e-12)
        assert abs(update) == pytest.approx(0.01, rel=1e-3)


def test_adam_matches_hand_recurrence():
    g_seq = [0.5, -1.25, 0.8]
    net = scalar_net(2.0)
    state = OptimizerState(net)
    cfg = OptimizerConfig(ADAM, step_size=0.1)
    m = v = 0.0
    theta = 2.0
    for t, g in enumerate(g_seq, start=1):
        grads = net.zero_gradients()
        grads.weights[0][:] = g
        optimizer_step(net, state, grads, cfg)
        m = cfg.adam_beta1 * m + (1 - cfg.adam_beta1) * g
        v = cfg.adam_beta2 * v + (1 - cfg.adam_beta2) * g * g
        mhat = m / (1 - cfg.adam_beta1 ** t)
        vhat = v / (1 - cfg.adam_beta2 ** t)
        theta -= 0.1 * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        assert net.weights[0][0, 0] == pytest.approx(theta, rel=1e-14)


def test_optimizer_rejects_nonfinite_grad_naming_parameter():
    net = hidden_net()
    grads = net.zero_gradients()
    grads.weights[1][0, 0] = np.inf
    with pytest.raises(EngineError, match="layer 1 weights"):
        optimizer_step(net, OptimizerState(net), grads, OptimizerConfig(SGD, 0.1))


def test_invalid_optimizer_config():
    with pytest.raises(EngineError):
        OptimizerConfig(SGD, step_size=0.0)
    with pytest.raises(EngineError):
        OptimizerConfig(ADAM, step_size=0.1, adam_beta1=1.0)
    with pytest.raises(EngineError):
        OptimizerConfig("rmsprop", 0.1)


# ---------------------------------------------------------------------------
# regularizer gradients
# ---------------------------------------------------------------------------

def test_l2_init_zero_gradient_at_init():
    net = hidden_net(seed=3)
    grads = regularizer_grad(net, L2Init(0.5))
    for g in grads.weights + grads.biases:
        assert np.all(g == 0.0)


def test_l2_zero_scalar_example():
    net = scalar_net(2.0)
    grads = regularizer_grad(net, L2Zero(0.1))
    assert grads.weights[0][0, 0] == pytest.approx(0.4)


def test_spectral_gradient_matches_svd_oracle():
    net = init_network([LayerSpec(2, 2, Identity(), use_bias=False)], seed=0)
    net.weights[0][:] = np.diag([3.0, 1.0])
    grads = regularizer_grad(net, Spectral(1.0, power_iters=50))
    assert np.allclose(grads.weights[0], np.diag([4.0, 0.0]), atol=1e-6)


def test_power_iteration_matches_svd(rng):
    for _ in range(10):
        w = rng.normal(size=(5, 4))
        svals = np.linalg.svd(w, compute_uv=False)
        if svals[1] / svals[0] > 0.9:        # need a spectral gap to converge fast
            continue
        sigma, u, v = power_iteration_top_singular(w, iters=200)
        assert sigma == pytest.approx(svals[0], rel=1e-9)
        assert np.allclose(np.abs(w @ v), np.abs(sigma * u), atol=1e-8)


def _penalty_fd_grad(net, penalty_fn, h=1e-5):
    num = [np.zeros_like(w) for w in net.weights]
    for l, w in enumerate(net.weights):
        flat = w.reshape(-1)
        out = num[l].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = penalty_fn(net)
            flat[i] = orig - h
            lo = penalty_fn(net)
            flat[i] = orig
            out[i] = (hi - lo) / (2 * h)
    return num


def test_regularizer_gradients_match_penalty_finite_differences(rng):
    net = hidden_net(seed=5)
    for w in net.weights:                     # move away from init for L2Init
        w += rng.normal(0, 0.1, size=w.shape)

    cases = [
        (L2Zero(0.3), lambda n: 0.3 * sum(float(np.sum(w * w)) for w in n.weights)
                                + 0.3 * sum(float(np.sum(b * b)) for b in n.biases)),
        (L2Init(0.2), lambda n: 0.2 * sum(float(np.sum((w - w0) ** 2))
                                          for w, w0 in zip(n.weights, n.init_weights))
                                + 0.2 * sum(float(np.sum((b - b0) ** 2))
                                            for b, b0 in zip(n.biases, n.init_biases))),
        (Spectral(0.7, power_iters=200), lambda n: spectral_penalty(n, 0.7)),
    ]
    for cfg, penalty in cases:
        # ensure a >=10% spectral gap for the power-iteration case
        svals = [np.linalg.svd(w, compute_uv=False) for w in net.weights]
        assert all(s[1] / s[0] < 0.9 for s in svals)
        analytic = regularizer_grad(net, cfg)
        numeric = _penalty_fd_grad(net, penalty)
        for l in range(net.num_layers):
            denom = max(np.linalg.norm(numeric[l]), 1e-12)
            rel = np.linalg.norm(analytic.weights[l] - numeric[l]) / denom
            assert rel <= 1e-5, f"{type(cfg).__name__} layer {l}: rel={rel}"


def test_none_regularizer_returns_zeros():
    net = hidden_net()
    grads = regularizer_grad(net, NoIntervention())
    for g in grads.weights + grads.biases:
        assert np.all(g == 0.0)


def test_reset_rule_rejected_by_regularizer_grad():
    net = hidden_net()
    with pytest.raises(EngineError, match="reset"):
        regularizer_grad(net, ShrinkPerturb())
    with pytest.raises(EngineError, match="reset"):
        regularizer_grad(net, ReDO())


def test_spectral_warm_start_state_reused():
    net = hidden_net(seed=1)
    state = {}
    regularizer_grad(net, Spectral(1.0, power_iters=2), power_state=state)
    assert set(state.keys()) == {0, 1}
    # warm-started calls keep converging on the same matrix: the stored vector
    # approaches the true top right-singular vector
    _, _, vt = np.linalg.svd(net.weights[0])
    top = vt[0]
    before = abs(np.dot(state[0], top))
    for _ in range(15):
        regularizer_grad(net, Spectral(1.0, power_iters=2), power_state=state)
    after = abs(np.dot(state[0], top))
    assert after > before
    assert after > 0.999


# ---------------------------------------------------------------------------
# shrink and perturb
# ---------------------------------------------------------------------------

def test_shrink_perturb_pure_scale_when_no_noise():
    net = hidden_net(seed=2)
    before = [w.copy() for w in net.weights]
    shrink_and_perturb(net, shrink=0.5, noise_std=0.0, seed=0)
    for w, b in zip(net.weights, before):
        assert np.allclose(w, 0.5 * b, atol=1e-15)


def test_shrink_perturb_identity_noop():
    net = hidden_net(seed=2)
    before = [w.copy() for w in net.weights]
    shrink_and_perturb(net, shrink=1.0, noise_std=0.0, seed=0)
    for w, b in zip(net.weights, before):
        assert np.array_equal(w, b)


def test_shrink_perturb_noise_statistics():
    net = init_network([LayerSpec(100, 100, Identity(), use_bias=False)], seed=0)
    before = net.weights[0].copy()
    shrink_and_perturb(net, shrink=0.8, noise_std=0.01, seed=7)
    eps = (net.weights[0] - 0.8 * before).ravel()
    n = eps.size
    assert abs(eps.mean()) <= 3 * 0.01 / np.sqrt(n)
    assert eps.std() == pytest.approx(0.01, rel=0.05)


def test_shrink_perturb_deterministic_and_snapshot_untouched():
    a, b = hidden_net(seed=4), hidden_net(seed=4)
    snap = [w.copy() for w in a.init_weights]
    shrink_and_perturb(a, 0.8, 0.01, seed=9)
    shrink_and_perturb(b, 0.8, 0.01, seed=9)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)
    for w0, s in zip(a.init_weights, snap):
        assert np.array_equal(w0, s)


# ---------------------------------------------------------------------------
# ReDO
# ---------------------------------------------------------------------------

def test_redo_uniform_activity_recycles_nothing(rng):
    net = hidden_net(seed=0, act=Identity())
    x = rng.normal(size=(16, 4))
    trace = forward(net, x)
    scores = redo_unit_scores(net, trace)[0]
    assert redo_reset(net, trace, threshold=0.1, seed=0) >= 0
    # all-equal activations give score exactly 1 everywhere
    net2 = hidden_net(seed=0, act=Identity())
    for w in net2.weights:
        w[:] = 0.0
    net2.weights[0][:, 0] = 1.0              # every unit mirrors input 0
    trace2 = forward(net2, np.abs(rng.normal(size=(16, 4))) + 0.1)
    scores2 = redo_unit_scores(net2, trace2)[0]
    assert np.allclose(scores2, 1.0)
    assert redo_reset(net2, trace2, threshold=0.1, seed=0) == 0


def test_redo_dead_relu_unit_recycled():
    net = hidden_net(seed=3, act=ReLU())
    # positive weights + positive inputs keep every other unit alive
    net.weights[0][:] = np.abs(net.weights[0]) + 0.05
    net.weights[0][2, :] = 0.0
    net.biases[0][2] = 0.0
    x = np.abs(np.random.default_rng(0).normal(size=(32, 4))) + 0.05
    trace = forward(net, x)
    scores = redo_unit_scores(net, trace)[0]
    assert scores[2] == 0.0
    count = redo_reset(net, trace, threshold=0.03, seed=1)
    assert count == 1
    assert np.all(net.weights[1][:, 2] == 0.0)   # outgoing column zeroed
    assert np.any(net.weights[0][2, :] != 0.0)   # fresh incoming row
    assert net.biases[0][2] == 0.0


def test_redo_never_recycles_above_threshold(rng):
    for seed in range(5):
        net = hidden_net(seed=seed, act=ReLU())
        x = rng.normal(size=(32, 4))
        trace = forward(net, x)
        scores = redo_unit_scores(net, trace)[0]
        before = net.weights[0].copy()
        redo_reset(net, trace, threshold=0.05, seed=seed)
        kept = scores > 0.05
        assert np.array_equal(net.weights[0][kept], before[kept])


def test_redo_width_doubling_pairs_share_fate(rng):
    from plastica.nn import CReLU, Fourier

    # CReLU: a dead pre-activation emits [0, 0], so the pair scores zero.
    net = init_network([LayerSpec(4, 3, CReLU()), LayerSpec(6, 2)], seed=2)
    net.weights[0][1, :] = 0.0
    x = rng.normal(size=(16, 4))
    trace = forward(net, x)
    scores = redo_unit_scores(net, trace)[0]
    assert scores.shape == (3,)               # one score per pre-activation
    assert scores[1] == 0.0
    count = redo_reset(net, trace, threshold=0.03, seed=3)
    assert count == 1
    assert np.all(net.weights[1][:, 2] == 0.0)   # both outgoing columns zeroed
    assert np.all(net.weights[1][:, 3] == 0.0)

    # Fourier: a frozen pre-activation still emits [0, 1]; recycling kicks in
    # only at a threshold at or above its measured (normalized) score.
    fnet = init_network([LayerSpec(4, 3, Fourier()), LayerSpec(6, 2)], seed=2)
    fnet.weights[0][1, :] = 0.0
    fnet.biases[0][1] = 0.0
    ftrace = forward(fnet, x)
    fscores = redo_unit_scores(fnet, ftrace)[0]
    count = redo_reset(fnet, ftrace, threshold=float(fscores[1]), seed=3)
    assert count == int(np.sum(fscores <= fscores[1]))
    assert np.all(fnet.weights[1][:, 2] == 0.0)
    assert np.all(fnet.weights[1][:, 3] == 0.0)


def test_redo_snapshot_untouched(rng):
    net = hidden_net(seed=6, act=ReLU())
    snap = [w.copy() for w in net.init_weights]
    net.weights[0][0, :] = 0.0
    trace = forward(net, np.abs(rng.normal(size=(8, 4))))
    redo_reset(net, trace, threshold=0.03, seed=0)
    for w0, s in zip(net.init_weights, snap):
        assert np.array_equal(w0, s)
