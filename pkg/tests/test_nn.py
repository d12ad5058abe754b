import numpy as np
import pytest

from conftest import rel_err
from diffsmc import nn
from diffsmc.rng import stream


def test_time_embed_basics():
    e = nn.time_embed(np.array([0.0]), 128)
    assert e.shape == (1, 128)
    assert np.allclose(e[0, :64], 0.0)
    assert np.allclose(e[0, 64:], 1.0)
    e = nn.time_embed(np.array([0.0, 0.37, 1.0]), 128)
    assert np.allclose(np.linalg.norm(e, axis=1), np.sqrt(64.0), atol=1e-12)
    with pytest.raises(ValueError):
        nn.time_embed(0.5, 7)


def test_parameter_count_formula():
    # r: embed -> h x layers -> 1; enc: embed -> h -> h;
    # trunk: (h + d) -> h x layers -> d; each layer has weights + bias
    for d, e, h, L in ((1, 128, 64, 3), (2, 128, 64, 3), (10, 32, 16, 2)):
        cfg = nn.NetConfig(dim=d, embed_dim=e, hidden=h, layers=L)
        r = (e * h + h) + (L - 1) * (h * h + h) + (h * 1 + 1)
        enc = (e * h + h) + (h * h + h)
        main = ((h + d) * h + h) + (L - 1) * (h * h + h) + (h * d + d)
        assert nn.n_params(cfg) == r + enc + main


def test_forward_deterministic_and_shapes():
    cfg = nn.NetConfig(dim=3, embed_dim=16, hidden=8, layers=2)
    state = nn.init_network(cfg, stream(0, 7))
    rng = np.random.default_rng(0)
    state = state.with_theta(state.theta + 0.1 * rng.standard_normal(state.theta.size))
    net = nn.PotentialNet(state)
    t = np.array([0.2, 0.9])
    x = rng.standard_normal((2, 3))
    r1, r01, n1 = net.forward(t, x)
    r2, r02, n2 = net.forward(t, x)
    assert np.array_equal(r1, r2) and r01 == r02 and np.array_equal(n1, n2)
    assert r1.shape == (2,) and n1.shape == (2, 3)


def test_forward_rejects_nonfinite():
    cfg = nn.NetConfig(dim=1, embed_dim=16, hidden=8)
    net = nn.PotentialNet(nn.init_network(cfg, stream(0, 7)))
    with pytest.raises(nn.EvaluationError):
        net.forward(np.array([0.5]), np.array([[np.nan]]))


def test_zero_init_final_layers():
    cfg = nn.NetConfig(dim=2)
    state = nn.init_network(cfg, stream(0, 7))
    net = nn.PotentialNet(state)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 2))
    r, r0, N = net.forward(np.full(4, 0.3), x)
    assert np.allclose(r, 0.0) and r0 == 0.0
    assert np.allclose(N, 0.0)


def test_value_backprop_linearity():
    # gradients of upstream * value are linear in the upstream weight
    cfg = nn.NetConfig(dim=2, embed_dim=16, hidden=8, layers=2)
    rng = np.random.default_rng(2)
    state = nn.init_network(cfg, stream(1, 7))
    state = state.with_theta(state.theta + 0.2 * rng.standard_normal(state.theta.size))
    net = nn.PotentialNet(state)
    x = rng.standard_normal((3, 2))
    t = np.array([0.1, 0.5, 0.9])
    _, _, _, caches = net.forward_cached(t, x)
    coeff = rng.standard_normal(3)
    g1 = np.zeros_like(state.theta)
    net.eta_grad_weighted(caches, coeff, g1)
    net.gamma_grad_value(caches, coeff, g1)
    g2 = np.zeros_like(state.theta)
    net.eta_grad_weighted(caches, 2.0 * coeff, g2)
    net.gamma_grad_value(caches, 2.0 * coeff, g2)
    assert np.allclose(g2, 2.0 * g1, atol=1e-12)


def test_jvp_matches_finite_difference():
    cfg = nn.NetConfig(dim=2, embed_dim=16, hidden=8, layers=3)
    rng = np.random.default_rng(3)
    state = nn.init_network(cfg, stream(2, 7))
    state = state.with_theta(state.theta + 0.2 * rng.standard_normal(state.theta.size))
    net = nn.PotentialNet(state)
    x = rng.standard_normal((2, 2))
    t = np.array([0.4, 0.6])
    v = rng.standard_normal((2, 2))
    _, _, _, caches = net.forward_cached(t, x)
    jv = net.jvp_n(caches, v)
    h = 1e-6
    _, _, n_plus = net.forward(t, x + h * v)
    _, _, n_minus = net.forward(t, x - h * v)
    fd = (n_plus - n_minus) / (2 * h)
    assert rel_err(fd, jv) <= 1e-6


def test_adam_first_step_is_signlike():
    theta = np.zeros(4)
    g = np.array([0.5, -2.0, 1e-3, 0.0])
    opt = nn.init_adam(4, lr=1e-3)
    theta1, opt1 = nn.adam_step(opt, theta, g)
    expected = -1e-3 * g / (np.abs(g) + 1e-8)
    assert np.allclose(theta1, expected, atol=1e-12)
    assert theta1[3] == 0.0  # zero gradient leaves the coordinate alone
    assert opt1.t == 1


def test_adam_zero_gradient_noop():
    theta = np.array([1.0, -2.0])
    opt = nn.init_adam(2)
    for _ in range(3):
        theta, opt = nn.adam_step(opt, theta, np.zeros(2))
    assert np.array_equal(theta, [1.0, -2.0])


def test_adam_learning_rate_decay():
    opt = nn.init_adam(1, lr=1e-3, decay_rate=0.95, decay_every=50)
    assert nn.adam_lr(opt, 1) == pytest.approx(1e-3)
    assert nn.adam_lr(opt, 50) == pytest.approx(1e-3)
    assert nn.adam_lr(opt, 51) == pytest.approx(1e-3 * 0.95)
    assert nn.adam_lr(opt, 101) == pytest.approx(9.025e-4)
    flat = nn.init_adam(1, lr=1e-3, decay_every=0)
    assert nn.adam_lr(flat, 10**6) == pytest.approx(1e-3)


def test_adam_shape_mismatch():
    opt = nn.init_adam(3)
    with pytest.raises(ValueError):
        nn.adam_step(opt, np.zeros(3), np.zeros(4))


def test_checkpoint_roundtrip(tmp_path):
    cfg = nn.NetConfig(dim=4, embed_dim=32, hidden=16, layers=2)
    state = nn.init_network(cfg, stream(3, 7))
    path = tmp_path / "net.bin"
    nn.save_network(path, state)
    loaded = nn.load_network(path)
    assert loaded.config == cfg
    assert np.array_equal(loaded.theta, state.theta)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTANETWORK....")
    with pytest.raises(ValueError):
        nn.load_network(path)
