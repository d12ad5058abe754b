import numpy as np
import pytest

from conftest import rel_err
from diffsmc import nn, oracles
from diffsmc.potentials import (
    NeuralPotential,
    SimplePotential,
    grad_log_g0,
    log_g0,
    make_potential,
)
from diffsmc.rng import stream
from diffsmc.schedule import NoiseSchedule
from diffsmc.targets import make_gaussian, make_mixture6, make_standard_normal

_LOG_2PI = np.log(2.0 * np.pi)


@pytest.fixture
def sched():
    return NoiseSchedule(kind="cosine", steps=16)


def test_log_g0_standard_normal_is_zero():
    ref = make_standard_normal(3)
    x = np.random.default_rng(0).standard_normal((8, 3)) * 2
    assert np.allclose(log_g0(ref, x), 0.0, atol=1e-12)
    assert np.allclose(grad_log_g0(ref, x), 0.0, atol=1e-12)


def test_log_g0_gaussian_value():
    g = make_gaussian(2.75, 0.25)
    x = np.zeros((1, 1))
    expected = (
        -0.5 * 2.75**2 / 0.0625
        - np.log(0.25)
        - 0.5 * _LOG_2PI
        + 0.5 * _LOG_2PI
    )
    assert log_g0(g, x)[0] == pytest.approx(expected, rel=1e-12)
    # gradient identity: grad log g0 = grad log gamma + x
    xs = np.linspace(-2, 3, 7)[:, None]
    assert np.allclose(
        grad_log_g0(g, xs), g.grad_log_density(xs) + xs, atol=1e-12
    )


def test_simple_potential_endpoints(sched):
    g = make_gaussian(2.75, 0.25)
    pot = SimplePotential(g, sched)
    x = np.linspace(-1, 4, 6)[:, None]
    assert np.allclose(pot.log_g(0, x), log_g0(g, x), atol=0)
    assert np.allclose(pot.grad_log_g(0, x), grad_log_g0(g, x), atol=0)
    assert np.allclose(pot.log_g(sched.K, x), 0.0, atol=0)
    assert np.allclose(pot.grad_log_g(sched.K, x), 0.0, atol=0)


def test_simple_potential_chain_rule(sched):
    g = make_gaussian(2.75, 0.25)
    pot = SimplePotential(g, sched)
    k = 9
    kappa = sched.kappa_at(k)
    x = np.array([[1.3], [-0.4]])
    assert np.allclose(
        pot.grad_log_g(k, x), kappa * grad_log_g0(g, kappa * x), atol=1e-14
    )
    # worked example at kappa = 1/2: 0.5 * (-(0.5 - 2.75)/0.0625 + 0.5)
    val = 0.5 * grad_log_g0(g, np.array([[0.5]]))[0, 0]
    assert val == pytest.approx(18.25, abs=1e-12)


def test_simple_potential_constant_for_reference(sched):
    ref = make_standard_normal(2)
    pot = SimplePotential(ref, sched)
    x = np.random.default_rng(1).standard_normal((5, 2))
    for k in range(sched.K + 1):
        assert np.allclose(pot.log_g(k, x), 0.0, atol=1e-12)
        assert np.allclose(pot.grad_log_g(k, x), 0.0, atol=1e-12)


def test_intermediate_density_moments_close_form(sched):
    # log p0 + log g_simple is an unnormalized Gaussian whose moments
    # follow from completing the square
    g = make_gaussian(2.75, 0.25)
    pot = SimplePotential(g, sched)
    for k in (3, 8, 13):
        lam = sched.lambda_at(k)
        kappa = np.sqrt(1 - lam)
        a = (0.5 - 0.5 / 0.0625) * kappa**2 - 0.5
        b = (2.75 / 0.0625) * kappa
        var = -0.5 / a
        mean = b * var
        # sample the quadratic through the implementation and compare
        xs = np.array([[0.0], [1.0], [2.0]])
        vals = -0.5 * xs[:, 0] ** 2 + pot.log_g(k, xs)
        quad = -0.5 * (xs[:, 0] - mean) ** 2 / var
        assert np.allclose(np.diff(vals - quad), 0.0, atol=1e-10)


def test_exact_potential_quadrature_oracle(sched):
    # closed-form g_k matches numerical integration, and the simple
    # approximation differs except at the endpoints
    for k in (1, 5, 8, 12, 15):
        lam = sched.lambda_at(k)
        for x in (-1.0, 0.4, 2.2):
            exact = oracles.log_gk_exact(2.75, 0.25, lam, x)
            quad = oracles.log_gk_quadrature(2.75, 0.25, lam, x)
            assert abs(exact - quad) <= 1e-6
            simple = oracles.log_gk_simple(2.75, 0.25, lam, x)
            assert abs(exact - simple) > 1e-3  # crude away from endpoints
    assert oracles.log_gk_exact(2.75, 0.25, 0.0, 1.2) == pytest.approx(
        oracles.log_gk_simple(2.75, 0.25, 0.0, 1.2), rel=1e-12
    )


def test_neural_matches_simple_at_init(sched):
    mix = make_mixture6()
    network = nn.init_network(nn.NetConfig(dim=2), stream(0, 7))
    neural = NeuralPotential(mix, sched, network)
    simple = SimplePotential(mix, sched)
    x = np.random.default_rng(2).standard_normal((7, 2)) * 2
    for k in (0, 1, 6, 11, 16):
        assert np.max(np.abs(neural.log_g(k, x) - simple.log_g(k, x))) <= 1e-12
        assert np.max(np.abs(neural.grad_log_g(k, x) - simple.grad_log_g(k, x))) <= 1e-12


def test_neural_exact_at_k0_for_any_theta(sched):
    mix = make_mixture6()
    rng = np.random.default_rng(3)
    network = nn.init_network(nn.NetConfig(dim=2), stream(0, 7))
    network = network.with_theta(
        network.theta + 0.5 * rng.standard_normal(network.theta.size)
    )
    neural = NeuralPotential(mix, sched, network)
    x = rng.standard_normal((5, 2))
    assert np.allclose(neural.log_g(0, x), log_g0(mix, x), atol=0)
    assert np.allclose(neural.log_g(sched.K, x), 0.0, atol=0)
    assert np.allclose(neural.grad_log_g(sched.K, x), 0.0, atol=0)


def test_neural_constant_smoothing_reduces_to_simple(sched):
    # if r(t) is constant in t the blend coefficient vanishes at all k
    g = make_gaussian(1.0, 0.7)
    network = nn.init_network(nn.NetConfig(dim=1), stream(1, 7))
    theta = network.theta.copy()
    rng = np.random.default_rng(4)
    theta += 0.3 * rng.standard_normal(theta.size)
    lay = network.layout
    for w, b, _, _ in lay.slices["r"]:
        theta[w] = 0.0
        theta[b] = 0.0
    w, b, n_out, n_in = lay.slices["r"][-1]
    theta[b] = 0.77  # r(t) = 0.77 for every t
    network = network.with_theta(theta)
    neural = NeuralPotential(g, sched, network)
    simple = SimplePotential(g, sched)
    x = rng.standard_normal((6, 1))
    for k in (2, 7, 14):
        assert np.allclose(neural.log_g(k, x), simple.log_g(k, x), atol=1e-12)


def test_neural_gradient_matches_finite_differences(sched):
    # varied (k, x, theta) triples
    g = make_gaussian(2.75, 0.25)
    base = nn.init_network(nn.NetConfig(dim=1, embed_dim=16, hidden=8), stream(2, 7))
    for theta_seed in (5, 6, 7):
        rng = np.random.default_rng(theta_seed)
        network = base.with_theta(
            base.theta + 0.2 * rng.standard_normal(base.theta.size)
        )
        neural = NeuralPotential(g, sched, network)
        x = rng.standard_normal((4, 1))
        for k in (1, 8, 15):
            grad = neural.grad_log_g(k, x)
            for i in range(4):
                h = 1e-6 * (1 + abs(x[i, 0]))
                xp, xm = x.copy(), x.copy()
                xp[i, 0] += h
                xm[i, 0] -= h
                fd = (neural.log_g(k, xp)[i] - neural.log_g(k, xm)[i]) / (2 * h)
                assert rel_err(fd, grad[i, 0]) <= 1e-5


def test_make_potential_factory(sched):
    g = make_gaussian(2.75, 0.25)
    assert isinstance(make_potential("simple", g, sched), SimplePotential)
    network = nn.init_network(nn.NetConfig(dim=1), stream(0, 7))
    assert isinstance(make_potential("neural", g, sched, network), NeuralPotential)
    with pytest.raises(ValueError):
        make_potential("neural", g, sched)
    with pytest.raises(ValueError):
        make_potential("exact", g, sched)
