import numpy as np
import pytest

from conftest import rel_err
from diffsmc.targets import (
    DataError,
    ParameterError,
    Reparameterization,
    load_dataset,
    make_funnel,
    make_gaussian,
    make_gmm40,
    make_logreg,
    make_mixture6,
    make_standard_normal,
    reparameterize,
)

_LOG_2PI = np.log(2.0 * np.pi)


def _all_targets(rng):
    feats = rng.standard_normal((20, 4))
    labels = (rng.random(20) < 0.5).astype(float)
    return [
        make_gaussian(2.75, 0.25),
        make_mixture6(),
        make_funnel(),
        make_gmm40(2, seed=7),
        make_logreg(feats, labels, prior_sigma=1.3),
        make_standard_normal(3),
    ]


def test_gradients_match_finite_differences(rng):
    for target in _all_targets(rng):
        x = rng.standard_normal((6, target.dim)) * 1.5
        grad = target.grad_log_density(x)
        for i in range(x.shape[0]):
            for j in range(target.dim):
                h = 1e-5 * (1.0 + abs(x[i, j]))
                xp, xm = x.copy(), x.copy()
                xp[i, j] += h
                xm[i, j] -= h
                fd = (target.log_density(xp)[i] - target.log_density(xm)[i]) / (2 * h)
                assert rel_err(fd, grad[i, j]) <= 1e-5, (target.name, i, j)


def test_gaussian_mode_values():
    g = make_gaussian(2.75, 0.25)
    x = np.array([[2.75]])
    assert g.log_density(x)[0] == pytest.approx(-np.log(0.25 * np.sqrt(2 * np.pi)))
    assert g.grad_log_density(x)[0, 0] == 0.0
    assert g.log_normalizer == 0.0
    with pytest.raises(ParameterError):
        make_gaussian(0.0, -1.0)


def test_gaussian_exact_sampler_moments(rng):
    g = make_gaussian(2.75, 0.25)
    xs = g.sample(rng, 10**5)[:, 0]
    se_mean = 0.25 / np.sqrt(xs.size)
    assert abs(xs.mean() - 2.75) <= 3 * se_mean
    assert abs(xs.var(ddof=1) - 0.0625) <= 3 * 0.0625 * np.sqrt(2.0 / xs.size)


def test_mixture_components_pinned():
    mix = make_mixture6()
    means = mix.info["means"]
    covs = mix.info["covs"]
    expected_means = [(3, 0), (-2.5, 0), (2, 3), (0, 3), (0, -2.5), (3, 2)]
    assert np.allclose(means, expected_means)
    assert np.allclose(covs[0], [[0.7, 0.0], [0.0, 0.05]])
    assert np.allclose(covs[3], [[0.05, 0.0], [0.0, 0.07]])
    assert np.allclose(covs[2], [[1.0, 0.95], [0.95, 1.0]])
    assert np.allclose(covs[0], covs[1]) and np.allclose(covs[3], covs[4])
    assert np.allclose(covs[2], covs[5])


def test_mixture_mode_dominates_tail():
    mix = make_mixture6()
    assert mix.log_density([[3.0, 0.0]])[0] >= mix.log_density([[10.0, 10.0]])[0]


def test_mixture_integrates_to_one_on_grid():
    mix = make_mixture6()
    xs = np.linspace(-8, 8, 801)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    dens = np.exp(mix.log_density(pts)).reshape(801, 801)
    total = np.trapezoid(np.trapezoid(dens, xs, axis=1), xs)
    assert total == pytest.approx(1.0, abs=1e-3)


def test_normalization_by_importance_sampling(rng):
    # targets claiming log-normalizer 0 must integrate to 1: estimate
    # int gamma = E_q[gamma / q] from a wide Gaussian proposal
    for target, scale in ((make_gaussian(2.75, 0.25), 3.0), (make_mixture6(), 4.0)):
        n = 200000
        x = rng.standard_normal((n, target.dim)) * scale
        log_q = (
            -0.5 * np.sum((x / scale) ** 2, axis=1)
            - target.dim * (0.5 * _LOG_2PI + np.log(scale))
        )
        w = np.exp(target.log_density(x) - log_q)
        se = w.std(ddof=1) / np.sqrt(n)
        assert abs(w.mean() - 1.0) <= 3 * se, target.name


def test_funnel_values():
    f = make_funnel()
    assert f.dim == 10
    origin = np.zeros((1, 10))
    expected = np.log(
        np.exp(-0.5 * 0.0 / 9.0) / np.sqrt(2 * np.pi * 9.0)
    ) + 9 * np.log(1.0 / np.sqrt(2 * np.pi))
    assert f.log_density(origin)[0] == pytest.approx(expected, rel=1e-12)
    assert f.grad_log_density(origin)[0, 0] == pytest.approx(-4.5, abs=1e-12)


def test_funnel_sampler_moments(rng):
    f = make_funnel()
    xs = f.sample(rng, 10**5)
    x0 = xs[:, 0]
    assert abs(x0.mean()) <= 3 * 3.0 / np.sqrt(x0.size)
    assert abs(x0.var(ddof=1) - 9.0) <= 3 * 9.0 * np.sqrt(2.0 / x0.size)


def test_gmm_scale_and_normalizer():
    gmm = make_gmm40(2, seed=7)
    assert gmm.info["sigma"] == pytest.approx(np.log(1 + np.exp(0.1)), rel=1e-12)
    assert gmm.info["sigma"] == pytest.approx(0.7444, abs=1e-4)
    assert gmm.log_normalizer == 0.0
    raw = make_gmm40(2, seed=7, normalize_weights=False)
    assert raw.log_normalizer != 0.0
    # unnormalized density is the normalized one shifted by log sum w
    x = np.array([[0.5, -0.3], [10.0, 4.0]])
    shift = raw.log_density(x) - gmm.log_density(x)
    assert np.allclose(shift, raw.log_normalizer, atol=1e-10)


def test_gmm_mode_count_recovered(rng):
    gmm = make_gmm40(2, seed=7)
    means = gmm.info["means"]
    sigma = gmm.info["sigma"]
    xs = gmm.sample(rng, 20000)
    d2 = ((xs[:, None, :] - means[None, :, :]) ** 2).sum(-1)
    nearest = np.argmin(d2, axis=1)
    within = np.sqrt(d2[np.arange(len(xs)), nearest]) <= 3 * sigma
    hit_modes = np.unique(nearest[within])
    assert hit_modes.size == 40


def test_gmm_reproducible_from_seed():
    a = make_gmm40(3, seed=11)
    b = make_gmm40(3, seed=11)
    c = make_gmm40(3, seed=12)
    assert np.array_equal(a.info["means"], b.info["means"])
    assert not np.array_equal(a.info["means"], c.info["means"])


def test_logreg_values():
    # no data: the posterior is the prior
    empty = make_logreg(np.zeros((0, 2)), np.zeros(0), prior_sigma=1.0)
    x = np.array([[0.3, -0.4]])
    expected = -0.5 * np.sum(x**2) - _LOG_2PI
    assert empty.log_density(x)[0] == pytest.approx(expected, rel=1e-12)

    # gradient at zero: sum (y_i - 1/2) x_i
    rng = np.random.default_rng(0)
    feats = rng.standard_normal((15, 3))
    labels = (rng.random(15) < 0.4).astype(float)
    lr = make_logreg(feats, labels)
    grad0 = lr.grad_log_density(np.zeros((1, 3)))[0]
    assert np.allclose(grad0, ((labels - 0.5)[:, None] * feats).sum(0), atol=1e-12)

    # single datum x=(1), y=1, sigma=1, theta=0
    single = make_logreg(np.array([[1.0]]), np.array([1.0]), prior_sigma=1.0)
    val = single.log_density(np.zeros((1, 1)))[0]
    assert val == pytest.approx(-0.5 * _LOG_2PI + np.log(0.5), rel=1e-12)


def test_logreg_validation():
    with pytest.raises(DataError):
        make_logreg(np.zeros((3, 2)), np.zeros(4))
    with pytest.raises(DataError):
        make_logreg(np.zeros((3, 2)), np.array([0.0, 2.0, 1.0]))
    with pytest.raises(ParameterError):
        make_logreg(np.zeros((3, 2)), np.zeros(3), prior_sigma=0.0)


def test_dataset_loader(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text("1.0,2.0,1\n3.0,4.0,0\n5.0,6.0,1\n")
    feats, labels = load_dataset(path)
    assert feats.shape == (3, 2)
    assert np.allclose(feats.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(labels, [1, 0, 1])
    raw, _ = load_dataset(path, standardize=False)
    assert np.allclose(raw[:, 0], [1, 3, 5])
    ws = tmp_path / "data.txt"
    ws.write_text("1.0 2.0 1\n3.0 4.0 0\n")
    feats2, labels2 = load_dataset(ws, standardize=False)
    assert feats2.shape == (2, 2)


def test_reparameterize_identity():
    g = make_gaussian(2.75, 0.25)
    rep = Reparameterization(mean=np.zeros(1), scale=np.ones(1))
    wrapped = reparameterize(g, rep)
    x = np.array([[0.1], [2.0]])
    assert np.allclose(wrapped.log_density(x), g.log_density(x))
    assert np.allclose(wrapped.grad_log_density(x), g.grad_log_density(x))


def test_reparameterize_gaussian_to_standard_normal():
    g = make_gaussian(2.75, 0.25)
    rep = Reparameterization(mean=np.array([2.75]), scale=np.array([0.25]))
    wrapped = reparameterize(g, rep)
    x = np.linspace(-3, 3, 11)[:, None]
    expected = -0.5 * x[:, 0] ** 2 - 0.5 * _LOG_2PI
    assert np.allclose(wrapped.log_density(x), expected, atol=1e-12)
    assert wrapped.log_normalizer == g.log_normalizer


def test_reparameterize_preserves_normalizer_metadata():
    gmm = make_gmm40(2, seed=3, normalize_weights=False)
    rep = Reparameterization(mean=np.array([1.0, -2.0]), scale=np.array([2.0, 3.0]))
    wrapped = reparameterize(gmm, rep)
    assert wrapped.log_normalizer == gmm.log_normalizer


def test_reparameterize_rejects_bad_scale():
    with pytest.raises(ParameterError):
        Reparameterization(mean=np.zeros(2), scale=np.array([1.0, 0.0]))


def test_reparameterized_sampler_consistent(rng):
    g = make_gaussian(2.75, 0.25)
    rep = Reparameterization(mean=np.array([2.75]), scale=np.array([0.25]))
    wrapped = reparameterize(g, rep)
    xs = wrapped.sample(rng, 50000)[:, 0]
    assert abs(xs.mean()) <= 3.0 / np.sqrt(xs.size) * 1.0 * 3
    assert abs(xs.var(ddof=1) - 1.0) <= 3 * np.sqrt(2.0 / xs.size)
