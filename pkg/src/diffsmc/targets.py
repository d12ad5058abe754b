"""Benchmark target densities.

Each target exposes an unnormalized log-density and its gradient,
vectorized over rows of an ``(n, d)`` array.  Targets with an analytic
normalizing constant record ``log_normalizer`` (0 for the normalized
built-ins) and, where possible, an exact sampler used by statistical
tests and evaluation.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_LOG_2PI = np.log(2.0 * np.pi)


class ParameterError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TargetDensity:
    """Unnormalized density ``gamma`` on R^d.

    Attributes:
        dim: Dimension d.
        log_gamma: Rows (n, d) -> (n,) unnormalized log-density.
        grad_log_gamma: Rows (n, d) -> (n, d) gradient.
        log_normalizer: log integral of gamma when known, else None.
        sampler: Exact sampler (rng, n) -> (n, d) when available.
        name: Short identifier used in configs and reports.
    """

    dim: int
    log_gamma: Callable[[np.ndarray], np.ndarray]
    grad_log_gamma: Callable[[np.ndarray], np.ndarray]
    log_normalizer: Optional[float] = None
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    name: str = "target"
    info: Optional[dict] = None

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return self.log_gamma(np.atleast_2d(np.asarray(x, dtype=np.float64)))

    def grad_log_density(self, x: np.ndarray) -> np.ndarray:
        return self.grad_log_gamma(np.atleast_2d(np.asarray(x, dtype=np.float64)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.sampler is None:
            raise ParameterError(f"target {self.name!r} has no exact sampler")
        return self.sampler(rng, n)


@dataclass(frozen=True)
class Reparameterization:
    """Affine change of variables x = mean + scale * x'.

    ``scale`` is the diagonal of a positive scale matrix.  The wrapped
    target absorbs the Jacobian, so its normalizing constant equals the
    original one.
    """

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).ravel()
        scale = np.asarray(self.scale, dtype=np.float64).ravel()
        if np.any(scale <= 0):
            raise ParameterError("reparameterization scale must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    def to_original(self, x: np.ndarray) -> np.ndarray:
        return self.mean + self.scale * x

    def from_original(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


def reparameterize(target: TargetDensity, rep: Reparameterization) -> TargetDensity:
    """Express ``target`` in the standardized coordinates of ``rep``.

    The returned log-density includes the constant log-Jacobian
    ``sum(log scale)`` so the normalizing constant is preserved.
    """
    if rep.mean.size != target.dim or rep.scale.size != target.dim:
        raise ParameterError("reparameterization dimension mismatch")
    log_jac = float(np.sum(np.log(rep.scale)))

    def log_gamma(x):
        return target.log_gamma(rep.mean + rep.scale * x) + log_jac

    def grad_log_gamma(x):
        return target.grad_log_gamma(rep.mean + rep.scale * x) * rep.scale

    sampler = None
    if target.sampler is not None:
        base = target.sampler

        def sampler(rng, n):
            return rep.from_original(base(rng, n))

    return TargetDensity(
        dim=target.dim,
        log_gamma=log_gamma,
        grad_log_gamma=grad_log_gamma,
        log_normalizer=target.log_normalizer,
        sampler=sampler,
        name=target.name + "+rep",
    )


def make_gaussian(mu: float = 2.75, sigma: float = 0.25) -> TargetDensity:
    """One-dimensional normalized Gaussian N(mu, sigma^2)."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    var = sigma * sigma
    log_norm = -0.5 * _LOG_2PI - np.log(sigma)

    def log_gamma(x):
        return -0.5 * (x[:, 0] - mu) ** 2 / var + log_norm

    def grad_log_gamma(x):
        return -(x - mu) / var

    def sampler(rng, n):
        return mu + sigma * rng.standard_normal((n, 1))

    return TargetDensity(1, log_gamma, grad_log_gamma, 0.0, sampler, name="gaussian")


class _GaussianMixture:
    """Shared machinery for the fixed mixture and the random GMM."""

    def __init__(self, means, covs, weights, name):
        self.means = np.asarray(means, dtype=np.float64)
        self.n_comp, self.dim = self.means.shape
        covs = np.asarray(covs, dtype=np.float64)
        self.covs = covs
        self.precs = np.linalg.inv(covs)
        sign, logdet = np.linalg.slogdet(covs)
        if np.any(sign <= 0):
            raise ParameterError("mixture covariances must be positive definite")
        self.log_weights = np.log(np.asarray(weights, dtype=np.float64))
        self.log_norms = -0.5 * (self.dim * _LOG_2PI + logdet)
        self.chols = np.linalg.cholesky(covs)

    def component_log_pdfs(self, x):
        diff = x[:, None, :] - self.means[None, :, :]  # (n, c, d)
        quad = np.einsum("ncd,cde,nce->nc", diff, self.precs, diff)
        return -0.5 * quad + self.log_norms[None, :]

    def log_gamma(self, x):
        comp = self.component_log_pdfs(x) + self.log_weights[None, :]
        m = np.max(comp, axis=1)
        return m + np.log(np.sum(np.exp(comp - m[:, None]), axis=1))

    def grad_log_gamma(self, x):
        comp = self.component_log_pdfs(x) + self.log_weights[None, :]
        m = np.max(comp, axis=1, keepdims=True)
        resp = np.exp(comp - m)
        resp /= np.sum(resp, axis=1, keepdims=True)  # (n, c)
        diff = x[:, None, :] - self.means[None, :, :]
        grads = -np.einsum("cde,nce->ncd", self.precs, diff)
        return np.einsum("nc,ncd->nd", resp, grads)

    def sampler(self, rng, n):
        idx = rng.choice(self.n_comp, size=n, p=np.exp(self.log_weights))
        eps = rng.standard_normal((n, self.dim))
        return self.means[idx] + np.einsum("nde,ne->nd", self.chols[idx], eps)


def make_mixture6() -> TargetDensity:
    """Equally weighted mixture of 6 bivariate Gaussians.

    A standard multimodal benchmark: two elongated axis-aligned modes,
    two tight axis-aligned modes, and two strongly correlated modes,
    symmetric about the diagonal.
    """
    means = [
        (3.0, 0.0),
        (-2.5, 0.0),
        (2.0, 3.0),
        (0.0, 3.0),
        (0.0, -2.5),
        (3.0, 2.0),
    ]
    cov_a = [[0.7, 0.0], [0.0, 0.05]]
    cov_b = [[0.05, 0.0], [0.0, 0.07]]
    cov_c = [[1.0, 0.95], [0.95, 1.0]]
    covs = [cov_a, cov_a, cov_c, cov_b, cov_b, cov_c]
    mix = _GaussianMixture(means, covs, np.full(6, 1.0 / 6.0), "mixture6")
    return TargetDensity(
        2,
        mix.log_gamma,
        mix.grad_log_gamma,
        0.0,
        mix.sampler,
        name="mixture",
        info={"means": mix.means, "covs": mix.covs},
    )


def make_gmm40(
    d: int, seed: int, normalize_weights: bool = True
) -> TargetDensity:
    """Unequally weighted mixture of 40 spherical Gaussians in d dimensions.

    Component means are uniform on [-40, 40]^d, the common scale is
    softplus(0.1), and raw weights are uniform on [0, 1].  With
    ``normalize_weights`` the weights are rescaled to sum to one so the
    normalizing constant is exactly 1; otherwise the raw weights are
    kept and ``log_normalizer`` records their log-sum.
    """
    if d < 1:
        raise ParameterError("d must be >= 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    means = rng.uniform(-40.0, 40.0, size=(40, d))
    raw_w = rng.uniform(0.0, 1.0, size=40)
    sigma = float(np.log1p(np.exp(0.1)))
    covs = np.broadcast_to(sigma**2 * np.eye(d), (40, d, d)).copy()
    weights = raw_w / raw_w.sum()
    mix = _GaussianMixture(means, covs, weights, "gmm40")
    log_z = 0.0
    log_gamma = mix.log_gamma
    if not normalize_weights:
        log_z = float(np.log(raw_w.sum()))
        offset = log_z

        def log_gamma(x, _base=mix.log_gamma, _off=offset):
            return _base(x) + _off

    return TargetDensity(
        d,
        log_gamma,
        mix.grad_log_gamma,
        log_z,
        mix.sampler,
        name="gmm40",
        info={"means": means, "sigma": sigma},
    )


def make_funnel(dim: int = 10, sigma_f: float = 3.0) -> TargetDensity:
    """Funnel distribution: x0 sets the log-variance of the remaining axes.

    x0 ~ N(0, sigma_f^2) and x_{1:d-1} | x0 ~ N(0, exp(x0) I).  The
    gradient is analytic; finite differences are unreliable deep in the
    neck where exp(-x0) blows up.
    """
    rest = dim - 1
    var_f = sigma_f * sigma_f
    log_norm0 = -0.5 * _LOG_2PI - np.log(sigma_f)

    def log_gamma(x):
        x0 = x[:, 0]
        tail = x[:, 1:]
        lp0 = -0.5 * x0**2 / var_f + log_norm0
        lpt = -0.5 * (
            np.sum(tail**2, axis=1) * np.exp(-x0) + rest * (x0 + _LOG_2PI)
        )
        return lp0 + lpt

    def grad_log_gamma(x):
        x0 = x[:, 0]
        tail = x[:, 1:]
        g = np.empty_like(x)
        g[:, 0] = (
            -x0 / var_f - 0.5 * rest + 0.5 * np.sum(tail**2, axis=1) * np.exp(-x0)
        )
        g[:, 1:] = -tail * np.exp(-x0)[:, None]
        return g

    def sampler(rng, n):
        x = np.empty((n, dim))
        x[:, 0] = sigma_f * rng.standard_normal(n)
        x[:, 1:] = np.exp(x[:, 0] / 2.0)[:, None] * rng.standard_normal((n, rest))
        return x

    return TargetDensity(dim, log_gamma, grad_log_gamma, 0.0, sampler, name="funnel")


def make_logreg(
    features: np.ndarray, labels: np.ndarray, prior_sigma: float = 1.0
) -> TargetDensity:
    """Bayesian logistic-regression posterior.

    Prior theta ~ N(0, prior_sigma^2 I); likelihood Bernoulli with
    success probability sigmoid(theta . x_i).  The normalizing constant
    is unknown.
    """
    if prior_sigma <= 0:
        raise ParameterError("prior_sigma must be positive")
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.float64).ravel()
    if features.shape[0] != labels.size:
        raise DataError(
            f"{features.shape[0]} feature rows but {labels.size} labels"
        )
    if labels.size and not np.all(np.isin(labels, (0.0, 1.0))):
        raise DataError("labels must be binary 0/1")
    d = features.shape[1]
    prior_var = prior_sigma * prior_sigma
    log_prior_norm = -0.5 * d * (_LOG_2PI + 2.0 * np.log(prior_sigma))

    def log_gamma(theta):
        logits = theta @ features.T  # (n, m)
        # log p(y|logit) = y*logit - log(1 + exp(logit)), stable via logaddexp
        loglik = labels[None, :] * logits - np.logaddexp(0.0, logits)
        prior = -0.5 * np.sum(theta**2, axis=1) / prior_var + log_prior_norm
        return prior + np.sum(loglik, axis=1)

    def grad_log_gamma(theta):
        logits = theta @ features.T
        probs = 1.0 / (1.0 + np.exp(-logits))
        return -theta / prior_var + (labels[None, :] - probs) @ features

    return TargetDensity(d, log_gamma, grad_log_gamma, None, None, name="logreg")


def load_dataset(path, standardize: bool = True):
    """Load a delimited dataset: one observation per row, label last.

    Comma- or whitespace-delimited text.  Features are standardized to
    zero mean and unit variance unless ``standardize`` is False.
    Returns ``(features, labels)``.
    """
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    delimiter = "," if "," in first else None
    data = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    if data.shape[1] < 2:
        raise DataError("dataset needs at least one feature column plus labels")
    features, labels = data[:, :-1], data[:, -1]
    if standardize:
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        std[std == 0] = 1.0
        features = (features - mean) / std
    return features, labels


def make_standard_normal(dim: int) -> TargetDensity:
    """Normalized standard normal; the sampler's reference distribution."""

    def log_gamma(x):
        return -0.5 * np.sum(x**2, axis=1) - 0.5 * dim * _LOG_2PI

    def grad_log_gamma(x):
        return -x

    def sampler(rng, n):
        return rng.standard_normal((n, dim))

    return TargetDensity(dim, log_gamma, grad_log_gamma, 0.0, sampler, name="normal")
