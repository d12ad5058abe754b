"""Closed-form and quadrature reference values for 1-D Gaussian targets.

For a Gaussian target the intermediate potentials and marginals of the
noising path have closed forms obtained by completing the square; the
functions here evaluate them directly and by numerical integration.
They serve as independent oracles in tests: the sampler and the losses
are checked against these values, never the other way around.
"""

import numpy as np

_LOG_2PI = np.log(2.0 * np.pi)


def _g0_quadratic(mu: float, sigma: float):
    """Coefficients (a, b, c) of ``log g0(x) = a x^2 + b x + c``."""
    var = sigma * sigma
    a = 0.5 - 0.5 / var
    b = mu / var
    c = -0.5 * mu * mu / var - np.log(sigma)
    return a, b, c


def log_g0_gaussian(mu: float, sigma: float, x: np.ndarray) -> np.ndarray:
    a, b, c = _g0_quadratic(mu, sigma)
    x = np.asarray(x, dtype=np.float64)
    return a * x * x + b * x + c


def log_gk_exact(mu: float, sigma: float, lam: float, x: np.ndarray) -> np.ndarray:
    """Exact ``log g_k(x) = log E[g0(X0)]`` with ``X0 ~ N(kappa x, lam)``.

    Gaussian expectation of ``exp(a X^2 + b X + c)``:
    ``(1 - 2 a lam)^{-1/2} exp(c + (lam b^2 / 2 + b m + a m^2) / (1 - 2 a lam))``
    for mean ``m = kappa x``; always defined here since
    ``1 - 2 a lam = 1 - lam + lam / sigma^2 > 0``.
    """
    a, b, c = _g0_quadratic(mu, sigma)
    x = np.asarray(x, dtype=np.float64)
    kappa = np.sqrt(1.0 - lam)
    m = kappa * x
    denom = 1.0 - 2.0 * a * lam
    return c - 0.5 * np.log(denom) + (0.5 * lam * b * b + b * m + a * m * m) / denom


def log_gk_quadrature(
    mu: float, sigma: float, lam: float, x: float, half_width: float = 12.0,
    n: int = 20001,
) -> float:
    """Same integral on a trapezoid grid over ``x0``; log-domain."""
    kappa = np.sqrt(1.0 - lam)
    center = kappa * x
    width = half_width * max(np.sqrt(lam), sigma, 1.0)
    grid = np.linspace(center - width, center + width, n)
    log_g0 = log_g0_gaussian(mu, sigma, grid)
    log_kernel = -0.5 * (grid - center) ** 2 / lam - 0.5 * np.log(2.0 * np.pi * lam)
    vals = log_g0 + log_kernel
    m = np.max(vals)
    return float(m + np.log(np.trapezoid(np.exp(vals - m), grid)))


def marginal_moments(mu: float, sigma: float, lam: float):
    """Mean and variance of the noised marginal ``pi_k``."""
    kappa2 = 1.0 - lam
    return np.sqrt(kappa2) * mu, kappa2 * sigma * sigma + lam


def score_k(mu: float, sigma: float, lam: float, x: np.ndarray) -> np.ndarray:
    """Exact score of the noised marginal at noise level ``lam``."""
    mean, var = marginal_moments(mu, sigma, lam)
    return -(np.asarray(x, dtype=np.float64) - mean) / var


def intermediate_log_z(mu: float, sigma: float, lam: float) -> float:
    """``log int p0(x) g_hat_k(x) dx`` for the simple potential.

    The integrand is an unnormalized Gaussian; completing the square of
    ``log p0(x) + log g0(kappa x)`` gives the value in closed form.
    """
    a, b, c = _g0_quadratic(mu, sigma)
    kappa = np.sqrt(1.0 - lam)
    aa = a * kappa * kappa - 0.5
    bb = b * kappa
    # int exp(aa x^2 + bb x + c - log sqrt(2 pi)) requires aa < 0
    if aa >= 0:
        raise ValueError("integrand is not integrable")
    return float(c - 0.5 * _LOG_2PI + 0.5 * np.log(np.pi / -aa) + bb * bb / (-4 * aa))


def pair_weight_expectation_quadrature(
    mu: float, sigma: float, lam_k: float, lam_next: float, integrator: str = "standard",
    half_width: float = 10.0, n: int = 1201,
):
    """2-D quadrature of the expected incremental weight.

    Integrates ``w_k(x_k, x_next)`` against the normalized intermediate
    density at step k+1 and the proposal kernel, on a tensor grid.
    Returns the expectation; unbiasedness of the weighting step means it
    must equal the ratio of intermediate normalizers.
    """
    alpha = 1.0 - (1.0 - lam_next) / (1.0 - lam_k)
    root = np.sqrt(1.0 - alpha)
    drift_coef = alpha if integrator == "standard" else 2.0 * (1.0 - root)

    # normalized pi_hat_{k+1} on a grid
    span = half_width
    x_next = np.linspace(-span, span, n)
    log_pi_next = (
        -0.5 * x_next**2 - 0.5 * _LOG_2PI
        + log_gk_simple(mu, sigma, lam_next, x_next)
    )
    log_znext = intermediate_log_z(mu, sigma, lam_next)
    pi_next = np.exp(log_pi_next - log_znext)

    grad_log_g_next = _simple_grad(mu, sigma, lam_next, x_next)
    mean_prop = root * x_next + drift_coef * grad_log_g_next

    xk = np.linspace(-span, span, n)
    # (next, k) tensor grids
    diff_prop = xk[None, :] - mean_prop[:, None]
    log_prop = -0.5 * diff_prop**2 / alpha - 0.5 * np.log(2 * np.pi * alpha)
    diff_back = xk[None, :] - root * x_next[:, None]
    log_back = -0.5 * diff_back**2 / alpha - 0.5 * np.log(2 * np.pi * alpha)
    log_w = (
        log_gk_simple(mu, sigma, lam_k, xk)[None, :]
        - log_gk_simple(mu, sigma, lam_next, x_next)[:, None]
        + log_back
        - log_prop
    )
    integrand = pi_next[:, None] * np.exp(log_prop + log_w)
    inner = np.trapezoid(integrand, xk, axis=1)
    return float(np.trapezoid(inner, x_next))


def log_gk_simple(mu: float, sigma: float, lam: float, x: np.ndarray) -> np.ndarray:
    """Simple potential ``log g0(kappa x)`` for the Gaussian target."""
    kappa = np.sqrt(1.0 - lam)
    return log_g0_gaussian(mu, sigma, kappa * np.asarray(x, dtype=np.float64))


def _simple_grad(mu, sigma, lam, x):
    a, b, _ = _g0_quadratic(mu, sigma)
    kappa = np.sqrt(1.0 - lam)
    xs = kappa * np.asarray(x, dtype=np.float64)
    return kappa * (2.0 * a * xs + b)
