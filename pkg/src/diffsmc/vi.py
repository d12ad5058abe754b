"""Mean-field Gaussian variational fit.

Fits a diagonal Gaussian to the target by stochastic gradient ascent on
the evidence lower bound with the reparameterization trick, and returns
the fit as an affine reparameterization.  Sampling in the standardized
coordinates keeps the guidance potential well behaved when the target
is far from the standard-normal reference.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from . import rng as rngs
from .targets import Reparameterization, TargetDensity

_LOG_2PI = np.log(2.0 * np.pi)


class FitError(RuntimeError):
    pass


@dataclass
class MeanFieldState:
    mean: np.ndarray
    log_scale: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)


def elbo_grad_estimate(state, target, n_mc, rng, max_retries=10):
    """Reparameterized ELBO estimate and its gradient.

    ELBO = E[log gamma(mean + scale * eps)] + sum(log scale) + d/2 (1 + log 2pi).
    Draws hitting a non-finite log-density are redrawn up to
    ``max_retries`` times.  Returns ``(elbo, grad_mean, grad_log_scale,
    n_retried)``.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    d = target.dim
    scale = state.scale
    eps = rng.standard_normal((n_mc, d))
    x = state.mean + scale * eps
    logs = target.log_density(x)
    retried = 0
    bad = ~np.isfinite(logs)
    while np.any(bad):
        if retried >= max_retries:
            raise FitError("could not draw finite log-density samples")
        retried += 1
        eps[bad] = rng.standard_normal((int(np.sum(bad)), d))
        x = state.mean + scale * eps
        logs = target.log_density(x)
        bad = ~np.isfinite(logs)
    grads = target.grad_log_density(x)
    entropy = float(np.sum(state.log_scale)) + 0.5 * d * (1.0 + _LOG_2PI)
    elbo = float(np.mean(logs)) + entropy
    grad_mean = np.mean(grads, axis=0)
    grad_log_scale = np.mean(grads * eps, axis=0) * scale + 1.0
    return elbo, grad_mean, grad_log_scale, retried


def fit_meanfield(
    target: TargetDensity,
    steps: int = 20000,
    lr: float = 1e-3,
    seed: int = 0,
    n_mc: int = 8,
    return_trace: bool = False,
):
    """Adam-optimized mean-field fit returned as a reparameterization."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    d = target.dim
    params = np.zeros(2 * d)  # [mean, log_scale]
    opt = nn.init_adam(params.size, lr=lr, decay_every=0)
    trace = []
    for i in range(steps):
        state = MeanFieldState(mean=params[:d], log_scale=params[d:])
        rng = rngs.stream(seed, rngs.VI, i)
        elbo, g_mean, g_ls, _ = elbo_grad_estimate(state, target, n_mc, rng)
        grad = -np.concatenate([g_mean, g_ls])  # ascend
        params, opt = nn.adam_step(opt, params, grad)
        if not np.all(np.isfinite(params)):
            raise FitError(f"variational fit diverged at step {i}")
        trace.append(elbo)
    state = MeanFieldState(mean=params[:d], log_scale=params[d:])
    rep = Reparameterization(mean=state.mean.copy(), scale=state.scale.copy())
    if return_trace:
        return rep, trace
    return rep
