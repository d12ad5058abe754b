"""Guidance potentials along the noising path.

The sampler factors the target as ``pi = p0 * g0 / Z`` against the
standard-normal reference ``p0`` and works with step-indexed potentials
``g_k`` interpolating between ``g_0 = g0`` (exact, enforced) and
``g_K = 1`` (convention, enforced).  Two approximations of the
intermediate potentials are provided:

* the *simple* variant evaluates the exact ``g0`` at the shrunk point
  ``kappa_k x`` (good near the endpoints, crude in between);
* the *neural* variant blends a learned correction with the simple one,
  ``log g(k, x) = rho <N(t, x), x> + (1 - rho) log g0(kappa_k x)`` with
  ``rho = r(t) - r(0)`` and ``t = k / K``, which coincides with the
  simple variant at initialization and at ``k = 0``.

``log g0`` carries the full reference normalizer so the sampler's
normalizing-constant estimate targets ``Z`` itself rather than ``Z``
times a known constant.
"""

import numpy as np

from .nn import NetworkState, PotentialNet
from .schedule import NoiseSchedule
from .targets import TargetDensity

_LOG_2PI = np.log(2.0 * np.pi)


def log_g0(target: TargetDensity, x: np.ndarray) -> np.ndarray:
    """``log g0 = log gamma(x) - log p0(x)`` rowwise."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return (
        target.log_density(x)
        + 0.5 * np.sum(x**2, axis=1)
        + 0.5 * target.dim * _LOG_2PI
    )


def grad_log_g0(target: TargetDensity, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return target.grad_log_density(x) + x


class SimplePotential:
    """Shrunk-argument approximation ``g(k, x) = g0(kappa_k x)``.

    Endpoint conventions: ``g(0, .) = g0`` exactly and ``g(K, .) = 1``.
    """

    variant = "simple"

    def __init__(self, target: TargetDensity, schedule: NoiseSchedule):
        self.target = target
        self.schedule = schedule

    def log_g(self, k: int, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if k == self.schedule.K:
            return np.zeros(x.shape[0])
        if k == 0:
            return log_g0(self.target, x)
        return log_g0(self.target, self.schedule.kappa_at(k) * x)

    def grad_log_g(self, k: int, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if k == self.schedule.K:
            return np.zeros_like(x)
        if k == 0:
            return grad_log_g0(self.target, x)
        kappa = self.schedule.kappa_at(k)
        return kappa * grad_log_g0(self.target, kappa * x)


class NeuralPotential:
    """Learned potential blending a network correction with the simple one.

    At ``k = 0`` the blend coefficient vanishes by construction and the
    exact ``g0`` is returned; at ``k = K`` the potential is identically
    one and the network is never queried.
    """

    variant = "neural"

    def __init__(
        self,
        target: TargetDensity,
        schedule: NoiseSchedule,
        network: NetworkState,
    ):
        if network.config.dim != target.dim:
            raise ValueError("network dimension does not match target")
        self.target = target
        self.schedule = schedule
        self.network = network
        self._net = PotentialNet(network)

    def with_network(self, network: NetworkState) -> "NeuralPotential":
        return NeuralPotential(self.target, self.schedule, network)

    def _times(self, k: int, n: int) -> np.ndarray:
        return np.full(n, k / self.schedule.K)

    def _baseline(self, k: int, x: np.ndarray):
        """Value and x-gradient of ``log g0(kappa_k x)``."""
        kappa = self.schedule.kappa_at(k)
        xs = kappa * x
        return log_g0(self.target, xs), kappa * grad_log_g0(self.target, xs)

    def log_g(self, k: int, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if k == self.schedule.K:
            return np.zeros(x.shape[0])
        if k == 0:
            return log_g0(self.target, x)
        g0_val, _ = self._baseline(k, x)
        r, r0, N = self._net.forward(self._times(k, x.shape[0]), x)
        rho = r - r0
        return rho * np.sum(N * x, axis=1) + (1.0 - rho) * g0_val

    def grad_log_g(self, k: int, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if k == self.schedule.K:
            return np.zeros_like(x)
        if k == 0:
            return grad_log_g0(self.target, x)
        _, g0_grad = self._baseline(k, x)
        r, r0, N, caches = self._net.forward_cached(self._times(k, x.shape[0]), x)
        rho = (r - r0)[:, None]
        inner_grad = self._net.grad_x_inner(caches, N)
        return rho * inner_grad + (1.0 - rho) * g0_grad

    def backprop(self, k: int, x: np.ndarray, upstream: np.ndarray):
        """Gradients of ``sum_b upstream_b * log g(k, x_b)``.

        Returns ``(grad_theta, grad_x)`` with ``grad_theta`` flat over
        the network parameters.  Endpoint steps have constant or
        network-free potentials, hence zero parameter gradient.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        upstream = np.atleast_1d(np.asarray(upstream, dtype=np.float64))
        grad_theta = np.zeros_like(self.network.theta)
        if k == self.schedule.K:
            return grad_theta, np.zeros_like(x)
        if k == 0:
            return grad_theta, upstream[:, None] * grad_log_g0(self.target, x)
        g0_val, g0_grad = self._baseline(k, x)
        r, r0, N, caches = self._net.forward_cached(self._times(k, x.shape[0]), x)
        rho = r - r0
        phi = np.sum(N * x, axis=1)
        inner_grad = self._net.grad_x_inner(caches, N)
        grad_x = upstream[:, None] * (
            rho[:, None] * inner_grad + (1.0 - rho[:, None]) * g0_grad
        )
        self._net.eta_grad_weighted(caches, upstream * (phi - g0_val), grad_theta)
        self._net.gamma_grad_value(caches, upstream * rho, grad_theta)
        return grad_theta, grad_x


def make_potential(variant, target, schedule, network=None):
    if variant == "simple":
        return SimplePotential(target, schedule)
    if variant == "neural":
        if network is None:
            raise ValueError("neural potential requires a network state")
        return NeuralPotential(target, schedule, network)
    raise ValueError(f"unknown potential variant {variant!r}")
