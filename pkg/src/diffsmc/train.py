"""Score-matching losses and the potential-refinement loop.

Training pairs couple a draw ``x0`` from the current particle
approximation of the target with a noised point
``xk ~ N(kappa_k x0, lambda_k I)`` at a uniformly drawn step.  Two local
losses regress the model score ``-x + grad log g(k, x)`` at ``xk``:

* ``denoising`` targets the conditional score ``-(xk - kappa_k x0) / lambda_k``
  (the classical denoising regression), whose per-pair variance blows up
  like ``1 / lambda_k`` near the data end of the path;
* ``guidance`` targets ``kappa_k grad log g0(x0) - xk``, which stays bounded
  because the target's own gradient replaces the divided difference.

Both losses share their minimizer: the exact score of the noised
marginal.  The refinement driver alternates sampler runs and training,
warm-starting the network parameters each round, so each round's run
uses the potentials learned from the previous round's output.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from . import rng as rngs
from .potentials import NeuralPotential, grad_log_g0, log_g0
from .smc import draw_from_cloud, run_smc_adaptive


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "guidance"
    batch: int = 300
    n_updates: int = 500
    lr: float = 1e-3
    decay_rate: float = 0.95
    decay_every: int = 50
    refine_rounds: int = 2

    def __post_init__(self):
        if self.loss not in ("guidance", "denoising"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.batch < 1 or self.n_updates < 0 or self.refine_rounds < 1:
            raise ValueError("batch >= 1, n_updates >= 0, refine_rounds >= 1")


def sample_pairs(cloud, schedule, batch, rng):
    """Draw ``(x0, k, xk)`` training pairs; k is uniform on {1..K}."""
    cloud = np.atleast_2d(cloud)
    x0 = cloud[rng.integers(0, cloud.shape[0], size=batch)]
    ks = rng.integers(1, schedule.K + 1, size=batch)
    lam = schedule.lambdas[ks]
    kap = np.sqrt(1.0 - lam)
    xk = kap[:, None] * x0 + np.sqrt(lam)[:, None] * rng.standard_normal(x0.shape)
    return x0, ks, xk


class _BatchEval:
    """Shared forward pass and residuals for a mixed-step batch."""

    def __init__(self, state, target, schedule, x0, ks, xk):
        self.net = nn.PotentialNet(state)
        self.target = target
        self.schedule = schedule
        self.x0 = np.atleast_2d(x0)
        self.ks = np.asarray(ks)
        self.xk = np.atleast_2d(xk)
        if np.any(self.ks < 1) or np.any(self.ks > schedule.K):
            raise TrainingError("training steps must lie in {1..K}")
        lam = schedule.lambdas[self.ks]
        if np.any(lam <= 0):
            raise TrainingError("training step with zero noise")
        self.lam = lam
        self.kap = np.sqrt(1.0 - lam)
        shrunk = self.kap[:, None] * self.xk
        self.g0_val = log_g0(target, shrunk)
        self.g0_grad = self.kap[:, None] * grad_log_g0(target, shrunk)
        t = self.ks / schedule.K
        self.r, self.r0, self.N, self.caches = self.net.forward_cached(t, self.xk)
        self.rho = self.r - self.r0
        self.inner_grad = self.net.grad_x_inner(self.caches, self.N)
        self.grad_log_g = (
            self.rho[:, None] * self.inner_grad
            + (1.0 - self.rho)[:, None] * self.g0_grad
        )

    def residual(self, loss):
        """Model score minus regression target, per pair."""
        if loss == "denoising":
            cond_score = -(self.xk - self.kap[:, None] * self.x0) / self.lam[:, None]
            return self.grad_log_g - self.xk - cond_score
        target_grad = grad_log_g0(self.target, self.x0)
        finite = np.all(np.isfinite(target_grad), axis=1)
        resid = self.grad_log_g - self.kap[:, None] * target_grad
        return resid, finite

    def loss_and_grad(self, loss):
        """Mean squared residual over the batch and its parameter gradient.

        Pairs with a non-finite regression target (possible for the
        guidance loss on targets with singular gradients) are skipped;
        the number skipped is returned.
        """
        if loss == "denoising":
            resid = self.residual("denoising")
            keep = np.all(np.isfinite(resid), axis=1)
        else:
            resid, keep = self.residual("guidance")
        skipped = int(np.sum(~keep))
        if skipped == resid.shape[0]:
            raise TrainingError("every pair in the batch was skipped")
        resid = np.where(keep[:, None], resid, 0.0)
        n_eff = resid.shape[0] - skipped
        value = float(np.sum(resid**2) / n_eff)
        scale = 2.0 / n_eff
        grad = np.zeros_like(self.net.state.theta)
        eta_coeff = scale * np.sum(resid * (self.inner_grad - self.g0_grad), axis=1)
        self.net.eta_grad_weighted(self.caches, eta_coeff, grad)
        rho = self.rho[:, None]
        self.net.gamma_grad_score(
            self.caches, resid, scale * rho * resid, scale * rho * self.xk, grad
        )
        return value, grad, skipped

    def per_pair_grad_sq(self, loss):
        """Squared parameter-gradient norm of each pair's own loss."""
        if loss == "denoising":
            resid = self.residual("denoising")
        else:
            resid, _ = self.residual("guidance")
        rho = self.rho[:, None]
        eta_coeff = 2.0 * np.sum(resid * (self.inner_grad - self.g0_grad), axis=1)
        return self.net.per_sample_score_grad_sq(
            self.caches, resid, 2.0 * rho * resid, 2.0 * rho * self.xk, eta_coeff
        )


def local_loss(state, target, schedule, x0, k, xk, loss="guidance"):
    """Loss value and parameter gradient for a single training pair."""
    ev = _BatchEval(state, target, schedule, np.atleast_2d(x0), np.atleast_1d(k),
                    np.atleast_2d(xk))
    value, grad, skipped = ev.loss_and_grad(loss)
    if skipped:
        raise TrainingError("pair has a non-finite regression target")
    return value, grad


def train_potential(cloud, state, config, schedule, target, seed, round_idx=0):
    """Run ``n_updates`` Adam steps of the configured loss.

    ``cloud`` is an equally weighted sample of the target approximation;
    pairs are drawn with replacement from it.  Returns the new network
    state and the loss trace (one record per update).
    """
    theta = state.theta.copy()
    opt = nn.init_adam(theta.size, lr=config.lr, decay_rate=config.decay_rate,
                       decay_every=config.decay_every)
    trace = []
    for i in range(config.n_updates):
        rng = rngs.stream(seed, rngs.TRAIN, round_idx, i)
        x0, ks, xk = sample_pairs(cloud, schedule, config.batch, rng)
        ev = _BatchEval(state.with_theta(theta), target, schedule, x0, ks, xk)
        value, grad, skipped = ev.loss_and_grad(config.loss)
        theta, opt = nn.adam_step(opt, theta, grad)
        trace.append({"round": round_idx, "update": i, "loss": value,
                      "skipped": skipped})
    return state.with_theta(theta), trace


def refine(target, schedule, smc_config, train_config, seed, network=None):
    """Alternate sampler runs and potential training.

    Round r runs the sampler with the network trained through round
    r - 1 (round 1 starts from the zero-initialized network, i.e. the
    shrunk-argument approximation), then trains on the run's output
    cloud, warm-starting the parameters.  Returns the final network,
    the per-round run reports and the concatenated loss trace.
    """
    if network is None:
        cfg = nn.NetConfig(dim=target.dim)
        network = nn.init_network(cfg, rngs.stream(seed, rngs.NET_INIT))
    reports = []
    trace = []
    for r in range(train_config.refine_rounds):
        potential = NeuralPotential(target, schedule, network)
        run_seed = rngs.derive_seed(seed, rngs.ROUND, r)
        report = run_smc_adaptive(target, potential, schedule, smc_config, run_seed)
        reports.append(report)
        cloud = draw_from_cloud(
            report, smc_config.n_particles, rngs.stream(seed, rngs.CLOUD, r)
        )
        network, round_trace = train_potential(
            cloud, network, train_config, schedule, target, seed, round_idx=r
        )
        trace.extend(round_trace)
    return network, reports, trace
