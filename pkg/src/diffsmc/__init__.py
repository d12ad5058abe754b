"""Sequential Monte Carlo along a denoising diffusion path.

A particle sampler for unnormalized densities: simulate an approximate
time-reversal of an Ornstein-Uhlenbeck noising process toward the
target, correct the approximation with importance weights and
resampling, and optionally refine the guidance potentials with a
score-matching loss trained on the sampler's own output.
"""

from .schedule import NoiseSchedule
from .targets import (
    Reparameterization,
    TargetDensity,
    make_funnel,
    make_gaussian,
    make_gmm40,
    make_logreg,
    make_mixture6,
    make_standard_normal,
    reparameterize,
)
from .potentials import NeuralPotential, SimplePotential, make_potential
from .smc import (
    MCMCConfig,
    RunReport,
    SMCConfig,
    run_smc,
    run_smc_adaptive,
    simulate_naive_sde,
)
from .train import TrainConfig, refine, train_potential
from .vi import fit_meanfield

__all__ = [
    "NoiseSchedule",
    "TargetDensity",
    "Reparameterization",
    "reparameterize",
    "make_gaussian",
    "make_mixture6",
    "make_funnel",
    "make_gmm40",
    "make_logreg",
    "make_standard_normal",
    "SimplePotential",
    "NeuralPotential",
    "make_potential",
    "SMCConfig",
    "MCMCConfig",
    "RunReport",
    "run_smc",
    "run_smc_adaptive",
    "simulate_naive_sde",
    "TrainConfig",
    "train_potential",
    "refine",
    "fit_meanfield",
]

__version__ = "0.1.0"
