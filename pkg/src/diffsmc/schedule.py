"""Discretized noising schedule.

An Ornstein-Uhlenbeck noising process run for time ``T`` leaves a
standard-normal point mass invariant and shrinks any other initial law
toward it.  Discretized on ``K`` uniform steps, the process is fully
described by the cumulative noise levels ``lambda_k`` in [0, 1]: the
transition over steps ``j <= k`` has mean scale ``sqrt(1 - lambda_k)``
and variance ``lambda_k``.  Per-step transition coefficients ``alpha_k``
are derived from consecutive lambdas so the composition of transitions
reproduces the marginals exactly:

    1 - lambda_k = (1 - lambda_{k-1}) * (1 - alpha_k).

Two schedules are provided.  The cosine schedule evaluates
``lambda(t) = 1 - cos^2((pi/2) * (t/T + s) / (1 + s))`` and reaches
``lambda = 1`` exactly at ``t = T``.  The linear schedule integrates a
linearly interpolated rate ``beta(t) = beta0 + (betaT - beta0) * t / T``
into ``lambda(t) = 1 - exp(-2 * int_0^t beta)``.
"""

from dataclasses import dataclass, field

import numpy as np

# Largest lambda allowed before the final step; keeps the alpha ratio
# (1 - lambda_k) / (1 - lambda_{k-1}) away from 0/0.
_LAMBDA_CAP = 1.0 - 1e-12


class ScheduleError(ValueError):
    """Degenerate schedule: lambda saturates before the final step."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative and per-step noise coefficients on a uniform grid.

    Attributes:
        kind: "cosine" or "linear".
        steps: Number of transitions K; the grid has K + 1 nodes.
        horizon: Diffusion time span T (default 1.0).
        offset: Small positive offset s of the cosine schedule.
        beta_bounds: (beta0, betaT) rate bounds of the linear schedule.
    """

    kind: str = "cosine"
    steps: int = 16
    horizon: float = 1.0
    offset: float = 0.008
    beta_bounds: tuple = (0.1, 12.0)
    lambdas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        k = np.arange(self.steps + 1, dtype=np.float64)
        t = k * (self.horizon / self.steps)
        if self.kind == "cosine":
            arg = (np.pi / 2.0) * (t / self.horizon + self.offset) / (1.0 + self.offset)
            lam = 1.0 - np.cos(arg) ** 2
        elif self.kind == "linear":
            b0, bt = self.beta_bounds
            if b0 <= 0 or bt <= 0:
                raise ValueError("beta bounds must be positive")
            integral = b0 * t + 0.5 * (bt - b0) * t**2 / self.horizon
            lam = 1.0 - np.exp(-2.0 * integral)
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        # Cap everything but the endpoint so alpha ratios stay finite; the
        # cosine endpoint hits 1 exactly and forces alpha_K = 1.
        lam[:-1] = np.minimum(lam[:-1], _LAMBDA_CAP)
        lam = np.clip(lam, 0.0, 1.0)
        lam.flags.writeable = False
        object.__setattr__(self, "lambdas", lam)

    @property
    def K(self) -> int:
        return self.steps

    def lambda_at(self, k: int) -> float:
        """Cumulative noise level at step ``k`` (0 <= k <= K)."""
        self._check_index(k, lo=0)
        return float(self.lambdas[k])

    def alpha_at(self, k: int) -> float:
        """Transition coefficient of step ``k`` (1 <= k <= K).

        Computed from the lambda ratio so marginals and transitions are
        consistent to round-off; equals 1 exactly when lambda saturates
        at the final step.
        """
        self._check_index(k, lo=1)
        prev, cur = self.lambdas[k - 1], self.lambdas[k]
        if prev >= _LAMBDA_CAP:
            raise ScheduleError(f"lambda saturated at step {k - 1} < K")
        if cur >= 1.0:
            return 1.0
        return float(1.0 - (1.0 - cur) / (1.0 - prev))

    def kappa_at(self, k: int) -> float:
        """Mean shrink factor ``sqrt(1 - lambda_k)``."""
        self._check_index(k, lo=0)
        return float(np.sqrt(1.0 - self.lambdas[k]))

    def _check_index(self, k: int, lo: int):
        if not lo <= k <= self.steps:
            raise IndexError(f"step index {k} outside [{lo}, {self.steps}]")
