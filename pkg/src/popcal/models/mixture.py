"""De-noising case study: observation y = x + Gaussian noise.

The output distribution h(y) is available in closed form (the input mixture
with component variances inflated by the noise variance), which makes this
model the analytic check for the whole pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from popcal.distributions import GaussianMixture1D

__all__ = ["MixtureDenoiseModel", "simulate_mixture", "analytic_h_density"]

DEFAULT_NOISE_SD = 0.045


@dataclass(frozen=True)
class MixtureDenoiseModel:
    noise_sd: float = DEFAULT_NOISE_SD

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise sd must be nonnegative")

    @property
    def output_dim(self):
        return 1

    def simulate(self, x, phi, rng):
        """One observation per parameter row: y_i = x_i + noise."""
        x = np.asarray(x, dtype=float).reshape(-1)
        return (x + self.noise_sd * rng.standard_normal(x.size))[:, None]


def simulate_mixture(x, rng, noise_sd=DEFAULT_NOISE_SD):
    x = np.asarray(x, dtype=float)
    return x + noise_sd * rng.standard_normal(x.shape)


def analytic_h_density(theta, noise_sd, y):
    """Closed-form output density: the input two-component mixture convolved
    with the observation noise.

    ``theta`` is (mu1, mu2, var1, var2, weight) on the variance scale.
    """
    mu1, mu2, v1, v2, w = theta
    h = GaussianMixture1D(
        mu1, mu2, math.sqrt(v1 + noise_sd**2), math.sqrt(v2 + noise_sd**2), w
    )
    return np.exp(h.log_density(y))
