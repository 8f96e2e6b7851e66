"""Posterior density bands and posterior predictive checks.

All quantiles use linear interpolation of order statistics (numpy's default,
type 7).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from popcal.inference import simulate_mock_population
from popcal.models.ode import SimulatorFailure
from popcal.rng import substream
from popcal.summaries import gaussian_kde

__all__ = ["BandTable", "posterior_density_bands", "posterior_predictive_check", "PredictiveFailure"]

QUANTS = (0.025, 0.5, 0.975)


class PredictiveFailure(RuntimeError):
    """More than half of the predictive simulations failed."""


@dataclass
class BandTable:
    grid: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    observed: np.ndarray = None
    truth: np.ndarray = None
    labels: tuple = None  # set when the grid indexes summaries, not x values

    def coverage_of(self, curve):
        """Fraction of grid points where ``curve`` lies inside the band."""
        curve = np.asarray(curve, dtype=float)
        return float(np.mean((curve >= self.lower) & (curve <= self.upper)))


def _marginal_log_density(dist, index, grid):
    marginals = getattr(dist, "marginals", None)
    if marginals is not None:
        return marginals[index].log_density(grid)
    if index != 0:
        raise ValueError("scalar family has a single coordinate")
    return dist.log_density(grid)


def posterior_density_bands(thetas, family, index, grid):
    """Pointwise (2.5%, 50%, 97.5%) quantiles of the marginal density of
    f_theta(x) at coordinate ``index`` over retained hyperparameter samples.

    ``family`` maps a theta vector to a population distribution. Samples
    where the family cannot be built are skipped; grid points outside all
    supports simply give zero bands.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    grid = np.asarray(grid, dtype=float)
    rows = []
    for theta in thetas:
        try:
            dist = family(theta)
        except Exception:
            continue
        with np.errstate(over="ignore"):
            rows.append(np.exp(_marginal_log_density(dist, index, grid)))
    if not rows:
        raise ValueError("no usable posterior samples for density bands")
    dens = np.vstack(rows)
    lo, med, hi = (np.quantile(dens, q, axis=0) for q in QUANTS)
    return BandTable(grid=grid, lower=lo, median=med, upper=hi)


def _thin_indices(n_avail, draws):
    if draws >= n_avail:
        return np.arange(n_avail)
    return np.unique(np.linspace(0, n_avail - 1, draws).round().astype(int))


def posterior_predictive_check(chain, problem, grid=None, mode="kde", draws=200, seed=0, burn_fraction=0.2):
    """Predictive band from systematically thinned posterior states.

    Per retained (theta, phi): simulate a mock population of the problem's
    observed size and summarise it with a KDE on ``grid`` (mode "kde") or
    with the problem's summary statistic (mode "summaries"). Failed
    simulations are excluded; more than 50% failures raises
    :class:`PredictiveFailure`.
    """
    states = chain.burned(burn_fraction) if hasattr(chain, "burned") else np.atleast_2d(chain)
    if states.shape[0] == 0:
        raise ValueError("empty chain after burn-in")
    idx = _thin_indices(states.shape[0], draws)
    curves = []
    n_failed = 0
    for j, i in enumerate(idx):
        theta, phi = problem.split(states[i])
        try:
            z = simulate_mock_population(problem, theta, phi, substream(seed, 500_000, j))
            if mode == "kde":
                curves.append(gaussian_kde(z.ravel(), grid, "auto"))
            elif mode == "summaries":
                curves.append(problem.summarise(z))
            else:
                raise ValueError(f"unknown predictive mode {mode!r}")
        except SimulatorFailure:
            n_failed += 1
    if n_failed > len(idx) / 2:
        raise PredictiveFailure(f"{n_failed}/{len(idx)} predictive simulations failed")
    curves = np.vstack(curves)
    lo, med, hi = (np.quantile(curves, q, axis=0) for q in QUANTS)
    if mode == "kde":
        observed = gaussian_kde(problem.observed.ravel(), grid, "auto")
        return BandTable(grid=np.asarray(grid, dtype=float), lower=lo, median=med, upper=hi, observed=observed)
    observed = problem.observed_summary()
    labels = getattr(problem.summary(problem.observed), "labels", None)
    return BandTable(
        grid=np.arange(observed.size, dtype=float),
        lower=lo,
        median=med,
        upper=hi,
        observed=observed,
        labels=labels,
    )
