"""Summary statistics S(.) mapping datasets to low-dimensional vectors, plus
kernel density estimation for predictive checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SummaryVector",
    "ReferenceGMM",
    "GMMCollapseError",
    "fit_gmm2_em",
    "gmm_score",
    "moment_summary_bivariate",
    "silverman_bandwidth",
    "gaussian_kde",
]

EM_TOL = 1e-8
EM_MAX_ITER = 2000
EM_RESTARTS = 20
_SD_FLOOR = 1e-10


class GMMCollapseError(RuntimeError):
    """Every EM restart collapsed onto a degenerate component."""


@dataclass(frozen=True)
class SummaryVector:
    values: np.ndarray
    labels: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(self.labels) != values.size:
            raise ValueError("summary labels must match values one-to-one")
        if not np.all(np.isfinite(values)):
            raise ValueError("summary values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))


@dataclass(frozen=True)
class ReferenceGMM:
    """Fitted two-component 1-D Gaussian mixture (mu1 < mu2)."""

    mu1: float
    mu2: float
    sd1: float
    sd2: float
    weight: float
    n_iter: int
    loglik: float


def _mixture_loglik_terms(data, mu1, mu2, sd1, sd2, w):
    c = -0.5 * math.log(2 * math.pi)
    l1 = c - math.log(sd1) - 0.5 * ((data - mu1) / sd1) ** 2
    l2 = c - math.log(sd2) - 0.5 * ((data - mu2) / sd2) ** 2
    return np.logaddexp(math.log(w) + l1, math.log1p(-w) + l2), l1, l2


def _em_single(data, mu1, mu2, sd1, sd2, w):
    n = data.size
    prev = -np.inf
    for it in range(1, EM_MAX_ITER + 1):
        mix, l1, _ = _mixture_loglik_terms(data, mu1, mu2, sd1, sd2, w)
        ll = float(mix.sum())
        r1 = np.exp(math.log(w) + l1 - mix)
        n1 = r1.sum()
        n2 = n - n1
        if n1 < 1e-10 or n2 < 1e-10:
            return None
        mu1 = float((r1 * data).sum() / n1)
        mu2 = float(((1 - r1) * data).sum() / n2)
        v1 = float((r1 * (data - mu1) ** 2).sum() / n1)
        v2 = float(((1 - r1) * (data - mu2) ** 2).sum() / n2)
        if v1 < _SD_FLOOR**2 or v2 < _SD_FLOOR**2:
            return None
        sd1, sd2 = math.sqrt(v1), math.sqrt(v2)
        w = float(min(max(n1 / n, 1e-12), 1 - 1e-12))
        if ll - prev < EM_TOL and it > 1:
            return mu1, mu2, sd1, sd2, w, it, ll
        prev = ll
    return mu1, mu2, sd1, sd2, w, EM_MAX_ITER, prev


def fit_gmm2_em(data, seeds=(0,)):
    """Best-of-multistart EM fit of a two-component Gaussian mixture.

    Restarts from random binary partitions of the data; component order is
    normalised so mu1 < mu2. Raises :class:`GMMCollapseError` if every
    restart collapses (sd -> 0 on a near-singleton component).
    """
    data = np.asarray(data, dtype=float).ravel()
    if data.size < 10:
        raise ValueError(f"GMM fit needs at least 10 observations, got {data.size}")
    best = None
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for _ in range(EM_RESTARTS):
            # k-means-style start: split about a random pair of centres
            c1, c2 = rng.choice(data, size=2, replace=False)
            if c1 == c2:
                continue
            assign = np.abs(data - c1) <= np.abs(data - c2)
            if assign.sum() < 2 or (~assign).sum() < 2:
                continue
            mu1, mu2 = float(data[assign].mean()), float(data[~assign].mean())
            sd1 = float(data[assign].std()) or float(data.std()) or 1.0
            sd2 = float(data[~assign].std()) or float(data.std()) or 1.0
            if sd1 <= 0 or sd2 <= 0:
                continue
            res = _em_single(data, mu1, mu2, sd1, sd2, 0.5)
            if res is None:
                continue
            if best is None or res[6] > best[6]:
                best = res
    if best is None:
        raise GMMCollapseError("all EM restarts collapsed; data may be degenerate")
    mu1, mu2, sd1, sd2, w, it, ll = best
    if mu1 > mu2:
        mu1, mu2, sd1, sd2, w = mu2, mu1, sd2, sd1, 1 - w
    return ReferenceGMM(mu1, mu2, sd1, sd2, w, it, ll)


def gmm_score(ref, data):
    """Score summary: gradient of the average per-observation mixture
    log-likelihood with respect to (mu1, mu2, sd1, sd2, weight), evaluated at
    the frozen reference fit."""
    data = np.asarray(data, dtype=float).ravel()
    mu1, mu2, sd1, sd2, w = ref.mu1, ref.mu2, ref.sd1, ref.sd2, ref.weight
    mix, l1, l2 = _mixture_loglik_terms(data, mu1, mu2, sd1, sd2, w)
    r1 = np.exp(math.log(w) + l1 - mix)
    r2 = np.exp(math.log1p(-w) + l2 - mix)
    d_mu1 = np.mean(r1 * (data - mu1) / sd1**2)
    d_mu2 = np.mean(r2 * (data - mu2) / sd2**2)
    d_sd1 = np.mean(r1 * ((data - mu1) ** 2 / sd1**3 - 1.0 / sd1))
    d_sd2 = np.mean(r2 * ((data - mu2) ** 2 / sd2**3 - 1.0 / sd2))
    d_w = np.mean(np.exp(l1 - mix) - np.exp(l2 - mix))
    return SummaryVector(
        np.array([d_mu1, d_mu2, d_sd1, d_sd2, d_w]),
        ("d_mu1", "d_mu2", "d_sd1", "d_sd2", "d_weight"),
    )


def moment_summary_bivariate(data):
    """(mean1, mean2, var1, var2, cov12) with unbiased (n-1) denominators."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("expected an n x 2 dataset")
    if data.shape[0] < 2:
        raise ValueError("bivariate moment summary needs n >= 2")
    m = data.mean(axis=0)
    c = np.cov(data.T, ddof=1)
    return SummaryVector(
        np.array([m[0], m[1], c[0, 0], c[1, 1], c[0, 1]]),
        ("mean1", "mean2", "var1", "var2", "cov12"),
    )


def silverman_bandwidth(data):
    data = np.asarray(data, dtype=float).ravel()
    if data.size < 2:
        raise ValueError("Silverman bandwidth needs n >= 2")
    sd = data.std(ddof=1)
    if sd == 0:
        raise ValueError("Silverman bandwidth undefined for constant data")
    return 1.06 * sd * data.size ** (-0.2)


def gaussian_kde(data, grid, bandwidth="auto"):
    """Gaussian-kernel density estimate of 1-D ``data`` evaluated on ``grid``."""
    data = np.asarray(data, dtype=float).ravel()
    grid = np.asarray(grid, dtype=float)
    if data.size == 0:
        raise ValueError("KDE needs at least one observation")
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    if isinstance(bandwidth, str):
        if bandwidth != "auto":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        h = silverman_bandwidth(data)
    else:
        h = float(bandwidth)
        if h <= 0:
            raise ValueError("bandwidth must be positive")
    z = (grid[:, None] - data[None, :]) / h
    return np.exp(-0.5 * z**2).sum(axis=1) / (data.size * h * math.sqrt(2 * math.pi))
