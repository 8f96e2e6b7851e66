"""Distribution-level discrepancies between observed and simulated datasets,
and distances between summary vectors.

The observed side is privileged: :class:`Discrepancy` precomputes sorted
samples / empirical CDFs for the observed dataset once and is then read-only,
so one instance can be evaluated concurrently against many simulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = [
    "wasserstein1",
    "cramer_von_mises",
    "energy_distance",
    "anderson_darling",
    "flow_composite",
    "summary_distance",
    "Discrepancy",
    "FlowDesignError",
    "make_discrepancy",
]


class FlowDesignError(ValueError):
    """Observed and simulated flow datasets carry different designs."""


def _as_1d(x, name):
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError(f"{name} dataset is empty")
    return x


def wasserstein1(a, b):
    """1-D Wasserstein-1 distance between empirical distributions.

    Equal sizes use the sorted coupling; unequal sizes compare linearly
    interpolated empirical quantiles at k/(max(n,m)+1).
    """
    a = np.sort(_as_1d(a, "first"))
    b = np.sort(_as_1d(b, "second"))
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    k = max(a.size, b.size)
    q = np.arange(1, k + 1) / (k + 1)
    return float(np.mean(np.abs(np.quantile(a, q) - np.quantile(b, q))))


def cramer_von_mises(a, b):
    """Two-sample Cramer-von Mises criterion.

    Computed as the rank-statistic form evaluated through empirical CDF
    differences over the pooled sample: T = nm/N^2 * sum_k (F_a - F_b)^2 at
    every pooled observation. Zero exactly for identical samples.
    """
    a = np.sort(_as_1d(a, "first"))
    b = np.sort(_as_1d(b, "second"))
    n, m = a.size, b.size
    pooled = np.concatenate([a, b])
    pooled.sort()
    fa = np.searchsorted(a, pooled, side="right") / n
    fb = np.searchsorted(b, pooled, side="right") / m
    return float(n * m / (n + m) ** 2 * np.sum((fa - fb) ** 2))


def energy_distance(a, b):
    """Energy distance 2 E||A-B|| - E||A-A'|| - E||B-B'|| with empirical
    expectations over all pairs and the Euclidean norm."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    ab = cdist(a, b).mean()
    aa = cdist(a, a).mean()
    bb = cdist(b, b).mean()
    return float(max(2.0 * ab - aa - bb, 0.0))


def _interp_ecdf(points, sample):
    """Linearly interpolated empirical CDF of ``sample`` (mid-rank plotting
    positions, 0/1 outside the sample range) evaluated at ``points``."""
    s = np.sort(sample)
    m = s.size
    pos = (np.arange(1, m + 1) - 0.5) / m
    # collapse ties to their mean plotting position (np.interp needs
    # increasing knots)
    uniq, start = np.unique(s, return_index=True)
    if uniq.size != m:
        counts = np.diff(np.append(start, m))
        pos = np.add.reduceat(pos, start) / counts
        s = uniq
    if s.size > 1:
        # extend half a gap past the extremes so the CDF reaches 0 and 1
        # continuously instead of jumping at the sample range boundary
        s = np.concatenate([[s[0] - 0.5 * (s[1] - s[0])], s, [s[-1] + 0.5 * (s[-1] - s[-2])]])
        pos = np.concatenate([[0.0], pos, [1.0]])
    return np.interp(points, s, pos, left=0.0, right=1.0)


def anderson_darling(y, z):
    """Discretised two-sample Anderson-Darling distance (squared form).

    addist^2 = N * integral (F_z - F_y)^2 / (F_y (1 - F_y)) dF_y, with F_y
    evaluated at mid-rank plotting positions (i - 0.5)/N over the sorted
    observed sample and F_z the interpolated simulated ECDF. The observed
    side ``y`` is privileged; the distance is not symmetric.
    """
    y = np.sort(_as_1d(y, "observed"))
    z = _as_1d(z, "simulated")
    n = y.size
    fy = (np.arange(1, n + 1) - 0.5) / n
    fz = _interp_ecdf(y, z)
    return float(np.sum((fz - fy) ** 2 / (fy * (1.0 - fy))))


# flow dataset column layout: time, quenched flag, M1, M2
FLOW_COLUMNS = ("time", "quenched", "M1", "M2")


def _flow_conditions(data):
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != 4:
        raise ValueError("flow dataset must have columns (time, quenched, M1, M2)")
    keys = np.unique(data[:, :2], axis=0)
    return {(float(t), int(q)): data[(data[:, 0] == t) & (data[:, 1] == q), 2:] for t, q in keys}


def flow_composite(y, z, weights=None):
    """Composite flow-cytometry discrepancy.

    Per experimental condition: weighted |corr(M1,M2)_y - corr(M1,M2)_z| plus
    Anderson-Darling distances for each marginal channel. Default weights put
    the correlation term on the AD scale: (w_corr, w1, w2) = (N/2, 1, 1) with
    N the observed count in the condition.
    """
    cy = _flow_conditions(y)
    cz = _flow_conditions(z)
    if set(cy) != set(cz):
        raise FlowDesignError(f"designs differ: {sorted(cy)} vs {sorted(cz)}")
    total = 0.0
    for key in sorted(cy):
        oy, oz = cy[key], cz[key]
        if weights is None:
            w_corr, w1, w2 = oy.shape[0] / 2.0, 1.0, 1.0
        else:
            w_corr, w1, w2 = weights
        ry = np.corrcoef(oy.T)[0, 1]
        rz = np.corrcoef(oz.T)[0, 1]
        total += w_corr * abs(ry - rz)
        total += w1 * anderson_darling(oy[:, 0], oz[:, 0])
        total += w2 * anderson_darling(oy[:, 1], oz[:, 1])
    return float(total)


def summary_distance(s_y, s_z, kind="euclidean", weights=None):
    """Weighted Euclidean or Mahalanobis distance between summary vectors.

    For ``mahalanobis``, ``weights`` is the pilot covariance of summaries; the
    distance uses its inverse as the metric.
    """
    vy = np.asarray(getattr(s_y, "values", s_y), dtype=float)
    vz = np.asarray(getattr(s_z, "values", s_z), dtype=float)
    if vy.shape != vz.shape:
        raise ValueError(f"summary length mismatch: {vy.shape} vs {vz.shape}")
    d = vy - vz
    if kind == "euclidean":
        w = np.ones_like(d) if weights is None else np.asarray(weights, dtype=float)
        return float(math.sqrt(np.sum(w * d**2)))
    if kind == "mahalanobis":
        cov = np.asarray(weights, dtype=float)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("pilot covariance is not positive definite") from exc
        u = np.linalg.solve(chol, d)
        return float(math.sqrt(np.dot(u, u)))
    raise ValueError(f"unknown summary distance kind {kind!r}")


@dataclass(frozen=True)
class Discrepancy:
    """Observed-side-bound discrepancy rho(y, .) selected by kind tag."""

    kind: str
    observed: np.ndarray
    weights: object = None

    def __post_init__(self):
        object.__setattr__(self, "observed", np.asarray(self.observed, dtype=float))

    def __call__(self, simulated):
        return self.evaluate(simulated)

    def evaluate(self, simulated):
        y, z = self.observed, simulated
        if self.kind == "wasserstein1":
            return wasserstein1(y, z)
        if self.kind == "cramer_von_mises":
            return cramer_von_mises(y, z)
        if self.kind == "energy":
            return energy_distance(y, z)
        if self.kind == "anderson_darling":
            return anderson_darling(y, z)
        if self.kind == "flow_composite":
            return flow_composite(y, z, self.weights)
        if self.kind in ("euclidean", "mahalanobis"):
            return summary_distance(y, np.asarray(simulated, dtype=float).ravel(), self.kind, self.weights)
        raise ValueError(f"unknown discrepancy kind {self.kind!r}")


def make_discrepancy(kind, observed, weights=None):
    return Discrepancy(kind, observed, weights)
