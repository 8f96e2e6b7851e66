"""Parametric population-distribution families f_theta(x).

One-dimensional marginals (Gaussian, two-component Gaussian mixture,
moment-parameterised shifted Gamma, shifted log-normal), positivity
truncation, and joints (independent product, Gaussian copula). All families
are immutable, sampleable with an explicit random stream, and expose log
densities where tractable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

__all__ = [
    "DistributionError",
    "TruncationError",
    "Gaussian1D",
    "GaussianMixture1D",
    "ShiftedGamma",
    "ShiftedLogNormal",
    "TruncatedPositive",
    "IndependentProduct",
    "CopulaJoint",
    "gamma_from_moments",
    "complete_correlation",
    "sample_population",
    "log_density",
    "SKEW_DEGENERACY_THRESHOLD",
    "TRUNCATION_REJECT_CAP",
]

# |skew| below this gives Gamma shape > 4e4, numerically fragile; fall back
# to the Gaussian limit.
SKEW_DEGENERACY_THRESHOLD = 1e-2

# Consecutive rejections allowed per truncated draw before signalling a
# pathological proposal.
TRUNCATION_REJECT_CAP = 10_000


class DistributionError(ValueError):
    """Invalid distribution parameters."""


class TruncationError(RuntimeError):
    """Positivity rejection loop exceeded its cap."""


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DistributionError(f"Gaussian sd must be positive, got {self.sd}")

    def sample(self, n, rng):
        return self.mean + self.sd * rng.standard_normal(n)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * ((x - self.mean) / self.sd) ** 2 - math.log(self.sd) - 0.5 * math.log(2 * math.pi)

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mean) / self.sd)

    def quantile(self, u):
        return self.mean + self.sd * special.ndtri(np.asarray(u, dtype=float))

    def moments(self):
        return self.mean, self.sd**2


@dataclass(frozen=True)
class GaussianMixture1D:
    """Two-component Gaussian mixture; ``weight`` belongs to component 1."""

    mu1: float
    mu2: float
    sd1: float
    sd2: float
    weight: float
    ordered: bool = False

    def __post_init__(self):
        if not (self.sd1 > 0 and self.sd2 > 0):
            raise DistributionError("mixture component sds must be positive")
        if not 0.0 <= self.weight <= 1.0:
            raise DistributionError(f"mixture weight must lie in [0,1], got {self.weight}")
        if self.ordered and not self.mu1 < self.mu2:
            raise DistributionError("ordering constraint mu1 < mu2 violated")

    def sample(self, n, rng):
        pick1 = rng.random(n) < self.weight
        z = rng.standard_normal(n)
        mu = np.where(pick1, self.mu1, self.mu2)
        sd = np.where(pick1, self.sd1, self.sd2)
        return mu + sd * z

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        l1 = -0.5 * ((x - self.mu1) / self.sd1) ** 2 - math.log(self.sd1)
        l2 = -0.5 * ((x - self.mu2) / self.sd2) ** 2 - math.log(self.sd2)
        c = -0.5 * math.log(2 * math.pi)
        with np.errstate(divide="ignore"):
            return np.logaddexp(np.log(self.weight) + l1, np.log1p(-self.weight) + l2) + c

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return self.weight * special.ndtr((x - self.mu1) / self.sd1) + (1 - self.weight) * special.ndtr(
            (x - self.mu2) / self.sd2
        )

    def moments(self):
        w = self.weight
        mean = w * self.mu1 + (1 - w) * self.mu2
        var = w * (self.sd1**2 + self.mu1**2) + (1 - w) * (self.sd2**2 + self.mu2**2) - mean**2
        return mean, var


def gamma_from_moments(mean, sd, skew):
    """Shape/scale/shift/orientation of the Gamma law with the given first
    three moments.

    Negative skew is realised by reflecting a Gamma about its mean. Returns
    ``(shape, scale, shift, orientation, degenerate)``; when ``|skew|`` is
    below the degeneracy threshold the Gaussian limit applies and the first
    three entries are NaN.
    """
    if not sd > 0:
        raise DistributionError(f"sd must be positive, got {sd}")
    if abs(skew) < SKEW_DEGENERACY_THRESHOLD:
        return math.nan, math.nan, math.nan, 1, True
    orientation = 1 if skew > 0 else -1
    shape = 4.0 / skew**2
    scale = sd / math.sqrt(shape)
    shift = mean - orientation * shape * scale
    return shape, scale, shift, orientation, False


@dataclass(frozen=True)
class ShiftedGamma:
    """Gamma law parameterised by (mean, sd, skew); sign-free skewness.

    Parameters refer to the untruncated law. ``|skew|`` below the degeneracy
    threshold substitutes the Gaussian(mean, sd) limit, flagged via
    ``degenerate``.
    """

    mean: float
    sd: float
    skew: float
    shape: float = field(init=False, repr=False)
    scale: float = field(init=False, repr=False)
    shift: float = field(init=False, repr=False)
    orientation: int = field(init=False, repr=False)
    degenerate: bool = field(init=False)

    def __post_init__(self):
        shape, scale, shift, orientation, degenerate = gamma_from_moments(self.mean, self.sd, self.skew)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "orientation", orientation)
        object.__setattr__(self, "degenerate", degenerate)

    def _gaussian(self):
        return Gaussian1D(self.mean, self.sd)

    def sample(self, n, rng):
        if self.degenerate:
            return self._gaussian().sample(n, rng)
        g = rng.gamma(self.shape, self.scale, n)
        if self.orientation > 0:
            return self.shift + g
        return self.shift - g

    def log_density(self, x):
        if self.degenerate:
            return self._gaussian().log_density(x)
        x = np.asarray(x, dtype=float)
        z = self.orientation * (x - self.shift)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = stats.gamma.logpdf(z, self.shape, scale=self.scale)
        return np.where(z > 0, out, -np.inf)

    def cdf(self, x):
        if self.degenerate:
            return self._gaussian().cdf(x)
        x = np.asarray(x, dtype=float)
        if self.orientation > 0:
            return stats.gamma.cdf(x - self.shift, self.shape, scale=self.scale)
        return stats.gamma.sf(self.shift - x, self.shape, scale=self.scale)

    def quantile(self, u):
        if self.degenerate:
            return self._gaussian().quantile(u)
        u = np.asarray(u, dtype=float)
        if self.orientation > 0:
            return self.shift + stats.gamma.ppf(u, self.shape, scale=self.scale)
        return self.shift - stats.gamma.isf(u, self.shape, scale=self.scale)

    def moments(self):
        return self.mean, self.sd**2


@dataclass(frozen=True)
class ShiftedLogNormal:
    """``shift + LogNormal(mu, sigma)``; ``unit_mean`` recomputes the shift so
    the untruncated mean equals 1 exactly."""

    mu: float
    sigma: float
    shift: float = 0.0
    unit_mean: bool = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise DistributionError(f"lognormal sigma must be positive, got {self.sigma}")
        if self.unit_mean:
            object.__setattr__(self, "shift", 1.0 - math.exp(self.mu + 0.5 * self.sigma**2))

    def sample(self, n, rng):
        return self.shift + np.exp(self.mu + self.sigma * rng.standard_normal(n))

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        z = x - self.shift
        with np.errstate(divide="ignore", invalid="ignore"):
            lz = np.log(np.where(z > 0, z, np.nan))
            out = -0.5 * ((lz - self.mu) / self.sigma) ** 2 - lz - math.log(self.sigma) - 0.5 * math.log(2 * math.pi)
        return np.where(z > 0, out, -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        z = x - self.shift
        with np.errstate(divide="ignore", invalid="ignore"):
            out = special.ndtr((np.log(np.where(z > 0, z, np.nan)) - self.mu) / self.sigma)
        return np.where(z > 0, out, 0.0)

    def quantile(self, u):
        return self.shift + np.exp(self.mu + self.sigma * special.ndtri(np.asarray(u, dtype=float)))

    def moments(self):
        m = math.exp(self.mu + 0.5 * self.sigma**2)
        var = (math.exp(self.sigma**2) - 1.0) * m**2
        return self.shift + m, var


@dataclass(frozen=True)
class TruncatedPositive:
    """Restriction of a 1-D law to (0, inf) by rejection; parameters always
    refer to the untruncated law."""

    inner: object

    def sample(self, n, rng):
        out = np.empty(n, dtype=float)
        pending = np.arange(n)
        for _ in range(TRUNCATION_REJECT_CAP):
            draws = self.inner.sample(pending.size, rng)
            ok = draws > 0
            out[pending[ok]] = draws[ok]
            pending = pending[~ok]
            if pending.size == 0:
                return out
        raise TruncationError(
            f"positivity rejection cap ({TRUNCATION_REJECT_CAP}) exceeded for marginal {self.inner!r}"
        )

    def _mass_positive(self):
        return 1.0 - float(self.inner.cdf(0.0))

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        mass = self._mass_positive()
        if mass <= 0:
            return np.full(x.shape, -np.inf)
        out = self.inner.log_density(x) - math.log(mass)
        return np.where(x > 0, out, -np.inf)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        f0 = float(self.inner.cdf(0.0))
        mass = 1.0 - f0
        if mass <= 0:
            return np.zeros(x.shape)
        return np.where(x > 0, (self.inner.cdf(x) - f0) / mass, 0.0)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        f0 = float(self.inner.cdf(0.0))
        return self.inner.quantile(f0 + u * (1.0 - f0))


@dataclass(frozen=True)
class IndependentProduct:
    """Joint with independent 1-D coordinates."""

    marginals: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))

    @property
    def dim(self):
        return len(self.marginals)

    def sample(self, n, rng):
        return np.column_stack([m.sample(n, rng) for m in self.marginals])

    def log_density(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return sum(m.log_density(x[:, j]) for j, m in enumerate(self.marginals))


def complete_correlation(rho_ab, rho_bc, rho_ac_partial):
    """Complete the (1,3) entry of a 3x3 correlation matrix from a partial
    correlation so that the matrix stays positive definite:

        rho_ac = rho_ab * rho_bc + partial * sqrt((1-rho_ab^2)(1-rho_bc^2))
    """
    for name, v in (("rho_ab", rho_ab), ("rho_bc", rho_bc), ("partial", rho_ac_partial)):
        if not -1.0 < v < 1.0:
            raise DistributionError(f"{name} must lie in (-1, 1), got {v}")
    return rho_ab * rho_bc + rho_ac_partial * math.sqrt((1.0 - rho_ab**2) * (1.0 - rho_bc**2))


@dataclass(frozen=True)
class CopulaJoint:
    """Gaussian copula over arbitrary 1-D marginals.

    Sampling draws multivariate standard normals via the Cholesky factor of
    the correlation matrix, maps through the normal CDF, then through each
    marginal's quantile function (so truncated marginals stay exact).
    """

    marginals: tuple
    corr: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        corr = np.asarray(self.corr, dtype=float)
        if corr.shape != (len(self.marginals), len(self.marginals)):
            raise DistributionError("correlation matrix shape does not match marginal count")
        if not np.allclose(corr, corr.T) or not np.allclose(np.diag(corr), 1.0):
            raise DistributionError("correlation matrix must be symmetric with unit diagonal")
        try:
            chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError as exc:
            raise DistributionError("correlation matrix is not positive definite") from exc
        object.__setattr__(self, "corr", corr)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def from_partial(cls, marginals, rho_ab, rho_bc, rho_ac_partial):
        """Three-marginal joint with the (1,3) correlation completed from a
        partial correlation."""
        rho_ac = complete_correlation(rho_ab, rho_bc, rho_ac_partial)
        corr = np.array([[1.0, rho_ab, rho_ac], [rho_ab, 1.0, rho_bc], [rho_ac, rho_bc, 1.0]])
        return cls(tuple(marginals), corr)

    @property
    def dim(self):
        return len(self.marginals)

    def sample(self, n, rng):
        z = rng.standard_normal((n, self.dim)) @ self._chol.T
        u = special.ndtr(z)
        # keep quantile arguments strictly inside (0, 1)
        tiny = np.finfo(float).tiny
        u = np.clip(u, tiny, 1.0 - 1e-16)
        return np.column_stack([m.quantile(u[:, j]) for j, m in enumerate(self.marginals)])


def sample_population(dist, n, rng):
    """Draw an ``n x d`` matrix of i.i.d. parameter vectors from ``dist``."""
    if n < 1:
        raise DistributionError(f"population size must be >= 1, got {n}")
    draws = dist.sample(n, rng)
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    return draws


def log_density(dist, x):
    """Natural-log density of a 1-D family at ``x``; -inf outside support."""
    return dist.log_density(x)
