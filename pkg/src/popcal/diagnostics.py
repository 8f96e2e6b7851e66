"""Chain convergence diagnostics: split-Rhat and autocorrelation-based
effective sample size."""

from __future__ import annotations

import numpy as np

__all__ = ["split_rhat", "effective_sample_size", "diagnose_chain", "RHAT_CAP"]

RHAT_CAP = 1e6


def split_rhat(chains):
    """Potential scale reduction from half-split chains.

    ``chains`` is a list of 1-D arrays (one per chain); each is split in two,
    then the standard between/within variance ratio is computed over all
    halves. Degenerate within-variance is reported as the cap (or 1.0 when
    everything is constant).
    """
    halves = []
    for c in chains:
        c = np.asarray(c, dtype=float).ravel()
        k = c.size // 2
        halves.extend([c[:k], c[k : 2 * k]])
    n = min(h.size for h in halves)
    if n < 2:
        raise ValueError("chains too short to split")
    halves = np.vstack([h[:n] for h in halves])
    means = halves.mean(axis=1)
    variances = halves.var(axis=1, ddof=1)
    w = variances.mean()
    b = n * means.var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else RHAT_CAP
    var_plus = (n - 1) / n * w + b / n
    return float(min(np.sqrt(var_plus / w), RHAT_CAP))


def effective_sample_size(x):
    """ESS via Geyer's initial-positive-sequence truncation of the
    autocorrelation function. A zero-variance chain reports its length (with
    the degenerate case flagged by the caller)."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4:
        raise ValueError("chain too short for ESS")
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0:
        return float(n)
    # FFT autocovariance
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real / n
    rho = acov / var
    tau = 1.0
    t = 1
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
        t += 2
    return float(min(n, max(n / tau, 1.0)))


def diagnose_chain(chains, labels=None, burn_fraction=0.2):
    """Per-parameter ESS and split-Rhat for one or more chains.

    ``chains`` is a (k, dim) array or a list of them. Requires at least 100
    post-burn-in states per chain.
    """
    if isinstance(chains, np.ndarray):
        chains = [chains]
    kept = []
    for c in chains:
        c = np.atleast_2d(np.asarray(c, dtype=float))
        start = int(c.shape[0] * burn_fraction)
        c = c[start:]
        if c.shape[0] < 100:
            raise ValueError(f"need >= 100 post-burn-in states, got {c.shape[0]}")
        kept.append(c)
    dim = kept[0].shape[1]
    labels = tuple(labels) if labels is not None else tuple(f"p{i}" for i in range(dim))
    out = {}
    for j in range(dim):
        cols = [c[:, j] for c in kept]
        pooled = np.concatenate(cols)
        zero_var = bool(np.all(pooled == pooled[0]))
        ess = float(pooled.size) if zero_var else sum(effective_sample_size(col) for col in cols)
        out[labels[j]] = {
            "rhat": split_rhat(cols),
            "ess": ess,
            "zero_variance": zero_var,
        }
    return out
