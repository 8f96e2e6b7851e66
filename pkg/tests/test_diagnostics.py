"""Tests for chain convergence diagnostics."""

import numpy as np
import pytest

from popcal.diagnostics import RHAT_CAP, diagnose_chain, effective_sample_size, split_rhat


def test_iid_chain_rhat_and_ess():
    g = np.random.default_rng(0)
    chain = g.standard_normal(10_000)
    assert 0.99 <= split_rhat([chain]) <= 1.01
    ess = effective_sample_size(chain)
    assert abs(ess - 10_000) / 10_000 < 0.20


def test_two_constant_halves_hits_cap():
    chain = np.concatenate([np.zeros(500), np.ones(500)])
    assert split_rhat([chain]) == RHAT_CAP


def test_constant_chain_conventions():
    chain = np.full(1000, 3.0)
    assert split_rhat([chain]) == 1.0
    assert effective_sample_size(chain) == 1000.0
    out = diagnose_chain(np.full((1000, 1), 3.0), labels=("c",))
    assert out["c"]["zero_variance"]
    assert out["c"]["ess"] == 800.0  # post 20% burn-in


def test_autocorrelated_chain_has_reduced_ess():
    g = np.random.default_rng(1)
    n, rho = 20_000, 0.9
    x = np.empty(n)
    x[0] = g.standard_normal()
    for i in range(1, n):
        x[i] = rho * x[i - 1] + math_sqrt1mr2 * g.standard_normal()
    ess = effective_sample_size(x)
    # AR(1) theoretical ESS factor (1-rho)/(1+rho) ~ 1/19
    assert abs(ess - n * (1 - rho) / (1 + rho)) / (n * (1 - rho) / (1 + rho)) < 0.35


math_sqrt1mr2 = float(np.sqrt(1 - 0.9**2))


def test_split_rhat_detects_divergent_chains():
    g = np.random.default_rng(2)
    a = g.standard_normal(2000)
    b = g.standard_normal(2000) + 5.0
    assert split_rhat([a, b]) > 1.2


def test_diagnose_chain_requires_minimum_length():
    with pytest.raises(ValueError):
        diagnose_chain(np.zeros((50, 2)))


def test_diagnose_chain_multichain_labels():
    g = np.random.default_rng(3)
    chains = [g.standard_normal((500, 2)), g.standard_normal((500, 2))]
    out = diagnose_chain(chains, labels=("alpha", "beta"))
    assert set(out) == {"alpha", "beta"}
    for rec in out.values():
        assert 0.98 <= rec["rhat"] <= 1.05
        assert rec["ess"] > 100
        assert not rec["zero_variance"]
