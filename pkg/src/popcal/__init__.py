"""Likelihood-free Bayesian calibration of population parameter distributions.

Infers the distribution f_theta(x) of heterogeneous model parameters across a
population from (i) the ability to simulate the forward model g(y|x, phi) and
(ii) a finite sample of population data, with full uncertainty quantification
over the hyperparameters theta. Provides BSL-MCMC, ABC-MCMC and adaptive
SMC-ABC engines plus three built-in case-study simulators.
"""

__version__ = "0.1.0"
