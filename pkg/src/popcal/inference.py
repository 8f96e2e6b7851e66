"""Likelihood-free posterior samplers over hyperparameters (theta, phi).

Provides synthetic-likelihood estimation, BSL-MCMC, ABC-MCMC, adaptive
SMC-ABC, the hybrid SMC -> MCMC-ABC pipeline, and pilot-run proposal
adaptation. All samplers draw every unit of work from its own deterministic
substream (run seed, iteration, replicate), so chains are bit-identical
regardless of scheduling or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from popcal.distributions import DistributionError, TruncationError, sample_population
from popcal.models.ode import SimulatorFailure
from popcal.rng import substream

__all__ = [
    "UniformPrior",
    "GaussianPrior",
    "ExponentialPrior",
    "LinearConstraint",
    "Prior",
    "CalibrationProblem",
    "PosteriorChain",
    "ParticlePopulation",
    "PilotSpec",
    "simulate_mock_population",
    "estimate_synthetic_loglik",
    "bsl_mcmc",
    "abc_mcmc",
    "smc_abc_adaptive",
    "hybrid_smc_then_mcmc",
    "pilot_adapt_proposal",
]

BURN_IN_FRACTION = 0.2


@dataclass(frozen=True)
class UniformPrior:
    low: float
    high: float

    def log_density(self, x):
        return -math.log(self.high - self.low) if self.low <= x <= self.high else -math.inf

    def sample(self, rng):
        return rng.uniform(self.low, self.high)

    def moments(self):
        return 0.5 * (self.low + self.high), (self.high - self.low) ** 2 / 12.0


@dataclass(frozen=True)
class GaussianPrior:
    mean: float
    sd: float

    def log_density(self, x):
        return -0.5 * ((x - self.mean) / self.sd) ** 2 - math.log(self.sd) - 0.5 * math.log(2 * math.pi)

    def sample(self, rng):
        return self.mean + self.sd * rng.standard_normal()

    def moments(self):
        return self.mean, self.sd**2


@dataclass(frozen=True)
class ExponentialPrior:
    rate: float = 1.0

    def log_density(self, x):
        return math.log(self.rate) - self.rate * x if x >= 0 else -math.inf

    def sample(self, rng):
        return rng.exponential(1.0 / self.rate)

    def moments(self):
        return 1.0 / self.rate, 1.0 / self.rate**2


@dataclass(frozen=True)
class LinearConstraint:
    """coefs . x < bound (strict)."""

    coefs: tuple
    bound: float = 0.0

    @classmethod
    def less_than(cls, i, j, dim):
        """x[i] < x[j]"""
        c = [0.0] * dim
        c[i], c[j] = 1.0, -1.0
        return cls(tuple(c), 0.0)

    def satisfied(self, x):
        return float(np.dot(self.coefs, x)) < self.bound


@dataclass(frozen=True)
class Prior:
    """Independent per-hyperparameter 1-D priors plus optional strict linear
    inequality constraints."""

    components: tuple
    labels: tuple
    constraints: tuple = ()

    def __post_init__(self):
        if len(self.components) != len(self.labels):
            raise ValueError("prior needs one label per component")
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "constraints", tuple(self.constraints))

    @property
    def dim(self):
        return len(self.components)

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        if any(not c.satisfied(x) for c in self.constraints):
            return -math.inf
        total = 0.0
        for xi, comp in zip(x, self.components):
            lp = comp.log_density(float(xi))
            if lp == -math.inf:
                return -math.inf
            total += lp
        return total

    def sample(self, rng, max_tries=10_000):
        for _ in range(max_tries):
            x = np.array([c.sample(rng) for c in self.components])
            if all(c.satisfied(x) for c in self.constraints):
                return x
        raise RuntimeError("prior constraint rejection cap exceeded")


@dataclass
class CalibrationProblem:
    """Everything a sampler needs: the population family over model
    parameters, the forward model, dataset size, and the data comparison.

    ``population`` maps a theta vector to a sampleable distribution;
    ``summary`` (for BSL / summary-based ABC) maps a dataset to a summary
    value vector; ``discrepancy`` (for ABC) is bound to the observed data.
    """

    population: object
    model: object
    n_sim: int
    observed: np.ndarray
    theta_labels: tuple
    phi_labels: tuple = ()
    summary: object = None
    discrepancy: object = None

    def __post_init__(self):
        self.observed = np.asarray(self.observed, dtype=float)
        self.theta_labels = tuple(self.theta_labels)
        self.phi_labels = tuple(self.phi_labels)
        if self.n_sim < 1:
            raise ValueError("n_sim must be >= 1")
        if set(self.theta_labels) & set(self.phi_labels):
            raise ValueError("theta and phi layouts must be disjoint")

    @property
    def labels(self):
        return self.theta_labels + self.phi_labels

    @property
    def dim(self):
        return len(self.labels)

    def split(self, params):
        k = len(self.theta_labels)
        params = np.asarray(params, dtype=float)
        return params[:k], params[k:]

    def observed_summary(self):
        s = self.summary(self.observed)
        return np.asarray(getattr(s, "values", s), dtype=float)

    def summarise(self, dataset):
        s = self.summary(dataset)
        return np.asarray(getattr(s, "values", s), dtype=float)


def simulate_mock_population(problem, theta, phi, rng):
    """One mock dataset: n_sim parameter draws from f_theta pushed through
    the model. Simulation problems (truncation cap, ODE blow-up, invalid
    family parameters) surface as :class:`SimulatorFailure`."""
    try:
        dist = problem.population(theta)
        per_obs = getattr(problem.model, "draws_per_observation", 1)
        x = sample_population(dist, problem.n_sim * per_obs, rng)
        return problem.model.simulate(x, phi, rng)
    except SimulatorFailure:
        raise
    except (DistributionError, TruncationError, FloatingPointError, ValueError) as exc:
        raise SimulatorFailure(f"mock population simulation failed: {exc}") from exc


def _sim_discrepancy(problem, params, rng):
    theta, phi = problem.split(params)
    try:
        z = simulate_mock_population(problem, theta, phi, rng)
        if problem.summary is not None and problem.discrepancy is not None:
            return problem.discrepancy(problem.summarise(z))
        return problem.discrepancy(z)
    except (SimulatorFailure, ValueError, FloatingPointError):
        # overflow-scale model output breaking the summary counts as a
        # failed simulation, same as an ODE blow-up
        return math.inf


def estimate_synthetic_loglik(s_obs, s_sims):
    """Gaussian synthetic log-likelihood of the observed summary under the
    sample mean and unbiased sample covariance of ``m`` simulated summaries.

    A non-positive-definite covariance yields -inf (the proposal is
    effectively rejected).
    """
    s_obs = np.asarray(getattr(s_obs, "values", s_obs), dtype=float)
    s_sims = np.asarray(s_sims, dtype=float)
    m, d = s_sims.shape
    if m < d + 2:
        raise ValueError(f"need m >= d + 2 simulations (m={m}, d={d})")
    if not np.all(np.isfinite(s_sims)):
        return -math.inf
    mu = s_sims.mean(axis=0)
    cov = np.cov(s_sims.T, ddof=1).reshape(d, d)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return -math.inf
    u = np.linalg.solve(chol, s_obs - mu)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    out = float(-0.5 * (d * math.log(2 * math.pi) + logdet + np.dot(u, u)))
    return out if math.isfinite(out) else -math.inf


@dataclass
class PosteriorChain:
    """Retained states of one MCMC run; ``stat`` holds the estimated log
    synthetic likelihood (BSL) or the current accepted discrepancy (ABC)."""

    labels: tuple
    params: np.ndarray
    stat: np.ndarray
    accepted: np.ndarray
    acceptance_rate: float
    seed: int
    thinning: int = 1
    kind: str = "bsl"
    tuned_cov: object = None  # end-of-run proposal covariance of adaptive pilots

    def __len__(self):
        return self.params.shape[0]

    def burned(self, fraction=BURN_IN_FRACTION):
        start = int(len(self) * fraction)
        return self.params[start:]


@dataclass
class ParticlePopulation:
    labels: tuple
    params: np.ndarray
    discrepancies: np.ndarray
    epsilon: float
    epsilon_history: list = field(default_factory=list)
    acceptance_history: list = field(default_factory=list)
    seed: int = 0

    @property
    def best_index(self):
        return int(np.argmin(self.discrepancies))


def _estimate_loglik_at(problem, params, m, seed, iteration, s_obs, threads=1):
    """Synthetic log-likelihood from m replicate simulations, each on its own
    (seed, iteration, replicate) substream."""
    theta, phi = problem.split(params)

    def one(r):
        try:
            z = simulate_mock_population(problem, theta, phi, substream(seed, iteration, r))
            return problem.summarise(z)
        except (SimulatorFailure, ValueError, FloatingPointError):
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sims = list(pool.map(one, range(m)))
    else:
        sims = [one(r) for r in range(m)]
    if any(s is None for s in sims):
        return -math.inf
    return estimate_synthetic_loglik(s_obs, np.vstack(sims))


def bsl_mcmc(problem, prior, init, proposal_cov, iters, m, seed, thinning=1, threads=1):
    """Random-walk Metropolis with the estimated synthetic likelihood.

    The current state's log-likelihood estimate is retained between
    iterations, not re-estimated.
    """
    if iters < 0:
        raise ValueError("iters must be >= 0")
    init = np.asarray(init, dtype=float)
    lp_cur = prior.log_density(init)
    if lp_cur == -math.inf:
        raise ValueError("initial state has zero prior density")
    s_obs = problem.observed_summary()
    chol = np.linalg.cholesky(np.atleast_2d(np.asarray(proposal_cov, dtype=float)))
    chain_rng = substream(seed, 0)
    cur = init.copy()
    ll_cur = _estimate_loglik_at(problem, cur, m, seed, 0, s_obs, threads)

    records, stats, acc_flags = [cur.copy()], [ll_cur], [False]
    n_accept = 0
    for it in range(1, iters + 1):
        prop = cur + chol @ chain_rng.standard_normal(cur.size)
        lp_prop = prior.log_density(prop)
        accepted = False
        if lp_prop > -math.inf:
            ll_prop = _estimate_loglik_at(problem, prop, m, seed, it, s_obs, threads)
            if ll_prop > -math.inf:
                log_alpha = (ll_prop + lp_prop) - (ll_cur + lp_cur)
                if math.log(chain_rng.random()) < log_alpha:
                    cur, ll_cur, lp_cur = prop, ll_prop, lp_prop
                    accepted = True
        else:
            chain_rng.random()  # keep the accept-draw schedule aligned
        n_accept += accepted
        if it % thinning == 0:
            records.append(cur.copy())
            stats.append(ll_cur)
            acc_flags.append(accepted)
    return PosteriorChain(
        labels=problem.labels,
        params=np.vstack(records),
        stat=np.array(stats),
        accepted=np.array(acc_flags),
        acceptance_rate=n_accept / iters if iters else 0.0,
        seed=seed,
        thinning=thinning,
        kind="bsl",
    )


def abc_mcmc(problem, prior, init, proposal_cov, epsilon, iters, seed, thinning=1, init_discrepancy=None):
    """ABC-MCMC: accept iff the prior-ratio Metropolis draw passes and the
    proposal's single mock dataset lands within tolerance."""
    if epsilon <= 0:
        raise ValueError("tolerance must be positive")
    init = np.asarray(init, dtype=float)
    lp_cur = prior.log_density(init)
    if lp_cur == -math.inf:
        raise ValueError("initial state has zero prior density")
    disc_cur = init_discrepancy if init_discrepancy is not None else _sim_discrepancy(problem, init, substream(seed, 0, 0))
    if disc_cur > epsilon:
        raise ValueError(f"initial discrepancy {disc_cur:.6g} exceeds tolerance {epsilon:.6g}")
    chol = np.linalg.cholesky(np.atleast_2d(np.asarray(proposal_cov, dtype=float)))
    chain_rng = substream(seed, 0)
    cur = init.copy()

    records, stats, acc_flags = [cur.copy()], [disc_cur], [False]
    n_accept = 0
    for it in range(1, iters + 1):
        prop = cur + chol @ chain_rng.standard_normal(cur.size)
        lp_prop = prior.log_density(prop)
        u = chain_rng.random()
        accepted = False
        if lp_prop > -math.inf and math.log(u) < lp_prop - lp_cur:
            disc_prop = _sim_discrepancy(problem, prop, substream(seed, it, 0))
            if disc_prop < epsilon:
                cur, lp_cur, disc_cur = prop, lp_prop, disc_prop
                accepted = True
        n_accept += accepted
        if it % thinning == 0:
            records.append(cur.copy())
            stats.append(disc_cur)
            acc_flags.append(accepted)
    return PosteriorChain(
        labels=problem.labels,
        params=np.vstack(records),
        stat=np.array(stats),
        accepted=np.array(acc_flags),
        acceptance_rate=n_accept / iters if iters else 0.0,
        seed=seed,
        thinning=thinning,
        kind="abc",
    )


def smc_abc_adaptive(
    problem,
    prior,
    n_particles,
    seed,
    alpha=0.5,
    stop_acceptance=0.01,
    initial_moves=5,
    max_rounds=200,
    max_moves=100,
):
    """Adaptive SMC-ABC with uniform resampling and tuned MCMC move kernels.

    Each round drops the worst ``alpha`` fraction of particles, sets the
    tolerance to the surviving maximum, refills by uniform resampling, and
    applies R_t Metropolis moves per refilled particle with a Gaussian kernel
    at twice the survivor covariance; R_t = ceil(log(0.01)/log(1 - p_acc))
    from the previous round's move acceptance. Stops when the move
    acceptance drops below ``stop_acceptance``.
    """
    if n_particles < 50:
        raise ValueError("need at least 50 particles")
    if not 0.0 < alpha < 1.0:
        raise ValueError("drop fraction must lie in (0, 1)")
    dim = prior.dim
    params = np.empty((n_particles, dim))
    discs = np.empty(n_particles)
    for i in range(n_particles):
        rng = substream(seed, 0, i)
        params[i] = prior.sample(rng)
        discs[i] = _sim_discrepancy(problem, params[i], rng)
    if not np.any(np.isfinite(discs)):
        raise RuntimeError("every initial particle failed to simulate")

    eps_history, acc_history = [], []
    n_drop = int(math.ceil(alpha * n_particles))
    n_keep = n_particles - n_drop
    moves = initial_moves
    epsilon = math.inf
    for t in range(1, max_rounds + 1):
        order = np.argsort(discs, kind="stable")
        params, discs = params[order], discs[order]
        eps_t = float(discs[n_keep - 1])
        if not eps_t < epsilon:
            break
        epsilon = eps_t
        eps_history.append(epsilon)
        round_rng = substream(seed, t, 0)
        refill = round_rng.integers(0, n_keep, size=n_drop)
        params[n_keep:] = params[refill]
        discs[n_keep:] = discs[refill]
        cov = 2.0 * np.cov(params[:n_keep].T, ddof=1).reshape(dim, dim)
        cov += 1e-12 * (np.trace(cov) + 1e-300) * np.eye(dim)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            break
        n_prop = 0
        n_acc = 0
        for i in range(n_keep, n_particles):
            move_rng = substream(seed, t, 1 + i)
            for _ in range(moves):
                prop = params[i] + chol @ move_rng.standard_normal(dim)
                lp_prop = prior.log_density(prop)
                lp_cur = prior.log_density(params[i])
                n_prop += 1
                u = move_rng.random()
                if lp_prop > -math.inf and math.log(u) < lp_prop - lp_cur:
                    disc = _sim_discrepancy(problem, prop, move_rng)
                    if disc <= epsilon:
                        params[i] = prop
                        discs[i] = disc
                        n_acc += 1
        p_acc = n_acc / n_prop if n_prop else 0.0
        acc_history.append(p_acc)
        if p_acc < stop_acceptance:
            break
        moves = min(max_moves, max(1, int(math.ceil(math.log(0.01) / math.log(1.0 - min(p_acc, 1.0 - 1e-12))))))
    return ParticlePopulation(
        labels=problem.labels,
        params=params,
        discrepancies=discs,
        epsilon=epsilon if eps_history else float(np.max(discs)),
        epsilon_history=eps_history,
        acceptance_history=acc_history,
        seed=seed,
    )


def hybrid_smc_then_mcmc(problem, prior, smc_settings, mcmc_settings, seed, k_tolerance=200):
    """SMC-ABC to locate the posterior region, then MCMC-ABC from the best
    particle at the tolerance giving ~50% acceptance there (the empirical
    median discrepancy of ``k_tolerance`` fresh mock datasets)."""
    pop = smc_abc_adaptive(problem, prior, seed=seed, **smc_settings)
    mcmc_settings = dict(mcmc_settings)
    if "proposal_cov" not in mcmc_settings:
        dim = pop.params.shape[1]
        cov = (2.38**2 / dim) * np.cov(pop.params.T, ddof=1).reshape(dim, dim)
        mcmc_settings["proposal_cov"] = cov + 1e-8 * np.trace(cov) * np.eye(dim)
    best = pop.params[pop.best_index]
    best_disc = float(pop.discrepancies[pop.best_index])
    sims = np.array([_sim_discrepancy(problem, best, substream(seed, 1_000_000, r)) for r in range(k_tolerance)])
    finite = sims[np.isfinite(sims)]
    if finite.size == 0:
        raise RuntimeError("tolerance calibration failed: all simulations at the best particle failed")
    eps_star = float(np.quantile(finite, 0.5))
    init_disc = min(best_disc, float(finite.min()))
    chain = abc_mcmc(
        problem,
        prior,
        best,
        epsilon=eps_star,
        seed=seed + 1,
        init_discrepancy=init_disc,
        **mcmc_settings,
    )
    return chain, pop, eps_star


@dataclass(frozen=True)
class PilotSpec:
    """Settings for short pilot BSL chains used to adapt the proposal."""

    n_chains: int = 2
    iters: int = 2000
    m: int = 50
    initial_step: object = None  # starting proposal covariance
    burn_fraction: float = BURN_IN_FRACTION

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("need at least one pilot chain")


def _adaptive_bsl_chain(problem, prior, init, step0, iters, m, seed):
    """Adaptive-Metropolis BSL pilot: the proposal covariance tracks the
    running covariance of the chain and a global scale chases 23.4%
    acceptance with a diminishing step size. Returns a PosteriorChain.

    Flat (unidentified) directions inflate automatically — the chain wanders
    in them — while identified directions contract to the posterior scale.
    """
    init = np.asarray(init, dtype=float)
    dim = init.size
    lp_cur = prior.log_density(init)
    if lp_cur == -math.inf:
        raise ValueError("initial state has zero prior density")
    s_obs = problem.observed_summary()
    chain_rng = substream(seed, 0)
    cur = init.copy()
    ll_cur = _estimate_loglik_at(problem, cur, m, seed, 0, s_obs)
    run_mean = cur.copy()
    run_cov = np.atleast_2d(np.asarray(step0, dtype=float)).copy()
    # covariance floor: during a rejection streak the running covariance
    # decays faster than the scale recovers and the proposal would implode
    # to a point; a small fixed floor lets the chain climb back out
    floor = 1e-6 * np.diag(np.diag(run_cov))
    log_scale = 0.0
    records, stats, acc_flags = [cur.copy()], [ll_cur], [False]
    n_accept = 0
    for it in range(1, iters + 1):
        if it % 100 == 0:
            # pilot-only robustness: a luckily high estimate in a region
            # where fresh simulations always fail would trap the retained
            # log-likelihood forever; refresh it periodically
            ll_cur = _estimate_loglik_at(problem, cur, m, seed, 10_000_000 + it, s_obs)
        cov = math.exp(log_scale) * (2.38**2 / dim) * run_cov + floor
        cov = cov + 1e-10 * (np.trace(cov) + 1e-300) * np.eye(dim)
        chol = np.linalg.cholesky(cov)
        prop = cur + chol @ chain_rng.standard_normal(dim)
        lp_prop = prior.log_density(prop)
        accepted = False
        alpha = 0.0
        if lp_prop > -math.inf:
            ll_prop = _estimate_loglik_at(problem, prop, m, seed, it, s_obs)
            if ll_prop > -math.inf:
                log_alpha = (ll_prop + lp_prop) - (ll_cur + lp_cur)
                alpha = min(1.0, math.exp(min(log_alpha, 0.0)))
                if math.log(chain_rng.random()) < log_alpha:
                    cur, ll_cur, lp_cur = prop, ll_prop, lp_prop
                    accepted = True
            else:
                chain_rng.random()
        else:
            chain_rng.random()
        n_accept += accepted
        # diminishing-adaptation updates
        gamma = 1.0 / (20.0 + it) ** 0.6
        log_scale += gamma * (alpha - 0.234)
        delta = cur - run_mean
        run_mean = run_mean + gamma * delta
        run_cov = run_cov + gamma * (np.outer(delta, delta) - run_cov)
        records.append(cur.copy())
        stats.append(ll_cur)
        acc_flags.append(accepted)
    tuned = math.exp(log_scale) * (2.38**2 / dim) * run_cov
    tuned = tuned + 1e-10 * (np.trace(tuned) + 1e-300) * np.eye(dim)
    return PosteriorChain(
        labels=problem.labels,
        params=np.vstack(records),
        stat=np.array(stats),
        accepted=np.array(acc_flags),
        acceptance_rate=n_accept / iters if iters else 0.0,
        seed=seed,
        kind="bsl_pilot",
        tuned_cov=tuned,
    )


def run_pilot_chains(problem, prior, pilot, seed, inits=None):
    """The adaptive BSL pilot chains behind proposal tuning, returned whole
    so callers can also pick a starting state.

    ``inits`` optionally fixes the starting state of each chain (recycled if
    shorter than ``pilot.n_chains``); by default each chain starts from the
    best of a handful of prior draws so no pilot wastes its whole budget
    escaping a simulator-failure region.
    """
    if pilot.initial_step is None:
        step0 = np.diag([max(c.moments()[1], 1e-12) * 0.01 for c in prior.components])
    else:
        step0 = np.atleast_2d(np.asarray(pilot.initial_step, dtype=float))
    if inits is None:
        n_cand = max(8 * pilot.n_chains, 16)
        s_obs = problem.observed_summary()
        cands = [prior.sample(substream(seed, 900_000, c)) for c in range(n_cand)]
        lls = [_estimate_loglik_at(problem, cand, pilot.m, seed, 950_000 + j, s_obs) for j, cand in enumerate(cands)]
        order = np.argsort(lls, kind="stable")[::-1]
        inits = [cands[int(order[c % n_cand])] for c in range(pilot.n_chains)]
    else:
        inits = [np.asarray(v, dtype=float) for v in inits]
    chains = []
    for c in range(pilot.n_chains):
        init = inits[c % len(inits)]
        chains.append(_adaptive_bsl_chain(problem, prior, init, step0, pilot.iters, pilot.m, seed + 7_000 + c))
    return chains


def inflate_flat_directions(problem, prior, theta, cov, seed, m=100, shift=0.5,
                            threshold=3.0, target=0.25):
    """Widen proposal coordinates the likelihood is insensitive to.

    Adaptive pilots tune each proposal scale to the local posterior spread,
    which under-disperses coordinates whose posterior is essentially the
    prior: the pilot never diffuses across the prior range, so the tuned
    scale stays far too small for the main run to do so either.  Probe each
    coordinate at ``theta`` with a +/- ``shift``-prior-sd nudge, sharing
    simulation substreams across the probes so noise cancels; coordinates
    whose log-likelihood moves by less than ``threshold`` are treated as
    flat and get an independent proposal variance of
    ``(target * prior sd)^2`` instead of the tuned one.
    """
    cov = np.array(cov, dtype=float)
    theta = np.asarray(theta, dtype=float)
    prior_sd = np.sqrt([max(c.moments()[1], 0.0) for c in prior.components])
    s_obs = problem.observed_summary()
    base = _estimate_loglik_at(problem, theta, m, seed, 600_000, s_obs)
    for i in range(prior.dim):
        sensitive = not math.isfinite(base)
        for sign in (1.0, -1.0):
            if sensitive:
                break
            probe = theta.copy()
            step = sign * shift * prior_sd[i]
            # back off until the probe point stays inside the prior support
            for _ in range(8):
                probe[i] = theta[i] + step
                if math.isfinite(prior.log_density(probe)):
                    break
                step *= 0.5
            else:
                continue
            ll = _estimate_loglik_at(problem, probe, m, seed, 600_000, s_obs)
            if not math.isfinite(ll) or abs(ll - base) > threshold:
                sensitive = True
        if not sensitive:
            cov[i, :] = 0.0
            cov[:, i] = 0.0
            cov[i, i] = (target * prior_sd[i]) ** 2
    return cov


def pilot_adapt_proposal(problem, prior, pilot, seed, states=None):
    """Proposal covariance (2.38^2/dim) * cov(pooled post-burn-in pilot
    states), regularised by 1e-8 * trace * identity.

    ``states`` may supply pre-computed pilot states directly (a pooled array
    or a list of per-chain arrays); otherwise ``pilot.n_chains`` adaptive
    pilot chains are run from prior draws.
    """
    dim = prior.dim
    if states is None:
        chains = run_pilot_chains(problem, prior, pilot, seed)
        states = [c.burned(pilot.burn_fraction) for c in chains]
    if not isinstance(states, np.ndarray):
        states = np.vstack([np.atleast_2d(np.asarray(block, dtype=float)) for block in states])
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[1] != dim:
        states = states.reshape(-1, dim)
    if np.allclose(states, states[0]):
        raise RuntimeError("pilot states are all identical; increase the pilot step size")
    cov = np.cov(states.T, ddof=1).reshape(dim, dim)
    cov = (2.38**2 / dim) * cov
    cov += 1e-8 * np.trace(cov) * np.eye(dim)
    return cov
