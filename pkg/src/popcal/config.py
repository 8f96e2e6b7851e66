"""Experiment configuration: a JSON document resolved into model, family,
prior, summary, discrepancy and engine objects.

The raw dict is kept verbatim on :class:`ExperimentConfig` so runs can echo
it into their output directory; re-running from the echo reproduces the run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from popcal.distributions import (
    CopulaJoint,
    Gaussian1D,
    GaussianMixture1D,
    IndependentProduct,
    ShiftedGamma,
    ShiftedLogNormal,
    sample_population,
)
from popcal.distances import make_discrepancy
from popcal.inference import (
    CalibrationProblem,
    ExponentialPrior,
    GaussianPrior,
    LinearConstraint,
    PilotSpec,
    Prior,
    UniformPrior,
)
from popcal.models import (
    GrowthModel,
    InternalisationModel,
    MixtureDenoiseModel,
    flow_population_distribution,
    register_external_model,
)
from popcal.models.ode import OdeSolverSettings
from popcal.rng import substream
from popcal.summaries import fit_gmm2_em, gmm_score, moment_summary_bivariate

__all__ = [
    "ConfigError",
    "DataError",
    "ExperimentConfig",
    "load_config",
    "build_prior",
    "build_family",
    "build_model",
    "build_summary",
    "build_problem",
    "synthesise_observed",
    "load_dataset",
    "write_dataset",
]


class ConfigError(ValueError):
    """Malformed or unresolvable experiment configuration."""


class DataError(ValueError):
    """Malformed or missing data file."""


def _require(mapping, key, where):
    try:
        return mapping[key]
    except (KeyError, TypeError):
        raise ConfigError(f"missing required field '{key}' in {where}") from None


# ---------------------------------------------------------------------------
# priors


_PRIOR_DISTS = {
    "uniform": lambda s: UniformPrior(float(_require(s, "low", "prior")), float(_require(s, "high", "prior"))),
    "gaussian": lambda s: GaussianPrior(float(_require(s, "mean", "prior")), float(_require(s, "sd", "prior"))),
    "exponential": lambda s: ExponentialPrior(float(s.get("rate", 1.0))),
}


def build_prior(theta_block, phi_block=None):
    """Prior over the concatenated (theta, phi) layout from the config's
    ``theta`` / ``phi`` blocks."""
    labels = list(_require(theta_block, "labels", "theta block"))
    specs = list(_require(theta_block, "priors", "theta block"))
    if phi_block:
        labels += list(phi_block.get("labels", []))
        specs += list(phi_block.get("priors", []))
    if len(labels) != len(specs):
        raise ConfigError(f"{len(labels)} labels but {len(specs)} prior specs")
    components = []
    for spec, label in zip(specs, labels):
        tag = _require(spec, "dist", f"prior for {label}")
        try:
            components.append(_PRIOR_DISTS[tag](spec))
        except KeyError:
            raise ConfigError(f"unknown prior dist {tag!r} for {label}") from None
    constraints = []
    for c in theta_block.get("constraints", []):
        kind, a, b = c
        if kind != "less_than":
            raise ConfigError(f"unknown constraint kind {kind!r}")
        try:
            constraints.append(LinearConstraint.less_than(labels.index(a), labels.index(b), len(labels)))
        except ValueError:
            raise ConfigError(f"constraint references unknown label in {c}") from None
    return Prior(tuple(components), tuple(labels), tuple(constraints))


# ---------------------------------------------------------------------------
# population families: tag -> (theta vector -> distribution)


def _family_gaussian(settings):
    return lambda theta: Gaussian1D(float(theta[0]), float(theta[1]))


def _family_gmm2(settings):
    ordered = bool(settings.get("ordered", False))

    def make(theta):
        mu1, mu2, sd1, sd2, w = (float(v) for v in theta)
        return GaussianMixture1D(mu1, mu2, sd1, sd2, w, ordered=ordered)

    return make


def _family_independent_gaussians(settings):
    dims = int(_require(settings, "dims", "independent_gaussians family"))

    def make(theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != 2 * dims:
            raise ValueError(f"expected {2 * dims} hyperparameters (means then sds)")
        return IndependentProduct(tuple(Gaussian1D(theta[i], theta[dims + i]) for i in range(dims)))

    return make


def _family_shifted_gamma(settings):
    return lambda theta: ShiftedGamma(float(theta[0]), float(theta[1]), float(theta[2]))


def _family_shifted_lognormal(settings):
    unit_mean = bool(settings.get("unit_mean", False))
    return lambda theta: ShiftedLogNormal(float(theta[0]), float(theta[1]), unit_mean=unit_mean)


_FAMILIES = {
    "gaussian": _family_gaussian,
    "gaussian_mixture_2": _family_gmm2,
    "independent_gaussians": _family_independent_gaussians,
    "shifted_gamma": _family_shifted_gamma,
    "shifted_lognormal": _family_shifted_lognormal,
    "flow_copula": lambda settings: flow_population_distribution,
}


def build_family(block):
    tag = _require(block, "tag", "family block")
    try:
        return _FAMILIES[tag](block)
    except KeyError:
        raise ConfigError(f"unknown population family tag {tag!r}") from None


# ---------------------------------------------------------------------------
# forward models


def _solver_settings(block):
    method = block.get("solver", None)
    if method is None:
        return None
    return OdeSolverSettings(
        method=method,
        rtol=float(block.get("rtol", 1e-8)),
        atol=float(block.get("atol", 1e-8)),
    )


def build_model(block):
    tag = _require(block, "tag", "model block")
    if tag == "mixture":
        return MixtureDenoiseModel(noise_sd=float(block.get("noise_sd", 0.045)))
    if tag == "growth":
        kwargs = {
            "ligands": tuple(block.get("ligands", (2.0, 10.0))),
            "t_star": float(block.get("t_star", 10.0)),
            "dp_term": block.get("dp_term", "R"),
        }
        settings = _solver_settings(block)
        if settings is not None:
            kwargs["settings"] = settings
        return GrowthModel(**kwargs)
    if tag == "internalisation":
        kwargs = {"eta": float(block.get("eta", 0.94))}
        if "design" in block:
            kwargs["design"] = tuple((float(t), int(q)) for t, q in block["design"])
        if "autofluorescence_path" in block:
            kwargs["autofluorescence"] = load_dataset(block["autofluorescence_path"])
        settings = _solver_settings(block)
        if settings is not None:
            kwargs["settings"] = settings
        return InternalisationModel(**kwargs)
    if tag == "external":
        return register_external_model(
            _require(block, "command", "external model block"),
            output_dim=int(block.get("output_dim", 1)),
        )
    raise ConfigError(f"unknown model tag {tag!r}")


# ---------------------------------------------------------------------------
# summaries


class Gmm2ScoreSummary:
    """Score summary at a mixture fit frozen from the observed data."""

    def __init__(self, reference):
        self.reference = reference

    def __call__(self, dataset):
        return gmm_score(self.reference, dataset)


def build_summary(block, observed):
    if block is None:
        return None
    tag = _require(block, "tag", "summary block")
    if tag == "gmm2_score":
        seeds = tuple(block.get("fit_seeds", range(5)))
        return Gmm2ScoreSummary(fit_gmm2_em(observed, seeds=seeds))
    if tag == "bivariate_moments":
        return moment_summary_bivariate
    if tag == "mean":
        return lambda dataset: np.atleast_2d(np.asarray(dataset, dtype=float)).mean(axis=0)
    if tag == "identity":
        return lambda dataset: np.asarray(dataset, dtype=float).ravel()
    raise ConfigError(f"unknown summary tag {tag!r}")


def build_discrepancy(block, observed, summary):
    if block is None:
        return None
    kind = _require(block, "kind", "discrepancy block")
    weights = block.get("weights")
    if weights is not None:
        weights = tuple(weights)
    if kind in ("euclidean", "mahalanobis"):
        s = summary(observed)
        target = np.asarray(getattr(s, "values", s), dtype=float)
        return make_discrepancy(kind, target, weights)
    try:
        return make_discrepancy(kind, observed, weights)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# data files


def load_dataset(path):
    """Numeric CSV (optional non-numeric header row) -> 2-D float array."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline()
        skip = 0
        try:
            [float(v) for v in first.strip().split(",")]
        except ValueError:
            skip = 1
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"malformed dataset {path}: {exc}") from exc
    if data.size == 0:
        raise DataError(f"dataset {path} is empty")
    return data


def write_dataset(path, data, header=None):
    data = np.atleast_2d(np.asarray(data, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


# ---------------------------------------------------------------------------
# experiment config


@dataclass
class ExperimentConfig:
    raw: dict
    model: object = field(init=False)
    family: object = field(init=False)
    prior: object = field(init=False)

    def __post_init__(self):
        if not isinstance(self.raw, dict):
            raise ConfigError("experiment config must be a JSON object")
        self.model = build_model(_require(self.raw, "model", "config"))
        self.family = build_family(_require(self.raw, "family", "config"))
        self.prior = build_prior(_require(self.raw, "theta", "config"), self.raw.get("phi"))
        obs = _require(self.raw, "observed", "config")
        if ("path" in obs) == ("synthetic" in obs):
            raise ConfigError("observed block needs exactly one of 'path' / 'synthetic'")
        eng = _require(self.raw, "engine", "config")
        if _require(eng, "tag", "engine block") not in ("bsl_mcmc", "abc_mcmc", "smc_abc", "hybrid"):
            raise ConfigError(f"unknown engine tag {eng['tag']!r}")

    @property
    def seed(self):
        return int(self.raw.get("seed", 0))

    @property
    def thinning(self):
        return int(self.raw.get("thinning", 1))

    @property
    def theta_labels(self):
        return tuple(self.raw["theta"]["labels"])

    @property
    def phi_labels(self):
        return tuple(self.raw.get("phi", {}).get("labels", ()))

    @property
    def engine(self):
        return self.raw["engine"]

    def to_json(self):
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig(raw)


def synthesise_observed(cfg, seed=None):
    """Synthetic observed dataset from the config's truth block."""
    block = cfg.raw["observed"]["synthetic"]
    theta_star = np.asarray(_require(block, "theta_star", "synthetic block"), dtype=float)
    phi_star = np.asarray(block.get("phi_star", []), dtype=float)
    n = int(_require(block, "n", "synthetic block"))
    data_seed = int(block.get("seed", 0)) if seed is None else int(seed)
    rng = substream(data_seed, 424_242)
    per_obs = getattr(cfg.model, "draws_per_observation", 1)
    dist = cfg.family(theta_star)
    x = sample_population(dist, n * per_obs, rng)
    return cfg.model.simulate(x, phi_star, rng)


def get_observed(cfg):
    obs = cfg.raw["observed"]
    if "path" in obs:
        return load_dataset(obs["path"])
    return np.atleast_2d(np.asarray(synthesise_observed(cfg)))


def build_problem(cfg, observed=None):
    """Resolve the config into a ready-to-sample CalibrationProblem."""
    if observed is None:
        observed = get_observed(cfg)
    observed = np.atleast_2d(np.asarray(observed, dtype=float))
    n_sim = int(cfg.raw.get("n_sim", observed.shape[0]))
    summary = build_summary(cfg.raw.get("summary"), observed)
    discrepancy = build_discrepancy(cfg.raw.get("discrepancy"), observed, summary)
    return CalibrationProblem(
        population=cfg.family,
        model=cfg.model,
        n_sim=n_sim,
        observed=observed,
        theta_labels=cfg.theta_labels,
        phi_labels=cfg.phi_labels,
        summary=summary,
        discrepancy=discrepancy,
    )


def build_pilot(block):
    block = block or {}
    return PilotSpec(
        n_chains=int(block.get("n_chains", 2)),
        iters=int(block.get("iters", 500)),
        m=int(block.get("m", 50)),
        initial_step=block.get("initial_step"),
        burn_fraction=float(block.get("burn_fraction", 0.2)),
    )
