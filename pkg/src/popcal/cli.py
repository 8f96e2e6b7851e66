"""Command-line entry points.

Subcommands: ``simulate`` (synthetic dataset from a truth block),
``calibrate`` (full seeded run with artifacts), ``bands`` (recompute band
tables from an existing chain), ``diagnose`` (chain diagnostics),
``distance`` (discrepancy between two CSV datasets).

Exit codes: 0 success, 2 config error, 3 data error, 4 sampler failure,
5 diagnostic failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from popcal.bands import PredictiveFailure, posterior_density_bands, posterior_predictive_check
from popcal.config import (
    ConfigError,
    DataError,
    build_pilot,
    build_problem,
    get_observed,
    load_config,
    load_dataset,
    synthesise_observed,
    write_dataset,
)
from popcal.diagnostics import diagnose_chain
from popcal.distances import FLOW_COLUMNS, make_discrepancy
from popcal.inference import (
    PosteriorChain,
    abc_mcmc,
    bsl_mcmc,
    hybrid_smc_then_mcmc,
    pilot_adapt_proposal,
    run_pilot_chains,
    smc_abc_adaptive,
)
from popcal.plots import write_band_svg, write_panel_svg
from popcal.rng import substream
from popcal.summaries import GMMCollapseError, fit_gmm2_em, gaussian_kde, silverman_bandwidth

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SAMPLER = 4
EXIT_DIAGNOSTIC = 5

FLOAT_FMT = "%.17g"


class SamplerFailure(RuntimeError):
    pass


class DiagnosticFailure(RuntimeError):
    pass


def _say(quiet, msg):
    if not quiet:
        print(msg)


# ---------------------------------------------------------------------------
# chain CSV I/O


def write_chain_csv(path, chain):
    header = ",".join(chain.labels + ("loglik_or_disc", "accepted"))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row, s, a in zip(chain.params, chain.stat, chain.accepted):
            cells = [FLOAT_FMT % v for v in row] + [FLOAT_FMT % s, str(int(a))]
            fh.write(",".join(cells) + "\n")


def read_chain_csv(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise DataError(f"cannot read chain {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"malformed chain {path}: {exc}") from exc
    if len(header) < 3 or header[-2:] != ["loglik_or_disc", "accepted"]:
        raise DataError(f"chain {path} lacks the expected header")
    return PosteriorChain(
        labels=tuple(header[:-2]),
        params=data[:, :-2],
        stat=data[:, -2],
        accepted=data[:, -1].astype(bool),
        acceptance_rate=float(np.mean(data[1:, -1])) if data.shape[0] > 1 else 0.0,
        seed=0,
    )


# ---------------------------------------------------------------------------
# engine dispatch


def _resolve_init_and_proposal(cfg, problem, prior, threads):
    """Starting state and proposal covariance for the MCMC engines."""
    eng = cfg.engine
    prop_block = eng.get("proposal", {"kind": "pilot"})
    init_spec = eng.get("init", "prior_draw")
    need_pilot = prop_block.get("kind", "pilot") == "pilot" or init_spec == "pilot_best"
    pilot_chains = None
    if need_pilot:
        pilot = build_pilot(prop_block.get("pilot") or eng.get("pilot"))
        pilot_chains = run_pilot_chains(problem, prior, pilot, cfg.seed)

    kind = prop_block.get("kind", "pilot")
    if kind == "pilot":
        # the end-of-pilot tuned covariance of the best-scoring chain; a
        # stuck or wandering sibling chain cannot poison it
        meds = [np.median(c.stat[len(c.stat) // 2 :]) for c in pilot_chains]
        cov = pilot_chains[int(np.argmax(meds))].tuned_cov
    elif kind == "diag":
        cov = np.diag(np.asarray(prop_block["values"], dtype=float))
    elif kind == "matrix":
        cov = np.asarray(prop_block["values"], dtype=float)
    else:
        raise ConfigError(f"unknown proposal kind {kind!r}")

    if isinstance(init_spec, (list, tuple)):
        init = np.asarray(init_spec, dtype=float)
    elif init_spec == "prior_draw":
        init = prior.sample(substream(cfg.seed, 800_000))
    elif init_spec == "pilot_best":
        flat_params = np.vstack([c.params for c in pilot_chains])
        flat_stat = np.concatenate([c.stat for c in pilot_chains])
        init = flat_params[int(np.argmax(flat_stat))]
    elif init_spec == "data_gmm":
        init = _data_gmm_init(cfg, problem)
    else:
        raise ConfigError(f"unknown init spec {init_spec!r}")
    if init.size != prior.dim:
        raise ConfigError(f"init has {init.size} values; layout needs {prior.dim}")
    return init, cov


def _data_gmm_init(cfg, problem):
    """Mixture-model start: fit the observed data's two-component mixture and
    deflate the component variances by the known measurement noise."""
    noise_sd = getattr(cfg.model, "noise_sd", None)
    if noise_sd is None:
        raise ConfigError("init 'data_gmm' is only available for the mixture model")
    ref = fit_gmm2_em(problem.observed, seeds=range(5))
    sd1 = np.sqrt(max(ref.sd1**2 - noise_sd**2, 1e-6))
    sd2 = np.sqrt(max(ref.sd2**2 - noise_sd**2, 1e-6))
    return np.array([ref.mu1, ref.mu2, sd1, sd2, ref.weight])


def run_engine(cfg, problem, prior, threads, quiet):
    """Dispatch on the engine tag; returns (chain, extras dict for the log)."""
    eng = dict(cfg.engine)
    tag = eng["tag"]
    extras = {}
    if tag in ("bsl_mcmc", "abc_mcmc"):
        init, cov = _resolve_init_and_proposal(cfg, problem, prior, threads)
        iters = int(eng.get("iters", 10_000))
        if tag == "bsl_mcmc":
            chain = bsl_mcmc(
                problem, prior, init, cov, iters, m=int(eng.get("m", 50)),
                seed=cfg.seed, thinning=cfg.thinning, threads=threads,
            )
        else:
            chain = abc_mcmc(
                problem, prior, init, cov, epsilon=float(eng["epsilon"]),
                iters=iters, seed=cfg.seed, thinning=cfg.thinning,
            )
        return chain, extras
    if tag == "smc_abc":
        pop = smc_abc_adaptive(
            problem, prior,
            n_particles=int(eng.get("n_particles", 500)),
            seed=cfg.seed,
            alpha=float(eng.get("alpha", 0.5)),
            stop_acceptance=float(eng.get("stop_acceptance", 0.01)),
        )
        chain = PosteriorChain(
            labels=pop.labels, params=pop.params, stat=pop.discrepancies,
            accepted=np.ones(len(pop.discrepancies), dtype=bool),
            acceptance_rate=pop.acceptance_history[-1] if pop.acceptance_history else 0.0,
            seed=cfg.seed, kind="smc",
        )
        extras["epsilon_history"] = pop.epsilon_history
        extras["final_epsilon"] = pop.epsilon
        return chain, extras
    if tag == "hybrid":
        smc_settings = dict(eng.get("smc", {}))
        smc_settings.setdefault("n_particles", 500)
        mcmc_settings = {
            "iters": int(eng.get("iters", 10_000)),
            "thinning": cfg.thinning,
        }
        if "proposal" in eng and eng["proposal"].get("kind") == "matrix":
            mcmc_settings["proposal_cov"] = np.asarray(eng["proposal"]["values"], dtype=float)
        chain, pop, eps_star = hybrid_smc_then_mcmc(
            problem, prior, smc_settings, mcmc_settings, seed=cfg.seed,
            k_tolerance=int(eng.get("k_tolerance", 200)),
        )
        extras["epsilon_history"] = pop.epsilon_history
        extras["tolerance"] = eps_star
        return chain, extras
    raise ConfigError(f"unknown engine tag {tag!r}")


# ---------------------------------------------------------------------------
# band artifacts


def _thin(arr, k):
    if arr.shape[0] <= k:
        return arr
    idx = np.unique(np.linspace(0, arr.shape[0] - 1, k).round().astype(int))
    return arr[idx]


def _auto_grid(samples, points=101):
    lo, hi = float(np.min(samples)), float(np.max(samples))
    pad = 0.1 * (hi - lo or 1.0)
    return np.linspace(lo - pad, hi + pad, points)


def _coordinate_grid(cfg, problem, index, thetas):
    block = cfg.raw.get("bands", {})
    spec = block.get("grid")
    if isinstance(spec, dict):
        spec = spec.get(str(index))
    if spec is not None:
        lo, hi, n = spec
        return np.linspace(float(lo), float(hi), int(n))
    draws = problem.population(np.median(thetas, axis=0)).sample(1000, substream(cfg.seed, 700_000, index))
    draws = np.asarray(draws, dtype=float)
    col = draws[:, index] if draws.ndim == 2 else draws
    return _auto_grid(col)


def _marginal_truth(cfg, family, index, grid):
    obs = cfg.raw.get("observed", {})
    if "synthetic" not in obs:
        return None
    theta_star = np.asarray(obs["synthetic"]["theta_star"], dtype=float)
    dist = family(theta_star)
    marginals = getattr(dist, "marginals", None)
    target = marginals[index] if marginals is not None else dist
    with np.errstate(over="ignore"):
        return np.exp(target.log_density(grid))


def _write_band_csv(path, table):
    cols = ["grid", "lower", "median", "upper"]
    data = [table.grid, table.lower, table.median, table.upper]
    if table.truth is not None:
        cols.append("truth")
        data.append(table.truth)
    if table.observed is not None:
        cols.append("observed")
        data.append(table.observed)
    write_dataset(path, np.column_stack(data), header=cols)


def emit_band_artifacts(cfg, problem, chain, out, quiet):
    """Density bands per model-parameter coordinate, the predictive band,
    and the three SVG figure files."""
    band_block = cfg.raw.get("bands", {})
    burned = chain.burned()
    if burned.shape[0] == 0:
        raise SamplerFailure("chain empty after burn-in; cannot compute bands")
    thetas = _thin(burned[:, : len(problem.theta_labels)], int(band_block.get("draws", 200)))

    dist0 = problem.population(np.median(thetas, axis=0))
    n_coords = len(getattr(dist0, "marginals", (dist0,)))
    for i in range(n_coords):
        grid = _coordinate_grid(cfg, problem, i, thetas)
        table = posterior_density_bands(thetas, problem.population, i, grid)
        table.truth = _marginal_truth(cfg, problem.population, i, grid)
        _write_band_csv(out / f"density_band_x{i + 1}.csv", table)
        write_band_svg(out / f"f_band_x{i + 1}.svg", table, title=f"population density, coordinate {i + 1}")

    mode = band_block.get("predictive_mode")
    if mode is None:
        mode = "kde" if problem.observed.shape[1] == 1 else ("summaries" if problem.summary else None)
    if mode is not None:
        grid = _auto_grid(problem.observed.ravel()) if mode == "kde" else None
        table = posterior_predictive_check(
            chain, problem, grid=grid, mode=mode,
            draws=int(band_block.get("draws", 200)), seed=cfg.seed,
        )
        _write_band_csv(out / "predictive_band.csv", table)
        write_band_svg(out / "predictive.svg", table, title=f"posterior predictive ({mode})")
    else:
        _say(quiet, "predictive band skipped: no KDE axis and no summary statistic")

    panels = []
    for j, label in enumerate(chain.labels):
        col = burned[:, j]
        grid = _auto_grid(col)
        if np.ptp(col) == 0 or silverman_bandwidth(col) == 0:
            values = np.ones_like(grid)
        else:
            values = gaussian_kde(col, grid, "auto")
        truth = None
        obs = cfg.raw.get("observed", {})
        if "synthetic" in obs and j < len(problem.theta_labels):
            truth = float(obs["synthetic"]["theta_star"][j])
        panels.append((label, grid, values, truth))
    write_panel_svg(out / "posteriors.svg", panels, title="posterior marginals")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args):
    cfg = load_config(args.config)
    if "synthetic" not in cfg.raw.get("observed", {}):
        raise ConfigError("simulate needs a config with an observed.synthetic block")
    if args.seed is not None:
        cfg.raw["observed"]["synthetic"]["seed"] = args.seed
    data = np.atleast_2d(np.asarray(synthesise_observed(cfg)))
    out = Path(args.out or cfg.raw.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    header = list(FLOW_COLUMNS) if data.shape[1] == 4 and cfg.raw["model"]["tag"] == "internalisation" else [
        f"y{i + 1}" for i in range(data.shape[1])
    ]
    path = out / "dataset.csv"
    write_dataset(path, data, header=header)
    _say(args.quiet, f"wrote {data.shape[0]} observations to {path}")
    return EXIT_OK


def cmd_calibrate(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.raw["seed"] = args.seed
    out = Path(args.out or cfg.raw.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        observed = get_observed(cfg)
    except (ConfigError, DataError):
        raise
    except Exception as exc:
        raise DataError(f"observed-data generation failed: {exc}") from exc
    try:
        problem = build_problem(cfg, observed)
    except GMMCollapseError as exc:
        raise SamplerFailure(f"summary initialisation failed: {exc}") from exc
    prior = cfg.prior
    _say(args.quiet, f"engine {cfg.engine['tag']}, seed {cfg.seed}, {observed.shape[0]} observations")
    try:
        chain, extras = run_engine(cfg, problem, prior, args.threads, args.quiet)
    except (ConfigError, DataError):
        raise
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise SamplerFailure(str(exc)) from exc
    write_chain_csv(out / "chain.csv", chain)
    write_dataset(out / "observed.csv", observed)
    with open(out / "config.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.to_json())
    emit_band_artifacts(cfg, problem, chain, out, args.quiet)
    wall = time.perf_counter() - t0
    log_lines = [
        f"engine: {cfg.engine['tag']}",
        f"seed: {cfg.seed}",
        f"states: {len(chain)}",
        f"acceptance_rate: {chain.acceptance_rate:.6f}",
    ]
    for key, val in extras.items():
        log_lines.append(f"{key}: {val}")
    log_lines.append(f"wall_time_s: {wall:.3f}")
    with open(out / "run.log", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(log_lines) + "\n")
    _say(args.quiet, f"done: acceptance {chain.acceptance_rate:.3f}, {wall:.1f}s, artifacts in {out}")
    return EXIT_OK


def cmd_bands(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.raw["seed"] = args.seed
    out = Path(args.out or cfg.raw.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    chain = read_chain_csv(args.chain)
    observed_path = Path(args.chain).parent / "observed.csv"
    observed = load_dataset(observed_path) if observed_path.exists() else get_observed(cfg)
    problem = build_problem(cfg, observed)
    if chain.labels != problem.labels:
        raise DataError(f"chain layout {chain.labels} does not match config layout {problem.labels}")
    emit_band_artifacts(cfg, problem, chain, out, args.quiet)
    _say(args.quiet, f"band tables written to {out}")
    return EXIT_OK


def cmd_diagnose(args):
    chains = [read_chain_csv(p) for p in args.chains]
    labels = chains[0].labels
    for c in chains[1:]:
        if c.labels != labels:
            raise DataError("chains have mismatched parameter layouts")
    try:
        report = diagnose_chain([c.params for c in chains], labels, burn_fraction=args.burn)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    print(f"{'parameter':<20}{'rhat':>12}{'ess':>12}")
    worst = 0.0
    for label in labels:
        rec = report[label]
        flag = " (zero variance)" if rec["zero_variance"] else ""
        print(f"{label:<20}{rec['rhat']:>12.4f}{rec['ess']:>12.1f}{flag}")
        worst = max(worst, rec["rhat"])
    rates = ", ".join(f"{float(np.mean(c.accepted[1:])):.3f}" for c in chains)
    print(f"acceptance rates: {rates}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        plain = {
            label: {"rhat": float(r["rhat"]), "ess": float(r["ess"]), "zero_variance": bool(r["zero_variance"])}
            for label, r in report.items()
        }
        with open(out / "diagnostics.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(plain, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def cmd_distance(args):
    a = load_dataset(args.dataset_a)
    b = load_dataset(args.dataset_b)
    try:
        disc = make_discrepancy(args.kind, a)
        value = disc(b)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(FLOAT_FMT % value)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p, config_required=True):
    if config_required:
        p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (speed only, never results)")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser():
    parser = argparse.ArgumentParser(prog="popcal", description="Population calibration from distributional data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="emit a synthetic dataset from the config's truth block")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="run a full seeded calibration")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bands", help="recompute density/predictive bands from an existing chain")
    _add_common(p)
    p.add_argument("--chain", required=True, help="chain CSV from a previous run")
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("diagnose", help="split-Rhat / ESS diagnostics for one or more chains")
    p.add_argument("chains", nargs="+", help="chain CSV files")
    p.add_argument("--burn", type=float, default=0.2, help="burn-in fraction")
    p.add_argument("--out", default=None, help="also write diagnostics.json here")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("distance", help="discrepancy between two CSV datasets")
    p.add_argument("--kind", required=True, help="wasserstein1 | cramer_von_mises | energy | anderson_darling | flow_composite")
    p.add_argument("dataset_a", help="observed-side dataset CSV")
    p.add_argument("dataset_b", help="simulated-side dataset CSV")
    p.set_defaults(func=cmd_distance)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SamplerFailure as exc:
        print(f"sampler failure: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except (PredictiveFailure, DiagnosticFailure) as exc:
        print(f"diagnostic failure: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC


if __name__ == "__main__":
    sys.exit(main())
