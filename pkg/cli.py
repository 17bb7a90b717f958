"""Command-line entry point: fit, predict, simulate and synthpop.

Exit codes: 0 success, 2 invalid input or config, 3 numerical failure,
4 too many failed simulation replicates.
"""

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import pandas as pd

from config.settings import COMMANDS, RunConfig, load_config
from data.basis import adjacency_matrix
from data.dataset import PopulationFrame, SurveyDataset
from data.design import AreaIncidence, Eigenbasis, build_design
from data.load import load_adjacency, load_population, load_population_units, load_survey
from data.synthpop import generate_population
from errors import ConfigError, DataValidationError, DomainError, NumericalError, ReplicateOverflowError
from estimation.poststratify import poststratify
from models.fit import fit_binomial
from models.multinomial import CategoricalResponse, PlMmFit, fit_plmm
from sampling.rng import PREDICT_BRANCH, RngStream
from simulation.harness import run_simulation
from store.artifacts import ARTIFACT_NAME, CHECKPOINT_NAME, load_fit, save_fit, save_vb_checkpoint
from store.exports import (
    ESTIMATES_NAME,
    write_draws,
    write_estimates,
    write_replicate_log,
    write_scoreboard,
    write_table,
)
from store.manifest import run_hash, write_manifest, write_timings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3
EXIT_REPLICATES = 4


def _hash_inputs(cfg: RunConfig) -> tuple[dict, str]:
    """Config tree and run hash; the output directory does not enter either."""
    tree = cfg.to_dict()
    tree.pop("output_dir", None)
    return tree, run_hash(tree, cfg.seed)


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _basis(cfg: RunConfig, edges: pd.DataFrame | None, areas=()):
    """Area incidence, or the eigenbasis over ``areas`` plus every edge endpoint.

    Areas without neighbours appear in no edge and keep a zero adjacency row.
    """
    if cfg.model.basis == "area":
        return AreaIncidence()
    endpoints = set(edges["area_a"].astype(str)) | set(edges["area_b"].astype(str))
    areas = tuple(sorted(endpoints | {str(a) for a in areas}))
    return Eigenbasis(rank=cfg.model.rank, adjacency=adjacency_matrix(edges, areas), areas=areas)


def _with_frame_registries(survey: SurveyDataset, frame: PopulationFrame | None) -> SurveyDataset:
    """Widen area and level registries to the population frame so unsampled cells get design rows."""
    if frame is None:
        return survey
    cells = frame.cells
    areas = tuple(sorted(set(survey.areas) | set(cells["area"].astype(str))))
    levels = {
        cov: tuple(sorted(set(survey.factor_levels[cov]) | set(cells[cov].astype(str))))
        if cov in cells.columns else survey.factor_levels[cov]
        for cov in survey.covariates
    }
    return SurveyDataset.from_frame(
        survey.units, survey.covariates, areas=areas, factor_levels=levels,
        family=survey.family, categories=survey.categories,
    )


def cmd_fit(cfg: RunConfig) -> list[Path]:
    """Fit the configured engine and write draws, the fit artifact and the manifest."""
    cfg.validate_for("fit")
    family = cfg.data.family
    frame = load_population(cfg.data.population) if cfg.data.population else None
    edges = load_adjacency(cfg.data.adjacency) if cfg.model.basis == "eigen" else None

    dataset = _with_frame_registries(load_survey(cfg.data.survey, family=family), frame)
    design = build_design(dataset, _basis(cfg, edges, dataset.areas))
    spec = cfg.model_spec()
    engine = cfg.model.engine

    start = time.perf_counter()
    if family == "multinomial":
        response = CategoricalResponse(dataset.category_counts(), dataset.trials)
        fit = fit_plmm(
            response, design, spec, engine=engine,
            gibbs=replace(cfg.gibbs_config(), n_jobs=1), vb=cfg.vb_config(),
            categories=dataset.categories, n_jobs=cfg.n_jobs,
        )
        sub_fits = fit.sub_fits
    else:
        fit = fit_binomial(
            engine, spec, design, dataset.responses(), dataset.trials,
            gibbs=cfg.gibbs_config(), vb=cfg.vb_config(),
        )
        sub_fits = [fit]
    wall = time.perf_counter() - start

    tree, digest = _hash_inputs(cfg)
    out = _output_dir(cfg)
    files = write_draws(fit, out, digest)
    artifacts = [save_fit(out / ARTIFACT_NAME, fit, design.schema, family, {"run_hash": digest})]
    if engine == "vb" and cfg.vb.checkpoint:
        for k, sub in enumerate(sub_fits):
            # Prior-only sticks have no variational posterior
            if sub.posterior is None:
                continue
            name = CHECKPOINT_NAME if len(sub_fits) == 1 else CHECKPOINT_NAME.replace(".joblib", f"_stick{k + 1}.joblib")
            artifacts.append(save_vb_checkpoint(out / name, sub.posterior))
    write_timings(out, "fit", {engine: wall})
    write_manifest(out, "fit", tree, cfg.seed, digest, files, artifacts)
    logger.info("Fit finished in %.2fs; outputs in %s", wall, out)
    return files


def cmd_predict(cfg: RunConfig) -> Path:
    """Poststratify the stored fit over the population frame."""
    cfg.validate_for("predict")
    out = Path(cfg.output_dir)
    payload = load_fit(out / ARTIFACT_NAME)
    frame = load_population(cfg.data.population)
    fit, schema = payload["fit"], payload["schema"]
    if cfg.predict.ratios and not isinstance(fit, PlMmFit):
        raise ConfigError("predict.ratios need a multinomial fit")

    start = time.perf_counter()
    estimates = poststratify(
        fit, frame,
        domains=cfg.predict.domains,
        mode=cfg.predict.mode,
        rng=RngStream(cfg.seed).child(PREDICT_BRANCH),
        schema=schema,
        ratios=cfg.predict.ratios,
        level=cfg.predict.level,
        strict=cfg.predict.strict,
    )
    wall = time.perf_counter() - start

    tree, digest = _hash_inputs(cfg)
    out = _output_dir(cfg)
    path = write_estimates(estimates, out / ESTIMATES_NAME, digest)
    write_timings(out, "predict", {"poststratify": wall})
    write_manifest(out, "predict", tree, cfg.seed, digest, [path])
    return path


def _simulation_population(cfg: RunConfig):
    """Population units and adjacency edges from a file or from the synthetic generator."""
    if cfg.data.population_units is not None:
        population = load_population_units(cfg.data.population_units)
        edges = load_adjacency(cfg.data.adjacency) if cfg.data.adjacency else None
        return population, edges
    synth = generate_population({**cfg.synthpop_config(), "outcome": cfg.sim.outcome})
    population = synth.population.copy()
    population.attrs["covariates"] = synth.covariates
    return population, synth.adjacency


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    """Run the replicate experiment and write the scoreboard and replicate log."""
    cfg.validate_for("simulate")
    population, edges = _simulation_population(cfg)
    basis = _basis(cfg, edges, population["area"].unique()) if cfg.model.basis == "eigen" else None

    board = run_simulation(
        population,
        design=cfg.sim_design(),
        engines=cfg.sim.engines,
        domains=cfg.sim.domains,
        outcome=cfg.sim.outcome,
        spec=cfg.model_spec(),
        gibbs=replace(cfg.gibbs_config(), n_jobs=1),
        vb=cfg.vb_config(),
        basis=basis,
        n_jobs=cfg.n_jobs,
        progress=cfg.mcmc.progress,
    )

    tree, digest = _hash_inputs(cfg)
    out = _output_dir(cfg)
    files = write_scoreboard(board, out, digest)
    log = write_replicate_log(board, out, digest)
    write_timings(out, "simulate", board.timings)
    write_manifest(out, "simulate", tree, cfg.seed, digest, files, [log])
    board.check_failures(cfg.sim.failure_threshold)
    return files


def cmd_synthpop(cfg: RunConfig) -> list[Path]:
    """Write a synthetic population, its frame, adjacency and one PPS survey."""
    synth = generate_population(cfg.synthpop_config())
    tree, digest = _hash_inputs(cfg)
    out = _output_dir(cfg)
    files = [
        write_table(synth.population, out / "population.csv", digest),
        write_table(synth.frame.cells, out / "frame.csv", digest),
        write_table(synth.adjacency, out / "adjacency.csv", digest),
        write_table(synth.survey, out / "survey.csv", digest),
    ]
    write_manifest(out, "synthpop", tree, cfg.seed, digest, files)
    return files


COMMAND_HANDLERS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "synthpop": cmd_synthpop,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plsae",
        description="Pseudo-likelihood unit-level small-area models under informative sampling.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", "-c", help="JSON run configuration")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="BLOCK.KEY=VALUE",
        help="override a config leaf (value parsed as JSON); repeatable",
    )
    parser.add_argument("--output-dir", "-o", help="shorthand for --set output_dir=...")
    parser.add_argument("--seed", type=int, help="shorthand for --set seed=...")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )

    overrides = list(args.overrides)
    if args.output_dir is not None:
        overrides.append(f"output_dir={args.output_dir}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")

    try:
        cfg = load_config(args.config, overrides)
        COMMAND_HANDLERS[args.command](cfg)
    except (ConfigError, DataValidationError, DomainError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except NumericalError as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except ReplicateOverflowError as exc:
        logger.error("%s", exc)
        return EXIT_REPLICATES
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
