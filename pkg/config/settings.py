"""Run configuration: one JSON file loaded into frozen dataclasses.

Every block has module-level defaults; the file overrides them and
``--set block.key=value`` flags override the file. Unknown keys are rejected
at every level.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from data.synthpop import DEFAULT_SYNTHPOP
from errors import ConfigError, DomainError
from estimation.poststratify import MODES, CategoryRatio
from models.fit import ENGINES
from models.spec import DEFAULT_MCMC, DEFAULT_MODEL, DEFAULT_VB, GibbsConfig, PlMbModelSpec, VbConfig
from simulation.design import DEFAULT_SIM, SimDesign
from simulation.harness import ESTIMATORS, OUTCOMES

logger = logging.getLogger(__name__)

COMMANDS = ("fit", "predict", "simulate", "synthpop")
FAMILIES = ("binomial", "multinomial")
BASES = ("area", "eigen")


@dataclass(frozen=True)
class DataConfig:
    survey: str | None = None
    population: str | None = None
    adjacency: str | None = None
    population_units: str | None = None
    family: str = "binomial"


@dataclass(frozen=True)
class ModelConfig:
    engine: str = "gibbs"
    sigma2_beta: float = DEFAULT_MODEL["sigma2_beta"]
    a: float = DEFAULT_MODEL["a"]
    b: float = DEFAULT_MODEL["b"]
    basis: str = "area"
    rank: int | None = None


@dataclass(frozen=True)
class McmcConfig:
    burnin: int = DEFAULT_MCMC["burnin"]
    retained: int = DEFAULT_MCMC["retained"]
    thin: int = DEFAULT_MCMC["thin"]
    chain: int = DEFAULT_MCMC["chain"]
    chunk_size: int = DEFAULT_MCMC["chunk_size"]
    truncation: int = DEFAULT_MCMC["truncation"]
    progress: bool = DEFAULT_MCMC["progress"]


@dataclass(frozen=True)
class VbBlock:
    tol: float = DEFAULT_VB["tol"]
    max_iter: int = DEFAULT_VB["max_iter"]
    draws: int = DEFAULT_VB["draws"]
    checkpoint: bool = True


@dataclass(frozen=True)
class PredictConfig:
    domains: tuple[tuple[str, ...], ...] = ((), ("area",))
    mode: str = "expected"
    ratios: tuple[CategoryRatio, ...] = ()
    level: float = 0.95
    strict: bool = False


@dataclass(frozen=True)
class SimConfig:
    expected_n: float = DEFAULT_SIM["expected_n"]
    gamma: float = DEFAULT_SIM["gamma"]
    replicates: int = DEFAULT_SIM["replicates"]
    failure_threshold: float = DEFAULT_SIM["failure_threshold"]
    engines: tuple[str, ...] = ENGINES
    outcome: str = "binary"
    domains: tuple[str, ...] = ("area",)


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration of one CLI run."""

    seed: int = 0
    output_dir: str = "out"
    n_jobs: int = 1
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    vb: VbBlock = field(default_factory=VbBlock)
    predict: PredictConfig = field(default_factory=PredictConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    synthpop: dict = field(default_factory=dict)

    def model_spec(self) -> PlMbModelSpec:
        return PlMbModelSpec(self.model.sigma2_beta, self.model.a, self.model.b)

    def gibbs_config(self) -> GibbsConfig:
        m = self.mcmc
        return GibbsConfig(
            burnin=m.burnin, retained=m.retained, thin=m.thin, seed=self.seed, chain=m.chain,
            chunk_size=m.chunk_size, n_jobs=self.n_jobs, truncation=m.truncation, progress=m.progress,
        )

    def vb_config(self) -> VbConfig:
        return VbConfig(tol=self.vb.tol, max_iter=self.vb.max_iter, draws=self.vb.draws, seed=self.seed)

    def sim_design(self) -> SimDesign:
        s = self.sim
        return SimDesign(
            expected_n=s.expected_n, gamma=s.gamma, replicates=s.replicates,
            seed=self.seed, failure_threshold=s.failure_threshold,
        )

    def synthpop_config(self) -> dict:
        """Generator settings; the root seed applies unless the block sets its own."""
        return {**DEFAULT_SYNTHPOP, "seed": self.seed, **self.synthpop}

    def to_dict(self) -> dict:
        """Plain JSON-ready tree, used for the manifest and the run hash."""
        return json.loads(json.dumps(asdict(self), default=list))

    def validate_for(self, command: str) -> None:
        """Check that the inputs ``command`` reads are configured and exist."""
        if command not in COMMANDS:
            raise ConfigError(f"unknown command '{command}', expected one of {COMMANDS}")
        needed: list[tuple[str, str | None]] = []
        if command == "fit":
            needed.append(("data.survey", self.data.survey))
            if self.model.basis == "eigen":
                needed.append(("data.adjacency", self.data.adjacency))
            if self.data.population is not None:
                needed.append(("data.population", self.data.population))
        elif command == "predict":
            needed.append(("data.population", self.data.population))
        elif command == "simulate" and self.data.population_units is not None:
            needed.append(("data.population_units", self.data.population_units))
            if self.model.basis == "eigen":
                needed.append(("data.adjacency", self.data.adjacency))
        for key, value in needed:
            if value is None:
                raise ConfigError(f"'{command}' needs {key}")
            if not Path(value).exists():
                raise ConfigError(f"{key}: file not found: {value}")


def _reject_unknown(block: str, values: dict, allowed) -> None:
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        where = f"block '{block}'" if block else "top level"
        raise ConfigError(f"unknown key(s) at {where}: {', '.join(unknown)}")


def _block(cls, name: str, values: dict):
    if not isinstance(values, dict):
        raise ConfigError(f"'{name}' must be an object")
    _reject_unknown(name, values, [f.name for f in fields(cls)])
    return cls(**values)


def _check_ranges(cfg: RunConfig) -> None:
    """Numeric ranges and enumerations; engine configs re-check their own fields."""
    if cfg.n_jobs == 0 or cfg.n_jobs < -1:
        raise ConfigError(f"n_jobs must be >= 1 or -1, got {cfg.n_jobs}")
    if cfg.data.family not in FAMILIES:
        raise ConfigError(f"data.family must be one of {FAMILIES}")
    if cfg.model.engine not in ENGINES:
        raise ConfigError(f"model.engine must be one of {ENGINES}")
    if cfg.model.basis not in BASES:
        raise ConfigError(f"model.basis must be one of {BASES}")
    if cfg.model.basis == "eigen" and (cfg.model.rank is None or cfg.model.rank < 1):
        raise ConfigError("model.rank must be >= 1 for the eigen basis")
    if cfg.predict.mode not in MODES:
        raise ConfigError(f"predict.mode must be one of {MODES}")
    if not 0 < cfg.predict.level < 1:
        raise ConfigError("predict.level must lie in (0, 1)")
    if cfg.sim.outcome not in OUTCOMES:
        raise ConfigError(f"sim.outcome must be one of {OUTCOMES}")
    unknown = sorted(set(cfg.sim.engines) - set(ESTIMATORS))
    if unknown:
        raise ConfigError(f"sim.engines has unknown estimator(s): {unknown}")
    _reject_unknown("synthpop", cfg.synthpop, DEFAULT_SYNTHPOP)
    try:
        cfg.model_spec()
        cfg.gibbs_config()
        cfg.vb_config()
        cfg.sim_design()
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``block.key=value`` overrides; values parse as JSON, else stay strings."""
    raw = json.loads(json.dumps(raw))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        dotted, text = item.split("=", 1)
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        *parents, leaf = dotted.strip().split(".")
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override '{dotted}' descends into a non-object")
        node[leaf] = value
    return raw


def config_from_dict(raw: dict) -> RunConfig:
    """Build and range-check a RunConfig from a parsed JSON tree."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown("", raw, [f.name for f in fields(RunConfig)])
    raw = dict(raw)
    try:
        predict = dict(raw.get("predict", {}))
        _reject_unknown("predict", predict, [f.name for f in fields(PredictConfig)])
        if "domains" in predict:
            predict["domains"] = tuple(tuple(d) for d in predict["domains"])
        if "ratios" in predict:
            predict["ratios"] = tuple(
                CategoryRatio(r["name"], tuple(r["numerator"]), tuple(r["denominator"]))
                for r in predict["ratios"]
            )
        sim = dict(raw.get("sim", {}))
        for key in ("engines", "domains"):
            if key in sim:
                sim[key] = tuple(sim[key])
        cfg = RunConfig(
            seed=int(raw.get("seed", 0)),
            output_dir=str(raw.get("output_dir", "out")),
            n_jobs=int(raw.get("n_jobs", 1)),
            data=_block(DataConfig, "data", raw.get("data", {})),
            model=_block(ModelConfig, "model", raw.get("model", {})),
            mcmc=_block(McmcConfig, "mcmc", raw.get("mcmc", {})),
            vb=_block(VbBlock, "vb", raw.get("vb", {})),
            predict=PredictConfig(**predict),
            sim=_block(SimConfig, "sim", sim),
            synthpop=dict(raw.get("synthpop", {})),
        )
    except (TypeError, KeyError, DomainError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    _check_ranges(cfg)
    return cfg


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Load a JSON config file (or defaults when ``path`` is None) and apply overrides."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    cfg = config_from_dict(apply_overrides(raw, overrides or []))
    logger.debug("Resolved config: %s", cfg.to_dict())
    return cfg
