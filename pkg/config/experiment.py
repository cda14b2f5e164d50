"""
Experiment configuration: TOML file -> validated ExperimentConfig.

    name = "fig1"
    seed = 7

    [system]
    n_spins = 1

    [objective]
    names = ["P12"]

    [noise]
    channels = ["field"]
    alphas = [2.0]

    [optimizer]
    kind = "mc"

    [optimizer.ensemble]
    n_runs = 100
"""
import logging
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.settings import (
    COUPLING_12,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_THREADS,
    FOUR_LEVEL_GRID,
    MOEA_GENERATIONS,
    OMEGA_1,
    OMEGA_2,
    TWO_LEVEL_GRID,
)
from models.control import SpinSystem, TimeGrid
from models.enums import InitRegime, KernelForm, NoiseChannel, ObjectiveName, OptimizerKind
from models.moea import MoeaConfig
from models.noise import CorrelationKernel, NoiseModel
from models.trajectory import FlowConfig
from service.dynamics import OBJECTIVE_SPINS
from service.errors import ConfigError

logger = logging.getLogger(__name__)

DELIMITERS = {" ", ",", "\t"}


class SystemBlock(BaseModel):
    """
    Spin count and physics; unset values take the per-size defaults. Without
    n_spins every objective runs on the system size it is defined for.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_spins: Optional[int] = Field(None, ge=1, le=2)
    omegas: Optional[List[float]] = None
    coupling: Optional[float] = None
    total_time: Optional[float] = Field(None, gt=0)
    dt: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def check_omegas(self):
        if self.omegas is not None and len(self.omegas) != self.n_spins:
            raise ValueError(f"omegas needs n_spins set to its length ({len(self.omegas)})")
        return self

    def build(self, n_spins: int) -> SpinSystem:
        total_time, dt = TWO_LEVEL_GRID if n_spins == 1 else FOUR_LEVEL_GRID
        grid = TimeGrid(total_time=self.total_time or total_time, dt=self.dt or dt)
        if n_spins == 1:
            omegas = tuple(self.omegas or [OMEGA_1])
            coupling = self.coupling or 0.0
        else:
            omegas = tuple(self.omegas or [OMEGA_1, OMEGA_2])
            coupling = COUPLING_12 if self.coupling is None else self.coupling
        return SpinSystem(n_spins=n_spins, omegas=omegas, coupling=coupling, grid=grid)


class ObjectiveBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    names: List[ObjectiveName] = Field(default_factory=lambda: [ObjectiveName.P12], min_length=1)


class NoiseBlock(BaseModel):
    """
    Noise channels evaluated as secondaries. `alphas` adds extra correlation
    times contracted with the same Hessians (re-engineered noise overlays).
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    channels: List[NoiseChannel] = Field(default_factory=lambda: [NoiseChannel.field], min_length=1)
    form: KernelForm = KernelForm.exp_decay
    a2: float = Field(1e-4, ge=0)
    alpha: float = Field(1.0, gt=0)
    alphas: List[float] = Field(default_factory=list)
    table_path: Optional[Path] = None
    fluence: bool = True

    @field_validator("alphas")
    @classmethod
    def check_alphas(cls, v: List[float]) -> List[float]:
        if any(a <= 0 for a in v):
            raise ValueError("Correlation times must be positive")
        return v

    def kernel(self) -> CorrelationKernel:
        return CorrelationKernel(form=self.form, a2=self.a2, alpha=self.alpha, table_path=self.table_path)

    def model(self, channel: NoiseChannel) -> NoiseModel:
        return NoiseModel(channel=channel, kernel=self.kernel())


class EnsembleBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_runs: int = Field(50, ge=1)
    n_runs_four_level: Optional[int] = Field(None, ge=1)
    regimes: List[InitRegime] = Field(default_factory=lambda: [InitRegime.low], min_length=1)
    histogram_at: Optional[float] = Field(None, lt=0, description="log10 E_J of the distribution table")
    min_histogram_runs: int = Field(10, ge=1)


class OptimizerBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: OptimizerKind = OptimizerKind.mc
    flow: FlowConfig = Field(default_factory=FlowConfig)
    ensemble: EnsembleBlock = Field(default_factory=EnsembleBlock)
    moea: MoeaConfig = Field(default_factory=MoeaConfig)
    compare_mc: bool = False


class OutputBlock(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: Optional[Path] = None
    delimiter: str = " "
    plots: bool = True
    snapshots: bool = False
    trajectories: bool = True

    @field_validator("delimiter")
    @classmethod
    def check_delimiter(cls, v: str) -> str:
        if v not in DELIMITERS:
            raise ValueError(f"Delimiter must be one of {sorted(DELIMITERS)!r}")
        return v


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field("experiment", min_length=1)
    seed: int = Field(0, ge=0)
    threads: int = Field(DEFAULT_THREADS, ge=1)
    system: SystemBlock = Field(default_factory=SystemBlock)
    objective: ObjectiveBlock = Field(default_factory=ObjectiveBlock)
    noise: NoiseBlock = Field(default_factory=NoiseBlock)
    optimizer: OptimizerBlock = Field(default_factory=OptimizerBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    @model_validator(mode="after")
    def check_combination(self):
        for name in self.objective.names:
            if self.system.n_spins is not None and OBJECTIVE_SPINS[name] != self.system.n_spins:
                raise ValueError(
                    f"Objective {name.value} needs {OBJECTIVE_SPINS[name]} spin(s), "
                    f"system.n_spins is {self.system.n_spins}"
                )
        if self.optimizer.kind == OptimizerKind.surface and any(self.spins_for(n) != 1 for n in self.objective.names):
            raise ValueError("The fidelity/robustness/fluence surface needs a one-spin system")
        if self.noise.form == KernelForm.custom and self.noise.table_path is None:
            raise ValueError("A custom kernel needs noise.table_path")
        return self

    @property
    def output_dir(self) -> Path:
        return (self.output.directory or DEFAULT_OUTPUT_DIR) / self.name

    def spins_for(self, name: ObjectiveName) -> int:
        return self.system.n_spins or OBJECTIVE_SPINS[name]

    def n_runs_for(self, n_spins: int) -> int:
        ensemble = self.optimizer.ensemble
        return ensemble.n_runs_four_level if n_spins == 2 and ensemble.n_runs_four_level else ensemble.n_runs

    def moea_config(self, n_spins: int) -> MoeaConfig:
        """MOEA settings with the experiment seed and the per-size generation default"""
        generations = self.optimizer.moea.generations
        if generations is None:
            generations = MOEA_GENERATIONS[n_spins]
        return self.optimizer.moea.model_copy(update={"seed": self.seed, "generations": generations})

    def with_overrides(self, seed: Optional[int] = None, threads: Optional[int] = None) -> "ExperimentConfig":
        update = {k: v for k, v in (("seed", seed), ("threads", threads)) if v is not None}
        return self.model_validate({**self.model_dump(), **update}) if update else self


def _locate(text: str, loc: Sequence[Any]) -> Optional[int]:
    """Line of the TOML key addressed by a validation error location"""
    keys = [str(k) for k in loc if not isinstance(k, int)]
    if not keys:
        return None
    table, key = keys[:-1], keys[-1]
    current: List[str] = []
    header_line = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        header = re.match(r"^\[\s*([^\]]+?)\s*\]$", line)
        if header:
            current = [part.strip() for part in header.group(1).split(".")]
            if current == keys:
                header_line = number
            continue
        assignment = re.match(r"^([A-Za-z0-9_\-]+)\s*=", line)
        if assignment and assignment.group(1) == key and current == table:
            return number
    return header_line


def _first_error(error: ValidationError) -> Tuple[str, Sequence[Any]]:
    detail = error.errors()[0]
    return detail["msg"], detail["loc"]


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Validate TOML text; raises ConfigError naming the field and line"""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = re.search(r"line (\d+)", str(e))
        logger.error(f"Config {source} is not valid TOML: {e}")
        raise ConfigError(f"Invalid TOML in {source}: {e}", line=int(match.group(1)) if match else None) from e

    if not data:
        raise ConfigError(f"Configuration {source} is empty")

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        message, loc = _first_error(e)
        field = ".".join(str(part) for part in loc) or None
        line = _locate(text, loc)
        logger.error(f"Config {source} failed validation at {field}: {message}")
        raise ConfigError(f"Invalid configuration in {source}: {message}", field=field, line=line) from e


def load_config(path: Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read configuration {path}: {e}") from e
    return parse_config(text, source=str(path))
