from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config.settings import MOEA_POPULATION
from models.control import ControlField, TimeGrid
from models.enums import InitRegime
from models.front import FrontPoint


class MoeaConfig(BaseModel):
    """
    Steady-state multi-objective evolution strategy settings. Step sizes are in
    normalized genome units: amplitudes scaled by `amplitude_scale`, phases by pi.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    population: int = Field(MOEA_POPULATION, ge=2)
    generations: Optional[int] = Field(None, ge=0, description="None: per-size default")
    n_modes: Optional[int] = Field(None, ge=1)
    regime: InitRegime = InitRegime.low
    seed: int = 0
    sigma0: float = Field(0.2, ge=0)
    amplitude_scale: float = Field(1.0, gt=0)
    target_success: float = Field(1.0 / (5.0 + 0.5 ** 0.5), gt=0, lt=1)
    full_covariance: bool = False
    snapshot_every: int = Field(10, ge=1)


@dataclass
class Individual:
    """Genome [a (n_spins*K), phi (n_spins*K)] with its own step-size state"""
    genome: np.ndarray
    step_size: float
    success_rate: float
    fitness: Tuple[float, float] = (float("nan"), float("nan"))
    secondary: float = float("nan")
    cov: Optional[np.ndarray] = None
    path: Optional[np.ndarray] = None

    def field(self, n_spins: int, grid: TimeGrid) -> ControlField:
        amplitudes, phases = np.split(self.genome, 2)
        return ControlField.from_fourier(amplitudes.reshape(n_spins, -1), phases.reshape(n_spins, -1), grid)

    def copy(self) -> "Individual":
        return Individual(
            genome=self.genome.copy(),
            step_size=self.step_size,
            success_rate=self.success_rate,
            fitness=self.fitness,
            secondary=self.secondary,
            cov=None if self.cov is None else self.cov.copy(),
            path=None if self.path is None else self.path.copy(),
        )


@dataclass
class MoeaResult:
    """Final population, its nondominated front and per-generation front snapshots"""
    population: List[Individual]
    front: List[FrontPoint]
    snapshots: List[Tuple[int, List[FrontPoint]]] = field(default_factory=list)
    hypervolumes: List[float] = field(default_factory=list)
    reference: Tuple[float, float] = (1.0, 0.0)
    secondary_name: str = "k_eps"
