from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.enums import InitRegime, Sense
from models.trajectory import TrajectoryRecord


def sense_of(name: str) -> Sense:
    """e_j and fluence are minimized, robustness values K are maximized toward zero"""
    return Sense.maximize if name.startswith("k_") else Sense.minimize


@dataclass
class FrontPoint:
    e_j: float
    secondaries: Dict[str, float] = field(default_factory=dict)
    run_id: int = 0
    s: float = 0.0

    def coordinate(self, name: str) -> float:
        return self.e_j if name == "e_j" else self.secondaries[name]

    def minimized(self, names) -> Tuple[float, ...]:
        """Coordinates in minimization form"""
        return tuple(
            -self.coordinate(n) if sense_of(n) == Sense.maximize else self.coordinate(n)
            for n in names
        )


@dataclass
class EnsembleResult:
    """
    Trajectories of an ensemble plus, for each secondary, the best value seen
    in every log-spaced E_J bin and the run that produced it.
    """
    trajectories: List[TrajectoryRecord]
    bins: np.ndarray
    envelope: Dict[str, np.ndarray]
    envelope_runs: Dict[str, np.ndarray]
    thresholds: Dict[str, Optional[Tuple[float, float]]] = field(default_factory=dict)
    regime: Optional[InitRegime] = None

    @property
    def n_converged(self) -> int:
        return sum(1 for t in self.trajectories if t.converged)

    @property
    def threshold(self) -> Optional[Tuple[float, float]]:
        """Threshold of the first robustness secondary, if any"""
        for name, point in self.thresholds.items():
            if sense_of(name) == Sense.maximize:
                return point
        return None


@dataclass
class Histogram:
    counts: np.ndarray
    edges: np.ndarray
    values: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def mode(self) -> float:
        return float(self.centers[int(np.argmax(self.counts))])

    @property
    def total(self) -> int:
        return int(np.sum(self.counts))


@dataclass
class Surface:
    """Nondominated (E_J, K_eps, fluence) set and its two E_J projections"""
    points: List[FrontPoint]
    projections: Dict[str, List[FrontPoint]]
    trajectories: List[TrajectoryRecord]
