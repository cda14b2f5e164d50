from dataclasses import dataclass
from typing import Optional

import numpy as np

from models.enums import ObjectiveKind


@dataclass(frozen=True, eq=False)
class Objective:
    """
    Primary objective J in [0, 1], J = 1 optimal.

    state_transfer: |<f|U(T)|i>|^2 with `initial`/`final` state vectors
    observable:     Tr[U rho U^dagger O], mapped affinely from [low, high] to [0, 1]
    gate_fidelity:  1 - ||U(T) - W||_F^2 / (4N) = 1/2 + Re Tr[W^dagger U] / (2N)
    """
    kind: ObjectiveKind
    dim: int
    label: str = ""
    initial: Optional[np.ndarray] = None
    final: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None
    observable: Optional[np.ndarray] = None
    target: Optional[np.ndarray] = None
    low: float = 0.0
    high: float = 1.0

    @property
    def span(self) -> float:
        return self.high - self.low
