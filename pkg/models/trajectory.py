import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config.settings import GRADIENT_DECAY, STALL_GRADIENT_NORM
from models.control import ControlField
from models.enums import FlowStatus, InitRegime


class FlowConfig(BaseModel):
    """Gradient-flow integration and stopping settings"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    target_error: float = Field(1e-7, gt=0)
    s_max: float = Field(1e6, gt=0)
    rel_tol: float = Field(1e-8, gt=0)
    abs_tol: float = Field(1e-10, gt=0)
    record_stride: int = Field(1, ge=1)
    stall_norm: float = Field(STALL_GRADIENT_NORM, ge=0)
    # converged also needs |grad| <= gradient_decay * peak |grad| once the flow has moved; None drops the check
    gradient_decay: Optional[float] = Field(GRADIENT_DECAY, gt=0, lt=1)
    max_steps: int = Field(200_000, ge=1)

    @field_validator("s_max")
    @classmethod
    def check_finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("s_max must be finite")
        return v


@dataclass
class TrajectorySample:
    """One recorded point of a flow"""
    s: float
    e_j: float
    gradient_norm: float
    secondaries: Dict[str, float] = field(default_factory=dict)
    field_step: float = 0.0
    snapshot: Optional[ControlField] = None


@dataclass
class TrajectoryRecord:
    """History of one optimization run"""
    samples: List[TrajectorySample]
    status: FlowStatus
    final_field: Optional[ControlField] = None
    run_id: int = 0
    regime: Optional[InitRegime] = None

    @property
    def converged(self) -> bool:
        return self.status == FlowStatus.converged

    @property
    def s(self) -> np.ndarray:
        return np.array([p.s for p in self.samples])

    @property
    def e_j(self) -> np.ndarray:
        return np.array([p.e_j for p in self.samples])

    @property
    def gradient_norms(self) -> np.ndarray:
        return np.array([p.gradient_norm for p in self.samples])

    def secondary_names(self) -> List[str]:
        return list(self.samples[0].secondaries) if self.samples else []

    def values(self, name: str) -> np.ndarray:
        return np.array([p.secondaries.get(name, np.nan) for p in self.samples])

    @property
    def final_error(self) -> float:
        return self.samples[-1].e_j if self.samples else float("nan")

    def max_uphill(self) -> float:
        """Largest increase of E_J between consecutive samples (0 when monotone)"""
        e = self.e_j
        return float(np.max(np.diff(e), initial=0.0))

    def snapshots(self) -> List[TrajectorySample]:
        return [p for p in self.samples if p.snapshot is not None]
