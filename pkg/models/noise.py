from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.settings import CORRELATION_TIME, NOISE_STRENGTH_A2
from models.control import TimeGrid
from models.enums import KernelForm, NoiseChannel
from service.errors import GridMismatch, InvalidKernel


class CorrelationKernel(BaseModel):
    """
    Wide-sense stationary correlation R(t, t') evaluated on the step grid.

    exp_decay: A^2 exp(-|t - t'| / alpha)
    white:     A^2 delta(t - t'), discretized as A^2 / dt on the diagonal
    custom:    explicit n x n table (inline or loaded from a whitespace file)
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    form: KernelForm = KernelForm.exp_decay
    a2: float = Field(NOISE_STRENGTH_A2, ge=0)
    alpha: float = Field(CORRELATION_TIME, gt=0)
    table: Optional[List[List[float]]] = None
    table_path: Optional[Path] = None

    @model_validator(mode="after")
    def check_table(self):
        if self.form == KernelForm.custom and self.table is None and self.table_path is None:
            raise ValueError("Custom kernel needs `table` or `table_path`")
        return self

    def matrix(self, grid: TimeGrid) -> np.ndarray:
        """R(t_j, t_k) on the n_steps x n_steps grid"""
        n = grid.n_steps
        if self.form == KernelForm.exp_decay:
            t = grid.step_times()
            return self.a2 * np.exp(-np.abs(t[:, None] - t[None, :]) / self.alpha)
        if self.form == KernelForm.white:
            return (self.a2 / grid.dt) * np.eye(n)

        table = np.asarray(self.table, dtype=float) if self.table is not None else np.loadtxt(self.table_path)
        if table.shape != (n, n):
            raise GridMismatch(f"Kernel table shape {table.shape} does not match grid ({n}, {n})")
        if not np.allclose(table, table.T, atol=1e-12):
            raise InvalidKernel("Kernel table is not symmetric")
        return table

    def with_alpha(self, alpha: float) -> "CorrelationKernel":
        return self.model_copy(update={"alpha": alpha})

    def scaled(self, factor: float) -> "CorrelationKernel":
        if self.form == KernelForm.custom:
            return self.model_copy(update={"table": (factor * self.matrix_table()).tolist(), "table_path": None})
        return self.model_copy(update={"a2": factor * self.a2})

    def matrix_table(self) -> np.ndarray:
        return np.asarray(self.table, dtype=float) if self.table is not None else np.loadtxt(self.table_path)


class NoiseModel(BaseModel):
    """Noise channel applied independently (identical statistics) to every spin"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    channel: NoiseChannel = NoiseChannel.field
    kernel: CorrelationKernel = CorrelationKernel()


@dataclass(frozen=True, eq=False)
class HessianKernel:
    """
    Per-sample mixed partials d2J / d(beta_j) d(beta_k) for one spin and channel.
    The continuum Hessian is matrix / dt^2.
    """
    matrix: np.ndarray
    channel: NoiseChannel
    spin_index: int
    grid: TimeGrid


@dataclass(frozen=True)
class NoiseLossEstimate:
    """Monte-Carlo estimate of E[J_noisy] - J_clean"""
    mean: float
    stderr: float
    n_samples: int
