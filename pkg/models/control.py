from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config.settings import (
    COUPLING_12,
    FOUR_LEVEL_GRID,
    OMEGA_1,
    OMEGA_2,
    TWO_LEVEL_GRID,
)
from models.enums import Parametrization


class TimeGrid(BaseModel):
    """Uniform grid on [0, T]; step m covers (t_{m-1}, t_m] with t_m = m*dt"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    total_time: float = Field(..., gt=0)
    dt: float = Field(..., gt=0)

    @model_validator(mode="after")
    def check_divisible(self):
        ratio = self.total_time / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"total_time {self.total_time} is not an integer multiple of dt {self.dt}")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.total_time / self.dt))

    def step_times(self) -> np.ndarray:
        """Right endpoints t_1..t_n, where the field of each step is sampled"""
        return self.dt * np.arange(1, self.n_steps + 1)

    def node_times(self) -> np.ndarray:
        """All nodes t_0..t_n"""
        return self.dt * np.arange(self.n_steps + 1)

    @classmethod
    def two_level(cls) -> "TimeGrid":
        return cls(total_time=TWO_LEVEL_GRID[0], dt=TWO_LEVEL_GRID[1])

    @classmethod
    def four_level(cls) -> "TimeGrid":
        return cls(total_time=FOUR_LEVEL_GRID[0], dt=FOUR_LEVEL_GRID[1])


class SpinSystem(BaseModel):
    """One or two spins with transition energies, Heisenberg coupling and a time grid"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    n_spins: int = Field(..., ge=1, le=2)
    omegas: Tuple[float, ...]
    coupling: float = 0.0
    grid: TimeGrid

    @model_validator(mode="after")
    def check_consistency(self):
        if len(self.omegas) != self.n_spins:
            raise ValueError(f"Expected {self.n_spins} transition energies, got {len(self.omegas)}")
        if self.n_spins == 1 and self.coupling != 0.0:
            raise ValueError("A single spin cannot carry a coupling term")
        return self

    @property
    def dim(self) -> int:
        return 2 ** self.n_spins

    @classmethod
    def two_level(cls, omega: float = OMEGA_1, grid: Optional[TimeGrid] = None) -> "SpinSystem":
        return cls(n_spins=1, omegas=(omega,), coupling=0.0, grid=grid or TimeGrid.two_level())

    @classmethod
    def four_level(
        cls,
        omegas: Tuple[float, float] = (OMEGA_1, OMEGA_2),
        coupling: float = COUPLING_12,
        grid: Optional[TimeGrid] = None,
    ) -> "SpinSystem":
        return cls(n_spins=2, omegas=tuple(omegas), coupling=coupling, grid=grid or TimeGrid.four_level())


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ControlField:
    """
    Control for every spin, either as one sample per time step (shape
    (n_spins, n_steps)) or as Fourier amplitudes and phases (shape
    (n_spins, K)) over the frequencies k*pi, k = 1..K.
    """
    parametrization: Parametrization
    grid: TimeGrid
    samples: Optional[np.ndarray] = None
    amplitudes: Optional[np.ndarray] = None
    phases: Optional[np.ndarray] = None
    frequencies: Optional[np.ndarray] = field(default=None)

    @classmethod
    def from_samples(cls, samples, grid: TimeGrid) -> "ControlField":
        arr = np.atleast_2d(np.asarray(samples, dtype=float))
        if arr.shape[1] != grid.n_steps:
            raise ValueError(f"Expected {grid.n_steps} samples per spin, got {arr.shape[1]}")
        return cls(Parametrization.time_samples, grid, samples=_frozen(arr))

    @classmethod
    def from_fourier(cls, amplitudes, phases, grid: TimeGrid) -> "ControlField":
        amps = np.atleast_2d(np.asarray(amplitudes, dtype=float))
        phis = np.atleast_2d(np.asarray(phases, dtype=float))
        if amps.shape != phis.shape:
            raise ValueError(f"Amplitude shape {amps.shape} differs from phase shape {phis.shape}")
        freqs = np.pi * np.arange(1, amps.shape[1] + 1)
        return cls(
            Parametrization.fourier,
            grid,
            amplitudes=_frozen(amps),
            phases=_frozen(phis),
            frequencies=_frozen(freqs),
        )

    @classmethod
    def zeros(cls, n_spins: int, grid: TimeGrid) -> "ControlField":
        return cls.from_samples(np.zeros((n_spins, grid.n_steps)), grid)

    @property
    def n_spins(self) -> int:
        if self.parametrization == Parametrization.time_samples:
            return self.samples.shape[0]
        return self.amplitudes.shape[0]

    @property
    def n_modes(self) -> int:
        return 0 if self.amplitudes is None else self.amplitudes.shape[1]

    def evaluate(self, times: np.ndarray) -> np.ndarray:
        """Fourier field values at arbitrary times, shape (n_spins, len(times))"""
        if self.parametrization != Parametrization.fourier:
            raise ValueError("Only Fourier fields can be evaluated off-grid")
        t = np.asarray(times, dtype=float)
        arg = self.frequencies[None, :, None] * t[None, None, :] + self.phases[:, :, None]
        return np.sum(self.amplitudes[:, :, None] * np.sin(arg), axis=1)

    def to_samples(self) -> "ControlField":
        """Time-sampled form at the step right endpoints"""
        if self.parametrization == Parametrization.time_samples:
            return self
        return ControlField.from_samples(self.evaluate(self.grid.step_times()), self.grid)

    def sample_array(self) -> np.ndarray:
        return self.to_samples().samples

    def flat(self) -> np.ndarray:
        """Samples flattened spin-major"""
        return np.array(self.sample_array()).ravel()

    @classmethod
    def from_flat(cls, values, n_spins: int, grid: TimeGrid) -> "ControlField":
        return cls.from_samples(np.asarray(values, dtype=float).reshape(n_spins, grid.n_steps), grid)
