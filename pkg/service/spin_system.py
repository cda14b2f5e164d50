"""
Spin Hamiltonians, operators and random Fourier fields.

Convention: H(t) = sum_i (w_i/2) sz_i + sum_i eps_i(t) sx_i + J (sx.sx + sy.sy + sz.sz)
"""
import logging
from typing import Sequence, Tuple, Union

import numpy as np

from config.settings import MAX_MODES
from models.control import ControlField, SpinSystem, TimeGrid
from models.enums import NoiseChannel
from service.errors import DimensionMismatch

logger = logging.getLogger(__name__)

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

Seed = Union[int, Sequence[int]]


def embed(op: np.ndarray, spin_index: int, n_spins: int) -> np.ndarray:
    """Single-spin operator acting on spin_index, identity elsewhere"""
    if not 0 <= spin_index < n_spins:
        raise DimensionMismatch(f"Spin index {spin_index} out of range for {n_spins} spin(s)")
    out = np.ones((1, 1), dtype=complex)
    for i in range(n_spins):
        out = np.kron(out, op if i == spin_index else IDENTITY)
    return out


def build_drift(system: SpinSystem) -> np.ndarray:
    """Field-free Hamiltonian: transition energies plus isotropic Heisenberg coupling"""
    drift = np.zeros((system.dim, system.dim), dtype=complex)
    for i, omega in enumerate(system.omegas):
        drift += 0.5 * omega * embed(SIGMA_Z, i, system.n_spins)
    if system.n_spins == 2 and system.coupling:
        for pauli in (SIGMA_X, SIGMA_Y, SIGMA_Z):
            drift += system.coupling * np.kron(pauli, pauli)
    return drift


def control_operator(system: SpinSystem, spin_index: int) -> np.ndarray:
    """Operator multiplying eps_i(t): sigma_x on spin i"""
    return embed(SIGMA_X, spin_index, system.n_spins)


def control_operators(system: SpinSystem) -> np.ndarray:
    """All control operators stacked, shape (n_spins, d, d)"""
    return np.stack([control_operator(system, i) for i in range(system.n_spins)])


def noise_operator(system: SpinSystem, spin_index: int, channel: NoiseChannel) -> np.ndarray:
    """dH/d(beta): sigma_x for field noise, sigma_z/2 for detuning noise"""
    if channel == NoiseChannel.field:
        return control_operator(system, spin_index)
    return 0.5 * embed(SIGMA_Z, spin_index, system.n_spins)


def hamiltonians(system: SpinSystem, samples: np.ndarray) -> np.ndarray:
    """Per-step Hamiltonians H_m for samples of shape (n_spins, n_steps) -> (n_steps, d, d)"""
    samples = np.atleast_2d(samples)
    if samples.shape != (system.n_spins, system.grid.n_steps):
        raise DimensionMismatch(
            f"Field shape {samples.shape} does not match system ({system.n_spins}, {system.grid.n_steps})"
        )
    drift = build_drift(system)
    controls = control_operators(system)
    return drift[None, :, :] + np.einsum('im,iab->mab', samples, controls)


def level_states(system: SpinSystem) -> np.ndarray:
    """
    Drift eigenstates as columns, ordered by descending energy (level 1 first).
    Ties are broken by the computational basis index of the dominant component,
    so zero drift gives |0>, |1>, ... in order.
    """
    energies, vectors = np.linalg.eigh(build_drift(system))
    dominant = np.argmax(np.abs(vectors), axis=0)
    order = np.lexsort((dominant, -np.round(energies, 12)))
    states = vectors[:, order]
    # Fix the global phase of each state so its dominant entry is real positive
    for col in range(states.shape[1]):
        pivot = states[np.argmax(np.abs(states[:, col])), col]
        states[:, col] *= np.conj(pivot) / abs(pivot)
    return states


def mode_cap(system: SpinSystem) -> int:
    """Largest Fourier index K with K*pi inside the system's frequency band"""
    return MAX_MODES[system.n_spins]


def sample_random_field(
    amplitude_range: Tuple[float, float],
    grid: TimeGrid,
    n_modes: int,
    rng_seed: Seed,
    n_spins: int = 1,
) -> ControlField:
    """Fourier field with a_k uniform in amplitude_range and phi_k uniform in [0, 2pi)"""
    low, high = amplitude_range
    if high < low:
        raise ValueError(f"Empty amplitude interval [{low}, {high}]")
    if n_modes < 1:
        raise ValueError(f"Need at least one Fourier mode, got {n_modes}")
    rng = np.random.default_rng(rng_seed)
    amplitudes = rng.uniform(low, high, size=(n_spins, n_modes))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_spins, n_modes))
    return ControlField.from_fourier(amplitudes, phases, grid)


def random_field_for(system: SpinSystem, amplitude_range: Tuple[float, float], rng_seed: Seed) -> ControlField:
    """Random Fourier field using every mode the system's band allows"""
    return sample_random_field(amplitude_range, system.grid, mode_cap(system), rng_seed, system.n_spins)
