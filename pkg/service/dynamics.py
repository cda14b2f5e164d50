"""
Piecewise-constant propagation U(t + dt) = exp(-i H(t + dt) dt) U(t), the
three primary objectives and their exact derivatives.

Derivatives are carried in the interaction form Q_m = U(t_m)^dagger F_m U(t_{m-1}),
where F_m is the Frechet derivative of step m along an operator B. Then

    dU(T)/d(beta_m)            = U(T) Q_m
    d2U(T)/d(beta_j)d(beta_k)  = U(T) Q_k Q_j        (j < k)
    d2U(T)/d(beta_m)^2         = U(T) Q2_m           (Q2 from the second Frechet derivative)

and every objective needs only traces against U(T)-dressed constants.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from models.control import ControlField, SpinSystem
from models.enums import ObjectiveKind, ObjectiveName
from models.objective import Objective
from service.errors import DimensionMismatch, GridMismatch
from service.linalg import (
    HermitianEig,
    dagger,
    eig_hermitian,
    expm_unitary,
    frechet2_from_eig,
    frechet_from_eig,
)
from service.spin_system import (
    SIGMA_X,
    control_operators,
    embed,
    hamiltonians,
    level_states,
)

logger = logging.getLogger(__name__)

HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def special_unitary(target: np.ndarray) -> np.ndarray:
    """
    Gate times the global phase det(W)^(-1/N) (principal root), so det = 1.
    Drift, coupling and control terms are traceless, hence U(T) is in SU(N)
    and the phase-sensitive gate fidelity reaches 1 only on an SU(N) target.
    """
    target = np.asarray(target, dtype=complex)
    angle = float(np.angle(np.linalg.det(target)))
    if np.isclose(angle, -np.pi):
        angle = np.pi
    return np.exp(-1j * angle / target.shape[0]) * target


@dataclass(frozen=True, eq=False)
class PropagatorHistory:
    """Step unitaries and cumulative propagators U(t_m, 0), m = 0..n"""
    system: SpinSystem
    hamiltonians: np.ndarray
    eig: HermitianEig
    steps: np.ndarray
    cumulative: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.cumulative[-1]

    @property
    def dt(self) -> float:
        return self.system.grid.dt

    def interaction_derivatives(self, operator: np.ndarray) -> np.ndarray:
        """Q_m for every step along `operator`, shape (n_steps, d, d)"""
        frechet = frechet_from_eig(self.eig, operator, self.dt)
        return dagger(self.cumulative[1:]) @ frechet @ self.cumulative[:-1]

    def interaction_second_derivatives(self, operator: np.ndarray) -> np.ndarray:
        """Q2_m for every step along `operator`, shape (n_steps, d, d)"""
        frechet2 = frechet2_from_eig(self.eig, operator, self.dt)
        return dagger(self.cumulative[1:]) @ frechet2 @ self.cumulative[:-1]


# Objective catalogue

def state_transfer(system: SpinSystem, initial_level: int, final_level: int) -> Objective:
    """P_{i->f} between drift eigenstates counted from the top (level 1 = highest energy)"""
    states = level_states(system)
    for level in (initial_level, final_level):
        if not 1 <= level <= system.dim:
            raise DimensionMismatch(f"Level {level} outside 1..{system.dim}")
    return Objective(
        kind=ObjectiveKind.state_transfer,
        dim=system.dim,
        label=f"P{initial_level}{final_level}",
        initial=states[:, initial_level - 1].copy(),
        final=states[:, final_level - 1].copy(),
    )


def observable_objective(observable: np.ndarray, rho: np.ndarray, label: str = "") -> Objective:
    """<O> at T from rho_i, rescaled by the extreme eigenvalues of O"""
    eigenvalues = np.linalg.eigvalsh(observable)
    return Objective(
        kind=ObjectiveKind.observable,
        dim=observable.shape[0],
        label=label,
        rho=np.asarray(rho, dtype=complex),
        observable=np.asarray(observable, dtype=complex),
        low=float(eigenvalues[0]),
        high=float(eigenvalues[-1]),
    )


def gate_fidelity(target: np.ndarray, label: str = "") -> Objective:
    target = np.asarray(target, dtype=complex)
    return Objective(kind=ObjectiveKind.gate_fidelity, dim=target.shape[0], label=label, target=target)


def ground_projector(dim: int) -> np.ndarray:
    """|0...0><0...0|"""
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


OBJECTIVE_SPINS = {
    ObjectiveName.P12: 1, ObjectiveName.SX: 1, ObjectiveName.FH: 1,
    ObjectiveName.P14: 2, ObjectiveName.SX1: 2, ObjectiveName.FCNOT: 2,
}


def build_objective(name: ObjectiveName, system: SpinSystem) -> Objective:
    """Named objective for a system; raises when the name needs the other spin count"""
    required = OBJECTIVE_SPINS[name]
    if system.n_spins != required:
        raise DimensionMismatch(f"Objective {name.value} needs {required} spin(s), system has {system.n_spins}")

    if name == ObjectiveName.P12:
        return state_transfer(system, 1, 2)
    if name == ObjectiveName.P14:
        return state_transfer(system, 1, 4)
    if name == ObjectiveName.SX:
        return observable_objective(SIGMA_X, ground_projector(2), label="SX")
    if name == ObjectiveName.SX1:
        return observable_objective(embed(SIGMA_X, 0, 2), ground_projector(4), label="SX1")
    if name == ObjectiveName.FH:
        return gate_fidelity(special_unitary(HADAMARD), label="FH")
    return gate_fidelity(special_unitary(CNOT), label="FCNOT")


# Propagation

def propagate(system: SpinSystem, field: ControlField) -> PropagatorHistory:
    """Full propagator history for a field on the system's grid"""
    if field.grid != system.grid:
        raise GridMismatch(f"Field grid {field.grid} differs from system grid {system.grid}")
    if field.n_spins != system.n_spins:
        raise DimensionMismatch(f"Field has {field.n_spins} spin channel(s), system has {system.n_spins}")

    stack = hamiltonians(system, field.sample_array())
    eig = eig_hermitian(stack)
    steps = expm_unitary(stack, system.grid.dt, eig=eig)

    cumulative = np.empty((len(steps) + 1, system.dim, system.dim), dtype=complex)
    cumulative[0] = np.eye(system.dim)
    for m, step in enumerate(steps, start=1):
        cumulative[m] = step @ cumulative[m - 1]

    return PropagatorHistory(system=system, hamiltonians=stack, eig=eig, steps=steps, cumulative=cumulative)


def final_propagators(stacks: np.ndarray, dt: float) -> np.ndarray:
    """U(T) for a batch of Hamiltonian sequences of shape (batch, n_steps, d, d)"""
    steps = expm_unitary(stacks, dt)
    u = np.broadcast_to(np.eye(stacks.shape[-1], dtype=complex), stacks.shape[:1] + stacks.shape[-2:]).copy()
    for m in range(stacks.shape[1]):
        u = steps[:, m] @ u
    return u


def _check_dim(objective: Objective, u: np.ndarray):
    if objective.dim != u.shape[-1]:
        raise DimensionMismatch(f"Objective dimension {objective.dim} differs from propagator dimension {u.shape[-1]}")


def objective_value(objective: Objective, u: np.ndarray) -> float:
    """J for a final propagator"""
    _check_dim(objective, u)
    if objective.kind == ObjectiveKind.state_transfer:
        amplitude = np.vdot(objective.final, u @ objective.initial)
        return float(np.abs(amplitude) ** 2)
    if objective.kind == ObjectiveKind.observable:
        raw = np.trace(u @ objective.rho @ dagger(u) @ objective.observable).real
        return float((raw - objective.low) / objective.span)
    overlap = np.trace(dagger(objective.target) @ u).real
    return float(0.5 + overlap / (2.0 * objective.dim))


def evaluate(objective: Objective, history: PropagatorHistory) -> float:
    return objective_value(objective, history.final)


def objective_first(objective: Objective, u: np.ndarray, q: np.ndarray) -> np.ndarray:
    """dJ along each dU = U Q_k for a stack q of shape (k, d, d)"""
    _check_dim(objective, u)
    if objective.kind == ObjectiveKind.state_transfer:
        row = objective.final.conj() @ u
        amplitude = row @ objective.initial
        d_amplitude = np.einsum('a,kab,b->k', row, q, objective.initial)
        return 2.0 * np.real(np.conj(amplitude) * d_amplitude)
    if objective.kind == ObjectiveKind.observable:
        dressed = dagger(u) @ objective.observable @ u
        return 2.0 * np.real(np.einsum('kab,ba->k', q, objective.rho @ dressed)) / objective.span
    weighted = dagger(objective.target) @ u
    return np.real(np.einsum('ab,kba->k', weighted, q)) / (2.0 * objective.dim)


def objective_second(objective: Objective, u: np.ndarray, q: np.ndarray, m: np.ndarray) -> np.ndarray:
    """
    Second partials of J given first-order Q stack (k, d, d) and the ordered
    products m[j, k] = interaction form of d2U/d(beta_j)d(beta_k), shape (k, k, d, d)
    """
    _check_dim(objective, u)
    if objective.kind == ObjectiveKind.state_transfer:
        row = objective.final.conj() @ u
        amplitude = row @ objective.initial
        d_amplitude = np.einsum('a,kab,b->k', row, q, objective.initial)
        d2_amplitude = np.einsum('a,jkab,b->jk', row, m, objective.initial)
        cross = np.conj(d_amplitude)[:, None] * d_amplitude[None, :]
        return 2.0 * np.real(cross + np.conj(amplitude) * d2_amplitude)
    if objective.kind == ObjectiveKind.observable:
        dressed = dagger(u) @ objective.observable @ u
        second = np.einsum('jkab,ba->jk', m, objective.rho @ dressed)
        cross = np.einsum('jab,bc,kdc,da->jk', q, objective.rho, np.conj(q), dressed)
        return 2.0 * np.real(second + cross) / objective.span
    weighted = dagger(objective.target) @ u
    return np.real(np.einsum('ab,jkba->jk', weighted, m)) / (2.0 * objective.dim)


def value_and_gradient(objective: Objective, system: SpinSystem, field: ControlField) -> Tuple[float, np.ndarray]:
    """J and dJ/d(eps_m) per sample, spin-major, length n_spins * n_steps"""
    history = propagate(system, field)
    u = history.final
    q = np.concatenate([history.interaction_derivatives(op) for op in control_operators(system)])
    return objective_value(objective, u), objective_first(objective, u, q)


def gradient(objective: Objective, system: SpinSystem, field: ControlField) -> np.ndarray:
    return value_and_gradient(objective, system, field)[1]


def fidelity_error(objective: Objective, system: SpinSystem, field: ControlField) -> float:
    """E_J = 1 - J"""
    return 1.0 - evaluate(objective, propagate(system, field))
