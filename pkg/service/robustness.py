"""
Secondary objectives: Hessian-kernel noise robustness K_beta and fluence.

K_beta = 1/2 <H_beta, R> = 1/2 sum_jk (d2J / d(beta_j) d(beta_k)) R(t_j, t_k),
summed over spins; the per-sample Hessian absorbs the dt^2 of the double integral.
"""
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from models.control import ControlField, SpinSystem, TimeGrid
from models.enums import KernelForm, NoiseChannel, Parametrization
from models.noise import CorrelationKernel, HessianKernel, NoiseLossEstimate, NoiseModel
from models.objective import Objective
from service.dynamics import (
    PropagatorHistory,
    final_propagators,
    objective_second,
    objective_value,
    propagate,
)
from service.errors import GridMismatch, InvalidKernel
from service.spin_system import noise_operator

logger = logging.getLogger(__name__)

CHANNEL_PREFIX = {NoiseChannel.field: "k_eps", NoiseChannel.detuning: "k_omega"}
MC_CHUNK = 250


def _ordered_products(q: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """m[j, k] = Q_max(j,k) Q_min(j,k) off the diagonal, Q2_m on it"""
    n = q.shape[0]
    later_first = np.einsum('kab,jbc->jkac', q, q)  # [j, k] -> Q_k Q_j
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)[:, :, None, None]
    m = np.where(upper, later_first, np.swapaxes(later_first, 0, 1))
    m[np.arange(n), np.arange(n)] = q2
    return m


def hessian_from_history(
    objective: Objective,
    history: PropagatorHistory,
    channel: NoiseChannel,
    spin_index: int,
) -> HessianKernel:
    operator = noise_operator(history.system, spin_index, channel)
    q = history.interaction_derivatives(operator)
    q2 = history.interaction_second_derivatives(operator)
    matrix = objective_second(objective, history.final, q, _ordered_products(q, q2))
    matrix = 0.5 * (matrix + matrix.T)
    return HessianKernel(matrix=matrix, channel=channel, spin_index=spin_index, grid=history.system.grid)


def hessian(
    objective: Objective,
    system: SpinSystem,
    field: ControlField,
    channel: NoiseChannel,
    spin_index: int,
) -> HessianKernel:
    """Per-sample Hessian of J with respect to noise in beta_i(t)"""
    return hessian_from_history(objective, propagate(system, field), channel, spin_index)


def k_beta(hessian_kernel: HessianKernel, kernel: CorrelationKernel) -> float:
    """1/2 sum_jk H_jk R_jk for one spin"""
    r = kernel.matrix(hessian_kernel.grid)
    if r.shape != hessian_kernel.matrix.shape:
        raise GridMismatch(f"Kernel shape {r.shape} differs from Hessian shape {hessian_kernel.matrix.shape}")
    return float(0.5 * np.sum(hessian_kernel.matrix * r))


def k_beta_total(hessians: Iterable[HessianKernel], kernel: CorrelationKernel) -> float:
    """K_beta summed over spins"""
    return float(sum(k_beta(h, kernel) for h in hessians))


def robustness(
    objective: Objective,
    system: SpinSystem,
    field: ControlField,
    channel: NoiseChannel,
    kernels: Sequence[CorrelationKernel],
    history: Optional[PropagatorHistory] = None,
) -> List[float]:
    """K_beta for each kernel, Hessians built once and shared"""
    history = history or propagate(system, field)
    hessians = [hessian_from_history(objective, history, channel, i) for i in range(system.n_spins)]
    return [k_beta_total(hessians, kernel) for kernel in kernels]


def _cosine_integral(omega: np.ndarray, phase: np.ndarray, total_time: float) -> np.ndarray:
    """Integral of cos(omega t + phase) over [0, T]"""
    resting = omega == 0.0
    safe = np.where(resting, 1.0, omega)
    moving = (np.sin(omega * total_time + phase) - np.sin(phase)) / safe
    return np.where(resting, total_time * np.cos(phase), moving)


def fluence_per_spin(field: ControlField) -> np.ndarray:
    """Integral of eps_i(t)^2 over [0, T] for every spin"""
    if field.parametrization == Parametrization.fourier:
        # exact: sin products split into difference and sum frequencies
        w, a, phi = field.frequencies, field.amplitudes, field.phases
        t = field.grid.total_time
        difference = _cosine_integral((w[:, None] - w[None, :])[None], phi[:, :, None] - phi[:, None, :], t)
        total = _cosine_integral((w[:, None] + w[None, :])[None], phi[:, :, None] + phi[:, None, :], t)
        return 0.5 * np.einsum('ik,il,ikl->i', a, a, difference - total)
    # trapezoid on t_0..t_n with the first sample held back to t_0
    samples = field.samples
    nodes = np.concatenate([samples[:, :1], samples], axis=1)
    return trapezoid(nodes ** 2, dx=field.grid.dt, axis=1)


def fluence(field: ControlField) -> float:
    return float(np.sum(fluence_per_spin(field)))


def noise_factor(kernel: CorrelationKernel, grid: TimeGrid) -> np.ndarray:
    """L with L L^T = R, from the eigendecomposition with round-off negatives clipped"""
    r = kernel.matrix(grid)
    eigenvalues, eigenvectors = np.linalg.eigh(r)
    floor = -1e-12 * max(float(np.max(np.abs(eigenvalues))), 1e-300)
    if np.min(eigenvalues) < floor:
        raise InvalidKernel(f"Kernel is not positive semidefinite (min eigenvalue {np.min(eigenvalues):.3e})")
    return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))[None, :]


def sample_noise(kernel: CorrelationKernel, grid: TimeGrid, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian-process draws delta beta(t_m), shape (n_samples, n_steps)"""
    factor = noise_factor(kernel, grid)
    z = rng.standard_normal((n_samples, grid.n_steps))
    return z @ factor.T


def expected_noise_loss_mc(
    objective: Objective,
    system: SpinSystem,
    field: ControlField,
    model: NoiseModel,
    n_samples: int,
    seed: int,
) -> NoiseLossEstimate:
    """
    Mean change of J under sampled noise realizations; draws are made in
    fixed-size chunks seeded by (seed, chunk index).
    """
    history = propagate(system, field)
    grid = system.grid
    # clean reference through the same batched path as the noisy draws
    j_clean = objective_value(objective, final_propagators(history.hamiltonians[None], grid.dt)[0])
    operators = np.stack([noise_operator(system, i, model.channel) for i in range(system.n_spins)])

    losses = []
    for chunk, start in enumerate(range(0, n_samples, MC_CHUNK)):
        size = min(MC_CHUNK, n_samples - start)
        rng = np.random.default_rng([seed, chunk])
        # independent process per spin
        deltas = np.stack([sample_noise(model.kernel, grid, size, rng) for _ in range(system.n_spins)], axis=1)
        stacks = history.hamiltonians[None] + np.einsum('sim,iab->smab', deltas, operators)
        finals = final_propagators(stacks, grid.dt)
        losses.extend(objective_value(objective, u) - j_clean for u in finals)

    losses = np.asarray(losses)
    stderr = float(np.std(losses, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    estimate = NoiseLossEstimate(mean=float(np.mean(losses)), stderr=stderr, n_samples=n_samples)
    logger.debug(f"MC noise loss {estimate.mean:.4e} +/- {estimate.stderr:.1e} over {n_samples} samples")
    return estimate


class RobustnessDiagnostic:
    """K_beta for one channel under one or more kernels, as named secondary values"""

    def __init__(
        self,
        objective: Objective,
        system: SpinSystem,
        channel: NoiseChannel,
        kernels: Sequence[Tuple[str, CorrelationKernel]],
    ):
        self.objective = objective
        self.system = system
        self.channel = channel
        self.kernels = list(kernels)

    @classmethod
    def for_alphas(
        cls,
        objective: Objective,
        system: SpinSystem,
        channel: NoiseChannel,
        kernel: CorrelationKernel,
        alphas: Sequence[float] = (),
    ) -> "RobustnessDiagnostic":
        """Primary kernel named k_eps / k_omega, extra correlation times suffixed _alpha<a>"""
        prefix = CHANNEL_PREFIX[channel]
        named = [(prefix, kernel)]
        named += [(f"{prefix}_alpha{alpha:g}", kernel.with_alpha(alpha)) for alpha in alphas if alpha != kernel.alpha]
        return cls(objective, system, channel, named)

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.kernels]

    def __call__(self, field: ControlField, history: Optional[PropagatorHistory] = None) -> Dict[str, float]:
        values = robustness(
            self.objective, self.system, field, self.channel,
            [kernel for _, kernel in self.kernels], history=history,
        )
        return dict(zip(self.names, values))

    def check_ordering(self, values: Dict[str, float], run_id: int = 0) -> List[Tuple[str, str]]:
        """
        Exp-decay kernels that differ only in correlation time should give K_beta
        non-decreasing in alpha at an optimum. Violations are logged and returned.
        """
        decaying = sorted(
            ((kernel.alpha, name) for name, kernel in self.kernels
             if kernel.form == KernelForm.exp_decay and kernel.a2 == self.kernels[0][1].a2),
        )
        violations = []
        for (_, shorter), (_, longer) in zip(decaying, decaying[1:]):
            if values[longer] < values[shorter]:
                logger.warning(
                    f"Run {run_id}: kernel ordering violated, "
                    f"{longer}={values[longer]:.6e} < {shorter}={values[shorter]:.6e}"
                )
                violations.append((shorter, longer))
        return violations


class FluenceDiagnostic:
    """Total fluence as a secondary value"""
    names = ["fluence"]

    def __call__(self, field: ControlField, history: Optional[PropagatorHistory] = None) -> Dict[str, float]:
        return {"fluence": fluence(field)}

    def check_ordering(self, values: Dict[str, float], run_id: int = 0) -> List[Tuple[str, str]]:
        return []
