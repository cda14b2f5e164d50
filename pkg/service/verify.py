"""
Oracle suites: analytic derivatives against finite differences, propagator
unitarity and K_beta against a sampled noise-loss estimate.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from config.settings import HIGH_FLUENCE_AMPLITUDE, LOW_FLUENCE_AMPLITUDE
from models.control import ControlField, SpinSystem, TimeGrid
from models.enums import NoiseChannel, ObjectiveName
from models.noise import CorrelationKernel, NoiseModel
from models.objective import Objective
from models.trajectory import FlowConfig, TrajectoryRecord
from service.dmorph import flow
from service.dynamics import build_objective, final_propagators, gradient, objective_value, propagate
from service.linalg import unitarity_error
from service.robustness import expected_noise_loss_mc, hessian, k_beta_total
from service.spin_system import control_operator, hamiltonians, noise_operator, random_field_for

logger = logging.getLogger(__name__)

GRADIENT_TOL, GRADIENT_FLOOR, GRADIENT_STEP = 1e-5, 1e-9, 1e-5
HESSIAN_TOL, HESSIAN_FLOOR, HESSIAN_STEP = 1e-4, 1e-8, 1e-3
UNITARITY_TOL = 1e-10
MC_SIGMAS = 3.0


@dataclass
class Check:
    suite: str
    name: str
    measured: float
    tolerance: float
    passed: bool


def relative_error(analytic: np.ndarray, reference: np.ndarray, tol: float, floor: float) -> float:
    """max |a - r| / max(|r|, floor / tol): <= tol exactly when |a - r| <= max(tol |r|, floor)"""
    return float(np.max(np.abs(analytic - reference) / np.maximum(np.abs(reference), floor / tol)))


def perturbed_values(
    objective: Objective,
    system: SpinSystem,
    field: ControlField,
    operator: np.ndarray,
    shifts: np.ndarray,
) -> np.ndarray:
    """J with H(t_m) += shifts[b, m] * operator, one value per row of `shifts`"""
    stack = hamiltonians(system, field.sample_array())
    stacks = stack[None] + shifts[:, :, None, None] * operator[None, None]
    return np.array([objective_value(objective, u) for u in final_propagators(stacks, system.grid.dt)])


def finite_difference_gradient(objective: Objective, system: SpinSystem, field: ControlField, h: float = GRADIENT_STEP) -> np.ndarray:
    n = system.grid.n_steps
    blocks = []
    for spin in range(system.n_spins):
        shifts = np.concatenate([h * np.eye(n), -h * np.eye(n)])
        values = perturbed_values(objective, system, field, control_operator(system, spin), shifts)
        blocks.append((values[:n] - values[n:]) / (2.0 * h))
    return np.concatenate(blocks)


def finite_difference_hessian(
    objective: Objective,
    system: SpinSystem,
    field: ControlField,
    channel: NoiseChannel,
    spin_index: int,
    h: float = HESSIAN_STEP,
) -> np.ndarray:
    n = system.grid.n_steps
    eye = np.eye(n)
    shifts = []
    for sj, sk in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        shifts.append((sj * h * eye[:, None, :] + sk * h * eye[None, :, :]).reshape(n * n, n))
    values = perturbed_values(objective, system, field, noise_operator(system, spin_index, channel), np.concatenate(shifts))
    pp, pm, mp, mm = values.reshape(4, n, n)
    return (pp - pm - mp + mm) / (4.0 * h * h)


def converged_optimum(
    objective: Objective,
    system: SpinSystem,
    seed: int,
    config: Optional[FlowConfig] = None,
) -> TrajectoryRecord:
    """Gradient flow from a low-fluence random start, trying successive seeds until one converges"""
    config = config or FlowConfig()
    for attempt in range(5):
        record = flow(objective, system, random_field_for(system, LOW_FLUENCE_AMPLITUDE, [seed, attempt]), config)
        if record.converged:
            return record
        logger.warning(f"Optimum search attempt {attempt} ended {record.status.value} at E_J={record.final_error:.3e}")
    return record


class VerificationService:
    """Runs the named oracle suites and formats their report"""

    def __init__(self, n_fields: int = 20, n_unitarity: int = 100, n_noise_samples: int = 2000, seed: int = 0):
        self.n_fields = n_fields
        self.n_unitarity = n_unitarity
        self.n_noise_samples = n_noise_samples
        self.seed = seed

    @property
    def suites(self) -> Dict[str, Callable[[], List[Check]]]:
        return {
            "gradients": self.gradients,
            "hessians": self.hessians,
            "unitarity": self.unitarity,
            "kbeta-oracle": self.kbeta_oracle,
        }

    def gradients(self) -> List[Check]:
        system = SpinSystem.two_level()
        checks = []
        for name in (ObjectiveName.P12, ObjectiveName.SX, ObjectiveName.FH):
            objective = build_objective(name, system)
            worst = 0.0
            for i in range(self.n_fields):
                field = random_field_for(system, (0.0, 2.0), [self.seed, 100, i]).to_samples()
                analytic = gradient(objective, system, field)
                numeric = finite_difference_gradient(objective, system, field)
                worst = max(worst, relative_error(analytic, numeric, GRADIENT_TOL, GRADIENT_FLOOR))
            checks.append(Check("gradients", objective.kind.value, worst, GRADIENT_TOL, worst <= GRADIENT_TOL))
        return checks

    def hessians(self) -> List[Check]:
        coarse = {
            1: SpinSystem.two_level(grid=TimeGrid(total_time=1.0, dt=0.05)),
            2: SpinSystem.four_level(grid=TimeGrid(total_time=1.2, dt=0.06)),
        }
        cases = [(ObjectiveName.P12, 1), (ObjectiveName.SX, 1), (ObjectiveName.FH, 1), (ObjectiveName.FCNOT, 2)]
        checks = []
        for name, n_spins in cases:
            system = coarse[n_spins]
            objective = build_objective(name, system)
            field = random_field_for(system, (0.0, 2.0), [self.seed, 200, n_spins]).to_samples()
            for channel in NoiseChannel:
                worst = 0.0
                for spin in range(system.n_spins):
                    analytic = hessian(objective, system, field, channel, spin).matrix
                    numeric = finite_difference_hessian(objective, system, field, channel, spin)
                    worst = max(worst, relative_error(analytic, numeric, HESSIAN_TOL, HESSIAN_FLOOR))
                checks.append(Check("hessians", f"{name.value}/{channel.value}", worst, HESSIAN_TOL, worst <= HESSIAN_TOL))
        return checks

    def unitarity(self) -> List[Check]:
        worst = 0.0
        systems = [SpinSystem.two_level(), SpinSystem.four_level()]
        for i in range(self.n_unitarity):
            system = systems[i % 2]
            amplitude = HIGH_FLUENCE_AMPLITUDE if i % 4 >= 2 else (0.0, 2.0)
            history = propagate(system, random_field_for(system, amplitude, [self.seed, 300, i]))
            worst = max(worst, unitarity_error(history.final))
        return [Check("unitarity", "max |U^dagger U - I|", worst, UNITARITY_TOL, worst <= UNITARITY_TOL)]

    def kbeta_oracle(self) -> List[Check]:
        system = SpinSystem.two_level()
        objective = build_objective(ObjectiveName.P12, system)
        optimum = converged_optimum(objective, system, self.seed)
        model = NoiseModel(channel=NoiseChannel.field, kernel=CorrelationKernel())
        field = optimum.final_field
        k = k_beta_total([hessian(objective, system, field, model.channel, 0)], model.kernel)
        estimate = expected_noise_loss_mc(objective, system, field, model, self.n_noise_samples, self.seed)
        deviation = abs(k - estimate.mean) / max(estimate.stderr, 1e-300)
        logger.info(f"K_eps={k:.6e}, sampled loss {estimate.mean:.6e} +/- {estimate.stderr:.2e}")
        return [
            Check("kbeta-oracle", "|K - MC| / stderr", deviation, MC_SIGMAS, deviation <= MC_SIGMAS),
            Check("kbeta-oracle", "K_eps at optimum", k, 0.0, k < 0.0),
        ]

    def run(self, suite: str = "all") -> List[Check]:
        names = list(self.suites) if suite == "all" else [suite]
        unknown = [n for n in names if n not in self.suites]
        if unknown:
            raise ValueError(f"Unknown suite {unknown[0]!r}; choose from {sorted(self.suites)} or 'all'")
        checks: List[Check] = []
        for name in names:
            logger.info(f"Running verification suite '{name}'")
            checks.extend(self.suites[name]())
        return checks


def format_report(checks: List[Check]) -> str:
    lines = [f"{'suite':<14}{'check':<24}{'measured':>14}{'tolerance':>12}  result"]
    for c in checks:
        lines.append(
            f"{c.suite:<14}{c.name:<24}{c.measured:>14.3e}{c.tolerance:>12.1e}  {'PASS' if c.passed else 'FAIL'}"
        )
    failed = sum(1 for c in checks if not c.passed)
    lines.append(f"{len(checks) - failed}/{len(checks)} checks passed")
    return "\n".join(lines)
