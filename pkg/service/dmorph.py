"""
D-MORPH gradient flow: d eps_m / ds = dJ / d eps_m, integrated in the search
variable s with an adaptive Runge-Kutta 4(5) stepper until E_J reaches the
target, the flow stalls at a critical point, or s reaches s_max.
"""
import logging
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.integrate import RK45

from models.control import ControlField, SpinSystem
from models.enums import FlowStatus
from models.objective import Objective
from models.trajectory import FlowConfig, TrajectoryRecord, TrajectorySample
from service.dynamics import PropagatorHistory, objective_first, objective_value, propagate
from service.errors import InsufficientData, IntegratorError
from service.spin_system import control_operators

logger = logging.getLogger(__name__)


class Diagnostic(Protocol):
    names: List[str]

    def __call__(self, field: ControlField, history: Optional[PropagatorHistory] = None) -> Dict[str, float]:
        ...

    def check_ordering(self, values: Dict[str, float], run_id: int = 0) -> List[Tuple[str, str]]:
        ...


class _GradientField:
    """Right-hand side of the flow; remembers J at the last evaluated point"""

    def __init__(self, objective: Objective, system: SpinSystem):
        self.objective = objective
        self.system = system
        self.operators = control_operators(system)
        self.evaluations = 0
        self._last_y: Optional[np.ndarray] = None
        self._last_j = float("nan")

    def field(self, y: np.ndarray) -> ControlField:
        return ControlField.from_flat(y, self.system.n_spins, self.system.grid)

    def evaluate(self, y: np.ndarray) -> Tuple[float, np.ndarray]:
        history = propagate(self.system, self.field(y))
        u = history.final
        q = np.concatenate([history.interaction_derivatives(op) for op in self.operators])
        self.evaluations += 1
        j = objective_value(self.objective, u)
        self._last_y = np.array(y, copy=True)
        self._last_j = j
        return j, objective_first(self.objective, u, q)

    def __call__(self, s: float, y: np.ndarray) -> np.ndarray:
        return self.evaluate(y)[1]

    def value_at(self, y: np.ndarray) -> float:
        if self._last_y is not None and np.array_equal(self._last_y, y):
            return self._last_j
        return self.evaluate(y)[0]


def _milestone(e_j: float) -> int:
    """Decade index k with E_J <= 10^-k"""
    return int(np.floor(-np.log10(max(e_j, 1e-300))))


class FlowRecorder:
    """Collects samples, evaluating diagnostics and milestone snapshots"""

    def __init__(self, system: SpinSystem, diagnostics: Sequence[Diagnostic]):
        self.system = system
        self.diagnostics = list(diagnostics)
        self.samples: List[TrajectorySample] = []
        self._next_milestone = 1
        self._previous_y: Optional[np.ndarray] = None

    def record(self, s: float, y: np.ndarray, e_j: float, gradient_norm: float):
        field = ControlField.from_flat(y, self.system.n_spins, self.system.grid)
        secondaries: Dict[str, float] = {}
        if self.diagnostics:
            history = propagate(self.system, field)
            for diagnostic in self.diagnostics:
                secondaries.update(diagnostic(field, history))

        snapshot = None
        if _milestone(e_j) >= self._next_milestone:
            snapshot = field
            self._next_milestone = _milestone(e_j) + 1

        step = 0.0 if self._previous_y is None else float(np.linalg.norm(y - self._previous_y))
        self._previous_y = np.array(y, copy=True)
        self.samples.append(TrajectorySample(
            s=float(s), e_j=float(e_j), gradient_norm=float(gradient_norm),
            secondaries=secondaries, field_step=step, snapshot=snapshot,
        ))


def _check_optimum(record: TrajectoryRecord, diagnostics: Sequence[Diagnostic]) -> TrajectoryRecord:
    if record.converged and record.samples:
        for diagnostic in diagnostics:
            diagnostic.check_ordering(record.samples[-1].secondaries, record.run_id)
    return record


def _gradient_settled(gradient_norm: float, peak_norm: float, config: FlowConfig) -> bool:
    if config.gradient_decay is None or gradient_norm < config.stall_norm:
        return True
    return gradient_norm <= config.gradient_decay * peak_norm


def flow(
    objective: Objective,
    system: SpinSystem,
    initial: ControlField,
    config: FlowConfig,
    diagnostics: Sequence[Diagnostic] = (),
    run_id: int = 0,
) -> TrajectoryRecord:
    """Integrate the gradient flow from `initial` and record the trajectory"""
    rhs = _GradientField(objective, system)
    recorder = FlowRecorder(system, diagnostics)
    y0 = initial.to_samples().flat()

    j, g = rhs.evaluate(y0)
    e_j = 1.0 - j
    gradient_norm = float(np.linalg.norm(g))
    recorder.record(0.0, y0, e_j, gradient_norm)

    logger.debug(f"Run {run_id}: flow start E_J={e_j:.3e}, |grad|={gradient_norm:.3e}")

    if e_j <= config.target_error:
        record = TrajectoryRecord(recorder.samples, FlowStatus.converged, initial.to_samples(), run_id=run_id)
        return _check_optimum(record, diagnostics)
    if gradient_norm < config.stall_norm:
        logger.warning(f"Run {run_id}: initial field sits on a critical point (E_J={e_j:.3e})")
        return TrajectoryRecord(recorder.samples, FlowStatus.stalled, initial.to_samples(), run_id=run_id)

    solver = RK45(rhs, 0.0, y0, config.s_max, rtol=config.rel_tol, atol=config.abs_tol)
    status = FlowStatus.s_max
    previous_j = j
    peak_norm = gradient_norm
    uphill_slack = 10.0 * config.rel_tol

    for step_index in range(1, config.max_steps + 1):
        message = solver.step()
        if solver.status == "failed":
            logger.error(f"Run {run_id}: integrator failed at s={solver.t:.4e}: {message}")
            raise IntegratorError(f"Integrator failed at s={solver.t:.4e}: {message}")

        y = solver.y
        j = rhs.value_at(y)
        e_j = 1.0 - j
        gradient_norm = float(np.linalg.norm(solver.f))
        peak_norm = max(peak_norm, gradient_norm)

        if j < previous_j - uphill_slack:
            logger.warning(f"Run {run_id}: J decreased by {previous_j - j:.3e} at s={solver.t:.4e}")
        previous_j = j

        if e_j <= config.target_error and _gradient_settled(gradient_norm, peak_norm, config):
            status = FlowStatus.converged
        elif gradient_norm < config.stall_norm:
            status = FlowStatus.stalled
            logger.warning(f"Run {run_id}: stalled at E_J={e_j:.3e}, s={solver.t:.4e}")
        elif solver.status == "finished":
            status = FlowStatus.s_max

        stopping = status != FlowStatus.s_max or solver.status == "finished"
        if stopping or step_index % config.record_stride == 0:
            recorder.record(solver.t, y, e_j, gradient_norm)
            logger.debug(f"Run {run_id}: s={solver.t:.4e} E_J={e_j:.3e} |grad|={gradient_norm:.3e}")
        if stopping:
            break
    else:
        logger.warning(f"Run {run_id}: step budget {config.max_steps} exhausted at E_J={e_j:.3e}")
        if recorder.samples[-1].s != solver.t:
            recorder.record(solver.t, solver.y, e_j, gradient_norm)

    final_field = ControlField.from_flat(solver.y, system.n_spins, system.grid)
    record = TrajectoryRecord(recorder.samples, status, final_field, run_id=run_id)
    logger.info(
        f"Run {run_id}: {status.value} at s={record.samples[-1].s:.4e} "
        f"E_J={record.final_error:.3e} ({rhs.evaluations} gradient evaluations)"
    )
    return _check_optimum(record, diagnostics)


def gradient_norm_profile(record: TrajectoryRecord) -> List[Tuple[float, float]]:
    """(s, |dJ/d eps|) along a recorded flow"""
    if not record.samples:
        raise InsufficientData("Trajectory record has no samples")
    return [(p.s, p.gradient_norm) for p in record.samples]
