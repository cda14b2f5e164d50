import numpy as np
import pytest

from config.settings import LOW_FLUENCE_AMPLITUDE
from models.control import ControlField, SpinSystem, TimeGrid
from models.enums import NoiseChannel, ObjectiveName
from models.noise import CorrelationKernel
from models.trajectory import FlowConfig
from service.dmorph import flow
from service.dynamics import build_objective
from service.robustness import FluenceDiagnostic, RobustnessDiagnostic
from service.spin_system import random_field_for

# Loose integrator settings keep unit-test flows in the seconds range
FAST_FLOW = FlowConfig(target_error=1e-4, rel_tol=1e-6, abs_tol=1e-8)


@pytest.fixture
def two_level():
    return SpinSystem.two_level()


@pytest.fixture
def four_level():
    return SpinSystem.four_level()


@pytest.fixture
def coarse_two_level():
    return SpinSystem.two_level(grid=TimeGrid(total_time=1.0, dt=0.05))


@pytest.fixture
def coarse_four_level():
    return SpinSystem.four_level(grid=TimeGrid(total_time=1.2, dt=0.06))


@pytest.fixture
def random_hermitian():
    def make(dim: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        return 0.5 * (a + a.conj().T)
    return make


@pytest.fixture
def pi_pulse():
    """Constant pi/2 field on an undriven spin: P(1->2) = 1 exactly"""
    system = SpinSystem.two_level(omega=0.0)
    objective = build_objective(ObjectiveName.P12, system)
    field = ControlField.from_samples(np.full((1, system.grid.n_steps), np.pi / 2), system.grid)
    return objective, system, field


@pytest.fixture(scope="session")
def p12_flow():
    """Converged P(1->2) flow with K_eps (alpha 1 and 2) and fluence recorded at every step"""
    system = SpinSystem.two_level()
    objective = build_objective(ObjectiveName.P12, system)
    diagnostics = [
        RobustnessDiagnostic.for_alphas(objective, system, NoiseChannel.field, CorrelationKernel(), [2.0]),
        FluenceDiagnostic(),
    ]
    initial = random_field_for(system, LOW_FLUENCE_AMPLITUDE, [7, 0])
    return flow(objective, system, initial, FAST_FLOW, diagnostics)


@pytest.fixture
def fast_flow():
    return FAST_FLOW
