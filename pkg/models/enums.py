from enum import Enum


class Parametrization(str, Enum):
    """How a control field is stored"""
    time_samples = "time_samples"
    fourier = "fourier"


class ObjectiveKind(str, Enum):
    """Primary figure of merit family"""
    state_transfer = "state_transfer"
    observable = "observable"
    gate_fidelity = "gate_fidelity"


class ObjectiveName(str, Enum):
    """Named objectives of the catalogue (levels counted by descending drift energy)"""
    P12 = "P12"      # level 1 -> level 2, one spin
    P14 = "P14"      # level 1 -> level 4, two spins
    SX = "SX"        # <sigma_x>, rho_i = |0><0|
    SX1 = "SX1"      # <sigma_x (x) I>, rho_i = |00><00|
    FH = "FH"        # Hadamard gate
    FCNOT = "FCNOT"  # CNOT gate


class NoiseChannel(str, Enum):
    """Parameter that fluctuates: the control field or the transition energy"""
    field = "field"
    detuning = "detuning"


class KernelForm(str, Enum):
    """Correlation kernel family"""
    exp_decay = "exp_decay"
    white = "white"
    custom = "custom"


class OptimizerKind(str, Enum):
    """Experiment driver"""
    dmorph = "dmorph"
    mc = "mc"
    moea = "moea"
    surface = "surface"


class InitRegime(str, Enum):
    """Initial Fourier amplitude range"""
    low = "low"     # a_k in [0, 0.05]
    high = "high"   # a_k in [0, 50]


class FlowStatus(str, Enum):
    """Why a gradient flow stopped"""
    converged = "converged"
    s_max = "s_max"
    stalled = "stalled"


class Sense(str, Enum):
    """Optimization direction of a front coordinate"""
    minimize = "minimize"
    maximize = "maximize"
