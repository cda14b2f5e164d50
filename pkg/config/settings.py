"""
Environment defaults and the physical constants used by presets and tests
"""
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

VERSION = "1.0.0"

# Environment overrides
DEFAULT_OUTPUT_DIR = Path(os.getenv("QCINV_OUTPUT_DIR", "results"))
DEFAULT_LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
DEFAULT_THREADS = int(os.getenv("QCINV_THREADS", "1"))

# Spin parameters
OMEGA_1 = 20.0
OMEGA_2 = 24.0
COUPLING_12 = 0.2

# Time grids (T, dt)
TWO_LEVEL_GRID = (1.0, 0.01)
FOUR_LEVEL_GRID = (6.0, 0.06)

# Noise
NOISE_STRENGTH_A2 = 1e-4
CORRELATION_TIME = 1.0

# Fourier controls: omega_k = k*pi, capped at 10*pi (2-level) and 20*pi (4-level)
MAX_MODES = {1: 10, 2: 20}
LOW_FLUENCE_AMPLITUDE = (0.0, 0.05)
HIGH_FLUENCE_AMPLITUDE = (0.0, 50.0)

# Numerical thresholds
DEGENERACY_TOL = 1e-9
STALL_GRADIENT_NORM = 1e-12
GRADIENT_DECAY = 1e-4

# Evolutionary search
MOEA_POPULATION = 100
MOEA_GENERATIONS = {1: 1000, 2: 2000}

# Output tables
SIGNIFICANT_DIGITS = 17
