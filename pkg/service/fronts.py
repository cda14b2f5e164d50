"""
Monte-Carlo ensembles of gradient flows and the fronts built from them:
per-bin envelopes, threshold points E_J = -K, distributions at fixed
fidelity, nondominated filtering and the (E_J, K_eps, fluence) surface.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from config.settings import HIGH_FLUENCE_AMPLITUDE, LOW_FLUENCE_AMPLITUDE
from models.control import ControlField, SpinSystem
from models.enums import InitRegime, NoiseChannel, ObjectiveName, Sense
from models.front import EnsembleResult, FrontPoint, Histogram, Surface, sense_of
from models.noise import CorrelationKernel
from models.objective import Objective
from models.trajectory import FlowConfig, TrajectoryRecord
from service.dmorph import Diagnostic, flow
from service.dynamics import build_objective
from service.errors import DimensionMismatch, InsufficientData, IntegratorError
from service.robustness import FluenceDiagnostic, RobustnessDiagnostic
from service.spin_system import random_field_for

logger = logging.getLogger(__name__)

BINS_PER_DECADE = 6
TOP_OF_BINS = 1e-1
REGIME_AMPLITUDES = {InitRegime.low: LOW_FLUENCE_AMPLITUDE, InitRegime.high: HIGH_FLUENCE_AMPLITUDE}


class RandomFieldSampler:
    """Initial Fourier field for run r, seeded by (seed, r)"""

    def __init__(self, system: SpinSystem, regime: InitRegime = InitRegime.low):
        self.system = system
        self.regime = regime

    def __call__(self, run_id: int, seed: int) -> ControlField:
        return random_field_for(self.system, REGIME_AMPLITUDES[self.regime], [seed, run_id])


def log_bins(target_error: float, upper: float = TOP_OF_BINS, per_decade: int = BINS_PER_DECADE) -> np.ndarray:
    """Bin centers from `upper` down to `target_error`, evenly spaced in log10"""
    top, bottom = np.log10(upper), np.log10(target_error)
    count = int(np.floor((top - bottom) * per_decade + 1e-9)) + 1
    return 10.0 ** (top - np.arange(count) / per_decade)


def interpolate_secondary(record: TrajectoryRecord, name: str, e_values) -> np.ndarray:
    """
    Secondary value at the given fidelity errors, linear in log10 E_J along the
    running minimum of E_J; NaN where the run never reached that fidelity.
    """
    e_values = np.atleast_1d(np.asarray(e_values, dtype=float))
    e = record.e_j
    v = record.values(name)
    keep = np.isfinite(v) & (e > 0)
    e, v = e[keep], v[keep]
    if len(e) == 0:
        return np.full(e_values.shape, np.nan)

    # samples that set a new minimum of E_J, in order
    running = np.minimum.accumulate(e)
    new_min = np.concatenate([[True], running[1:] < running[:-1]])
    x = np.log10(e[new_min])[::-1]
    y = v[new_min][::-1]

    query = np.log10(e_values)
    out = np.interp(query, x, y)
    out[(query < x[0]) | (query > x[-1])] = np.nan
    return out


def _best(values: np.ndarray, sense: Sense) -> Tuple[np.ndarray, np.ndarray]:
    """Best finite value per column and the row it came from (NaN / -1 if none)"""
    finite = np.isfinite(values)
    filler = -np.inf if sense == Sense.maximize else np.inf
    filled = np.where(finite, values, filler)
    rows = np.argmax(filled, axis=0) if sense == Sense.maximize else np.argmin(filled, axis=0)
    best = filled[rows, np.arange(values.shape[1])]
    has_any = finite.any(axis=0)
    return np.where(has_any, best, np.nan), np.where(has_any, rows, -1)


def build_envelope(
    trajectories: Sequence[TrajectoryRecord],
    names: Iterable[str],
    bins: np.ndarray,
) -> Tuple[Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """Best secondary value over trajectories in every bin, and the run ids behind them"""
    envelope, sources = {}, {}
    run_ids = np.array([t.run_id for t in trajectories])
    for name in names:
        table = np.array([interpolate_secondary(t, name, bins) for t in trajectories])
        best, rows = _best(table, sense_of(name))
        envelope[name] = best
        sources[name] = np.where(rows >= 0, run_ids[np.clip(rows, 0, None)], -1)
    return envelope, sources


def threshold_point(bins: np.ndarray, values: np.ndarray) -> Optional[Tuple[float, float]]:
    """
    First crossing of E + K(E) = 0 scanning from high to low E_J, with K
    interpolated linearly in log10 E between the bracketing bins.
    """
    bins = np.asarray(bins, dtype=float)
    values = np.asarray(values, dtype=float)
    for b in range(len(bins) - 1):
        k_hi, k_lo = values[b], values[b + 1]
        if not (np.isfinite(k_hi) and np.isfinite(k_lo)):
            continue
        x_hi, x_lo = np.log10(bins[b]), np.log10(bins[b + 1])
        f_hi, f_lo = bins[b] + k_hi, bins[b + 1] + k_lo
        if f_hi == 0.0:
            return float(bins[b]), float(k_hi)
        if np.sign(f_hi) == np.sign(f_lo):
            continue

        def k_of(x):
            return k_lo + (k_hi - k_lo) * (x - x_lo) / (x_hi - x_lo)

        root = brentq(lambda x: 10.0 ** x + k_of(x), x_lo, x_hi, xtol=1e-14, rtol=1e-14)
        return float(10.0 ** root), float(k_of(root))
    return None


def _run_one(args) -> Optional[TrajectoryRecord]:
    objective, system, sampler, config, diagnostics, seed, run_id = args
    initial = sampler(run_id, seed)
    try:
        record = flow(objective, system, initial, config, diagnostics, run_id=run_id)
    except IntegratorError as e:
        logger.error(f"Run {run_id} dropped: {e}")
        return None
    record.regime = getattr(sampler, "regime", None)
    return record


def run_flows(
    objective: Objective,
    system: SpinSystem,
    n_runs: int,
    sampler: Callable[[int, int], ControlField],
    config: FlowConfig,
    diagnostics: Sequence[Diagnostic],
    seed: int,
    threads: int = 1,
    first_run: int = 0,
) -> List[TrajectoryRecord]:
    """Independent flows, in run-id order regardless of worker count"""
    run_ids = range(first_run, first_run + n_runs)
    jobs = [(objective, system, sampler, config, list(diagnostics), seed, r) for r in run_ids]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_run_one, jobs))
    else:
        records = []
        for job in jobs:
            records.append(_run_one(job))
            if len(records) % 10 == 0:
                logger.info(f"Ensemble progress: {len(records)}/{n_runs} runs")
    return [r for r in records if r is not None]


def mc_ensemble(
    objective: Objective,
    system: SpinSystem,
    n_runs: int,
    sampler: Callable[[int, int], ControlField],
    config: FlowConfig,
    diagnostics: Sequence[Diagnostic],
    seed: int,
    threads: int = 1,
    bins: Optional[np.ndarray] = None,
    first_run: int = 0,
) -> EnsembleResult:
    """Ensemble of D-MORPH runs from random initial fields with envelopes and thresholds"""
    if n_runs < 1:
        raise ValueError(f"n_runs must be at least 1, got {n_runs}")
    trajectories = run_flows(objective, system, n_runs, sampler, config, diagnostics, seed, threads, first_run)
    return summarize_ensemble(trajectories, config.target_error, bins, regime=getattr(sampler, "regime", None))


def summarize_ensemble(
    trajectories: List[TrajectoryRecord],
    target_error: float,
    bins: Optional[np.ndarray] = None,
    regime: Optional[InitRegime] = None,
) -> EnsembleResult:
    """Envelope and thresholds for already computed trajectories"""
    bins = log_bins(target_error) if bins is None else np.asarray(bins, dtype=float)
    names = trajectories[0].secondary_names() if trajectories else []
    envelope, sources = build_envelope(trajectories, names, bins)
    thresholds = {
        name: threshold_point(bins, envelope[name])
        for name in names if sense_of(name) == Sense.maximize
    }
    converged = sum(1 for t in trajectories if t.converged)
    logger.info(f"Ensemble: {converged}/{len(trajectories)} runs converged; thresholds {thresholds}")
    return EnsembleResult(
        trajectories=trajectories,
        bins=bins,
        envelope=envelope,
        envelope_runs=sources,
        thresholds=thresholds,
        regime=regime,
    )


def distribution_at_fidelity(
    result: EnsembleResult,
    name: str,
    e_j_target: float,
    min_runs: int = 10,
) -> Histogram:
    """Histogram (Freedman-Diaconis bins) of a secondary across converged runs at a fixed E_J"""
    converged = [t for t in result.trajectories if t.converged]
    values = np.array([interpolate_secondary(t, name, e_j_target)[0] for t in converged])
    values = values[np.isfinite(values)]
    if len(values) < min_runs:
        raise InsufficientData(f"Only {len(values)} runs reached E_J={e_j_target:.1e}, need {min_runs}")
    counts, edges = np.histogram(values, bins="fd")
    return Histogram(counts=counts, edges=edges, values=values)


def mode_in_top_quartile(histogram: Histogram) -> bool:
    """Whether the histogram mode lies in the top quarter of the sampled range"""
    low, high = float(np.min(histogram.values)), float(np.max(histogram.values))
    return histogram.mode >= high - 0.25 * (high - low)


def front_points(trajectories: Sequence[TrajectoryRecord]) -> List[FrontPoint]:
    """Every recorded sample of every run as a front point"""
    return [
        FrontPoint(e_j=p.e_j, secondaries=dict(p.secondaries), run_id=t.run_id, s=p.s)
        for t in trajectories for p in t.samples
    ]


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """a dominates b in minimization form"""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def nondominated_filter(points: Sequence[FrontPoint], objectives: Sequence[str]) -> List[FrontPoint]:
    """
    Mutually nondominated subset. Points are visited in lexicographic order of
    their minimized coordinates, so only already kept points can dominate the
    next one. Result ordered by e_j (input order among ties).
    """
    if not objectives:
        raise ValueError("At least one objective is required")
    keyed = [(p.minimized(objectives), i, p) for i, p in enumerate(points)]
    keyed.sort(key=lambda item: (item[0], item[1]))

    kept: List[Tuple[Tuple[float, ...], int, FrontPoint]] = []
    for coords, index, point in keyed:
        if not any(dominates(k[0], coords) for k in kept):
            kept.append((coords, index, point))

    kept.sort(key=lambda item: (item[2].e_j, item[1]))
    return [item[2] for item in kept]


def dominance_report(front_a: Sequence[FrontPoint], front_b: Sequence[FrontPoint], objectives: Sequence[str]) -> Dict[str, int]:
    """How many points of each front are dominated by some point of the other"""
    a = [p.minimized(objectives) for p in front_a]
    b = [p.minimized(objectives) for p in front_b]
    return {
        "a_dominated_by_b": sum(1 for x in a if any(dominates(y, x) for y in b)),
        "b_dominated_by_a": sum(1 for y in b if any(dominates(x, y) for x in a)),
        "a_size": len(a),
        "b_size": len(b),
    }


def surface_3d(
    system: SpinSystem,
    n_runs: int,
    kernel: CorrelationKernel,
    seed: int,
    config: FlowConfig,
    regime: InitRegime = InitRegime.low,
    threads: int = 1,
    sampler: Optional[Callable[[int, int], ControlField]] = None,
) -> Surface:
    """Hadamard-gate ensemble reduced to its (E_J, K_eps, fluence) nondominated set"""
    if system.n_spins != 1:
        raise DimensionMismatch("The fidelity/robustness/fluence surface is defined for one spin")
    objective = build_objective(ObjectiveName.FH, system)
    diagnostics = [
        RobustnessDiagnostic.for_alphas(objective, system, NoiseChannel.field, kernel),
        FluenceDiagnostic(),
    ]
    sampler = sampler or RandomFieldSampler(system, regime)
    trajectories = run_flows(objective, system, n_runs, sampler, config, diagnostics, seed, threads)
    points = front_points(trajectories)
    surface = nondominated_filter(points, ["e_j", "k_eps", "fluence"])
    projections = {
        "k_eps": nondominated_filter(surface, ["e_j", "k_eps"]),
        "fluence": nondominated_filter(surface, ["e_j", "fluence"]),
    }
    logger.info(f"Surface: {len(surface)} nondominated points from {len(points)} samples")
    return Surface(points=surface, projections=projections, trajectories=trajectories)
