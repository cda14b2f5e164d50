"""
Multi-objective evolution strategy over Fourier amplitudes and phases,
minimizing (E_J, -K_beta). Each individual runs a (1+1) success-rule strategy;
survivors are chosen by nondominated rank, then 2D hypervolume contribution.
"""
import logging
from concurrent.futures import Executor, ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.settings import MOEA_GENERATIONS
from models.control import SpinSystem
from models.enums import NoiseChannel
from models.front import FrontPoint
from models.moea import Individual, MoeaConfig, MoeaResult
from models.noise import CorrelationKernel, NoiseModel
from models.objective import Objective
from service.dynamics import objective_value, propagate
from service.errors import DimensionMismatch, ReferencePointError
from service.fronts import REGIME_AMPLITUDES, nondominated_filter
from service.robustness import CHANNEL_PREFIX, robustness
from service.spin_system import mode_cap, sample_random_field

logger = logging.getLogger(__name__)

SUCCESS_THRESHOLD = 0.44
TWO_PI = 2.0 * np.pi


def hypervolume_2d(front, reference: Tuple[float, float]) -> float:
    """Area dominated by `front` inside the box bounded by `reference` (minimization)"""
    points = np.asarray(front, dtype=float).reshape(-1, 2)
    r1, r2 = reference
    if not np.all(np.isfinite(points)):
        raise ReferencePointError("Front contains non-finite coordinates")
    outside = (points[:, 0] > r1) | (points[:, 1] > r2)
    if np.any(outside):
        raise ReferencePointError(f"{int(np.sum(outside))} point(s) lie outside the reference box {reference}")

    area, ceiling = 0.0, r2
    for x, y in points[np.lexsort((points[:, 1], points[:, 0]))]:
        if y < ceiling:
            area += (r1 - x) * (ceiling - y)
            ceiling = y
    return float(area)


def hypervolume_contributions(front, reference: Tuple[float, float]) -> np.ndarray:
    """Exclusive hypervolume of each point of a mutually nondominated 2D front"""
    points = np.asarray(front, dtype=float).reshape(-1, 2)
    order = np.lexsort((points[:, 1], points[:, 0]))
    xs, ys = points[order, 0], points[order, 1]
    widths = np.append(xs[1:], reference[0]) - xs
    heights = np.insert(ys[:-1], 0, reference[1]) - ys
    contributions = np.empty(len(points))
    contributions[order] = widths * heights
    return contributions


def nondominated_ranks(fitness: np.ndarray) -> np.ndarray:
    """Rank 0 for the nondominated set, 1 for the set nondominated once it is removed, ..."""
    f = np.asarray(fitness, dtype=float)
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    dominates = le & lt  # [i, j]: i dominates j

    ranks = np.full(len(f), -1)
    remaining = np.ones(len(f), dtype=bool)
    rank = 0
    while remaining.any():
        dominated = np.any(dominates[remaining][:, remaining], axis=0)
        current = np.flatnonzero(remaining)[~dominated]
        ranks[current] = rank
        remaining[current] = False
        rank += 1
    return ranks


def select_worst(fitness: np.ndarray, reference: Tuple[float, float]) -> int:
    """Index to discard: worst rank, then least contribution; ties drop the latest entry"""
    clipped = np.minimum(np.asarray(fitness, dtype=float), np.asarray(reference))
    ranks = nondominated_ranks(fitness)
    candidates = np.flatnonzero(ranks == ranks.max())
    contributions = hypervolume_contributions(clipped[candidates], reference)
    least = np.flatnonzero(contributions == contributions.min())
    return int(candidates[least[-1]])


def reference_point(fitness: np.ndarray) -> Tuple[float, float]:
    worst = float(np.max(fitness[:, 1]))
    return 1.0, worst + 0.1 * abs(worst) + 1e-12


def population_hypervolume(population: Sequence[Individual], reference: Tuple[float, float]) -> float:
    fitness = np.array([ind.fitness for ind in population])
    return hypervolume_2d(np.minimum(fitness, np.asarray(reference)), reference)


def genome_fitness(
    objective: Objective,
    system: SpinSystem,
    genome: np.ndarray,
    channel: NoiseChannel,
    kernel: CorrelationKernel,
) -> Tuple[float, float]:
    """(E_J, K_beta) through the same propagation and Hessian path as the gradient flows"""
    candidate = Individual(genome=genome, step_size=0.0, success_rate=0.0)
    field = candidate.field(system.n_spins, system.grid).to_samples()
    history = propagate(system, field)
    e_j = 1.0 - objective_value(objective, history.final)
    k = robustness(objective, system, field, channel, [kernel], history=history)[0]
    return e_j, k


def _evaluate_job(args) -> Tuple[float, float]:
    return genome_fitness(*args)


class EvolutionStrategy:
    """Step-size and covariance adaptation for the per-individual (1+1) strategies"""

    def __init__(self, config: MoeaConfig, n_genes: int):
        self.config = config
        self.n = n_genes
        self.p_target = config.target_success
        self.c_p = self.p_target / (2.0 + self.p_target)
        self.damping = 1.0 + n_genes / 2.0
        self.c_c = 2.0 / (n_genes + 2.0)
        self.c_cov = 2.0 / (n_genes ** 2 + 6.0)
        half = n_genes // 2
        self.scales = np.concatenate([np.full(half, config.amplitude_scale), np.full(half, np.pi)])

    def spawn(self, genome: np.ndarray) -> Individual:
        cov = np.eye(self.n) if self.config.full_covariance else None
        path = np.zeros(self.n) if self.config.full_covariance else None
        return Individual(
            genome=genome, step_size=self.config.sigma0, success_rate=self.p_target, cov=cov, path=path,
        )

    def mutate(self, parent: Individual, rng: np.random.Generator) -> Tuple[Individual, np.ndarray]:
        z = rng.standard_normal(self.n)
        if parent.cov is not None:
            z = np.linalg.cholesky(parent.cov) @ z
        genome = parent.genome + parent.step_size * self.scales * z

        half = self.n // 2
        genome[:half] = np.abs(genome[:half])
        phases = np.mod(genome[half:], TWO_PI)
        genome[half:] = np.where(phases >= TWO_PI, 0.0, phases)

        child = parent.copy()
        child.genome = genome
        return child, z

    def update_step_size(self, individual: Individual, success: bool):
        individual.success_rate = (1.0 - self.c_p) * individual.success_rate + self.c_p * float(success)
        individual.step_size *= np.exp(
            (individual.success_rate - self.p_target) / (self.damping * (1.0 - self.p_target))
        )

    def update_covariance(self, individual: Individual, z: np.ndarray):
        if individual.cov is None:
            return
        if individual.success_rate < SUCCESS_THRESHOLD:
            individual.path = (1.0 - self.c_c) * individual.path + np.sqrt(self.c_c * (2.0 - self.c_c)) * z
            individual.cov = (1.0 - self.c_cov) * individual.cov + self.c_cov * np.outer(individual.path, individual.path)
        else:
            individual.path = (1.0 - self.c_c) * individual.path
            individual.cov = (1.0 - self.c_cov) * individual.cov + self.c_cov * (
                np.outer(individual.path, individual.path) + self.c_c * (2.0 - self.c_c) * individual.cov
            )


def _front(population: Sequence[Individual], name: str, generation: int) -> List[FrontPoint]:
    points = [
        FrontPoint(e_j=ind.fitness[0], secondaries={name: ind.secondary}, run_id=i, s=float(generation))
        for i, ind in enumerate(population)
    ]
    front, seen = [], set()
    for point in nondominated_filter(points, ["e_j", name]):
        key = (point.e_j, point.secondaries[name])
        if key not in seen:
            seen.add(key)
            front.append(point)
    return front


class MoeaService:
    """Runs the evolution strategy for one objective and noise model"""

    def __init__(self, objective: Objective, system: SpinSystem, noise: NoiseModel, config: MoeaConfig):
        n_modes = config.n_modes or mode_cap(system)
        if n_modes > mode_cap(system):
            raise DimensionMismatch(f"{n_modes} Fourier modes exceed the cap of {mode_cap(system)}")
        self.objective = objective
        self.system = system
        self.noise = noise
        self.config = config
        self.n_modes = n_modes
        self.generations = MOEA_GENERATIONS[system.n_spins] if config.generations is None else config.generations
        self.name = CHANNEL_PREFIX[noise.channel]
        self.strategy = EvolutionStrategy(config, 2 * system.n_spins * n_modes)

    def _evaluate(self, individuals: List[Individual], pool: Optional[Executor]):
        jobs = [(self.objective, self.system, ind.genome, self.noise.channel, self.noise.kernel) for ind in individuals]
        results = pool.map(_evaluate_job, jobs) if pool is not None else map(_evaluate_job, jobs)
        for ind, (e_j, k) in zip(individuals, results):
            ind.fitness = (e_j, -k)
            ind.secondary = k

    def _initial_population(self, initial_genomes: Optional[Sequence[np.ndarray]]) -> List[Individual]:
        if initial_genomes is not None:
            genomes = [np.array(g, dtype=float) for g in initial_genomes]
            if len(genomes) != self.config.population:
                raise ValueError(f"Expected {self.config.population} initial genomes, got {len(genomes)}")
            if any(g.shape != (self.strategy.n,) for g in genomes):
                raise DimensionMismatch(f"Initial genomes must have {self.strategy.n} genes")
            return [self.strategy.spawn(g) for g in genomes]

        population = []
        amplitude_range = REGIME_AMPLITUDES[self.config.regime]
        for i in range(self.config.population):
            field = sample_random_field(
                amplitude_range, self.system.grid, self.n_modes, [self.config.seed, i], self.system.n_spins,
            )
            population.append(self.strategy.spawn(np.concatenate([field.amplitudes.ravel(), field.phases.ravel()])))
        return population

    def run(self, threads: int = 1, initial_genomes: Optional[Sequence[np.ndarray]] = None) -> MoeaResult:
        cfg = self.config
        pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
        try:
            population = self._initial_population(initial_genomes)
            self._evaluate(population, pool)
            reference = reference_point(np.array([ind.fitness for ind in population]))
            hypervolumes = [population_hypervolume(population, reference)]
            snapshots = [(0, _front(population, self.name, 0))]
            logger.info(
                f"MOEA start: {cfg.population} individuals, {self.strategy.n} genes, "
                f"reference {reference}, hypervolume {hypervolumes[0]:.6e}"
            )

            for generation in range(1, self.generations + 1):
                rng = np.random.default_rng([cfg.seed, 1, generation])
                parents = list(population)
                offspring = [self.strategy.mutate(parent, rng) for parent in parents]
                self._evaluate([child for child, _ in offspring], pool)

                for parent, (child, z) in zip(parents, offspring):
                    population.append(child)
                    removed = population.pop(select_worst(np.array([ind.fitness for ind in population]), reference))
                    success = removed is not child
                    self.strategy.update_step_size(parent, success)
                    if success:
                        child.step_size, child.success_rate = parent.step_size, parent.success_rate
                        self.strategy.update_covariance(child, z)

                hypervolumes.append(population_hypervolume(population, reference))
                if generation % cfg.snapshot_every == 0 or generation == self.generations:
                    front = _front(population, self.name, generation)
                    snapshots.append((generation, front))
                    sigma = float(np.median([ind.step_size for ind in population]))
                    logger.info(
                        f"Generation {generation}: front size {len(front)}, best E_J "
                        f"{min(p.e_j for p in front):.3e}, hypervolume {hypervolumes[-1]:.6e}, median sigma {sigma:.3e}"
                    )
        finally:
            if pool is not None:
                pool.shutdown()

        return MoeaResult(
            population=population,
            front=_front(population, self.name, self.generations),
            snapshots=snapshots,
            hypervolumes=hypervolumes,
            reference=reference,
            secondary_name=self.name,
        )


def moea_run(
    objective: Objective,
    system: SpinSystem,
    noise: NoiseModel,
    config: MoeaConfig,
    threads: int = 1,
    initial_genomes: Optional[Sequence[np.ndarray]] = None,
) -> MoeaResult:
    return MoeaService(objective, system, noise, config).run(threads, initial_genomes)
