"""
Experiment orchestration: one validated config in, one directory of tables,
a manifest, a run log and optional plot scripts out. The directory is built
under a temporary name and only renamed into place when the run succeeds.
"""
import json
import logging
import os
import shutil
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from config.experiment import ExperimentConfig, load_config
from config.logging_config import add_file_handler, remove_handler
from config.settings import VERSION
from models.control import SpinSystem
from models.enums import ObjectiveName, OptimizerKind
from models.front import EnsembleResult
from models.objective import Objective
from models.trajectory import TrajectoryRecord
from service.dmorph import Diagnostic, flow
from service.dynamics import build_objective
from service.errors import InsufficientData
from service.fronts import (
    RandomFieldSampler,
    distribution_at_fidelity,
    dominance_report,
    front_points,
    nondominated_filter,
    run_flows,
    summarize_ensemble,
    surface_3d,
)
from service.moea import moea_run
from service.plots import PlotScriptWriter
from service.robustness import CHANNEL_PREFIX, FluenceDiagnostic, RobustnessDiagnostic
from service.table_io import TableWriter, merge_trajectories

logger = logging.getLogger(__name__)


class ExperimentRun:
    """State of one experiment while its tables are being written"""

    def __init__(self, config: ExperimentConfig, directory: Path):
        self.config = config
        self.directory = directory
        self.tables = TableWriter(config.output.delimiter)
        self.outputs: List[str] = []
        self.summary: Dict[str, object] = {}
        self.panels: List[Dict[str, str]] = []
        self._systems: Dict[int, SpinSystem] = {}

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.directory / name

    def system_for(self, name: ObjectiveName) -> SpinSystem:
        n_spins = self.config.spins_for(name)
        if n_spins not in self._systems:
            self._systems[n_spins] = self.config.system.build(n_spins)
        return self._systems[n_spins]

    def diagnostics(self, objective: Objective, system: SpinSystem) -> List[Diagnostic]:
        noise = self.config.noise
        result: List[Diagnostic] = [
            RobustnessDiagnostic.for_alphas(objective, system, channel, noise.kernel(), noise.alphas)
            for channel in noise.channels
        ]
        if noise.fluence:
            result.append(FluenceDiagnostic())
        return result

    def flows(self, objective: Objective, system: SpinSystem) -> List[TrajectoryRecord]:
        """Ensemble over every configured regime; run ids continue across regimes"""
        cfg = self.config
        n_runs = cfg.n_runs_for(system.n_spins)
        diagnostics = self.diagnostics(objective, system)
        records: List[TrajectoryRecord] = []
        for index, regime in enumerate(cfg.optimizer.ensemble.regimes):
            records += run_flows(
                objective, system, n_runs, RandomFieldSampler(system, regime),
                cfg.optimizer.flow, diagnostics, cfg.seed, cfg.threads, first_run=index * n_runs,
            )
        return records

    def write_ensemble(self, prefix: str, records: List[TrajectoryRecord]) -> EnsembleResult:
        cfg = self.config
        regimes = cfg.optimizer.ensemble.regimes
        result = summarize_ensemble(
            records, cfg.optimizer.flow.target_error, regime=regimes[0] if len(regimes) == 1 else None,
        )
        if cfg.output.trajectories:
            self.tables.trajectories(self.path(f"{prefix}trajectories.txt"), records)
        self.tables.runs(self.path(f"{prefix}runs.txt"), records)
        self.tables.envelope(self.path(f"{prefix}envelope.txt"), result)
        self.tables.thresholds(self.path(f"{prefix}thresholds.txt"), result.thresholds)

        histogram_at = cfg.optimizer.ensemble.histogram_at
        if histogram_at is not None:
            for name in result.thresholds:
                try:
                    histogram = distribution_at_fidelity(
                        result, name, 10.0 ** histogram_at, cfg.optimizer.ensemble.min_histogram_runs,
                    )
                except InsufficientData as e:
                    logger.warning(f"No {name} distribution for {prefix.rstrip('_')}: {e}")
                    continue
                self.tables.histogram(self.path(f"{prefix}histogram_{name}.txt"), histogram)

        if cfg.output.snapshots:
            for record in records:
                self.tables.field(self.path(f"{prefix}fields/run{record.run_id:05d}.txt"), record.final_field)

        self.summary[prefix.rstrip("_")] = {
            "runs": len(records),
            "converged": result.n_converged,
            "thresholds": {k: list(v) if v else None for k, v in result.thresholds.items()},
        }
        return result

    def run_dmorph(self):
        cfg = self.config
        regime = cfg.optimizer.ensemble.regimes[0]
        for name in cfg.objective.names:
            system = self.system_for(name)
            objective = build_objective(name, system)
            initial = RandomFieldSampler(system, regime)(0, cfg.seed)
            record = flow(objective, system, initial, cfg.optimizer.flow, self.diagnostics(objective, system))
            record.regime = regime
            prefix = f"{name.value}_"
            self.tables.trajectories(self.path(f"{prefix}trajectories.txt"), [record])
            self.tables.runs(self.path(f"{prefix}runs.txt"), [record])
            self.tables.fourier(self.path(f"{prefix}initial_fourier.txt"), initial)
            self.tables.field(self.path(f"{prefix}initial_field.txt"), initial)
            self.tables.field(self.path(f"{prefix}final_field.txt"), record.final_field)
            if cfg.output.snapshots:
                for sample in record.snapshots():
                    self.tables.field(self.path(f"{prefix}snapshot_e{sample.e_j:.0e}.txt"), sample.snapshot)
            self.summary[name.value] = {"status": record.status.value, "e_j": record.final_error}

    def run_mc(self):
        for name in self.config.objective.names:
            system = self.system_for(name)
            prefix = f"{name.value}_"
            self.write_ensemble(prefix, self.flows(build_objective(name, system), system))
            for channel in self.config.noise.channels:
                self.panels.append({"prefix": prefix, "secondary": CHANNEL_PREFIX[channel]})

    def run_moea(self):
        cfg = self.config
        reports: Dict[str, Dict[str, int]] = {}
        for name in cfg.objective.names:
            system = self.system_for(name)
            objective = build_objective(name, system)
            moea_config = cfg.moea_config(system.n_spins)
            mc_points = None
            if cfg.optimizer.compare_mc:
                records = self.flows(objective, system)
                self.write_ensemble(f"{name.value}_", records)
                mc_points = front_points(records)
            for channel in cfg.noise.channels:
                secondary = CHANNEL_PREFIX[channel]
                panel = f"{name.value}_{channel.value}"
                result = moea_run(objective, system, cfg.noise.model(channel), moea_config, cfg.threads)
                self.tables.front(self.path(f"{panel}_moea_front.txt"), result.front, [secondary])
                self.tables.moea_history(self.path(f"{panel}_moea_history.txt"), result)
                self.tables.hypervolumes(self.path(f"{panel}_hypervolumes.txt"), result)
                self.panels.append({"prefix": f"{panel}_", "secondary": secondary})
                if mc_points is not None:
                    mc_front = nondominated_filter(mc_points, ["e_j", secondary])
                    self.tables.front(self.path(f"{panel}_mc_front.txt"), mc_front, [secondary])
                    reports[panel] = dominance_report(result.front, mc_front, ["e_j", secondary])
                    logger.info(f"{panel}: MOEA vs MC dominance {reports[panel]}")
        if reports:
            self.tables.dominance(self.path("dominance.txt"), reports)
            self.summary["dominance"] = reports

    def run_surface(self):
        cfg = self.config
        system = self.system_for(ObjectiveName.FH)
        surface = surface_3d(
            system, cfg.n_runs_for(1), cfg.noise.kernel(), cfg.seed,
            cfg.optimizer.flow, cfg.optimizer.ensemble.regimes[0], cfg.threads,
        )
        names = ["k_eps", "fluence"]
        self.tables.front(self.path("surface.txt"), surface.points, names)
        for name, points in surface.projections.items():
            self.tables.front(self.path(f"surface_{name}.txt"), points, names)
        if cfg.output.trajectories:
            self.tables.trajectories(self.path("trajectories.txt"), surface.trajectories)
        self.tables.runs(self.path("runs.txt"), surface.trajectories)
        self.summary["surface"] = {"points": len(surface.points), "runs": len(surface.trajectories)}

    def execute(self):
        kind = self.config.optimizer.kind
        names = ", ".join(n.value for n in self.config.objective.names)
        logger.info(f"Experiment '{self.config.name}': {kind.value} for {names}, seed {self.config.seed}")
        {
            OptimizerKind.dmorph: self.run_dmorph,
            OptimizerKind.mc: self.run_mc,
            OptimizerKind.moea: self.run_moea,
            OptimizerKind.surface: self.run_surface,
        }[kind]()

        if self.config.output.plots:
            plots = PlotScriptWriter(self.directory, self.config.name, self.config.output.delimiter)
            if kind == OptimizerKind.mc and self.panels:
                self.outputs.append(plots.ensemble(self.panels).name)
            elif kind == OptimizerKind.moea and self.panels:
                self.outputs.append(plots.moea(self.panels).name)
            elif kind == OptimizerKind.surface:
                self.outputs.append(plots.surface().name)

    def write_manifest(self):
        manifest = {
            "name": self.config.name,
            "version": VERSION,
            "seed": self.config.seed,
            "config": self.config.model_dump(mode="json"),
            "outputs": sorted(self.outputs),
            "summary": self.summary,
        }
        with open(self.directory / "manifest.json", "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)


class ExperimentService:
    def run(self, config: ExperimentConfig) -> Path:
        """Run a validated config; returns the output directory"""
        target = config.output_dir
        staging = target.parent / f".{target.name}.partial-{os.getpid()}"
        if staging.exists():
            shutil.rmtree(staging)
        staging.mkdir(parents=True)

        handler = add_file_handler(staging / "run.log")
        try:
            run = ExperimentRun(config, staging)
            run.execute()
            run.write_manifest()
        except Exception as e:
            logger.error(f"Experiment '{config.name}' failed: {e}")
            remove_handler(handler)
            shutil.rmtree(staging, ignore_errors=True)
            raise
        remove_handler(handler)

        if target.exists():
            logger.warning(f"Replacing previous results in {target}")
            shutil.rmtree(target)
        staging.rename(target)
        logger.info(f"Experiment '{config.name}' written to {target}")
        return target

    def run_experiment(self, path: Path, seed: Optional[int] = None, threads: Optional[int] = None) -> Path:
        config = load_config(path).with_overrides(seed=seed, threads=threads)
        return self.run(config)

    def merge_fronts(
        self,
        sources: Sequence[Path],
        output: Path,
        target_error: float,
        delimiter: str = " ",
        histogram_at: Optional[float] = None,
    ) -> EnsembleResult:
        """Envelope and thresholds over trajectory tables produced on several machines"""
        pairs = [(Path(p), Path(p).with_name(Path(p).name.replace("trajectories", "runs"))) for p in sources]
        records = merge_trajectories(pairs)
        if not records:
            raise InsufficientData("No trajectories found in the merged tables")
        result = summarize_ensemble(records, target_error)
        tables = TableWriter(delimiter)
        output = Path(output)
        output.mkdir(parents=True, exist_ok=True)
        tables.trajectories(output / "trajectories.txt", records)
        tables.runs(output / "runs.txt", records)
        tables.envelope(output / "envelope.txt", result)
        tables.thresholds(output / "thresholds.txt", result.thresholds)
        if histogram_at is not None:
            for name in result.thresholds:
                tables.histogram(output / f"histogram_{name}.txt", distribution_at_fidelity(result, name, 10.0 ** histogram_at))
        logger.info(f"Merged ensemble of {len(records)} runs written to {output}")
        return result


experiment_service = ExperimentService()
