"""
Plain-text result tables: UTF-8, one header line, space/comma/tab delimited,
floats written with 17 significant digits independent of locale.
"""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import SIGNIFICANT_DIGITS
from models.control import ControlField
from models.enums import FlowStatus, InitRegime, Parametrization
from models.front import EnsembleResult, FrontPoint, Histogram
from models.moea import MoeaResult
from models.trajectory import TrajectoryRecord, TrajectorySample
from service.errors import InsufficientData

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["run_id", "s", "e_j", "gradient_norm", "field_step"]
RUN_COLUMNS = ["run_id", "status", "regime", "n_samples", "s_final", "e_j_final"]


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if np.isnan(value):
            return "nan"
        if np.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, f".{SIGNIFICANT_DIGITS - 1}e")
    return str(value)


class TableWriter:
    """Writes every table of an experiment with one delimiter"""

    def __init__(self, delimiter: str = " "):
        self.delimiter = delimiter

    def write(self, path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [self.delimiter.join(header)]
        lines.extend(self.delimiter.join(format_value(v) for v in row) for row in rows)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
        logger.debug(f"Wrote {len(lines) - 1} rows to {path}")
        return path

    def trajectories(self, path: Path, records: Sequence[TrajectoryRecord]) -> Path:
        names = records[0].secondary_names() if records else []
        rows = (
            [r.run_id, p.s, p.e_j, p.gradient_norm, p.field_step] + [p.secondaries.get(n, np.nan) for n in names]
            for r in records for p in r.samples
        )
        return self.write(path, TRAJECTORY_COLUMNS + names, rows)

    def runs(self, path: Path, records: Sequence[TrajectoryRecord]) -> Path:
        rows = (
            [r.run_id, r.status.value, r.regime.value if r.regime else "none", len(r.samples),
             r.samples[-1].s if r.samples else np.nan, r.final_error]
            for r in records
        )
        return self.write(path, RUN_COLUMNS, rows)

    def envelope(self, path: Path, result: EnsembleResult) -> Path:
        names = list(result.envelope)
        header = ["e_j"] + [col for n in names for col in (n, f"{n}_run")]
        rows = (
            [e] + [v for n in names for v in (result.envelope[n][b], int(result.envelope_runs[n][b]))]
            for b, e in enumerate(result.bins)
        )
        return self.write(path, header, rows)

    def thresholds(self, path: Path, thresholds: Dict[str, Optional[Tuple[float, float]]]) -> Path:
        rows = (
            [name, *(point if point is not None else (np.nan, np.nan)), int(point is not None)]
            for name, point in thresholds.items()
        )
        return self.write(path, ["secondary", "e_star", "k_star", "found"], rows)

    def front(self, path: Path, points: Sequence[FrontPoint], names: Sequence[str]) -> Path:
        rows = ([p.e_j] + [p.secondaries[n] for n in names] + [p.run_id, p.s] for p in points)
        return self.write(path, ["e_j", *names, "run_id", "s"], rows)

    def histogram(self, path: Path, histogram: Histogram) -> Path:
        rows = zip(histogram.edges[:-1], histogram.edges[1:], histogram.counts)
        return self.write(path, ["low", "high", "count"], rows)

    def field(self, path: Path, field: ControlField) -> Path:
        samples = field.sample_array()
        times = field.grid.step_times()
        header = ["t"] + [f"eps_{i + 1}" for i in range(samples.shape[0])]
        return self.write(path, header, ([t, *samples[:, m]] for m, t in enumerate(times)))

    def fourier(self, path: Path, field: ControlField) -> Path:
        if field.parametrization != Parametrization.fourier:
            raise ValueError("Only Fourier fields have a parameter table")
        rows = (
            [i + 1, k + 1, field.amplitudes[i, k], field.phases[i, k]]
            for i in range(field.n_spins) for k in range(field.n_modes)
        )
        return self.write(path, ["spin", "k", "a_k", "phi_k"], rows)

    def moea_history(self, path: Path, result: MoeaResult) -> Path:
        rows = (
            [generation, p.e_j, p.secondaries[result.secondary_name]]
            for generation, front in result.snapshots for p in front
        )
        return self.write(path, ["generation", "e_j", result.secondary_name], rows)

    def hypervolumes(self, path: Path, result: MoeaResult) -> Path:
        return self.write(path, ["generation", "hypervolume"], enumerate(result.hypervolumes))

    def dominance(self, path: Path, reports: Dict[str, Dict[str, int]]) -> Path:
        keys = ["a_dominated_by_b", "b_dominated_by_a", "a_size", "b_size"]
        rows = ([panel] + [report[k] for k in keys] for panel, report in reports.items())
        return self.write(path, ["panel", "moea_dominated_by_mc", "mc_dominated_by_moea", "moea_size", "mc_size"], rows)


def read_table(path: Path) -> Tuple[List[str], List[List[str]]]:
    """Header and raw string cells; delimiter detected from the header line"""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f if line.strip()]
    if not lines:
        raise InsufficientData(f"Table {path} is empty")
    delimiter = "," if "," in lines[0] else ("\t" if "\t" in lines[0] else None)
    header = lines[0].split(delimiter)
    return header, [line.split(delimiter) for line in lines[1:]]


def read_trajectories(path: Path, runs_path: Optional[Path] = None) -> List[TrajectoryRecord]:
    """Trajectory table (plus the run table, for status and regime) back into records"""
    header, rows = read_table(path)
    names = header[len(TRAJECTORY_COLUMNS):]
    samples: Dict[int, List[TrajectorySample]] = defaultdict(list)
    for row in rows:
        values = [float(v) for v in row]
        run_id = int(values[0])
        samples[run_id].append(TrajectorySample(
            s=values[1], e_j=values[2], gradient_norm=values[3], field_step=values[4],
            secondaries=dict(zip(names, values[len(TRAJECTORY_COLUMNS):])),
        ))

    status = {run_id: FlowStatus.s_max for run_id in samples}
    regime: Dict[int, Optional[InitRegime]] = {run_id: None for run_id in samples}
    if runs_path is not None and Path(runs_path).exists():
        run_header, run_rows = read_table(runs_path)
        for row in run_rows:
            cells = dict(zip(run_header, row))
            run_id = int(cells["run_id"])
            status[run_id] = FlowStatus(cells["status"])
            regime[run_id] = None if cells["regime"] == "none" else InitRegime(cells["regime"])

    return [
        TrajectoryRecord(samples=samples[r], status=status[r], run_id=r, regime=regime[r])
        for r in sorted(samples)
    ]


def merge_trajectories(sources: Sequence[Tuple[Path, Optional[Path]]]) -> List[TrajectoryRecord]:
    """Concatenate ensembles from several machines, renumbering run ids in source order"""
    merged: List[TrajectoryRecord] = []
    for path, runs_path in sources:
        records = read_trajectories(path, runs_path)
        for record in records:
            record.run_id = len(merged)
            merged.append(record)
        logger.info(f"Merged {len(records)} runs from {path}")
    return merged
