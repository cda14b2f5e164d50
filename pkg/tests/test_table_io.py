import numpy as np
import pytest

from models.control import ControlField
from models.enums import FlowStatus, InitRegime
from models.front import FrontPoint
from models.trajectory import TrajectoryRecord, TrajectorySample
from service.table_io import TableWriter, format_value, merge_trajectories, read_table, read_trajectories


def record(run_id, status=FlowStatus.converged):
    samples = [
        TrajectorySample(s=0.0, e_j=0.9, gradient_norm=0.5, secondaries={"k_eps": -1e-3, "fluence": 0.1}),
        TrajectorySample(s=1.5, e_j=1.0 / 3.0, gradient_norm=0.25, secondaries={"k_eps": -2e-4, "fluence": 0.2}, field_step=0.01),
    ]
    return TrajectoryRecord(samples=samples, status=status, run_id=run_id, regime=InitRegime.low)


def test_format_value():
    assert format_value(0.1) == "1.0000000000000001e-01"
    assert format_value(np.float64(-2.5)) == "-2.5000000000000000e+00"
    assert format_value(float("nan")) == "nan"
    assert format_value(float("-inf")) == "-inf"
    assert format_value(True) == "1"
    assert format_value(np.int64(7)) == "7"
    assert format_value("converged") == "converged"
    for value in np.random.default_rng(0).normal(size=50) * 1e-5:
        assert float(format_value(value)) == value


@pytest.mark.parametrize("delimiter", [" ", ",", "\t"])
def test_trajectories_read_back(tmp_path, delimiter):
    tables = TableWriter(delimiter)
    records = [record(0), record(1, FlowStatus.s_max)]
    tables.trajectories(tmp_path / "trajectories.txt", records)
    tables.runs(tmp_path / "runs.txt", records)

    header, rows = read_table(tmp_path / "trajectories.txt")
    assert header == ["run_id", "s", "e_j", "gradient_norm", "field_step", "k_eps", "fluence"]
    assert len(rows) == 4

    loaded = read_trajectories(tmp_path / "trajectories.txt", tmp_path / "runs.txt")
    assert [r.status for r in loaded] == [FlowStatus.converged, FlowStatus.s_max]
    assert loaded[0].regime == InitRegime.low
    assert loaded[1].samples[1].e_j == 1.0 / 3.0
    assert loaded[1].values("k_eps").tolist() == [-1e-3, -2e-4]


def test_merge_renumbers_runs(tmp_path):
    tables = TableWriter()
    for name, ids in (("a", [0, 1]), ("b", [0])):
        tables.trajectories(tmp_path / f"{name}_trajectories.txt", [record(i) for i in ids])
    merged = merge_trajectories([(tmp_path / "a_trajectories.txt", None), (tmp_path / "b_trajectories.txt", None)])
    assert [r.run_id for r in merged] == [0, 1, 2]
    assert all(r.status == FlowStatus.s_max for r in merged)


def test_front_field_and_fourier_tables(tmp_path, two_level):
    tables = TableWriter(",")
    points = [FrontPoint(e_j=0.1, secondaries={"k_eps": -1.0}, run_id=3, s=2.0)]
    header, rows = read_table(tables.front(tmp_path / "front.txt", points, ["k_eps"]))
    assert header == ["e_j", "k_eps", "run_id", "s"]
    assert rows[0][2] == "3"

    field = ControlField.from_fourier([[1.0, 2.0]], [[0.0, 0.5]], two_level.grid)
    header, rows = read_table(tables.field(tmp_path / "field.txt", field))
    assert header == ["t", "eps_1"] and len(rows) == 100
    header, rows = read_table(tables.fourier(tmp_path / "fourier.txt", field))
    assert [row[:2] for row in rows] == [["1", "1"], ["1", "2"]]
    with pytest.raises(ValueError):
        tables.fourier(tmp_path / "x.txt", field.to_samples())
