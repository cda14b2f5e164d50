import numpy as np
import pytest
from numpy.testing import assert_allclose

from models.enums import FlowStatus, InitRegime, NoiseChannel, ObjectiveName
from models.front import FrontPoint, Histogram
from models.noise import CorrelationKernel
from models.trajectory import FlowConfig, TrajectoryRecord, TrajectorySample
from service.dynamics import build_objective
from service.errors import DimensionMismatch, InsufficientData
from service.fronts import (
    RandomFieldSampler,
    build_envelope,
    distribution_at_fidelity,
    dominance_report,
    dominates,
    interpolate_secondary,
    log_bins,
    mc_ensemble,
    mode_in_top_quartile,
    nondominated_filter,
    summarize_ensemble,
    surface_3d,
    threshold_point,
)
from service.robustness import FluenceDiagnostic, RobustnessDiagnostic


def make_record(e_values, status=FlowStatus.converged, run_id=0, **secondaries):
    samples = [
        TrajectorySample(s=float(i), e_j=e, gradient_norm=1.0, secondaries={k: v[i] for k, v in secondaries.items()})
        for i, e in enumerate(e_values)
    ]
    return TrajectoryRecord(samples=samples, status=status, run_id=run_id)


def test_log_bins():
    bins = log_bins(1e-7)
    assert len(bins) == 37
    assert bins[0] == pytest.approx(1e-1)
    assert bins[-1] == pytest.approx(1e-7)
    assert_allclose(np.diff(np.log10(bins)), -1 / 6)
    assert len(log_bins(1e-1)) == 1


def test_interpolation_uses_running_minimum():
    record = make_record([1.0, 0.1, 0.2, 0.01], k_eps=[0.0, 1.0, 5.0, 2.0])
    values = interpolate_secondary(record, "k_eps", [10 ** -1.5, 10 ** -0.5, 1e-3, 2.0])
    assert values[0] == pytest.approx(1.5)
    assert values[1] == pytest.approx(0.5)
    assert np.isnan(values[2]) and np.isnan(values[3])


def test_single_run_envelope_is_its_interpolation():
    record = make_record([0.5, 0.05, 0.005], run_id=4, k_eps=[-1e-3, -2e-4, -1e-4], fluence=[1.0, 2.0, 3.0])
    bins = log_bins(1e-2)
    envelope, sources = build_envelope([record], ["k_eps", "fluence"], bins)
    assert_allclose(envelope["k_eps"], interpolate_secondary(record, "k_eps", bins))
    assert set(sources["k_eps"]) == {4}


def test_envelope_takes_best_per_sense():
    a = make_record([0.5, 0.005], run_id=0, k_eps=[-1.0, -1.0], fluence=[1.0, 1.0])
    b = make_record([0.5, 0.005], run_id=1, k_eps=[-2.0, -2.0], fluence=[0.5, 0.5])
    envelope, sources = build_envelope([a, b], ["k_eps", "fluence"], log_bins(1e-2))
    assert_allclose(envelope["k_eps"], -1.0)
    assert_allclose(envelope["fluence"], 0.5)
    assert set(sources["k_eps"]) == {0} and set(sources["fluence"]) == {1}


def test_envelope_never_worsens_as_runs_are_added():
    rng = np.random.default_rng(0)
    bins = log_bins(1e-4)
    records = [
        make_record(np.logspace(0, -4.5, 20), run_id=i, k_eps=-np.abs(rng.normal(size=20)) * 1e-4)
        for i in range(6)
    ]
    previous = build_envelope(records[:1], ["k_eps"], bins)[0]["k_eps"]
    for n in range(2, 7):
        current = build_envelope(records[:n], ["k_eps"], bins)[0]["k_eps"]
        assert np.all(current >= previous)
        previous = current


@pytest.mark.parametrize("k", [-1e-5, -3e-6])
def test_threshold_of_constant_robustness(k):
    bins = log_bins(1e-8)
    e_star, k_star = threshold_point(bins, np.full(len(bins), k))
    assert e_star == pytest.approx(-k, rel=1e-9)
    assert k_star == pytest.approx(k)


def test_no_threshold_without_crossing():
    bins = log_bins(1e-8)
    assert threshold_point(bins, np.zeros(len(bins))) is None
    assert threshold_point(bins, np.full(len(bins), np.nan)) is None


def test_threshold_scales_with_noise_strength():
    bins = log_bins(1e-8)
    k = -1e-3 * np.sqrt(bins)
    e1, _ = threshold_point(bins, k)
    e2, _ = threshold_point(bins, 2.0 * k)
    # E* = c sqrt(E*) gives E* = c^2
    assert e1 == pytest.approx(1e-6, rel=2e-2)
    assert e2 == pytest.approx(4e-6, rel=2e-2)


def test_summary_thresholds_only_robustness_values():
    records = [make_record(np.logspace(-1, -8, 30), run_id=i, k_eps=np.full(30, -1e-5), fluence=np.ones(30)) for i in range(3)]
    result = summarize_ensemble(records, 1e-8, regime=InitRegime.low)
    assert set(result.thresholds) == {"k_eps"}
    assert result.threshold[0] == pytest.approx(1e-5, rel=1e-6)
    assert result.n_converged == 3
    assert result.regime == InitRegime.low


def test_distribution_of_identical_runs_is_one_bin():
    records = [make_record([0.5, 1e-6], run_id=i, k_eps=[-1e-4, -2e-5]) for i in range(12)]
    histogram = distribution_at_fidelity(summarize_ensemble(records, 1e-6), "k_eps", 1e-3)
    assert len(histogram.counts) == 1
    assert histogram.total == 12


def test_distribution_needs_enough_converged_runs():
    records = [make_record([0.5, 1e-6], run_id=i, k_eps=[-1e-4, -2e-5]) for i in range(5)]
    records += [make_record([0.5, 1e-6], status=FlowStatus.s_max, run_id=5 + i, k_eps=[-1e-4, -2e-5]) for i in range(10)]
    result = summarize_ensemble(records, 1e-6)
    with pytest.raises(InsufficientData):
        distribution_at_fidelity(result, "k_eps", 1e-3, min_runs=10)
    assert distribution_at_fidelity(result, "k_eps", 1e-3, min_runs=5).total == 5


def test_mode_in_top_quartile():
    values = np.array([0.0, 0.9, 0.95, 1.0])
    top = Histogram(counts=np.array([1, 0, 0, 3]), edges=np.linspace(0, 1, 5), values=values)
    bottom = Histogram(counts=np.array([3, 0, 0, 1]), edges=np.linspace(0, 1, 5), values=values)
    assert mode_in_top_quartile(top)
    assert not mode_in_top_quartile(bottom)


def random_points(n, seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(size=(n, 3))
    return [FrontPoint(e_j=x, secondaries={"k_eps": -y, "fluence": z}, run_id=i) for i, (x, y, z) in enumerate(coords)]


def test_nondominated_filter_matches_brute_force():
    objectives = ["e_j", "k_eps", "fluence"]
    points = random_points(1000, seed=1)
    keys = [p.minimized(objectives) for p in points]
    expected = {i for i, a in enumerate(keys) if not any(dominates(b, a) for b in keys)}

    front = nondominated_filter(points, objectives)
    assert {p.run_id for p in front} == expected
    assert [p.e_j for p in front] == sorted(p.e_j for p in front)
    assert nondominated_filter(front, objectives) == front


def test_nondominated_filter_edge_cases():
    single = [FrontPoint(e_j=0.1, secondaries={"k_eps": -1.0})]
    assert nondominated_filter(single, ["e_j", "k_eps"]) == single
    twins = [FrontPoint(e_j=0.1, secondaries={"k_eps": -1.0}, run_id=i) for i in range(2)]
    assert len(nondominated_filter(twins, ["e_j", "k_eps"])) == 2
    worse = FrontPoint(e_j=0.2, secondaries={"k_eps": -2.0})
    assert nondominated_filter(single + [worse], ["e_j", "k_eps"]) == single
    assert nondominated_filter([], ["e_j"]) == []
    with pytest.raises(ValueError):
        nondominated_filter(single, [])


def test_dominance_report():
    good = [FrontPoint(e_j=0.1, secondaries={"k_eps": -1.0})]
    bad = [FrontPoint(e_j=0.2, secondaries={"k_eps": -2.0}), FrontPoint(e_j=0.05, secondaries={"k_eps": -3.0})]
    report = dominance_report(good, bad, ["e_j", "k_eps"])
    assert report == {"a_dominated_by_b": 0, "b_dominated_by_a": 1, "a_size": 1, "b_size": 2}


def test_mc_ensemble_is_reproducible(two_level):
    objective = build_objective(ObjectiveName.P12, two_level)
    config = FlowConfig(target_error=1e-2, rel_tol=1e-6, abs_tol=1e-8)
    diagnostics = [FluenceDiagnostic()]
    sampler = RandomFieldSampler(two_level)
    first = mc_ensemble(objective, two_level, 2, sampler, config, diagnostics, seed=3)
    second = mc_ensemble(objective, two_level, 2, sampler, config, diagnostics, seed=3)

    assert [t.run_id for t in first.trajectories] == [0, 1]
    assert all(t.regime == InitRegime.low for t in first.trajectories)
    for a, b in zip(first.trajectories, second.trajectories):
        assert np.array_equal(a.e_j, b.e_j)
    assert np.array_equal(first.envelope["fluence"], second.envelope["fluence"], equal_nan=True)
    with pytest.raises(ValueError):
        mc_ensemble(objective, two_level, 0, sampler, config, diagnostics, seed=3)


def test_sampler_regimes(two_level):
    low = RandomFieldSampler(two_level, InitRegime.low)(5, 1)
    high = RandomFieldSampler(two_level, InitRegime.high)(5, 1)
    assert low.amplitudes.max() <= 0.05
    assert high.amplitudes.max() > 0.05
    assert np.array_equal(low.phases, RandomFieldSampler(two_level)(5, 1).phases)


def test_surface_needs_one_spin(four_level):
    with pytest.raises(DimensionMismatch):
        surface_3d(four_level, 1, CorrelationKernel(), 0, FlowConfig())


def test_surface_of_shared_field_is_one_point(two_level):
    shared = RandomFieldSampler(two_level)(0, 0)
    surface = surface_3d(
        two_level, 3, CorrelationKernel(), 0, FlowConfig(target_error=1.0), sampler=lambda run_id, seed: shared,
    )
    coordinates = {p.minimized(["e_j", "k_eps", "fluence"]) for p in surface.points}
    assert len(coordinates) == 1
    assert len(surface.trajectories) == 3
    assert set(surface.projections) == {"k_eps", "fluence"}


def test_robustness_diagnostic_names_for_surface(two_level):
    objective = build_objective(ObjectiveName.FH, two_level)
    diagnostic = RobustnessDiagnostic.for_alphas(objective, two_level, NoiseChannel.field, CorrelationKernel())
    assert diagnostic.names == ["k_eps"]
