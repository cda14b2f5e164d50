import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError
from scipy.integrate import trapezoid

from models.control import ControlField
from models.enums import KernelForm, NoiseChannel, ObjectiveName
from models.noise import CorrelationKernel, NoiseModel
from service.dynamics import build_objective, propagate
from service.errors import GridMismatch, InvalidKernel
from service.robustness import (
    FluenceDiagnostic,
    RobustnessDiagnostic,
    expected_noise_loss_mc,
    fluence,
    hessian,
    k_beta,
    k_beta_total,
    robustness,
    sample_noise,
)
from service.spin_system import random_field_for
from service.verify import HESSIAN_FLOOR, HESSIAN_TOL, finite_difference_hessian, relative_error


@pytest.fixture
def coarse_case(coarse_two_level):
    objective = build_objective(ObjectiveName.P12, coarse_two_level)
    field = random_field_for(coarse_two_level, (0.0, 2.0), [5, 5]).to_samples()
    return objective, coarse_two_level, field


@pytest.mark.parametrize("name", [ObjectiveName.P12, ObjectiveName.SX, ObjectiveName.FH])
@pytest.mark.parametrize("channel", list(NoiseChannel))
def test_hessian_matches_finite_differences(coarse_two_level, name, channel):
    objective = build_objective(name, coarse_two_level)
    field = random_field_for(coarse_two_level, (0.0, 2.0), [1, 2]).to_samples()
    analytic = hessian(objective, coarse_two_level, field, channel, 0).matrix
    numeric = finite_difference_hessian(objective, coarse_two_level, field, channel, 0)
    assert_allclose(analytic, analytic.T)
    assert relative_error(analytic, numeric, HESSIAN_TOL, HESSIAN_FLOOR) <= HESSIAN_TOL


def test_two_spin_hessian_matches_finite_differences(coarse_four_level):
    objective = build_objective(ObjectiveName.FCNOT, coarse_four_level)
    field = random_field_for(coarse_four_level, (0.0, 2.0), 8).to_samples()
    for spin in range(2):
        analytic = hessian(objective, coarse_four_level, field, NoiseChannel.field, spin).matrix
        numeric = finite_difference_hessian(objective, coarse_four_level, field, NoiseChannel.field, spin)
        assert relative_error(analytic, numeric, HESSIAN_TOL, HESSIAN_FLOOR) <= HESSIAN_TOL


def test_zero_noise_strength_gives_zero(coarse_case):
    objective, system, field = coarse_case
    h = hessian(objective, system, field, NoiseChannel.field, 0)
    assert k_beta(h, CorrelationKernel(a2=0.0)) == 0.0


def test_k_beta_is_linear_in_noise_strength(coarse_case):
    objective, system, field = coarse_case
    h = hessian(objective, system, field, NoiseChannel.field, 0)
    kernel = CorrelationKernel(a2=1e-4, alpha=0.5)
    assert k_beta(h, kernel.scaled(3.0)) == pytest.approx(3.0 * k_beta(h, kernel), rel=1e-12)


def test_white_kernel_uses_trace(coarse_case):
    objective, system, field = coarse_case
    h = hessian(objective, system, field, NoiseChannel.detuning, 0)
    kernel = CorrelationKernel(form=KernelForm.white, a2=2e-4)
    expected = 0.5 * kernel.a2 / system.grid.dt * np.trace(h.matrix)
    assert k_beta(h, kernel) == pytest.approx(expected, rel=1e-12)


def test_custom_table_matches_builtin_form(coarse_case, tmp_path):
    objective, system, field = coarse_case
    h = hessian(objective, system, field, NoiseChannel.field, 0)
    builtin = CorrelationKernel(a2=1e-4, alpha=1.0)
    table = builtin.matrix(system.grid)
    path = tmp_path / "kernel.txt"
    np.savetxt(path, table, fmt="%.17e")

    inline = CorrelationKernel(form=KernelForm.custom, table=table.tolist())
    from_file = CorrelationKernel(form=KernelForm.custom, table_path=path)
    assert k_beta(h, inline) == pytest.approx(k_beta(h, builtin), rel=1e-12)
    assert k_beta(h, from_file) == pytest.approx(k_beta(h, builtin), rel=1e-12)


def test_invalid_kernels(coarse_case):
    objective, system, field = coarse_case
    h = hessian(objective, system, field, NoiseChannel.field, 0)
    n = system.grid.n_steps
    with pytest.raises(GridMismatch):
        k_beta(h, CorrelationKernel(form=KernelForm.custom, table=np.eye(n + 1).tolist()))
    asymmetric = np.eye(n)
    asymmetric[0, 1] = 1.0
    with pytest.raises(InvalidKernel):
        k_beta(h, CorrelationKernel(form=KernelForm.custom, table=asymmetric.tolist()))
    with pytest.raises(InvalidKernel):
        sample_noise(CorrelationKernel(form=KernelForm.custom, table=(-np.eye(n)).tolist()), system.grid, 4, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        CorrelationKernel(form=KernelForm.custom)


def test_sampled_noise_has_kernel_covariance(coarse_two_level):
    kernel = CorrelationKernel(a2=1.0, alpha=0.3)
    draws = sample_noise(kernel, coarse_two_level.grid, 20000, np.random.default_rng(1))
    assert_allclose(np.cov(draws, rowvar=False), kernel.matrix(coarse_two_level.grid), atol=0.06)


def test_two_spin_total_sums_spins(coarse_four_level):
    objective = build_objective(ObjectiveName.P14, coarse_four_level)
    field = random_field_for(coarse_four_level, (0.0, 2.0), 3).to_samples()
    kernel = CorrelationKernel()
    hessians = [hessian(objective, coarse_four_level, field, NoiseChannel.detuning, i) for i in range(2)]
    total = k_beta_total(hessians, kernel)
    assert total == pytest.approx(sum(k_beta(h, kernel) for h in hessians))
    assert robustness(objective, coarse_four_level, field, NoiseChannel.detuning, [kernel]) == [total]


def test_fluence_of_constant_and_fourier_fields(two_level):
    constant = ControlField.from_samples(np.full((1, 100), 3.0), two_level.grid)
    assert fluence(constant) == pytest.approx(9.0 * two_level.grid.total_time)
    single_mode = ControlField.from_fourier([[3.0]], [[0.7]], two_level.grid)
    assert fluence(single_mode) == pytest.approx(4.5, rel=1e-12)


def test_diagnostics_name_their_values(coarse_case):
    objective, system, field = coarse_case
    kernel = CorrelationKernel(alpha=1.0)
    diagnostic = RobustnessDiagnostic.for_alphas(objective, system, NoiseChannel.field, kernel, [2.0, 1.0])
    assert diagnostic.names == ["k_eps", "k_eps_alpha2"]

    values = diagnostic(field)
    shared = diagnostic(field, propagate(system, field))
    assert values == shared
    assert values["k_eps"] == robustness(objective, system, field, NoiseChannel.field, [kernel])[0]
    assert FluenceDiagnostic()(field) == {"fluence": fluence(field)}

    detuning = RobustnessDiagnostic.for_alphas(objective, system, NoiseChannel.detuning, kernel)
    assert detuning.names == ["k_omega"]


def test_sampled_loss_vanishes_without_noise(coarse_case):
    objective, system, field = coarse_case
    model = NoiseModel(channel=NoiseChannel.field, kernel=CorrelationKernel(a2=0.0))
    estimate = expected_noise_loss_mc(objective, system, field, model, 300, seed=0)
    assert estimate.n_samples == 300
    assert abs(estimate.mean) < 1e-14
    assert estimate.stderr < 1e-14


def test_sampled_loss_is_seeded(coarse_case):
    objective, system, field = coarse_case
    model = NoiseModel()
    a = expected_noise_loss_mc(objective, system, field, model, 100, seed=4)
    b = expected_noise_loss_mc(objective, system, field, model, 100, seed=4)
    assert a == b


@pytest.mark.slow
def test_k_beta_agrees_with_sampled_loss_at_optimum(p12_flow, two_level):
    objective = build_objective(ObjectiveName.P12, two_level)
    model = NoiseModel()
    field = p12_flow.final_field
    k = robustness(objective, two_level, field, model.channel, [model.kernel])[0]
    estimate = expected_noise_loss_mc(objective, two_level, field, model, 2000, seed=0)
    assert k < 0
    assert abs(k - estimate.mean) <= 3.0 * estimate.stderr


def test_fluence_of_a_single_sine(two_level):
    a = 2.0
    grid = two_level.grid
    # a sin(2 pi t) is Fourier mode k = 2
    field = ControlField.from_fourier([[0.0, a]], [[0.0, 0.0]], grid)
    assert abs(fluence(field) - a ** 2 / 2) < 1e-3 * a ** 2
    assert abs(fluence(field.to_samples()) - a ** 2 / 2) < 1e-3 * a ** 2


@pytest.mark.parametrize("seed", range(5))
def test_fluence_matches_refined_grid(two_level, seed):
    field = random_field_for(two_level, (0.0, 1.0), [seed, 3])
    fine = np.linspace(0.0, two_level.grid.total_time, 10 * two_level.grid.n_steps + 1)
    reference = trapezoid(field.evaluate(fine) ** 2, fine, axis=1).sum()
    assert fluence(field) == pytest.approx(reference, rel=1e-3)
    assert fluence(field.to_samples()) == pytest.approx(reference, rel=2e-2)


def test_hessian_is_negative_semidefinite_at_the_pi_pulse(pi_pulse):
    objective, system, field = pi_pulse
    for channel in NoiseChannel:
        matrix = hessian(objective, system, field, channel, 0).matrix
        assert np.linalg.eigvalsh(matrix).max() <= 1e-6


def test_sampled_loss_doubles_with_noise_strength(p12_flow, two_level):
    objective = build_objective(ObjectiveName.P12, two_level)
    weak = NoiseModel(kernel=CorrelationKernel(a2=1e-4))
    strong = NoiseModel(kernel=CorrelationKernel(a2=2e-4))
    base = expected_noise_loss_mc(objective, two_level, p12_flow.final_field, weak, 400, seed=2)
    doubled = expected_noise_loss_mc(objective, two_level, p12_flow.final_field, strong, 400, seed=2)
    assert base.mean < 0
    assert doubled.mean == pytest.approx(2.0 * base.mean, rel=0.05)


def test_kernel_ordering_violations_are_logged(coarse_case, caplog):
    objective, system, _ = coarse_case
    diagnostic = RobustnessDiagnostic.for_alphas(objective, system, NoiseChannel.field, CorrelationKernel(), [2.0])
    with caplog.at_level(logging.WARNING, logger="service.robustness"):
        violations = diagnostic.check_ordering({"k_eps": -1e-5, "k_eps_alpha2": -2e-5}, run_id=4)
    assert violations == [("k_eps", "k_eps_alpha2")]
    assert "Run 4: kernel ordering violated" in caplog.text

    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="service.robustness"):
        assert diagnostic.check_ordering({"k_eps": -2e-5, "k_eps_alpha2": -1e-5}) == []
    assert not caplog.records


def test_kernel_ordering_follows_correlation_time_not_names(coarse_case):
    objective, system, _ = coarse_case
    diagnostic = RobustnessDiagnostic.for_alphas(
        objective, system, NoiseChannel.field, CorrelationKernel(alpha=2.0), [1.0],
    )
    assert diagnostic.names == ["k_eps", "k_eps_alpha1"]
    assert diagnostic.check_ordering({"k_eps": -1.0, "k_eps_alpha1": -0.5}) == [("k_eps_alpha1", "k_eps")]
    assert FluenceDiagnostic().check_ordering({"fluence": 1.0}) == []
