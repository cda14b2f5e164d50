import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.linalg import expm, expm_frechet as scipy_expm_frechet

from service.errors import InvalidMatrix
from service.linalg import (
    dagger,
    eig_hermitian,
    expm_frechet,
    expm_frechet2,
    expm_unitary,
    unitarity_error,
)


@pytest.mark.parametrize("dim", [2, 4])
def test_expm_matches_scipy(random_hermitian, dim):
    h = random_hermitian(dim, seed=dim)
    assert_allclose(expm_unitary(h, 0.3), expm(-0.3j * h), atol=1e-12)


def test_expm_accepts_stacks(random_hermitian):
    stack = np.stack([random_hermitian(2, seed=s) for s in range(5)])
    batched = expm_unitary(stack, 0.1)
    assert batched.shape == (5, 2, 2)
    for h, u in zip(stack, batched):
        assert_allclose(u, expm(-0.1j * h), atol=1e-12)
    assert unitarity_error(batched) < 1e-12


def test_eig_reconstructs_matrix(random_hermitian):
    h = random_hermitian(4, seed=11)
    eig = eig_hermitian(h)
    assert np.all(np.diff(eig.eigenvalues) >= 0)
    assert_allclose(eig.reconstruct(), h, atol=1e-12)


@pytest.mark.parametrize("dim", [2, 4])
def test_frechet_matches_scipy(random_hermitian, dim):
    h, d, dt = random_hermitian(dim, seed=1), random_hermitian(dim, seed=2), 0.25
    reference = scipy_expm_frechet(-1j * dt * h, -1j * dt * d, compute_expm=False)
    assert_allclose(expm_frechet(h, d, dt), reference, atol=1e-11)


@pytest.mark.parametrize("c", [-2.5, 0.0, 3.0])
def test_frechet_is_linear_in_direction(random_hermitian, c):
    h, d = random_hermitian(4, seed=11), random_hermitian(4, seed=12)
    assert_allclose(expm_frechet(h, c * d, 0.05), c * expm_frechet(h, d, 0.05), atol=1e-14)
    assert_allclose(expm_frechet2(h, c * d, 0.05), c ** 2 * expm_frechet2(h, d, 0.05), atol=1e-14)


@pytest.mark.parametrize("h_diag", [None, [1.0, 1.0, 2.0, 5.0]])
def test_second_frechet_matches_finite_difference(random_hermitian, h_diag):
    h = random_hermitian(4, seed=3) if h_diag is None else np.diag(h_diag).astype(complex)
    d, dt, eps = random_hermitian(4, seed=4), 0.3, 1e-5
    numeric = (expm_frechet(h + eps * d, d, dt) - expm_frechet(h - eps * d, d, dt)) / (2 * eps)
    assert_allclose(expm_frechet2(h, d, dt), numeric, atol=1e-8)


def test_fully_degenerate_generator_has_closed_form(random_hermitian):
    c, dt = 3.0, 0.4
    h = c * np.eye(2, dtype=complex)
    d = random_hermitian(2, seed=5)
    phase = np.exp(-1j * c * dt)
    assert_allclose(expm_frechet(h, d, dt), -1j * dt * phase * d, atol=1e-13)
    assert_allclose(expm_frechet2(h, d, dt), -dt ** 2 * phase * d @ d, atol=1e-13)


def test_nearly_degenerate_is_continuous(random_hermitian):
    d, dt = random_hermitian(2, seed=6), 0.5
    exact = expm_frechet2(np.eye(2), d, dt)
    split = expm_frechet2(np.diag([1.0, 1.0 + 1e-11]), d, dt)
    assert_allclose(split, exact, atol=1e-9)


def test_dagger_swaps_last_axes():
    a = np.arange(8).reshape(2, 2, 2) * (1 + 1j)
    assert_allclose(dagger(a)[1], a[1].conj().T)


@pytest.mark.parametrize("bad", [
    np.eye(3),
    np.ones((2, 3)),
    np.array([[np.nan, 0], [0, 1]]),
    np.array([1.0, 2.0]),
])
def test_invalid_matrices_raise(bad):
    with pytest.raises(InvalidMatrix):
        expm_unitary(bad, 0.1)
