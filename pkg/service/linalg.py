"""
Dense complex linear algebra for 2x2 and 4x4 Hermitian generators.

Every function accepts a single matrix or a stack of matrices with shape
(..., d, d); the propagator uses the stacked form to diagonalize all time
steps in one call.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.settings import DEGENERACY_TOL
from service.errors import InvalidMatrix

logger = logging.getLogger(__name__)

SUPPORTED_DIMS = (2, 4)


@dataclass(frozen=True)
class HermitianEig:
    """Eigenvalues (ascending) and column eigenvectors of a Hermitian matrix or stack"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """V diag(lambda) V^dagger"""
        v = self.eigenvectors
        return (v * self.eigenvalues[..., None, :]) @ dagger(v)


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes"""
    return np.conj(np.swapaxes(a, -1, -2))


def as_cmatrix(a) -> np.ndarray:
    """Validate shape and finiteness and return a complex array"""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim < 2 or arr.shape[-1] != arr.shape[-2]:
        raise InvalidMatrix(f"Expected square matrix, got shape {arr.shape}")
    if arr.shape[-1] not in SUPPORTED_DIMS:
        raise InvalidMatrix(f"Unsupported dimension {arr.shape[-1]}, expected one of {SUPPORTED_DIMS}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix("Matrix has non-finite entries")
    return arr


def eig_hermitian(h) -> HermitianEig:
    """Diagonalize (H + H^dagger)/2; eigenvalues ascending"""
    arr = as_cmatrix(h)
    symmetric = 0.5 * (arr + dagger(arr))
    eigenvalues, eigenvectors = np.linalg.eigh(symmetric)
    return HermitianEig(eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def expm_unitary(h, dt: float, eig: Optional[HermitianEig] = None) -> np.ndarray:
    """exp(-i H dt) built from the eigendecomposition of H"""
    if eig is None:
        eig = eig_hermitian(h)
    v = eig.eigenvectors
    phases = np.exp(-1j * dt * eig.eigenvalues)
    return (v * phases[..., None, :]) @ dagger(v)


def _first_divided_difference(eigenvalues: np.ndarray, dt: float) -> np.ndarray:
    """
    phi(l_a, l_b) = (e^{-i l_a dt} - e^{-i l_b dt}) / (l_a - l_b).

    Written as -i dt e^{-i dt (l_a + l_b)/2} sinc(dt (l_a - l_b) / 2), which is
    the same quotient and reduces to -i dt e^{-i l_a dt} on the diagonal without
    a cancellation-prone branch.
    """
    la = eigenvalues[..., :, None]
    lb = eigenvalues[..., None, :]
    return -1j * dt * np.exp(-0.5j * dt * (la + lb)) * np.sinc(dt * (la - lb) / (2.0 * np.pi))


def _second_divided_difference(eigenvalues: np.ndarray, dt: float) -> np.ndarray:
    """f[l_a, l_c, l_b] for f(x) = exp(-i x dt), indexed [..., a, c, b]"""
    x = eigenvalues[..., :, None, None]
    y = eigenvalues[..., None, :, None]
    z = eigenvalues[..., None, None, :]

    def f1(u, w):
        return -1j * dt * np.exp(-0.5j * dt * (u + w)) * np.sinc(dt * (u - w) / (2.0 * np.pi))

    xz = x - z
    xy = x - y
    distinct_xz = np.abs(xz) >= DEGENERACY_TOL
    distinct_xy = np.abs(xy) >= DEGENERACY_TOL

    # x != z
    generic = (f1(x, y) - f1(y, z)) / np.where(distinct_xz, xz, 1.0)
    # x == z != y: f[x, y, x] = (f[x, y] - f'(x)) / (y - x)
    pair = (f1(x, y) - f1(x, x)) / np.where(distinct_xy, -xy, 1.0)
    # all equal: f''(x) / 2
    triple = -0.5 * dt ** 2 * np.exp(-1j * dt * x) * np.ones_like(y * z)

    return np.where(distinct_xz, generic, np.where(distinct_xy, pair, triple))


def _to_eigenbasis(eig: HermitianEig, direction) -> np.ndarray:
    v = eig.eigenvectors
    return dagger(v) @ np.asarray(direction, dtype=complex) @ v


def frechet_from_eig(eig: HermitianEig, direction, dt: float) -> np.ndarray:
    """First directional derivative of exp(-i H dt) given H's eigendecomposition"""
    v = eig.eigenvectors
    d_eig = _to_eigenbasis(eig, direction)
    return v @ (d_eig * _first_divided_difference(eig.eigenvalues, dt)) @ dagger(v)


def frechet2_from_eig(eig: HermitianEig, direction, dt: float) -> np.ndarray:
    """Second directional derivative of exp(-i H dt) given H's eigendecomposition"""
    v = eig.eigenvectors
    d_eig = _to_eigenbasis(eig, direction)
    f2 = _second_divided_difference(eig.eigenvalues, dt)
    # 2 sum_c D_ac D_cb f[l_a, l_c, l_b]
    inner = 2.0 * np.einsum('...ac,...cb,...acb->...ab', d_eig, d_eig, f2)
    return v @ inner @ dagger(v)


def expm_frechet(h, direction, dt: float) -> np.ndarray:
    """d/da exp(-i (H + a D) dt) at a = 0"""
    as_cmatrix(direction)
    return frechet_from_eig(eig_hermitian(h), direction, dt)


def expm_frechet2(h, direction, dt: float) -> np.ndarray:
    """d^2/da^2 exp(-i (H + a D) dt) at a = 0"""
    as_cmatrix(direction)
    return frechet2_from_eig(eig_hermitian(h), direction, dt)


def unitarity_error(u: np.ndarray) -> float:
    """Largest Frobenius norm of U^dagger U - I over a stack"""
    u = np.asarray(u)
    eye = np.eye(u.shape[-1])
    residual = dagger(u) @ u - eye
    return float(np.max(np.linalg.norm(residual, axis=(-2, -1))))
