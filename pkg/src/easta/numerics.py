"""Dense complex linear algebra shared by the rest of the package.

Units: hbar = 1 everywhere.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


class ContractViolation(ValueError):
    """An input broke a documented precondition (non-Hermitian, wrong shape, ...)."""


def hermitian_defect(A: np.ndarray) -> float:
    A = np.asarray(A)
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def is_hermitian(A: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    A = np.asarray(A)
    return A.ndim == 2 and A.shape[0] == A.shape[1] and hermitian_defect(A) <= tol


def spectral_norm(A: np.ndarray) -> float:
    """Largest singular value of ``A``."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    if not np.all(np.isfinite(A)):
        raise ContractViolation("spectral_norm: non-finite entries")
    return float(np.linalg.norm(A, 2))


def unitarity_defect(A: np.ndarray) -> float:
    """Spectral norm of ``A A^dagger - I``."""
    A = np.asarray(A)
    return spectral_norm(A @ A.conj().T - np.eye(A.shape[0]))


def is_unitary(A: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    A = np.asarray(A)
    return A.ndim == 2 and A.shape[0] == A.shape[1] and unitarity_defect(A) <= tol


def degeneracy_threshold(H: np.ndarray) -> float:
    return 1e-9 * (1.0 + spectral_norm(H))


def min_gap(eigenvalues: np.ndarray) -> float:
    """Smallest spacing of a sorted spectrum (inf for a single level)."""
    e = np.asarray(eigenvalues, dtype=float)
    if e.size < 2:
        return float("inf")
    return float(np.min(np.diff(e)))


def is_degenerate(H: np.ndarray, eigenvalues: np.ndarray | None = None) -> bool:
    if eigenvalues is None:
        eigenvalues = np.linalg.eigvalsh(H)
    return min_gap(eigenvalues) < degeneracy_threshold(H)


def hermitian_eig(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and column-orthonormal eigenvectors of Hermitian ``H``.

    Raises ContractViolation if ``H`` is not Hermitian to 1e-12 (max entry).
    """
    H = np.asarray(H, dtype=complex)
    if not is_hermitian(H):
        raise ContractViolation(
            f"hermitian_eig: input not Hermitian (defect {hermitian_defect(H):.3e})"
        )
    w, v = np.linalg.eigh(H)
    return w, v


def unitary_step(H: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i H dt) through the eigendecomposition of ``H``."""
    if not np.isfinite(dt):
        raise ContractViolation("unitary_step: dt must be finite")
    w, v = hermitian_eig(H)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def unitary_steps(Hs: np.ndarray, dt: float) -> np.ndarray:
    """Batched :func:`unitary_step` over a stack of shape (K, d, d)."""
    Hs = np.asarray(Hs, dtype=complex)
    defect = np.max(np.abs(Hs - np.conj(np.swapaxes(Hs, -1, -2)))) if Hs.size else 0.0
    if defect > HERMITIAN_TOL:
        raise ContractViolation(f"unitary_steps: non-Hermitian sample (defect {defect:.3e})")
    w, v = np.linalg.eigh(Hs)
    return np.einsum("kij,kj,klj->kil", v, np.exp(-1j * w * dt), v.conj())


def integrate_grid(samples: np.ndarray, dt: float) -> float:
    """Composite trapezoid rule on a uniform grid."""
    y = np.asarray(samples, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise ContractViolation("integrate_grid: need at least 2 samples")
    return float(dt * (y.sum() - 0.5 * (y[0] + y[-1])))


def cumulative_grid(samples: np.ndarray, dt: float) -> np.ndarray:
    """Running trapezoid integral along axis 0, starting at 0."""
    y = np.asarray(samples)
    if y.shape[0] < 2:
        raise ContractViolation("cumulative_grid: need at least 2 samples")
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0)
    return out
