"""Counterdiabatic driving and its environment-assisted counterpart.

Everything here is expressed on the grid of an :class:`EigenFrame`. The
environment unitary acts on the branch-label basis {|E_m(0)>}, so all
environment-side matrices are N x N with N = d_S.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .model import EigenFrame
from .numerics import ContractViolation, spectral_norm, unitarity_defect
from .propagation import PropagationResult

log = logging.getLogger(__name__)

HCD_SYMMETRY_BOUND = 1e-6
ENV_ROUTE_TOL = 5e-4


class ConsistencyError(RuntimeError):
    """Two independent routes to the same quantity disagree."""


@dataclass(frozen=True)
class PhaseRecord:
    """Adiabatic phases f_n(t_k) = dynamical + geometric (hbar = 1)."""

    times: np.ndarray
    dynamical: np.ndarray  # (K+1, N)
    geometric: np.ndarray  # (K+1, N)
    connection_residual: float  # max |Re <n|d_t n>| discarded from the FD connection

    @property
    def total(self) -> np.ndarray:
        return self.dynamical + self.geometric


@dataclass(frozen=True)
class CostCurve:
    times: np.ndarray
    norms: np.ndarray
    cumulative: np.ndarray
    tau: float

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])


def _cumtrapz(y: np.ndarray, dt: float) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0)
    return out


def berry_connection(frame: EigenFrame) -> np.ndarray:
    """<n(t_k)|d_t n(t_k)> from the finite-difference frame (complex, (K+1, N))."""
    return np.einsum("kan,kan->kn", frame.vectors.conj(), frame.derivatives)


def adiabatic_phases(frame: EigenFrame) -> PhaseRecord:
    conn = berry_connection(frame)
    # normalization forces Re<n|d_t n> = 0; keep only the imaginary part
    geometric = _cumtrapz(conn.imag, frame.dt)
    dynamical = _cumtrapz(frame.energies, frame.dt)
    return PhaseRecord(
        times=frame.times,
        dynamical=dynamical,
        geometric=geometric,
        connection_residual=float(np.max(np.abs(conn.real))) if conn.size else 0.0,
    )


def _cd_raw(V: np.ndarray, dV: np.ndarray) -> np.ndarray:
    conn = 1j * np.imag(np.einsum("...an,...an->...n", V.conj(), dV))
    proj = np.einsum("...an,...n,...bn->...ab", V, conn, V.conj())
    return 1j * (dV @ np.conj(np.swapaxes(V, -1, -2)) - proj)


def _symmetrize(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Ad = np.conj(np.swapaxes(A, -1, -2))
    defect = np.max(np.abs(A - Ad), axis=(-2, -1))
    return 0.5 * (A + Ad), defect


def cd_hamiltonian(frame: EigenFrame, k: int) -> np.ndarray:
    """H_CD(t_k) = i sum_n (|d_t n><n| - <n|d_t n>|n><n|), symmetrized."""
    H, defect = _symmetrize(_cd_raw(frame.vectors[k], frame.derivatives[k]))
    if defect > HCD_SYMMETRY_BOUND:
        log.info("H_CD pre-symmetrization defect %.3e at k=%d", defect, k)
    return H


def cd_hamiltonians(frame: EigenFrame) -> tuple[np.ndarray, np.ndarray]:
    """All H_CD(t_k) at once, plus the per-point pre-symmetrization defects."""
    H, defect = _symmetrize(_cd_raw(frame.vectors, frame.derivatives))
    worst = float(np.max(defect))
    if worst > HCD_SYMMETRY_BOUND:
        log.info("H_CD pre-symmetrization defect up to %.3e", worst)
    return H, defect


def adiabatic_states(frame: EigenFrame, phases: PhaseRecord, k: int | slice = slice(None)) -> np.ndarray:
    """Columns |psi_n(t_k)> = exp(-i f_n(t_k)) |n(t_k)>."""
    return frame.vectors[k] * np.exp(-1j * phases.total[k])[..., None, :]


def cd_unitary(frame: EigenFrame, phases: PhaseRecord, k: int) -> np.ndarray:
    """U_CD(t_k) = sum_n exp(-i f_n(t_k)) |n(t_k)><n(t_0)|."""
    return adiabatic_states(frame, phases, k) @ frame.vectors[0].conj().T


def _check_branches(frame: EigenFrame, n_branches: int | None) -> None:
    if n_branches is not None and n_branches != frame.dim:
        raise ContractViolation(
            f"environment unitary needs one branch per system level: N={n_branches} != d_S={frame.dim}"
        )


def easta_unitary(
    result: PropagationResult,
    frame: EigenFrame,
    phases: PhaseRecord,
    k: int,
    n_branches: int | None = None,
) -> np.ndarray:
    """Environment unitary U'_{m,n} = exp(-i f_m) <n(0)|U(t_k)^dagger|m(t_k)>."""
    _check_branches(frame, n_branches)
    psi = adiabatic_states(frame, phases, k)
    return (frame.vectors[0].conj().T @ result.unitaries[k].conj().T @ psi).T


def easta_unitaries(result: PropagationResult, frame: EigenFrame, phases: PhaseRecord) -> np.ndarray:
    psi = adiabatic_states(frame, phases)
    Ud = np.conj(np.swapaxes(result.unitaries, 1, 2))
    M = frame.vectors[0].conj().T[None] @ Ud @ psi
    return np.swapaxes(M, 1, 2)


def env_hamiltonian_closed(frame: EigenFrame, phases: PhaseRecord, k: int) -> np.ndarray:
    """H_env = sum_ij <psi_j|H_CD|psi_i> |E_i><E_j|."""
    psi = adiabatic_states(frame, phases, k)
    h = psi.conj().T @ cd_hamiltonian(frame, k) @ psi
    return h.T


def env_hamiltonians_closed(frame: EigenFrame, phases: PhaseRecord) -> np.ndarray:
    psi = adiabatic_states(frame, phases)
    Hcd, _ = cd_hamiltonians(frame)
    h = np.conj(np.swapaxes(psi, 1, 2)) @ Hcd @ psi
    return np.swapaxes(h, 1, 2)


def _stencil(K: int, k: int) -> tuple[tuple[int, ...], tuple[float, ...]]:
    if k == 0:
        return (0, 1, 2), (-1.5, 2.0, -0.5)
    if k == K:
        return (K - 2, K - 1, K), (0.5, -2.0, 1.5)
    return (k - 1, k + 1), (-0.5, 0.5)


def env_hamiltonian_fd(
    result: PropagationResult, frame: EigenFrame, phases: PhaseRecord, k: int
) -> np.ndarray:
    """i dU'/dt U'^dagger with a finite-difference time derivative (not symmetrized)."""
    idx, coef = _stencil(frame.steps, k)
    dU = sum(c * easta_unitary(result, frame, phases, j) for j, c in zip(idx, coef)) / frame.dt
    return 1j * dU @ easta_unitary(result, frame, phases, k).conj().T


def env_hamiltonians_fd(
    result: PropagationResult, frame: EigenFrame, phases: PhaseRecord, Uprime: np.ndarray | None = None
) -> np.ndarray:
    if Uprime is None:
        Uprime = easta_unitaries(result, frame, phases)
    dU = np.gradient(Uprime, frame.dt, axis=0, edge_order=2)
    return 1j * dU @ np.conj(np.swapaxes(Uprime, 1, 2))


def env_hamiltonian(
    result: PropagationResult,
    frame: EigenFrame,
    phases: PhaseRecord,
    k: int,
    tol: float = ENV_ROUTE_TOL,
) -> np.ndarray:
    """Environment drive at t_k.

    Uses the closed form built from H_CD and checks it against the
    finite-difference generator of :func:`easta_unitary`; raises
    ConsistencyError if they differ by more than ``tol * (1 + ||H_env||)``.
    """
    closed = env_hamiltonian_closed(frame, phases, k)
    fd = env_hamiltonian_fd(result, frame, phases, k)
    gap = spectral_norm(closed - fd)
    if gap > tol * (1.0 + spectral_norm(closed)):
        raise ConsistencyError(f"H_env routes disagree at k={k}: {gap:.3e}")
    return closed


def similarity_map(frame: EigenFrame, phases: PhaseRecord, k: int) -> np.ndarray:
    """Unitary S with S conj(H_CD) S^dagger = H_env, conj taken entrywise.

    S = sum_j |E_j><psi_j*|, i.e. row j of S is psi_j transposed.
    """
    return adiabatic_states(frame, phases, k).T


def generalized_env_unitary(
    result: PropagationResult,
    frame: EigenFrame,
    targets: np.ndarray,
    k: int,
) -> np.ndarray:
    """U'_{m,n} = <n(0)|U(t_k)^dagger|kappa_m>, targets given as columns kappa_m."""
    T = np.asarray(targets, dtype=complex)
    if T.ndim != 2 or T.shape[0] != frame.dim:
        raise ContractViolation(f"targets must be a ({frame.dim}, N) array of column kets")
    _check_branches(frame, T.shape[1])
    out = (frame.vectors[0].conj().T @ result.unitaries[k].conj().T @ T).T
    # Frobenius bounds the spectral norm from above and skips an SVD
    gram = float(np.linalg.norm(T.conj().T @ T - np.eye(T.shape[1])))
    if gram > 1e-10:
        warnings.warn(
            f"targets not orthonormal (Gram defect {gram:.3e}); "
            f"environment map unitarity defect {unitarity_defect(out):.3e}",
            stacklevel=2,
        )
    return out


def process_cost(times: np.ndarray, norms: np.ndarray, tau: float) -> CostCurve:
    """C(t_k) = (1/tau) * trapezoid integral of ||H|| from 0 to t_k."""
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if times.shape != norms.shape or times.size < 2:
        raise ContractViolation("times and norms must match and hold >= 2 samples")
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise ContractViolation("process_cost needs a uniform grid")
    return CostCurve(times, norms, _cumtrapz(norms, float(steps[0])) / tau, float(tau))


def operator_norms(H: np.ndarray, norm: str = "spectral") -> np.ndarray:
    if norm == "spectral":
        return np.linalg.norm(H, ord=2, axis=(-2, -1))
    if norm == "frobenius":
        return np.linalg.norm(H, ord="fro", axis=(-2, -1))
    raise ValueError(f"unknown norm {norm!r}")
