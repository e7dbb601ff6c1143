"""Branching system-environment states and the uneven-probability obstruction.

Joint vectors are ordered system (x) environment, i.e. index s * d_E + e.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import EigenFrame
from .numerics import ContractViolation, spectral_norm
from .propagation import PropagationResult
from .shortcuts import PhaseRecord, adiabatic_states, easta_unitary

EVEN_TOL = 1e-12
MAX_DENOMINATOR = 10_000


class ApproximationError(ValueError):
    pass


@dataclass(frozen=True)
class BranchingState:
    """sum_n sqrt(p_n) |n(0)> (x) |E_n(0)>.

    ``system_kets`` and ``environment_kets`` hold one column per branch.
    """

    probabilities: np.ndarray
    system_kets: np.ndarray
    environment_kets: np.ndarray
    joint: np.ndarray

    @property
    def branches(self) -> int:
        return self.probabilities.size

    @property
    def dim_system(self) -> int:
        return self.system_kets.shape[0]

    @property
    def dim_environment(self) -> int:
        return self.environment_kets.shape[0]

    @property
    def is_even(self) -> bool:
        return bool(np.max(np.abs(self.probabilities - 1.0 / self.branches)) <= EVEN_TOL)


def _as_columns(kets, name: str) -> np.ndarray:
    arr = np.asarray(kets, dtype=complex)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ContractViolation(f"{name}: expected a 2-D array of column kets")
    return arr


def make_branching(probabilities, system_kets, environment_kets) -> BranchingState:
    p = np.asarray(probabilities, dtype=float).ravel()
    S = _as_columns(system_kets, "system_kets")
    E = _as_columns(environment_kets, "environment_kets")
    if not (S.shape[1] == E.shape[1] == p.size):
        raise ContractViolation(
            f"branch counts differ: {p.size} probabilities, {S.shape[1]} system kets, {E.shape[1]} environment kets"
        )
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ContractViolation(f"probabilities must be non-negative and sum to 1 (sum={p.sum()!r})")
    if E.shape[0] < p.size:
        raise ContractViolation("environment dimension smaller than branch count")
    gram = spectral_norm(E.conj().T @ E - np.eye(p.size))
    if gram > 1e-10:
        raise ContractViolation(f"environment kets not orthonormal (defect {gram:.3e})")
    if np.max(np.abs(np.linalg.norm(S, axis=0) - 1.0)) > 1e-10:
        raise ContractViolation("system kets must be normalized")
    joint = np.einsum("n,an,bn->ab", np.sqrt(p), S, E).ravel()
    joint = joint / np.linalg.norm(joint)
    for arr in (p, S, E, joint):
        arr.setflags(write=False)
    return BranchingState(p, S, E, joint)


def even_branching(system_kets, dim_environment: int | None = None) -> BranchingState:
    """Equal-weight branching state with computational-basis environment labels."""
    S = _as_columns(system_kets, "system_kets")
    N = S.shape[1]
    d_E = N if dim_environment is None else dim_environment
    return make_branching(np.full(N, 1.0 / N), S, np.eye(d_E, N))


def environment_operator(Uprime: np.ndarray, environment_kets: np.ndarray) -> np.ndarray:
    """Lift an N x N branch-basis map to the full environment, identity off the branch span."""
    E = _as_columns(environment_kets, "environment_kets")
    return E @ Uprime @ E.conj().T + (np.eye(E.shape[0]) - E @ E.conj().T)


def apply_joint(U_S: np.ndarray, U_E: np.ndarray, joint: np.ndarray | BranchingState) -> np.ndarray:
    """(U_S (x) U_E) applied to a joint vector."""
    vec = joint.joint if isinstance(joint, BranchingState) else np.asarray(joint, dtype=complex)
    dS, dE = U_S.shape[0], U_E.shape[0]
    if U_S.shape != (dS, dS) or U_E.shape != (dE, dE) or vec.size != dS * dE:
        raise ContractViolation(
            f"dimension mismatch: U_S {U_S.shape}, U_E {U_E.shape}, joint vector of size {vec.size}"
        )
    return (U_S @ vec.reshape(dS, dE) @ U_E.T).ravel()


def reduced_system_state(joint: np.ndarray, d_S: int, d_E: int) -> np.ndarray:
    """Partial trace over the environment."""
    psi = np.asarray(joint, dtype=complex).reshape(d_S, d_E)
    return psi @ psi.conj().T


def environment_projection(joint: np.ndarray, env_ket: np.ndarray, d_S: int) -> np.ndarray:
    """(I (x) <E|) |joint>: the (unnormalized) system ket attached to ``env_ket``."""
    psi = np.asarray(joint, dtype=complex).reshape(d_S, -1)
    return psi @ np.conj(env_ket)


def bare_overlap(result: PropagationResult, frame: EigenFrame, n: int, k: int) -> float:
    """|<n(t_k)| U(t_k) |n(0)>|."""
    phi = result.unitaries[k] @ frame.vectors[0][:, n]
    return float(abs(np.vdot(frame.vectors[k][:, n], phi)))


def branch_overlap(joint: np.ndarray, state: BranchingState, frame: EigenFrame, n: int, k: int) -> float:
    """Overlap of the system ket in environment branch n with |n(t_k)>."""
    chi = environment_projection(joint, state.environment_kets[:, n], state.dim_system)
    norm = np.linalg.norm(chi)
    if norm == 0.0:
        return 0.0
    return float(min(1.0, abs(np.vdot(frame.vectors[k][:, n], chi)) / norm))


def _positive(probabilities, N: int) -> np.ndarray:
    p = np.asarray(probabilities, dtype=float).ravel()
    if p.size != N:
        raise ContractViolation(f"need {N} probabilities, got {p.size}")
    if np.any(p <= 0):
        raise ContractViolation("all branch probabilities must be strictly positive")
    return p


def uneven_map(
    probabilities, result: PropagationResult, frame: EigenFrame, phases: PhaseRecord, k: int
) -> np.ndarray:
    """M_{m,n} = sqrt(p_m / p_n) * U'_{m,n}; unitary only for equal weights."""
    p = _positive(probabilities, frame.dim)
    return np.sqrt(p[:, None] / p[None, :]) * easta_unitary(result, frame, phases, k)


@dataclass(frozen=True)
class UnitarityDefect:
    mm_dag: np.ndarray  # M M^dagger - I
    m_dag_m: np.ndarray  # M^dagger M - I
    mm_dag_closed: np.ndarray
    m_dag_m_closed: np.ndarray

    @property
    def size(self) -> float:
        return spectral_norm(self.mm_dag)

    @property
    def mismatch(self) -> float:
        return max(
            spectral_norm(self.mm_dag - self.mm_dag_closed),
            spectral_norm(self.m_dag_m - self.m_dag_m_closed),
        )


def unitarity_defect_decomposition(
    probabilities, result: PropagationResult, frame: EigenFrame, phases: PhaseRecord, k: int
) -> UnitarityDefect:
    """Direct M M^dagger - I and M^dagger M - I next to their D-matrix closed forms."""
    p = _positive(probabilities, frame.dim)
    N = p.size
    eye = np.eye(N)
    M = uneven_map(p, result, frame, phases, k)
    psi = adiabatic_states(frame, phases, k)
    phi = result.unitaries[k] @ frame.vectors[0]

    mm_closed = np.empty((N, N), dtype=complex)
    mdm_closed = np.empty((N, N), dtype=complex)
    Id = np.eye(frame.dim)
    for i in range(N):
        D_i = (phi * (p[i] / p)) @ phi.conj().T - Id
        Dcal_i = (psi * (p / p[i])) @ psi.conj().T - Id
        for j in range(N):
            mm_closed[i, j] = np.sqrt(p[j] / p[i]) * (psi[:, j].conj() @ D_i @ psi[:, i])
            mdm_closed[i, j] = np.sqrt(p[i] / p[j]) * (phi[:, j].conj() @ Dcal_i @ phi[:, i])

    return UnitarityDefect(
        mm_dag=M @ M.conj().T - eye,
        m_dag_m=M.conj().T @ M - eye,
        mm_dag_closed=mm_closed,
        m_dag_m_closed=mdm_closed,
    )


def embed_even(probabilities: Sequence[float], tolerance: float = 1e-9) -> tuple[int, tuple[int, ...]]:
    """Smallest D <= 10^4 with p_n ~ k_n / D for integer k_n summing to D.

    The returned multiplicities describe an even state over D fine-grained
    branches that coarse-grains back to ``probabilities``.
    """
    p = np.asarray(probabilities, dtype=float).ravel()
    if p.size == 0 or np.any(p < 0):
        raise ContractViolation("probabilities must be non-negative")
    best = (np.inf, None)
    for D in range(1, MAX_DENOMINATOR + 1):
        k = np.rint(p * D).astype(int)
        if k.sum() != D:
            continue
        resid = float(np.max(np.abs(p - k / D)))
        if resid <= tolerance:
            return D, tuple(int(x) for x in k)
        if resid < best[0]:
            best = (resid, D)
    raise ApproximationError(
        f"no denominator <= {MAX_DENOMINATOR} within {tolerance:g}; best residual {best[0]:.3e} at D={best[1]}"
    )


def even_extension(probabilities, system_kets, tolerance: float = 1e-9) -> BranchingState:
    """Even state over D fine-grained branches reproducing the coarse weights on the system."""
    D, mult = embed_even(probabilities, tolerance)
    S = _as_columns(system_kets, "system_kets")
    cols = np.repeat(np.arange(S.shape[1]), mult)
    return make_branching(np.full(D, 1.0 / D), S[:, cols], np.eye(D))
