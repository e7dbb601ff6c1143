"""Time-ordered propagator of a sampled Hamiltonian path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EigenFrame, HamiltonianPath
from .numerics import unitary_steps

MAX_UNITARITY_DEFECT = 1e-8
METHOD = "midpoint-exponential"


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagationResult:
    unitaries: np.ndarray  # (K+1, d, d), unitaries[0] = I
    path: HamiltonianPath
    method: str = METHOD

    @property
    def final(self) -> np.ndarray:
        return self.unitaries[-1]

    def unitarity_defects(self) -> np.ndarray:
        U = self.unitaries
        eye = np.eye(U.shape[1])
        return np.linalg.norm(U @ np.conj(np.swapaxes(U, 1, 2)) - eye, ord=2, axis=(1, 2))


def propagate(path: HamiltonianPath, initial: np.ndarray | None = None) -> PropagationResult:
    """U(t_{k+1}) = exp(-i H0(t_k + dt/2) dt) U(t_k), starting from ``initial`` (default I).

    Raises StepSizeError when the accumulated unitarity defect exceeds 1e-8.
    """
    d = path.dim
    steps = unitary_steps(path.midpoint_samples(), path.dt)
    U = np.empty((path.steps + 1, d, d), dtype=complex)
    U[0] = np.eye(d) if initial is None else np.asarray(initial, dtype=complex)
    for k in range(path.steps):
        U[k + 1] = steps[k] @ U[k]
    U.setflags(write=False)
    result = PropagationResult(U, path)
    worst = float(np.max(result.unitarity_defects()))
    if worst > MAX_UNITARITY_DEFECT:
        raise StepSizeError(
            f"propagator unitarity defect {worst:.3e} exceeds {MAX_UNITARITY_DEFECT:g}; increase the step count"
        )
    return result


def evolved_eigenstate(result: PropagationResult, frame: EigenFrame, n: int, k: int) -> np.ndarray:
    """|phi_n(t_k)> = U(t_k)|n(t_0)>."""
    if not 0 <= n < frame.levels:
        raise IndexError(f"level {n} out of range")
    if not 0 <= k <= frame.steps:
        raise IndexError(f"grid index {k} out of range")
    phi = result.unitaries[k] @ frame.vectors[0][:, n]
    return phi / np.linalg.norm(phi)
