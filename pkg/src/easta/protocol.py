"""One-stop bundle of everything derived from a single Hamiltonian path."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import shortcuts as sc
from .model import EigenFrame, HamiltonianPath, eigenframe
from .propagation import PropagationResult, propagate


@dataclass(frozen=True)
class Protocol:
    path: HamiltonianPath
    frame: EigenFrame
    phases: sc.PhaseRecord
    result: PropagationResult

    @property
    def steps(self) -> int:
        return self.path.steps

    @property
    def tau(self) -> float:
        return self.path.tau

    @cached_property
    def cd_hamiltonians(self) -> np.ndarray:
        return sc.cd_hamiltonians(self.frame)[0]

    @cached_property
    def cd_symmetry_defects(self) -> np.ndarray:
        return sc.cd_hamiltonians(self.frame)[1]

    @cached_property
    def adiabatic_states(self) -> np.ndarray:
        return sc.adiabatic_states(self.frame, self.phases)

    @cached_property
    def cd_unitaries(self) -> np.ndarray:
        return self.adiabatic_states @ self.frame.vectors[0].conj().T[None]

    @cached_property
    def easta_unitaries(self) -> np.ndarray:
        return sc.easta_unitaries(self.result, self.frame, self.phases)

    @cached_property
    def env_hamiltonians(self) -> np.ndarray:
        psi = self.adiabatic_states
        h = np.conj(np.swapaxes(psi, 1, 2)) @ self.cd_hamiltonians @ psi
        return np.swapaxes(h, 1, 2)

    @cached_property
    def env_hamiltonians_fd(self) -> np.ndarray:
        return sc.env_hamiltonians_fd(self.result, self.frame, self.phases, self.easta_unitaries)

    def cd_cost(self, norm: str = "spectral") -> sc.CostCurve:
        return sc.process_cost(self.path.times, sc.operator_norms(self.cd_hamiltonians, norm), self.tau)

    def env_cost(self, norm: str = "spectral") -> sc.CostCurve:
        return sc.process_cost(self.path.times, sc.operator_norms(self.env_hamiltonians, norm), self.tau)


def run_protocol(path: HamiltonianPath, phase_offsets: Sequence[float] | None = None) -> Protocol:
    frame = eigenframe(path, phase_offsets)
    return Protocol(path, frame, sc.adiabatic_phases(frame), propagate(path))
