"""Drive schedules, time-dependent Hamiltonians and their instantaneous eigenframes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .numerics import (
    PAULI_X,
    PAULI_Z,
    ContractViolation,
    hermitian_defect,
)

SCHEDULE_KINDS = ("cosine-squared", "linear", "constant", "custom-sampled")
DEFAULT_STEPS = 2000
MATCH_AMBIGUITY = 0.1


class GapError(ValueError):
    """Spectrum degenerate (or eigenstates untrackable) at some grid point."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class DriveSchedule:
    """Control field J(t) on [0, tau].

    ``cosine-squared``: J = B cos^2(pi t / 2 tau); ``linear``: J = B (1 - t/tau);
    ``constant``: J = B; ``custom-sampled``: linear interpolation of ``samples``
    taken on a uniform grid over [0, tau].
    """

    kind: str = "cosine-squared"
    B: float = 1.0
    tau: float = 1.0
    samples: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")
        if not math.isfinite(self.B):
            raise ValueError("B must be finite")
        if self.kind == "custom-sampled":
            if self.samples is None or len(self.samples) < 2:
                raise ValueError("custom-sampled schedule needs at least 2 samples")
            object.__setattr__(self, "samples", tuple(float(x) for x in self.samples))


def schedule_value(s: DriveSchedule, t: float) -> float:
    slack = 1e-12 * s.tau
    if t < -slack or t > s.tau + slack:
        raise ValueError(f"t={t} outside [0, tau={s.tau}]")
    t = min(max(t, 0.0), s.tau)
    if s.kind == "cosine-squared":
        return s.B * math.cos(math.pi * t / (2.0 * s.tau)) ** 2
    if s.kind == "linear":
        return s.B * (1.0 - t / s.tau)
    if s.kind == "constant":
        return s.B
    grid = np.linspace(0.0, s.tau, len(s.samples))
    return float(np.interp(t, grid, s.samples))


def qubit_hamiltonian(B: float, J: float) -> np.ndarray:
    """H0 = (B/2) sigma_x + (J/2) sigma_z."""
    return 0.5 * B * PAULI_X + 0.5 * J * PAULI_Z


@dataclass(frozen=True)
class HamiltonianPath:
    """Hermitian samples H0(t_k) on a uniform grid.

    ``generator`` (when present) evaluates H0 at arbitrary times and is used
    for midpoint samples; otherwise adjacent samples are averaged.
    """

    times: np.ndarray
    samples: np.ndarray
    tau: float
    generator: Callable[[float], np.ndarray] | None = field(default=None, compare=False, repr=False)
    label: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        samples = np.asarray(self.samples, dtype=complex)
        if times.ndim != 1 or times.size < 3:
            raise ContractViolation("path needs at least 3 grid points (K >= 2)")
        if samples.shape[0] != times.size or samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
            raise ContractViolation(f"samples shape {samples.shape} inconsistent with {times.size} times")
        steps = np.diff(times)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0) or steps[0] <= 0:
            raise ContractViolation("time grid must be uniform and increasing")
        defect = np.max(np.abs(samples - np.conj(np.swapaxes(samples, 1, 2))))
        if defect > 1e-12:
            raise ContractViolation(f"non-Hermitian sample in path (defect {defect:.3e})")
        times.setflags(write=False)
        samples.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "samples", samples)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def steps(self) -> int:
        return self.times.size - 1

    def midpoint_samples(self) -> np.ndarray:
        """H0(t_k + dt/2) for k = 0..K-1."""
        if self.generator is None:
            return 0.5 * (self.samples[1:] + self.samples[:-1])
        mids = self.times[:-1] + 0.5 * self.dt
        out = np.array([self.generator(t) for t in mids], dtype=complex)
        return 0.5 * (out + np.conj(np.swapaxes(out, 1, 2)))


def path_from_function(
    hamiltonian_at: Callable[[float], np.ndarray],
    tau: float,
    steps: int = DEFAULT_STEPS,
    t_start: float = 0.0,
    t_end: float | None = None,
    label: str = "",
) -> HamiltonianPath:
    """Sample an arbitrary Hermitian-valued function on a uniform grid."""
    if steps < 2:
        raise ContractViolation(f"need steps >= 2, got {steps}")
    t_end = tau if t_end is None else t_end
    times = np.linspace(t_start, t_end, steps + 1)
    samples = np.array([hamiltonian_at(t) for t in times], dtype=complex)
    if samples.ndim == 1:
        samples = samples[:, None, None]
    elif samples.ndim == 2:
        raise ContractViolation("hamiltonian_at must return square matrices")
    defect = max(hermitian_defect(h) for h in samples)
    if defect > 1e-12:
        raise ContractViolation(f"builder returned non-Hermitian matrix (defect {defect:.3e})")
    return HamiltonianPath(times, samples, tau, generator=hamiltonian_at, label=label)


def build_path(
    schedule: DriveSchedule,
    steps: int = DEFAULT_STEPS,
    t_end: float | None = None,
) -> HamiltonianPath:
    """Two-level path H0(t) = qubit_hamiltonian(B, J(t)) over [0, tau]."""
    if steps < 2:
        raise ContractViolation(f"need steps >= 2, got {steps}")

    def h(t: float) -> np.ndarray:
        return qubit_hamiltonian(schedule.B, schedule_value(schedule, t))

    path = path_from_function(h, schedule.tau, steps, t_end=t_end, label=schedule.kind)
    if schedule.kind == "custom-sampled":
        return HamiltonianPath(path.times, path.samples, path.tau, generator=None, label=path.label)
    return path


def random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (g + g.conj().T)


def random_gapped_hamiltonian(
    dim: int,
    tau: float,
    seed: int,
    steps: int = DEFAULT_STEPS,
    min_gap: float = 0.1,
    max_tries: int = 1000,
) -> Callable[[float], np.ndarray]:
    """H(t) = A + sin(pi t / tau) Bm with seeded Hermitian A, Bm.

    Draws are rejected until every grid point has level spacing >= ``min_gap``.
    """
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, tau, steps + 1)
    s = np.sin(np.pi * times / tau)
    for _ in range(max_tries):
        A = random_hermitian(rng, dim)
        Bm = random_hermitian(rng, dim)
        if dim > 1:
            w = np.linalg.eigvalsh(A[None] + s[:, None, None] * Bm[None])
            if np.min(np.diff(w, axis=1)) < min_gap:
                continue

        def h(t: float, A=A, Bm=Bm) -> np.ndarray:
            return A + math.sin(math.pi * t / tau) * Bm

        return h
    raise RuntimeError(f"no gapped draw for dim={dim} after {max_tries} tries")


def random_gapped_path(
    dim: int, tau: float = 1.0, seed: int = 0, steps: int = DEFAULT_STEPS, min_gap: float = 0.1
) -> HamiltonianPath:
    h = random_gapped_hamiltonian(dim, tau, seed, steps, min_gap)
    return path_from_function(h, tau, steps, label=f"random-{dim}-seed{seed}")


@dataclass(frozen=True)
class EigenFrame:
    """Gauge-fixed instantaneous eigensystem over a path grid.

    ``vectors[k][:, n]`` is |n(t_k)>, with <n(t_k)|n(t_k+1)> real and positive.
    """

    times: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray
    gap_min: float

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def levels(self) -> int:
        return self.vectors.shape[2]

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @cached_property
    def derivatives(self) -> np.ndarray:
        """d|n>/dt: central differences inside, one-sided second order at the ends."""
        return np.gradient(self.vectors, self.dt, axis=0, edge_order=2)


def _first_point_gauge(v: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(v), axis=0)
    lead = v[idx, np.arange(v.shape[1])]
    return v * (np.abs(lead) / lead)


def eigenframe(
    path: HamiltonianPath,
    phase_offsets: Sequence[float] | None = None,
) -> EigenFrame:
    """Instantaneous eigenframe with discrete parallel-transport gauge.

    ``phase_offsets`` multiplies |n(0)> by exp(i*offset_n) after the default
    first-point convention; used to check gauge invariance downstream.
    """
    w, v = np.linalg.eigh(path.samples)
    K1, d = w.shape[0], w.shape[1]

    gap_min = float("inf")
    if d > 1:
        gaps = np.min(np.diff(w, axis=1), axis=1)
        # spectral norm of a Hermitian sample is its largest |eigenvalue|
        thresholds = 1e-9 * (1.0 + np.max(np.abs(w), axis=1))
        bad = np.nonzero(gaps < thresholds)[0]
        if bad.size:
            k = int(bad[0])
            raise GapError(
                f"degenerate spectrum at grid index {k} (t={path.times[k]:.6g}, gap={gaps[k]:.3e})",
                index=k,
            )
        gap_min = float(np.min(gaps))

    v = v.copy()
    v[0] = _first_point_gauge(v[0])
    if phase_offsets is not None:
        offsets = np.asarray(phase_offsets, dtype=float)
        if offsets.shape != (d,):
            raise ContractViolation(f"phase_offsets must have length {d}")
        v[0] = v[0] * np.exp(1j * offsets)

    for k in range(1, K1):
        ov = v[k - 1].conj().T @ v[k]
        if d > 1:
            mags = np.abs(ov)
            best = np.argmax(mags, axis=1)
            top2 = np.sort(mags, axis=1)[:, -2:]
            if np.any(top2[:, 1] - top2[:, 0] < MATCH_AMBIGUITY):
                raise GapError(f"ambiguous eigenstate matching at grid index {k}; refine the grid", index=k)
            if np.any(best != np.arange(d)):
                raise GapError(f"eigenstate order changed at grid index {k}; refine the grid", index=k)
        diag = np.diagonal(ov)
        v[k] = v[k] * (np.conj(diag) / np.abs(diag))

    for arr in (w, v):
        arr.setflags(write=False)
    return EigenFrame(times=path.times, energies=w, vectors=v, gap_min=gap_min)
