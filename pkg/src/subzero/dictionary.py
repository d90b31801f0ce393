"""Relaxometry signal dictionary and low-rank temporal basis extraction.

Signal evolutions are simulated on a grid of relaxation constants, assembled
into a dictionary of unit-norm atoms, and compressed by SVD into an
orthonormal temporal basis that the reconstruction operates in.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, DomainError

# Multi-echo spin-echo protocol: 16 echoes spanning 11.5-368 ms.
T2_ECHO_COUNT = 16
T2_TE_FIRST_MS = 11.5
T2_TE_LAST_MS = 368.0
T2_BASIS_SIZE = 3

# Inversion-recovery protocol: 9 inversion times spanning 100-2000 ms.
T1_TI_COUNT = 9
T1_TI_FIRST_MS = 100.0
T1_TI_LAST_MS = 2000.0
T1_BASIS_SIZE = 4

DEFAULT_GRID_SIZE = 256
DEFAULT_T2_GRID_MS = (60.0, 250.0)
DEFAULT_T1_GRID_MS = (50.0, 5000.0)

ORTHONORMALITY_TOL = 1e-8


class SignalModel(enum.Enum):
    T2_DECAY = "t2"
    T1_IR = "t1"


@dataclass(frozen=True)
class EchoTiming:
    """Ordered echo times (T2) or inversion times (T1), in milliseconds."""

    times: np.ndarray
    model: SignalModel

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        if times.ndim != 1 or times.size < 1:
            raise DomainError("timing requires a 1D list of at least one time")
        if np.any(times <= 0):
            raise DomainError("echo/inversion times must be positive")
        if np.any(np.diff(times) <= 0):
            raise DomainError("echo/inversion times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @property
    def T(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class RelaxationGrid:
    """Relaxation constants (ms) parameterizing the dictionary atoms.

    Values must be positive and sorted ascending; duplicates are allowed and
    produce duplicate identical atoms.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise DomainError("grid requires a 1D list of at least one value")
        if np.any(values <= 0):
            raise DomainError("relaxation constants must be positive")
        if np.any(np.diff(values) < 0):
            raise DomainError("grid values must be sorted ascending")
        object.__setattr__(self, "values", values)

    @property
    def K(self) -> int:
        return self.values.size

    @classmethod
    def log_spaced(cls, lo: float, hi: float, size: int = DEFAULT_GRID_SIZE):
        return cls(np.logspace(np.log10(lo), np.log10(hi), size))


@dataclass(frozen=True)
class SignalDictionary:
    """Unit-norm signal evolutions, one column per grid value."""

    atoms: np.ndarray  # (T, K), real
    timing: EchoTiming
    grid: RelaxationGrid


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal temporal basis, columns ordered by descending energy."""

    phi: np.ndarray  # (T, B), complex
    model: SignalModel | None = field(default=None)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.complex128)
        if phi.ndim != 2 or phi.shape[1] > phi.shape[0]:
            raise DomainError(f"basis must be (T, B) with B <= T, got {phi.shape}")
        gram = phi.conj().T @ phi
        if np.max(np.abs(gram - np.eye(phi.shape[1]))) > ORTHONORMALITY_TOL:
            raise DomainError("basis columns are not orthonormal")
        object.__setattr__(self, "phi", phi)

    @property
    def T(self) -> int:
        return self.phi.shape[0]

    @property
    def B(self) -> int:
        return self.phi.shape[1]

    @classmethod
    def identity(cls, T: int):
        """Trivial basis Phi = I; reduces the subspace chain to per-echo imaging."""
        return cls(np.eye(T, dtype=np.complex128))


def t2_echo_times(
    count: int = T2_ECHO_COUNT,
    first_ms: float = T2_TE_FIRST_MS,
    last_ms: float = T2_TE_LAST_MS,
) -> EchoTiming:
    return EchoTiming(np.linspace(first_ms, last_ms, count), SignalModel.T2_DECAY)


def t1_inversion_times(
    count: int = T1_TI_COUNT,
    first_ms: float = T1_TI_FIRST_MS,
    last_ms: float = T1_TI_LAST_MS,
) -> EchoTiming:
    return EchoTiming(np.linspace(first_ms, last_ms, count), SignalModel.T1_IR)


def default_grid(model: SignalModel, size: int = DEFAULT_GRID_SIZE) -> RelaxationGrid:
    lo, hi = DEFAULT_T2_GRID_MS if model is SignalModel.T2_DECAY else DEFAULT_T1_GRID_MS
    return RelaxationGrid.log_spaced(lo, hi, size)


def simulate_t2_decay(m0, t2, timing: EchoTiming) -> np.ndarray:
    """Mono-exponential decay s_t = m0 * exp(-TE_t / T2).

    Parameters
    ----------
    m0, t2 : scalar or array
        Proton density (>= 0) and decay constant in ms (> 0); broadcast
        against each other, times along the last output axis.
    timing : EchoTiming
        Must carry the T2_DECAY model.
    """
    if timing.model is not SignalModel.T2_DECAY:
        raise DomainError("timing model must be T2_DECAY")
    m0 = np.asarray(m0, dtype=np.float64)
    t2 = np.asarray(t2, dtype=np.float64)
    if np.any(t2 <= 0):
        raise DomainError("t2 must be positive")
    if np.any(m0 < 0):
        raise DomainError("m0 must be non-negative")
    return m0[..., None] * np.exp(-timing.times / t2[..., None])


def simulate_t1_ir(m0, t1, timing: EchoTiming) -> np.ndarray:
    """Inversion recovery s_t = m0 * (1 - 2 exp(-TI_t / T1)), perfect inversion."""
    if timing.model is not SignalModel.T1_IR:
        raise DomainError("timing model must be T1_IR")
    m0 = np.asarray(m0, dtype=np.float64)
    t1 = np.asarray(t1, dtype=np.float64)
    if np.any(t1 <= 0):
        raise DomainError("t1 must be positive")
    if np.any(m0 < 0):
        raise DomainError("m0 must be non-negative")
    return m0[..., None] * (1.0 - 2.0 * np.exp(-timing.times / t1[..., None]))


def simulate_signal(m0, relax, timing: EchoTiming) -> np.ndarray:
    """Dispatch to the simulator matching ``timing.model``."""
    if timing.model is SignalModel.T2_DECAY:
        return simulate_t2_decay(m0, relax, timing)
    return simulate_t1_ir(m0, relax, timing)


def build_dictionary(grid: RelaxationGrid, timing: EchoTiming) -> SignalDictionary:
    """Simulate one atom per grid value and normalize columns to unit norm."""
    atoms = simulate_signal(np.ones(grid.K), grid.values, timing).T  # (T, K)
    norms = np.linalg.norm(atoms, axis=0)
    if np.any(norms < 1e-12):
        bad = grid.values[norms < 1e-12]
        raise DegenerateDataError(f"degenerate atoms at relaxation values {bad}")
    return SignalDictionary(atoms / norms, timing, grid)


def compute_basis(dictionary: SignalDictionary, basis_size: int) -> SubspaceBasis:
    """Extract the rank-``basis_size`` temporal basis by SVD of the atoms.

    Columns are the leading left singular vectors ordered by descending
    singular value, with a deterministic sign convention: the largest-magnitude
    entry of each column is made real and positive.
    """
    T, K = dictionary.atoms.shape
    if not 1 <= basis_size <= min(T, K):
        raise DomainError(f"basis size must be in [1, {min(T, K)}], got {basis_size}")
    u, _, _ = np.linalg.svd(dictionary.atoms, full_matrices=False)
    phi = u[:, :basis_size].astype(np.complex128)
    for b in range(basis_size):
        pivot = phi[np.argmax(np.abs(phi[:, b])), b]
        phi[:, b] *= np.conj(pivot) / np.abs(pivot)
    return SubspaceBasis(phi, model=dictionary.timing.model)


def project_signals(x: np.ndarray, basis: SubspaceBasis) -> np.ndarray:
    """Project per-voxel signal evolutions (..., T) onto the basis -> (..., B)."""
    x = np.asarray(x)
    if x.shape[-1] != basis.T:
        raise DomainError(f"last axis {x.shape[-1]} != basis length {basis.T}")
    return np.einsum("...t,tb->...b", x, np.conj(basis.phi))
