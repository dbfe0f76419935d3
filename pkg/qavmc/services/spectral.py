"""
Exact spectral tools for sector Hamiltonians.

One dense eigendecomposition per Hamiltonian is reused for every time
evolution, ground-state probability and effective-kernel query.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np
import scipy.linalg

from qavmc.exceptions import NumericalError, SectorError
from qavmc.services.hamiltonians import Configuration, SectorBasis, SectorHamiltonian

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-300
LEVEL_TOLERANCE = 1e-9
GROUND_DEGENERACY_TOLERANCE = 1e-10

StateRef = Union[int, Configuration]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues and orthonormal eigenvector columns <S|Psi_n>."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    basis: SectorBasis

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.eigenvectors.setflags(write=False)

    @property
    def dimension(self) -> int:
        return len(self.eigenvalues)

    @property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.eigenvalues))))

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T

    def index(self, state: StateRef) -> int:
        if isinstance(state, Configuration):
            return self.basis.index_of(state)
        state = int(state)
        if not 0 <= state < self.dimension:
            raise SectorError(f"state index {state} outside 0..{self.dimension - 1}")
        return state


def eigendecompose(hamiltonian: SectorHamiltonian) -> Spectrum:
    """
    Full symmetric eigendecomposition of a sector Hamiltonian.

    Each eigenvector is signed so that its largest-magnitude entry is positive,
    which makes the output deterministic.

    Raises:
        NumericalError: If the symmetric eigensolver does not converge
    """
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(hamiltonian.matrix)
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.error(f"Eigensolver failed on dimension {hamiltonian.dimension}: {str(e)}")
        raise NumericalError(f"symmetric eigensolver did not converge: {str(e)}")

    columns = np.arange(eigenvectors.shape[1])
    pivots = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivots, columns])
    signs[signs == 0] = 1.0
    eigenvectors = eigenvectors * signs

    logger.debug(
        f"Diagonalised dimension {hamiltonian.dimension}: E0={eigenvalues[0]:.10f}"
    )
    return Spectrum(eigenvalues=eigenvalues, eigenvectors=eigenvectors, basis=hamiltonian.basis)


def evolve_row(spec: Spectrum, state: StateRef, tau: float) -> np.ndarray:
    """exp(-iH tau)|S_i> as V exp(-iE tau) V^T e_i."""
    i = spec.index(state)
    v = spec.eigenvectors
    return v @ (np.exp(-1j * spec.eigenvalues * tau) * v[i, :])


def evolution_matrix(spec: Spectrum, tau: float) -> np.ndarray:
    """Full sector unitary exp(-iH tau); column i is evolve_row(spec, i, tau)."""
    v = spec.eigenvectors
    return (v * np.exp(-1j * spec.eigenvalues * tau)) @ v.T


def energy_levels(spec: Spectrum) -> List[np.ndarray]:
    """Group eigenvalue indices into degenerate levels."""
    tol = LEVEL_TOLERANCE * spec.scale
    levels: List[List[int]] = [[0]]
    for n in range(1, spec.dimension):
        if spec.eigenvalues[n] - spec.eigenvalues[levels[-1][0]] <= tol:
            levels[-1].append(n)
        else:
            levels.append([n])
    return [np.array(level, dtype=np.int64) for level in levels]


@dataclass(frozen=True, eq=False)
class GroundStateDistribution:
    """Ground-state amplitudes <S|Psi_0>, probabilities and energy."""

    amplitudes: np.ndarray
    probabilities: np.ndarray
    energy: float
    degenerate: bool = False
    basis: Optional[SectorBasis] = None

    @classmethod
    def from_probabilities(
        cls, probabilities: np.ndarray, basis: Optional[SectorBasis] = None
    ) -> "GroundStateDistribution":
        probabilities = np.asarray(probabilities, dtype=float)
        return cls(
            amplitudes=np.sqrt(probabilities),
            probabilities=probabilities,
            energy=float("nan"),
            basis=basis,
        )

    @property
    def out_of_support(self) -> np.ndarray:
        return self.probabilities < PROBABILITY_FLOOR

    def index(self, state: StateRef) -> int:
        if isinstance(state, Configuration):
            if self.basis is None:
                raise SectorError("distribution carries no basis to resolve configurations")
            return self.basis.index_of(state)
        return int(state)


def ground_distribution(spec: Spectrum) -> GroundStateDistribution:
    amplitudes = spec.eigenvectors[:, 0].copy()
    probabilities = amplitudes ** 2
    degenerate = bool(
        spec.dimension > 1
        and spec.eigenvalues[1] - spec.eigenvalues[0] < GROUND_DEGENERACY_TOLERANCE * spec.scale
    )
    if degenerate:
        logger.warning(
            f"Ground level is degenerate (E1 - E0 = {spec.eigenvalues[1] - spec.eigenvalues[0]:.3e})"
        )
    return GroundStateDistribution(
        amplitudes=amplitudes,
        probabilities=probabilities,
        energy=float(spec.eigenvalues[0]),
        degenerate=degenerate,
        basis=spec.basis,
    )


def _clamped(dist: GroundStateDistribution, state: StateRef) -> float:
    return max(float(dist.probabilities[dist.index(state)]), PROBABILITY_FLOOR)


def config_energy(dist: GroundStateDistribution, state: StateRef) -> float:
    """Configuration 'energy' -log10 P(S), with P clamped at PROBABILITY_FLOOR."""
    return -np.log10(_clamped(dist, state))


def configuration_energies(dist: GroundStateDistribution) -> np.ndarray:
    return -np.log10(np.maximum(dist.probabilities, PROBABILITY_FLOOR))


def delta_epsilon(dist: GroundStateDistribution, state_i: StateRef, state_j: StateRef) -> float:
    """log10(P(S_i) / P(S_j))."""
    return float(np.log10(_clamped(dist, state_i)) - np.log10(_clamped(dist, state_j)))


def expectation(dist: GroundStateDistribution, diagonal: np.ndarray) -> float:
    """Exact ground-state expectation of a diagonal observable."""
    return float(np.dot(dist.probabilities, diagonal))


def dominant_configurations(dist: GroundStateDistribution, rtol: float = 1e-8) -> np.ndarray:
    """Indices of every configuration tied for the largest probability."""
    top = np.max(dist.probabilities)
    return np.flatnonzero(dist.probabilities >= top * (1.0 - rtol))
