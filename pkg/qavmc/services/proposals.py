"""
Proposal kernels Q(S_i, .) over a sector basis.

Every kernel works on basis indices and exposes the full proposal row,
single-move sampling from a caller-supplied numpy Generator, and whole-matrix
assembly. All kinds are symmetric, so Metropolis acceptance only needs the
target ratio.
"""

import itertools
import logging
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from qavmc.exceptions import KernelError, SectorError
from qavmc.services.hamiltonians import Configuration, SectorBasis
from qavmc.services.spectral import (
    Spectrum,
    energy_levels,
    evolution_matrix,
    evolve_row,
)

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-10
DEFAULT_INTERVAL_POINTS = 64

StateRef = Union[int, Configuration]


def _resolve(basis: SectorBasis, state: StateRef) -> int:
    if isinstance(state, Configuration):
        return basis.index_of(state)
    state = int(state)
    if not 0 <= state < len(basis):
        raise SectorError(f"state index {state} outside 0..{len(basis) - 1}")
    return state


def _draw(cumulative: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random() * cumulative[-1]
    return int(min(np.searchsorted(cumulative, u, side="right"), len(cumulative) - 1))


def midpoint_grid(lo: float, hi: float, n_points: int) -> np.ndarray:
    """Midpoints of n_points equal cells on [lo, hi]."""
    if n_points < 1:
        raise KernelError("quadrature grid must be nonempty")
    width = (hi - lo) / n_points
    return lo + (np.arange(n_points) + 0.5) * width


class ProposalKernel(ABC):
    """Base class for proposal kernels."""

    kind: str = ""

    def __init__(self, basis: SectorBasis, tag: Optional[str] = None):
        self.basis = basis
        self.tag = tag or self.kind
        # True when missing moves force mass onto the self-move
        self.collapsed = False

    @property
    def dimension(self) -> int:
        return len(self.basis)

    @abstractmethod
    def row(self, i: int) -> np.ndarray:
        """Proposal probabilities Q(S_i, .) over the basis."""

    @abstractmethod
    def sample(self, i: int, rng: np.random.Generator) -> int:
        """Draw the index of a proposed move from S_i."""

    def matrix(self) -> np.ndarray:
        return np.vstack([self.row(i) for i in range(self.dimension)])

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(tag={self.tag!r}, dimension={self.dimension})"


class UniformKernel(ProposalKernel):
    """Any other configuration of the sector with equal probability."""

    kind = "Uniform"

    def __init__(self, basis: SectorBasis, tag: Optional[str] = None):
        super().__init__(basis, tag)
        if len(basis) == 1:
            self.collapsed = True
            logger.warning("Uniform proposal on a one-state sector only proposes the self-move")

    def row(self, i: int) -> np.ndarray:
        n = self.dimension
        if n == 1:
            return np.ones(1)
        r = np.full(n, 1.0 / (n - 1))
        r[i] = 0.0
        return r

    def sample(self, i: int, rng: np.random.Generator) -> int:
        n = self.dimension
        if n == 1:
            return i
        j = int(rng.integers(n - 1))
        return j + 1 if j >= i else j


class ExchangeKernel(ProposalKernel):
    """Swap the occupations of a uniformly chosen pair of same-spin spin-orbitals."""

    kind = "Exchange"

    def __init__(self, basis: SectorBasis, tag: Optional[str] = None):
        super().__init__(basis, tag)
        self.pairs: List[Tuple[int, int]] = [
            (2 * p + spin, 2 * q + spin)
            for spin in (0, 1)
            for p, q in itertools.combinations(range(basis.n_orb), 2)
        ]
        if not self.pairs:
            self.collapsed = True
            logger.warning("Exchange proposal has no orbital pairs; every move is a self-move")

    def _apply(self, i: int, pair: Tuple[int, int]) -> int:
        bits = self.basis.mask(i)
        p, q = pair
        if ((bits >> p) & 1) == ((bits >> q) & 1):
            return i
        return self.basis.index[bits ^ (1 << p) ^ (1 << q)]

    def row(self, i: int) -> np.ndarray:
        r = np.zeros(self.dimension)
        if not self.pairs:
            r[i] = 1.0
            return r
        for pair in self.pairs:
            r[self._apply(i, pair)] += 1.0
        return r / len(self.pairs)

    def sample(self, i: int, rng: np.random.Generator) -> int:
        if not self.pairs:
            return i
        return self._apply(i, self.pairs[int(rng.integers(len(self.pairs)))])


class ExcitationSDKernel(ProposalKernel):
    """
    Singles and doubles, each branch taken with probability 1/2.

    A single is uniform over same-spin (occupied, virtual) pairs. A double picks
    an unordered occupied pair uniformly and then an unordered virtual pair with
    the same spin content uniformly. Move counts depend only on the sector, which
    keeps the kernel symmetric.
    """

    kind = "ExcitationSD"

    def __init__(self, basis: SectorBasis, tag: Optional[str] = None):
        super().__init__(basis, tag)
        self._moves: Dict[int, Tuple[np.ndarray, List[np.ndarray]]] = {}
        singles, doubles = self.moves(0)
        if len(singles) == 0 or not doubles or any(len(t) == 0 for t in doubles):
            self.collapsed = True
            logger.warning(
                f"ExcitationSD proposal on sector {basis.sector} keeps self-move mass "
                f"({len(singles)} singles, {sum(len(t) for t in doubles)} doubles)"
            )

    def moves(self, i: int) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Single targets, and double targets grouped by occupied pair."""
        if i in self._moves:
            return self._moves[i]

        bits = self.basis.mask(i)
        n_so = self.basis.n_qubits
        occ = [p for p in range(n_so) if (bits >> p) & 1]
        virt = [p for p in range(n_so) if not (bits >> p) & 1]
        index = self.basis.index

        singles = np.array(
            [index[bits ^ (1 << o) ^ (1 << a)] for o in occ for a in virt if (a - o) % 2 == 0],
            dtype=np.int64,
        )
        doubles = []
        for o1, o2 in itertools.combinations(occ, 2):
            spins = sorted((o1 % 2, o2 % 2))
            targets = [
                index[bits ^ (1 << o1) ^ (1 << o2) ^ (1 << a) ^ (1 << b)]
                for a, b in itertools.combinations(virt, 2)
                if sorted((a % 2, b % 2)) == spins
            ]
            doubles.append(np.array(targets, dtype=np.int64))

        self._moves[i] = (singles, doubles)
        return singles, doubles

    def row(self, i: int) -> np.ndarray:
        r = np.zeros(self.dimension)
        singles, doubles = self.moves(i)
        if len(singles):
            np.add.at(r, singles, 0.5 / len(singles))
        else:
            r[i] += 0.5
        if not doubles:
            r[i] += 0.5
            return r
        weight = 0.5 / len(doubles)
        for targets in doubles:
            if len(targets):
                np.add.at(r, targets, weight / len(targets))
            else:
                r[i] += weight
        return r

    def sample(self, i: int, rng: np.random.Generator) -> int:
        singles, doubles = self.moves(i)
        if rng.random() < 0.5:
            if not len(singles):
                return i
            return int(singles[rng.integers(len(singles))])
        if not doubles:
            return i
        targets = doubles[int(rng.integers(len(doubles)))]
        if not len(targets):
            return i
        return int(targets[rng.integers(len(targets))])


class ExcitationSDFlipKernel(ExcitationSDKernel):
    """Global spin flip with probability 1/2, otherwise an ExcitationSD move."""

    kind = "ExcitationSDFlip"

    def __init__(self, basis: SectorBasis, tag: Optional[str] = None):
        self.flip = basis.spin_flip_permutation
        super().__init__(basis, tag)

    def row(self, i: int) -> np.ndarray:
        r = 0.5 * super().row(i)
        r[self.flip[i]] += 0.5
        return r

    def sample(self, i: int, rng: np.random.Generator) -> int:
        if rng.random() < 0.5:
            return int(self.flip[i])
        return super().sample(i, rng)


CLASSICAL_KERNELS = {
    kernel.kind: kernel
    for kernel in (UniformKernel, ExchangeKernel, ExcitationSDKernel, ExcitationSDFlipKernel)
}


def make_classical_kernel(kind: str, basis: SectorBasis, tag: Optional[str] = None) -> ProposalKernel:
    try:
        return CLASSICAL_KERNELS[kind](basis, tag)
    except KeyError:
        raise KernelError(f"unknown classical proposal {kind!r}")


class QuantumAveragedKernel(ProposalKernel):
    """
    Mixture of quantum kernels over kernel Hamiltonians and evolution times.

    With a finite tau grid the mixture matrix is assembled once and sampled row
    by row. A tau interval is replaced by its midpoint quadrature grid; each move
    draws one grid time uniformly, so samples follow the averaged row exactly.
    """

    kind = "QuantumAveraged"

    def __init__(
        self,
        spectra: Sequence[Spectrum],
        taus: Optional[Sequence[float]] = None,
        tau_interval: Optional[Tuple[float, float]] = None,
        n_tau_points: int = DEFAULT_INTERVAL_POINTS,
        tag: Optional[str] = None,
    ):
        if not spectra:
            raise KernelError("a quantum kernel needs at least one spectrum")
        basis = spectra[0].basis
        for spec in spectra[1:]:
            if spec.basis.sector != basis.sector or spec.basis.n_orb != basis.n_orb:
                raise SectorError("spectra of a mixed quantum kernel live in different sectors")
        if (taus is None) == (tau_interval is None):
            raise KernelError("give exactly one of a tau grid or a tau interval")
        super().__init__(basis, tag)

        self.spectra = list(spectra)
        self.tau_interval = tuple(tau_interval) if tau_interval is not None else None
        if self.tau_interval is not None:
            self.taus = midpoint_grid(self.tau_interval[0], self.tau_interval[1], n_tau_points)
        else:
            self.taus = np.asarray(taus, dtype=float)
            if self.taus.size == 0:
                raise KernelError("quadrature grid must be nonempty")
        self._matrix: Optional[np.ndarray] = None
        self._cumulative: Optional[np.ndarray] = None

    def row(self, i: int) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix[i].copy()
        return averaged_quantum_row(self.spectra, i, self.taus)

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            total = np.zeros((self.dimension, self.dimension))
            for spec in self.spectra:
                for tau in self.taus:
                    total += np.abs(evolution_matrix(spec, tau)) ** 2
            self._matrix = total / (len(self.spectra) * len(self.taus))
        return self._matrix.copy()

    def sample(self, i: int, rng: np.random.Generator) -> int:
        if self.tau_interval is None:
            if self._cumulative is None:
                self.matrix()
                self._cumulative = np.cumsum(self._matrix, axis=1)
            return _draw(self._cumulative[i], rng)

        spec = self.spectra[int(rng.integers(len(self.spectra)))]
        tau = self.taus[int(rng.integers(len(self.taus)))]
        return _draw(np.cumsum(np.abs(evolve_row(spec, i, tau)) ** 2), rng)


class QuantumKernel(QuantumAveragedKernel):
    """Measurement distribution |<S_j|exp(-iH tau)|S_i>|^2 of one kernel Hamiltonian."""

    kind = "Quantum"

    def __init__(
        self,
        spec: Spectrum,
        tau: Optional[float] = None,
        tau_interval: Optional[Tuple[float, float]] = None,
        n_tau_points: int = DEFAULT_INTERVAL_POINTS,
        tag: Optional[str] = None,
    ):
        taus = [tau] if tau is not None else None
        super().__init__([spec], taus, tau_interval, n_tau_points, tag)
        self.tau = tau


class EffectiveKernel(ProposalKernel):
    """
    Infinite-time average of the quantum kernel.

    Q(S_i, S_j) = sum over energy levels L of (Pi_L)_ij^2, where Pi_L projects on
    level L. Without degeneracy this is sum_n p_n(S_i) p_n(S_j).
    """

    kind = "Effective"

    def __init__(self, spec: Spectrum, tag: Optional[str] = None):
        super().__init__(spec.basis, tag)
        self.spec = spec
        self.levels = energy_levels(spec)
        v = spec.eigenvectors
        single = np.array([level[0] for level in self.levels if len(level) == 1], dtype=np.int64)
        self._weights = v[:, single] ** 2
        self._degenerate = [v[:, level] for level in self.levels if len(level) > 1]
        self._level_vectors = [v[:, level] for level in self.levels]
        self._matrix: Optional[np.ndarray] = None

    def row(self, i: int) -> np.ndarray:
        if self._matrix is not None:
            return self._matrix[i].copy()
        r = self._weights @ self._weights[i]
        for block in self._degenerate:
            r += (block @ block[i]) ** 2
        return r

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            q = self._weights @ self._weights.T
            for block in self._degenerate:
                q += (block @ block.T) ** 2
            self._matrix = q
        return self._matrix.copy()

    def sample(self, i: int, rng: np.random.Generator) -> int:
        # level L with probability (Pi_L)_ii, then S_j with (Pi_L)_ij^2 / (Pi_L)_ii
        level_weights = np.array([np.dot(block[i], block[i]) for block in self._level_vectors])
        block = self._level_vectors[_draw(np.cumsum(level_weights), rng)]
        return _draw(np.cumsum((block @ block[i]) ** 2), rng)


def classical_row(kind: str, basis: SectorBasis, state: StateRef) -> np.ndarray:
    return make_classical_kernel(kind, basis).row(_resolve(basis, state))


def classical_sample(
    kind: str, basis: SectorBasis, state: StateRef, rng: np.random.Generator
) -> StateRef:
    """One classical move; returns the same type (index or Configuration) as given."""
    j = make_classical_kernel(kind, basis).sample(_resolve(basis, state), rng)
    return basis.configuration(j) if isinstance(state, Configuration) else j


def quantum_row(spec: Spectrum, state: StateRef, tau: float) -> np.ndarray:
    return np.abs(evolve_row(spec, state, tau)) ** 2


def effective_row(spec: Spectrum, state: StateRef) -> np.ndarray:
    return EffectiveKernel(spec).row(spec.index(state))


def averaged_quantum_row(
    spectra: Union[Spectrum, Sequence[Spectrum]], state: StateRef, taus: Sequence[float]
) -> np.ndarray:
    """Arithmetic mean of quantum rows over every (spectrum, tau) pair."""
    if isinstance(spectra, Spectrum):
        spectra = [spectra]
    taus = np.asarray(taus, dtype=float)
    if not len(spectra) or taus.size == 0:
        raise KernelError("quadrature grid must be nonempty")
    basis = spectra[0].basis
    if any(s.basis.sector != basis.sector or s.basis.n_orb != basis.n_orb for s in spectra):
        raise SectorError("spectra of a mixed quantum kernel live in different sectors")
    rows = [quantum_row(spec, state, tau) for spec in spectra for tau in taus]
    return np.mean(rows, axis=0)


def time_averaged_row(spec: Spectrum, state: StateRef, T: float, n_points: int) -> np.ndarray:
    """Midpoint-rule average of quantum_row over tau in (-T, T)."""
    return averaged_quantum_row(spec, state, midpoint_grid(-T, T, n_points))


def kernel_matrix(kernel: ProposalKernel) -> np.ndarray:
    return kernel.matrix()


def check_kernel(q: np.ndarray, tol: float = ROW_TOLERANCE) -> None:
    """
    Assert that a kernel matrix is a symmetric stochastic matrix.

    Raises:
        KernelError: On negative entries, row sums away from 1 or asymmetry
    """
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise KernelError(f"kernel matrix must be square, got shape {q.shape}")
    if np.min(q) < -tol:
        raise KernelError(f"kernel has negative entries (min {np.min(q):.3e})")
    row_error = np.max(np.abs(q.sum(axis=1) - 1.0))
    if row_error > tol:
        raise KernelError(f"kernel rows do not sum to 1 (max deviation {row_error:.3e})")
    asymmetry = np.max(np.abs(q - q.T))
    if asymmetry > tol:
        raise KernelError(f"kernel is not symmetric (max |Q - Q^T| = {asymmetry:.3e})")
