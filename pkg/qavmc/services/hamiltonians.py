"""Sector-restricted Fermi-Hubbard and molecular Hamiltonians.

Spin-orbitals are interleaved: orbital 2p is site/orbital p with spin alpha,
orbital 2p + 1 the same site with spin beta. A configuration is packed into an
integer whose bit i is the occupation of spin-orbital i, and fermionic signs
follow the Jordan-Wigner ordering of those bits.
"""

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from qavmc.exceptions import IntegralError, SectorError
from qavmc.schemas import LatticeSpec

logger = logging.getLogger(__name__)

# A fermionic term: coefficient and a product of ladder operators,
# each (spin-orbital, is_creation), applied right to left.
FermionTerm = Tuple[float, Tuple[Tuple[int, bool], ...]]

SPIN_INDEX = {"alpha": 0, "beta": 1}


def popcount(value: int) -> int:
    return bin(value).count("1")


def _alpha_mask(n_qubits: int) -> int:
    return sum(1 << i for i in range(0, n_qubits, 2))


@dataclass(frozen=True)
class Configuration:
    """Occupation string of N spin-orbitals packed into an integer."""

    bits: int
    n_qubits: int

    @classmethod
    def from_spins(cls, spins: Sequence[int]) -> "Configuration":
        values = [int(s) for s in spins]
        if any(s not in (-1, 1) for s in values):
            raise SectorError("spin values must be -1 or +1")
        bits = sum(1 << i for i, s in enumerate(values) if s == 1)
        return cls(bits=bits, n_qubits=len(values))

    @classmethod
    def from_bitstring(cls, text: str) -> "Configuration":
        """Parse '0110...' with spin-orbital 0 first."""
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise SectorError(f"not a bitstring: {text!r}")
        bits = sum(1 << i for i, c in enumerate(text) if c == "1")
        return cls(bits=bits, n_qubits=len(text))

    @property
    def spins(self) -> np.ndarray:
        return np.array(
            [1 if (self.bits >> i) & 1 else -1 for i in range(self.n_qubits)], dtype=np.int8
        )

    def bitstring(self) -> str:
        return bitstring(self.bits, self.n_qubits)

    def counts(self) -> Tuple[int, int]:
        """Per-spin occupation counts (N_alpha, N_beta)."""
        alpha = self.bits & _alpha_mask(self.n_qubits)
        return popcount(alpha), popcount(self.bits ^ alpha)


def bitstring(bits: int, n_qubits: int) -> str:
    return "".join("1" if (bits >> i) & 1 else "0" for i in range(n_qubits))


def spin_flip_bits(bits: int, n_qubits: int) -> int:
    """Exchange alpha and beta occupations site by site."""
    alpha = _alpha_mask(n_qubits)
    return ((bits & alpha) << 1) | ((bits >> 1) & alpha)


def spin_flip(config: Configuration) -> Configuration:
    return Configuration(spin_flip_bits(config.bits, config.n_qubits), config.n_qubits)


def hamming(left: Union[Configuration, int], right: Union[Configuration, int]) -> int:
    """Number of spin-orbitals with different occupation."""
    if isinstance(left, Configuration) and isinstance(right, Configuration):
        if left.n_qubits != right.n_qubits:
            raise SectorError(
                f"length mismatch: {left.n_qubits} vs {right.n_qubits} spin-orbitals"
            )
        return popcount(left.bits ^ right.bits)
    left_bits = left.bits if isinstance(left, Configuration) else int(left)
    right_bits = right.bits if isinstance(right, Configuration) else int(right)
    return popcount(left_bits ^ right_bits)


def hamming_many(bits: int, states: np.ndarray) -> np.ndarray:
    """Hamming distances from one packed state to an array of packed states."""
    xor = np.bitwise_xor(states.astype(np.uint64), np.uint64(bits))
    return np.unpackbits(xor.view(np.uint8).reshape(-1, 8), axis=1).sum(axis=1)


class SectorBasis:
    """All configurations with fixed (N_alpha, N_beta), sorted by packed value."""

    def __init__(self, n_orb: int, n_alpha: int, n_beta: int):
        if n_orb < 1:
            raise SectorError("at least one spatial orbital is required")
        if not (0 <= n_alpha <= n_orb and 0 <= n_beta <= n_orb):
            raise SectorError(
                f"empty sector: ({n_alpha}, {n_beta}) electrons on {n_orb} orbitals"
            )
        self.n_orb = n_orb
        self.n_alpha = n_alpha
        self.n_beta = n_beta
        self.n_qubits = 2 * n_orb

        masks = []
        for alpha in itertools.combinations(range(n_orb), n_alpha):
            alpha_bits = sum(1 << (2 * p) for p in alpha)
            for beta in itertools.combinations(range(n_orb), n_beta):
                masks.append(alpha_bits | sum(1 << (2 * p + 1) for p in beta))
        masks.sort()

        self.states = np.array(masks, dtype=np.uint64)
        self.states.setflags(write=False)
        self._masks: List[int] = masks
        self.index: Dict[int, int] = {mask: i for i, mask in enumerate(masks)}

    def __len__(self) -> int:
        return len(self._masks)

    def __repr__(self) -> str:
        return (
            f"SectorBasis(n_orb={self.n_orb}, n_alpha={self.n_alpha}, "
            f"n_beta={self.n_beta}, size={len(self)})"
        )

    @property
    def sector(self) -> Tuple[int, int]:
        return self.n_alpha, self.n_beta

    def mask(self, i: int) -> int:
        return self._masks[i]

    def configuration(self, i: int) -> Configuration:
        return Configuration(self._masks[i], self.n_qubits)

    def index_of(self, config: Union[Configuration, int]) -> int:
        bits = config.bits if isinstance(config, Configuration) else int(config)
        try:
            return self.index[bits]
        except KeyError:
            raise SectorError(
                f"configuration {bitstring(bits, self.n_qubits)} is outside sector {self.sector}"
            )

    def contains(self, bits: int) -> bool:
        return bits in self.index

    @cached_property
    def occupations(self) -> np.ndarray:
        """(n_states, N) table of 0/1 occupations."""
        table = np.zeros((len(self), self.n_qubits), dtype=np.int8)
        for k, mask in enumerate(self._masks):
            for i in range(self.n_qubits):
                table[k, i] = (mask >> i) & 1
        table.setflags(write=False)
        return table

    @cached_property
    def spins(self) -> np.ndarray:
        """(n_states, N) table of +-1 spins."""
        table = (2 * self.occupations - 1).astype(np.int8)
        table.setflags(write=False)
        return table

    @cached_property
    def spin_flip_permutation(self) -> np.ndarray:
        """Index of spin_flip(S) for every S; only defined when N_alpha = N_beta."""
        if self.n_alpha != self.n_beta:
            raise SectorError("spin flip leaves the sector unless N_alpha = N_beta")
        perm = np.array(
            [self.index[spin_flip_bits(m, self.n_qubits)] for m in self._masks], dtype=np.int64
        )
        perm.setflags(write=False)
        return perm


@dataclass(frozen=True, eq=False)
class MolecularIntegrals:
    """Spatial-orbital integrals in chemists' notation (Hartree)."""

    n_orb: int
    h: np.ndarray
    g: np.ndarray
    e_nuc: float = 0.0

    def __post_init__(self):
        n = self.n_orb
        if self.h.shape != (n, n):
            raise IntegralError(f"one-body shape {self.h.shape} does not match n_orb={n}")
        if self.g.shape != (n, n, n, n):
            raise IntegralError(f"two-body shape {self.g.shape} does not match n_orb={n}")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.g))):
            raise IntegralError("integrals must be finite")
        if not np.allclose(self.h, self.h.T, atol=1e-10):
            raise IntegralError("one-body integrals are not symmetric")
        for perm in ((1, 0, 2, 3), (2, 3, 0, 1), (0, 1, 3, 2)):
            if not np.allclose(self.g, self.g.transpose(perm), atol=1e-10):
                raise IntegralError("two-body integrals lack 8-fold symmetry")


@dataclass(frozen=True, eq=False)
class SectorHamiltonian:
    """Real symmetric Hamiltonian restricted to a sector basis."""

    basis: SectorBasis
    matrix: np.ndarray
    param_tag: Dict[str, Union[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix.shape != (len(self.basis), len(self.basis)):
            raise SectorError("matrix shape does not match the basis")
        if not np.all(np.isfinite(self.matrix)):
            raise SectorError("Hamiltonian contains non-finite entries")
        self.matrix.setflags(write=False)

    @property
    def dimension(self) -> int:
        return len(self.basis)

    @cached_property
    def sparse_rows(self) -> sparse.csr_matrix:
        """CSR form for local-energy evaluation."""
        return sparse.csr_matrix(self.matrix)


def _mirror_upper(matrix: np.ndarray) -> np.ndarray:
    return np.triu(matrix) + np.triu(matrix, 1).T


def _ladder_sign(bits: int, p: int) -> int:
    return -1 if popcount(bits & ((1 << p) - 1)) % 2 else 1


def apply_ladder(bits: int, p: int, creation: bool) -> Optional[Tuple[int, int]]:
    """Apply a_p^dagger (creation) or a_p to a packed state; None when it vanishes."""
    occupied = (bits >> p) & 1
    if creation == bool(occupied):
        return None
    return _ladder_sign(bits, p), bits ^ (1 << p)


def hop_sign(bits: int, p: int, q: int) -> int:
    """Sign of a_p^dagger a_q on a state with q occupied and p empty."""
    lo, hi = (p, q) if p < q else (q, p)
    between = bits & ((1 << hi) - 1) & ~((1 << (lo + 1)) - 1)
    return -1 if popcount(between) % 2 else 1


def half_filling(n_sites: int) -> Tuple[int, int]:
    n_alpha = (n_sites + 1) // 2
    return n_alpha, n_sites - n_alpha


def build_hubbard(
    lattice: LatticeSpec,
    t: float,
    U: float,
    sector: Optional[Tuple[int, int]] = None,
) -> SectorHamiltonian:
    """
    Build the Fermi-Hubbard Hamiltonian in a particle-number sector.

    Args:
        lattice: Lattice geometry (open boundaries)
        t: Hopping amplitude
        U: On-site interaction
        sector: (N_alpha, N_beta); half filling when omitted

    Returns:
        SectorHamiltonian with U * (double occupancies) on the diagonal and
        -t times the Jordan-Wigner sign on nearest-neighbour same-spin hops

    Raises:
        SectorError: When the sector is empty
    """
    n_sites = lattice.n_sites
    n_alpha, n_beta = sector if sector is not None else half_filling(n_sites)
    basis = SectorBasis(n_sites, n_alpha, n_beta)
    alpha = _alpha_mask(basis.n_qubits)
    edges = lattice.edges()

    matrix = np.zeros((len(basis), len(basis)))
    for k, bits in enumerate(basis._masks):
        matrix[k, k] = U * popcount(bits & (bits >> 1) & alpha)
        if t == 0.0:
            continue
        for i, j in edges:
            for spin in (0, 1):
                p, q = 2 * i + spin, 2 * j + spin
                occ_p, occ_q = (bits >> p) & 1, (bits >> q) & 1
                if occ_p == occ_q:
                    continue
                target = bits ^ (1 << p) ^ (1 << q)
                matrix[basis.index[target], k] = -t * hop_sign(bits, p, q)

    logger.debug(f"Built Hubbard Hamiltonian on {lattice.dims} sites, dimension {len(basis)}")
    return SectorHamiltonian(
        basis=basis,
        matrix=_mirror_upper(matrix),
        param_tag={"model": "hubbard", "t": float(t), "U": float(U)},
    )


def hubbard_integrals(lattice: LatticeSpec, t: float, U: float) -> MolecularIntegrals:
    """Fermi-Hubbard model written as one- and two-electron integrals."""
    n = lattice.n_sites
    h = np.zeros((n, n))
    for i, j in lattice.edges():
        h[i, j] = h[j, i] = -t
    g = np.zeros((n, n, n, n))
    for p in range(n):
        g[p, p, p, p] = U
    return MolecularIntegrals(n_orb=n, h=h, g=g, e_nuc=0.0)


def apply_hopping_mix(ints: MolecularIntegrals, gamma_e: float) -> MolecularIntegrals:
    """
    Replace part of the one-body term by a uniform hopping operator.

    The one-body part becomes (1 - gamma_e) h + gamma_e * alpha * H_hop with
    H_hop = -1 off the diagonal and alpha = ||h||_F / sqrt(n (n - 1)).

    Args:
        ints: Molecular integrals
        gamma_e: Hopping weight in [0, 1]

    Returns:
        New integrals sharing the two-body tensor and nuclear energy

    Raises:
        IntegralError: For gamma_e outside [0, 1] or fewer than two orbitals
    """
    if not 0.0 <= gamma_e <= 1.0:
        raise IntegralError(f"gamma_e must lie in [0, 1], got {gamma_e}")
    n = ints.n_orb
    if n < 2:
        raise IntegralError("hopping normalisation needs at least two orbitals")
    if gamma_e == 0.0:
        return MolecularIntegrals(n_orb=n, h=ints.h.copy(), g=ints.g, e_nuc=ints.e_nuc)

    alpha = np.linalg.norm(ints.h, "fro") / np.sqrt(n * (n - 1))
    hopping = -(np.ones((n, n)) - np.eye(n))
    h = (1.0 - gamma_e) * ints.h + gamma_e * alpha * hopping
    return MolecularIntegrals(n_orb=n, h=h, g=ints.g, e_nuc=ints.e_nuc)


def spin_orbital_integrals(ints: MolecularIntegrals) -> Tuple[np.ndarray, np.ndarray]:
    """One-body matrix and antisymmetrised <PQ||RS> over interleaved spin-orbitals."""
    n_so = 2 * ints.n_orb
    spatial = np.arange(n_so) // 2
    spin = np.arange(n_so) % 2

    same_spin = spin[:, None] == spin[None, :]
    h_so = ints.h[np.ix_(spatial, spatial)] * same_spin

    # <pq|rs> = (pr|qs)
    physicist = ints.g.transpose(0, 2, 1, 3)
    coulomb = physicist[np.ix_(spatial, spatial, spatial, spatial)]
    coulomb = coulomb * same_spin[:, None, :, None] * same_spin[None, :, None, :]
    antisym = coulomb - coulomb.transpose(0, 1, 3, 2)
    return h_so, antisym


def build_molecular(
    ints: MolecularIntegrals,
    sector: Tuple[int, int],
    nelec: Optional[int] = None,
    param_tag: Optional[Dict[str, Union[str, float]]] = None,
) -> SectorHamiltonian:
    """
    Build the electronic Hamiltonian in a sector via Slater-Condon rules.

    Args:
        ints: Molecular integrals (chemists' notation)
        sector: (N_alpha, N_beta)
        nelec: Electron count declared by the integral source, if any
        param_tag: Provenance record stored on the result

    Returns:
        SectorHamiltonian including the nuclear repulsion on the diagonal

    Raises:
        SectorError: When the sector disagrees with nelec or is empty
    """
    n_alpha, n_beta = sector
    if nelec is not None and n_alpha + n_beta != nelec:
        raise SectorError(f"sector {sector} does not hold NELEC={nelec} electrons")
    basis = SectorBasis(ints.n_orb, n_alpha, n_beta)
    h_so, antisym = spin_orbital_integrals(ints)
    n_so = basis.n_qubits

    matrix = np.zeros((len(basis), len(basis)))
    for k, bits in enumerate(basis._masks):
        occ = [p for p in range(n_so) if (bits >> p) & 1]
        virt = [p for p in range(n_so) if not (bits >> p) & 1]
        occ_idx = np.array(occ, dtype=np.int64)

        diagonal = h_so[occ_idx, occ_idx].sum()
        diagonal += 0.5 * antisym[np.ix_(occ_idx, occ_idx, occ_idx, occ_idx)].trace(
            axis1=0, axis2=2
        ).trace()
        matrix[k, k] = diagonal + ints.e_nuc

        for i in occ:
            for a in virt:
                if (a - i) % 2:
                    continue
                value = h_so[a, i] + antisym[a, occ_idx, i, occ_idx].sum()
                if value == 0.0:
                    continue
                target = bits ^ (1 << i) ^ (1 << a)
                if basis.index[target] > k:
                    matrix[k, basis.index[target]] = hop_sign(bits, a, i) * value

        for i, j in itertools.combinations(occ, 2):
            for a, b in itertools.combinations(virt, 2):
                if sorted((i % 2, j % 2)) != sorted((a % 2, b % 2)):
                    continue
                value = antisym[a, b, i, j]
                if value == 0.0:
                    continue
                target = bits ^ (1 << i) ^ (1 << j) ^ (1 << a) ^ (1 << b)
                column = basis.index[target]
                if column <= k:
                    continue
                sign = 1
                state = bits
                for p, creation in ((i, False), (j, False), (b, True), (a, True)):
                    step_sign, state = apply_ladder(state, p, creation)
                    sign *= step_sign
                matrix[k, column] = sign * value

    tag = {"model": "molecular"}
    tag.update(param_tag or {})
    logger.debug(f"Built molecular Hamiltonian with {ints.n_orb} orbitals, dimension {len(basis)}")
    return SectorHamiltonian(basis=basis, matrix=_mirror_upper(matrix), param_tag=tag)


def fermion_terms_hubbard(lattice: LatticeSpec, t: float, U: float) -> List[FermionTerm]:
    """Second-quantised FHM terms over interleaved spin-orbitals."""
    terms: List[FermionTerm] = []
    for i, j in lattice.edges():
        for spin in (0, 1):
            p, q = 2 * i + spin, 2 * j + spin
            terms.append((-t, ((p, True), (q, False))))
            terms.append((-t, ((q, True), (p, False))))
    for i in range(lattice.n_sites):
        up, down = 2 * i, 2 * i + 1
        terms.append((U, ((up, True), (up, False), (down, True), (down, False))))
    return terms


def fermion_terms_molecular(ints: MolecularIntegrals, tol: float = 1e-14) -> List[FermionTerm]:
    """Second-quantised molecular terms: h_pq a+a and 1/2 (pq|rs) a+a+aa, plus E_nuc."""
    n = ints.n_orb
    terms: List[FermionTerm] = [(ints.e_nuc, ())]
    for p, q in itertools.product(range(n), repeat=2):
        if abs(ints.h[p, q]) <= tol:
            continue
        for spin in (0, 1):
            terms.append((ints.h[p, q], ((2 * p + spin, True), (2 * q + spin, False))))
    for p, q, r, s in itertools.product(range(n), repeat=4):
        value = ints.g[p, q, r, s]
        if abs(value) <= tol:
            continue
        for sigma, tau in itertools.product((0, 1), repeat=2):
            ops = (
                (2 * p + sigma, True),
                (2 * r + tau, True),
                (2 * s + tau, False),
                (2 * q + sigma, False),
            )
            terms.append((0.5 * value, ops))
    return terms


def apply_fermion_terms(terms: Iterable[FermionTerm], bits: int) -> Dict[int, float]:
    """Apply a term list to one occupation vector, operator by operator."""
    result: Dict[int, float] = {}
    for coefficient, ops in terms:
        state, sign = bits, 1
        for p, creation in reversed(ops):
            step = apply_ladder(state, p, creation)
            if step is None:
                break
            step_sign, state = step
            sign *= step_sign
        else:
            result[state] = result.get(state, 0.0) + sign * coefficient
    return result


def number_product_observable(
    basis: SectorBasis, factors: Sequence[Tuple[int, str]]
) -> np.ndarray:
    """
    Diagonal values of a product of number operators, e.g. n_{1 alpha} n_{N beta}.

    Negative site indices count from the last site.
    """
    values = np.ones(len(basis))
    for site, spin in factors:
        if not -basis.n_orb <= site < basis.n_orb:
            raise SectorError(f"site {site} outside 0..{basis.n_orb - 1}")
        orbital = 2 * (site % basis.n_orb) + SPIN_INDEX[spin]
        values = values * basis.occupations[:, orbital]
    return values
