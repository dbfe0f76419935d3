"""
Jordan-Wigner mapping of fermionic terms to weighted Pauli strings.

Spin-orbital p is qubit p, occupied <=> |1>. The mapping itself is OpenFermion's;
this module converts between our term lists, sector bases and its operators.

A Pauli string is reported as text with the operator on qubit q at position q.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np
from openfermion import FermionOperator, QubitOperator, get_sparse_operator
from openfermion.transforms import jordan_wigner as openfermion_jordan_wigner

from qavmc.exceptions import NumericalError, SectorError
from qavmc.services.hamiltonians import FermionTerm, SectorBasis, SectorHamiltonian

logger = logging.getLogger(__name__)


def _reverse_bits(values: np.ndarray, n_qubits: int) -> np.ndarray:
    """Our bit q is OpenFermion's tensor factor q, the (n-1-q)-th bit of its index."""
    values = np.asarray(values, dtype=np.int64)
    out = np.zeros_like(values)
    for q in range(n_qubits):
        out |= ((values >> q) & 1) << (n_qubits - 1 - q)
    return out


def _pauli_text(term: Tuple[Tuple[int, str], ...], n_qubits: int) -> str:
    letters = ["I"] * n_qubits
    for q, op in term:
        letters[q] = op
    return "".join(letters)


@dataclass(frozen=True)
class PauliHamiltonian:
    """Real linear combination of Pauli strings over n_qubits."""

    n_qubits: int
    operator: QubitOperator

    def __len__(self) -> int:
        return len(self.operator.terms)

    @property
    def terms(self) -> Dict[str, float]:
        return {
            _pauli_text(term, self.n_qubits): float(np.real(coeff))
            for term, coeff in self.operator.terms.items()
        }

    def _sparse(self):
        return get_sparse_operator(self.operator, n_qubits=self.n_qubits).tocsr()

    def to_dense(self) -> np.ndarray:
        """Matrix over the full 2^N space, indexed like our configuration bits (desk scale only)."""
        order = _reverse_bits(np.arange(1 << self.n_qubits), self.n_qubits)
        return self._real(self._sparse()[order][:, order].toarray())

    def to_sector_matrix(self, basis: SectorBasis) -> np.ndarray:
        """Restriction to the rows and columns of a sector basis."""
        if basis.n_qubits != self.n_qubits:
            raise SectorError("basis and Pauli Hamiltonian act on different registers")
        order = _reverse_bits(basis.states, self.n_qubits)
        return self._real(self._sparse()[order][:, order].toarray())

    @staticmethod
    def _real(matrix: np.ndarray) -> np.ndarray:
        if np.max(np.abs(matrix.imag), initial=0.0) > 1e-12:
            raise NumericalError("Pauli Hamiltonian is not real in the computational basis")
        return np.ascontiguousarray(matrix.real)


def fermion_operator(terms: Iterable[FermionTerm], n_qubits: int) -> FermionOperator:
    """
    Collect (coefficient, ladder operators) products into one FermionOperator.

    Raises:
        SectorError: When a term addresses a spin-orbital outside the register
    """
    operator = FermionOperator()
    for coefficient, ops in terms:
        for p, _ in ops:
            if not 0 <= p < n_qubits:
                raise SectorError(f"spin-orbital {p} outside register of {n_qubits}")
        operator += FermionOperator(tuple((p, int(creation)) for p, creation in ops), coefficient)
    return operator


def jordan_wigner(
    terms: Iterable[FermionTerm], n_qubits: int, threshold: float = 1e-12
) -> PauliHamiltonian:
    """
    Map fermionic terms to a real Pauli Hamiltonian.

    Args:
        terms: (coefficient, ladder operators) products over spin-orbitals
        n_qubits: Register size N
        threshold: Drop Pauli terms with |coefficient| below this value

    Returns:
        PauliHamiltonian whose strings each carry an even number of Y factors

    Raises:
        SectorError: When a term addresses a spin-orbital outside the register
        NumericalError: When the collected Hamiltonian is not real
    """
    qubit_operator = openfermion_jordan_wigner(fermion_operator(terms, n_qubits))
    qubit_operator.compress(abs_tol=threshold)

    for term, coeff in qubit_operator.terms.items():
        n_y = sum(1 for _, op in term if op == "Y")
        if abs(np.imag(coeff)) > threshold or n_y % 2:
            raise NumericalError(f"non-real Pauli term {_pauli_text(term, n_qubits)}: {coeff}")

    logger.debug(f"Jordan-Wigner mapping produced {len(qubit_operator.terms)} Pauli strings")
    return PauliHamiltonian(n_qubits=n_qubits, operator=qubit_operator)


def pauli_to_sector_matrix(pauli: PauliHamiltonian, basis: SectorBasis) -> np.ndarray:
    return pauli.to_sector_matrix(basis)


def pauli_strings(pauli: PauliHamiltonian) -> List[Tuple[str, float]]:
    """Terms sorted by string, for stable reporting."""
    return sorted(pauli.terms.items())


def pauli_deviation(hamiltonian: SectorHamiltonian, terms: Iterable[FermionTerm]) -> Tuple[int, float]:
    """
    Cross-check a directly built sector Hamiltonian against its Pauli path.

    Returns:
        Tuple of (number of Pauli strings, max abs entry difference on the sector)
    """
    basis = hamiltonian.basis
    pauli = jordan_wigner(terms, basis.n_qubits)
    deviation = float(np.max(np.abs(pauli_to_sector_matrix(pauli, basis) - hamiltonian.matrix)))
    for text, coeff in pauli_strings(pauli)[:8]:
        logger.debug(f"  {coeff:+.10f} {text}")
    logger.info(f"Pauli path: {len(pauli)} strings, max deviation {deviation:.3e} on {basis!r}")
    return len(pauli), deviation
