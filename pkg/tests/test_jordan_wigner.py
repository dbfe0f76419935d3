"""Tests for the Jordan-Wigner mapping and the Pauli matrix path."""

import numpy as np
import pytest

from conftest import chain
from qavmc.exceptions import SectorError
from qavmc.services.hamiltonians import (
    SectorBasis,
    build_hubbard,
    build_molecular,
    fermion_terms_hubbard,
    fermion_terms_molecular,
)
from qavmc.services.jordan_wigner import (
    fermion_operator,
    jordan_wigner,
    pauli_deviation,
    pauli_strings,
    pauli_to_sector_matrix,
)


@pytest.mark.parametrize("n_sites", [2, 4])
def test_hubbard_pauli_path_matches_sector_matrix(n_sites):
    lattice = chain(n_sites)
    hamiltonian = build_hubbard(lattice, 1.0, 8.0)
    pauli = jordan_wigner(fermion_terms_hubbard(lattice, 1.0, 8.0), 2 * n_sites)
    matrix = pauli_to_sector_matrix(pauli, hamiltonian.basis)
    assert np.max(np.abs(matrix - hamiltonian.matrix)) < 1e-12


def test_h2_pauli_path_matches_sector_matrix(h2):
    ints, sector = h2
    hamiltonian = build_molecular(ints, sector)
    pauli = jordan_wigner(fermion_terms_molecular(ints), 4)
    assert np.max(np.abs(pauli.to_sector_matrix(hamiltonian.basis) - hamiltonian.matrix)) < 1e-10


def test_molecular_pauli_path_matches_sector_matrix(molecule4):
    hamiltonian = build_molecular(molecule4, (2, 2))
    pauli = jordan_wigner(fermion_terms_molecular(molecule4), 8)
    assert np.max(np.abs(pauli.to_sector_matrix(hamiltonian.basis) - hamiltonian.matrix)) < 1e-10


def test_number_operator_is_diagonal():
    # a+_1 a_1 = (I - Z_1) / 2
    pauli = jordan_wigner([(1.0, ((1, True), (1, False)))], 3)
    assert pauli.terms == pytest.approx({"III": 0.5, "IZI": -0.5})


def test_hopping_carries_z_string():
    # a+_0 a_2 + a+_2 a_0 = (X Z X + Y Z Y) / 2
    terms = [(1.0, ((0, True), (2, False))), (1.0, ((2, True), (0, False)))]
    pauli = jordan_wigner(terms, 3)
    assert pauli.terms == pytest.approx({"XZX": 0.5, "YZY": 0.5})


def test_dense_matrix_is_symmetric():
    pauli = jordan_wigner(fermion_terms_hubbard(chain(2), 1.0, 4.0), 4)
    dense = pauli.to_dense()
    assert dense.shape == (16, 16)
    assert np.allclose(dense, dense.T)


def test_pauli_strings_are_sorted_and_even_in_y():
    pauli = jordan_wigner(fermion_terms_hubbard(chain(3), 1.0, 2.0), 6)
    strings = pauli_strings(pauli)
    assert [s for s, _ in strings] == sorted(pauli.terms)
    assert all(s.count("Y") % 2 == 0 for s, _ in strings)


def test_out_of_register_index_raises():
    with pytest.raises(SectorError):
        jordan_wigner([(1.0, ((4, True), (0, False)))], 4)


def test_register_mismatch_raises():
    pauli = jordan_wigner(fermion_terms_hubbard(chain(2), 1.0, 1.0), 4)
    with pytest.raises(SectorError):
        pauli.to_sector_matrix(SectorBasis(3, 1, 1))


def test_dense_matrix_uses_configuration_bit_order():
    # a+_0 on an empty 2-qubit register fills bit 0: |00> -> |01> in our packing
    pauli = jordan_wigner([(1.0, ((0, True), (0, False)))], 2)
    assert np.allclose(np.diag(pauli.to_dense()), [0.0, 1.0, 0.0, 1.0])


def test_fermion_operator_keeps_ladder_order():
    operator = fermion_operator([(2.0, ((3, True), (1, False)))], 4)
    assert operator.terms == {((3, 1), (1, 0)): 2.0}


def test_pauli_deviation_reports_string_count(hubbard4):
    n_strings, deviation = pauli_deviation(hubbard4, fermion_terms_hubbard(chain(4), 1.0, 8.0))
    assert n_strings == len(jordan_wigner(fermion_terms_hubbard(chain(4), 1.0, 8.0), 8))
    assert deviation < 1e-12
