"""Tests for sector bases and Hamiltonian builders."""

from math import comb

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from conftest import H2_E_NUC, H2_G0000, H2_G0101, H2_G1111, H2_H00, H2_H11, chain, two_site_energy
from qavmc.exceptions import IntegralError, SectorError
from qavmc.schemas import LatticeSpec
from qavmc.services.hamiltonians import (
    Configuration,
    SectorBasis,
    apply_fermion_terms,
    apply_hopping_mix,
    build_hubbard,
    build_molecular,
    fermion_terms_hubbard,
    fermion_terms_molecular,
    hamming,
    hubbard_integrals,
    number_product_observable,
    spin_flip,
)


def operator_oracle(terms, basis):
    """Dense matrix by applying every fermionic term to every basis state."""
    matrix = np.zeros((len(basis), len(basis)))
    for k in range(len(basis)):
        for state, value in apply_fermion_terms(terms, basis.mask(k)).items():
            if abs(value) > 0:
                matrix[basis.index_of(state), k] += value
    return matrix


@pytest.mark.parametrize("U", [0.0, 1.0, 4.0, 8.0])
def test_two_site_ground_energy(U):
    hamiltonian = build_hubbard(chain(2), 1.0, U)
    energy = scipy.linalg.eigvalsh(hamiltonian.matrix)[0]
    assert abs(energy - two_site_energy(U)) < 1e-10


def test_sector_dimension():
    basis = SectorBasis(4, 2, 2)
    assert len(basis) == comb(4, 2) ** 2 == 36
    assert len(SectorBasis(3, 2, 1)) == comb(3, 2) * comb(3, 1)


def test_basis_states_keep_their_counts():
    basis = SectorBasis(4, 2, 1)
    for i in range(len(basis)):
        assert basis.configuration(i).counts() == (2, 1)
    assert np.all(basis.occupations.sum(axis=1) == 3)


def test_empty_sector_raises():
    with pytest.raises(SectorError):
        SectorBasis(2, 3, 0)


def test_index_of_outside_sector_raises():
    basis = SectorBasis(2, 1, 1)
    with pytest.raises(SectorError):
        basis.index_of(Configuration.from_bitstring("1111"))


def test_configuration_spins_and_bitstring():
    config = Configuration.from_bitstring("1001")
    assert list(config.spins) == [1, -1, -1, 1]
    assert config.bitstring() == "1001"
    assert Configuration.from_spins([1, -1, -1, 1]) == config
    assert config.counts() == (1, 1)


def test_invalid_spins_raise():
    with pytest.raises(SectorError):
        Configuration.from_spins([1, 0, -1])


@given(st.lists(st.sampled_from([-1, 1]), min_size=2, max_size=12).filter(lambda s: len(s) % 2 == 0))
def test_spin_flip_is_an_involution(spins):
    config = Configuration.from_spins(spins)
    flipped = spin_flip(config)
    assert spin_flip(flipped) == config
    assert flipped.counts() == tuple(reversed(config.counts()))


@given(
    st.integers(min_value=0, max_value=2 ** 10 - 1),
    st.integers(min_value=0, max_value=2 ** 10 - 1),
)
def test_hamming_is_symmetric(a, b):
    left, right = Configuration(a, 10), Configuration(b, 10)
    assert hamming(left, right) == hamming(right, left)
    assert hamming(left, left) == 0


def test_grid_edges():
    lattice = LatticeSpec(kind="grid", dims=[2, 2])
    assert set(lattice.edges()) == {(0, 1), (0, 2), (1, 3), (2, 3)}
    assert all(i != j for i, j in lattice.edges())


def test_hubbard_matrix_is_symmetric(hubbard4):
    assert np.allclose(hubbard4.matrix, hubbard4.matrix.T)
    assert hubbard4.dimension == 36


@pytest.mark.parametrize("lattice", [chain(4), LatticeSpec(kind="grid", dims=[2, 2])])
def test_hubbard_matches_operator_oracle(lattice):
    hamiltonian = build_hubbard(lattice, 1.0, 4.0)
    oracle = operator_oracle(fermion_terms_hubbard(lattice, 1.0, 4.0), hamiltonian.basis)
    assert np.max(np.abs(hamiltonian.matrix - oracle)) < 1e-12


@pytest.mark.parametrize("lattice", [chain(3), LatticeSpec(kind="grid", dims=[2, 2])])
def test_hubbard_and_molecular_builders_agree(lattice):
    direct = build_hubbard(lattice, 1.0, 6.0)
    via_integrals = build_molecular(hubbard_integrals(lattice, 1.0, 6.0), direct.basis.sector)
    assert np.max(np.abs(direct.matrix - via_integrals.matrix)) < 1e-12


def test_molecular_matches_operator_oracle(molecule4):
    hamiltonian = build_molecular(molecule4, (2, 1))
    oracle = operator_oracle(fermion_terms_molecular(molecule4), hamiltonian.basis)
    assert np.max(np.abs(hamiltonian.matrix - oracle)) < 1e-10


def test_h2_ground_energy(h2):
    ints, sector = h2
    hamiltonian = build_molecular(ints, sector, nelec=2)
    energy = scipy.linalg.eigvalsh(hamiltonian.matrix)[0]

    # the ground state lives in the {|gg>, |uu>} block coupled by (01|01)
    e_gg = 2 * H2_H00 + H2_G0000 + H2_E_NUC
    e_uu = 2 * H2_H11 + H2_G1111 + H2_E_NUC
    expected = 0.5 * (e_gg + e_uu) - np.sqrt(0.25 * (e_uu - e_gg) ** 2 + H2_G0101 ** 2)
    assert abs(energy - expected) < 1e-10


def test_molecular_sector_must_match_nelec(h2):
    ints, _ = h2
    with pytest.raises(SectorError):
        build_molecular(ints, (2, 1), nelec=2)


def test_hopping_mix_endpoints(molecule4):
    unchanged = apply_hopping_mix(molecule4, 0.0)
    assert np.array_equal(unchanged.h, molecule4.h)
    assert unchanged.g is molecule4.g

    pure = apply_hopping_mix(molecule4, 1.0)
    off = ~np.eye(4, dtype=bool)
    assert np.allclose(np.diag(pure.h), 0.0)
    assert np.allclose(pure.h[off], pure.h[off][0])
    assert np.isclose(np.linalg.norm(pure.h, "fro"), np.linalg.norm(molecule4.h, "fro"))


def test_hopping_mix_rejects_out_of_range(molecule4):
    with pytest.raises(IntegralError):
        apply_hopping_mix(molecule4, 1.5)


def test_number_product_observable():
    basis = SectorBasis(3, 2, 1)
    values = number_product_observable(basis, [(0, "alpha"), (-1, "beta")])
    for i in range(len(basis)):
        bits = basis.mask(i)
        expected = ((bits >> 0) & 1) * ((bits >> 5) & 1)
        assert values[i] == expected


def test_number_product_observable_rejects_bad_site():
    with pytest.raises(SectorError):
        number_product_observable(SectorBasis(2, 1, 1), [(2, "alpha")])


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_random_integrals_give_symmetric_matrices(seed):
    from conftest import random_integrals

    hamiltonian = build_molecular(random_integrals(3, seed=seed), (1, 2))
    assert np.allclose(hamiltonian.matrix, hamiltonian.matrix.T)
