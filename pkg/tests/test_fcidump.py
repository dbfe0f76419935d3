"""Tests for the FCIDUMP reader."""

import numpy as np
import pytest

from conftest import H2_E_NUC, H2_G0011, H2_G0101, H2_H00, hydrogen_chain_fcidump, write_fcidump
from qavmc.exceptions import FcidumpFormatError
from qavmc.services.fcidump import load_fcidump
from qavmc.services.hamiltonians import build_molecular


def test_load_h2(h2):
    ints, sector = h2
    assert ints.n_orb == 2
    assert sector == (1, 1)
    assert ints.h[0, 0] == pytest.approx(H2_H00)
    assert ints.e_nuc == pytest.approx(H2_E_NUC)


def test_two_body_images_are_filled(h2):
    ints, _ = h2
    for p, q, r, s in [(0, 1, 0, 1), (1, 0, 1, 0), (1, 0, 0, 1), (0, 1, 1, 0)]:
        assert ints.g[p, q, r, s] == pytest.approx(H2_G0101)
    assert ints.g[0, 0, 1, 1] == ints.g[1, 1, 0, 0] == pytest.approx(H2_G0011)


def test_written_file_reloads_to_same_hamiltonian(molecule4, tmp_path):
    path = tmp_path / "mol.fcidump"
    write_fcidump(path, molecule4, nelec=4, ms2=0)
    ints, sector = load_fcidump(path)

    assert sector == (2, 2)
    assert np.allclose(ints.h, molecule4.h, atol=1e-14)
    assert np.allclose(ints.g, molecule4.g, atol=1e-14)
    original = build_molecular(molecule4, sector).matrix
    assert np.allclose(build_molecular(ints, sector).matrix, original, atol=1e-12)


def test_open_shell_sector(molecule4, tmp_path):
    path = tmp_path / "triplet.fcidump"
    write_fcidump(path, molecule4, nelec=4, ms2=2)
    _, sector = load_fcidump(path)
    assert sector == (3, 1)


def test_missing_core_energy_defaults_to_zero(tmp_path):
    path = tmp_path / "no_core.fcidump"
    path.write_text(" &FCI NORB=1,NELEC=2,MS2=0,\n &END\n 0.5 1 1 1 1\n -1.0 1 1 0 0\n")
    ints, sector = load_fcidump(path)
    assert ints.e_nuc == 0.0
    assert ints.h[0, 0] == -1.0
    assert sector == (1, 1)


@pytest.mark.parametrize(
    "body",
    [
        " &FCI NELEC=2,MS2=0,\n &END\n",
        " &FCI NORB=2,NELEC=2,MS2=0,\n &END\n 0.5 1 1 1\n",
        " &FCI NORB=2,NELEC=3,MS2=0,\n &END\n",
    ],
)
def test_malformed_files_raise(tmp_path, body):
    path = tmp_path / "bad.fcidump"
    path.write_text(body)
    with pytest.raises(FcidumpFormatError):
        load_fcidump(path)


def test_missing_file_raises(tmp_path):
    with pytest.raises(FcidumpFormatError) as info:
        load_fcidump(tmp_path / "absent.fcidump")
    assert "absent.fcidump" in str(info.value)


def test_upper_triangle_one_body_records_are_mirrored(tmp_path):
    path = tmp_path / "upper.fcidump"
    path.write_text(
        " &FCI NORB=2,NELEC=2,MS2=0,\n &END\n"
        " 0.5 1 1 1 1\n 0.5 2 2 2 2\n -1.0 1 1 0 0\n -0.2 1 2 0 0\n -0.5 2 2 0 0\n 0.1 0 0 0 0\n"
    )
    ints, _ = load_fcidump(path)
    assert ints.h[1, 0] == ints.h[0, 1] == pytest.approx(-0.2)


def test_pyscf_h2_near_equilibrium(tmp_path):
    path = hydrogen_chain_fcidump(tmp_path / "h2.fcidump", 2, bond_length=0.7414)
    ints, sector = load_fcidump(path)
    assert (ints.n_orb, sector) == (2, (1, 1))

    # FCI ground energy of H2/STO-3G
    matrix = build_molecular(ints, sector).matrix
    assert np.linalg.eigvalsh(matrix)[0] == pytest.approx(-1.1373, abs=2e-3)


def test_hydrogen_chain_fixtures_load(hchain_fcidumps):
    for n_atoms, path in hchain_fcidumps.items():
        ints, sector = load_fcidump(path)
        assert ints.n_orb == n_atoms
        assert sector == (n_atoms // 2, n_atoms // 2)
