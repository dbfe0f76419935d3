"""Shared fixtures for the test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest
from pyscf import ao2mo, gto, scf
from pyscf.tools.fcidump import from_integrals

# Add the repository root to the Python path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from qavmc.schemas import LatticeSpec  # noqa: E402
from qavmc.services.fcidump import load_fcidump  # noqa: E402
from qavmc.services.hamiltonians import MolecularIntegrals, build_hubbard  # noqa: E402

FIXTURES = Path(__file__).resolve().parent / "fixtures"

# Integrals of the bundled H2 STO-3G file
H2_H00 = -1.2524635735
H2_H11 = -0.4759487152
H2_G0000 = 0.6744887663
H2_G1111 = 0.6973979494
H2_G0011 = 0.6634680050
H2_G0101 = 0.1812875358
H2_E_NUC = 0.7137539936


def write_fcidump(path: Path, ints: MolecularIntegrals, nelec: int, ms2: int = 0) -> Path:
    from_integrals(str(path), ints.h, ints.g, ints.n_orb, nelec, nuc=ints.e_nuc, ms=ms2)
    return path


def hydrogen_chain_fcidump(path: Path, n_atoms: int, bond_length: float = 2.0) -> Path:
    """FCIDUMP of a linear H chain (STO-3G, Angstrom spacing) in its RHF orbital basis."""
    mol = gto.M(
        atom=[("H", (0.0, 0.0, i * bond_length)) for i in range(n_atoms)],
        basis="sto-3g",
        unit="Angstrom",
        spin=n_atoms % 2,
        verbose=0,
    )
    mf = scf.RHF(mol)
    mf.conv_tol = 1e-10
    mf.max_cycle = 200
    mf.kernel()
    assert mf.converged, f"RHF for H{n_atoms} did not converge"
    coeff = mf.mo_coeff
    n_orb = coeff.shape[1]
    h = coeff.T @ mf.get_hcore() @ coeff
    g = ao2mo.restore(1, ao2mo.kernel(mol, coeff), n_orb)
    ints = MolecularIntegrals(n_orb=n_orb, h=0.5 * (h + h.T), g=g, e_nuc=float(mol.energy_nuc()))
    return write_fcidump(path, ints, mol.nelectron, mol.spin)


def chain(n_sites: int) -> LatticeSpec:
    return LatticeSpec(kind="chain", dims=[n_sites])


def two_site_energy(U: float, t: float = 1.0) -> float:
    return (U - np.sqrt(U * U + 16.0 * t * t)) / 2.0


def random_integrals(n_orb: int, seed: int = 7, e_nuc: float = 0.5) -> MolecularIntegrals:
    """Random integrals with the full 8-fold permutational symmetry."""
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(n_orb, n_orb))
    h = 0.5 * (h + h.T)
    raw = rng.normal(scale=0.3, size=(n_orb,) * 4)
    g = np.zeros_like(raw)
    for perm in (
        (0, 1, 2, 3), (1, 0, 2, 3), (0, 1, 3, 2), (1, 0, 3, 2),
        (2, 3, 0, 1), (3, 2, 0, 1), (2, 3, 1, 0), (3, 2, 1, 0),
    ):
        g += raw.transpose(perm)
    return MolecularIntegrals(n_orb=n_orb, h=h, g=g / 8.0, e_nuc=e_nuc)


@pytest.fixture(scope="session")
def hubbard2():
    return build_hubbard(chain(2), 1.0, 8.0)


@pytest.fixture(scope="session")
def hubbard4():
    return build_hubbard(chain(4), 1.0, 8.0)


@pytest.fixture(scope="session")
def h2_path():
    return FIXTURES / "h2_sto3g.fcidump"


@pytest.fixture(scope="session")
def h2(h2_path):
    return load_fcidump(h2_path)


@pytest.fixture(scope="session")
def molecule4():
    return random_integrals(4)


@pytest.fixture(scope="session")
def hchain_fcidumps(tmp_path_factory):
    """H4, H6 and H8 chains at 2.0 Angstrom, keyed by atom count."""
    root = tmp_path_factory.mktemp("hchains")
    return {n: hydrogen_chain_fcidump(root / f"h{n}.fcidump", n) for n in (4, 6, 8)}
