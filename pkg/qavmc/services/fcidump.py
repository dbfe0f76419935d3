"""FCIDUMP loading (Molpro conventions) on top of pyscf's reader."""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from pyscf import ao2mo
from pyscf.tools import fcidump as pyscf_fcidump

from qavmc.exceptions import FcidumpFormatError, IntegralError
from qavmc.services.hamiltonians import MolecularIntegrals

logger = logging.getLogger(__name__)


def _symmetric_one_body(h1: np.ndarray) -> np.ndarray:
    """Fill whichever triangle the file left empty."""
    lower = np.tril(h1)
    upper = np.triu(h1, 1)
    if not np.any(upper):
        return lower + np.tril(h1, -1).T
    if not np.any(np.tril(h1, -1)):
        return upper + upper.T + np.diag(np.diag(h1))
    return h1


def load_fcidump(path: Union[str, Path]) -> Tuple[MolecularIntegrals, Tuple[int, int]]:
    """
    Read one- and two-electron integrals from an FCIDUMP file.

    Args:
        path: FCIDUMP file in Molpro format

    Returns:
        Tuple of (integrals with all 8-fold images populated, (N_alpha, N_beta))

    Raises:
        FcidumpFormatError: For a missing file, a malformed header or out-of-range indices
    """
    path = str(path)
    if not Path(path).is_file():
        logger.error(f"Cannot read FCIDUMP {path}: no such file")
        raise FcidumpFormatError(path, "no such file")

    try:
        data = pyscf_fcidump.read(path, verbose=False)
        n = int(data["NORB"])
        nelec = int(data["NELEC"])
        ms2 = int(data.get("MS2", 0))
        h = _symmetric_one_body(np.asarray(data["H1"], dtype=float).reshape(n, n))
        g = ao2mo.restore(1, np.asarray(data["H2"], dtype=float), n)
    except KeyError as e:
        raise FcidumpFormatError(path, f"header lacks {e.args[0]}")
    except (ValueError, IndexError, TypeError) as e:
        logger.error(f"Malformed FCIDUMP {path}: {str(e)}")
        raise FcidumpFormatError(path, f"unreadable record: {str(e)}")

    if n < 1:
        raise FcidumpFormatError(path, "NORB must be positive")
    if nelec < 0 or (nelec + ms2) % 2:
        raise FcidumpFormatError(path, "NELEC and MS2 are inconsistent")

    e_nuc = data.get("ECORE")
    if e_nuc is None:
        logger.warning(f"FCIDUMP {path} has no core-energy record; using 0")
        e_nuc = 0.0

    sector = ((nelec + ms2) // 2, (nelec - ms2) // 2)
    if max(sector) > n or min(sector) < 0:
        raise FcidumpFormatError(path, f"sector {sector} does not fit {n} orbitals")

    try:
        ints = MolecularIntegrals(n_orb=n, h=h, g=np.ascontiguousarray(g), e_nuc=float(e_nuc))
    except IntegralError as e:
        raise FcidumpFormatError(path, str(e))

    logger.info(f"Loaded FCIDUMP {path}: NORB={n}, NELEC={nelec}, MS2={ms2}")
    return ints, sector

