"""
Two-block restricted Boltzmann machine wavefunction.

One real RBM gives the log-amplitude and a second real RBM the phase:

    ln psi(S) = ln A(S) + i ln B(S)
    ln X(S)   = sum_i a_i s_i + sum_mu ln(2 cosh(b_mu + sum_i W_mu,i s_i))

with the hidden units traced out. Spins are +-1.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from qavmc.exceptions import NumericalError
from qavmc.schemas import ArrayRecord, RecordHeader, VmcCheckpoint

logger = logging.getLogger(__name__)

PARAM_NAMES = ("a", "b", "W", "a_phase", "b_phase", "W_phase")


def log2cosh(x: np.ndarray) -> np.ndarray:
    """ln(2 cosh x) without overflow."""
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax))


@dataclass
class RbmParams:
    """Amplitude block (a, b, W) and phase block (a_phase, b_phase, W_phase)."""

    a: np.ndarray
    b: np.ndarray
    W: np.ndarray
    a_phase: np.ndarray
    b_phase: np.ndarray
    W_phase: np.ndarray

    def __post_init__(self):
        for name, shape in _shapes(self.n_visible, self.n_hidden).items():
            if getattr(self, name).shape != shape:
                raise NumericalError(f"parameter {name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def n_visible(self) -> int:
        return len(self.a)

    @property
    def n_hidden(self) -> int:
        return len(self.b)

    @property
    def alpha_density(self) -> float:
        return self.n_hidden / self.n_visible

    @property
    def size(self) -> int:
        return 2 * (self.n_visible + self.n_hidden + self.n_visible * self.n_hidden)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def check_finite(self) -> None:
        for name, value in self.arrays().items():
            if not np.all(np.isfinite(value)):
                raise NumericalError(f"parameter block {name} contains non-finite entries")

    def flatten(self) -> np.ndarray:
        return np.concatenate([getattr(self, name).ravel() for name in PARAM_NAMES])

    @classmethod
    def from_vector(cls, vector: np.ndarray, n_visible: int, n_hidden: int) -> "RbmParams":
        shapes = _shapes(n_visible, n_hidden)
        expected = sum(int(np.prod(s)) for s in shapes.values())
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (expected,):
            raise NumericalError(f"parameter vector has {vector.size} entries, expected {expected}")
        blocks = {}
        offset = 0
        for name in PARAM_NAMES:
            count = int(np.prod(shapes[name]))
            blocks[name] = vector[offset:offset + count].reshape(shapes[name]).copy()
            offset += count
        return cls(**blocks)

    def copy(self) -> "RbmParams":
        return RbmParams(**{name: value.copy() for name, value in self.arrays().items()})


def _shapes(n_visible: int, n_hidden: int) -> Dict[str, Tuple[int, ...]]:
    return {
        "a": (n_visible,),
        "b": (n_hidden,),
        "W": (n_hidden, n_visible),
        "a_phase": (n_visible,),
        "b_phase": (n_hidden,),
        "W_phase": (n_hidden, n_visible),
    }


def init_params(
    n_visible: int, alpha_density: int, rng: np.random.Generator, sigma: float = 0.01
) -> RbmParams:
    """Zero biases and Gaussian weights with standard deviation sigma."""
    n_hidden = alpha_density * n_visible
    return RbmParams(
        a=np.zeros(n_visible),
        b=np.zeros(n_hidden),
        W=rng.normal(0.0, sigma, size=(n_hidden, n_visible)),
        a_phase=np.zeros(n_visible),
        b_phase=np.zeros(n_hidden),
        W_phase=rng.normal(0.0, sigma, size=(n_hidden, n_visible)),
    )


def _block(a: np.ndarray, b: np.ndarray, W: np.ndarray, spins: np.ndarray) -> np.ndarray:
    return spins @ a + log2cosh(spins @ W.T + b).sum(axis=-1)


def log_psi(params: RbmParams, spins: np.ndarray) -> np.ndarray:
    """
    ln psi for one configuration (shape (N,)) or a batch (shape (B, N)).

    Raises:
        NumericalError: If a parameter is not finite or the spin length is wrong
    """
    params.check_finite()
    spins = np.asarray(spins, dtype=float)
    if spins.shape[-1] != params.n_visible:
        raise NumericalError(f"configuration length {spins.shape[-1]} != {params.n_visible}")
    amplitude = _block(params.a, params.b, params.W, spins)
    phase = _block(params.a_phase, params.b_phase, params.W_phase, spins)
    return amplitude + 1j * phase


def log_derivatives(params: RbmParams, spins: np.ndarray) -> np.ndarray:
    """
    O_k(S) = d ln psi(S) / d theta_k for a batch, shape (B, n_params), in flatten order.

    Amplitude derivatives are real; phase derivatives are purely imaginary.
    """
    spins = np.atleast_2d(np.asarray(spins, dtype=float))
    batch = spins.shape[0]

    def block(b: np.ndarray, W: np.ndarray) -> np.ndarray:
        t = np.tanh(spins @ W.T + b)
        return np.concatenate([spins, t, (t[:, :, None] * spins[:, None, :]).reshape(batch, -1)], axis=1)

    amplitude = block(params.b, params.W)
    phase = block(params.b_phase, params.W_phase)
    return np.concatenate([amplitude, 1j * phase], axis=1)


def grad_log_psi(params: RbmParams, spins: np.ndarray) -> Dict[str, np.ndarray]:
    """Per-parameter derivatives of ln psi at a single configuration."""
    flat = log_derivatives(params, spins)[0]
    shapes = _shapes(params.n_visible, params.n_hidden)
    record = {}
    offset = 0
    for name in PARAM_NAMES:
        count = int(np.prod(shapes[name]))
        record[name] = flat[offset:offset + count].reshape(shapes[name])
        offset += count
    return record


def to_checkpoint(params: RbmParams, header: RecordHeader) -> VmcCheckpoint:
    return VmcCheckpoint(
        schema_version=header.schema_version,
        config_hash=header.config_hash,
        seed=header.seed,
        n_visible=params.n_visible,
        n_hidden=params.n_hidden,
        arrays={name: ArrayRecord.from_array(value) for name, value in params.arrays().items()},
    )


def from_checkpoint(checkpoint: VmcCheckpoint) -> RbmParams:
    missing = set(PARAM_NAMES) - set(checkpoint.arrays)
    if missing:
        raise NumericalError(f"checkpoint lacks parameter blocks {sorted(missing)}")
    return RbmParams(**{name: checkpoint.arrays[name].to_array() for name in PARAM_NAMES})
