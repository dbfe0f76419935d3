"""Services package initialization."""

from .hamiltonians import Configuration, MolecularIntegrals, SectorBasis, SectorHamiltonian
from .markov import ChainSample, TargetDistribution, TransitionMatrix
from .proposals import (
    EffectiveKernel,
    ProposalKernel,
    QuantumAveragedKernel,
    QuantumKernel,
)
from .spectral import GroundStateDistribution, Spectrum

__all__ = [
    "Configuration",
    "MolecularIntegrals",
    "SectorBasis",
    "SectorHamiltonian",
    "ChainSample",
    "TargetDistribution",
    "TransitionMatrix",
    "EffectiveKernel",
    "ProposalKernel",
    "QuantumAveragedKernel",
    "QuantumKernel",
    "GroundStateDistribution",
    "Spectrum",
]
