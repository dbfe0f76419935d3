"""Factories that turn validated config blocks into Hamiltonians, targets and kernels."""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from qavmc.exceptions import ConfigValidationError, SectorError
from qavmc.schemas import (
    CLASSICAL_KINDS,
    TAU_PROFILES,
    FcidumpEntry,
    HubbardSystem,
    LatticeSpec,
    MoleculeSystem,
    ObservableSpec,
    ProposalSpec,
    TauGrid,
)
from qavmc.services.fcidump import load_fcidump
from qavmc.services.hamiltonians import (
    Configuration,
    MolecularIntegrals,
    SectorHamiltonian,
    apply_hopping_mix,
    build_hubbard,
    build_molecular,
    hubbard_integrals,
    number_product_observable,
)
from qavmc.services.markov import TargetDistribution
from qavmc.services.proposals import (
    EffectiveKernel,
    ProposalKernel,
    QuantumAveragedKernel,
    QuantumKernel,
    make_classical_kernel,
)
from qavmc.services.spectral import (
    GroundStateDistribution,
    Spectrum,
    dominant_configurations,
    eigendecompose,
    ground_distribution,
)

logger = logging.getLogger(__name__)

SystemBlock = Union[HubbardSystem, MoleculeSystem]


@dataclass(eq=False)
class SystemContext:
    """A target system with its Hamiltonian and lazily computed spectral data."""

    system: SystemBlock
    hamiltonian: SectorHamiltonian
    label: str
    size: float
    integrals: Optional[MolecularIntegrals] = None
    nelec: Optional[int] = None

    @property
    def is_hubbard(self) -> bool:
        return isinstance(self.system, HubbardSystem)

    @property
    def sector(self):
        return self.hamiltonian.basis.sector

    @cached_property
    def spectrum(self) -> Spectrum:
        return eigendecompose(self.hamiltonian)

    @cached_property
    def ground(self) -> GroundStateDistribution:
        return ground_distribution(self.spectrum)

    @cached_property
    def target(self) -> TargetDistribution:
        return TargetDistribution.from_ground(self.ground)

    @property
    def tau_profile(self) -> str:
        return "fhm" if self.is_hubbard else self.system.tau_profile


def get_system(system: SystemBlock) -> SystemContext:
    """Build the target Hamiltonian of a system block."""
    if isinstance(system, HubbardSystem):
        sector = system.sector.as_tuple() if system.sector is not None else None
        hamiltonian = build_hubbard(system.lattice, system.t, system.U, sector)
        return SystemContext(
            system=system,
            hamiltonian=hamiltonian,
            label=f"U={system.U:g}",
            size=float(system.lattice.n_sites),
        )

    ints, sector = load_fcidump(system.fcidump)
    nelec = sum(sector)
    if system.sector is not None:
        sector = system.sector.as_tuple()
    label = system.label or system.fcidump.stem
    hamiltonian = build_molecular(ints, sector, nelec=nelec, param_tag={"label": label})
    return SystemContext(
        system=system,
        hamiltonian=hamiltonian,
        label=label,
        size=float(ints.n_orb),
        integrals=ints,
        nelec=nelec,
    )


def hubbard_at(
    system: HubbardSystem, U: Optional[float] = None, n_sites: Optional[int] = None
) -> HubbardSystem:
    """Copy of a Hubbard block at another U or on an open chain of n_sites (half filling)."""
    update: Dict[str, object] = {}
    if U is not None:
        update["U"] = float(U)
    if n_sites is not None:
        update["lattice"] = LatticeSpec(kind="chain", dims=[int(n_sites)])
        update["sector"] = None
    return system.copy(update=update)


def molecule_at(system: MoleculeSystem, entry: FcidumpEntry) -> MoleculeSystem:
    """Copy of a molecule block pointing at one sweep member; the sector comes from its header."""
    return system.copy(update={"fcidump": entry.path, "label": entry.label, "sector": None})


def hopping_weights(proposal: ProposalSpec) -> Optional[np.ndarray]:
    """gamma_e values of a hopping-augmented kernel; None for the plain kernel Hamiltonian."""
    if proposal.gamma_interval is not None:
        lo, hi = proposal.gamma_interval
        return np.linspace(lo, hi, proposal.gamma_points)
    if proposal.hopping_gamma is not None:
        return np.array([proposal.hopping_gamma])
    return None


def kernel_hamiltonians(proposal: ProposalSpec, context: SystemContext) -> List[SectorHamiltonian]:
    """
    Kernel Hamiltonians H(x_e) of a quantum proposal.

    Hubbard kernels use U_e (the target U when unset); molecular kernels use the
    target integrals. Either may be hopping-augmented.

    Raises:
        ConfigValidationError: For an effective U on a molecular system
    """
    gammas = hopping_weights(proposal)
    sector = context.sector

    if context.is_hubbard:
        system = context.system
        u_e = system.U if proposal.effective_U is None else proposal.effective_U
        if gammas is None:
            if u_e == system.U:
                return [context.hamiltonian]
            return [build_hubbard(system.lattice, system.t, u_e, sector)]
        ints = hubbard_integrals(system.lattice, system.t, u_e)
    else:
        if proposal.effective_U is not None:
            raise ConfigValidationError(
                "proposals.effective_U", "an effective U applies to Hubbard systems only"
            )
        if gammas is None:
            return [context.hamiltonian]
        ints = context.integrals

    return [
        build_molecular(apply_hopping_mix(ints, float(g)), sector, param_tag={"gamma_e": float(g)})
        for g in gammas
    ]


def kernel_spectra(proposal: ProposalSpec, context: SystemContext) -> List[Spectrum]:
    spectra = []
    for hamiltonian in kernel_hamiltonians(proposal, context):
        if hamiltonian is context.hamiltonian:
            spectra.append(context.spectrum)
        else:
            spectra.append(eigendecompose(hamiltonian))
    return spectra


def tau_values(proposal: ProposalSpec, context: SystemContext) -> np.ndarray:
    """Scan grid of a proposal; the system-class profile when the proposal names none."""
    if proposal.tau_grid is not None:
        return proposal.tau_grid.values()
    start, stop, step = TAU_PROFILES[context.tau_profile]
    return TauGrid(start=start, stop=stop, step=step).values()


def build_kernel(
    proposal: ProposalSpec,
    context: SystemContext,
    tau: Optional[float] = None,
    spectra: Optional[Sequence[Spectrum]] = None,
) -> ProposalKernel:
    """
    Build the proposal kernel used by chains and histograms.

    Args:
        proposal: Proposal block
        context: Target system
        tau: Evolution time for Quantum kernels without a configured tau
        spectra: Precomputed kernel spectra

    Returns:
        ProposalKernel tagged with the proposal name

    Raises:
        ConfigValidationError: When a Quantum kernel has no evolution time
    """
    basis = context.hamiltonian.basis
    if proposal.kind in CLASSICAL_KINDS:
        return make_classical_kernel(proposal.kind, basis, tag=proposal.name)

    spectra = list(spectra) if spectra is not None else kernel_spectra(proposal, context)
    if proposal.kind == "Effective":
        if len(spectra) != 1:
            raise ConfigValidationError(
                "proposals.gamma_interval", "the Effective kernel takes a single kernel Hamiltonian"
            )
        return EffectiveKernel(spectra[0], tag=proposal.name)

    if proposal.tau_interval is not None:
        return QuantumAveragedKernel(spectra, tau_interval=proposal.tau_interval, tag=proposal.name)

    fixed = proposal.tau if proposal.tau is not None else tau
    if fixed is None:
        raise ConfigValidationError("proposals.tau", f"{proposal.name} needs tau or tau_interval")
    if len(spectra) == 1:
        return QuantumKernel(spectra[0], tau=fixed, tag=proposal.name)
    return QuantumAveragedKernel(spectra, taus=[fixed], tag=proposal.name)


def build_observables(
    specs: Sequence[ObservableSpec], context: SystemContext
) -> Dict[str, np.ndarray]:
    """Diagonal observable values over the sector basis, keyed by name."""
    basis = context.hamiltonian.basis
    return {spec.name: number_product_observable(basis, spec.factors) for spec in specs}


def start_index(start: Optional[str], context: SystemContext) -> int:
    """
    Basis index of a chain start: the given bitstring, or the most probable configuration.

    Raises:
        ConfigValidationError: If the bitstring is not in the sector
    """
    basis = context.hamiltonian.basis
    if start is None:
        return int(dominant_configurations(context.ground)[0])
    try:
        config = Configuration.from_bitstring(start)
        if config.n_qubits != basis.n_qubits:
            raise SectorError(f"start has {config.n_qubits} spin-orbitals, expected {basis.n_qubits}")
        return basis.index_of(config)
    except SectorError as e:
        raise ConfigValidationError("experiment.start", str(e))
