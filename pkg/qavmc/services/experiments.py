"""
Experiment pipelines behind the subcommands.

Each pipeline takes a validated RunConfig and returns an ExperimentOutput:
named CSV tables (lists of row mappings) and named JSON records. Writing the
files is left to the run tracker.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from qavmc.config import derive_seed, stream_id
from qavmc.dependency import (
    SystemContext,
    build_kernel,
    build_observables,
    get_system,
    hubbard_at,
    kernel_spectra,
    molecule_at,
    start_index,
    tau_values,
)
from qavmc.exceptions import ConfigValidationError, NumericalError
from qavmc.schemas import (
    CLASSICAL_KINDS,
    AutocorrRecord,
    FitRecord,
    HubbardSystem,
    ProposalSpec,
    RecordHeader,
    RunConfig,
)
from qavmc.services.diagnostics import (
    GapScan,
    autocorr_summaries,
    effective_runtime_ratio,
    estimate_observable,
    fit_scaling,
    proposal_histogram,
    scan_quantum_gap,
    tau_threshold,
)
from qavmc.services.hamiltonians import bitstring, fermion_terms_hubbard, fermion_terms_molecular
from qavmc.services.jordan_wigner import pauli_deviation
from qavmc.services.markov import (
    build_transition_matrix,
    exact_mixing_time,
    mixing_time_bounds,
    run_chains,
    spectral_gap,
)
from qavmc.services.proposals import EffectiveKernel, ProposalKernel
from qavmc.services.rbm import to_checkpoint
from qavmc.services.spectral import Spectrum, expectation
from qavmc.services.vmc import vmc_optimize

logger = logging.getLogger(__name__)

Row = Dict[str, Any]


@dataclass
class ExperimentOutput:
    """Tables and records produced by one pipeline."""

    tables: Dict[str, List[Row]] = field(default_factory=dict)
    records: Dict[str, BaseModel] = field(default_factory=dict)


@dataclass
class GapResult:
    """Spectral gap of one proposal; quantum gaps are maximised over tau."""

    gap: float
    tau: Optional[float] = None
    scan: Optional[GapScan] = None


def slug(name: str) -> str:
    """File-name-safe form of a proposal or observable name."""
    return re.sub(r"[^A-Za-z0-9.]+", "_", name).strip("_")


PAULI_CHECK_MAX_QUBITS = 16
PAULI_CHECK_TOLERANCE = 1e-10


def pauli_check(config: RunConfig) -> Tuple[int, float]:
    """
    Compare the target Hamiltonian with its Jordan-Wigner image on the sector.

    Returns:
        Tuple of (number of Pauli strings, max abs entry difference)

    Raises:
        ConfigValidationError: When the register is too large for the full-space assembly
        NumericalError: When the two constructions disagree
    """
    context = get_system(config.system)
    n_qubits = context.hamiltonian.basis.n_qubits
    if n_qubits > PAULI_CHECK_MAX_QUBITS:
        raise ConfigValidationError(
            "system", f"Pauli check needs at most {PAULI_CHECK_MAX_QUBITS} spin-orbitals, got {n_qubits}"
        )
    if context.is_hubbard:
        system = context.system
        terms = fermion_terms_hubbard(system.lattice, system.t, system.U)
    else:
        terms = fermion_terms_molecular(context.integrals)
    n_strings, deviation = pauli_deviation(context.hamiltonian, terms)
    if deviation > PAULI_CHECK_TOLERANCE:
        raise NumericalError(f"Pauli path deviates from the sector matrix by {deviation:.3e}")
    return n_strings, deviation


def _needs_tau_scan(proposal: ProposalSpec) -> bool:
    return (
        proposal.kind not in CLASSICAL_KINDS
        and proposal.kind != "Effective"
        and proposal.tau is None
        and proposal.tau_interval is None
    )


def proposal_gap(
    proposal: ProposalSpec,
    context: SystemContext,
    workers: int = 1,
    progress: bool = False,
    spectra: Optional[Sequence[Spectrum]] = None,
) -> GapResult:
    """
    Absolute spectral gap of the MH chain built from a proposal and the system's ground state.

    Quantum proposals without a fixed tau or tau interval are scanned over their
    tau grid and report the largest gap.
    """
    target = context.target
    if _needs_tau_scan(proposal):
        if spectra is None:
            spectra = kernel_spectra(proposal, context)
        scan = scan_quantum_gap(spectra, target, tau_values(proposal, context), workers, progress)
        return GapResult(gap=scan.best_gap, tau=scan.best_tau, scan=scan)

    kernel = build_kernel(proposal, context, spectra=spectra)
    gap = spectral_gap(build_transition_matrix(kernel.matrix(), target))
    return GapResult(gap=gap, tau=proposal.tau)


def chain_kernel(
    proposal: ProposalSpec, context: SystemContext, workers: int = 1, progress: bool = False
) -> Tuple[ProposalKernel, Optional[float]]:
    """
    Kernel for chain runs and histograms.

    Quantum proposals without a configured evolution time run at the tau that
    maximises the spectral gap on their scan grid.
    """
    if not _needs_tau_scan(proposal):
        return build_kernel(proposal, context), proposal.tau

    spectra = kernel_spectra(proposal, context)
    result = proposal_gap(proposal, context, workers, progress, spectra=spectra)
    logger.info(f"{proposal.name}: using tau={result.tau:g} (gap {result.gap:.6g})")
    return build_kernel(proposal, context, tau=result.tau, spectra=spectra), result.tau


def parameter_contexts(config: RunConfig) -> List[Tuple[str, Any, SystemContext]]:
    """Sweep points of a gap scan: U values for Hubbard systems, FCIDUMP entries for molecules."""
    system = config.system
    experiment = config.experiment
    if isinstance(system, HubbardSystem):
        values = experiment.u_values or [system.U]
        return [("U", float(u), get_system(hubbard_at(system, U=u))) for u in values]

    if not experiment.fcidumps:
        context = get_system(system)
        return [("label", context.label, context)]
    return [
        ("label", entry.label, get_system(molecule_at(system, entry)))
        for entry in experiment.fcidumps
    ]


def size_contexts(config: RunConfig) -> List[SystemContext]:
    """
    Sweep points of a size study: open chains of each size, or sized FCIDUMP entries.

    Raises:
        ConfigValidationError: When the sweep is missing
    """
    system = config.system
    experiment = config.experiment
    if isinstance(system, HubbardSystem):
        if not experiment.sizes:
            raise ConfigValidationError("experiment.sizes", "a size study needs a list of sizes")
        return [get_system(hubbard_at(system, n_sites=n)) for n in experiment.sizes]

    if not experiment.fcidumps:
        raise ConfigValidationError("experiment.fcidumps", "a size study needs FCIDUMP entries")
    contexts = []
    for entry in experiment.fcidumps:
        context = get_system(molecule_at(system, entry))
        if entry.size is not None:
            context.size = float(entry.size)
        contexts.append(context)
    return contexts


def gap_scan(config: RunConfig, header: RecordHeader, workers: int = 1, progress: bool = False) -> ExperimentOutput:
    """Spectral gap of every proposal at every sweep point."""
    gaps: List[Row] = []
    curves: List[Row] = []
    for parameter, value, context in parameter_contexts(config):
        for proposal in config.proposals:
            result = proposal_gap(proposal, context, workers, progress)
            logger.info(f"{parameter}={value} {proposal.name}: gap {result.gap:.6g}")
            gaps.append(
                {
                    "parameter": parameter,
                    "value": value,
                    "proposal": proposal.name,
                    "dimension": context.hamiltonian.dimension,
                    "gap": result.gap,
                    "tau_best": result.tau,
                }
            )
            if result.scan is not None:
                curves.extend(
                    {
                        "parameter": parameter,
                        "value": value,
                        "proposal": proposal.name,
                        "tau": float(tau),
                        "gap": float(gap),
                    }
                    for tau, gap in zip(result.scan.taus, result.scan.gaps)
                )

    output = ExperimentOutput(tables={"gaps.csv": gaps})
    if curves:
        output.tables["tau_scan.csv"] = curves
    return output


def gap_size(config: RunConfig, header: RecordHeader, workers: int = 1, progress: bool = False) -> ExperimentOutput:
    """
    Spectral gaps against system size and the fits delta(N) = a 2^(-k N).

    Raises:
        ConfigValidationError: With fewer than two sizes
        NumericalError: When a proposal has fewer than two positive gaps to fit
    """
    contexts = size_contexts(config)
    if len(contexts) < 2:
        raise ConfigValidationError("experiment.sizes", "a scaling fit needs at least two sizes")

    rows: List[Row] = []
    points: Dict[str, List[Tuple[float, float]]] = {p.name: [] for p in config.proposals}
    for context in contexts:
        for proposal in config.proposals:
            result = proposal_gap(proposal, context, workers, progress)
            rows.append(
                {
                    "size": context.size,
                    "label": context.label,
                    "proposal": proposal.name,
                    "dimension": context.hamiltonian.dimension,
                    "gap": result.gap,
                    "tau_best": result.tau,
                }
            )
            if result.gap > 0.0:
                points[proposal.name].append((context.size, result.gap))
            else:
                logger.warning(f"{proposal.name} at size {context.size:g}: zero gap left out of the fit")

    fits = {}
    for name, data in points.items():
        try:
            fits[name] = fit_scaling(data)
        except NumericalError as e:
            raise NumericalError(f"scaling fit for {name}: {str(e)}")

    experiment = config.experiment
    reference = next((p.name for p in config.proposals if p.kind == "ExcitationSD"), None)
    sizes = sorted({context.size for context in contexts})
    fit_rows: List[Row] = []
    runtime_rows: List[Row] = []
    output = ExperimentOutput(tables={"gaps.csv": rows})
    for proposal in config.proposals:
        fit = fits[proposal.name]
        k_rel = None
        runtime = None
        if reference is not None and fit.k != 0.0:
            k_rel = fits[reference].k / fit.k
        if reference is not None and proposal.name != reference:
            t_step = experiment.t_sc if proposal.kind in CLASSICAL_KINDS else experiment.t_sq
            runtime = [
                (n, effective_runtime_ratio(fits[reference], fit, experiment.t_sc, t_step, n))
                for n in sizes
            ]
            runtime_rows.extend(
                {"size": n, "proposal": proposal.name, "reference": reference, "ratio": ratio}
                for n, ratio in runtime
            )
        fit_rows.append(
            {"proposal": proposal.name, "a": fit.a, "k": fit.k, "residual": fit.residual, "k_rel": k_rel}
        )
        output.records[f"fit_{slug(proposal.name)}.json"] = FitRecord(
            **header.dict(), proposal=proposal.name, fit=fit, k_rel=k_rel, runtime_ratio=runtime
        )
        logger.info(f"{proposal.name}: a={fit.a:.4g}, k={fit.k:.4g}")
    output.tables["fits.csv"] = fit_rows
    if runtime_rows:
        output.tables["runtime.csv"] = runtime_rows
    return output


def _effective_gap(spectra: Sequence[Spectrum], context: SystemContext) -> float:
    q = np.mean([EffectiveKernel(spec).matrix() for spec in spectra], axis=0)
    return spectral_gap(build_transition_matrix(q, context.target))


def tau_threshold_scan(
    config: RunConfig, header: RecordHeader, workers: int = 1, progress: bool = False
) -> ExperimentOutput:
    """
    First tau at which the Quantum gap reaches c times the Effective gap, per size and c.

    Raises:
        ConfigValidationError: Without a Quantum proposal to scan
    """
    quantum = [p for p in config.proposals if p.kind in ("Quantum", "QuantumAveraged")]
    if not quantum:
        raise ConfigValidationError("proposals", "a tau-threshold scan needs a Quantum proposal")
    skipped = [p.name for p in config.proposals if p not in quantum]
    if skipped:
        logger.warning(f"tau-threshold ignores non-quantum proposals {skipped}")

    rows: List[Row] = []
    for context in size_contexts(config):
        for proposal in quantum:
            spectra = kernel_spectra(proposal, context)
            delta_eff = _effective_gap(spectra, context)
            scan = scan_quantum_gap(
                spectra, context.target, tau_values(proposal, context), workers, progress
            )
            for c in config.experiment.c_values:
                threshold = tau_threshold(scan.taus, scan.gaps, delta_eff, c)
                if threshold is None:
                    logger.warning(
                        f"{proposal.name} at size {context.size:g}: gap never reaches {c:g} x delta_eff"
                    )
                rows.append(
                    {
                        "size": context.size,
                        "label": context.label,
                        "proposal": proposal.name,
                        "c": c,
                        "delta_eff": delta_eff,
                        "tau_threshold": threshold,
                    }
                )
    return ExperimentOutput(tables={"thresholds.csv": rows})


def histogram(config: RunConfig, header: RecordHeader, workers: int = 1, progress: bool = False) -> ExperimentOutput:
    """(Hamming distance, delta-epsilon) histogram of every proposal row from one start state."""
    context = get_system(config.system)
    basis = context.hamiltonian.basis
    experiment = config.experiment
    i = start_index(experiment.start, context)
    start = bitstring(basis.mask(i), basis.n_qubits)

    rows: List[Row] = []
    for proposal in config.proposals:
        kernel, tau = chain_kernel(proposal, context, workers, progress)
        hist = proposal_histogram(
            kernel.row(i),
            context.ground,
            i,
            basis,
            eps_range=experiment.delta_eps_range,
            width=experiment.delta_eps_width,
        )
        logger.info(f"{proposal.name}: self-move mass {hist.self_mass:.4g}")
        entries = list(hist.rows())
        if not entries:
            # all mass on the self-move
            entries = [{"hamming": None, "delta_eps_lo": None, "delta_eps_hi": None, "weight": 0.0}]
        for entry in entries:
            rows.append(
                {"proposal": proposal.name, "tau": tau, "start": start, **entry, "self_mass": hist.self_mass}
            )
    return ExperimentOutput(tables={"histogram.csv": rows})


def mcmc_observable(
    config: RunConfig, header: RecordHeader, workers: int = 1, progress: bool = False
) -> ExperimentOutput:
    """
    Independent chains sampling the exact ground state under every proposal.

    Reports cross-chain statistics of each observable at every sample size and
    the autocorrelation summaries of the longest run.
    """
    context = get_system(config.system)
    experiment = config.experiment
    observables = build_observables(experiment.observables, context)
    references = {name: expectation(context.ground, values) for name, values in observables.items()}
    start = start_index(experiment.start, context)
    sample_sizes = sorted(experiment.sample_sizes or [experiment.n_samples])

    summary: List[Row] = []
    means: List[Row] = []
    output = ExperimentOutput()
    for k, proposal in enumerate(config.proposals):
        kernel, _ = chain_kernel(proposal, context, workers, progress)
        chains = []
        for n in sample_sizes:
            burn_in = int(round(experiment.burn_in_fraction * n))
            chains = run_chains(
                kernel,
                context.target,
                start,
                n,
                burn_in,
                experiment.n_chains,
                master_seed=config.seed,
                observables=observables,
                stream_id=stream_id(f"proposals.{k}.n_samples.{n}"),
                workers=workers,
                progress=progress,
            )
            acceptance = float(np.mean([chain.acceptance_rate for chain in chains]))
            for name in observables:
                estimate = estimate_observable(chains, name, references[name])
                summary.append(
                    {
                        "proposal": proposal.name,
                        "n_samples": n,
                        "observable": name,
                        "reference": estimate.reference,
                        "pooled_mean": estimate.pooled_mean,
                        "std": estimate.std,
                        "mae": estimate.mae,
                        "acceptance_rate": acceptance,
                    }
                )
                means.extend(
                    {"proposal": proposal.name, "n_samples": n, "observable": name, "chain": c, "mean": float(m)}
                    for c, m in enumerate(estimate.chain_means)
                )

        if experiment.write_chains:
            basis = context.hamiltonian.basis
            output.tables[f"chains_{slug(proposal.name)}.csv"] = [
                {"chain": chain.chain, **row} for chain in chains for row in chain.rows(basis)
            ]

        for name in observables:
            output.records[f"autocorr_{slug(proposal.name)}_{slug(name)}.json"] = AutocorrRecord(
                **header.dict(),
                proposal=proposal.name,
                observable=name,
                chains=autocorr_summaries(chains, name),
            )

    output.tables["observables.csv"] = summary
    output.tables["chain_means.csv"] = means
    return output


def vmc(config: RunConfig, header: RecordHeader, workers: int = 1, progress: bool = False) -> ExperimentOutput:
    """
    VMC optimisation of the RBM under every proposal, or once in exact mode.

    Trajectories carry the exact ground energy for reference.
    """
    context = get_system(config.system)
    hamiltonian = context.hamiltonian
    spec = config.experiment.vmc
    observables = build_observables(config.experiment.observables, context)
    exact = float(context.spectrum.eigenvalues[0])

    runs: List[Tuple[str, str, Optional[ProposalKernel]]] = []
    if spec.mode == "exact":
        runs.append(("exact", "vmc.exact", None))
    else:
        for k, proposal in enumerate(config.proposals):
            kernel, _ = chain_kernel(proposal, context, workers, progress)
            runs.append((proposal.name, f"proposals.{k}", kernel))

    output = ExperimentOutput()
    for name, path, kernel in runs:
        result = vmc_optimize(
            hamiltonian,
            kernel,
            spec,
            seed=derive_seed(config.seed, path),
            observables=observables,
            workers=workers,
            progress=progress,
        )
        output.tables[f"trajectory_{slug(name)}.csv"] = [
            {"proposal": name, **row, "exact_energy": exact} for row in result.trajectory
        ]
        output.records[f"checkpoint_{slug(name)}.json"] = to_checkpoint(result.params, header)
        logger.info(f"VMC {name}: final E={result.energies[-1]:.8f} (exact {exact:.8f})")
    return output


def mixing_time(config: RunConfig, header: RecordHeader, workers: int = 1, progress: bool = False) -> ExperimentOutput:
    """Spectral-gap bounds on t_mix(epsilon) and, for small sectors, the exact value."""
    context = get_system(config.system)
    experiment = config.experiment
    epsilon = experiment.epsilon
    dimension = context.hamiltonian.dimension

    rows: List[Row] = []
    for proposal in config.proposals:
        kernel, tau = chain_kernel(proposal, context, workers, progress)
        transition = build_transition_matrix(kernel.matrix(), context.target)
        gap = spectral_gap(transition)
        row: Row = {
            "proposal": proposal.name,
            "tau": tau,
            "dimension": dimension,
            "epsilon": epsilon,
            "gap": gap,
            "lower_bound": None,
            "upper_bound": None,
            "t_mix": None,
        }
        if gap > 0.0:
            row["lower_bound"], row["upper_bound"] = mixing_time_bounds(gap, transition, epsilon)
        else:
            logger.warning(f"{proposal.name}: zero spectral gap, the chain does not mix")

        if gap > 0.0 and dimension <= experiment.max_states:
            try:
                row["t_mix"] = exact_mixing_time(transition, epsilon)
            except NumericalError as e:
                logger.warning(f"{proposal.name}: {str(e)}")
        elif dimension > experiment.max_states:
            logger.info(f"{proposal.name}: {dimension} states exceed max_states; exact t_mix skipped")
        rows.append(row)
    return ExperimentOutput(tables={"mixing_times.csv": rows})


PIPELINES = {
    "gap-scan": gap_scan,
    "gap-size": gap_size,
    "tau-threshold": tau_threshold_scan,
    "histogram": histogram,
    "mcmc-observable": mcmc_observable,
    "vmc": vmc,
    "mixing-time": mixing_time,
}
