"""
Variational Monte Carlo with the two-block RBM.

Each iteration evaluates ln psi on the whole sector basis, draws samples from
|psi|^2 with Metropolis-Hastings chains (or weights every configuration by
|psi|^2 in exact mode), estimates the energy and its gradient, preconditions
the gradient with stochastic reconfiguration and takes an Adam step.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import scipy.linalg
from tqdm import tqdm

from qavmc.exceptions import NumericalError, OutOfSupportError
from qavmc.schemas import VmcSpec
from qavmc.services.hamiltonians import SectorHamiltonian
from qavmc.services.markov import TargetDistribution, run_chains
from qavmc.services.proposals import ProposalKernel
from qavmc.services.rbm import RbmParams, init_params, log_derivatives, log_psi

logger = logging.getLogger(__name__)


def local_energies(
    hamiltonian: SectorHamiltonian, log_values: np.ndarray, indices: Sequence[int]
) -> np.ndarray:
    """
    E_loc(S) = sum_S' H(S, S') psi(S') / psi(S) for each sampled basis index.

    Ratios are formed in the log domain from ln psi over the whole basis.

    Raises:
        OutOfSupportError: If psi vanishes at a sampled configuration
    """
    indices = np.asarray(indices, dtype=np.int64)
    log_values = np.asarray(log_values, dtype=complex)
    if not np.all(np.isfinite(log_values[indices].real)):
        raise OutOfSupportError("psi vanishes at a sampled configuration")

    rows = hamiltonian.sparse_rows[indices]
    owners = np.repeat(np.arange(len(indices)), np.diff(rows.indptr))
    ratios = np.exp(log_values[rows.indices] - log_values[indices][owners])
    energies = np.zeros(len(indices), dtype=complex)
    np.add.at(energies, owners, rows.data * ratios)
    return energies


def local_energy(hamiltonian: SectorHamiltonian, log_values: np.ndarray, i: int) -> complex:
    return complex(local_energies(hamiltonian, log_values, [i])[0])


@dataclass
class EnergyEstimate:
    """Weighted energy, gradient and the per-sample quantities behind them."""

    energy: float
    gradient: np.ndarray
    local_energies: np.ndarray
    derivatives: np.ndarray
    weights: np.ndarray
    indices: np.ndarray


def energy_and_gradient(
    hamiltonian: SectorHamiltonian,
    params: RbmParams,
    indices: Sequence[int],
    weights: Optional[Sequence[float]] = None,
    log_values: Optional[np.ndarray] = None,
) -> EnergyEstimate:
    """
    E = <E_loc> and dE/dtheta = 2 Re <(E_loc - E) O*>, with O = d ln psi / d theta.

    Args:
        hamiltonian: Sector Hamiltonian
        params: RBM parameters
        indices: Sampled basis indices (or every index in exact mode)
        weights: Sample weights summing to 1; uniform when omitted
        log_values: ln psi over the basis, recomputed when omitted

    Returns:
        EnergyEstimate
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise NumericalError("no samples to estimate the energy from")
    w = np.full(indices.size, 1.0 / indices.size) if weights is None else np.asarray(weights, dtype=float)

    spins = hamiltonian.basis.spins
    if log_values is None:
        log_values = log_psi(params, spins)
    e_loc = local_energies(hamiltonian, log_values, indices)
    derivatives = log_derivatives(params, spins[indices])

    energy = float(np.dot(w, e_loc).real)
    gradient = 2.0 * np.real((w * (e_loc - energy)) @ np.conj(derivatives))
    return EnergyEstimate(
        energy=energy,
        gradient=gradient,
        local_energies=e_loc,
        derivatives=derivatives,
        weights=w,
        indices=indices,
    )


def sr_matrix(derivatives: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """S_kk' = <O_k* O_k'> - <O_k*><O_k'> under the sample weights."""
    mean = weights @ derivatives
    centered = derivatives - mean
    return (np.conj(centered).T * weights) @ centered


def sr_precondition(
    derivatives: np.ndarray, weights: np.ndarray, gradient: np.ndarray, shift: float
) -> np.ndarray:
    """
    Solve (Re S + shift I) x = g.

    Falls back to the plain gradient, with a warning, when the solve fails.
    """
    if shift <= 0:
        raise NumericalError("SR shift must be positive")
    s = np.real(sr_matrix(derivatives, weights))
    s[np.diag_indices_from(s)] += shift
    try:
        return scipy.linalg.solve(s, gradient, assume_a="sym")
    except (np.linalg.LinAlgError, ValueError) as e:
        logger.warning(f"SR solve failed ({str(e)}); using the plain gradient")
        return np.array(gradient, dtype=float)


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, size: int, **hyper) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), **hyper)


def adam_step(state: AdamState, params: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; returns new parameters and advances the state."""
    if state.m.shape != gradient.shape:
        raise NumericalError(f"moment shape {state.m.shape} != gradient shape {gradient.shape}")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * gradient
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * gradient * gradient
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


@dataclass
class VmcResult:
    """Trajectory rows and the final parameters of an optimisation."""

    trajectory: List[Dict[str, float]]
    params: RbmParams
    adam: AdamState
    final_states: Optional[np.ndarray] = None

    @property
    def energies(self) -> np.ndarray:
        return np.array([row["energy"] for row in self.trajectory])


@dataclass
class _SampleSet:
    indices: np.ndarray
    weights: np.ndarray
    acceptance_rate: float = float("nan")
    last_states: Optional[np.ndarray] = None


def exact_energy(hamiltonian: SectorHamiltonian, params: RbmParams) -> float:
    """<psi|H|psi> / <psi|psi> by dense contraction over the basis."""
    log_values = log_psi(params, hamiltonian.basis.spins)
    psi = np.exp(log_values - np.max(log_values.real))
    return float(np.real(np.vdot(psi, hamiltonian.matrix @ psi) / np.vdot(psi, psi)))


def _exact_samples(log_values: np.ndarray) -> _SampleSet:
    log_w = 2.0 * log_values.real
    w = np.exp(log_w - np.max(log_w))
    return _SampleSet(indices=np.arange(len(log_values)), weights=w / w.sum())


def vmc_optimize(
    hamiltonian: SectorHamiltonian,
    kernel: Optional[ProposalKernel],
    spec: VmcSpec,
    seed: int,
    observables: Optional[Mapping[str, np.ndarray]] = None,
    params: Optional[RbmParams] = None,
    workers: int = 1,
    progress: bool = False,
) -> VmcResult:
    """
    Optimise the RBM energy with SR-preconditioned Adam.

    Args:
        hamiltonian: Sector Hamiltonian to minimise
        kernel: Proposal kernel for sampled mode (unused in exact mode)
        spec: Optimisation settings
        seed: Master seed; parameter init and every iteration's chains derive from it
        observables: Diagonal observables estimated along the trajectory
        params: Starting parameters; Gaussian initialisation when omitted
        workers: Worker processes for the chains
        progress: Show a progress bar

    Returns:
        VmcResult with one trajectory row per iteration

    Raises:
        NumericalError: When the energy or the gradient stops being finite
    """
    basis = hamiltonian.basis
    observables = dict(observables or {})
    if spec.mode == "sampled" and kernel is None:
        raise NumericalError("sampled VMC needs a proposal kernel")

    init_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    if params is None:
        params = init_params(basis.n_qubits, spec.alpha_density, init_rng, spec.init_sigma)
    theta = params.flatten()
    adam = AdamState.zeros(
        theta.size,
        learning_rate=spec.learning_rate,
        beta1=spec.beta1,
        beta2=spec.beta2,
        epsilon=spec.adam_epsilon,
    )

    steps = max(1, spec.n_samples // spec.n_chains)
    burn_in = int(round(spec.burn_in_fraction * steps))
    starts = init_rng.integers(len(basis), size=spec.n_chains)
    trajectory: List[Dict[str, float]] = []

    logger.info(
        f"VMC ({spec.mode}) on dimension {len(basis)}: {params.size} parameters, "
        f"{spec.iterations} iterations"
    )
    for iteration in tqdm(range(spec.iterations), disable=not progress):
        log_values = log_psi(params, basis.spins)

        if spec.mode == "exact":
            samples = _exact_samples(log_values)
        else:
            target = TargetDistribution.from_log_weights(2.0 * log_values.real)
            chains = run_chains(
                kernel,
                target,
                [int(s) for s in starts],
                steps,
                burn_in,
                spec.n_chains,
                master_seed=seed,
                stream_id=iteration + 1,
                workers=workers,
            )
            indices = np.concatenate([chain.states for chain in chains])
            samples = _SampleSet(
                indices=indices,
                weights=np.full(indices.size, 1.0 / indices.size),
                acceptance_rate=float(np.mean([chain.acceptance_rate for chain in chains])),
                last_states=np.array([chain.states[-1] for chain in chains]),
            )
            if spec.warm_start:
                starts = samples.last_states

        estimate = energy_and_gradient(
            hamiltonian, params, samples.indices, samples.weights, log_values
        )
        if not (np.isfinite(estimate.energy) and np.all(np.isfinite(estimate.gradient))):
            logger.error(f"VMC diverged at iteration {iteration}: E={estimate.energy}")
            raise NumericalError(f"non-finite energy or gradient at iteration {iteration}")

        row: Dict[str, float] = {"iteration": iteration, "energy": estimate.energy}
        for name, values in observables.items():
            row[name] = float(np.dot(samples.weights, np.asarray(values)[samples.indices]))
        row["acceptance_rate"] = samples.acceptance_rate
        trajectory.append(row)

        update = sr_precondition(
            estimate.derivatives, estimate.weights, estimate.gradient, spec.sr_shift
        )
        theta = adam_step(adam, theta, update)
        params = RbmParams.from_vector(theta, params.n_visible, params.n_hidden)

    logger.info(f"VMC finished: last energy {trajectory[-1]['energy']:.8f}")
    return VmcResult(
        trajectory=trajectory,
        params=params,
        adam=adam,
        final_states=None if spec.mode == "exact" else np.asarray(starts),
    )
