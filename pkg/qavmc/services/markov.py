"""
Metropolis-Hastings machinery: acceptance, transition matrices, spectral gaps,
mixing times and the chain runner.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from tqdm import tqdm

from qavmc.exceptions import KernelError, NumericalError, OutOfSupportError
from qavmc.services.hamiltonians import SectorBasis, bitstring
from qavmc.services.proposals import ROW_TOLERANCE, ProposalKernel
from qavmc.services.spectral import PROBABILITY_FLOOR, GroundStateDistribution

logger = logging.getLogger(__name__)

T_MAX = 2 ** 20
GAP_TOLERANCE = 1e-12
BALANCE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class TargetDistribution:
    """
    Target pi over a sector basis, stored as log weights.

    States with log weight -inf are outside the support. Only differences of
    log weights are used by the chain, so unnormalised targets are fine.
    """

    log_weights: np.ndarray
    normalized: bool = False

    @classmethod
    def from_probabilities(cls, probabilities: Sequence[float]) -> "TargetDistribution":
        p = np.asarray(probabilities, dtype=float)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise NumericalError("target probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > ROW_TOLERANCE:
            raise NumericalError(f"target probabilities sum to {p.sum():.12f}, not 1")
        excluded = int(np.sum(p < PROBABILITY_FLOOR))
        if excluded:
            logger.warning(f"Excluding {excluded} zero-probability states from the support")
        with np.errstate(divide="ignore"):
            log_w = np.where(p < PROBABILITY_FLOOR, -np.inf, np.log(np.maximum(p, PROBABILITY_FLOOR)))
        return cls(log_weights=log_w, normalized=True)

    @classmethod
    def from_ground(cls, dist: GroundStateDistribution) -> "TargetDistribution":
        return cls.from_probabilities(dist.probabilities)

    @classmethod
    def from_log_weights(cls, log_weights: Sequence[float]) -> "TargetDistribution":
        log_w = np.asarray(log_weights, dtype=float)
        if np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
            raise NumericalError("log weights must not be NaN or +inf")
        return cls(log_weights=log_w, normalized=False)

    def __len__(self) -> int:
        return len(self.log_weights)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.log_weights))

    @property
    def probabilities(self) -> np.ndarray:
        w = np.exp(self.log_weights - np.max(self.log_weights))
        return w / w.sum()

    def in_support(self, i: int) -> bool:
        return bool(np.isfinite(self.log_weights[i]))


def acceptance_symmetric(target: TargetDistribution, i: int, j: int) -> float:
    """min(1, pi(S_j) / pi(S_i)) for a symmetric proposal."""
    if not target.in_support(i):
        raise OutOfSupportError(f"current state {i} has zero target weight")
    delta = target.log_weights[j] - target.log_weights[i]
    return 1.0 if delta >= 0 else float(np.exp(delta))


def acceptance_general(target: TargetDistribution, q: np.ndarray, i: int, j: int) -> float:
    """min(1, pi(S_j) Q(S_j, S_i) / (pi(S_i) Q(S_i, S_j)))."""
    if q[i, j] <= 0:
        raise KernelError(f"move {i} -> {j} has zero proposal probability")
    if not target.in_support(i):
        raise OutOfSupportError(f"current state {i} has zero target weight")
    if q[j, i] <= 0 or not target.in_support(j):
        return 0.0
    log_ratio = target.log_weights[j] - target.log_weights[i] + np.log(q[j, i]) - np.log(q[i, j])
    return 1.0 if log_ratio >= 0 else float(np.exp(log_ratio))


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic P restricted to the support of its target."""

    matrix: np.ndarray
    pi: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        self.matrix.setflags(write=False)

    @property
    def dimension(self) -> int:
        return len(self.pi)


def detailed_balance_residual(transition: TransitionMatrix) -> float:
    """max |pi_i P_ij - pi_j P_ji|, relative to the largest flow."""
    flow = transition.pi[:, None] * transition.matrix
    return float(np.max(np.abs(flow - flow.T)) / max(np.max(flow), PROBABILITY_FLOOR))


def stationarity_residual(transition: TransitionMatrix) -> float:
    """max |pi^T P - pi^T|."""
    return float(np.max(np.abs(transition.pi @ transition.matrix - transition.pi)))


def build_transition_matrix(q: np.ndarray, target: TargetDistribution) -> TransitionMatrix:
    """
    Assemble the Metropolis-Hastings transition matrix of a kernel.

    Off-diagonal entries are Q_ij A_ij, the diagonal takes the rejected mass.
    Rows and columns of states outside the target support are dropped.

    Args:
        q: Kernel matrix (rows Q(S_i, .))
        target: Target distribution over the same basis

    Returns:
        TransitionMatrix over the support with the normalised target

    Raises:
        KernelError: If kernel rows are not probability vectors
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (len(target), len(target)):
        raise KernelError(f"kernel shape {q.shape} does not match target of size {len(target)}")
    row_error = np.max(np.abs(q.sum(axis=1) - 1.0))
    if row_error > ROW_TOLERANCE or np.min(q) < -ROW_TOLERANCE:
        raise KernelError(f"kernel rows are not probability vectors (deviation {row_error:.3e})")

    support = target.support
    if len(support) < len(target):
        logger.warning(f"Transition matrix restricted to {len(support)} of {len(target)} states")
    log_w = target.log_weights[support]
    pi = np.exp(log_w - np.max(log_w))
    pi /= pi.sum()

    qs = q[np.ix_(support, support)]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = (log_w[None, :] - log_w[:, None]) + np.log(qs.T) - np.log(qs)
        acceptance = np.where(qs > 0, np.exp(np.minimum(log_ratio, 0.0)), 0.0)
    p = qs * acceptance
    np.fill_diagonal(p, 0.0)
    np.fill_diagonal(p, 1.0 - p.sum(axis=1))

    transition = TransitionMatrix(matrix=p, pi=pi, support=support)
    residual = detailed_balance_residual(transition)
    if residual > BALANCE_TOLERANCE:
        logger.warning(f"Detailed balance residual {residual:.3e} exceeds {BALANCE_TOLERANCE}")
    return transition


def spectral_gap(transition: TransitionMatrix) -> float:
    """
    Absolute spectral gap 1 - |lambda_2| from the symmetrised matrix.

    D^(1/2) P D^(-1/2) with D = diag(pi) is symmetric for a reversible chain and
    shares the spectrum of P. Returns 0 when |lambda_2| = 1 within tolerance.

    Raises:
        NumericalError: If the eigensolver fails
    """
    if transition.dimension == 1:
        return 1.0
    root = np.sqrt(transition.pi)
    sym = root[:, None] * transition.matrix / root[None, :]
    sym = 0.5 * (sym + sym.T)
    try:
        eigenvalues = scipy.linalg.eigvalsh(sym)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"eigensolve of the transition matrix failed: {str(e)}")

    second = np.max(np.abs(eigenvalues[:-1]))
    if second >= 1.0 - GAP_TOLERANCE:
        return 0.0
    return float(min(1.0, 1.0 - second))


def _min_pi(pi: Union[np.ndarray, TargetDistribution, TransitionMatrix, float]) -> float:
    if isinstance(pi, TransitionMatrix):
        return float(np.min(pi.pi))
    if isinstance(pi, TargetDistribution):
        return float(np.min(pi.probabilities[pi.support]))
    values = np.atleast_1d(np.asarray(pi, dtype=float))
    return float(np.min(values[values > 0])) if np.any(values > 0) else 0.0


def mixing_time_bounds(
    delta: float, pi: Union[np.ndarray, TargetDistribution, TransitionMatrix, float], epsilon: float
) -> Tuple[float, float]:
    """
    Spectral-gap bounds on the mixing time.

    lower = (1/delta - 1) ln(1/(2 epsilon)), upper = (1/delta) ln(1/(epsilon min pi)).

    Raises:
        NumericalError: When delta is 0 (the chain does not mix)
    """
    if not 0.0 < epsilon < 1.0:
        raise NumericalError(f"epsilon must lie in (0, 1), got {epsilon}")
    if delta <= 0.0:
        raise NumericalError("spectral gap is zero; mixing time is unbounded")
    if delta > 1.0:
        raise NumericalError(f"spectral gap {delta} exceeds 1")
    pi_min = _min_pi(pi)
    if pi_min <= 0.0:
        raise NumericalError("target has no positive probability")
    lower = (1.0 / delta - 1.0) * np.log(1.0 / (2.0 * epsilon))
    upper = (1.0 / delta) * np.log(1.0 / (epsilon * pi_min))
    return float(lower), float(upper)


def worst_tv(power: np.ndarray, pi: np.ndarray) -> float:
    """max_i of the total-variation distance between row i and pi."""
    return float(0.5 * np.max(np.sum(np.abs(power - pi[None, :]), axis=1)))


def exact_mixing_time(transition: TransitionMatrix, epsilon: float, t_max: int = T_MAX) -> int:
    """
    Smallest t with max_i TV(P^t(i, .), pi) <= epsilon.

    Powers P^(2^k) come from repeated squaring; the exact step is then found by
    descending over the stored powers.

    Raises:
        NumericalError: If the cutoff t_max is reached first
    """
    if not 0.0 < epsilon < 1.0:
        raise NumericalError(f"epsilon must lie in (0, 1), got {epsilon}")
    pi = transition.pi
    powers = [np.array(transition.matrix)]
    while worst_tv(powers[-1], pi) > epsilon:
        if 2 ** len(powers) > t_max:
            raise NumericalError(f"mixing time exceeds cutoff t_max={t_max}")
        powers.append(powers[-1] @ powers[-1])

    if len(powers) == 1:
        return 1

    # P^(2^(k-1)) still fails, P^(2^k) passes
    steps = 2 ** (len(powers) - 2)
    current = powers[-2]
    for k in range(len(powers) - 3, -1, -1):
        candidate = current @ powers[k]
        if worst_tv(candidate, pi) > epsilon:
            current = candidate
            steps += 2 ** k
    return steps + 1


@dataclass
class ChainSample:
    """Recorded (post burn-in) trajectory of one Markov chain."""

    states: np.ndarray
    accepted: np.ndarray
    observables: Dict[str, np.ndarray] = field(default_factory=dict)
    seed: Optional[int] = None
    chain: int = 0
    proposal: str = ""
    burn_in: int = 0
    moved: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.states)

    @property
    def acceptance_count(self) -> int:
        return int(np.sum(self.accepted))

    @property
    def acceptance_rate(self) -> float:
        """Accepted fraction of proposed moves; self-proposals are not moves."""
        proposed = len(self) if self.moved is None else int(np.sum(self.moved))
        return self.acceptance_count / proposed if proposed else 0.0

    def rows(self, basis: SectorBasis) -> Iterator[Dict[str, Union[int, str, float]]]:
        """CSV rows: step, state bitstring, accepted flag and observable columns."""
        names = sorted(self.observables)
        for step, (state, accepted) in enumerate(zip(self.states, self.accepted)):
            row = {
                "step": step,
                "state": bitstring(basis.mask(int(state)), basis.n_qubits),
                "accepted": int(accepted),
            }
            for name in names:
                row[name] = float(self.observables[name][step])
            yield row


def run_chain(
    kernel: ProposalKernel,
    target: TargetDistribution,
    start: int,
    steps: int,
    burn_in: int = 0,
    seed: Union[int, np.random.SeedSequence, None] = 0,
    observables: Optional[Mapping[str, np.ndarray]] = None,
    chain: int = 0,
) -> ChainSample:
    """
    Run one Metropolis-Hastings chain with a symmetric proposal.

    Args:
        kernel: Proposal kernel over the target's basis
        target: Target distribution (log weights)
        start: Basis index of the initial state
        steps: Number of recorded steps
        burn_in: Steps run and discarded before recording
        seed: Integer seed or SeedSequence of this chain's stream
        observables: Diagonal observables, name -> values over the basis
        chain: Chain number stored on the sample

    Returns:
        ChainSample with `steps` recorded states

    Raises:
        OutOfSupportError: If the start state has zero target weight
    """
    if not target.in_support(start):
        raise OutOfSupportError(f"chain start {start} has zero target weight")

    rng = np.random.default_rng(seed)
    states = np.empty(steps, dtype=np.int64)
    accepted = np.zeros(steps, dtype=bool)
    moved = np.zeros(steps, dtype=bool)
    current = int(start)

    for step in range(burn_in + steps):
        proposed = int(kernel.sample(current, rng))
        move = proposed != current
        accept = False
        if move:
            a = acceptance_symmetric(target, current, proposed)
            accept = a >= 1.0 or rng.random() < a
            if accept:
                current = proposed
        if step >= burn_in:
            states[step - burn_in] = current
            accepted[step - burn_in] = accept
            moved[step - burn_in] = move

    series = {name: np.asarray(values)[states] for name, values in (observables or {}).items()}
    return ChainSample(
        states=states,
        accepted=accepted,
        observables=series,
        seed=seed if isinstance(seed, int) else None,
        chain=chain,
        proposal=kernel.tag,
        burn_in=burn_in,
        moved=moved,
    )


def chain_streams(
    master_seed: int, n_chains: int, stream_id: int = 0
) -> List[np.random.SeedSequence]:
    """Independent per-chain streams spawned from (master seed, stream id)."""
    return np.random.SeedSequence(master_seed, spawn_key=(stream_id,)).spawn(n_chains)


def _run_chain_task(args: Tuple) -> ChainSample:
    return run_chain(*args)


def run_chains(
    kernel: ProposalKernel,
    target: TargetDistribution,
    starts: Union[int, Sequence[int]],
    steps: int,
    burn_in: int,
    n_chains: int,
    master_seed: int,
    observables: Optional[Mapping[str, np.ndarray]] = None,
    stream_id: int = 0,
    workers: int = 1,
    progress: bool = False,
) -> List[ChainSample]:
    """
    Run independent chains, each on its own spawned random stream.

    Results are returned in chain order regardless of the worker count.
    """
    if isinstance(starts, (int, np.integer)):
        starts = [int(starts)] * n_chains
    if len(starts) != n_chains:
        raise KernelError(f"{len(starts)} start states for {n_chains} chains")

    streams = chain_streams(master_seed, n_chains, stream_id)
    tasks = [
        (kernel, target, start, steps, burn_in, stream, observables, c)
        for c, (start, stream) in enumerate(zip(starts, streams))
    ]
    logger.info(
        f"Running {n_chains} chains of {steps} steps (burn-in {burn_in}) with {kernel.tag}"
    )

    if workers > 1:
        # warm kernel caches before the kernel is pickled to workers
        kernel.sample(int(starts[0]), np.random.default_rng(0))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            samples = list(
                tqdm(pool.map(_run_chain_task, tasks), total=n_chains, disable=not progress)
            )
    else:
        samples = [_run_chain_task(task) for task in tqdm(tasks, disable=not progress)]

    for sample in samples:
        sample.seed = master_seed
    return samples
