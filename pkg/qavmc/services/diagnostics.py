"""
Chain and kernel diagnostics.

Autocorrelation uses the Madras-Sokal self-consistent window with the
convention tau_O = 1 + 2 sum rho(t), so white noise gives tau_O = 1 and
N_eff = N_s / tau_O.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from tqdm import tqdm

from qavmc.exceptions import NumericalError
from qavmc.schemas import AutocorrSummary, ScalingFit
from qavmc.services.hamiltonians import SectorBasis, hamming_many
from qavmc.services.markov import (
    ChainSample,
    TargetDistribution,
    build_transition_matrix,
    spectral_gap,
)
from qavmc.services.spectral import (
    PROBABILITY_FLOOR,
    GroundStateDistribution,
    Spectrum,
    evolution_matrix,
)

logger = logging.getLogger(__name__)

SOKAL_C = 5.0
MIN_RELIABLE_LENGTH = 100
MIN_EXPECTED_COUNT = 5.0


def _centered(series: Sequence[float]) -> np.ndarray:
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise NumericalError("autocorrelation of an empty series")
    return x - x.mean()


def autocovariance(series: Sequence[float], lag: int) -> float:
    """c(lag) = sum_i (O_i - mu)(O_{i+lag} - mu) / (N - lag), mu the full-series mean."""
    x = _centered(series)
    n = x.size
    if not 0 <= lag < n:
        raise NumericalError(f"lag {lag} outside 0..{n - 1}")
    return float(np.dot(x[: n - lag], x[lag:]) / (n - lag))


def autocovariance_function(series: Sequence[float]) -> np.ndarray:
    """c(t) for every lag 0..N-1 via zero-padded FFT."""
    x = _centered(series)
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(x, size)
    raw = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n]
    return raw / (n - np.arange(n))


@dataclass
class AutocorrResult:
    """Integrated autocorrelation time of one series."""

    tau: float
    window: int
    rho: np.ndarray
    n_samples: int
    low_confidence: bool = False

    @property
    def n_eff(self) -> float:
        return self.n_samples / self.tau

    def summary(self) -> AutocorrSummary:
        return AutocorrSummary(
            tau_int=self.tau,
            window=self.window,
            n_samples=self.n_samples,
            n_eff=self.n_eff,
            low_confidence=self.low_confidence,
        )


def integrated_autocorr(series: Sequence[float], c: float = SOKAL_C) -> AutocorrResult:
    """
    Integrated autocorrelation time with a self-consistent window.

    tau_O(W) = 1 + 2 sum_{t=1}^{W} rho(t); W is the smallest lag with W >= c tau_O(W).
    Series shorter than 100 samples, constant series and series where no lag
    satisfies the window condition are flagged low-confidence.
    """
    cov = autocovariance_function(series)
    n = cov.size
    low_confidence = n < MIN_RELIABLE_LENGTH

    if n < 2 or cov[0] <= 0.0:
        logger.warning(f"Autocorrelation of a constant or single-sample series (N={n})")
        return AutocorrResult(tau=1.0, window=0, rho=np.ones(1), n_samples=n, low_confidence=True)

    rho = cov / cov[0]
    taus = 1.0 + 2.0 * np.cumsum(rho[1:])
    lags = np.arange(1, n)
    satisfied = np.flatnonzero(lags >= c * taus)
    if satisfied.size:
        k = int(satisfied[0])
    else:
        k = n - 2
        low_confidence = True
    if low_confidence:
        logger.warning(f"Low-confidence autocorrelation estimate (N={n}, window={k + 1})")
    return AutocorrResult(
        tau=float(taus[k]),
        window=int(lags[k]),
        rho=rho[: k + 2],
        n_samples=n,
        low_confidence=low_confidence,
    )


@dataclass
class ObservableEstimate:
    """Cross-chain statistics of one observable."""

    name: str
    chain_means: np.ndarray
    pooled_mean: float
    std: float
    mae: Optional[float] = None
    reference: Optional[float] = None


def estimate_observable(
    chains: Sequence[ChainSample], name: str, reference: Optional[float] = None
) -> ObservableEstimate:
    """
    Per-chain means, pooled mean, cross-chain standard deviation (ddof=0) and the
    maximum absolute error against a reference value.
    """
    if not chains:
        raise NumericalError("no chains to estimate from")
    means = np.array([np.mean(chain.observables[name]) for chain in chains])
    lengths = np.array([len(chain.observables[name]) for chain in chains])
    pooled = float(np.sum(means * lengths) / np.sum(lengths))
    mae = None if reference is None else float(np.max(np.abs(means - reference)))
    return ObservableEstimate(
        name=name,
        chain_means=means,
        pooled_mean=pooled,
        std=float(np.std(means)),
        mae=mae,
        reference=reference,
    )


@dataclass
class ProposalHistogram:
    """Weighted (Hamming distance, delta-epsilon) histogram of one proposal row."""

    weights: np.ndarray
    eps_edges: np.ndarray
    self_mass: float

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def hamming_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def rows(self) -> Iterator[Dict[str, float]]:
        """Nonzero bins; under/overflow bins have an infinite edge."""
        lower = np.concatenate([[-np.inf], self.eps_edges])
        upper = np.concatenate([self.eps_edges, [np.inf]])
        for d, b in zip(*np.nonzero(self.weights)):
            yield {
                "hamming": int(d),
                "delta_eps_lo": float(lower[b]),
                "delta_eps_hi": float(upper[b]),
                "weight": float(self.weights[d, b]),
            }


def proposal_histogram(
    row: np.ndarray,
    dist: GroundStateDistribution,
    i: int,
    basis: SectorBasis,
    eps_range: Tuple[float, float] = (-10.0, 10.0),
    width: float = 0.5,
) -> ProposalHistogram:
    """
    Bin every S_j != S_i with weight Q(S_i, S_j) by Hamming distance and
    delta-epsilon = log10(P(S_i) / P(S_j)).
    """
    edges = np.arange(eps_range[0], eps_range[1] + 0.5 * width, width)
    distances = hamming_many(basis.mask(i), basis.states)
    p = np.maximum(dist.probabilities, PROBABILITY_FLOOR)
    delta_eps = np.log10(p[i]) - np.log10(p)
    eps_bins = np.digitize(delta_eps, edges)

    weights = np.zeros((basis.n_qubits + 1, len(edges) + 1))
    others = np.arange(len(basis)) != i
    np.add.at(weights, (distances[others], eps_bins[others]), row[others])
    return ProposalHistogram(weights=weights, eps_edges=edges, self_mass=float(row[i]))


def fit_scaling(points: Sequence[Tuple[float, float]]) -> ScalingFit:
    """
    Least-squares fit of delta(N) = a 2^(-k N) in the log2 domain.

    Raises:
        NumericalError: For fewer than two points or a nonpositive delta
    """
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or len(data) < 2:
        raise NumericalError("a scaling fit needs at least two (N, delta) points")
    if np.any(data[:, 1] <= 0):
        raise NumericalError("spectral gaps must be positive to fit log2 delta")

    sizes, log_delta = data[:, 0], np.log2(data[:, 1])
    slope, intercept = np.polyfit(sizes, log_delta, 1)
    residual = float(np.sqrt(np.mean((intercept + slope * sizes - log_delta) ** 2)))
    return ScalingFit(
        a=float(2.0 ** intercept),
        k=float(-slope),
        residual=residual,
        points=[(float(n), float(d)) for n, d in data],
    )


def tau_threshold(
    taus: Sequence[float], gaps: Sequence[float], delta_eff: float, c: float
) -> Optional[float]:
    """First grid tau with gap >= c * delta_eff; None when the grid never reaches it."""
    for tau, gap in zip(taus, gaps):
        if gap >= c * delta_eff:
            return float(tau)
    return None


def effective_runtime_ratio(
    fit_c: ScalingFit, fit_q: ScalingFit, t_sc: float, t_sq: float, n: float
) -> float:
    """(a_q t_sc) / (a_c t_sq) * 2^((k_c - k_q) N)."""
    return float((fit_q.a * t_sc) / (fit_c.a * t_sq) * 2.0 ** ((fit_c.k - fit_q.k) * n))


@dataclass
class GapScan:
    """Spectral gap of a quantum kernel along a tau grid."""

    taus: np.ndarray
    gaps: np.ndarray

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.gaps))

    @property
    def best_gap(self) -> float:
        return float(self.gaps[self.best_index])

    @property
    def best_tau(self) -> float:
        return float(self.taus[self.best_index])


def quantum_gap(
    spectra: Union[Spectrum, Sequence[Spectrum]], target: TargetDistribution, tau: float
) -> float:
    """Gap of the quantum kernel at one tau, averaged over the kernel spectra."""
    if isinstance(spectra, Spectrum):
        spectra = [spectra]
    q = np.mean([np.abs(evolution_matrix(spec, tau)) ** 2 for spec in spectra], axis=0)
    return spectral_gap(build_transition_matrix(q, target))


def _quantum_gap_task(args: Tuple) -> float:
    return quantum_gap(*args)


def scan_quantum_gap(
    spectra: Union[Spectrum, Sequence[Spectrum]],
    target: TargetDistribution,
    taus: Sequence[float],
    workers: int = 1,
    progress: bool = False,
) -> GapScan:
    """Spectral gap of the Quantum kernel at every tau of a grid."""
    taus = np.asarray(taus, dtype=float)
    if taus.size == 0:
        raise NumericalError("tau grid is empty")
    tasks = [(spectra, target, float(tau)) for tau in taus]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            gaps = list(tqdm(pool.map(_quantum_gap_task, tasks), total=len(tasks), disable=not progress))
    else:
        gaps = [_quantum_gap_task(task) for task in tqdm(tasks, disable=not progress)]
    scan = GapScan(taus=taus, gaps=np.asarray(gaps))
    logger.debug(f"Gap scan over {len(taus)} tau values: best {scan.best_gap:.6g} at tau={scan.best_tau:g}")
    return scan


def chi_square_row_test(draws: Sequence[int], row: np.ndarray) -> Tuple[float, float]:
    """
    Goodness of fit of sampled move indices against a proposal row.

    Bins expecting fewer than five draws are pooled into one.

    Returns:
        (chi-square statistic, p-value); p is 0 when a draw lands where the row is zero
    """
    counts = np.bincount(np.asarray(draws, dtype=np.int64), minlength=len(row))
    support = row > 0
    if np.any(counts[~support]):
        return float("inf"), 0.0
    observed = counts[support].astype(float)
    expected = row[support] / row[support].sum() * counts.sum()
    sparse_bins = expected < MIN_EXPECTED_COUNT
    if np.any(sparse_bins):
        observed = np.append(observed[~sparse_bins], observed[sparse_bins].sum())
        expected = np.append(expected[~sparse_bins], expected[sparse_bins].sum())
    if expected.size == 1:
        return 0.0, 1.0
    result = stats.chisquare(observed, expected)
    return float(result.statistic), float(result.pvalue)


def autocorr_summaries(chains: Sequence[ChainSample], name: str) -> List[AutocorrSummary]:
    return [integrated_autocorr(chain.observables[name]).summary() for chain in chains]
