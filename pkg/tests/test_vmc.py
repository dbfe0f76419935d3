"""Tests for local energies, SR, Adam and the VMC loop."""

import numpy as np
import pytest

from conftest import chain, two_site_energy
from qavmc.exceptions import NumericalError, OutOfSupportError
from qavmc.schemas import VmcSpec
from qavmc.services.hamiltonians import build_hubbard
from qavmc.services.diagnostics import scan_quantum_gap
from qavmc.services.markov import TargetDistribution
from qavmc.services.proposals import QuantumKernel, make_classical_kernel
from qavmc.services.rbm import RbmParams, init_params, log_psi
from qavmc.services.spectral import eigendecompose, ground_distribution
from qavmc.services.vmc import (
    AdamState,
    adam_step,
    energy_and_gradient,
    exact_energy,
    local_energies,
    local_energy,
    sr_matrix,
    sr_precondition,
    vmc_optimize,
)


@pytest.fixture(scope="module")
def hubbard_u4():
    return build_hubbard(chain(2), 1.0, 4.0)


def random_params(n_visible, seed=0, sigma=0.3):
    return init_params(n_visible, 1, np.random.default_rng(seed), sigma=sigma)


def test_local_energy_of_an_eigenstate_is_constant(hubbard_u4):
    spec = eigendecompose(hubbard_u4)
    log_values = np.log(spec.eigenvectors[:, 0].astype(complex))
    energies = local_energies(hubbard_u4, log_values, range(spec.dimension))
    assert np.allclose(energies, two_site_energy(4.0))
    assert local_energy(hubbard_u4, log_values, 1).real == pytest.approx(two_site_energy(4.0))


def test_local_energy_where_psi_vanishes(hubbard_u4):
    log_values = np.zeros(4, dtype=complex)
    log_values[2] = -np.inf
    with pytest.raises(OutOfSupportError):
        local_energies(hubbard_u4, log_values, [2])


def test_exact_energy_is_variational(hubbard4):
    e0 = eigendecompose(hubbard4).eigenvalues[0]
    for seed in range(3):
        assert exact_energy(hubbard4, random_params(8, seed)) >= e0 - 1e-10


def _exact_weights(hamiltonian, params):
    log_values = log_psi(params, hamiltonian.basis.spins)
    w = np.exp(2.0 * (log_values.real - np.max(log_values.real)))
    return np.arange(hamiltonian.dimension), w / w.sum()


def test_weighted_estimate_matches_the_exact_energy_and_its_gradient(hubbard_u4):
    params = random_params(4, seed=3)
    indices, weights = _exact_weights(hubbard_u4, params)
    estimate = energy_and_gradient(hubbard_u4, params, indices, weights)
    assert estimate.energy == pytest.approx(exact_energy(hubbard_u4, params))

    theta = params.flatten()
    h = 1e-6
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += h
        down[k] -= h
        numeric = (
            exact_energy(hubbard_u4, RbmParams.from_vector(up, 4, 4))
            - exact_energy(hubbard_u4, RbmParams.from_vector(down, 4, 4))
        ) / (2 * h)
        assert estimate.gradient[k] == pytest.approx(numeric, abs=1e-5)


def test_energy_needs_samples(hubbard_u4):
    with pytest.raises(NumericalError):
        energy_and_gradient(hubbard_u4, random_params(4), [])


class TestStochasticReconfiguration:
    def test_single_parameter(self):
        derivatives = np.array([[1.0], [-1.0]], dtype=complex)
        weights = np.array([0.5, 0.5])
        assert sr_matrix(derivatives, weights)[0, 0] == pytest.approx(1.0)
        assert sr_precondition(derivatives, weights, np.array([2.0]), 1.0)[0] == pytest.approx(1.0)

    def test_constant_derivatives_reduce_to_the_shift(self):
        derivatives = np.ones((3, 2), dtype=complex)
        weights = np.full(3, 1.0 / 3.0)
        x = sr_precondition(derivatives, weights, np.array([0.5, -1.0]), 0.5)
        assert np.allclose(x, [1.0, -2.0])

    def test_failed_solve_falls_back_to_the_gradient(self):
        derivatives = np.array([[np.nan], [1.0]], dtype=complex)
        gradient = np.array([0.3])
        x = sr_precondition(derivatives, np.array([0.5, 0.5]), gradient, 0.1)
        assert np.array_equal(x, gradient)

    def test_shift_must_be_positive(self):
        with pytest.raises(NumericalError):
            sr_precondition(np.ones((2, 1)), np.array([0.5, 0.5]), np.ones(1), 0.0)


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        state = AdamState.zeros(3)
        theta = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(adam_step(state, theta, np.zeros(3)), theta)
        assert state.t == 1

    def test_first_step_has_the_learning_rate(self):
        state = AdamState.zeros(1, learning_rate=0.1)
        assert adam_step(state, np.array([1.0]), np.array([4.0]))[0] == pytest.approx(0.9, rel=1e-6)

    def test_quadratic_bowl(self):
        state = AdamState.zeros(2, learning_rate=0.05)
        theta = np.array([1.0, -1.5])
        for _ in range(2000):
            theta = adam_step(state, theta, 2.0 * theta)
        assert np.all(np.abs(theta) < 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(NumericalError):
            adam_step(AdamState.zeros(2), np.zeros(2), np.zeros(3))


class TestOptimize:
    def test_exact_mode_stays_above_the_ground_energy(self, hubbard_u4):
        spec = VmcSpec(mode="exact", alpha_density=1, iterations=20, learning_rate=0.05)
        result = vmc_optimize(hubbard_u4, None, spec, seed=4)
        assert len(result.trajectory) == 20
        assert np.all(result.energies >= two_site_energy(4.0) - 1e-9)
        assert result.final_states is None

    def test_sampled_mode_is_reproducible(self, hubbard_u4):
        spec = VmcSpec(mode="sampled", alpha_density=1, iterations=3, n_samples=200, n_chains=2)
        kernel = make_classical_kernel("ExcitationSD", hubbard_u4.basis)
        observable = {"n0": hubbard_u4.basis.occupations[:, 0].astype(float)}
        first = vmc_optimize(hubbard_u4, kernel, spec, seed=8, observables=observable)
        second = vmc_optimize(hubbard_u4, kernel, spec, seed=8, observables=observable)
        assert np.array_equal(first.energies, second.energies)
        assert all(0.0 <= row["acceptance_rate"] <= 1.0 for row in first.trajectory)
        assert all(0.0 <= row["n0"] <= 1.0 for row in first.trajectory)
        assert len(first.final_states) == 2

    def test_sampled_mode_needs_a_kernel(self, hubbard_u4):
        with pytest.raises(NumericalError):
            vmc_optimize(hubbard_u4, None, VmcSpec(mode="sampled", iterations=1), seed=0)

    @pytest.mark.slow
    def test_exact_mode_converges_on_two_sites(self, hubbard2):
        spec = VmcSpec(mode="exact", iterations=2000)
        result = vmc_optimize(hubbard2, None, spec, seed=1)
        assert abs(result.energies[-1] - two_site_energy(8.0)) < 1e-3

    @pytest.mark.slow
    def test_sampled_quantum_mode_converges_on_four_sites(self, hubbard4):
        spectrum = eigendecompose(hubbard4)
        target = TargetDistribution.from_ground(ground_distribution(spectrum))
        scan = scan_quantum_gap(spectrum, target, np.arange(0.5, 10.01, 0.5))
        kernel = QuantumKernel(spectrum, tau=scan.best_tau)

        spec = VmcSpec(mode="sampled", iterations=2000, n_samples=1000)
        result = vmc_optimize(hubbard4, kernel, spec, seed=5)
        assert exact_energy(hubbard4, result.params) - spectrum.eigenvalues[0] < 1e-2
