"""Tests for the two-block RBM wavefunction."""

import itertools

import numpy as np
import pytest

from qavmc.exceptions import NumericalError
from qavmc.schemas import RecordHeader, VmcCheckpoint
from qavmc.services.rbm import (
    RbmParams,
    from_checkpoint,
    grad_log_psi,
    init_params,
    log2cosh,
    log_derivatives,
    log_psi,
    to_checkpoint,
)


def random_params(n_visible=3, n_hidden=2, seed=5, scale=0.4):
    rng = np.random.default_rng(seed)
    return RbmParams(
        a=rng.normal(scale=scale, size=n_visible),
        b=rng.normal(scale=scale, size=n_hidden),
        W=rng.normal(scale=scale, size=(n_hidden, n_visible)),
        a_phase=rng.normal(scale=scale, size=n_visible),
        b_phase=rng.normal(scale=scale, size=n_hidden),
        W_phase=rng.normal(scale=scale, size=(n_hidden, n_visible)),
    )


def all_spins(n):
    return np.array(list(itertools.product((-1, 1), repeat=n)), dtype=float)


def hidden_sum(a, b, W, s):
    """ln of the explicit sum over every +-1 hidden configuration."""
    total = 0.0
    for h in itertools.product((-1, 1), repeat=len(b)):
        h = np.array(h, dtype=float)
        total += np.exp(a @ s + h @ (b + W @ s))
    return np.log(total)


def test_log_psi_matches_the_explicit_hidden_sum():
    params = random_params()
    spins = all_spins(3)
    values = log_psi(params, spins)
    for s, value in zip(spins, values):
        assert value.real == pytest.approx(hidden_sum(params.a, params.b, params.W, s))
        assert value.imag == pytest.approx(hidden_sum(params.a_phase, params.b_phase, params.W_phase, s))


def test_zero_parameters_give_the_hidden_multiplicity():
    params = RbmParams.from_vector(np.zeros(2 * (4 + 8 + 32)), 4, 8)
    values = log_psi(params, all_spins(4))
    assert np.allclose(values.real, 8 * np.log(2.0))
    assert np.allclose(values.imag, 8 * np.log(2.0))


def test_log2cosh_is_stable():
    assert log2cosh(np.array([1000.0]))[0] == pytest.approx(1000.0)
    x = np.linspace(-3, 3, 7)
    assert np.allclose(log2cosh(x), np.log(2 * np.cosh(x)))


def test_derivatives_match_finite_differences():
    params = random_params()
    spins = all_spins(3)
    theta = params.flatten()
    analytic = log_derivatives(params, spins)
    h = 1e-6
    for k in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[k] += h
        down[k] -= h
        numeric = (
            log_psi(RbmParams.from_vector(up, 3, 2), spins)
            - log_psi(RbmParams.from_vector(down, 3, 2), spins)
        ) / (2 * h)
        assert np.allclose(analytic[:, k], numeric, atol=1e-6)


def test_amplitude_derivatives_are_real_and_phase_derivatives_imaginary():
    params = random_params()
    derivs = log_derivatives(params, all_spins(3))
    half = params.size // 2
    assert np.allclose(derivs[:, :half].imag, 0.0)
    assert np.allclose(derivs[:, half:].real, 0.0)


def test_named_gradients_have_parameter_shapes():
    params = random_params()
    grads = grad_log_psi(params, np.array([1, -1, 1]))
    for name, value in params.arrays().items():
        assert grads[name].shape == value.shape


def test_vector_round_trip_and_size_check():
    params = random_params()
    restored = RbmParams.from_vector(params.flatten(), 3, 2)
    for name, value in params.arrays().items():
        assert np.array_equal(getattr(restored, name), value)
    with pytest.raises(NumericalError):
        RbmParams.from_vector(np.zeros(5), 3, 2)


def test_init_params():
    params = init_params(6, 2, np.random.default_rng(0), sigma=0.01)
    assert params.n_hidden == 12
    assert params.alpha_density == 2
    assert np.all(params.a == 0) and np.all(params.b_phase == 0)
    assert 0.005 < np.std(params.W) < 0.02


def test_invalid_inputs():
    params = random_params()
    with pytest.raises(NumericalError):
        log_psi(params, np.ones(4))
    broken = params.copy()
    broken.W[0, 0] = np.nan
    with pytest.raises(NumericalError):
        log_psi(broken, np.ones(3))
    with pytest.raises(NumericalError):
        RbmParams(**{**params.arrays(), "W": np.zeros((3, 3))})


def test_checkpoint_round_trip():
    params = random_params()
    header = RecordHeader(config_hash="0123456789abcdef", seed=11)
    checkpoint = VmcCheckpoint.parse_raw(to_checkpoint(params, header).json())
    assert checkpoint.seed == 11
    restored = from_checkpoint(checkpoint)
    for name, value in params.arrays().items():
        assert np.allclose(getattr(restored, name), value)

    del checkpoint.arrays["W_phase"]
    with pytest.raises(NumericalError):
        from_checkpoint(checkpoint)
