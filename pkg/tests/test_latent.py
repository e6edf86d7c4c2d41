import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kswgd.errors import ContractError, DivergenceError
from kswgd.experiments import linear_sde_transition, simulate_linear_sde, slow_fast_system
from kswgd.latent import (
    LatentKoopman,
    fit_koopman_latent,
    fit_latent_map,
    lift_polynomial,
    predict_latent,
)
from kswgd.pairs import SnapshotPairs
from kswgd.systems import make_rng


def affine_rollout(K, z0, n):
    """Iterate ``z <- b + z W`` with ``[b; W]`` the coordinate columns of a degree-one K."""
    d = K.shape[0] - 1
    b, W = K[0, 1:], K[1:, 1:]
    z = np.array(z0, float)
    for _ in range(n):
        z = b + z @ W
    assert z.shape[-1] == d
    return z


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), D=st.integers(2, 6))
def test_full_rank_round_trip(seed, D):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((3 * D, D)) + rng.standard_normal(D)
    enc = fit_latent_map(S, D)
    np.testing.assert_allclose(enc.decode(enc.encode(S)), S, atol=1e-10)


def test_round_trip_rank_deficient_full_dimension():
    S = np.zeros((10, 3))
    S[:, 0] = np.arange(10.0)
    enc = fit_latent_map(S, 3)
    np.testing.assert_allclose(enc.decode(enc.encode(S)), S, atol=1e-12)


def test_latent_map_checks():
    with pytest.raises(ContractError):
        fit_latent_map(np.zeros((10, 3)), 4)
    with pytest.raises(ContractError):
        fit_latent_map(np.zeros((2, 3)), 2)
    S = np.zeros((10, 3))
    S[:, 0] = np.arange(10.0)
    with pytest.raises(ContractError):
        fit_latent_map(S, 2)


def test_projection_onto_leading_direction():
    t = np.linspace(-1, 1, 50)
    S = np.column_stack([t, 2 * t, np.zeros_like(t)])
    enc = fit_latent_map(S, 1)
    np.testing.assert_allclose(np.abs(enc.projection[:, 0]), [1, 2, 0] / np.sqrt(5), atol=1e-12)


def test_lift_polynomial_layout():
    z = np.array([2.0, 3.0])
    phi = lift_polynomial(z, 2)
    assert phi.shape == (6,)
    assert phi[0] == 1.0
    np.testing.assert_array_equal(phi[1:3], z)
    assert sorted(phi[3:].tolist()) == [4.0, 6.0, 9.0]
    assert lift_polynomial(np.ones((5, 3)), 1).shape == (5, 4)
    with pytest.raises(ContractError):
        lift_polynomial(z, 0)


def test_linear_dynamics_recovered_with_degree_one_lift():
    rng = make_rng(0)
    W = np.array([[0.9, 0.1], [-0.05, 0.8]])
    X = rng.standard_normal((2000, 2))
    Y = X @ W + 0.5
    model = fit_koopman_latent(SnapshotPairs(X, Y, 0.1), p=1, reg=0.0)
    np.testing.assert_allclose(model.K[1:, 1:], W, atol=1e-10)
    np.testing.assert_allclose(model.K[0, 1:], [0.5, 0.5], atol=1e-10)


def test_degree_one_rollout_is_iterated_affine_map():
    rng = make_rng(1)
    X = rng.standard_normal((500, 3))
    Y = X @ (0.8 * np.eye(3)) + 0.1 * rng.standard_normal((500, 3))
    model = fit_koopman_latent((X, Y, 0.1), p=1, reg=1e-3)
    z0 = rng.standard_normal((7, 3))
    for n in (0, 1, 2, 5, 10):
        np.testing.assert_allclose(predict_latent(model, z0, n), affine_rollout(model.K, z0, n),
                                   rtol=0, atol=1e-10)


def test_power_path_is_repeated_matrix_product():
    rng = make_rng(2)
    X = rng.standard_normal((400, 2))
    Y = 0.7 * X + 0.1 * X**2
    model = fit_koopman_latent((X, Y, 0.1), p=2)
    z0 = np.array([0.3, -0.2])
    expect = (lift_polynomial(z0, 2) @ np.linalg.matrix_power(model.K, 4))[1:3]
    np.testing.assert_allclose(predict_latent(model, z0, 4, power_k=True), expect, atol=1e-12)


def test_single_vector_and_zero_steps():
    K = np.eye(3)
    model = LatentKoopman(K, 1, 2, 0.1)
    z = np.array([1.0, 2.0])
    np.testing.assert_array_equal(predict_latent(model, z, 0), z)
    np.testing.assert_array_equal(predict_latent(model, z, 3), z)
    with pytest.raises(ContractError):
        predict_latent(model, z, -1)
    with pytest.raises(ContractError):
        predict_latent(model, np.ones(3), 1)


def test_divergence_reports_step():
    K = np.zeros((6, 6))
    K[3, 1] = 1e200  # z1' = z1^2 * 1e200
    model = LatentKoopman(K, 2, 2, 0.1)
    with pytest.raises(DivergenceError) as info:
        predict_latent(model, np.array([1.0, 0.0]), 5)
    assert info.value.step == 2


def test_slow_fast_transition_matches_simulation_moments():
    _, _, basis, rates, noise = slow_fast_system(5, [0.5], 10.0, 0.3, 0.3, seed=0)
    F, C = linear_sde_transition(basis, rates, noise, 0.1)
    x0 = np.full((20_000, 5), 1.0)
    out = simulate_linear_sde(F, C, x0, 3, seed=1)
    np.testing.assert_allclose(out[3].mean(axis=0), np.linalg.matrix_power(F, 3) @ x0[0], atol=0.01)
    Q = C @ C.T
    np.testing.assert_allclose(np.cov(out[1], rowvar=False), Q, atol=2e-3)
