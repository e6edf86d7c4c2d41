import numpy as np
import pytest

from kswgd.errors import ContractError, DivergenceError, InsufficientDataError, RenormalizationError
from kswgd.systems import (
    PotentialSpec,
    Trajectory,
    make_pairs_timeseries,
    make_rng,
    potential_grad,
    sample_ou_stationary,
    simulate_langevin,
    simulate_sphere_langevin,
    sphere_langevin_step,
    trajectory_to_csv,
    uniform_circle,
)


def test_quadruple_well_gradient():
    qw = PotentialSpec.quadruple_well()
    np.testing.assert_array_equal(potential_grad(qw, [1.0, 1.0]), [0.0, 0.0])
    np.testing.assert_array_equal(potential_grad(qw, [0.0, 0.0]), [0.0, 0.0])
    x, y = 0.3, -1.7
    np.testing.assert_allclose(potential_grad(qw, [x, y]), [4 * x * (x * x - 1), 4 * y * (y * y - 1)])


def test_gradient_matches_finite_difference_of_potential():
    rng = np.random.default_rng(0)
    prec = np.array([[2.0, 0.5], [0.5, 1.0]])
    specs = [PotentialSpec.quadruple_well(), PotentialSpec.ou_gaussian([0.5, -1.0], prec)]
    for spec in specs:
        for x in rng.uniform(-2, 2, size=(20, 2)):
            g = potential_grad(spec, x)
            fd = [(spec.potential(x + e) - spec.potential(x - e)) / 2e-6 for e in 1e-6 * np.eye(2)]
            np.testing.assert_allclose(g, np.ravel(fd), rtol=1e-6, atol=1e-6)


def test_ou_identity_precision_gradient():
    np.testing.assert_array_equal(potential_grad(PotentialSpec.ou_gaussian(dim=2), [2.0, -3.0]), [2.0, -3.0])


def test_invalid_specs():
    with pytest.raises(ContractError):
        PotentialSpec("quadruple_well", 3)
    with pytest.raises(ContractError):
        PotentialSpec.ou_gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(ContractError):
        potential_grad(PotentialSpec.quadruple_well(), [1.0, 2.0, 3.0])


def test_deterministic_gradient_flow_without_noise():
    spec = PotentialSpec.ou_gaussian(dim=1)
    traj = simulate_langevin(spec, [1.0], 0.01, 100, seed=0, noise_scale=0.0)
    np.testing.assert_allclose(traj.states[:, 0], 0.99 ** np.arange(101), rtol=1e-12)


def test_langevin_step_formula():
    spec = PotentialSpec.quadruple_well()
    x0, dt = np.array([0.9, 0.9]), 0.1
    traj = simulate_langevin(spec, x0, dt, 1, seed=5)
    xi = make_rng(5).standard_normal(2)
    np.testing.assert_allclose(traj.states[1], x0 - dt * spec.grad(x0) + np.sqrt(2 * dt) * xi)


def test_langevin_determinism():
    spec = PotentialSpec.quadruple_well()
    a = simulate_langevin(spec, [0.9, 0.9], 0.1, 200, seed=3).states
    b = simulate_langevin(spec, [0.9, 0.9], 0.1, 200, seed=3).states
    c = simulate_langevin(spec, [0.9, 0.9], 0.1, 200, seed=4).states
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_quadruple_well_trajectory_stays_bounded():
    traj = simulate_langevin(PotentialSpec.quadruple_well(), [0.9, 0.9], 0.1, 2500, seed=1)
    inside = np.all(np.abs(traj.states) <= 2.0, axis=1)
    assert inside.mean() >= 0.99


def test_divergence_reports_step():
    spec = PotentialSpec.quadruple_well()
    with pytest.raises(DivergenceError) as info:
        simulate_langevin(spec, [10.0, 10.0], 1.0, 50, seed=0, noise_scale=0.0)
    assert info.value.step >= 1


def test_ou_long_run_covariance():
    spec = PotentialSpec.ou_gaussian(dim=2)
    traj = simulate_langevin(spec, [0.0, 0.0], 0.01, 100_000, seed=11)
    cov = np.cov(traj.states[10_000:], rowvar=False)
    assert np.max(np.abs(cov - np.eye(2))) <= 0.1


def test_sphere_outputs_unit_norm():
    x0 = np.array([np.cos(0.3), np.sin(0.3)])
    traj = simulate_sphere_langevin(x0, 0.05, 500, seed=2)
    assert np.max(np.abs(np.linalg.norm(traj.states, axis=1) - 1.0)) <= 1e-9


def test_sphere_no_forces_constant():
    x0 = np.array([0.6, 0.8])
    traj = simulate_sphere_langevin(x0, 0.05, 20, seed=2, noise_scale=0.0)
    np.testing.assert_allclose(traj.states, np.tile(x0, (21, 1)), atol=1e-15)


def test_sphere_spreads_toward_uniform():
    x0 = np.tile([0.0, 1.0], (500, 1))
    out = simulate_sphere_langevin(x0, 0.05, 200, seed=4)
    R1 = np.linalg.norm(out[1].mean(axis=0))
    R200 = np.linalg.norm(out[200].mean(axis=0))
    assert R200 < R1
    assert R200 < 0.15


def test_sphere_input_checks():
    with pytest.raises(ContractError):
        simulate_sphere_langevin([1.0, 1.0], 0.05, 5, seed=0)
    with pytest.raises(RenormalizationError):
        # with no noise a point at the origin stays at zero norm
        sphere_langevin_step(np.zeros((1, 2)), 0.05, None, make_rng(0), noise_scale=0.0)


def test_pairs_from_trajectory():
    states = np.array([[0.0], [1.0], [2.0]])
    pairs = make_pairs_timeseries(Trajectory(states, 0.1))
    np.testing.assert_array_equal(pairs.X, [[0.0], [1.0]])
    np.testing.assert_array_equal(pairs.Y, [[1.0], [2.0]])
    assert pairs.dt == 0.1


def test_2501_states_give_2500_pairs():
    traj = simulate_langevin(PotentialSpec.quadruple_well(), [0.9, 0.9], 0.1, 2500, seed=0, substeps=10)
    pairs = make_pairs_timeseries(traj)
    assert pairs.n_pairs == 2500 and pairs.dt == 0.1


def test_pairs_need_two_states():
    with pytest.raises((InsufficientDataError, ContractError)):
        make_pairs_timeseries(Trajectory(np.zeros((1, 2)), 0.1))


def test_trajectory_csv(tmp_path):
    traj = simulate_langevin(PotentialSpec.quadruple_well(), [0.9, 0.9], 0.1, 10, seed=0)
    path = tmp_path / "traj.csv"
    trajectory_to_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2"
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1:], traj.states)
    np.testing.assert_allclose(data[:, 0], 0.1 * np.arange(11))


def test_stationary_and_circle_samplers():
    X = sample_ou_stationary(PotentialSpec.ou_gaussian([1.0], [[4.0]]), 20_000, seed=0)
    assert abs(X.mean() - 1.0) < 0.02 and abs(X.var() - 0.25) < 0.01
    C = uniform_circle(100, seed=0)
    np.testing.assert_allclose(np.linalg.norm(C, axis=1), 1.0)
    assert np.array_equal(C, uniform_circle(100, seed=0))


def test_substeps_one_matches_plain_scheme():
    spec = PotentialSpec.quadruple_well()
    a = simulate_langevin(spec, [0.9, 0.9], 0.1, 50, seed=1).states
    b = simulate_langevin(spec, [0.9, 0.9], 0.1, 50, seed=1, substeps=1).states
    assert np.array_equal(a, b)


def test_substeps_stabilize_coarse_recording():
    # plain Euler-Maruyama at dt = 0.1 escapes the quartic well for this seed
    spec = PotentialSpec.quadruple_well()
    with pytest.raises(DivergenceError):
        simulate_langevin(spec, [0.9, 0.9], 0.1, 2500, seed=0)
    traj = simulate_langevin(spec, [0.9, 0.9], 0.1, 2500, seed=0, substeps=10)
    assert traj.states.shape == (2501, 2) and np.all(np.abs(traj.states) < 3)
