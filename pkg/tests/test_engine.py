import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kswgd.dictionary import MonomialDictionary
from kswgd.engine import (
    RUN_RECORD_COLUMNS,
    ParticleEnsemble,
    Probes,
    StopRule,
    kswgd_step,
    movement_rate,
    run_kswgd,
    velocities,
    velocity,
    well_coverage,
)
from kswgd.errors import BlowupError, ContractError
from kswgd.koopman import SpectralModel, kernel_grad1
from kswgd.metrics import GaussianOracle
from kswgd.oracles import exact_ou_model
from kswgd.systems import QUADRUPLE_WELL_MINIMA, make_rng


def brute_force_velocity(model, P, i, include_self=True):
    """The literal double sum over kernel gradients."""
    return sum(kernel_grad1(model, P[i], P[j]) for j in range(len(P)) if include_self or j != i)


@pytest.fixture(scope="module")
def ou4():
    return exact_ou_model(4)


def test_velocity_matches_pairwise_sum(ou4):
    P = make_rng(0).normal(1.0, 0.8, size=(25, 1))
    V = velocities(ou4, P)
    for i in range(len(P)):
        np.testing.assert_allclose(V[i], brute_force_velocity(ou4, P, i), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(velocity(ou4, P, i), V[i], rtol=1e-12, atol=1e-12)
    V0 = velocities(ou4, P, include_self=False)
    for i in (0, 7):
        np.testing.assert_allclose(V0[i], brute_force_velocity(ou4, P, i, False), rtol=1e-10, atol=1e-12)


def test_velocity_matches_pairwise_sum_2d():
    rng = make_rng(1)
    d = MonomialDictionary(2, 3)
    X = rng.standard_normal((200, 2))
    C = rng.standard_normal((d.n_features, 3))
    model = SpectralModel([0.5, 1.0, 2.0], C, d, 0.1, X)
    P = rng.standard_normal((12, 2))
    V = velocities(model, P)
    for i in range(len(P)):
        np.testing.assert_allclose(V[i], brute_force_velocity(model, P, i), rtol=1e-10, atol=1e-12)


def test_single_particle_at_even_extremum_is_still(ou4):
    # with only the even mode He_2 retained, x = 0 is a critical point
    model = exact_ou_model(1, ranks=[2])
    np.testing.assert_array_equal(velocities(model, [[0.0]]), [[0.0]])


def test_symmetric_pair_moves_oppositely():
    model = exact_ou_model(1)
    V = velocities(model, [[-0.7], [0.7]])
    assert V[0, 0] == -V[1, 0]


def test_fixed_point_leaves_particles_unchanged():
    model = exact_ou_model(1, ranks=[2])
    P = np.array([[0.0], [0.0]])
    np.testing.assert_array_equal(kswgd_step(P, model, 0.5), P)


def test_mean_moves_toward_target():
    # with only He_1 retained every particle moves by h * mean, so the mean
    # contracts by exactly (1 - h); higher modes overshoot from x = 3 at h = 0.5
    model = exact_ou_model(1)
    P = 3.0 + 0.1 * make_rng(2).standard_normal((200, 1))
    means = [P.mean()]
    for _ in range(10):
        P = kswgd_step(P, model, 0.5)
        means.append(P.mean())
    assert np.all(np.diff(np.abs(means)) < 0)
    np.testing.assert_allclose(means[-1], means[0] * 0.5**10, rtol=1e-10)


def test_step_is_linear_in_h(ou4):
    P = make_rng(3).normal(1.0, 1.0, size=(50, 1))
    d1 = kswgd_step(P, ou4, 0.3) - P
    d2 = kswgd_step(P, ou4, 0.6) - P
    np.testing.assert_allclose(d2, 2 * d1, rtol=1e-12, atol=1e-15)


def test_ensemble_counter_advances(ou4):
    ens = ParticleEnsemble(np.zeros((3, 1)) + 1.0, h=0.1)
    nxt = kswgd_step(ens, ou4, 0.1)
    assert nxt.iteration == 1 and ens.iteration == 0


def test_step_rejects_bad_inputs(ou4):
    with pytest.raises(ContractError):
        kswgd_step(np.ones((3, 1)), ou4, 0.0)
    with pytest.raises(ContractError):
        kswgd_step(np.ones((3, 2)), ou4, 0.1)
    with pytest.raises(ContractError):
        SpectralModel(np.zeros(0), np.zeros((5, 0)), MonomialDictionary(1, 4), 1.0, np.zeros((3, 1)))


def test_blowup_names_particle(ou4):
    P = np.array([[0.0], [np.inf], [1.0]])
    with pytest.raises(BlowupError) as info:
        velocities(ou4, P, include_self=False)
    assert info.value.particle in (0, 1, 2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(2, 30))
def test_permutation_equivariance(seed, m):
    model = exact_ou_model(4)
    rng = np.random.default_rng(seed)
    P = rng.normal(0.5, 1.2, size=(m, 1))
    perm = rng.permutation(m)
    a = kswgd_step(P, model, 0.2)[perm]
    b = kswgd_step(P[perm], model, 0.2)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


def test_movement_rate_cases():
    P = np.zeros((1, 2))
    assert movement_rate(P, P) == 0.0
    assert movement_rate(P, np.array([[3.0, 4.0]])) == 5.0
    assert movement_rate(np.zeros((2, 1)), np.array([[1.0], [3.0]])) == 2.0
    with pytest.raises(ContractError):
        movement_rate(np.zeros((2, 1)), np.zeros((3, 1)))


def test_well_coverage_cases():
    assert well_coverage(np.ones((5, 2)), QUADRUPLE_WELL_MINIMA, 0.4) == 1.0
    assert well_coverage(np.zeros((1, 2)), QUADRUPLE_WELL_MINIMA, 0.4) == 0.0
    assert well_coverage(np.array([[1.0, -1.0], [0.0, 0.0]]), QUADRUPLE_WELL_MINIMA, 0.4) == 0.5
    with pytest.raises(ContractError):
        well_coverage(np.zeros((1, 2)), np.zeros((0, 2)), 0.4)


def test_run_loop_contract(ou4):
    P = np.linspace(-1, 1, 10)[:, None]
    with pytest.raises(ContractError):
        run_kswgd(P, ou4, 0.1, 0)
    _, rec = run_kswgd(P, ou4, 0.1, 1)
    assert len(rec) == 1 and rec.rows[0]["iter"] == 1


def test_run_is_deterministic(ou4):
    P = make_rng(4).normal(2.0, 0.5, size=(40, 1))
    a, ra = run_kswgd(P, ou4, 0.1, 50)
    b, rb = run_kswgd(P, ou4, 0.1, 50)
    assert np.array_equal(a, b)
    assert np.array_equal(ra.column("movement_rate"), rb.column("movement_rate"))


def test_stop_rule_fires(ou4):
    P = make_rng(5).normal(2.0, 0.5, size=(100, 1))
    _, rec = run_kswgd(P, ou4, 0.1, 2000, StopRule(movement_max=1e-4))
    assert rec.converged_at == len(rec) < 2000
    assert rec.column("movement_rate")[-1] <= 1e-4


def test_compound_rule_needs_both_thresholds():
    rule = StopRule.movement_and_coverage()
    assert not rule({"movement_rate": 0.001, "coverage": 0.5})
    assert not rule({"movement_rate": 0.1, "coverage": 1.0})
    assert rule({"movement_rate": 0.01, "coverage": 0.95})
    assert not StopRule.max_iterations()({"movement_rate": 0.0, "coverage": 1.0})


def test_converged_movement_is_non_increasing(ou4):
    P = make_rng(6).normal(2.0, 0.5, size=(200, 1))
    _, rec = run_kswgd(P, ou4, 0.1, 400)
    mv = rec.column("movement_rate")[-100:]
    assert np.all(mv[1:] <= 1.1 * mv[:-1])


def test_probes_and_csv(tmp_path, ou4):
    P = make_rng(7).normal(2.0, 0.5, size=(50, 1))
    probes = Probes(kl_oracle=GaussianOracle([0.0], [[1.0]]))
    _, rec = run_kswgd(P, ou4, 0.1, 20, probes=probes, snapshot_stride=7)
    assert np.all(np.isfinite(rec.column("kl_proxy")))
    assert np.all(np.isnan(rec.column("coverage")))
    rec.to_csv(tmp_path / "rr.csv")
    lines = (tmp_path / "rr.csv").read_text().splitlines()
    assert lines[0] == ",".join(RUN_RECORD_COLUMNS) and len(lines) == 21
    assert [it for it, _ in rec.snapshots] == [0, 7, 14, 20]
    rec.snapshots_to_csv(tmp_path / "snap.csv")
    snap = (tmp_path / "snap.csv").read_text().splitlines()
    assert snap[0] == "iter,particle_id,x1" and len(snap) == 1 + 4 * 50


def test_support_warning(ou4):
    # a lone odd mode pushes a far particle further out
    model = exact_ou_model(1, ranks=[3])
    P = np.array([[60.0], [61.0]])  # quadrature nodes reach |x| ~ 14.4
    with pytest.warns(RuntimeWarning, match="support radius"):
        run_kswgd(P, model, 1e-9, 2)


def test_blowup_keeps_partial_record():
    model = exact_ou_model(1, ranks=[3])
    P = np.array([[5.0], [6.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(BlowupError) as info:
            run_kswgd(P, model, 10.0, 100)
    assert len(info.value.record) >= 1


def test_projection_hook():
    theta = np.linspace(0.5, 2.5, 20)
    P = np.column_stack([np.cos(theta), np.sin(theta)])
    d = MonomialDictionary(2, 2)
    C = make_rng(8).standard_normal((d.n_features, 2))
    model = SpectralModel([1.0, 2.0], C, d, 0.1, P)
    out, _ = run_kswgd(P, model, 0.01, 5,
                       projection=lambda Q: Q / np.linalg.norm(Q, axis=1, keepdims=True))
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)


def test_step_cost_is_at_most_quadratic_in_particles():
    model = exact_ou_model(4)
    times = []
    for M in (100, 200, 400):
        P = make_rng(M).standard_normal((M, 1))
        best = np.inf
        for _ in range(30):
            t = time.perf_counter()
            kswgd_step(P, model, 0.1)
            best = min(best, time.perf_counter() - t)
        times.append(best)
    slope = np.polyfit(np.log([100, 200, 400]), np.log(times), 1)[0]
    assert slope <= 2.0 * 2
