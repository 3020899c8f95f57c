"""Euler-Maruyama stepping, ensembles, and sampling diagnostics."""

import math
from dataclasses import replace

import numpy as np
import pytest

from nrkramers.errors import (
    ConfigError,
    GuardViolationError,
    PreconditionViolationError,
    UnreliableEstimateError,
)
from nrkramers.landscape import catalog, zero_skew
from nrkramers.simulate import (
    EnsembleResult,
    SimConfig,
    default_dt,
    default_guard_radius,
    equilibrium_potential,
    gibbs_histogram,
    hitting_time,
    run_ensemble,
    step,
    trajectory_seed,
)
from nrkramers.topology import find_critical_points

DW = catalog(1.0)["doublewell2d"]
DW_REV = catalog(0.0)["doublewell2d"]


def _quadratic2d():
    from nrkramers.landscape import LandscapeSpec, QuadraticPotential
    return LandscapeSpec(name="quadratic2d", dim=2,
                         potential=QuadraticPotential(2))


def cfg(**kw):
    base = dict(epsilon=0.1, dt=1e-3, n_traj=4, master_seed=7)
    base.update(kw)
    return SimConfig(**base)


# ---------------------------------------------------------------------------
# single step


def test_step_drift_example():
    # drift at (0.5, 0) is -(grad U + ell) = (0.375, -0.375)
    x = step([0.5, 0.0], DW, cfg(), np.zeros(2))
    assert np.allclose(x, [0.500375, -0.000375], atol=1e-15)


def test_step_fixed_point_at_minimum():
    x = step([1.0, 0.0], DW, cfg(), np.zeros(2))
    assert np.allclose(x, [1.0, 0.0], atol=1e-15)


def test_step_adjoint_noop_for_zero_skew():
    g = np.array([0.3, -0.7])
    a = step([0.5, 0.2], DW_REV, cfg(adjoint=True), g)
    b = step([0.5, 0.2], DW_REV, cfg(adjoint=False), g)
    assert np.array_equal(a, b)


def test_step_adjoint_flips_rotation():
    a = step([0.5, 0.0], DW, cfg(adjoint=True), np.zeros(2))
    # adjoint drift is -(grad U - ell)
    assert np.allclose(a, [0.500375, 0.000375], atol=1e-15)


def test_noise_free_flow_reaches_minimum():
    c = cfg(epsilon=1e-300, t_max=1e9)
    x = np.array([0.5, 0.0])
    zero = np.zeros(2)
    for _ in range(20000):
        x = step(x, DW, c, zero)
    assert np.allclose(x, [1.0, 0.0], atol=1e-6)


def test_step_guard_violation():
    with pytest.raises(GuardViolationError):
        step([0.5, 0.0], DW, cfg(guard_radius=0.5), np.array([10.0, 10.0]))


# ---------------------------------------------------------------------------
# configuration


def test_sim_config_validation():
    for bad in (dict(epsilon=0.0), dict(dt=-1e-3), dict(n_traj=0),
                dict(ball_radius=0.0), dict(t_max=1e-3),
                dict(guard_radius=0.0)):
        with pytest.raises(ConfigError):
            cfg(**bad)


def test_radius_defaults_to_epsilon():
    assert cfg(epsilon=0.2).radius == 0.2
    assert cfg(ball_radius=0.3).radius == 0.3


def test_default_dt_and_guard():
    crits = find_critical_points(DW, [[-2.0, 2.0], [-2.0, 2.0]])
    assert default_dt(crits) == pytest.approx(1e-3)  # capped
    assert default_guard_radius(crits) == pytest.approx(3.0)


def test_trajectory_seed_stability():
    # distinct indices give distinct streams; the derivation is pure
    s = {trajectory_seed(42, i) for i in range(64)}
    assert len(s) == 64
    assert trajectory_seed(42, 3) == trajectory_seed(42, 3)
    assert trajectory_seed(42, 3) != trajectory_seed(43, 3)


# ---------------------------------------------------------------------------
# ensembles

TARGETS = [[1.0, 0.0]]
START = np.array([-1.0, 0.0])


@pytest.fixture(scope="module")
def small_ensemble():
    c = SimConfig(epsilon=0.25, dt=1e-3, n_traj=60, master_seed=11,
                  ball_radius=0.3, t_max=400.0)
    return c, run_ensemble(START, TARGETS, DW, c)


def test_ensemble_deterministic_across_threads(small_ensemble):
    c, res = small_ensemble
    again = run_ensemble(START, TARGETS, DW, c, n_threads=3)
    assert res.to_json() == again.to_json()
    assert res.to_csv() == again.to_csv()


def test_single_trajectory_matches_hitting_time(small_ensemble):
    c, res = small_ensemble
    one = replace(c, n_traj=1)
    t, censored = hitting_time(START, TARGETS, DW, one)
    assert t == res.hitting_times[0]
    assert censored == bool(res.censored[0])


def test_hitting_times_positive_and_multiple_of_dt(small_ensemble):
    c, res = small_ensemble
    ok = ~res.censored
    assert np.all(res.hitting_times[ok] > 0)
    steps = res.hitting_times[ok] / c.dt
    assert np.allclose(steps, np.round(steps), atol=1e-6)
    assert res.mean == pytest.approx(
        float(np.mean(res.hitting_times[ok])), rel=1e-12)


def test_stderr_matches_exponential_scaling():
    # hitting times are approximately exponential, so std ~ mean
    c = SimConfig(epsilon=0.25, dt=1e-3, n_traj=400, master_seed=3,
                  ball_radius=0.3, t_max=400.0)
    res = run_ensemble(START, TARGETS, DW, c)
    n = len(res.hitting_times) - res.n_censored
    assert 0.8 < res.stderr * math.sqrt(n) / res.mean < 1.2


def test_immediate_capture_takes_one_step():
    # quadratic flow: |x| shrinks by dt per step with negligible noise
    quad = _quadratic2d()
    c = SimConfig(epsilon=1e-8, dt=1e-3, n_traj=1, master_seed=5,
                  ball_radius=0.9995, t_max=1.0)
    t, censored = hitting_time([1.0, 0.0], [[0.0, 0.0]], quad, c)
    assert t == c.dt
    assert not censored


def test_start_inside_target_rejected():
    with pytest.raises(PreconditionViolationError):
        hitting_time([1.0, 0.0], TARGETS, DW, cfg(ball_radius=0.2))


def test_guard_violation_reports_prefix():
    c = SimConfig(epsilon=0.1, dt=1e-3, n_traj=4, master_seed=1,
                  ball_radius=0.1, t_max=10.0, guard_radius=0.7)
    with pytest.raises(GuardViolationError) as err:
        run_ensemble([0.5, 0.0], [[5.0, 0.0]], DW, c)
    assert err.value.prefix_steps is not None
    assert err.value.prefix_steps >= 1


def test_censoring_limit_enforced():
    c = SimConfig(epsilon=0.1, dt=1e-3, n_traj=40, master_seed=9,
                  ball_radius=0.1, t_max=0.05)
    with pytest.raises(UnreliableEstimateError):
        run_ensemble(START, TARGETS, DW, c)


def test_explicit_target_radii():
    quad = _quadratic2d()
    c = SimConfig(epsilon=1e-8, dt=1e-3, n_traj=1, master_seed=5,
                  t_max=1.0)
    t1, _ = hitting_time([1.0, 0.0], [([0.0, 0.0], 0.9995)], quad, c)
    assert t1 == c.dt


def test_dt_refinement_within_confidence():
    base = SimConfig(epsilon=0.25, dt=2e-3, n_traj=300, master_seed=21,
                     ball_radius=0.3, t_max=400.0)
    coarse = run_ensemble(START, TARGETS, DW, base)
    fine = run_ensemble(START, TARGETS, DW, replace(base, dt=1e-3))
    gap = abs(coarse.mean - fine.mean)
    half = (coarse.ci95[1] - coarse.ci95[0]) / 2 + \
        (fine.ci95[1] - fine.ci95[0]) / 2
    assert gap <= half


# ---------------------------------------------------------------------------
# occupation statistics


def test_gibbs_histogram_quadratic():
    spec = _quadratic2d()
    c = SimConfig(epsilon=0.5, dt=5e-3, n_traj=1, master_seed=13, t_max=1.0)
    hist = gibbs_histogram(spec, c, burn_in=2.0, duration=2000.0, bins=30,
                           box=[[-3.0, 3.0], [-3.0, 3.0]], n_chains=16)
    assert hist.empirical.shape == (30, 30)
    assert hist.reference.sum() == pytest.approx(1.0, abs=1e-12)
    assert hist.tv_distance < 0.05


def test_gibbs_requires_long_duration():
    c = SimConfig(epsilon=0.5, dt=5e-3, n_traj=1, master_seed=13, t_max=1.0)
    with pytest.raises(ConfigError):
        gibbs_histogram(DW, c, burn_in=10.0, duration=20.0, bins=10,
                        box=[[-2.0, 2.0], [-2.0, 2.0]])


# ---------------------------------------------------------------------------
# equilibrium potential


def test_equilibrium_complement_is_exact():
    c = SimConfig(epsilon=0.15, dt=1e-3, n_traj=200, master_seed=31,
                  ball_radius=0.1, t_max=500.0)
    A = [[-1.0, 0.0]]
    B = [[1.0, 0.0]]
    x = [-0.5, 0.0]
    ab = equilibrium_potential(x, A, B, DW, c)
    ba = equilibrium_potential(x, B, A, DW, c)
    assert ab.probability + ba.probability == pytest.approx(1.0, abs=1e-15)
    assert ab.n_effective == ba.n_effective
    assert ab.probability > 0.5  # starting on the A side


def test_equilibrium_rejects_overlapping_sets():
    c = cfg(ball_radius=2.0)
    with pytest.raises(ConfigError):
        equilibrium_potential([0.0, 2.5], [[-1.0, 0.0]], [[1.0, 0.0]], DW, c)


def test_ensemble_result_serialization(small_ensemble):
    _, res = small_ensemble
    doc = res.to_dict()
    assert doc["n_traj"] == 60
    csv = res.to_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "index,seed,hitting_time,censored"
    assert len(lines) == 61
