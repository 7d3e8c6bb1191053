import math

import numpy as np
import pytest

from helpers import PLANE_VALUES, plane, random_model, ramp_model
from reachavoid import (Explicit, Fixed, MarkovPolicy, Model, PointMass, Row, SolverPreconditionError,
                        TimeGrid, TransitionLaw, UniformRamp, ValueLayer, bellman_apply,
                        build_augmented, convergence_params, extract_policy, find_separation,
                        lift_policy, monotonicity_check, solve_improved, value_iterate)
from reachavoid.solve import evaluate_policy, policy_value, value_iterate_layers


def chain_model(first, second, horizon):
    """x --first--> y --second--> goal, one action each."""
    stay = TransitionLaw((Row(2, 1.0, PointMass(1.0)),))
    kernel = {(0, "go"): TransitionLaw((Row(1, 1.0, first),)),
              (1, "go"): TransitionLaw((Row(2, 1.0, second),)),
              (2, "stay"): stay}
    return Model(("x", "y", "goal"), (("go",), ("go",), ("stay",)), kernel, Fixed(()), {2}, horizon)


def sum_of_uniforms_cdf(t, a, b):
    """P(U1 + U2 <= t) for independent U1 ~ U(0, a), U2 ~ U(0, b), a <= b."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= a, t**2 / (2 * a * b), 0.0)
    out = np.where((t > a) & (t <= b), (t - a / 2) / b, out)
    out = np.where((t > b) & (t <= a + b), 1 - (a + b - t) ** 2 / (2 * a * b), out)
    return np.where(t > a + b, 1.0, out)


# ---------------------------------------------------------------- operator

def test_bellman_apply_ramp():
    m = ramp_model(mu=2.0, horizon=3.0)
    grid = TimeGrid(3.0, 720)
    aug = build_augmented(m, 2)
    zero = ValueLayer(1, np.zeros((2, 721)))
    v = bellman_apply(aug, "go", zero, 0, 0, grid)
    assert v[0] == 0.0
    assert v[240] == pytest.approx(0.5, abs=1 / (2 * 720))
    assert v[-1] == pytest.approx(1.0, abs=1e-12)


def test_bellman_apply_zero_on_obstacle_and_layer_check():
    m = plane("b2")
    grid = TimeGrid(18.0, 90)
    aug = build_augmented(m, 3)
    nxt = ValueLayer(1, np.zeros((5, 91)))
    assert not bellman_apply(aug, "beta", nxt, 1, 0, grid).any()
    with pytest.raises(ValueError, match="next layer"):
        bellman_apply(aug, "beta", ValueLayer(2, nxt.values), 0, 0, grid)


def test_convolution_matches_sum_of_uniforms():
    m = chain_model(UniformRamp(2.0), UniformRamp(3.0), 6.0)
    grid = TimeGrid(6.0, 600)
    res = solve_improved(m, grid, delta=0.5, iterations=3)
    exact = sum_of_uniforms_cdf(grid.times, 2.0, 3.0)
    assert np.max(np.abs(res.value.values[0] - exact)) < 2 / grid.steps


def test_convolution_of_point_masses_is_sharp():
    m = chain_model(PointMass(1.0), PointMass(1.5), 4.0)
    grid = TimeGrid(4.0, 160)
    w = solve_improved(m, grid, delta=0.5, iterations=3).value.values[0]
    t = grid.times
    assert np.all(w[t < 2.5 - grid.dt - 1e-9] == 0.0)
    assert np.all(w[t > 2.5 - 1e-9] == 1.0)


def test_policy_value_is_consistent_across_grids():
    # continuous sojourn laws only: a point mass puts a jump in the curves and
    # cross-grid sup-norm comparisons stop being first order
    M = 60
    for seed in range(6):
        m = random_model(700 + seed, horizon=3.0, point_masses=False)
        pol = MarkovPolicy.deterministic(m, [[a[0] for a in m.actions]])
        aug = build_augmented(m, 60)
        fine = evaluate_policy(aug, TimeGrid(3.0, 4 * M), lift_policy(pol, m, 60))[0][:, ::4]
        nxt = ValueLayer(1, fine)
        for x in m.regular(0):
            LV = bellman_apply(aug, m.actions[x][0], nxt, x, 0, TimeGrid(3.0, M))
            assert np.max(np.abs(fine[x] - LV)) <= 5 / M


def test_first_iterate_closed_form():
    m = plane("b1")
    grid = TimeGrid(18.0, 720)
    snaps, _ = value_iterate(build_augmented(m, 2), grid, 1)
    assert snaps[0][3, -1] == pytest.approx(0.4 * 18 / 19, abs=1e-12)


# ---------------------------------------------------------------- iteration

@pytest.mark.parametrize("seed", range(6))
def test_textbook_and_sweep_agree(seed):
    m = random_model(seed)
    grid = TimeGrid(m.horizon, 60)
    snaps, _ = value_iterate(build_augmented(m, 8), grid, 8)
    for n in (1, 2, 5, 8):
        res = solve_improved(m, grid, delta=0.1, iterations=n)
        assert np.max(np.abs(res.value.values - snaps[n - 1])) <= 1e-12


def test_single_action_iteration_is_policy_evaluation():
    m = chain_model(UniformRamp(2.0), UniformRamp(3.0), 6.0)
    grid = TimeGrid(6.0, 120)
    aug = build_augmented(m, 4)
    snaps, _ = value_iterate(aug, grid, 4)
    pol = MarkovPolicy.deterministic(m, [["go", "go", "stay"]])
    lifted = lift_policy(pol, m, 4)
    np.testing.assert_allclose(evaluate_policy(aug, grid, lifted)[0], snaps[-1], atol=1e-14)


def test_iterates_increase_and_stay_in_range():
    m = random_model(11)
    grid = TimeGrid(m.horizon, 80)
    W = [value_iterate_layers(build_augmented(m, 10), grid, n) for n in (1, 2, 3, 4)]
    for a, b in zip(W, W[1:]):
        assert np.all(a[:6] <= b[:6] + 1e-15)
    for w in W:
        assert w.min() >= 0 and w.max() <= 1
        assert np.all(np.diff(w, axis=-1) >= -1e-15)


def test_target_one_obstacle_zero():
    m = plane("b3")
    grid = TimeGrid(18.0, 90)
    W = value_iterate_layers(build_augmented(m, 6), grid, 4)
    for k in range(6):
        assert np.all(W[k, 4] == 1.0)
        for x in m.obstacle(k):
            assert np.all(W[k, x] == 0.0)


# ---------------------------------------------------------------- constants

def test_convergence_params_plane_regression():
    sep = find_separation(plane(), 1.0)
    assert convergence_params(sep, 5.1e-6) == 582


def test_convergence_params_limits():
    sep = find_separation(plane(), 1.0)
    assert convergence_params(sep, 1 - 1e-15) == sep.kTilde
    step = math.ceil(math.log(2) / abs(math.log(sep.beta)))
    for rho in (0.3, 1e-3, 1e-6, 1e-9):
        diff = convergence_params(sep, rho / 2) - convergence_params(sep, rho)
        assert abs(diff - step) <= 1
    with pytest.raises(ValueError):
        convergence_params(sep, 0.0)


def test_error_bound_law():
    m = plane("b1")
    grid = TimeGrid(18.0, 90)
    sep = find_separation(m, 1.0)
    for n in (5, 19, 40):
        res = solve_improved(m, grid, iterations=n)
        assert res.errorBound == sep.contraction ** (n // 19)
        assert res.residual >= 0


def test_bound_stop_runs_planned_count():
    m = ramp_model(mu=2.0, horizon=3.0)
    res = solve_improved(m, TimeGrid(3.0, 30), delta=1.0, stopRule="bound")
    assert res.iterations == res.planned
    assert res.planned == convergence_params(find_separation(m, 1.0), 1.02e-5 / 2)


def test_not_separated_is_a_precondition_error():
    with pytest.raises(SolverPreconditionError, match="smaller delta"):
        solve_improved(plane(), TimeGrid(18.0, 90), delta=20.0)


def test_unknown_stop_rule():
    with pytest.raises(ValueError):
        solve_improved(plane(), TimeGrid(18.0, 90), stopRule="forever")


# ---------------------------------------------------------------- plane model

@pytest.mark.parametrize("scenario", ["b1", "b2", "b3"])
def test_plane_values_regression(scenario):
    res = solve_improved(plane(scenario), TimeGrid(18.0, 720))
    np.testing.assert_allclose(res.final()[:4], PLANE_VALUES[scenario], atol=5e-7)
    assert res.value.values[:4, 0].max() == 0.0


def test_zero_horizon():
    res = solve_improved(plane("b1", horizon=0.0), TimeGrid(0.0, 720))
    assert np.all(res.final()[:4] == 0.0)


def test_grid_refinement_is_first_order():
    m = plane("b1")
    vals = [solve_improved(m, TimeGrid(18.0, M)).final()[:4] for M in (90, 180, 360)]
    d1 = np.max(np.abs(vals[0] - vals[1]))
    d2 = np.max(np.abs(vals[1] - vals[2]))
    assert d1 < 10 / 90
    assert d1 / d2 > 1.5


def test_extracted_policy_attains_solver_value():
    m = plane("b2")
    grid = TimeGrid(18.0, 360)
    res = solve_improved(m, grid)
    pol = extract_policy(res, m)
    v = policy_value(m, grid, pol, layers=res.iterations + 40)
    assert np.max(np.abs(v[:4, -1] - res.final()[:4])) < 1e-6


def test_extracted_policy_layers_follow_argmax():
    m = plane("b3")
    res = solve_improved(m, TimeGrid(18.0, 90))
    pol = extract_policy(res, m)
    names = pol.action_names(m)
    assert len(names) == len(res.argmax)
    for n, rec in enumerate(res.argmax):
        for x in m.regular(n):
            assert names[n][x] == m.actions[x][rec[x]]


def test_single_action_model_gives_the_unique_policy():
    m = chain_model(UniformRamp(2.0), UniformRamp(3.0), 6.0)
    pol = extract_policy(solve_improved(m, TimeGrid(6.0, 60), delta=0.5), m)
    assert all(row == ["go", "go", "stay"] for row in pol.action_names(m))


# ---------------------------------------------------------------- layer orderings

def test_shrinking_schedule():
    m = plane().replace(obstacles=Explicit(({0, 1}, {0}), {0}))
    rep = monotonicity_check(m, TimeGrid(18.0, 90), 6)
    assert rep.direction == "shrinking"
    assert rep.ok


def test_growing_schedule():
    m = plane().replace(obstacles=Explicit(({0}, {0, 1}), {0, 1}))
    rep = monotonicity_check(m, TimeGrid(18.0, 90), 6)
    assert rep.direction == "growing"
    assert rep.ok


def test_fixed_schedule_both_orderings():
    rep = monotonicity_check(plane("b1"), TimeGrid(18.0, 90), 4)
    assert rep.direction == "both"
    assert rep.constant_from == 0
    assert rep.ok


def test_unnested_periodic_schedule_is_not_applicable():
    rep = monotonicity_check(plane("b3"), TimeGrid(18.0, 90), 4)
    assert rep.direction == "not_applicable"
    assert not rep.applicable
