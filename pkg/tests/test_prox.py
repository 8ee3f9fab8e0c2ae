import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from proxmax import (
    DomainError,
    InnerCapError,
    LambdaBoundError,
    LambdaSchedule,
    LevelGuard,
    LevelSetError,
    Point,
    ProxConfig,
    clarke_subdiff,
    dist,
    eval_f,
    hull_distance,
    log_map,
    log_positive,
    make_problem,
    prox_step,
    residual,
    solve,
    with_prox_term,
)
from proxmax.oracle import GridSpec, grid_minimize

LP1 = log_positive(1)


def _pt(x):
    return Point(LP1, [x])


# schedules


def test_schedule_constant_in_range():
    s = LambdaSchedule(lower=0.3, upper=2.0, constant=1.0)
    assert s.at(0) == 1.0
    assert s.at(10) == 1.0


def test_schedule_rejects_weight_at_or_below_lower():
    with pytest.raises(LambdaBoundError):
        LambdaSchedule(lower=0.3, upper=2.0, constant=0.3)
    with pytest.raises(LambdaBoundError):
        LambdaSchedule(lower=0.3, upper=2.0, constant=0.1)
    with pytest.raises(LambdaBoundError):
        LambdaSchedule(lower=0.3, upper=2.0, constant=2.5)


def test_schedule_value_list_repeats_last():
    s = LambdaSchedule(lower=0.0, upper=10.0, values=[1.0, 2.0, 3.0])
    assert [s.at(k) for k in range(5)] == [1.0, 2.0, 3.0, 3.0, 3.0]
    with pytest.raises(LambdaBoundError):
        LambdaSchedule(lower=0.0, upper=10.0, values=[1.0, 0.0])


def test_schedule_default_scales_lipschitz():
    s = LambdaSchedule.default(0.34, 1e6)
    assert s.at(0) == pytest.approx(0.51, rel=1e-12)
    # degenerate curvature falls back to a unit weight
    assert LambdaSchedule.default(0.0, 1e6).at(0) == 1.0
    # the cap wins when the scaled weight would exceed it
    assert LambdaSchedule.default(10.0, 12.0).at(0) == 12.0


def test_prox_config_validation():
    with pytest.raises(ValueError):
        ProxConfig(outer_tol=-1.0)
    with pytest.raises(ValueError):
        ProxConfig(max_outer=0)


# residual


def test_residual_is_weighted_step_length():
    p_k, p_next = _pt(np.e), _pt(1.0)
    assert residual(p_next, p_k, 2.0) == pytest.approx(2.0, rel=1e-14)
    assert residual(p_next, p_k, 0.5) == pytest.approx(0.5 * dist(p_k, p_next), rel=1e-14)
    with pytest.raises(LambdaBoundError):
        residual(p_next, p_k, 0.0)


# single proximal steps against closed forms


def test_prox_step_abs_shrinks_by_one():
    prob = make_problem("abs")
    m = prob.objective.manifold
    cfg = ProxConfig()
    p_next, iters = prox_step(prob.objective, Point(m, [5.0]), 1.0, cfg)
    assert_allclose(p_next.coords, [4.0], atol=1e-9)
    assert iters >= 1


def test_prox_step_abs_clamps_at_zero():
    prob = make_problem("abs")
    m = prob.objective.manifold
    p_next, _ = prox_step(prob.objective, Point(m, [0.5]), 1.0, ProxConfig())
    assert_allclose(p_next.coords, [0.0], atol=1e-9)


def test_prox_step_quadratic_closed_form():
    prob = make_problem("quadratic")
    m = prob.objective.manifold
    for lam, x0 in [(1.0, 1.0), (3.0, 1.0), (0.5, -2.0)]:
        p_next, _ = prox_step(prob.objective, Point(m, [x0]), lam, ProxConfig())
        assert_allclose(p_next.coords, [lam * x0 / (1.0 + lam)], atol=1e-10)


def test_prox_step_requires_weight_above_curvature(log_example):
    with pytest.raises(LambdaBoundError):
        prox_step(log_example.objective, _pt(0.5), 0.2, ProxConfig(), lipschitz=0.34)


def test_prox_step_rejects_unknown_curvature():
    prob = make_problem("quadratic")
    m = prob.objective.manifold
    obj = prob.objective
    # strip the declared bound
    from dataclasses import replace

    bare = replace(obj, lipschitz_bound=None)
    with pytest.raises(LambdaBoundError):
        prox_step(bare, Point(m, [1.0]), 1.0, ProxConfig())


def test_prox_step_out_of_domain_start(log_example):
    with pytest.raises(DomainError):
        prox_step(log_example.objective, _pt(0.05), 0.6, ProxConfig(), lipschitz=0.34)


def test_prox_step_fixed_at_minimizer(log_example):
    p_next, _ = prox_step(log_example.objective, _pt(1.0), 0.6, ProxConfig(), lipschitz=0.34)
    assert dist(p_next, _pt(1.0)) <= 1e-9


def test_prox_step_captures_kink_from_start(log_example):
    p_next, _ = prox_step(log_example.objective, _pt(0.3125), 0.51, ProxConfig(), lipschitz=0.34)
    assert dist(p_next, _pt(1.0)) <= 1e-6


def test_prox_step_matches_grid_search(log_example):
    # dual route: the inner solver against a dense grid plus golden refinement
    obj = log_example.objective
    lam = 0.6
    for x0 in (0.5, 2.0, 3.5):
        p_k = _pt(x0)
        p_next, _ = prox_step(obj, p_k, lam, ProxConfig(), lipschitz=0.34)
        shifted = with_prox_term(obj, p_k, lam)
        grid = GridSpec(lower=np.array([0.1251]), upper=np.array([4.0]), points_per_dim=5001)
        g_pt, g_val = grid_minimize(lambda q: eval_f(shifted, q)[0], grid, LP1)
        assert dist(p_next, g_pt) <= 1e-6
        assert eval_f(shifted, p_next)[0] <= g_val + 1e-10


# full runs


def test_solve_log_example_reaches_kink(log_example):
    sched = LambdaSchedule(lower=0.34, upper=1e6, constant=0.51)
    trace = solve(log_example.objective, _pt(0.3125), sched, ProxConfig())
    assert trace.termination.kind == "stationary"
    assert dist(trace.final_point(), _pt(1.0)) <= 1e-8
    assert trace.iterations <= 10


def test_solve_abs_walks_unit_steps():
    prob = make_problem("abs")
    m = prob.objective.manifold
    sched = LambdaSchedule(lower=0.0, upper=10.0, constant=1.0)
    trace = solve(prob.objective, Point(m, [5.0]), sched, ProxConfig())
    assert trace.termination.kind == "stationary"
    xs = [r.point.coords[0] for r in trace.records]
    assert_allclose(xs, [4.0, 3.0, 2.0, 1.0, 0.0, 0.0], atol=1e-8)


def test_solve_quadratic_halves_each_step():
    prob = make_problem("quadratic")
    m = prob.objective.manifold
    sched = LambdaSchedule(lower=0.0, upper=10.0, constant=1.0)
    trace = solve(prob.objective, Point(m, [1.0]), sched, ProxConfig())
    assert trace.termination.kind == "stationary"
    xs = [r.point.coords[0] for r in trace.records]
    assert_allclose(xs[:3], [0.5, 0.25, 0.125], atol=1e-10)
    # residual lam*|x_k - x_{k+1}| = 2^-(k+1) crosses 1e-8 at k=27
    assert trace.iterations == 27


def test_solve_stationary_start_stops_immediately(log_example):
    sched = LambdaSchedule(lower=0.34, upper=1e6, constant=0.51)
    trace = solve(log_example.objective, _pt(1.0), sched, ProxConfig())
    assert trace.termination.kind == "stationary"
    assert trace.iterations == 1
    assert trace.records[0].residual <= 1e-8


def test_solve_max_iters():
    prob = make_problem("quadratic")
    m = prob.objective.manifold
    sched = LambdaSchedule(lower=0.0, upper=10.0, constant=1.0)
    trace = solve(prob.objective, Point(m, [1.0]), sched, ProxConfig(max_outer=3))
    assert trace.termination.kind == "max_iters"
    assert trace.iterations == 3


def test_solve_invalid_start_raises(log_example):
    sched = LambdaSchedule(lower=0.34, upper=1e6, constant=0.51)
    with pytest.raises(DomainError):
        solve(log_example.objective, _pt(0.05), sched, ProxConfig())


def test_trace_invariants(log_example):
    obj = log_example.objective
    lam = 0.6
    sched = LambdaSchedule(lower=0.34, upper=1e6, constant=lam)
    cfg = ProxConfig()
    start = _pt(2.5)
    trace = solve(obj, start, sched, cfg)
    assert trace.termination.kind == "stationary"

    f_prev, _ = eval_f(obj, start)
    p_prev = start
    sum_sq = 0.0
    for rec in trace.records:
        # residual is the weighted step length
        assert rec.residual == pytest.approx(lam * rec.step_dist, rel=1e-12, abs=1e-300)
        assert rec.step_dist == pytest.approx(dist(p_prev, rec.point), rel=1e-12, abs=1e-300)
        # monotone descent with the proximal quadratic as margin
        assert rec.f_value <= f_prev - 0.5 * lam * rec.step_dist**2 + 1e-7
        # optimality certificate: the weighted return tangent lies in the hull
        cert = lam * log_map(rec.point, p_prev)
        hull = clarke_subdiff(obj, rec.point)
        assert hull_distance(hull, cert) <= cfg.inner_tol + 1e-9
        sum_sq += rec.step_dist**2
        f_prev, p_prev = rec.f_value, rec.point

    f0, _ = eval_f(obj, start)
    assert sum_sq <= 2.0 / lam * (f0 - trace.final_f()) + 1e-6
    assert trace.iterations == len(trace.records)
    assert trace.final_f() == trace.records[-1].f_value


# level guard


def test_level_guard_error_mode(log_example):
    sched = LambdaSchedule(lower=0.34, upper=1e6, constant=0.51)
    # reference with smaller objective value than the start
    with pytest.raises(LevelSetError):
        solve(log_example.objective, _pt(0.3125), sched, ProxConfig(), level_ref=_pt(1.0))


def test_level_guard_accepts_higher_reference(log_example):
    sched = LambdaSchedule(lower=0.34, upper=1e6, constant=0.51)
    trace = solve(
        log_example.objective, _pt(0.75), sched, ProxConfig(), level_ref=_pt(0.3125)
    )
    assert trace.termination.kind == "stationary"


def test_level_guard_warn_mode(log_example):
    sched = LambdaSchedule(lower=0.34, upper=1e6, constant=0.51)
    cfg = ProxConfig(level_guard=LevelGuard.WARN)
    with pytest.warns(UserWarning):
        trace = solve(log_example.objective, _pt(0.3125), sched, cfg, level_ref=_pt(1.0))
    assert trace.termination.kind == "stationary"


def test_level_guard_off_mode(log_example):
    sched = LambdaSchedule(lower=0.34, upper=1e6, constant=0.51)
    cfg = ProxConfig(level_guard=LevelGuard.OFF)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        trace = solve(log_example.objective, _pt(0.3125), sched, cfg, level_ref=_pt(1.0))
    assert trace.termination.kind == "stationary"


# multi-dimensional subproblems hit the inner iteration cap at kinks


def test_inner_cap_carries_best_iterate():
    prob = make_problem({"name": "paper_example_product", "n": 2})
    obj = prob.objective
    start = prob.start
    with pytest.raises(InnerCapError) as info:
        prox_step(obj, start, 0.51, ProxConfig(), lipschitz=0.34)
    err = info.value
    assert err.iterations == ProxConfig().max_inner
    shifted = with_prox_term(obj, start, 0.51)
    h_best, _ = eval_f(shifted, err.best)
    h_start, _ = eval_f(shifted, start)
    assert h_best < h_start


def test_solve_reports_inner_cap_as_error():
    prob = make_problem({"name": "paper_example_product", "n": 2})
    sched = LambdaSchedule(lower=0.34, upper=1e6, constant=0.51)
    trace = solve(prob.objective, prob.start, sched, ProxConfig())
    assert trace.termination.kind == "error"
    assert "inner" in trace.termination.message
    assert dist(trace.final_point(), prob.start) == 0.0
