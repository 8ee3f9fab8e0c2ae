import numpy as np
import pytest
from numpy.testing import assert_allclose

from proxmax import Point, eval_f, log_positive, make_problem, norm
from proxmax.oracle import fd_gradient
from proxmax.problems import BUILTIN_NAMES, region_samples


def test_builtin_registry():
    assert BUILTIN_NAMES == ("abs", "paper_example", "paper_example_product", "quadratic")
    for name in BUILTIN_NAMES:
        prob = make_problem(name)
        assert prob.name == name
        assert prob.objective.in_domain(prob.start)


def test_make_problem_accepts_dict_with_params():
    prob = make_problem({"name": "paper_example", "epsilon": 0.25})
    assert prob.metadata["epsilon"] == 0.25
    assert not prob.objective.in_domain(Point(log_positive(1), [0.2]))


def test_make_problem_unknown_name_lists_builtins():
    with pytest.raises(ValueError, match="abs.*quadratic"):
        make_problem("nope")
    with pytest.raises(ValueError):
        make_problem({"no_name": True})
    with pytest.raises(ValueError):
        make_problem(42)


def test_make_problem_rejects_bad_params():
    with pytest.raises(ValueError):
        make_problem({"name": "paper_example", "epsilon": 0.5})
    with pytest.raises(ValueError):
        make_problem({"name": "paper_example", "epsilon": 0.0})
    with pytest.raises(ValueError):
        make_problem({"name": "paper_example", "bogus": 1.0})


def test_log_example_shape(log_example):
    obj = log_example.objective
    assert obj.manifold.dim == 1
    assert_allclose(obj.params.values, [0.0, 1.0])
    assert_allclose(log_example.start.coords, [0.3125])
    assert log_example.region_lower[0] == 0.125
    assert log_example.region_upper[0] == 4.0
    meta = log_example.metadata
    assert meta["q"] == 0.3125
    assert meta["delta"] == 0.4
    assert meta["c"] == pytest.approx(0.375476949363598, rel=1e-15)
    assert_allclose(meta["minimizer"], [1.0])


def test_log_example_interpolates_branches(log_example):
    # the parameter mixes the two branches affinely, so interior values
    # never exceed the endpoint maximum
    obj = log_example.objective
    p = Point(log_positive(1), [2.0])
    v0 = obj.phi(p, 0.0)
    v1 = obj.phi(p, 1.0)
    assert obj.phi(p, 0.25) == pytest.approx(0.75 * v0 + 0.25 * v1, rel=1e-14)


def test_product_problem_sums_coordinates():
    prob1 = make_problem("paper_example")
    prob2 = make_problem({"name": "paper_example_product", "n": 2})
    assert len(prob2.objective.params.values) == 4
    rng = np.random.default_rng(3)
    m1 = prob1.objective.manifold
    for _ in range(20):
        x, y = np.exp(rng.uniform(-1.5, 1.2, 2))
        f2, _ = eval_f(prob2.objective, Point(prob2.objective.manifold, [x, y]))
        fx, _ = eval_f(prob1.objective, Point(m1, [x]))
        fy, _ = eval_f(prob1.objective, Point(m1, [y]))
        assert f2 == pytest.approx(fx + fy, rel=1e-13)


def test_product_problem_guards():
    with pytest.raises(ValueError):
        make_problem({"name": "paper_example_product", "n": 0})
    with pytest.raises(ValueError):
        make_problem({"name": "paper_example_product", "n": 13})


def test_abs_problem_values():
    prob = make_problem("abs")
    obj = prob.objective
    m = obj.manifold
    assert obj.declared_sup_lipschitz() == 0.0
    for x in (-2.5, 0.0, 3.0):
        f, _ = eval_f(obj, Point(m, [x]))
        assert f == pytest.approx(abs(x))


def test_quadratic_problem_values():
    prob = make_problem("quadratic")
    obj = prob.objective
    m = obj.manifold
    assert obj.declared_sup_lipschitz() == 0.0
    f, _ = eval_f(obj, Point(m, [3.0]))
    assert f == pytest.approx(4.5)


def test_builtin_gradients_match_finite_differences(rng):
    for name in BUILTIN_NAMES:
        prob = make_problem(name)
        obj = prob.objective
        pts = region_samples(prob, 12, rng)
        for tau in obj.params.values:
            for p in pts:
                if abs(p.coords[0]) < 0.05 and name == "abs":
                    continue  # kink of the branch itself
                exact = obj.grad_phi(p, float(tau))
                approx = fd_gradient(lambda q, t=float(tau): obj.phi(q, t), p)
                assert norm(p, exact - approx) <= 1e-5 * max(1.0, norm(p, exact))


def test_region_samples_one_dim(log_example):
    pts = region_samples(log_example, 10)
    assert len(pts) == 10
    xs = [p.coords[0] for p in pts]
    assert all(0.125 < x < 4.0 for x in xs)
    assert xs == sorted(xs)


def test_region_samples_multi_dim_needs_rng():
    prob = make_problem({"name": "paper_example_product", "n": 2})
    with pytest.raises(ValueError):
        region_samples(prob, 10)
    pts = region_samples(prob, 10, np.random.default_rng(0))
    assert len(pts) == 10
    for p in pts:
        assert prob.objective.in_domain(p)
