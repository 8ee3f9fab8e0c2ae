"""Built-in problem instances used by the CLI and the test suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .manifold import Point, Tangent, euclidean, from_chart, log_positive
from .objective import MaxObjective, ParamSet

__all__ = [
    "BuiltinProblem",
    "BUILTIN_NAMES",
    "make_problem",
    "region_samples",
]

_MAX_PRODUCT_DIM = 12


@dataclass(frozen=True)
class BuiltinProblem:
    """An objective bundled with its default start and sampling region."""

    name: str
    objective: MaxObjective
    start: Point
    region_lower: np.ndarray
    region_upper: np.ndarray
    metadata: dict = field(default_factory=dict)


def _log_example_branches(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate branch values (ln x, -ln x + e^{-2x} - e^{-2})."""
    f1 = np.log(x)
    f2 = -np.log(x) + np.exp(-2.0 * x) - np.exp(-2.0)
    return f1, f2


def _log_example_branch_derivs(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d1 = 1.0 / x
    d2 = -1.0 / x - 2.0 * np.exp(-2.0 * x)
    return d1, d2


def paper_example(epsilon: float = 0.125) -> BuiltinProblem:
    """Half-line instance: f(x) = max(ln x, -ln x + e^{-2x} - e^{-2}).

    Lives on the log-metric positive half-line with admissible region
    (epsilon, inf); the two branches cross at the minimizer x = 1 where f
    vanishes.  Branch weights are affine in the parameter, so the grid
    {0, 1} represents the whole family of convex combinations exactly.
    """
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 0.3125:
        raise ValueError(f"epsilon must lie in (0, 0.3125), got {epsilon}")
    m = log_positive(1)

    def phi(p: Point, tau: float) -> float:
        f1, f2 = _log_example_branches(p.coords)
        return float((1.0 - tau) * f1[0] + tau * f2[0])

    def grad_phi(p: Point, tau: float) -> Tangent:
        d1, d2 = _log_example_branch_derivs(p.coords)
        flat = (1.0 - tau) * d1 + tau * d2
        return Tangent(p, p.coords**2 * flat)

    def guard(p: Point) -> bool:
        return bool(np.all(p.coords > epsilon))

    obj = MaxObjective(
        manifold=m,
        params=ParamSet(np.array([0.0, 1.0])),
        phi=phi,
        grad_phi=grad_phi,
        lipschitz_bound=None,
        domain_guard=guard,
    )
    q = 0.3125
    c = float(-np.log(0.75) + np.exp(-1.5) - np.exp(-2.0))
    return BuiltinProblem(
        name="paper_example",
        objective=obj,
        start=Point(m, [q]),
        region_lower=np.array([epsilon]),
        region_upper=np.array([4.0]),
        metadata={
            "epsilon": epsilon,
            "q": q,
            "c": c,
            "delta": 0.4,
            "minimizer": [1.0],
        },
    )


def paper_example_product(n: int = 2, epsilon: float = 0.125) -> BuiltinProblem:
    """n-fold product of the half-line instance.

    The objective is the sum over coordinates of the per-coordinate max,
    written as a max over all 2^n branch assignments (one parameter per
    bit pattern) so the hull machinery sees every locally active gradient.
    """
    n = int(n)
    if not 1 <= n <= _MAX_PRODUCT_DIM:
        raise ValueError(f"n must lie in [1, {_MAX_PRODUCT_DIM}], got {n}")
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 0.3125:
        raise ValueError(f"epsilon must lie in (0, 0.3125), got {epsilon}")
    m = log_positive(n)
    bit_weights = 2 ** np.arange(n)

    def bits_of(tau: float) -> np.ndarray:
        return (int(tau) // bit_weights) % 2

    def phi(p: Point, tau: float) -> float:
        b = bits_of(tau)
        f1, f2 = _log_example_branches(p.coords)
        return float(np.sum(np.where(b == 1, f2, f1)))

    def grad_phi(p: Point, tau: float) -> Tangent:
        b = bits_of(tau)
        d1, d2 = _log_example_branch_derivs(p.coords)
        flat = np.where(b == 1, d2, d1)
        return Tangent(p, p.coords**2 * flat)

    def guard(p: Point) -> bool:
        return bool(np.all(p.coords > epsilon))

    obj = MaxObjective(
        manifold=m,
        params=ParamSet(np.arange(2**n, dtype=float)),
        phi=phi,
        grad_phi=grad_phi,
        lipschitz_bound=None,
        domain_guard=guard,
    )
    return BuiltinProblem(
        name="paper_example_product",
        objective=obj,
        start=Point(m, np.full(n, 0.3125)),
        region_lower=np.full(n, epsilon),
        region_upper=np.full(n, 4.0),
        metadata={"epsilon": epsilon, "n": n, "minimizer": [1.0] * n},
    )


def abs_value() -> BuiltinProblem:
    """|x| on the line as max(x, -x).

    Both branches are affine, so the gradient field has Lipschitz constant
    zero and any positive weight keeps the subproblem strongly convex.
    """
    m = euclidean(1)

    def phi(p: Point, tau: float) -> float:
        return float((1.0 - 2.0 * tau) * p.coords[0])

    def grad_phi(p: Point, tau: float) -> Tangent:
        return Tangent(p, np.array([1.0 - 2.0 * tau]))

    obj = MaxObjective(
        manifold=m,
        params=ParamSet(np.array([0.0, 1.0])),
        phi=phi,
        grad_phi=grad_phi,
        lipschitz_bound=0.0,
        domain_guard=None,
    )
    return BuiltinProblem(
        name="abs",
        objective=obj,
        start=Point(m, [5.0]),
        region_lower=np.array([-10.0]),
        region_upper=np.array([10.0]),
        metadata={"minimizer": [0.0]},
    )


def quadratic() -> BuiltinProblem:
    """x^2 / 2 on the line as a single-branch max.

    The branch is convex, so the declared bound is the convexity deficit
    zero rather than the curvature of the gradient field; that is what the
    subproblem's strong convexity actually requires of the weight.
    """
    m = euclidean(1)

    def phi(p: Point, tau: float) -> float:
        return float(0.5 * p.coords[0] ** 2)

    def grad_phi(p: Point, tau: float) -> Tangent:
        return Tangent(p, p.coords.copy())

    obj = MaxObjective(
        manifold=m,
        params=ParamSet(np.array([0.0])),
        phi=phi,
        grad_phi=grad_phi,
        lipschitz_bound=0.0,
        domain_guard=None,
    )
    return BuiltinProblem(
        name="quadratic",
        objective=obj,
        start=Point(m, [1.0]),
        region_lower=np.array([-10.0]),
        region_upper=np.array([10.0]),
        metadata={"minimizer": [0.0]},
    )


_BUILTINS = {
    "paper_example": paper_example,
    "paper_example_product": paper_example_product,
    "abs": abs_value,
    "quadratic": quadratic,
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def make_problem(request) -> BuiltinProblem:
    """Build a problem from a name or a {"name": ..., params} mapping."""
    if isinstance(request, str):
        name, params = request, {}
    elif isinstance(request, dict):
        params = dict(request)
        name = params.pop("name", None)
        if not isinstance(name, str):
            raise ValueError("a problem mapping needs a string 'name' entry")
    else:
        raise ValueError(
            f"problem must be a string or mapping, got {type(request).__name__}"
        )
    if name not in _BUILTINS:
        raise ValueError(f"unknown problem {name!r}; known: {', '.join(BUILTIN_NAMES)}")
    try:
        return _BUILTINS[name](**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for problem {name!r}: {exc}") from None


def region_samples(
    problem: BuiltinProblem, count: int = 64, rng: Optional[np.random.Generator] = None
) -> list[Point]:
    """Deterministic interior samples of the problem's declared region.

    One dimension uses an even grid in the flat chart.  Higher dimensions
    draw uniformly in the chart box from the supplied generator, which is
    then required.
    """
    m = problem.objective.manifold
    lo = problem.region_lower.astype(float)
    hi = problem.region_upper.astype(float)
    if m.geometry.value == "log_positive":
        lo, hi = np.log(lo), np.log(hi)
    if m.dim == 1:
        zs = np.linspace(lo[0], hi[0], count + 2)[1:-1]
        return [from_chart(m, [z]) for z in zs]
    if rng is None:
        raise ValueError("higher-dimensional regions need an explicit generator")
    return [from_chart(m, rng.uniform(lo, hi)) for _ in range(count)]
