"""Slow, independent verification oracles.

Everything here deliberately avoids the closed forms used by the library
proper: gradients come from central differences pushed through the
exponential map, minimizers from dense grids with a golden-section polish,
convexity from random chord checks, and semicontinuity from seeded
sampling.  Agreement between these and the fast paths is the evidence the
test suite leans on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .manifold import (
    Geometry,
    ManifoldKind,
    Point,
    Tangent,
    dist,
    exp_map,
    geodesic,
    log_map,
    random_unit_tangent,
    transport,
)
from .objective import DomainError, MaxObjective, gen_dir_derivative

__all__ = [
    "GridSpec",
    "fd_gradient",
    "grid_minimize",
    "ConvexityReport",
    "geodesic_convexity_test",
    "UscReport",
    "usc_sampler",
]

MAX_GRID_POINTS = 10_000_000
GOLDEN_WIDTH = 1e-10
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

ScalarField = Callable[[Point], float]


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned coordinate box with a fixed node count per axis."""

    lower: np.ndarray
    upper: np.ndarray
    points_per_dim: int

    def __post_init__(self) -> None:
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("grid bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("need lower < upper in every coordinate")
        if self.points_per_dim < 2:
            raise ValueError("points_per_dim must be at least 2")
        if self.points_per_dim ** lo.size > MAX_GRID_POINTS:
            raise ValueError(
                f"grid would exceed {MAX_GRID_POINTS:.0e} nodes; refuse to enumerate"
            )
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return int(self.lower.size)


def fd_gradient(field: ScalarField, p: Point, step: Optional[float] = None) -> Tangent:
    """Central-difference gradient of a scalar field at p.

    Differences are taken through exp_map along each tangent coordinate
    direction, then converted to a gradient with the metric (the sharp of
    the estimated differential).  Out-of-domain evaluations propagate.
    """
    dim = p.manifold.dim
    scale = np.maximum(1.0, np.abs(p.coords))
    steps = np.full(dim, float(step)) if step is not None else np.sqrt(np.finfo(float).eps) * scale
    if np.any(steps <= 0):
        raise ValueError("finite-difference step must be positive")
    diffs = np.empty(dim)
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = steps[i]
        f_plus = field(exp_map(p, Tangent(p, e)))
        f_minus = field(exp_map(p, Tangent(p, -e)))
        diffs[i] = (f_plus - f_minus) / (2.0 * steps[i])
    if p.manifold.geometry is Geometry.LOG_POSITIVE:
        diffs = diffs * p.coords**2
    return Tangent(p, diffs)


def _golden_refine(f: Callable[[float], float], lo: float, hi: float) -> tuple[float, float]:
    """Golden-section search down to a bracket of width GOLDEN_WIDTH."""
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(300):
        if hi - lo <= GOLDEN_WIDTH:
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = f(x2)
    xbest, fbest = (x1, f1) if f1 <= f2 else (x2, f2)
    return xbest, fbest


def grid_minimize(
    field: ScalarField, grid: GridSpec, manifold: ManifoldKind
) -> tuple[Point, float]:
    """Brute-force minimizer of a scalar field over a coordinate box.

    Enumerates the full grid (guarded against combinatorial blowups by
    GridSpec) and, in one dimension, polishes the best node by
    golden-section search between its neighbors.  Deterministic for a
    given grid; enumeration order never affects the result beyond
    first-wins tie-breaking.
    """
    if grid.dim != manifold.dim:
        raise ValueError(f"grid dim {grid.dim} does not match manifold dim {manifold.dim}")
    axes = [
        np.linspace(grid.lower[i], grid.upper[i], grid.points_per_dim)
        for i in range(grid.dim)
    ]
    best_coords = None
    best_val = np.inf
    for idx in np.ndindex(*(grid.points_per_dim,) * grid.dim):
        coords = np.array([axes[i][idx[i]] for i in range(grid.dim)])
        val = field(Point(manifold, coords))
        if val < best_val:
            best_val = val
            best_coords = coords
    if best_coords is None:
        raise RuntimeError("empty grid")

    if grid.dim == 1:
        nodes = axes[0]
        i = int(np.searchsorted(nodes, best_coords[0]))
        i = min(max(i, 0), nodes.size - 1)
        lo = nodes[max(i - 1, 0)]
        hi = nodes[min(i + 1, nodes.size - 1)]
        x, val = _golden_refine(lambda c: field(Point(manifold, [c])), float(lo), float(hi))
        if val < best_val:
            best_val = val
            best_coords = np.array([x])
    return Point(manifold, best_coords), float(best_val)


@dataclass(frozen=True)
class ConvexityReport:
    n_pairs: int
    n_checks: int
    n_violations: int
    worst_violation: float
    modulus: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def geodesic_convexity_test(
    field: ScalarField,
    manifold: ManifoldKind,
    samples: int,
    modulus: float,
    lower,
    upper,
    seed: int = 42,
    slack: float = 1e-8,
    domain: Optional[Callable[[Point], bool]] = None,
) -> ConvexityReport:
    """Chord test for geodesic strong convexity over a coordinate box.

    Draws endpoint pairs uniformly in the flat chart of the box, checks
    h(gamma(t)) against the strongly convex chord bound at t = 0.1 .. 0.9,
    and reports the worst violation beyond the slack.  Draws landing
    outside an optional domain predicate are retried up to a cap.
    """
    if modulus < 0:
        raise ValueError(f"modulus must be >= 0, got {modulus}")
    if samples < 1:
        raise ValueError("need at least one sample pair")
    lo = np.atleast_1d(np.asarray(lower, dtype=float))
    hi = np.atleast_1d(np.asarray(upper, dtype=float))
    if lo.shape != (manifold.dim,) or hi.shape != (manifold.dim,):
        raise ValueError("box bounds must match the manifold dimension")
    if manifold.geometry is Geometry.LOG_POSITIVE:
        if np.any(lo <= 0):
            raise ValueError("box bounds must be positive on the log-positive orthant")
        lo, hi = np.log(lo), np.log(hi)
    rng = np.random.default_rng(seed)

    def draw() -> Point:
        for _ in range(200):
            z = rng.uniform(lo, hi)
            p = (
                Point(manifold, np.exp(z))
                if manifold.geometry is Geometry.LOG_POSITIVE
                else Point(manifold, z)
            )
            if domain is None or domain(p):
                return p
        raise DomainError("could not draw an admissible sample in the box")

    ts = np.arange(1, 10) / 10.0
    n_checks = 0
    n_violations = 0
    worst = -np.inf
    for _ in range(samples):
        p, q = draw(), draw()
        hp, hq = field(p), field(q)
        d2 = dist(p, q) ** 2
        v = log_map(p, q)
        for t in ts:
            chord = (1.0 - t) * hp + t * hq - 0.5 * modulus * t * (1.0 - t) * d2
            gap = field(geodesic(p, v, t)) - chord
            n_checks += 1
            worst = max(worst, gap)
            if gap > slack:
                n_violations += 1
    return ConvexityReport(samples, n_checks, n_violations, float(worst), modulus, slack)


@dataclass(frozen=True)
class UscReport:
    reference: float
    tail_max: float
    gap: float
    tolerance: float
    n: int
    tail_start: int
    discarded: int
    note: str = "sampled evidence only, not a proof"

    @property
    def passed(self) -> bool:
        return self.gap <= self.tolerance


# perturbation scale keeping the first-order pairing slack inside the
# pass tolerance for n = 1000 tails
_USC_PERT_SCALE = 0.25


def usc_sampler(
    obj: MaxObjective, p: Point, v: Tangent, n: int, seed: int = 42, tolerance: float = 1e-3
) -> UscReport:
    """Sampled upper-semicontinuity check of the directional derivative.

    Builds a sequence (p_k, v_k) -> (p, v) with d(p_k, p) = 1/k, v_k the
    transport of v plus a random tangent of norm 0.25/k, and compares the
    largest tail value (final tenth) of the directional derivative against
    its value at (p, v).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    reference = gen_dir_derivative(obj, p, v)
    values = np.full(n, -np.inf)
    discarded = 0
    for k in range(1, n + 1):
        direction = random_unit_tangent(p, rng)
        p_k = exp_map(p, (1.0 / k) * direction)
        if not obj.in_domain(p_k):
            discarded += 1
            continue
        v_k = transport(p, p_k, v) + (_USC_PERT_SCALE / k) * random_unit_tangent(p_k, rng)
        values[k - 1] = gen_dir_derivative(obj, p_k, v_k)
    tail_start = max((9 * n) // 10, 1)
    tail = values[tail_start - 1 :]
    tail = tail[np.isfinite(tail)]
    if tail.size == 0:
        raise DomainError("every tail sample fell outside the admissible region")
    tail_max = float(np.max(tail))
    return UscReport(
        reference=float(reference),
        tail_max=tail_max,
        gap=tail_max - float(reference),
        tolerance=float(tolerance),
        n=n,
        tail_start=tail_start,
        discarded=discarded,
    )
