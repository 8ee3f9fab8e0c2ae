"""Pointwise-maximum objectives and their generalized derivative machinery.

An objective is f(p) = max over a finite parameter grid of smooth branches
phi(p, tau).  The generalized directional derivative at p along v is the
largest metric pairing <g, v> over gradients of branches active at p, and
the generalized subdifferential is the convex hull of those gradients.
A slow sampling estimator of the directional derivative is kept alongside
for cross-checking; it is evidence, not the primary computation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .manifold import (
    ManifoldKind,
    MismatchError,
    Point,
    Tangent,
    differential_exp,
    dist,
    exp_map,
    grad_half_sq_dist,
    inner,
    log_map,
    norm,
    random_unit_tangent,
    transport,
    zero_tangent,
)

__all__ = [
    "DomainError",
    "ParamSet",
    "MaxObjective",
    "SubdiffHull",
    "default_active_tol",
    "eval_f",
    "active_set",
    "clarke_subdiff",
    "gen_dir_derivative",
    "gd_sampling_estimate",
    "min_norm_subgradient",
    "unit_forward",
    "hull_distance",
    "estimate_sup_lipschitz",
    "with_prox_term",
]

LIPSCHITZ_SAFETY_FACTOR = 1.1


class DomainError(ValueError):
    """A point lies outside the objective's admissible region."""


@dataclass(frozen=True)
class ParamSet:
    """Finite, strictly increasing grid of branch parameters."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.atleast_1d(np.asarray(self.values, dtype=float)).copy()
        if arr.size == 0:
            raise ValueError("parameter grid must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("parameter grid has non-finite entries")
        if arr.size > 1 and not np.all(np.diff(arr) > 0):
            raise ValueError("parameter grid must be strictly increasing")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.size)

    def __iter__(self):
        return iter(self.values)


LipschitzBound = Union[float, Callable[[float], float], None]


@dataclass(frozen=True)
class MaxObjective:
    """f(p) = max_{tau in params} phi(p, tau).

    grad_phi must return the Riemannian gradient of phi(., tau) at p as a
    Tangent based at p; converting flat derivatives through the metric is
    the problem definition's job, not this module's.  lipschitz_bound, when
    given, is either a single bound on all branch-gradient Lipschitz
    constants or a callable tau -> bound.  domain_guard is a predicate for
    the open admissible region; None means the whole manifold.
    """

    manifold: ManifoldKind
    params: ParamSet
    phi: Callable[[Point, float], float]
    grad_phi: Callable[[Point, float], Tangent]
    lipschitz_bound: LipschitzBound = None
    domain_guard: Optional[Callable[[Point], bool]] = None

    def check_domain(self, p: Point) -> None:
        if p.manifold != self.manifold:
            raise MismatchError("point does not live on the objective's manifold")
        if self.domain_guard is not None and not self.domain_guard(p):
            raise DomainError(f"point {p.coords.tolist()} is outside the admissible region")

    def in_domain(self, p: Point) -> bool:
        if p.manifold != self.manifold:
            return False
        return self.domain_guard is None or bool(self.domain_guard(p))

    def declared_sup_lipschitz(self) -> Optional[float]:
        if self.lipschitz_bound is None:
            return None
        if callable(self.lipschitz_bound):
            return float(max(self.lipschitz_bound(t) for t in self.params))
        return float(self.lipschitz_bound)


@dataclass(frozen=True)
class SubdiffHull:
    """Convex hull of branch gradients at a base point."""

    base: Point
    generators: tuple[Tangent, ...]

    def __post_init__(self) -> None:
        if not self.generators:
            raise ValueError("hull needs at least one generator")
        for g in self.generators:
            if g.base.manifold != self.base.manifold or not np.array_equal(
                g.base.coords, self.base.coords
            ):
                raise MismatchError("hull generator is not attached at the base point")


def default_active_tol(f_value: float) -> float:
    """Activation tolerance used when none is supplied."""
    return 1e-12 * max(1.0, abs(f_value))


def eval_f(obj: MaxObjective, p: Point) -> tuple[float, np.ndarray]:
    """Objective value at p together with every parameter attaining it exactly."""
    obj.check_domain(p)
    vals = np.array([obj.phi(p, t) for t in obj.params], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"branch value is non-finite at {p.coords.tolist()}")
    fmax = float(np.max(vals))
    return fmax, obj.params.values[vals == fmax].copy()


def active_set(obj: MaxObjective, p: Point, eta: Optional[float] = None) -> np.ndarray:
    """Parameters whose branch value comes within eta of the max at p."""
    obj.check_domain(p)
    vals = np.array([obj.phi(p, t) for t in obj.params], dtype=float)
    fmax = float(np.max(vals))
    if eta is None:
        eta = default_active_tol(fmax)
    if eta < 0:
        raise ValueError(f"activation tolerance must be >= 0, got {eta}")
    return obj.params.values[vals >= fmax - eta].copy()


def clarke_subdiff(obj: MaxObjective, p: Point, eta: Optional[float] = None) -> SubdiffHull:
    """Hull of gradients of the eta-active branches at p."""
    taus = active_set(obj, p, eta)
    gens = []
    for t in taus:
        g = obj.grad_phi(p, float(t))
        if not np.array_equal(g.base.coords, p.coords):
            raise MismatchError("grad_phi returned a tangent at the wrong base point")
        gens.append(g)
    return SubdiffHull(p, tuple(gens))


def gen_dir_derivative(
    obj: MaxObjective, p: Point, v: Tangent, eta: Optional[float] = None
) -> float:
    """Generalized directional derivative of f at p along v."""
    hull = clarke_subdiff(obj, p, eta)
    return max(inner(p, g, v) for g in hull.generators)


def gd_sampling_estimate(
    obj: MaxObjective,
    p: Point,
    v: Tangent,
    radius_seq: Sequence[float],
    step_seq: Sequence[float],
    samples_per_radius: int = 20,
    seed: int = 42,
) -> float:
    """Sampling estimate of the generalized directional derivative.

    Draws base points q near p, carries v to q through the differential of
    the exponential map, and takes the largest forward difference quotient
    over all drawn pairs and step sizes.  Verification aid only; quotients
    whose evaluation leaves the admissible region are discarded and counted
    in a warning.
    """
    radii = [float(r) for r in radius_seq]
    steps = [float(t) for t in step_seq]
    if not radii or any(r <= 0 for r in radii):
        raise ValueError("radius_seq must be non-empty and positive")
    if not steps or any(t <= 0 for t in steps):
        raise ValueError("step_seq must be non-empty and positive")
    rng = np.random.default_rng(seed)

    bases = [p]
    for r in radii:
        for _ in range(samples_per_radius):
            direction = random_unit_tangent(p, rng)
            bases.append(exp_map(p, (r * rng.uniform(0.0, 1.0)) * direction))

    best = -np.inf
    discarded = 0
    for q in bases:
        if not obj.in_domain(q):
            discarded += 1
            continue
        u_q = differential_exp(p, log_map(p, q), v)
        f_q, _ = eval_f(obj, q)
        for t in steps:
            try:
                target = exp_map(q, t * u_q)
                f_t, _ = eval_f(obj, target)
            except (DomainError, ValueError):
                discarded += 1
                continue
            best = max(best, (f_t - f_q) / t)
    if discarded:
        warnings.warn(f"gd_sampling_estimate discarded {discarded} out-of-domain samples")
    if not np.isfinite(best):
        raise DomainError("every sampled quotient left the admissible region")
    return float(best)


def _metric_weights(p: Point) -> np.ndarray:
    from .manifold import Geometry

    if p.manifold.geometry is Geometry.LOG_POSITIVE:
        return 1.0 / p.coords**2
    return np.ones(p.manifold.dim)


def unit_forward(p: Point) -> Tangent:
    """The unit tangent at p pointing along increasing coordinates (dim 1)."""
    if p.manifold.dim != 1:
        raise ValueError("unit_forward is defined for one-dimensional manifolds only")
    from .manifold import Geometry

    if p.manifold.geometry is Geometry.LOG_POSITIVE:
        return Tangent(p, p.coords.copy())
    return Tangent(p, np.ones(1))


def _min_norm_weights(gram: np.ndarray, coords: np.ndarray, wm: np.ndarray, tol: float):
    """Away-step Frank-Wolfe for min ||sum_i w_i g_i|| over the simplex."""
    m = gram.shape[0]
    w = np.zeros(m)
    w[int(np.argmin(np.diag(gram)))] = 1.0
    scale = max(1.0, float(np.max(np.diag(gram))))
    for _ in range(100_000):
        comb = w @ coords
        if np.sqrt(max(float(np.sum(comb * comb * wm)), 0.0)) <= tol:
            break
        grad = gram @ w
        s = int(np.argmin(grad))
        fw_gap = float(w @ grad - grad[s])
        if fw_gap <= 1e-16 * scale:
            break
        active = np.flatnonzero(w > 1e-16)
        a = int(active[np.argmax(grad[active])])
        away_gap = float(grad[a] - w @ grad)
        if fw_gap >= away_gap:
            d = -w.copy()
            d[s] += 1.0
            gamma_max = 1.0
        else:
            d = w.copy()
            d[a] -= 1.0
            gamma_max = w[a] / (1.0 - w[a]) if w[a] < 1.0 else 1.0
        dgd = float(d @ gram @ d)
        if dgd <= 0.0:
            gamma = gamma_max
        else:
            gamma = min(max(-float(d @ grad) / dgd, 0.0), gamma_max)
        if gamma <= 0.0:
            break
        w = np.maximum(w + gamma * d, 0.0)
        w /= w.sum()
    return w


def min_norm_subgradient(hull: SubdiffHull, tol: float = 1e-10) -> tuple[Tangent, float]:
    """Minimum-norm element of the hull and its norm.

    Exact for one-dimensional manifolds and for hulls with at most two
    generators; larger hulls are solved by Frank-Wolfe over the simplex.
    """
    base = hull.base
    gens = hull.generators
    if len(gens) == 1:
        return gens[0], norm(base, gens[0])

    if base.manifold.dim == 1:
        # the hull is an interval of pairings with the forward unit tangent
        unit = unit_forward(base)
        s = np.array([inner(base, g, unit) for g in gens])
        lo, hi = float(np.min(s)), float(np.max(s))
        if lo <= 0.0 <= hi:
            return zero_tangent(base), 0.0
        idx = int(np.argmin(np.abs(s)))
        return gens[idx], float(abs(s[idx]))

    if len(gens) == 2:
        g1, g2 = gens
        diff = g1 - g2
        den = inner(base, diff, diff)
        t = min(max(inner(base, g1, diff) / den, 0.0), 1.0) if den > 0.0 else 0.0
        g = g1 - t * diff
        return g, norm(base, g)

    coords = np.stack([g.coords for g in gens])
    wm = _metric_weights(base)
    gram = (coords * wm) @ coords.T
    w = _min_norm_weights(gram, coords, wm, tol)
    g = Tangent(base, w @ coords)
    return g, norm(base, g)


def hull_distance(hull: SubdiffHull, w: Tangent, tol: float = 1e-10) -> float:
    """Metric distance from the tangent w to the hull."""
    shifted = SubdiffHull(hull.base, tuple(g - w for g in hull.generators))
    _, d = min_norm_subgradient(shifted, tol)
    return d


def estimate_sup_lipschitz(
    obj: MaxObjective,
    region_samples: Sequence[Point],
    safety_factor: float = LIPSCHITZ_SAFETY_FACTOR,
) -> float:
    """Upper estimate of the largest branch-gradient Lipschitz constant.

    Returns the declared bound when the objective carries one.  Otherwise
    takes the largest transported difference quotient of each branch
    gradient over all sample pairs and inflates it by the safety factor.
    """
    declared = obj.declared_sup_lipschitz()
    if declared is not None:
        return declared
    samples = list(region_samples)
    if len(samples) < 2:
        raise ValueError("need at least two region samples to estimate a Lipschitz bound")
    for s in samples:
        obj.check_domain(s)
    best = 0.0
    for t in obj.params:
        grads = [obj.grad_phi(s, float(t)) for s in samples]
        for i in range(len(samples)):
            for j in range(i + 1, len(samples)):
                d = dist(samples[i], samples[j])
                if d <= 1e-14:
                    continue
                moved = transport(samples[i], samples[j], grads[i])
                best = max(best, norm(samples[j], grads[j] - moved) / d)
    return safety_factor * best


def with_prox_term(obj: MaxObjective, pbar: Point, lam: float) -> MaxObjective:
    """The objective with (lam/2) d(., pbar)^2 added to every branch.

    Branch order and active sets are preserved because the added term does
    not depend on the branch parameter.
    """
    if pbar.manifold != obj.manifold:
        raise MismatchError("prox center lives on a different manifold")
    lam = float(lam)

    def phi(p: Point, tau: float) -> float:
        return obj.phi(p, tau) + 0.5 * lam * dist(p, pbar) ** 2

    def grad_phi(p: Point, tau: float) -> Tangent:
        return obj.grad_phi(p, tau) + lam * grad_half_sq_dist(p, pbar)

    return MaxObjective(
        manifold=obj.manifold,
        params=obj.params,
        phi=phi,
        grad_phi=grad_phi,
        lipschitz_bound=None,
        domain_guard=obj.domain_guard,
    )
