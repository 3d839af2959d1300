"""Equivariant diffeomorphisms of R^d under a finite orthogonal group and their descent to R^d/G."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import settings
from .errors import ConfigError, DescentError
from .metric import polynomial_from_terms
from .orbifold_core import AffineMap, Atlas, Ball, FiniteGroup, GroupElement, OrbifoldChart, OrbitPoint
from .orbisections import Orbisection, field_from_dict
from .polynomial import Polynomial
from .regularity import TimeDependentSection, flow

MAX_GROUP_ORDER = 64


def check_IS(group: FiniteGroup, d: int | None = None, tol: float = 1e-9) -> bool:
    """True iff no non-identity element fixes a nonzero vector: rank(A_g - I) = d."""
    d = group.dim if d is None else d
    if not group.is_linear:
        raise ConfigError("condition (IS) is defined for linear groups")
    for g in list(group)[1:]:
        s = np.linalg.svd(g.linear_part - np.eye(d), compute_uv=False)
        if s.min() <= tol:
            return False
    return True


# ---------------------------------------------------------------------------
# Maps
# ---------------------------------------------------------------------------

class PlaneMap:
    """Map R^d -> R^d given as a batched callable; composition reads right to left."""

    def __init__(self, func: Callable, dim: int, label: str = "map"):
        self.func, self.dim, self.label = func, dim, label

    def __call__(self, x) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float))

    def __matmul__(self, other: "PlaneMap") -> "PlaneMap":
        return PlaneMap(lambda x: self(other(x)), self.dim, f"{self.label} o {other.label}")

    @classmethod
    def affine(cls, matrix, translation=None, label: str = "affine") -> "PlaneMap":
        m = AffineMap(matrix, translation)
        return cls(m.apply, m.dim, label)

    @classmethod
    def polynomial(cls, poly: Polynomial, label: str = "polynomial") -> "PlaneMap":
        return cls(poly, poly.dim, label)


@dataclass
class WeakEquivalence:
    """h with h o g = alpha(g) o h; ``alpha[i]`` is the index of alpha(group[i])."""

    h: PlaneMap
    group: FiniteGroup
    alpha: tuple
    residual: float
    accepted: bool = True

    def is_automorphism(self) -> bool:
        return _is_automorphism(self.alpha, self.group)


@dataclass
class Rejection:
    reason: str
    residual: float
    accepted: bool = False


def _is_automorphism(alpha, group: FiniteGroup) -> bool:
    if sorted(alpha) != list(range(group.order)):
        return False
    T = group.cayley_table
    n = group.order
    return all(alpha[T[i, j]] == T[alpha[i], alpha[j]] for i in range(n) for j in range(n))


def default_test_points(group: FiniteGroup, radius: float = 1.0, n: int = 9) -> np.ndarray:
    return Ball(np.zeros(group.dim), radius).grid(n, shrink=0.02)


def is_weak_equivalence(h: PlaneMap | Callable, group: FiniteGroup, points=None,
                        tol: float | None = None) -> WeakEquivalence | Rejection:
    """Exhaustive search for alpha(g) matching h o g to g' o h on the test points."""
    if group.order > MAX_GROUP_ORDER:
        raise ConfigError(f"group order {group.order} exceeds {MAX_GROUP_ORDER}")
    if not isinstance(h, PlaneMap):
        h = PlaneMap(h, group.dim)
    tol = settings.tol_alg if tol is None else tol
    x = default_test_points(group) if points is None else np.asarray(points, dtype=float)
    hx = h(x)
    scale = max(1.0, float(np.abs(hx).max(initial=0.0)))
    alpha, worst = [], 0.0
    for g in group:
        hg = h(g.apply(x))
        res = [float(np.abs(hg - k.apply(hx)).max(initial=0.0)) for k in group]
        j = int(np.argmin(res))
        worst = max(worst, res[j])
        alpha.append(j)
    if worst > tol * scale:
        return Rejection(f"no group element matches h o g within tolerance (residual {worst:.3g})", worst)
    alpha = tuple(alpha)
    if not _is_automorphism(alpha, group):
        return Rejection("the matched assignment is not a group automorphism", worst)
    return WeakEquivalence(h, group, alpha, worst)


# ---------------------------------------------------------------------------
# Descent
# ---------------------------------------------------------------------------

class DescendedMap:
    """p -> canonical representative of h(rep)."""

    def __init__(self, h: WeakEquivalence, chart: OrbifoldChart, residual: float):
        self.h, self.chart, self.residual = h, chart, residual

    def __call__(self, p: OrbitPoint | np.ndarray):
        if isinstance(p, OrbitPoint):
            return OrbitPoint(p.chart, self.chart.canonical(self.h.h(p.rep[None])[0]))
        return self.chart.canonical(self.h.h(np.asarray(p, dtype=float)))

    def is_identity(self, points, tol: float | None = None) -> bool:
        tol = settings.tol_alg if tol is None else tol
        x = np.asarray(points, dtype=float)
        return float(self.chart.orbit_distance(self.h.h(x), x).max(initial=0.0)) < tol * max(1.0, float(np.abs(x).max()))


def _global_chart(atlas: Atlas | OrbifoldChart, group: FiniteGroup) -> OrbifoldChart:
    if isinstance(atlas, OrbifoldChart):
        return atlas
    for cid in atlas.chart_ids:
        ch = atlas.chart(cid)
        if ch.group.order == group.order and all(ch.group.index_of(g) is not None for g in group):
            return ch
    raise ConfigError("no chart of the atlas carries the group of the weak equivalence")


def descend(h: WeakEquivalence, atlas: Atlas | OrbifoldChart, points=None, tol: float | None = None) -> DescendedMap:
    """Orbit map of h on the chart carrying its group; checks that group translates land in one orbit."""
    chart = _global_chart(atlas, h.group)
    tol = settings.tol_alg if tol is None else tol
    x = default_test_points(h.group) if points is None else np.asarray(points, dtype=float)
    hx = h.h(x)
    res = 0.0
    for g in chart.group:
        res = max(res, float(chart.orbit_distance(h.h(g.apply(x)), hx).max(initial=0.0)))
    if res > tol * max(1.0, float(np.abs(hx).max(initial=0.0))):
        raise DescentError(f"orbit map is not well defined (residual {res:.3g})")
    return DescendedMap(h, chart, res)


@dataclass
class KernelWitness:
    status: str                  # "element" | "not-in-kernel" | "none-found"
    element: GroupElement | None = None
    index: int | None = None
    residual: float = 0.0


def kernel_witness(h: WeakEquivalence, atlas: Atlas | OrbifoldChart, points=None,
                   tol: float | None = None) -> KernelWitness:
    """If D(h) is the identity on samples, the group element h coincides with."""
    tol = settings.tol_alg if tol is None else tol
    x = default_test_points(h.group) if points is None else np.asarray(points, dtype=float)
    D = descend(h, atlas, x, tol)
    if not D.is_identity(x, tol):
        moved = float(D.chart.orbit_distance(h.h(x), x).max(initial=0.0))
        return KernelWitness("not-in-kernel", residual=moved)
    hx = h.h(x)
    res = [float(np.abs(hx - g.apply(x)).max(initial=0.0)) for g in h.group]
    j = int(np.argmin(res))
    if res[j] < tol * max(1.0, float(np.abs(x).max())):
        return KernelWitness("element", h.group[j], j, res[j])
    return KernelWitness("none-found", residual=res[j])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def map_from_dict(spec: dict, group: FiniteGroup, atlas: Atlas | None = None) -> PlaneMap:
    """Map spec kinds: linear, affine, scale, group, polynomial, compose (maps applied right to left), flow."""
    d = group.dim
    kind = spec.get("kind")
    if kind == "linear":
        return PlaneMap.affine(spec["matrix"], label="linear")
    if kind == "affine":
        return PlaneMap.affine(spec["matrix"], spec.get("translation"), label="affine")
    if kind == "scale":
        return PlaneMap.affine(float(spec["factor"]) * np.eye(d), label=f"{spec['factor']}x")
    if kind == "translation":
        return PlaneMap.affine(np.eye(d), spec["vector"], label="translation")
    if kind == "group":
        g = group[int(spec["index"])]
        return PlaneMap(g.apply, d, f"g{spec['index']}")
    if kind == "polynomial":
        return PlaneMap.polynomial(polynomial_from_terms(spec["terms"], d, d))
    if kind == "compose":
        maps = [map_from_dict(s, group, atlas) for s in spec["maps"]]
        out = maps[0]
        for m in maps[1:]:
            out = out @ m
        return out
    if kind == "flow":
        chart = OrbifoldChart("R", Ball(np.zeros(d), float(spec.get("radius", 10.0))), group)
        single = Atlas([chart], [])
        f = field_from_dict(spec["field"], chart)
        gamma = TimeDependentSection.constant(Orbisection(single, {"R": f}))
        T = float(spec.get("time", 1.0))
        return PlaneMap(lambda x: flow(gamma, "R", x, T), d, "flow")
    raise ConfigError(f"unknown map kind {kind!r}")
