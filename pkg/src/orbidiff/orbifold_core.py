"""Orbifolds given by finite atlases of charts with finite isometric group actions.

A chart is a connected region (ball or box) in R^d together with a finite
group of affine isometries leaving the region invariant.  Changes of charts
are affine isometries between sub-regions, declared explicitly.  Points of
the orbit space are represented by a chart id and a representative; tangent
vectors by a chart id, a base point and a vector.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import null_space

from .config import settings
from .errors import ConfigError, DomainError, ValidationError


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------

class Region:
    """Open region in R^d; subclasses are :class:`Ball` and :class:`Box`."""

    kind = "region"

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, x, margin: float = 0.0):
        """True where ``x`` lies inside the region shrunk by ``margin``."""
        return self.clearance(x) > margin

    def grid(self, n: int | None = None, cap: int | None = None, shrink: float = 0.02) -> np.ndarray:
        """Tensor grid of at most ``cap`` points inside the region."""
        n = settings.grid_fields if n is None else n
        cap = settings.grid_cap if cap is None else cap
        d = self.dim
        while n > 2 and n ** d > cap:
            n -= 1
        lo, hi = self.bounding_box()
        half = 0.5 * (hi - lo) * (1.0 - shrink)
        mid = 0.5 * (hi + lo)
        axes = [np.linspace(mid[k] - half[k], mid[k] + half[k], n) for k in range(d)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        return pts[self.contains(pts, margin=0.5 * shrink * self.scale)]

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()})"


@dataclass(frozen=True, eq=False, repr=False)
class Ball(Region):
    center: np.ndarray
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center).reshape(-1))
        object.__setattr__(self, "radius", float(self.radius))
        if self.radius <= 0:
            raise ConfigError("ball radius must be positive")

    @property
    def scale(self) -> float:
        return self.radius

    def clearance(self, x):
        x = _vec(x)
        return self.radius - np.linalg.norm(x - self.center, axis=-1)

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def scaled(self, factor: float) -> "Ball":
        return Ball(self.center, self.radius * factor)

    def exit_time(self, x, v, margin: float = 0.0) -> float:
        """First t > 0 with x + t v on the boundary of the shrunk ball (inf if v = 0)."""
        p = _vec(x) - self.center
        v = _vec(v)
        vv = float(v @ v)
        if vv == 0.0:
            return np.inf
        rho = self.radius - margin
        pv = float(p @ v)
        disc = pv * pv - vv * (float(p @ p) - rho * rho)
        if disc < 0:
            return 0.0
        return max((-pv + np.sqrt(disc)) / vv, 0.0)

    def boundary_sample(self, count: int = 64) -> np.ndarray:
        d = self.dim
        if d == 1:
            dirs = np.array([[1.0], [-1.0]])
        elif d == 2:
            ang = np.linspace(0, 2 * np.pi, count, endpoint=False)
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        else:
            rng = np.random.default_rng(0)
            dirs = rng.normal(size=(count, d))
            dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
            dirs = np.vstack([dirs, np.eye(d), -np.eye(d)])
        return self.center + self.radius * dirs

    def sample(self, rng, count):
        d = self.dim
        dirs = rng.normal(size=(count, d))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        r = self.radius * rng.random(count) ** (1.0 / d)
        return self.center + dirs * r[:, None]

    def to_dict(self):
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False, repr=False)
class Box(Region):
    center: np.ndarray
    halfwidths: np.ndarray
    kind = "box"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center).reshape(-1))
        hw = _vec(self.halfwidths).reshape(-1)
        if hw.shape != self.center.shape:
            raise ConfigError("box halfwidths must match the center dimension")
        if np.any(hw <= 0):
            raise ConfigError("box halfwidths must be positive")
        object.__setattr__(self, "halfwidths", hw)

    @property
    def scale(self) -> float:
        return float(self.halfwidths.min())

    def clearance(self, x):
        x = _vec(x)
        return np.min(self.halfwidths - np.abs(x - self.center), axis=-1)

    def bounding_box(self):
        return self.center - self.halfwidths, self.center + self.halfwidths

    def scaled(self, factor: float) -> "Box":
        return Box(self.center, self.halfwidths * factor)

    def exit_time(self, x, v, margin: float = 0.0) -> float:
        p = _vec(x) - self.center
        v = _vec(v)
        rho = self.halfwidths - margin
        times = []
        for k in range(self.dim):
            if v[k] > 0:
                times.append((rho[k] - p[k]) / v[k])
            elif v[k] < 0:
                times.append((-rho[k] - p[k]) / v[k])
        if not times:
            return np.inf
        return max(min(times), 0.0)

    def boundary_sample(self, count: int = 64) -> np.ndarray:
        d = self.dim
        corners = np.array(np.meshgrid(*[[-1.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
        faces = np.vstack([np.eye(d), -np.eye(d)])
        rng = np.random.default_rng(0)
        rand = rng.uniform(-1, 1, size=(count, d))
        axis = rng.integers(0, d, size=count)
        rand[np.arange(count), axis] = np.sign(rand[np.arange(count), axis] + 1e-300)
        unit = np.vstack([corners, faces, rand])
        return self.center + unit * self.halfwidths

    def sample(self, rng, count):
        return self.center + rng.uniform(-1, 1, size=(count, self.dim)) * self.halfwidths

    def to_dict(self):
        return {"kind": "box", "center": self.center.tolist(), "halfwidths": self.halfwidths.tolist()}


def region_from_dict(spec: dict) -> Region:
    try:
        kind = spec["kind"]
        if kind == "ball":
            return Ball(spec["center"], spec["radius"])
        if kind == "box":
            return Box(spec["center"], spec["halfwidths"])
    except KeyError as exc:
        raise ConfigError(f"region is missing field {exc}") from None
    raise ConfigError(f"unknown region kind {spec.get('kind')!r}")


# ---------------------------------------------------------------------------
# Groups
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> linear_part @ x + translation (no orthogonality requirement)."""

    linear_part: np.ndarray
    translation: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(_vec(self.linear_part))
        if A.shape[0] != A.shape[1]:
            raise ConfigError("linear part must be square")
        t = np.zeros(A.shape[0]) if self.translation is None else _vec(self.translation).reshape(-1)
        if t.shape[0] != A.shape[0]:
            raise ConfigError("translation has wrong dimension")
        object.__setattr__(self, "linear_part", A)
        object.__setattr__(self, "translation", t)

    @property
    def dim(self) -> int:
        return self.linear_part.shape[0]

    def apply(self, x):
        return _vec(x) @ self.linear_part.T + self.translation

    __call__ = apply

    def push(self, v):
        """Derivative action on tangent vectors."""
        return _vec(v) @ self.linear_part.T

    def jacobian(self, x):
        x = _vec(x)
        return np.broadcast_to(self.linear_part, x.shape[:-1] + self.linear_part.shape)

    def compose(self, other: "AffineMap"):
        """self o other."""
        cls = GroupElement if isinstance(self, GroupElement) and isinstance(other, GroupElement) else AffineMap
        return cls(self.linear_part @ other.linear_part,
                   self.linear_part @ other.translation + self.translation)

    def inverse(self):
        Ainv = np.linalg.inv(self.linear_part)
        return type(self)(Ainv, -Ainv @ self.translation)

    def distance(self, other: "AffineMap") -> float:
        return float(max(np.abs(self.linear_part - other.linear_part).max(),
                         np.abs(self.translation - other.translation).max()))

    def is_identity(self, tol: float | None = None) -> bool:
        tol = settings.tol_alg if tol is None else tol
        return self.distance(GroupElement.identity(self.dim)) < tol

    def to_dict(self):
        return {"matrix": self.linear_part.tolist(), "translation": self.translation.tolist()}


@dataclass(frozen=True, eq=False)
class GroupElement(AffineMap):
    """Affine isometry x -> A x + t with A orthogonal."""

    def __post_init__(self):
        super().__post_init__()
        A = self.linear_part
        if np.abs(A.T @ A - np.eye(A.shape[0])).max() >= 1e-9:
            raise ValidationError("group element is not orthogonal")

    def inverse(self) -> "GroupElement":
        A = self.linear_part
        return GroupElement(A.T, -A.T @ self.translation)

    @classmethod
    def identity(cls, dim: int) -> "GroupElement":
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def rotation(cls, angle: float) -> "GroupElement":
        c, s = np.cos(angle), np.sin(angle)
        return cls(np.array([[c, -s], [s, c]]))


class FiniteGroup:
    """Finite group of affine isometries with a precomputed Cayley table.

    ``elements[0]`` is the identity.  Construction fails if the list is not
    closed under composition or contains duplicates (the action must be
    effective).
    """

    def __init__(self, elements: Sequence[GroupElement], tol: float | None = None):
        tol = settings.tol_alg if tol is None else tol
        elements = list(elements)
        if not elements:
            raise ValidationError("a group needs at least the identity")
        d = elements[0].dim
        ident = GroupElement.identity(d)
        idx = [i for i, g in enumerate(elements) if g.distance(ident) < tol]
        if not idx:
            raise ValidationError("group does not contain the identity")
        i0 = idx[0]
        elements = [elements[i0]] + elements[:i0] + elements[i0 + 1:]
        self.elements: tuple[GroupElement, ...] = tuple(elements)
        self.dim = d
        self.tol = tol
        self.linear_parts = np.stack([g.linear_part for g in elements])
        self.translations = np.stack([g.translation for g in elements])
        n = len(elements)
        for i in range(n):
            for j in range(i + 1, n):
                if elements[i].distance(elements[j]) < tol:
                    raise ValidationError("group elements are not distinct (action not effective)")
        table = np.empty((n, n), dtype=np.int64)
        for i, g in enumerate(elements):
            for j, h in enumerate(elements):
                k = self.index_of(g.compose(h))
                if k is None:
                    raise ValidationError("element list is not closed under composition")
                table[i, j] = k
        self.cayley_table = table
        self._inverse = np.array([int(np.where(table[i] == 0)[0][0]) for i in range(n)])

    @classmethod
    def generated_by(cls, generators: Iterable[GroupElement], dim: int, max_order: int = 1024,
                     tol: float | None = None) -> "FiniteGroup":
        tol = settings.tol_alg if tol is None else tol
        gens = list(generators)
        found = [GroupElement.identity(dim)]
        queue = deque(found)
        while queue:
            g = queue.popleft()
            for s in gens:
                h = s.compose(g)
                if all(h.distance(e) >= tol for e in found):
                    # re-orthonormalise accumulated products
                    U, _, Vt = np.linalg.svd(h.linear_part)
                    h = GroupElement(U @ Vt, h.translation)
                    found.append(h)
                    queue.append(h)
                    if len(found) > max_order:
                        raise ValidationError("generators do not generate a finite group")
        return cls(found, tol)

    @classmethod
    def trivial(cls, dim: int) -> "FiniteGroup":
        return cls([GroupElement.identity(dim)])

    @classmethod
    def cyclic_rotations(cls, order: int) -> "FiniteGroup":
        return cls.generated_by([GroupElement.rotation(2 * np.pi / order)], 2)

    @property
    def order(self) -> int:
        return len(self.elements)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i) -> GroupElement:
        return self.elements[i]

    def is_trivial(self) -> bool:
        return self.order == 1

    @property
    def is_linear(self) -> bool:
        return bool(np.abs(self.translations).max() < self.tol)

    def index_of(self, g: AffineMap) -> int | None:
        dA = np.abs(self.linear_parts - g.linear_part).reshape(len(self.elements), -1).max(axis=1)
        dt = np.abs(self.translations - g.translation).max(axis=1)
        dist = np.maximum(dA, dt)
        k = int(np.argmin(dist))
        return k if dist[k] < self.tol else None

    def inverse_index(self, i: int) -> int:
        return int(self._inverse[i])

    def orbit(self, x) -> np.ndarray:
        """Array (|G|, ..., d) of all group translates of ``x``."""
        x = _vec(x)
        return np.einsum("gij,...j->g...i", self.linear_parts, x) + \
            self.translations.reshape((self.order,) + (1,) * (x.ndim - 1) + (self.dim,))

    def push(self, v) -> np.ndarray:
        v = _vec(v)
        return np.einsum("gij,...j->g...i", self.linear_parts, v)

    def is_subgroup(self, indices: Iterable[int]) -> bool:
        s = set(int(i) for i in indices)
        if 0 not in s:
            return False
        return all(int(self.cayley_table[i, j]) in s for i in s for j in s) and \
            all(self.inverse_index(i) in s for i in s)

    def subgroup(self, indices: Iterable[int]) -> "FiniteGroup":
        indices = sorted(set(int(i) for i in indices))
        if not self.is_subgroup(indices):
            raise ValidationError("indices do not form a subgroup")
        return FiniteGroup([self.elements[i] for i in indices], self.tol)

    def to_dict(self):
        return {"elements": [g.to_dict() for g in self.elements]}


def group_from_dict(spec: dict, dim: int) -> FiniteGroup:
    gens = []
    for g in spec.get("generators", []):
        if isinstance(g, dict):
            gens.append(_element_from_spec(g, dim))
        else:
            gens.append(_element_from_spec({"matrix": g}, dim))
    translations = spec.get("translations")
    if translations is not None:
        if len(translations) != len(gens):
            raise ConfigError("one translation per generator required")
        gens = [GroupElement(g.linear_part, t) for g, t in zip(gens, translations)]
    if "rotation_order" in spec:
        if dim != 2:
            raise ConfigError("rotation_order requires dimension 2")
        gens.append(GroupElement.rotation(2 * np.pi / int(spec["rotation_order"])))
    return FiniteGroup.generated_by(gens, dim)


def _element_from_spec(spec: dict, dim: int) -> GroupElement:
    try:
        A = np.atleast_2d(_vec(spec["matrix"]))
    except KeyError:
        raise ConfigError("map/generator needs a 'matrix'") from None
    if A.shape != (dim, dim):
        raise ConfigError(f"matrix has shape {A.shape}, expected {(dim, dim)}")
    try:
        return GroupElement(A, spec.get("translation"))
    except ValidationError as exc:
        raise ConfigError(f"invalid isometry: {exc}") from None


# ---------------------------------------------------------------------------
# Charts and atlases
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OrbifoldChart:
    id: str
    domain: Region
    group: FiniteGroup

    def __post_init__(self):
        if self.group.dim != self.domain.dim:
            raise ValidationError(f"chart {self.id}: group and domain dimensions differ")
        bnd = self.domain.boundary_sample()
        tol = 1e-9 * max(1.0, self.domain.scale)
        for g in self.group:
            if np.abs(self.domain.clearance(g.apply(bnd))).max() > tol or \
                    np.abs(self.domain.clearance(g.apply(self.domain.center)) - self.domain.clearance(self.domain.center)) > tol:
                raise ValidationError(f"chart {self.id}: domain is not invariant under the group")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def margin(self) -> float:
        return settings.margin_fraction * self.domain.scale

    def contains(self, x, margin: float = 0.0):
        return self.domain.contains(x, margin)

    def canonical(self, x, tol: float | None = None) -> np.ndarray:
        return _lexmin(self.group.orbit(x), settings.tol_alg if tol is None else tol)

    def orbit_distance(self, x, y) -> np.ndarray:
        """min_g |g x - y| (vectorised over leading axes)."""
        return np.linalg.norm(self.group.orbit(x) - _vec(y), axis=-1).min(axis=0)


def _lexmin(orbit: np.ndarray, tol: float) -> np.ndarray:
    """Lexicographic minimum over axis 0, coordinates compared with tolerance."""
    n = orbit.shape[0]
    cand = np.ones(orbit.shape[:-1], dtype=bool)
    for k in range(orbit.shape[-1]):
        vals = np.where(cand, orbit[..., k], np.inf)
        m = vals.min(axis=0)
        cand &= vals <= m + tol
    first = np.argmax(cand, axis=0)
    return np.take_along_axis(orbit, first[None, ..., None], axis=0)[0] if n else orbit


@dataclass(frozen=True, eq=False)
class ChangeOfCharts:
    """Affine isometry from ``region`` (intersected with the source domain) into the target chart."""

    source: str
    target: str
    region: Region
    map: GroupElement
    id: str = ""


class Atlas:
    """Finite orbifold atlas with an explicit list of changes of charts."""

    def __init__(self, charts: Sequence[OrbifoldChart], changes: Sequence[ChangeOfCharts] = (),
                 validate: bool = True):
        if not charts:
            raise ConfigError("an atlas needs at least one chart")
        self.charts: dict[str, OrbifoldChart] = {}
        for c in charts:
            if c.id in self.charts:
                raise ConfigError(f"duplicate chart id {c.id!r}")
            self.charts[c.id] = c
        dims = {c.dim for c in charts}
        if len(dims) != 1:
            raise ConfigError("all charts must have the same dimension")
        self.dim = dims.pop()
        named = []
        for k, ch in enumerate(changes):
            cid = ch.id or f"{ch.source}->{ch.target}#{k}"
            named.append(ChangeOfCharts(ch.source, ch.target, ch.region, ch.map, cid))
        self.changes: tuple[ChangeOfCharts, ...] = tuple(named)
        if validate:
            self.validate()

    @classmethod
    def single(cls, chart: OrbifoldChart) -> "Atlas":
        return cls([chart])

    def chart(self, cid: str) -> OrbifoldChart:
        try:
            return self.charts[cid]
        except KeyError:
            raise DomainError(f"unknown chart {cid!r}") from None

    @property
    def chart_ids(self) -> list[str]:
        return list(self.charts)

    def changes_from(self, cid: str) -> list[ChangeOfCharts]:
        return [c for c in self.changes if c.source == cid]

    def change_by_id(self, change_id: str) -> ChangeOfCharts:
        for c in self.changes:
            if c.id == change_id:
                return c
        raise KeyError(change_id)

    def in_change_domain(self, change: ChangeOfCharts, x, margin: float = 0.0):
        return change.region.contains(x, margin) & self.charts[change.source].domain.contains(x, margin)

    def connections(self, cid: str, x, margin: float = 0.0):
        """Depth-1 continuations of the point ``x`` of chart ``cid``.

        Yields ``(change, g_index, y)`` with ``g . x`` in the domain of the
        change and ``y = change(g . x)``.
        """
        chart = self.chart(cid)
        x = _vec(x)
        for change in self.changes_from(cid):
            for gi, g in enumerate(chart.group):
                gx = g.apply(x)
                if bool(self.in_change_domain(change, gx, margin)):
                    yield change, gi, change.map.apply(gx)

    def validate(self):
        for ch in self.changes:
            for end in (ch.source, ch.target):
                if end not in self.charts:
                    raise ConfigError(f"change {ch.id} references unknown chart {end!r}")
            if ch.region.dim != self.dim or ch.map.dim != self.dim:
                raise ConfigError(f"change {ch.id} has wrong dimension")
        for ch in self.changes:
            src = self.charts[ch.source]
            tgt = self.charts[ch.target]
            pts = ch.region.grid(9)
            pts = np.vstack([pts, ch.region.sample(np.random.default_rng(0), 64)])
            pts = pts[np.asarray(self.in_change_domain(ch, pts))]
            if pts.shape[0] == 0:
                raise ConfigError(f"change {ch.id} has an empty domain")
            img = ch.map.apply(pts)
            if np.any(tgt.domain.clearance(img) < -settings.tol_alg):
                raise ConfigError(f"change {ch.id} maps points outside chart {ch.target!r}")
            if not self._has_inverse(ch, pts, src):
                raise ConfigError(f"change {ch.id} has no declared inverse")
        self._check_change_consistency()

    def _has_inverse(self, ch: ChangeOfCharts, pts, src: OrbifoldChart) -> bool:
        img = ch.map.apply(pts)
        for mu in self.changes:
            if mu.source != ch.target or mu.target != ch.source:
                continue
            comp = mu.map.compose(ch.map)
            if src.group.index_of(comp) is None:
                continue
            inside = np.asarray(self.in_change_domain(mu, img, -settings.tol_alg))
            if inside.all():
                return True
        return False

    def _check_change_consistency(self):
        """Overlapping declared changes between the same charts differ by a target group element."""
        for i, a in enumerate(self.changes):
            for b in self.changes[i + 1:]:
                if (a.source, a.target) != (b.source, b.target):
                    continue
                pts = a.region.grid(9)
                pts = pts[np.asarray(self.in_change_domain(a, pts)) & np.asarray(self.in_change_domain(b, pts))]
                if pts.shape[0] == 0:
                    continue
                tgt = self.charts[a.target]
                rel = b.map.compose(a.map.inverse())
                if tgt.group.index_of(rel) is None:
                    raise ConfigError(f"changes {a.id} and {b.id} overlap but are not related by a group element")

    # -- (de)serialisation ------------------------------------------------
    @classmethod
    def from_dict(cls, spec: dict) -> "Atlas":
        try:
            dim = int(spec["dimension"])
            charts = []
            for c in spec["charts"]:
                group = group_from_dict(c.get("group", {}), dim)
                region = region_from_dict(c["region"])
                if region.dim != dim:
                    raise ConfigError(f"chart {c['id']}: region dimension {region.dim} != {dim}")
                try:
                    charts.append(OrbifoldChart(str(c["id"]), region, group))
                except ValidationError as exc:
                    raise ConfigError(str(exc)) from None
            changes = []
            for k, ch in enumerate(spec.get("changes", [])):
                changes.append(ChangeOfCharts(str(ch["source"]), str(ch["target"]),
                                              region_from_dict(ch["region"]),
                                              _element_from_spec(ch["map"], dim), str(ch.get("id", ""))))
        except KeyError as exc:
            raise ConfigError(f"atlas description is missing field {exc}") from None
        return cls(charts, changes)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dim,
            "charts": [{"id": c.id, "region": c.domain.to_dict(),
                        "group": {"generators": [g.to_dict() for g in c.group.elements[1:]]}}
                       for c in self.charts.values()],
            "changes": [{"id": ch.id, "source": ch.source, "target": ch.target,
                         "region": ch.region.to_dict(), "map": ch.map.to_dict()} for ch in self.changes],
        }


# ---------------------------------------------------------------------------
# Orbit and tangent points
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OrbitPoint:
    chart: str
    rep: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rep", _vec(self.rep).reshape(-1))

    def validate(self, atlas: Atlas) -> "OrbitPoint":
        if not bool(atlas.chart(self.chart).contains(self.rep)):
            raise DomainError(f"point {self.rep} is outside chart {self.chart!r}")
        return self


@dataclass(frozen=True, eq=False)
class TangentOrbVector:
    chart: str
    base: np.ndarray
    vec: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", _vec(self.base).reshape(-1))
        object.__setattr__(self, "vec", _vec(self.vec).reshape(-1))
        if self.base.shape != self.vec.shape:
            raise ValidationError("base and vector dimensions differ")

    def validate(self, atlas: Atlas) -> "TangentOrbVector":
        if not bool(atlas.chart(self.chart).contains(self.base)):
            raise DomainError(f"base point {self.base} is outside chart {self.chart!r}")
        return self

    @property
    def point(self) -> OrbitPoint:
        return OrbitPoint(self.chart, self.base)

    def scaled(self, s: float) -> "TangentOrbVector":
        return TangentOrbVector(self.chart, self.base, s * self.vec)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def _require_inside(chart: OrbifoldChart, x):
    if not bool(chart.contains(x)):
        raise DomainError(f"point {np.asarray(x)} is outside chart {chart.id!r}")


def isotropy_indices(chart: OrbifoldChart, x, tol: float | None = None) -> list[int]:
    tol = settings.tol_alg if tol is None else tol
    x = _vec(x)
    dist = np.linalg.norm(chart.group.orbit(x) - x, axis=-1)
    return [int(i) for i in np.nonzero(dist < tol)[0]]


def isotropy_group(chart: OrbifoldChart, x, tol: float | None = None) -> FiniteGroup:
    """Local group {g : g x = x} of the point ``x`` of ``chart``."""
    _require_inside(chart, x)
    idx = isotropy_indices(chart, x, tol)
    if not chart.group.is_subgroup(idx):
        raise ValidationError("isotropy set is not a subgroup; tolerance too loose")
    return chart.group.subgroup(idx)


def is_singular(chart: OrbifoldChart, x, tol: float | None = None) -> bool:
    _require_inside(chart, x)
    return len(isotropy_indices(chart, x, tol)) > 1


def singular_mask(chart: OrbifoldChart, x, tol: float | None = None) -> np.ndarray:
    """Vectorised singularity test for points (N, d)."""
    tol = settings.tol_alg if tol is None else tol
    x = _vec(x)
    dist = np.linalg.norm(chart.group.orbit(x) - x, axis=-1)
    return (dist < tol).sum(axis=0) > 1


def orbit_distance(p: OrbitPoint, q: OrbitPoint, atlas: Atlas) -> float:
    """Smallest distance between q's group orbit and depth-1 images of p (inf if unrelated)."""
    cp, cq = atlas.chart(p.chart), atlas.chart(q.chart)
    best = np.inf
    if p.chart == q.chart:
        best = float(cq.orbit_distance(p.rep, q.rep))
    for change, _, y in atlas.connections(p.chart, p.rep):
        if change.target == q.chart:
            best = min(best, float(cq.orbit_distance(y, q.rep)))
    del cp
    return best


def orbit_equal(p: OrbitPoint, q: OrbitPoint, atlas: Atlas, tol: float | None = None) -> bool:
    tol = settings.tol_alg if tol is None else tol
    return orbit_distance(p, q, atlas) < tol


def canonical_representative(p: OrbitPoint, atlas: Atlas | OrbifoldChart) -> np.ndarray:
    """Lexicographically smallest group translate of ``p.rep``."""
    chart = atlas if isinstance(atlas, OrbifoldChart) else atlas.chart(p.chart)
    return chart.canonical(p.rep)


def tangent_match(xi: TangentOrbVector, zeta: TangentOrbVector, atlas: Atlas,
                  tol: float | None = None) -> AffineMap | None:
    """Affine isometry carrying ``xi`` to ``zeta`` (group element and/or change), or None."""
    tol = settings.tol_alg if tol is None else tol
    cx = atlas.chart(xi.chart)
    cz = atlas.chart(zeta.chart)
    candidates: list[AffineMap] = []
    if xi.chart == zeta.chart:
        candidates.extend(cx.group.elements)
    for change, gi, _ in atlas.connections(xi.chart, xi.base):
        if change.target != zeta.chart:
            continue
        lam = change.map.compose(cx.group[gi])
        candidates.extend(h.compose(lam) for h in cz.group)
    for m in candidates:
        if np.linalg.norm(m.apply(xi.base) - zeta.base) < tol and \
                np.linalg.norm(m.push(xi.vec) - zeta.vec) < tol:
            return m
    return None


def tangent_equal(xi: TangentOrbVector, zeta: TangentOrbVector, atlas: Atlas, tol: float | None = None) -> bool:
    return tangent_match(xi, zeta, atlas, tol) is not None


def fixed_subspace(elements: Iterable[AffineMap] | FiniteGroup, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (d, k) of the vectors fixed by every linear part."""
    elements = list(elements)
    d = elements[0].dim
    stacked = np.vstack([g.linear_part - np.eye(d) for g in elements])
    return null_space(stacked, rcond=tol)


def fixed_point_set(g: AffineMap, tol: float = 1e-9):
    """Fixed points of an affine map: (particular point, basis of directions) or None if empty."""
    d = g.dim
    M = g.linear_part - np.eye(d)
    p, *_ = np.linalg.lstsq(M, -g.translation, rcond=None)
    if np.linalg.norm(M @ p + g.translation) > tol:
        return None
    return p, null_space(M, rcond=tol)


def sample_singular_points(chart: OrbifoldChart, per_subspace: int = 20, seed: int = 0) -> np.ndarray:
    """Points on the fixed sets of non-identity group elements, inside the chart."""
    rng = np.random.default_rng(seed)
    pts = []
    for g in chart.group.elements[1:]:
        fp = fixed_point_set(g)
        if fp is None:
            continue
        p, basis = fp
        if basis.shape[1] == 0:
            cand = p[None, :]
        else:
            coeffs = rng.uniform(-1, 1, size=(4 * per_subspace, basis.shape[1])) * chart.domain.scale * 1.5
            cand = p + coeffs @ basis.T
        cand = cand[np.asarray(chart.contains(cand, chart.margin))]
        pts.append(cand[:per_subspace])
    if not pts:
        return np.zeros((0, chart.dim))
    return np.vstack(pts)
