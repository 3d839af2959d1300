"""Orbisections: compatible families of equivariant vector fields on the charts of an atlas."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .config import settings
from .errors import ConfigError, CoverageError, ValidationError
from .metric import fd_derivative, flat_top_bump, polynomial_from_terms
from .orbifold_core import (Atlas, Ball, Box, ChangeOfCharts, FiniteGroup, GroupElement, OrbifoldChart, Region,
                            fixed_subspace, isotropy_group, sample_singular_points)
from .polynomial import Polynomial


def _pts(x):
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Per-chart vector fields
# ---------------------------------------------------------------------------

class ChartVectorField:
    """Vector field on a chart; ``__call__`` and ``jacobian`` act on batches (..., d)."""

    analytic = False

    def __init__(self, dim: int, h_fd: float | None = None):
        self.dim = dim
        self.h_fd = settings.h_fd if h_fd is None else h_fd

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        """(..., d, d) with [i, j] = d f_i / d x_j."""
        x = _pts(x)
        return np.swapaxes(fd_derivative(self, x, self.h_fd, (self.dim,)), -1, -2)

    def is_zero(self) -> bool:
        return False


class ZeroField(ChartVectorField):
    analytic = True

    def __call__(self, x):
        return np.zeros_like(_pts(x))

    def jacobian(self, x):
        x = _pts(x)
        return np.zeros(x.shape + (self.dim,))

    def is_zero(self):
        return True


class PolynomialField(ChartVectorField):
    analytic = True

    def __init__(self, poly: Polynomial):
        if poly.dim != poly.out:
            raise ConfigError("a vector field polynomial maps R^d to R^d")
        super().__init__(poly.dim)
        self.poly = poly
        self._grad = poly.gradient_polys()

    @classmethod
    def linear(cls, matrix) -> "PolynomialField":
        return cls(Polynomial.linear(matrix))

    @classmethod
    def constant(cls, vector) -> "PolynomialField":
        vector = np.asarray(vector, dtype=float)
        return cls(Polynomial.constant_in(vector.shape[0], vector))

    def __call__(self, x):
        return self.poly(x)

    def jacobian(self, x):
        x = _pts(x)
        return np.stack([p(x) for p in self._grad], axis=-1)

    def is_zero(self):
        return self.poly.is_zero()


class BumpField(ChartVectorField):
    """beta(|x - c| / r) * w with the flat-top bump profile."""

    analytic = True

    def __init__(self, center, radius: float, vector, plateau: float = 0.5):
        center = _pts(center).reshape(-1)
        super().__init__(center.shape[0])
        self.center = center
        self.radius = float(radius)
        self.vector = _pts(vector).reshape(-1)
        self.plateau = plateau

    def _profile(self, s):
        return flat_top_bump(s, self.plateau)

    def __call__(self, x):
        x = _pts(x)
        s = np.linalg.norm(x - self.center, axis=-1) / self.radius
        return self._profile(s)[..., None] * self.vector

    def jacobian(self, x):
        x = _pts(x)
        diff = x - self.center
        r = np.linalg.norm(diff, axis=-1)
        s = r / self.radius
        h = 1e-6
        dbeta = (self._profile(s + h) - self._profile(np.maximum(s - h, 0.0))) / (s + h - np.maximum(s - h, 0.0))
        safe = np.where(r > 0, r, 1.0)
        grad = np.where((r > 0)[..., None], (dbeta / (self.radius * safe))[..., None] * diff, 0.0)
        return self.vector[:, None] * grad[..., None, :]


class AveragedField(ChartVectorField):
    """(1/|G|) sum_g A_g^{-1} f(g x): the equivariant projection of ``base``."""

    def __init__(self, base: ChartVectorField, group: FiniteGroup):
        super().__init__(base.dim)
        self.base = base
        self.group = group
        self.analytic = base.analytic

    def __call__(self, x):
        x = _pts(x)
        return sum(self.base(g.apply(x)) @ g.linear_part for g in self.group) / self.group.order

    def jacobian(self, x):
        x = _pts(x)
        acc = 0.0
        for g in self.group:
            A = g.linear_part
            acc = acc + np.einsum("ki,...kl,lj->...ij", A, self.base.jacobian(g.apply(x)), A)
        return acc / self.group.order


class SumField(ChartVectorField):
    def __init__(self, terms: list[tuple[float, ChartVectorField]]):
        super().__init__(terms[0][1].dim)
        self.terms = terms
        self.analytic = all(f.analytic for _, f in terms)

    def __call__(self, x):
        return sum(c * f(x) for c, f in self.terms)

    def jacobian(self, x):
        return sum(c * f.jacobian(x) for c, f in self.terms)


class CallableField(ChartVectorField):
    """Field given by Python callables; the Jacobian falls back to central differences."""

    def __init__(self, dim: int, func: Callable, jac: Callable | None = None, h_fd: float | None = None):
        super().__init__(dim, h_fd)
        self.func = func
        self.jac = jac
        self.analytic = jac is not None

    def __call__(self, x):
        return self.func(_pts(x))

    def jacobian(self, x):
        if self.jac is not None:
            return self.jac(_pts(x))
        return super().jacobian(x)


class BracketField(ChartVectorField):
    """D a . b - D b . a (negative of the vector-field Lie bracket)."""

    def __init__(self, a: ChartVectorField, b: ChartVectorField):
        super().__init__(a.dim)
        self.a, self.b = a, b

    def __call__(self, x):
        x = _pts(x)
        return np.einsum("...ij,...j->...i", self.a.jacobian(x), self.b(x)) - \
            np.einsum("...ij,...j->...i", self.b.jacobian(x), self.a(x))


class TransportedField(ChartVectorField):
    """f_W(z) = A_h A_lam f_V(lam^{-1}(h^{-1} z)) over covering changes lam: V -> W."""

    analytic = True

    def __init__(self, pieces: list, dim: int, atlas: Atlas):
        super().__init__(dim)
        self.pieces = pieces        # (change, h, source field)
        self.atlas = atlas

    def _evaluate(self, z, want_jac: bool):
        z = np.atleast_2d(_pts(z))
        val = np.full(z.shape, np.nan)
        jac = np.full(z.shape + (self.dim,), np.nan) if want_jac else None
        spread = np.zeros(z.shape[0])
        for change, h, f in self.pieces:
            M = h.compose(change.map)          # V -> W
            Minv = M.inverse()
            pre = Minv.apply(z)
            ok = np.asarray(self.atlas.in_change_domain(change, change.map.inverse().apply(h.inverse().apply(z))))
            if not np.any(ok):
                continue
            vals = f(pre[ok]) @ M.linear_part.T
            fresh = ok & np.isnan(val[:, 0])
            both = ok & ~np.isnan(val[:, 0])
            idx_ok = np.nonzero(ok)[0]
            pos = {k: i for i, k in enumerate(idx_ok)}
            if np.any(both):
                ib = [pos[k] for k in np.nonzero(both)[0]]
                spread[both] = np.maximum(spread[both], np.abs(vals[ib] - val[both]).max(axis=-1))
            if np.any(fresh):
                ifr = [pos[k] for k in np.nonzero(fresh)[0]]
                val[fresh] = vals[ifr]
                if want_jac:
                    jac[fresh] = np.einsum("ik,...kl,lj->...ij", M.linear_part, f.jacobian(pre[fresh]),
                                           Minv.linear_part)
        return val, jac, spread

    def __call__(self, x):
        x = _pts(x)
        val, _, _ = self._evaluate(x.reshape(-1, self.dim), False)
        return val.reshape(x.shape)

    def jacobian(self, x):
        x = _pts(x)
        _, jac, _ = self._evaluate(x.reshape(-1, self.dim), True)
        return jac.reshape(x.shape + (self.dim,))

    def choice_residual(self, z) -> float:
        _, _, spread = self._evaluate(z, False)
        return float(spread.max(initial=0.0))


# ---------------------------------------------------------------------------
# Orbisections
# ---------------------------------------------------------------------------

class Orbisection:
    """Canonical lifts of a section of the tangent orbibundle, one field per chart."""

    def __init__(self, atlas: Atlas, fields: Mapping[str, ChartVectorField], support=None,
                 validate: bool = False, tol: float | None = None):
        missing = [c for c in atlas.chart_ids if c not in fields]
        if missing:
            raise ConfigError(f"orbisection missing lifts for charts {missing}")
        self.atlas = atlas
        self.fields = dict(fields)
        self.support_hint = support
        if validate:
            tol = settings.tol_alg if tol is None else tol
            eq = equivariance_residual(self)
            if eq >= tol:
                raise ValidationError(f"lifts are not equivariant (residual {eq:.3g})")
            cp = compatibility_residual(self)
            if cp >= tol:
                raise ValidationError(f"lifts are not compatible with the changes of charts (residual {cp:.3g})")

    def __getitem__(self, cid: str) -> ChartVectorField:
        return self.fields[cid]

    def __call__(self, cid: str, x) -> np.ndarray:
        return self.fields[cid](x)

    @classmethod
    def zero(cls, atlas: Atlas) -> "Orbisection":
        return cls(atlas, {c: ZeroField(atlas.dim) for c in atlas.chart_ids})

    @classmethod
    def uniform(cls, atlas: Atlas, field: ChartVectorField, **kw) -> "Orbisection":
        """Same lift on every chart (appropriate when all changes are group elements or identities)."""
        return cls(atlas, {c: field for c in atlas.chart_ids}, **kw)

    def scaled(self, a: float) -> "Orbisection":
        return linear_combination(Orbisection.zero(self.atlas), self, a)

    def __add__(self, other: "Orbisection") -> "Orbisection":
        return linear_combination(self, other, 1.0)

    def __sub__(self, other: "Orbisection") -> "Orbisection":
        return linear_combination(self, other, -1.0)

    def __neg__(self) -> "Orbisection":
        return self.scaled(-1.0)


def equivariant_polynomial(poly: Polynomial, group: FiniteGroup) -> PolynomialField:
    """Project a polynomial field onto the equivariant ones (result stays polynomial)."""
    acc = Polynomial.zero(poly.dim, poly.out)
    for g in group:
        A = g.linear_part
        acc = acc + poly.compose_affine(A, g.translation).left_matmul(A.T)
    return PolynomialField(acc * (1.0 / group.order))


def equivariant_average(field: ChartVectorField, group: FiniteGroup) -> ChartVectorField:
    if isinstance(field, PolynomialField):
        return equivariant_polynomial(field.poly, group)
    return AveragedField(field, group)


def field_equivariance_residual(field: ChartVectorField, chart: OrbifoldChart, points=None) -> float:
    """max |A_g f(x) - f(g x)| on a grid."""
    x = chart.domain.grid(settings.grid_fields) if points is None else _pts(points)
    fx = field(x)
    res = 0.0
    for g in chart.group:
        res = max(res, float(np.abs(fx @ g.linear_part.T - field(g.apply(x))).max(initial=0.0)))
    return res


def equivariance_residual(sigma: Orbisection, n: int | None = None) -> float:
    res = 0.0
    for cid, chart in sigma.atlas.charts.items():
        pts = chart.domain.grid(settings.grid_fields if n is None else n)
        res = max(res, field_equivariance_residual(sigma[cid], chart, pts))
    return res


def compatibility_residual(sigma: Orbisection, n: int | None = None) -> float:
    """max |f_target(phi x) - D phi f_source(x)| over declared changes."""
    atlas = sigma.atlas
    res = 0.0
    for ch in atlas.changes:
        x = ch.region.grid(settings.grid_fields if n is None else n)
        x = x[np.asarray(atlas.in_change_domain(ch, x))]
        if x.shape[0] == 0:
            continue
        lhs = sigma[ch.target](ch.map.apply(x))
        rhs = ch.map.push(sigma[ch.source](x))
        res = max(res, float(np.abs(lhs - rhs).max()))
    return res


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def canonical_lift_transport(partial: Mapping[str, ChartVectorField], target: str, atlas: Atlas,
                             n: int | None = None) -> TransportedField:
    """Lift on ``target`` induced from lifts on other charts through declared changes."""
    tchart = atlas.chart(target)
    pieces = []
    for ch in atlas.changes:
        if ch.target != target or ch.source not in partial:
            continue
        for h in tchart.group:
            pieces.append((ch, h, partial[ch.source]))
    if target in partial:
        ident = ChangeOfCharts(target, target, tchart.domain, GroupElement.identity(atlas.dim), "identity")
        pieces.insert(0, (ident, tchart.group[0], partial[target]))
    field = TransportedField(pieces, atlas.dim, atlas)
    z = tchart.domain.grid(settings.grid_fields if n is None else n)
    vals = field(z)
    bad = np.isnan(vals[:, 0])
    if np.any(bad):
        raise CoverageError(f"{int(bad.sum())} grid points of chart {target!r} are not covered", z[bad])
    return field


def linear_combination(sigma: Orbisection, tau: Orbisection, a: float) -> Orbisection:
    """sigma + a * tau, chart by chart."""
    if sigma.atlas is not tau.atlas:
        raise ConfigError("orbisections live on different atlases")
    fields = {}
    for cid in sigma.atlas.chart_ids:
        f, g = sigma[cid], tau[cid]
        if isinstance(f, PolynomialField) and isinstance(g, PolynomialField):
            fields[cid] = PolynomialField(f.poly + a * g.poly)
        elif g.is_zero() or a == 0.0:
            fields[cid] = f
        elif f.is_zero() and a == 1.0:
            fields[cid] = g
        else:
            fields[cid] = SumField([(1.0, f), (float(a), g)])
    return Orbisection(sigma.atlas, fields)


def polynomial_bracket(p: Polynomial, q: Polynomial) -> Polynomial:
    """Dp . q - Dq . p for polynomial vector fields."""
    def directional(a: Polynomial, b: Polynomial) -> Polynomial:
        acc = Polynomial.zero(a.dim, a.out)
        for k in range(a.dim):
            acc = acc + a.partial(k).times(b.component(k))
        return acc
    # difference of two simplified terms, so bracket(q, p) is the exact negative
    return directional(p, q) - directional(q, p)


def bracket(sigma: Orbisection, tau: Orbisection) -> Orbisection:
    """Lifts D sigma . tau - D tau . sigma (the negative of the vector-field bracket)."""
    fields = {}
    for cid in sigma.atlas.chart_ids:
        f, g = sigma[cid], tau[cid]
        if isinstance(f, PolynomialField) and isinstance(g, PolynomialField):
            fields[cid] = PolynomialField(polynomial_bracket(f.poly, g.poly))
        else:
            fields[cid] = BracketField(f, g)
    return Orbisection(sigma.atlas, fields)


def check_preserves_local_groups(sigma: Orbisection, per_subspace: int = 20) -> float:
    """max distance of sigma(x) from the fixed subspace of the local group at sampled singular x."""
    res = 0.0
    for cid, chart in sigma.atlas.charts.items():
        pts = sample_singular_points(chart, per_subspace)
        if pts.shape[0] == 0:
            continue
        vals = sigma[cid](pts)
        for x, v in zip(pts, vals):
            basis = fixed_subspace(isotropy_group(chart, x, tol=1e-7))
            resid = v - basis @ (basis.T @ v) if basis.size else v
            res = max(res, float(np.linalg.norm(resid)))
    return res


def c1_norm(sigma: Orbisection | ChartVectorField, chart: OrbifoldChart | str, region: Region | None = None,
            n: int | None = None) -> float:
    """max over a grid of |f|_inf and of every first partial derivative."""
    if isinstance(sigma, Orbisection):
        cid = chart if isinstance(chart, str) else chart.id
        field = sigma[cid]
        chart = sigma.atlas.chart(cid)
    else:
        field = sigma
    region = chart.domain if region is None else region
    x = region.grid(settings.grid_fields if n is None else n, shrink=0.0)
    x = x[np.asarray(chart.contains(x))] if x.shape[0] else x
    if x.shape[0] == 0:
        return 0.0
    return float(max(np.abs(field(x)).max(), np.abs(field.jacobian(x)).max()))


def support(sigma: Orbisection, n: int | None = None, tol: float = 0.0) -> dict[str, Region | None]:
    """Conservative bounding region of the nonzero grid samples, one grid cell wider."""
    out: dict[str, Region | None] = {}
    n = settings.grid_fields if n is None else n
    for cid, chart in sigma.atlas.charts.items():
        pts = chart.domain.grid(n, shrink=0.0)
        if pts.shape[0] == 0:
            out[cid] = None
            continue
        lo, hi = chart.domain.bounding_box()
        cell = float(np.max((hi - lo) / max(n - 1, 1)))
        nz = np.abs(sigma[cid](pts)).max(axis=-1) > tol
        if not np.any(nz):
            out[cid] = None
        elif np.all(nz):
            out[cid] = chart.domain
        else:
            p = pts[nz]
            if isinstance(chart.domain, Ball):
                c = 0.5 * (p.min(axis=0) + p.max(axis=0))
                out[cid] = Ball(c, float(np.linalg.norm(p - c, axis=-1).max()) + cell)
            else:
                c = 0.5 * (p.min(axis=0) + p.max(axis=0))
                out[cid] = Box(c, 0.5 * (p.max(axis=0) - p.min(axis=0)) + cell)
    return out


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def field_from_dict(spec: dict, chart: OrbifoldChart) -> ChartVectorField:
    """``{"kind": "polynomial" | "linear" | "constant" | "bump" | "sum" | "zero", ...}``."""
    d = chart.dim
    kind = spec.get("kind", "polynomial")
    if kind == "zero":
        f = ZeroField(d)
    elif kind == "polynomial":
        f = PolynomialField(polynomial_from_terms(spec.get("terms", []), d, d))
    elif kind == "linear":
        f = PolynomialField.linear(spec["matrix"])
    elif kind == "constant":
        f = PolynomialField.constant(spec["vector"])
    elif kind == "bump":
        f = BumpField(spec["center"], spec["radius"], spec["vector"], spec.get("plateau", 0.5))
    elif kind == "sum":
        terms = [(float(c), field_from_dict(s, chart)) for c, s in spec["terms"]]
        polys = [t for t in terms if isinstance(t[1], PolynomialField)]
        if len(polys) == len(terms):
            acc = Polynomial.zero(d, d)
            for c, t in terms:
                acc = acc + c * t.poly
            f = PolynomialField(acc)
        else:
            f = SumField(terms)
    else:
        raise ConfigError(f"unknown field kind {kind!r}")
    if f.dim != d:
        raise ConfigError(f"field dimension {f.dim} does not match chart dimension {d}")
    if spec.get("equivariant", False):
        f = equivariant_average(f, chart.group)
    return f


def orbisection_from_dict(spec: dict, atlas: Atlas, validate: bool = True) -> Orbisection:
    """Per-chart field specs; ``"*"`` (or a bare spec with ``kind``) applies to every chart without its own entry."""
    if "kind" in spec:
        spec = {"*": spec}
    fields = {}
    for cid in atlas.chart_ids:
        s = spec.get(cid, spec.get("*"))
        if s is None:
            raise ConfigError(f"no field given for chart {cid!r}")
        fields[cid] = field_from_dict(s, atlas.chart(cid))
    return Orbisection(atlas, fields, validate=validate)
