"""Riemannian metrics on orbifold charts.

Metric fields evaluate on batches of points: ``tensor(x)`` has shape
(..., d, d) and ``dtensor(x)[..., k, i, j]`` is the partial derivative of
g_ij in direction k.
"""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .config import settings
from .errors import (ConfigError, CoverageError, NumericalError, UnsupportedLiftError,
                     ValidationError)
from .orbifold_core import AffineMap, Atlas, FiniteGroup, OrbifoldChart, Region
from .polynomial import Polynomial


def _pts(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def fd_derivative(func, x, h: float, out_shape: tuple) -> np.ndarray:
    """Central differences; returns (..., d) + out_shape with the derivative axis first."""
    x = _pts(x)
    d = x.shape[-1]
    parts = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        parts.append((func(x + e) - func(x - e)) / (2 * h))
    return np.stack(parts, axis=x.ndim - 1)


class MetricField:
    """Abstract Riemannian metric on a chart."""

    flat = False

    def __init__(self, dim: int, derivative: str = "analytic", h_fd: float | None = None):
        if derivative not in ("analytic", "fd"):
            raise ConfigError(f"unknown derivative mode {derivative!r}")
        self.dim = dim
        self.derivative = derivative
        self.h_fd = settings.h_fd if h_fd is None else h_fd

    def tensor(self, x) -> np.ndarray:
        raise NotImplementedError

    def _dtensor(self, x) -> np.ndarray:
        raise NotImplementedError

    def dtensor(self, x) -> np.ndarray:
        if self.derivative == "fd":
            return fd_derivative(self.tensor, x, self.h_fd, (self.dim, self.dim))
        return self._dtensor(x)

    def with_derivative(self, mode: str, h_fd: float | None = None) -> "MetricField":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.derivative = mode
        if h_fd is not None:
            clone.h_fd = h_fd
        return clone

    def inner(self, x, v, w) -> np.ndarray:
        return np.einsum("...i,...ij,...j->...", _pts(v), self.tensor(x), _pts(w))

    def norm2(self, x, v) -> np.ndarray:
        return self.inner(x, v, v)

    def christoffel(self, x) -> np.ndarray:
        """Gamma[..., k, i, j] of the Levi-Civita connection."""
        g = self.tensor(x)
        try:
            ginv = np.linalg.inv(g)
        except np.linalg.LinAlgError:
            raise NumericalError("singular metric tensor") from None
        if not np.all(np.isfinite(ginv)):
            raise NumericalError("singular metric tensor")
        dg = self.dtensor(x)
        # T[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
        T = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
        return 0.5 * np.einsum("...kl,...lij->...kij", ginv, T)

    def acceleration(self, x, v) -> np.ndarray:
        """Geodesic acceleration -Gamma^k_ij v^i v^j."""
        return -np.einsum("...kij,...i,...j->...k", self.christoffel(x), v, v)

    def check_spd(self, x, tol: float | None = None) -> None:
        tol = settings.tol_alg if tol is None else tol
        g = self.tensor(_pts(x).reshape(-1, self.dim))
        if np.abs(g - np.swapaxes(g, -1, -2)).max(initial=0.0) >= tol:
            raise ValidationError("metric tensor is not symmetric")
        if np.linalg.eigvalsh(g).min(initial=np.inf) <= 0:
            raise ValidationError("metric tensor is not positive definite")


class ConstantMetric(MetricField):
    flat = True

    def __init__(self, matrix, **kw):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        super().__init__(matrix.shape[0], **kw)
        self.matrix = matrix
        self.check_spd(np.zeros(self.dim))

    @classmethod
    def identity(cls, dim: int) -> "ConstantMetric":
        return cls(np.eye(dim))

    def tensor(self, x):
        x = _pts(x)
        return np.broadcast_to(self.matrix, x.shape[:-1] + self.matrix.shape).copy()

    def _dtensor(self, x):
        x = _pts(x)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def acceleration(self, x, v):
        return np.zeros_like(_pts(v))

    def christoffel(self, x):
        return np.zeros(_pts(x).shape[:-1] + (self.dim,) * 3)


class ConformalMetric(MetricField):
    """exp(2 phi(x)) * I with a polynomial conformal exponent phi."""

    def __init__(self, phi: Polynomial, **kw):
        if phi.out != 1:
            raise ConfigError("conformal exponent must be scalar")
        super().__init__(phi.dim, **kw)
        self.phi = phi
        self._grad = Polynomial.stack(phi.gradient_polys())

    def tensor(self, x):
        x = _pts(x)
        f = np.exp(2.0 * self.phi(x)[..., 0])
        return f[..., None, None] * np.eye(self.dim)

    def grad_phi(self, x):
        x = _pts(x)
        return self._grad(x)

    def _dtensor(self, x):
        x = _pts(x)
        f = np.exp(2.0 * self.phi(x)[..., 0])
        a = self.grad_phi(x)
        return 2.0 * (a * f[..., None])[..., :, None, None] * np.eye(self.dim)

    def acceleration(self, x, v):
        if self.derivative == "fd":
            return super().acceleration(x, v)
        v = _pts(v)
        a = self.grad_phi(x)
        av = (a * v).sum(axis=-1, keepdims=True)
        vv = (v * v).sum(axis=-1, keepdims=True)
        return -(2.0 * av * v - vv * a)


class PolynomialMetric(MetricField):
    """Metric whose entries are polynomials; ``entries`` maps R^d -> R^(d*d)."""

    def __init__(self, entries: Polynomial, **kw):
        d = entries.dim
        if entries.out != d * d:
            raise ConfigError("polynomial metric needs d*d entries")
        super().__init__(d, **kw)
        self.entries = entries
        self._grad = entries.gradient_polys()

    def tensor(self, x):
        x = _pts(x)
        g = self.entries(x).reshape(x.shape[:-1] + (self.dim, self.dim))
        return 0.5 * (g + np.swapaxes(g, -1, -2))

    def _dtensor(self, x):
        x = _pts(x)
        parts = []
        for p in self._grad:
            g = p(x).reshape(x.shape[:-1] + (self.dim, self.dim))
            parts.append(0.5 * (g + np.swapaxes(g, -1, -2)))
        return np.stack(parts, axis=x.ndim - 1)


class AveragedMetric(MetricField):
    """(1/|G|) sum_g A_g^T m(g x) A_g for a raw metric m."""

    def __init__(self, raw: MetricField, group: FiniteGroup, **kw):
        kw.setdefault("derivative", raw.derivative)
        super().__init__(raw.dim, **kw)
        self.raw = raw
        self.group = group

    def tensor(self, x):
        x = _pts(x)
        acc = 0.0
        for g in self.group:
            A = g.linear_part
            acc = acc + np.einsum("ki,...kl,lj->...ij", A, self.raw.tensor(g.apply(x)), A)
        return acc / self.group.order

    def _dtensor(self, x):
        x = _pts(x)
        acc = 0.0
        for g in self.group:
            A = g.linear_part
            dg = self.raw.dtensor(g.apply(x))       # [..., m, k, l] wrt (g x)_m
            acc = acc + np.einsum("mn,ki,...mkl,lj->...nij", A, A, dg, A)
        return acc / self.group.order


class PullbackMetric(MetricField):
    """(phi^* g)_x(v, w) = g_{phi(x)}(D phi v, D phi w)."""

    def __init__(self, base: MetricField, phi, jacobian, affine: bool = False, **kw):
        kw.setdefault("derivative", "analytic" if affine else "fd")
        super().__init__(base.dim, **kw)
        self.base = base
        self.phi = phi
        self.jac = jacobian
        self.affine = affine

    def tensor(self, x):
        x = _pts(x)
        J = self.jac(x)
        return np.einsum("...ki,...kl,...lj->...ij", J, self.base.tensor(self.phi(x)), J)

    def _dtensor(self, x):
        if not self.affine:
            return fd_derivative(self.tensor, x, self.h_fd, (self.dim, self.dim))
        x = _pts(x)
        A = self.jac(np.zeros(self.dim))
        dg = self.base.dtensor(self.phi(x))
        return np.einsum("mn,ki,...mkl,lj->...nij", A, A, dg, A)


class OrbifoldMetric:
    """One metric field per chart of an atlas."""

    def __init__(self, atlas: Atlas, fields: Mapping[str, MetricField], validate: bool = True):
        missing = [c for c in atlas.chart_ids if c not in fields]
        if missing:
            raise ConfigError(f"metric missing for charts {missing}")
        self.atlas = atlas
        self.fields = dict(fields)
        if validate:
            for cid, m in self.fields.items():
                chart = atlas.chart(cid)
                m.check_spd(chart.domain.grid(settings.grid_metric))
                res = check_equivariance(m, chart)
                if res >= settings.tol_metric:
                    raise ValidationError(f"metric on chart {cid!r} is not group invariant (residual {res:.3g})")
            res = check_compatibility(atlas, self)
            if res >= settings.tol_metric:
                raise ValidationError(f"metric is not compatible with the changes of charts (residual {res:.3g})")

    def __getitem__(self, cid: str) -> MetricField:
        return self.fields[cid]

    @property
    def flat(self) -> bool:
        return all(m.flat for m in self.fields.values())

    @classmethod
    def flat_on(cls, atlas: Atlas) -> "OrbifoldMetric":
        return cls(atlas, {c: ConstantMetric.identity(atlas.dim) for c in atlas.chart_ids})


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def _grid_for(target, points=None, n: int | None = None) -> np.ndarray:
    if points is not None:
        return _pts(points).reshape(-1, _pts(points).shape[-1])
    if isinstance(target, OrbifoldChart):
        return target.domain.grid(settings.grid_metric if n is None else n)
    if isinstance(target, Region):
        return target.grid(settings.grid_metric if n is None else n)
    raise ValueError("sample points required")


def average_metric(chart: OrbifoldChart | FiniteGroup, raw: MetricField, points=None) -> MetricField:
    """Group average of ``raw``; exact (constant) for constant inputs."""
    group = chart.group if isinstance(chart, OrbifoldChart) else chart
    pts = _grid_for(chart, points) if isinstance(chart, OrbifoldChart) or points is not None else None
    if pts is not None:
        raw.check_spd(pts)
    if isinstance(raw, ConstantMetric):
        acc = sum(g.linear_part.T @ raw.matrix @ g.linear_part for g in group) / group.order
        return ConstantMetric(acc)
    return AveragedMetric(raw, group)


def check_equivariance(metric: MetricField, chart: OrbifoldChart | FiniteGroup, points=None) -> float:
    """max |g_{g x}(A e_i, A e_j) - g_x(e_i, e_j)| over sample points and group elements."""
    group = chart.group if isinstance(chart, OrbifoldChart) else chart
    x = _grid_for(chart, points)
    Gx = metric.tensor(x)
    res = 0.0
    for g in group:
        A = g.linear_part
        Ggx = np.einsum("ki,...kl,lj->...ij", A, metric.tensor(g.apply(x)), A)
        res = max(res, float(np.abs(Ggx - Gx).max(initial=0.0)))
    return res


def check_compatibility(atlas: Atlas, metric: OrbifoldMetric | Mapping[str, MetricField],
                        n: int | None = None) -> float:
    """Largest failure of a declared change of charts to be a Riemannian embedding."""
    fields = metric.fields if isinstance(metric, OrbifoldMetric) else metric
    res = 0.0
    for ch in atlas.changes:
        x = ch.region.grid(settings.grid_metric if n is None else n)
        x = x[np.asarray(atlas.in_change_domain(ch, x))]
        if x.shape[0] == 0:
            continue
        A = ch.map.linear_part
        lhs = np.einsum("ki,...kl,lj->...ij", A, fields[ch.target].tensor(ch.map.apply(x)), A)
        res = max(res, float(np.abs(lhs - fields[ch.source].tensor(x)).max()))
    return res


def pullback_metric(phi, metric: MetricField) -> MetricField:
    """Pull ``metric`` back along an affine map or along a lift exposing ``jacobian``."""
    if isinstance(phi, AffineMap):
        A = phi.linear_part
        if isinstance(metric, ConstantMetric):
            return ConstantMetric(A.T @ metric.matrix @ A)
        return PullbackMetric(metric, phi.apply, phi.jacobian, affine=True)
    jac = getattr(phi, "jacobian", None)
    if jac is None or not callable(phi):
        raise UnsupportedLiftError("lift does not expose a Jacobian")
    return PullbackMetric(metric, phi, jac, affine=False)


def christoffel(metric: MetricField, x) -> np.ndarray:
    return metric.christoffel(x)


def metric_from_dict(spec: dict, chart: OrbifoldChart) -> MetricField:
    """Build a metric field from ``{"kind": "flat" | "conformal" | "polynomial", ...}``."""
    d = chart.dim
    kind = spec.get("kind", "flat")
    mode = spec.get("derivative", "analytic")
    if kind in ("flat", "constant"):
        m = ConstantMetric(spec.get("matrix", np.eye(d)), derivative=mode)
    elif kind == "conformal":
        phi = spec.get("phi")
        if phi is None:
            raise ConfigError("conformal metric needs 'phi'")
        m = ConformalMetric(polynomial_from_terms(phi, d, 1), derivative=mode)
    elif kind == "polynomial":
        entries = spec.get("entries")
        if entries is None or len(entries) != d or any(len(r) != d for r in entries):
            raise ConfigError("polynomial metric needs a d x d 'entries' table of term lists")
        polys = [polynomial_from_terms(e, d, 1) for row in entries for e in row]
        exps = np.vstack([p.exponents for p in polys]) if polys else np.zeros((0, d))
        coeffs = np.zeros((exps.shape[0], d * d))
        r = 0
        for k, p in enumerate(polys):
            coeffs[r:r + p.exponents.shape[0], k] = p.coeffs[:, 0]
            r += p.exponents.shape[0]
        m = PolynomialMetric(Polynomial(exps, coeffs), derivative=mode)
    else:
        raise ConfigError(f"unknown metric kind {kind!r}")
    if spec.get("average", False):
        m = average_metric(chart, m)
    return m


def polynomial_from_terms(spec, dim: int, out: int) -> Polynomial:
    """Terms given as ``[[exponent, coefficient], ...]`` or ``{"terms": [...]}``."""
    terms = spec["terms"] if isinstance(spec, dict) else spec
    parsed = []
    for t in terms:
        if isinstance(t, dict):
            e, c = t["exponent"], t["coeff"]
        else:
            e, c = t
        if len(e) != dim:
            raise ConfigError(f"exponent {e} does not have {dim} entries")
        c = np.atleast_1d(np.asarray(c, dtype=float))
        if c.shape[0] != out:
            raise ConfigError(f"coefficient {c.tolist()} does not have {out} entries")
        parsed.append((e, c))
    return Polynomial.from_terms(dim, parsed, out) if parsed else Polynomial.zero(dim, out)


# ---------------------------------------------------------------------------
# Partitions of unity
# ---------------------------------------------------------------------------

def _smooth_step(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def flat_top_bump(s, plateau: float = 0.5):
    """C-infinity profile: 1 on [0, plateau], 0 for s >= 1."""
    s = np.asarray(s, dtype=float)
    a = _smooth_step(1.0 - s)
    b = _smooth_step(s - plateau)
    den = a + b
    return np.where(den > 0, a / np.where(den > 0, den, 1.0), 0.0)


def region_bump(region: Region, x, plateau: float = 0.5):
    x = _pts(x)
    if region.kind == "ball":
        return flat_top_bump(np.linalg.norm(x - region.center, axis=-1) / region.radius, plateau)
    s = np.abs(x - region.center) / region.halfwidths
    return np.prod(flat_top_bump(s, plateau), axis=-1)


class PartitionOfUnity:
    """Group-averaged bumps on every chart, normalised over the orbit space."""

    def __init__(self, atlas: Atlas, plateau: float = 0.5):
        self.atlas = atlas
        self.plateau = plateau

    def theta(self, cid: str, y) -> np.ndarray:
        chart = self.atlas.chart(cid)
        y = _pts(y)
        vals = [region_bump(chart.domain, g.apply(y), self.plateau) for g in chart.group]
        return np.mean(vals, axis=0)

    def representatives(self, cid: str, x) -> dict[str, np.ndarray]:
        """One representative of the orbit of ``x`` in every chart it reaches (depth 1)."""
        reps = {cid: _pts(x)}
        for change, _, y in self.atlas.connections(cid, x):
            reps.setdefault(change.target, y)
        return reps

    def total(self, cid: str, x) -> float:
        return float(sum(self.theta(a, y) for a, y in self.representatives(cid, x).items()))

    def lift(self, cid: str, y) -> np.ndarray:
        """The lift chi_cid evaluated at points (N, d) of chart ``cid``."""
        y = np.atleast_2d(_pts(y))
        th = self.theta(cid, y)
        tot = np.array([self.total(cid, p) for p in y])
        return th / tot

    def sum_at(self, cid: str, x) -> float:
        """sum over charts of chi at the orbit of the point ``x`` of chart ``cid``."""
        reps = self.representatives(cid, x)
        tot = sum(self.theta(a, y) for a, y in reps.items())
        return float(sum(self.theta(a, y) / tot for a, y in reps.items()))

    def equivariance_residual(self, n: int = 17) -> float:
        res = 0.0
        for cid, chart in self.atlas.charts.items():
            x = chart.domain.grid(n)
            base = self.lift(cid, x)
            for g in chart.group:
                res = max(res, float(np.abs(self.lift(cid, g.apply(x)) - base).max()))
        return res

    def sum_residual(self, n: int = 200) -> float:
        res = 0.0
        for cid, chart in self.atlas.charts.items():
            for x in chart.domain.grid(n):
                res = max(res, abs(self.sum_at(cid, x) - 1.0))
        return res


def build_partition_of_unity(atlas: Atlas, n: int | None = None, plateau: float = 0.5) -> PartitionOfUnity:
    pu = PartitionOfUnity(atlas, plateau)
    gaps = []
    for cid, chart in atlas.charts.items():
        for x in chart.domain.grid(settings.grid_metric if n is None else n):
            if not pu.total(cid, x) > 1e-300:
                gaps.append((cid, x.tolist()))
    if gaps:
        raise CoverageError(f"{len(gaps)} sample points are not covered by any bump", gaps)
    return pu
