"""Geodesics in charts, their continuation across charts and the orbifold exponential map."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import settings
from .errors import ConsistencyError, DomainError, ExpDomainError, JoinError, NumericalError
from .metric import MetricField, OrbifoldMetric
from .orbifold_core import (AffineMap, Atlas, GroupElement, OrbitPoint, Region, TangentOrbVector, fixed_subspace,
                            isotropy_group, orbit_distance, tangent_match)


# ---------------------------------------------------------------------------
# Integration inside one chart
# ---------------------------------------------------------------------------

def rk4_step(metric: MetricField, x, v, h):
    """One classical RK4 step of x' = v, v' = -Gamma(v, v); ``h`` may be an array."""
    h = np.asarray(h, dtype=float)
    if h.ndim:
        h = h[..., None]
    a1 = metric.acceleration(x, v)
    x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
    a2 = metric.acceleration(x2, v2)
    x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
    a3 = metric.acceleration(x3, v3)
    x4, v4 = x + h * v3, v + h * a3
    a4 = metric.acceleration(x4, v4)
    xn = x + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4)
    vn = v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    return xn, vn


def exp_map(metric: MetricField, x, v, step: float | None = None, closed_form: bool = True):
    """Chart exponential exp(x, v) for batches of points; straight lines for flat metrics."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if (metric.flat and closed_form) or not np.any(v):
        return x + v
    step = settings.exp_step if step is None else step
    n = max(1, int(np.ceil(1.0 / step - 1e-12)))
    h = 1.0 / n
    for _ in range(n):
        x, v = rk4_step(metric, x, v, h)
    return x


def exp_map_with_velocity(metric: MetricField, x, v, step: float | None = None):
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if metric.flat:
        return x + v, v.copy()
    step = settings.exp_step if step is None else step
    n = max(1, int(np.ceil(1.0 / step - 1e-12)))
    for _ in range(n):
        x, v = rk4_step(metric, x, v, 1.0 / n)
    return x, v


@dataclass(frozen=True, eq=False)
class GeodesicSegment:
    """Geodesic samples inside one chart; ``exited`` marks a boundary event at the last sample."""

    chart: str
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    exited: bool = False
    metric: MetricField | None = field(default=None, repr=False)

    @property
    def t_span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    @property
    def samples(self):
        return list(zip(self.t, self.x, self.v))

    def state_at(self, t: float):
        """(x, v) at time t, re-integrating from the preceding sample."""
        t0, t1 = self.t_span
        if t < t0 - 1e-12 or t > t1 + 1e-12:
            raise DomainError(f"time {t} outside segment span [{t0}, {t1}]")
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        k = min(max(k, 0), len(self.t) - 1)
        dt = t - self.t[k]
        if dt == 0.0:
            return self.x[k].copy(), self.v[k].copy()
        if self.metric is None or self.metric.flat:
            return self.x[k] + dt * self.v[k], self.v[k].copy()
        return rk4_step(self.metric, self.x[k], self.v[k], dt)

    def energy(self) -> np.ndarray:
        if self.metric is None:
            return np.sum(self.v * self.v, axis=-1)
        return self.metric.norm2(self.x, self.v)


def _bisect_exit(metric, x, v, h, inside, tol_t=1e-10):
    """Largest step in [0, h] keeping the state inside, refined to ``tol_t`` in time."""
    lo, hi = 0.0, h
    while hi - lo > tol_t:
        mid = 0.5 * (lo + hi)
        xm, _ = rk4_step(metric, x, v, mid)
        if inside(xm):
            lo = mid
        else:
            hi = mid
    return hi


def integrate_geodesic(metric: MetricField, x0, v0, t_span: Sequence[float], step: float | None = None,
                       domain: Region | None = None, margin: float = 0.0, chart: str = "",
                       closed_form: bool = True) -> GeodesicSegment:
    """Fixed-step RK4 geodesic, stopped at the first exit from ``domain`` shrunk by ``margin``."""
    step = settings.geodesic_step if step is None else step
    if step <= 0:
        raise ValueError("step must be positive")
    t0, t1 = float(t_span[0]), float(t_span[1])
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if t1 < t0:
        raise ValueError("t_span must be increasing")
    n = int(np.ceil((t1 - t0) / step - 1e-9))
    times = t0 + step * np.arange(n + 1)
    times[-1] = t1
    if n == 0:
        times = np.array([t0])

    if (metric.flat and closed_form) or not np.any(v0):
        # straight line; with zero velocity the geodesic is constant for any metric
        t_exit = np.inf
        if domain is not None:
            t_exit = domain.exit_time(x0, v0, margin)
        if t0 + t_exit < t1:
            times = np.append(times[times < t0 + t_exit], t0 + t_exit)
            exited = True
        else:
            exited = False
        dt = (times - t0)[:, None]
        xs = x0 + dt * v0
        vs = np.broadcast_to(v0, xs.shape).copy()
        return GeodesicSegment(chart, times, xs, vs, exited, metric)

    def inside(p):
        return domain is None or bool(domain.contains(p, margin))

    if not np.all(np.isfinite(metric.tensor(x0))):
        raise NumericalError("metric is not finite at the initial point")
    ts, xs, vs = [t0], [x0.copy()], [v0.copy()]
    x, v = x0.copy(), v0.copy()
    exited = False
    for k in range(1, len(times)):
        h = times[k] - times[k - 1]
        xn, vn = rk4_step(metric, x, v, h)
        if not np.all(np.isfinite(xn)) or not np.all(np.isfinite(vn)):
            raise NumericalError("geodesic integration diverged")
        if not inside(xn):
            hs = _bisect_exit(metric, x, v, h, inside)
            xn, vn = rk4_step(metric, x, v, hs)
            ts.append(times[k - 1] + hs)
            xs.append(xn)
            vs.append(vn)
            exited = True
            break
        x, v = xn, vn
        ts.append(times[k])
        xs.append(x)
        vs.append(v)
    return GeodesicSegment(chart, np.array(ts), np.array(xs), np.array(vs), exited, metric)


# ---------------------------------------------------------------------------
# Orbifold geodesics
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransitionRecord:
    time: float
    change: str
    group_adjust: GroupElement
    map: AffineMap
    source: str
    target: str


@dataclass(frozen=True, eq=False)
class OrbifoldGeodesic:
    segments: tuple[GeodesicSegment, ...]
    transitions: tuple[TransitionRecord, ...]
    maximal: bool
    stop_reason: str     # "time-horizon" | "left-atlas"

    @property
    def t_span(self) -> tuple[float, float]:
        return self.segments[0].t_span[0], self.segments[-1].t_span[1]

    def segment_at(self, t: float) -> GeodesicSegment:
        t0, t1 = self.t_span
        if t < t0 - 1e-12 or t > t1 + 1e-12:
            raise DomainError(f"time {t} outside traced span [{t0}, {t1}]")
        for seg in self.segments:
            if seg.t_span[0] - 1e-12 <= t <= seg.t_span[1] + 1e-12:
                return seg
        return self.segments[-1]

    def state_at(self, t: float):
        seg = self.segment_at(t)
        x, v = seg.state_at(min(max(t, seg.t_span[0]), seg.t_span[1]))
        return seg.chart, x, v

    def point_at(self, t: float) -> OrbitPoint:
        cid, x, _ = self.state_at(t)
        return OrbitPoint(cid, x)

    def rows(self, atlas: Atlas):
        """(t, chart, x, v, canonical x, transition flag) for every stored sample."""
        out = []
        for k, seg in enumerate(self.segments):
            chart = atlas.chart(seg.chart)
            can = chart.canonical(seg.x)
            for i in range(len(seg.t)):
                flag = int(seg.exited and i == len(seg.t) - 1 and k < len(self.segments) - 1)
                out.append((float(seg.t[i]), seg.chart, seg.x[i], seg.v[i], can[i], flag))
        return out


def _metric_for(metric, cid):
    return metric[cid] if isinstance(metric, (OrbifoldMetric, dict)) else metric


def trace_orbifold_geodesic(atlas: Atlas, metric: OrbifoldMetric, xi: TangentOrbVector, horizon: float,
                            step: float | None = None, t0: float = 0.0, max_transitions: int = 10000,
                            closed_form: bool = True) -> OrbifoldGeodesic:
    """Integrate chart by chart, continuing through declared changes at chart boundaries."""
    step = settings.geodesic_step if step is None else step
    if step <= 0:
        raise ValueError("step must be positive")
    xi.validate(atlas)
    cid, x, v, t = xi.chart, xi.base.copy(), xi.vec.copy(), float(t0)
    t_end = float(t0) + float(horizon)
    segments, transitions = [], []
    reason = "time-horizon"
    while True:
        chart = atlas.chart(cid)
        seg = integrate_geodesic(_metric_for(metric, cid), x, v, (t, t_end), step, chart.domain,
                                 chart.margin, cid, closed_form)
        segments.append(seg)
        if not seg.exited:
            break
        t, xe, ve = float(seg.t[-1]), seg.x[-1], seg.v[-1]
        cands = []
        for change, gi, y in atlas.connections(cid, xe):
            target = atlas.chart(change.target)
            if not bool(target.contains(y, target.margin)):
                continue
            clearance = float(target.domain.clearance(y)) - target.margin
            cands.append((-clearance, change.target, change.id, gi, change))
        if not cands:
            reason = "left-atlas"
            break
        cands.sort(key=lambda c: c[:4])
        _, tgt, _, gi, change = cands[0]
        g = chart.group[gi]
        lam = change.map.compose(g)
        y, w = lam.apply(xe), lam.push(ve)
        tchart = atlas.chart(tgt)
        for other in cands[1:]:
            if other[1] != tgt:
                continue
            lam2 = other[4].map.compose(chart.group[other[3]])
            if tchart.orbit_distance(lam2.apply(xe), y) > settings.tol_alg * max(1.0, tchart.domain.scale):
                raise ConsistencyError(f"continuations into chart {tgt!r} disagree at t={t}")
        transitions.append(TransitionRecord(t, change.id, g, lam, cid, tgt))
        cid, x, v = tgt, y, w
        if len(transitions) > max_transitions:
            raise NumericalError("too many chart transitions")
    return OrbifoldGeodesic(tuple(segments), tuple(transitions), reason == "left-atlas", reason)


def exp_orb(atlas: Atlas, metric: OrbifoldMetric, xi: TangentOrbVector, step: float | None = None) -> OrbitPoint:
    """Canonical representative of c_xi(1)."""
    geo = trace_orbifold_geodesic(atlas, metric, xi, 1.0, step)
    if geo.t_span[1] < 1.0 - 1e-12:
        raise ExpDomainError(f"geodesic leaves the atlas at t={geo.t_span[1]:.6g} < 1")
    cid, x, _ = geo.state_at(1.0)
    return OrbitPoint(cid, atlas.chart(cid).canonical(x))


def geodesic_flow(atlas: Atlas, metric: OrbifoldMetric, xi, t: float, step: float | None = None):
    """alpha(t, xi); a list of vectors gives the elementwise list of results."""
    if isinstance(xi, (list, tuple)):
        return [geodesic_flow(atlas, metric, z, t, step) for z in xi]
    if t < 0:
        xi = TangentOrbVector(xi.chart, xi.base, -xi.vec)
        t = -t
    if t == 0:
        xi.validate(atlas)
        return OrbitPoint(xi.chart, atlas.chart(xi.chart).canonical(xi.base))
    geo = trace_orbifold_geodesic(atlas, metric, xi, t, step)
    if geo.t_span[1] < t - 1e-12:
        raise ExpDomainError(f"geodesic leaves the atlas at t={geo.t_span[1]:.6g} < {t}")
    cid, x, _ = geo.state_at(t)
    return OrbitPoint(cid, atlas.chart(cid).canonical(x))


def initial_vector(geo: OrbifoldGeodesic, t: float) -> TangentOrbVector:
    cid, x, v = geo.state_at(t)
    return TangentOrbVector(cid, x, v)


def _truncate(geo: OrbifoldGeodesic, t_cut: float, keep: str) -> tuple[list, list]:
    """Segments and transitions of ``geo`` restricted to t <= t_cut (keep='before') or t >= t_cut."""
    segs, trans = [], []
    for seg in geo.segments:
        a, b = seg.t_span
        if keep == "before":
            if a > t_cut + 1e-12:
                continue
            if b <= t_cut + 1e-12:
                segs.append(seg)
                continue
            x, v = seg.state_at(t_cut)
            m = seg.t < t_cut - 1e-12
            segs.append(GeodesicSegment(seg.chart, np.append(seg.t[m], t_cut), np.vstack([seg.x[m], x]),
                                        np.vstack([seg.v[m], v]), False, seg.metric))
        else:
            if b < t_cut - 1e-12:
                continue
            if a >= t_cut - 1e-12:
                segs.append(seg)
                continue
            x, v = seg.state_at(t_cut)
            m = seg.t > t_cut + 1e-12
            segs.append(GeodesicSegment(seg.chart, np.insert(seg.t[m], 0, t_cut), np.vstack([x, seg.x[m]]),
                                        np.vstack([v, seg.v[m]]), seg.exited, seg.metric))
    for tr in geo.transitions:
        if (keep == "before" and tr.time < t_cut - 1e-12) or (keep == "after" and tr.time > t_cut + 1e-12):
            trans.append(tr)
    return segs, trans


def join_geodesics(a: OrbifoldGeodesic, b: OrbifoldGeodesic, atlas: Atlas,
                   tol: float | None = None) -> OrbifoldGeodesic:
    """Glue two arcs whose initial vectors agree at a common time."""
    tol = settings.tol_int if tol is None else tol
    if a.t_span[0] > b.t_span[0]:
        a, b = b, a
    lo, hi = max(a.t_span[0], b.t_span[0]), min(a.t_span[1], b.t_span[1])
    if lo > hi + 1e-12:
        raise JoinError("spans do not overlap")
    common = np.concatenate([s.t for s in b.segments])
    common = common[(common >= lo - 1e-12) & (common <= hi + 1e-12)]
    common = np.unique(np.concatenate([[lo], common]))
    for tc in common:
        xa, xb = initial_vector(a, tc), initial_vector(b, tc)
        lam = tangent_match(xa, xb, atlas, tol)
        if lam is None:
            continue
        sa, ta = _truncate(a, tc, "before")
        sb, tb = _truncate(b, tc, "after")
        trans = list(ta)
        if not lam.is_identity(tol):
            ident = GroupElement.identity(atlas.dim)
            trans.append(TransitionRecord(float(tc), "join", ident, lam, xa.chart, xb.chart))
        trans.extend(tb)
        return OrbifoldGeodesic(tuple(sa + sb), tuple(trans), b.maximal, b.stop_reason)
    raise JoinError("initial vectors disagree at every common sample time")


def arc_distance(a: OrbifoldGeodesic, b: OrbifoldGeodesic, atlas: Atlas, times) -> float:
    """max over ``times`` of the orbit distance between the two arcs."""
    worst = 0.0
    for t in times:
        worst = max(worst, orbit_distance(a.point_at(t), b.point_at(t), atlas))
    return worst


def reflection_angles(geo: OrbifoldGeodesic, atlas: Atlas, t_hit: float, dt: float = 0.5):
    """Angles between the quotient arc and the fixed line at a singular hit.

    Returns (incoming, outgoing) angles, measured from the chords of the
    canonical arc over [t_hit - dt, t_hit] and [t_hit, t_hit + dt] to the
    fixed subspace of the local group at the hit point.
    """
    cid, x, _ = geo.state_at(t_hit)
    chart = atlas.chart(cid)
    basis = fixed_subspace(isotropy_group(chart, x, tol=1e-6))
    hit = chart.canonical(x)

    def angle(p):
        chord = p - hit
        n = np.linalg.norm(chord)
        proj = np.linalg.norm(basis.T @ chord) if basis.size else 0.0
        return float(np.arccos(np.clip(proj / n, -1.0, 1.0)))

    before = atlas.chart(geo.point_at(t_hit - dt).chart).canonical(geo.point_at(t_hit - dt).rep)
    after = atlas.chart(geo.point_at(t_hit + dt).chart).canonical(geo.point_at(t_hit + dt).rep)
    return angle(before), angle(after)
