"""The local chart sigma -> E(sigma) of the orbifold diffeomorphism group.

E(sigma) has lifts e^sigma(x) = exp(x, sigma(x)).  Composition and inversion are
realised by the sections sigma <> tau and sigma*, which go through the local
inverse b(x, y) of the chart exponential.  Flat charts use closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .config import settings
from .errors import BudgetError, DegenerateMetricError, InversionError
from .geodesics import exp_map
from .metric import MetricField, OrbifoldMetric
from .orbifold_core import Atlas, OrbitPoint, Region
from .orbisections import ChartVectorField, Orbisection, PolynomialField, c1_norm
from .polynomial import Polynomial

BUDGET_RADII = (1.0, 1.25, 2.0, 3.0, 5.0)


# ---------------------------------------------------------------------------
# Newton machinery
# ---------------------------------------------------------------------------

def damped_newton(func: Callable, jac: Callable, x0, target, tol: float | None = None,
                  maxiter: int | None = None, accept: float = 1e-10) -> np.ndarray:
    """Solve func(x, rows) = target for a batch (N, d) by Newton with per-point step halving.

    ``func`` and ``jac`` receive the current iterates together with the indices of
    the batch rows they belong to.  Points whose residual stalls below ``accept``
    count as converged; anything else left after ``maxiter`` iterations raises
    :class:`InversionError`.
    """
    tol = settings.newton_tol if tol is None else tol
    maxiter = settings.newton_maxiter if maxiter is None else maxiter
    x = np.array(x0, dtype=float, copy=True)
    target = np.asarray(target, dtype=float)
    n = x.shape[0]
    if n == 0:
        return x
    scale = np.maximum(1.0, np.abs(target).max(axis=-1))
    rows = np.arange(n)
    fx = func(x, rows)
    res = np.linalg.norm(fx - target, axis=-1)
    done = res <= tol * scale
    for _ in range(maxiter):
        act = np.nonzero(~done)[0]
        if act.size == 0:
            break
        J = jac(x[act], act)
        try:
            step = np.linalg.solve(J, (target[act] - fx[act])[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise InversionError(f"singular Jacobian in Newton iteration: {exc}") from None
        alpha = np.ones(act.size)
        pending = np.ones(act.size, dtype=bool)
        for _ in range(30):
            idx = np.nonzero(pending)[0]
            if idx.size == 0:
                break
            trial = x[act[idx]] + alpha[idx, None] * step[idx]
            ft = func(trial, act[idx])
            rt = np.linalg.norm(ft - target[act[idx]], axis=-1)
            better = rt < res[act[idx]]
            good = idx[better]
            x[act[good]] = trial[better]
            fx[act[good]] = ft[better]
            res[act[good]] = rt[better]
            pending[good] = False
            alpha[idx[~better]] *= 0.5
        done[act] = res[act] <= tol * scale[act]
        stalled = act[pending]
        if stalled.size:
            ok = res[stalled] <= accept * scale[stalled]
            if not np.all(ok):
                raise InversionError(f"Newton stalled with residual {res[stalled][~ok].max():.3g}")
            done[stalled] = True
    bad = ~done & (res > accept * scale)
    if np.any(bad):
        raise InversionError(f"Newton did not converge in {maxiter} iterations (residual {res[bad].max():.3g})")
    return x


def fd_jacobian(func: Callable, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian (N, m, d) of a batched map."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.shape[-1]):
        e = np.zeros(x.shape[-1])
        e[k] = h
        cols.append((func(x + e) - func(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def _batch(x):
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, x.shape[-1]), x.shape


def inverse_exp(metric: MetricField, x, y, step: float | None = None) -> np.ndarray:
    """b(x, y): the tangent vector at x with exp(x, b) = y (Newton from y - x)."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if metric.flat:
        return y - x
    xb, shape = _batch(x)
    yb, _ = _batch(y)
    xb = np.ascontiguousarray(xb)
    sol = damped_newton(lambda v, r: exp_map(metric, xb[r], v, step),
                        lambda v, r: fd_jacobian(lambda w: exp_map(metric, xb[r], w, step), v),
                        yb - xb, yb)
    return sol.reshape(shape)


def exp_lift(metric: MetricField, field: ChartVectorField, x, step: float | None = None) -> np.ndarray:
    """e^f(x) = exp(x, f(x))."""
    x = np.asarray(x, dtype=float)
    return exp_map(metric, x, field(x), step)


def exp_lift_jacobian(metric: MetricField, field: ChartVectorField, x, step: float | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if metric.flat:
        return np.eye(x.shape[-1]) + field.jacobian(x)
    xb, shape = _batch(x)
    return fd_jacobian(lambda p: exp_lift(metric, field, p, step), xb).reshape(shape + (shape[-1],))


def invert_lift(metric: MetricField, field: ChartVectorField, y, step: float | None = None) -> np.ndarray:
    """(e^f)^{-1}(y) by damped Newton with initial guess y - f(y)."""
    yb, shape = _batch(y)
    sol = damped_newton(lambda p, r: exp_lift(metric, field, p, step),
                        lambda p, r: exp_lift_jacobian(metric, field, p, step),
                        yb - field(yb), yb)
    return sol.reshape(shape)


# ---------------------------------------------------------------------------
# Budgets
# ---------------------------------------------------------------------------

@dataclass
class ChartBudget:
    """Per-chart constants; all radii are measured in the chart metric at the base point."""

    chart: str
    eps: float
    delta: float
    nu: float
    tau: float
    R: float
    sigma_t: float
    eps_n: float
    regions: dict
    flat: bool
    metric_min_eig: float = 1.0

    def region(self, r: float) -> Region:
        return self.regions[float(r)]

    def ordering_ok(self) -> bool:
        return self.eps_n < min(self.tau, self.nu) and min(self.tau, self.nu) < self.R

    def to_dict(self) -> dict:
        return {"chart": self.chart, "eps": self.eps, "delta": self.delta, "nu": self.nu, "tau": self.tau,
                "R": self.R, "sigma_t": self.sigma_t, "eps_n": self.eps_n, "flat": self.flat,
                "regions": {str(k): v.to_dict() for k, v in self.regions.items()}}


@dataclass
class NeighborhoodBudget:
    atlas: Atlas
    metric: OrbifoldMetric
    charts: dict = field(default_factory=dict)

    def __getitem__(self, cid: str) -> ChartBudget:
        return self.charts[cid]

    def region(self, cid: str, r: float) -> Region:
        return self.charts[cid].region(r)

    @property
    def flat(self) -> bool:
        return all(b.flat for b in self.charts.values())

    def eps_at(self, cid: str, x) -> np.ndarray:
        """Injectivity radius of exp at x; pointwise boundary clearance for flat charts."""
        b = self.charts[cid]
        chart = self.atlas.chart(cid)
        if b.flat:
            return chart.domain.clearance(x) * np.sqrt(b.metric_min_eig)
        return np.full(np.asarray(x).shape[:-1], b.eps)

    def to_dict(self) -> dict:
        return {cid: b.to_dict() for cid, b in self.charts.items()}


def budget_regions(domain: Region) -> dict:
    """Nested regions Omega_r, r in {1, 5/4, 2, 3, 5}; Omega_5 is the chart domain."""
    return {float(r): domain.scaled(r / 5.0) for r in BUDGET_RADII}


def _directions(d: int, count: int = 16) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        a = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(a), np.sin(a)], axis=-1)
    rng = np.random.default_rng(0)
    u = rng.normal(size=(count, d))
    return np.vstack([u / np.linalg.norm(u, axis=-1, keepdims=True), np.eye(d), -np.eye(d)])


def _g_unit(metric: MetricField, x, dirs) -> np.ndarray:
    """Directions rescaled to unit metric length at each base point: (N, K, d)."""
    x = np.asarray(x, dtype=float)
    G = metric.tensor(x)
    lens = np.sqrt(np.einsum("ki,nij,kj->nk", dirs, G, dirs))
    return dirs[None, :, :] / lens[..., None]


def exp_ball_check(metric: MetricField, domain: Region, x, radius: float, det_min: float = 0.5,
                   fractions=(1 / 3, 2 / 3, 1.0)) -> tuple[bool, dict]:
    """Sampled injectivity and full rank of v -> exp(x, v) on the metric ball of given radius."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    u = _g_unit(metric, x, _directions(d))
    vs = np.concatenate([np.zeros((x.shape[0], 1, d))] + [f * radius * u for f in fractions], axis=1)
    base = np.repeat(x[:, None, :], vs.shape[1], axis=1)
    img = exp_map(metric, base.reshape(-1, d), vs.reshape(-1, d)).reshape(vs.shape)
    info = {"radius": radius}
    if not np.all(np.isfinite(img)) or not np.all(domain.contains(img)):
        info["reason"] = "image leaves chart"
        return False, info
    J = fd_jacobian(lambda w: exp_map(metric, base.reshape(-1, d), w), vs.reshape(-1, d), h=1e-6)
    det = np.linalg.det(J)
    info["det_min"] = float(det.min())
    if det.min() <= det_min:
        info["reason"] = "exp not full rank"
        return False, info
    src = vs.reshape(x.shape[0], -1, d)
    worst = np.inf
    for i in range(x.shape[0]):
        di = np.linalg.norm(img[i][:, None] - img[i][None], axis=-1)
        ds = np.linalg.norm(src[i][:, None] - src[i][None], axis=-1)
        mask = ds > 1e-6
        worst = min(worst, float((di[mask] / ds[mask]).min()))
    info["injectivity_ratio"] = worst
    if worst < 1e-6:
        info["reason"] = "exp not injective"
        return False, info
    return True, info


def _reach(metric: MetricField, x, radius: float) -> float:
    """Smallest coordinate distance from x to exp(x, S_radius); a radius of B_delta inside the image."""
    d = x.shape[-1]
    u = _g_unit(metric, x, _directions(d, 32))
    base = np.repeat(x[:, None, :], u.shape[1], axis=1).reshape(-1, d)
    img = exp_map(metric, base, (radius * u).reshape(-1, d))
    return float(np.linalg.norm(img - base, axis=-1).min())


def _derive(cid, eps, delta, regions, flat, min_eig) -> ChartBudget:
    nu = 0.5 * min(eps, delta)
    R = nu
    tau = min(0.2, 0.5 * nu)
    return ChartBudget(cid, eps, delta, nu, tau, R, sigma_t=tau / 5.0, eps_n=tau / 2.0,
                       regions=regions, flat=flat, metric_min_eig=min_eig)


def estimate_budget(atlas: Atlas, metric: OrbifoldMetric, n: int = 5, max_halvings: int = 12) -> NeighborhoodBudget:
    """Sampled budget per chart.

    Flat charts: eps is the boundary clearance over Omega_3 and delta = eps.
    Otherwise a dyadic search from the clearance radius downward finds the
    largest radius on which exp is sampled-injective and full rank at grid
    points of Omega_3; the choice is re-checked on a grid of twice the density.
    """
    budget = NeighborhoodBudget(atlas, metric)
    for cid, chart in atlas.charts.items():
        g = metric[cid]
        regions = budget_regions(chart.domain)
        om3 = regions[3.0]
        pts = om3.grid(2 * n + 1, shrink=0.0)
        pts = np.vstack([pts, om3.boundary_sample(16)])
        clear = float(chart.domain.clearance(pts).min())
        min_eig = float(np.linalg.eigvalsh(g.tensor(pts)).min())
        if min_eig <= 0:
            raise DegenerateMetricError(f"chart {cid!r}: metric not positive definite")
        if g.flat:
            eps = clear * np.sqrt(min_eig)
            max_eig = float(np.linalg.eigvalsh(g.tensor(pts[:1])).max())
            delta = eps / np.sqrt(max_eig)
            budget.charts[cid] = _derive(cid, eps, delta, regions, True, min_eig)
            continue
        radius = clear * np.sqrt(min_eig)
        found = None
        coarse = om3.grid(n, shrink=0.0)
        fine = om3.grid(2 * n, shrink=0.0)
        for _ in range(max_halvings):
            ok, _ = exp_ball_check(g, chart.domain, coarse, radius)
            if ok:
                ok, _ = exp_ball_check(g, chart.domain, fine, radius)
            if ok:
                found = radius
                break
            radius *= 0.5
        if found is None:
            raise DegenerateMetricError(f"chart {cid!r}: no admissible injectivity radius found")
        delta = 0.9 * _reach(g, fine, found)
        budget.charts[cid] = _derive(cid, found, min(delta, found), regions, False, min_eig)
    return budget


# ---------------------------------------------------------------------------
# Budget validation
# ---------------------------------------------------------------------------

@dataclass
class ChartReport:
    chart: str
    c1_norm: float
    tau: float
    max_length: float
    length_cap: float
    det_min: float
    injectivity_ratio: float
    failures: list
    surjectivity_residual: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures


@dataclass
class BudgetReport:
    charts: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.charts.values())

    @property
    def failures(self) -> list:
        return [f for r in self.charts.values() for f in r.failures]

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "charts": {cid: {"c1_norm": r.c1_norm, "tau": r.tau, "max_length": r.max_length,
                                 "length_cap": r.length_cap, "det_min": r.det_min,
                                 "injectivity_ratio": r.injectivity_ratio,
                                 "surjectivity_residual": r.surjectivity_residual, "failures": r.failures}
                           for cid, r in self.charts.items()}}


def _injectivity_ratio(src, img) -> float:
    """min |e(x)-e(y)| / |x-y| over nearby grid pairs."""
    tree = cKDTree(src)
    k = min(len(src), 2 * src.shape[-1] + 3)
    dist, idx = tree.query(src, k=k)
    dist, idx = dist[:, 1:], idx[:, 1:]
    img_d = np.linalg.norm(img[idx] - img[:, None, :], axis=-1)
    mask = dist > 1e-6
    return float((img_d[mask] / dist[mask]).min()) if np.any(mask) else np.inf


def _surjectivity_witness(g: MetricField, f: ChartVectorField, targets, source: Region) -> tuple[float, str | None]:
    """Newton preimages of ``targets`` under e^f; they must lie in ``source``."""
    try:
        pre = invert_lift(g, f, targets)
    except InversionError as exc:
        return np.inf, str(exc)
    res = float(np.abs(exp_lift(g, f, pre) - targets).max())
    if not np.all(source.contains(pre)):
        return res, "preimage outside Omega_2"
    return res, None


def validate_budget(sigma: Orbisection, budget: NeighborhoodBudget, n: int | None = None) -> BudgetReport:
    """Per chart: C^1 norm on Omega_1 against tau, lengths on Omega_2, sampled etale-ness of e^sigma on Omega_2.

    Surjectivity is witnessed by Newton preimages in Omega_2 of the Omega_1 grid.
    """
    n = settings.grid_fields if n is None else n
    out = {}
    for cid in budget.atlas.chart_ids:
        b = budget[cid]
        g = budget.metric[cid]
        f = sigma[cid]
        failures = []
        c1 = c1_norm(f, budget.atlas.chart(cid), b.region(1.0), n)
        if not c1 < b.tau:
            failures.append(f"chart {cid}: c1 norm {c1:.6g} on Omega_1 exceeds tau {b.tau:.6g}")
        pts = b.region(2.0).grid(n, shrink=0.0)
        if pts.shape[0] == 0:
            out[cid] = ChartReport(cid, c1, b.tau, 0.0, 0.0, 1.0, np.inf, failures)
            continue
        vals = f(pts)
        length = float(np.sqrt(np.max(g.norm2(pts, vals)))) if np.any(vals) else 0.0
        cap = min(b.eps, b.nu)
        if not length < cap:
            failures.append(f"chart {cid}: sup length {length:.6g} on Omega_2 exceeds min(eps, nu) {cap:.6g}")
        det_min, ratio, surj = 1.0, np.inf, 0.0
        if np.any(vals):
            img = exp_lift(g, f, pts)
            det_min = float(np.linalg.det(exp_lift_jacobian(g, f, pts)).min())
            ratio = _injectivity_ratio(pts, img)
            if det_min <= 0.5:
                failures.append(f"chart {cid}: Jacobian determinant {det_min:.6g} of the lift is not above 0.5")
            if ratio < 1e-6:
                failures.append(f"chart {cid}: lift is not injective on the Omega_2 grid")
            if not failures:
                targets = b.region(1.0).grid(n, shrink=0.0)
                surj, why = _surjectivity_witness(g, f, targets, b.region(2.0))
                if why is not None:
                    failures.append(f"chart {cid}: no surjectivity witness over Omega_1 ({why})")
        out[cid] = ChartReport(cid, c1, b.tau, length, cap, det_min, ratio, failures, surj)
    return BudgetReport(out)


def admissible_scale(sigma: Orbisection, budget: NeighborhoodBudget, hi: float = 1.0, iters: int = 30) -> float:
    """Largest t in [0, hi] (by bisection) with t * sigma passing validate_budget."""
    if validate_budget(sigma.scaled(hi), budget).passed:
        return hi
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if validate_budget(sigma.scaled(mid), budget).passed:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# E(sigma)
# ---------------------------------------------------------------------------

class LocalDiffeo:
    """Lifted near-identity diffeomorphism; by default the lifts are x -> exp(x, sigma(x))."""

    def __init__(self, atlas: Atlas, metric: OrbifoldMetric, section: Orbisection | None = None,
                 budget: NeighborhoodBudget | None = None, lifts: dict | None = None,
                 inverses: dict | None = None, step: float | None = None):
        self.atlas = atlas
        self.metric = metric
        self.section = section
        self.budget = budget
        self.step = step
        self._lifts = dict(lifts or {})
        self._inverses = dict(inverses or {})

    def lift(self, cid: str, x) -> np.ndarray:
        if cid in self._lifts:
            return self._lifts[cid](np.asarray(x, dtype=float))
        return exp_lift(self.metric[cid], self.section[cid], x, self.step)

    def __call__(self, cid: str, x) -> np.ndarray:
        return self.lift(cid, x)

    def jacobian(self, cid: str, x) -> np.ndarray:
        if cid in self._lifts or self.section is None:
            xb, shape = _batch(x)
            return fd_jacobian(lambda p: self.lift(cid, p), xb).reshape(shape + (shape[-1],))
        return exp_lift_jacobian(self.metric[cid], self.section[cid], x, self.step)

    def inverse_lift(self, cid: str, y) -> np.ndarray:
        if cid in self._inverses:
            return self._inverses[cid](np.asarray(y, dtype=float))
        if cid not in self._lifts and self.section is not None:
            return invert_lift(self.metric[cid], self.section[cid], y, self.step)
        yb, shape = _batch(y)
        sol = damped_newton(lambda p, r: self.lift(cid, p),
                            lambda p, r: fd_jacobian(lambda q: self.lift(cid, q), p), yb, yb)
        return sol.reshape(shape)

    def orbit_map(self, p: OrbitPoint) -> OrbitPoint:
        y = self.lift(p.chart, p.rep[None])[0]
        return OrbitPoint(p.chart, self.atlas.chart(p.chart).canonical(y))

    def canonical_image(self, cid: str, x) -> np.ndarray:
        return self.atlas.chart(cid).canonical(self.lift(cid, x))

    def then(self, first: "LocalDiffeo") -> "LocalDiffeo":
        """self o first, as lifts."""
        lifts = {cid: (lambda x, c=cid: self.lift(c, first.lift(c, x))) for cid in self.atlas.chart_ids}
        inverses = {cid: (lambda y, c=cid: first.inverse_lift(c, self.inverse_lift(c, y)))
                    for cid in self.atlas.chart_ids}
        return LocalDiffeo(self.atlas, self.metric, lifts=lifts, inverses=inverses)

    def equivariance_residual(self, cid: str, x) -> float:
        chart = self.atlas.chart(cid)
        x = np.asarray(x, dtype=float)
        fx = self.lift(cid, x)
        return max(float(np.abs(g.apply(fx) - self.lift(cid, g.apply(x))).max(initial=0.0))
                   for g in chart.group)


def exp_section(sigma: Orbisection, budget: NeighborhoodBudget, check: bool = True,
                step: float | None = None) -> LocalDiffeo:
    """E(sigma); raises :class:`BudgetError` naming the failing chart and norm when ``check`` is set."""
    if check:
        report = validate_budget(sigma, budget)
        if not report.passed:
            raise BudgetError("; ".join(report.failures))
    return LocalDiffeo(budget.atlas, budget.metric, sigma, budget, step=step)


def local_inverse_exp(budget: NeighborhoodBudget, chart: str, x, y) -> np.ndarray:
    """b(x, y) on ``chart``."""
    return inverse_exp(budget.metric[chart], x, y)


# ---------------------------------------------------------------------------
# Composition and inversion of sections
# ---------------------------------------------------------------------------

class DiamondField(ChartVectorField):
    """(sigma <> tau)(x) = b(x, e^sigma(e^tau(x)))."""

    def __init__(self, metric: MetricField, sig: ChartVectorField, tau: ChartVectorField,
                 step: float | None = None):
        super().__init__(sig.dim)
        self.metric, self.sig, self.tau, self.step = metric, sig, tau, step
        self.analytic = metric.flat and sig.analytic and tau.analytic

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.metric.flat:
            t = self.tau(x)
            return t + self.sig(x + t)
        y = exp_lift(self.metric, self.sig, exp_lift(self.metric, self.tau, x, self.step), self.step)
        return inverse_exp(self.metric, x, y, self.step)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        if self.metric.flat:
            t = self.tau(x)
            Dt = self.tau.jacobian(x)
            return Dt + self.sig.jacobian(x + t) @ (np.eye(self.dim) + Dt)
        return super().jacobian(x)


class StarField(ChartVectorField):
    """sigma*(y) = b(y, (e^sigma)^{-1}(y))."""

    def __init__(self, metric: MetricField, sig: ChartVectorField, step: float | None = None):
        super().__init__(sig.dim)
        self.metric, self.sig, self.step = metric, sig, step
        self.analytic = metric.flat and sig.analytic

    def _preimage(self, y):
        return invert_lift(self.metric, self.sig, y, self.step)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.sig.is_zero():
            return np.zeros_like(y)
        x = self._preimage(y)
        if self.metric.flat:
            return x - y
        return inverse_exp(self.metric, y, x, self.step)

    def jacobian(self, y):
        y = np.asarray(y, dtype=float)
        if self.metric.flat:
            x = self._preimage(y)
            eye = np.eye(self.dim)
            return np.linalg.inv(eye + self.sig.jacobian(x)) - eye
        return super().jacobian(y)


def _flat_polynomial_diamond(sig: PolynomialField, tau: PolynomialField) -> PolynomialField:
    d = sig.dim
    inner = Polynomial.linear(np.eye(d)) + tau.poly
    return PolynomialField(tau.poly + sig.poly.compose(inner))


def compose_sections(sigma: Orbisection, tau: Orbisection, budget: NeighborhoodBudget,
                     check: bool = True, step: float | None = None) -> Orbisection:
    """sigma <> tau, with exp o (sigma <> tau) = e^sigma o e^tau."""
    if check:
        for name, s in (("sigma", sigma), ("tau", tau)):
            rep = validate_budget(s, budget)
            if not rep.passed:
                raise BudgetError(f"{name}: " + "; ".join(rep.failures))
    fields = {}
    for cid in budget.atlas.chart_ids:
        g = budget.metric[cid]
        f, t = sigma[cid], tau[cid]
        if t.is_zero():
            fields[cid] = f
        elif f.is_zero():
            fields[cid] = t
        elif g.flat and isinstance(f, PolynomialField) and isinstance(t, PolynomialField):
            fields[cid] = _flat_polynomial_diamond(f, t)
        else:
            fields[cid] = DiamondField(g, f, t, step)
    return Orbisection(budget.atlas, fields)


def invert_section(sigma: Orbisection, budget: NeighborhoodBudget, check: bool = True,
                   step: float | None = None) -> Orbisection:
    """sigma*, with exp o sigma* = (e^sigma)^{-1}."""
    if check:
        rep = validate_budget(sigma, budget)
        if not rep.passed:
            raise BudgetError("; ".join(rep.failures))
    fields = {}
    for cid in budget.atlas.chart_ids:
        f = sigma[cid]
        g = budget.metric[cid]
        if f.is_zero():
            fields[cid] = f
        elif g.flat and isinstance(f, PolynomialField) and f.poly.degree <= 1:
            A = f.poly.jacobian(np.zeros((1, f.dim)))[0]
            c = f.poly(np.zeros((1, f.dim)))[0]
            inv = np.linalg.inv(np.eye(f.dim) + A)
            fields[cid] = PolynomialField(Polynomial.linear(inv - np.eye(f.dim), -inv @ c))
        else:
            fields[cid] = StarField(g, f, step)
    return Orbisection(budget.atlas, fields)


# ---------------------------------------------------------------------------
# Sampling helpers
# ---------------------------------------------------------------------------

def sample_points(budget: NeighborhoodBudget, cid: str, count: int, r: float = 1.0, seed: int = 0) -> np.ndarray:
    """Uniform samples of Omega_r on one chart."""
    rng = np.random.default_rng(seed)
    return budget.region(cid, r).sample(rng, count)


def sampled_field(sigma: Orbisection, cid: str, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Grid values of one lift (for CSV output)."""
    chart = sigma.atlas.chart(cid)
    pts = chart.domain.grid(settings.grid_fields if n is None else n)
    return pts, sigma[cid](pts)
