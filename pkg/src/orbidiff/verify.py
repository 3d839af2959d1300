"""Invariant suite run by the ``verify`` subcommand."""
from __future__ import annotations

import time
import traceback
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import settings
from .diffeo_local import (compose_sections, estimate_budget, exp_section, invert_section, sample_points,
                           validate_budget)
from .equivariant_diffeo import PlaneMap, is_weak_equivalence, kernel_witness, map_from_dict
from .errors import OrbifoldError
from .geodesics import (arc_distance, exp_orb, initial_vector, reflection_angles, trace_orbifold_geodesic)
from .metric import (average_metric, build_partition_of_unity, check_compatibility,
                     check_equivariance)
from .orbifold_core import (OrbitPoint, TangentOrbVector, canonical_representative, is_singular, orbit_equal,
                            tangent_equal)
from .orbisections import (Orbisection, bracket, check_preserves_local_groups, compatibility_residual,
                           equivariance_residual, field_equivariance_residual, linear_combination)
from .regularity import TimeDependentSection, evol, evolution_path, evolve, flow, right_log_derivative
from .scenario import Scenario


@dataclass
class CheckResult:
    module: str
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.module}.{self.name}: {self.value:.3e} (tol {self.tol:.1e}){' ' + self.detail if self.detail else ''}"

    def to_dict(self) -> dict:
        return {"module": self.module, "name": self.name, "value": self.value, "tol": self.tol,
                "passed": self.passed, "detail": self.detail}


@dataclass
class VerifyReport:
    scenario: str
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "passed": self.passed, "checks": [r.to_dict() for r in self.results]}


# ---------------------------------------------------------------------------
# Shared property computations (also used by the test suite)
# ---------------------------------------------------------------------------

def cayley_residual(group) -> float:
    T = group.cayley_table
    worst = 0.0
    for i, g in enumerate(group):
        for j, h in enumerate(group):
            worst = max(worst, g.compose(h).distance(group[T[i, j]]))
    return worst


def singular_hits(chart, count: int, seed: int) -> int:
    pts = chart.domain.sample(np.random.default_rng(seed), count)
    return sum(is_singular(chart, x) for x in pts)


def tangent_pairs(atlas, count: int, seed: int, speed: float = 1.0, inner: float = 0.6):
    """Pairs of tangent-equal vectors: group translates and images under declared changes."""
    rng = np.random.default_rng(seed)
    pairs = []
    cids = atlas.chart_ids
    while len(pairs) < count:
        cid = cids[int(rng.integers(len(cids)))]
        chart = atlas.chart(cid)
        x = chart.domain.scaled(inner).sample(rng, 1)[0]
        v = rng.normal(size=atlas.dim)
        v *= speed / np.linalg.norm(v)
        xi = TangentOrbVector(cid, x, v)
        options = [(cid, g.apply(x), g.push(v)) for g in chart.group]
        for change, gi, y in atlas.connections(cid, x, margin=atlas.chart(cid).margin):
            lam = change.map.compose(chart.group[gi])
            tgt = atlas.chart(change.target)
            if bool(tgt.contains(y, tgt.margin)):
                options.append((change.target, y, lam.push(v)))
        c2, y, w = options[int(rng.integers(len(options)))]
        pairs.append((xi, TangentOrbVector(c2, y, w)))
    return pairs


def uniqueness_residual(atlas, metric, pairs, horizon: float, step: float | None = None, n_times: int = 41) -> float:
    worst = 0.0
    for a, b in pairs:
        ga = trace_orbifold_geodesic(atlas, metric, a, horizon, step)
        gb = trace_orbifold_geodesic(atlas, metric, b, horizon, step)
        hi = min(ga.t_span[1], gb.t_span[1])
        worst = max(worst, arc_distance(ga, gb, atlas, np.linspace(0.0, hi, n_times)))
    return worst


def exp_zero_residual(atlas, metric, count: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(count):
        cid = atlas.chart_ids[k % len(atlas.chart_ids)]
        chart = atlas.chart(cid)
        x = chart.domain.scaled(0.9).sample(rng, 1)[0]
        p = exp_orb(atlas, metric, TangentOrbVector(cid, x, np.zeros(atlas.dim)))
        worst = max(worst, float(np.abs(p.rep - canonical_representative(OrbitPoint(cid, x), chart)).max()))
    return worst


def group_law_residual(sigma, tau, budget, count: int, seed: int, composed=None) -> float:
    st = compose_sections(sigma, tau, budget) if composed is None else composed
    Es, Et = exp_section(sigma, budget, check=False), exp_section(tau, budget, check=False)
    Est = exp_section(st, budget, check=False)
    worst = 0.0
    for k, cid in enumerate(budget.atlas.chart_ids):
        chart = budget.atlas.chart(cid)
        x = sample_points(budget, cid, count, 1.0, seed + k)
        lhs = Es.lift(cid, Et.lift(cid, x))
        rhs = Est.lift(cid, x)
        worst = max(worst, float(chart.orbit_distance(lhs, rhs).max()))
    return worst


def inversion_residual(sigma, budget, count: int, seed: int, star=None) -> tuple[float, float]:
    """max distances for E(sigma*) o E(sigma) and E(sigma) o E(sigma*) to the identity."""
    ss = invert_section(sigma, budget) if star is None else star
    Es, Ess = exp_section(sigma, budget, check=False), exp_section(ss, budget, check=False)
    left = right = 0.0
    for k, cid in enumerate(budget.atlas.chart_ids):
        chart = budget.atlas.chart(cid)
        x = sample_points(budget, cid, count, 1.0, seed + k)
        left = max(left, float(chart.orbit_distance(Ess.lift(cid, Es.lift(cid, x)), x).max()))
        right = max(right, float(chart.orbit_distance(Es.lift(cid, Ess.lift(cid, x)), x).max()))
    return left, right


def diamond_mixed_derivative(sigma, tau, budget, cid: str, x, h: float = 1e-3) -> np.ndarray:
    """Central mixed difference in (t, s) at 0 of (t sigma <> s tau)(x) - (t tau <> s sigma)(x)."""
    def F(t, s):
        a = compose_sections(sigma.scaled(t), tau.scaled(s), budget, check=False)[cid](x)
        b = compose_sections(tau.scaled(t), sigma.scaled(s), budget, check=False)[cid](x)
        return a - b
    return (F(h, h) - F(h, -h) - F(-h, h) + F(-h, -h)) / (4 * h * h)


def jacobi_residual(a, b, c, n: int | None = None) -> float:
    j = linear_combination(linear_combination(bracket(a, bracket(b, c)), bracket(b, bracket(c, a)), 1.0),
                           bracket(c, bracket(a, b)), 1.0)
    worst = 0.0
    for cid, chart in a.atlas.charts.items():
        pts = chart.domain.grid(n)
        worst = max(worst, float(np.abs(j[cid](pts)).max(initial=0.0)))
    return worst


def field_distance(a: Orbisection, b: Orbisection, regions: dict | None = None, n: int | None = None) -> float:
    worst = 0.0
    for cid, chart in a.atlas.charts.items():
        region = regions[cid] if regions else chart.domain
        pts = region.grid(n)
        if pts.shape[0]:
            worst = max(worst, float(np.abs(a[cid](pts) - b[cid](pts)).max()))
    return worst


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

class _Runner:
    def __init__(self, report: VerifyReport):
        self.report = report

    def run(self, module: str, name: str, tol: float, fn: Callable, strict: bool = False):
        t0 = time.perf_counter()
        try:
            out = fn()
            value, detail = (out if isinstance(out, tuple) else (out, ""))
            value = float(value)
            passed = bool(value <= tol) if strict else bool(value < tol)
        except OrbifoldError as exc:
            value, detail, passed = float("nan"), f"{type(exc).__name__}: {exc}", False
        except Exception as exc:  # surfaced as a failed check with the operation name
            value, detail, passed = float("nan"), f"{type(exc).__name__}: {exc} [{traceback.format_exc(limit=1).splitlines()[-1]}]", False
        self.report.results.append(CheckResult(module, name, value, tol, passed, detail, time.perf_counter() - t0))


def run_verify(sc: Scenario, seed: int | None = None, grid: int | None = None, tol: float | None = None,
               samples: int = 50, step: float | None = None) -> VerifyReport:
    """Every module-level invariant on one scenario; ``tol`` overrides the integrated-tolerance checks."""
    seed = sc.seed if seed is None else seed
    atlas, metric = sc.atlas, sc.metric
    flat = metric.flat
    t_int = settings.tol_int if tol is None else tol
    report = VerifyReport(sc.name)
    R = _Runner(report)
    rng = np.random.default_rng(seed)

    # orbifold_core
    R.run("orbifold_core", "cayley_table", 1e-9,
          lambda: max(cayley_residual(atlas.chart(c).group) for c in atlas.chart_ids))
    R.run("orbifold_core", "newman_density", 0.5,
          lambda: sum(singular_hits(atlas.chart(c), 1000, seed + k) for k, c in enumerate(atlas.chart_ids)))

    def orbit_relation():
        bad = 0
        for cid in atlas.chart_ids:
            ch = atlas.chart(cid)
            for x in ch.domain.sample(rng, 20):
                g, h = ch.group[int(rng.integers(ch.group.order))], ch.group[int(rng.integers(ch.group.order))]
                p, q, r = OrbitPoint(cid, x), OrbitPoint(cid, g.apply(x)), OrbitPoint(cid, h.apply(g.apply(x)))
                ok = orbit_equal(p, p, atlas) and orbit_equal(p, q, atlas) == orbit_equal(q, p, atlas)
                ok = ok and (not (orbit_equal(p, q, atlas) and orbit_equal(q, r, atlas)) or orbit_equal(p, r, atlas))
                bad += not ok
        return bad
    R.run("orbifold_core", "orbit_equal_equivalence", 0.5, orbit_relation)

    def canonical_props():
        worst = 0.0
        for cid in atlas.chart_ids:
            ch = atlas.chart(cid)
            x = ch.domain.sample(rng, 50)
            c = ch.canonical(x)
            worst = max(worst, float(np.abs(ch.canonical(c) - c).max()), float(ch.orbit_distance(x, c).max()))
        return worst
    R.run("orbifold_core", "canonical_idempotent", 1e-12, canonical_props)

    def tangent_implies_orbit():
        bad = 0
        for a, b in tangent_pairs(atlas, 20, seed):
            if tangent_equal(a, b, atlas) and not orbit_equal(a.point, b.point, atlas):
                bad += 1
            if not tangent_equal(a, b, atlas):
                bad += 1
        return bad
    R.run("orbifold_core", "tangent_equal_respects_orbits", 0.5, tangent_implies_orbit)

    # metric
    def spd():
        worst = np.inf
        for cid in atlas.chart_ids:
            pts = atlas.chart(cid).domain.grid(grid or settings.grid_metric)
            G = metric[cid].tensor(pts)
            if np.abs(G - np.swapaxes(G, -1, -2)).max() > 1e-9:
                return -1.0
            worst = min(worst, float(np.linalg.eigvalsh(G).min()))
        return -worst
    R.run("metric", "positive_definite", 0.0, spd)
    R.run("metric", "equivariance", 1e-9,
          lambda: max(check_equivariance(metric[c], atlas.chart(c)) for c in atlas.chart_ids))
    R.run("metric", "compatibility", settings.tol_metric, lambda: check_compatibility(atlas, metric))

    def averaging_projection():
        worst = 0.0
        for cid in atlas.chart_ids:
            ch = atlas.chart(cid)
            once = average_metric(ch, metric[cid])
            twice = average_metric(ch, once)
            pts = ch.domain.grid(grid or settings.grid_metric)
            worst = max(worst, float(np.abs(once.tensor(pts) - twice.tensor(pts)).max()))
        return worst
    R.run("metric", "averaging_projection", 1e-12, averaging_projection)

    def christoffel_symmetry():
        worst = 0.0
        for cid in atlas.chart_ids:
            G = metric[cid].christoffel(atlas.chart(cid).domain.grid(5))
            worst = max(worst, float(np.abs(G - np.swapaxes(G, -1, -2)).max(initial=0.0)))
        return worst
    R.run("metric", "christoffel_symmetry", 1e-12, christoffel_symmetry)

    def pou():
        P = build_partition_of_unity(atlas)
        return max(P.sum_residual(), P.equivariance_residual()), ""
    R.run("metric", "partition_of_unity", 1e-9, pou)

    # geodesics
    if "trace" in sc.raw:
        p = sc.params("trace")
        xi = sc.trace_vector()
        st = step or p.get("step")
        geo_box = {}

        def trace():
            geo_box["g"] = geo = trace_orbifold_geodesic(atlas, metric, xi, float(p["horizon"]), st)
            drift = 0.0
            for seg in geo.segments:
                e = seg.energy()
                drift = max(drift, float(np.abs(e - e[0]).max()) / max(1.0, seg.t_span[1] - seg.t_span[0]))
            return drift, geo.stop_reason
        R.run("geodesics", "energy_conservation", settings.tol_energy, trace)

        def transitions():
            geo = geo_box["g"]
            worst = 0.0
            for tr, a, b in zip(geo.transitions, geo.segments[:-1], geo.segments[1:]):
                worst = max(worst, float(np.abs(tr.map.apply(a.x[-1]) - b.x[0]).max()),
                            float(np.abs(tr.map.push(a.v[-1]) - b.v[0]).max()))
            return worst
        R.run("geodesics", "transition_consistency", settings.tol_alg, transitions)
        if "expect_orbit" in p:
            R.run("geodesics", "expected_endpoint", 1e-6, lambda: orbit_distance_to(
                atlas, geo_box["g"].point_at(float(p["horizon"])), p["expect_orbit"]))
        if "singular_time" in p:
            R.run("geodesics", "reflection_law", 1e-6,
                  lambda: abs(np.subtract(*reflection_angles(geo_box["g"], atlas, float(p["singular_time"])))))

        def restriction():
            geo = geo_box["g"]
            t0, t1 = geo.t_span
            tm = 0.5 * (t0 + t1)
            again = trace_orbifold_geodesic(atlas, metric, initial_vector(geo, tm), t1 - tm, st, t0=tm)
            hi = min(t1, again.t_span[1])
            return arc_distance(geo, again, atlas, np.linspace(tm, hi, 21))
        R.run("geodesics", "restriction_retrace", t_int, restriction)
    R.run("geodesics", "exp_of_zero", 0.0 if flat else 1e-9,
          lambda: exp_zero_residual(atlas, metric, 20, seed), strict=True)
    R.run("geodesics", "uniqueness", 1e-8,
          lambda: uniqueness_residual(atlas, metric, tangent_pairs(atlas, 6, seed, inner=0.5), 2.0, step))

    # orbisections
    for name, s in sc.fields.items():
        R.run("orbisections", f"equivariance[{name}]", 1e-9, lambda s=s: equivariance_residual(s))
        R.run("orbisections", f"compatibility[{name}]", 1e-9, lambda s=s: compatibility_residual(s))
        R.run("orbisections", f"preserves_local_groups[{name}]", 1e-9, lambda s=s: check_preserves_local_groups(s))
    have = {k: sc.fields[k] for k in ("sigma", "tau", "rho", "linear", "linear_b") if k in sc.fields}
    if "sigma" in have and "tau" in have:
        s, t = have["sigma"], have["tau"]
        R.run("orbisections", "bracket_antisymmetry", 0.0,
              lambda: field_distance(bracket(s, t), -bracket(t, s)), strict=True)
        R.run("orbisections", "bracket_equivariance", 1e-9, lambda: equivariance_residual(bracket(s, t)))
        if "rho" in have:
            r = have["rho"]
            R.run("orbisections", "jacobi", 1e-6, lambda: jacobi_residual(s, t, r))
            R.run("orbisections", "bracket_bilinearity", 1e-9, lambda: field_distance(
                bracket(linear_combination(t, s, 0.7), r),
                linear_combination(bracket(t, r), bracket(s, r), 0.7)))
    if "linear" in have and "linear_b" in have:
        def linear_bracket():
            a, b = have["linear"], have["linear_b"]
            worst = 0.0
            for cid in atlas.chart_ids:
                A = a[cid].jacobian(np.zeros((1, atlas.dim)))[0]
                B = b[cid].jacobian(np.zeros((1, atlas.dim)))[0]
                pts = atlas.chart(cid).domain.grid()
                worst = max(worst, float(np.abs(bracket(a, b)[cid](pts) - pts @ (A @ B - B @ A).T).max()))
            return worst
        R.run("orbisections", "linear_bracket", 1e-10, linear_bracket)

    # diffeo_local
    box = {}

    def budget():
        box["b"] = B = estimate_budget(atlas, metric)
        return (0.0 if all(b.ordering_ok() for b in B.charts.values()) else 1.0), ""
    R.run("diffeo_local", "budget_ordering", 0.5, budget)
    if "b" in box:
        B = box["b"]
        for name, s in sc.fields.items():
            R.run("diffeo_local", f"validate_budget[{name}]", 0.5,
                  lambda s=s: (0.0 if validate_budget(s, B).passed else 1.0, "; ".join(validate_budget(s, B).failures)))

        def e_zero():
            E = exp_section(Orbisection.zero(atlas), B)
            return max(float(np.abs(E.lift(c, sample_points(B, c, 100, 1.0, seed)) -
                                    sample_points(B, c, 100, 1.0, seed)).max()) for c in atlas.chart_ids)
        R.run("diffeo_local", "E_of_zero_is_identity", 0.0 if flat else t_int, e_zero, strict=True)
        if "sigma" in have and "tau" in have:
            s, t = have["sigma"], have["tau"]
            law_tol = 1e-8 if flat else 1e-6
            R.run("diffeo_local", "group_law", law_tol, lambda: group_law_residual(s, t, B, samples, seed))
            R.run("diffeo_local", "inversion_law", law_tol,
                  lambda: max(inversion_residual(s, B, samples, seed)))
            if flat:
                def flat_closed_form():
                    st = compose_sections(s, t, B)
                    worst = 0.0
                    for cid in atlas.chart_ids:
                        x = sample_points(B, cid, samples, 2.0, seed)
                        tx = t[cid](x)
                        worst = max(worst, float(np.abs(st[cid](x) - (tx + s[cid](x + tx))).max()))
                    return worst
                R.run("diffeo_local", "flat_diamond_closed_form", 1e-12, flat_closed_form)

            def injectivity_witness():
                Es, Et = exp_section(s, B), exp_section(t, B)
                gap = 0.0
                for cid in atlas.chart_ids:
                    x = sample_points(B, cid, 1000, 1.0, seed)
                    gap = max(gap, float(atlas.chart(cid).orbit_distance(Es.lift(cid, x), Et.lift(cid, x)).max()))
                return (0.0 if gap > 1e-6 else 1.0), f"max separation {gap:.3g}"
            R.run("diffeo_local", "injectivity_witness", 0.5, injectivity_witness)
            if "rho" in have:
                r = have["rho"]

                def associativity():
                    left = compose_sections(compose_sections(s, t, B), r, B, check=False)
                    right = compose_sections(s, compose_sections(t, r, B), B, check=False)
                    El, Er = exp_section(left, B, check=False), exp_section(right, B, check=False)
                    worst = 0.0
                    for cid in atlas.chart_ids:
                        x = sample_points(B, cid, min(samples, 20), 1.0, seed)
                        worst = max(worst, float(np.abs(El.lift(cid, x) - Er.lift(cid, x)).max()))
                    return worst
                R.run("diffeo_local", "associativity", 1e-6, associativity)

            def diamond_outputs_valid():
                st = compose_sections(s, t, B)
                regs = {c: B.region(c, 2.0) for c in atlas.chart_ids}
                pts = {c: regs[c].grid(5) for c in atlas.chart_ids}
                eq = max(_eq_on(st, c, pts[c]) for c in atlas.chart_ids)
                return max(eq, compatibility_residual(st, 5))
            R.run("diffeo_local", "diamond_output_invariants", 1e-9 if flat else t_int, diamond_outputs_valid)
        if "linear" in have and flat:
            def flat_linear_inverse():
                a = have["linear"]
                ss = invert_section(a, B)
                worst = 0.0
                for cid in atlas.chart_ids:
                    A = a[cid].jacobian(np.zeros((1, atlas.dim)))[0]
                    M = np.linalg.inv(np.eye(atlas.dim) + A) - np.eye(atlas.dim)
                    x = sample_points(B, cid, samples, 1.25, seed)
                    worst = max(worst, float(np.abs(ss[cid](x) - x @ M.T).max()))
                return worst
            R.run("diffeo_local", "flat_linear_inverse", 1e-10, flat_linear_inverse)

    # regularity
    if "b" in box and "time_field" in sc.raw:
        B = box["b"]
        gamma = sc.time_field()
        R.run("regularity", "evolution_starts_at_zero", 0.0, lambda: max(
            float(np.abs(evolve(gamma, B)[0][c](sample_points(B, c, 50, 1.0, seed))).max()) for c in atlas.chart_ids),
            strict=True)

        def semigroup():
            worst = 0.0
            lin = TimeDependentSection.constant(have.get("linear", sc.fields[next(iter(sc.fields))]))
            for cid in atlas.chart_ids:
                x = sample_points(B, cid, 20, 1.0, seed)
                a = flow(lin, cid, flow(lin, cid, x, 0.375, B), 0.875, B, t0=0.375)
                b = flow(lin, cid, x, 0.875, B)
                worst = max(worst, float(np.abs(a - b).max()))
            return worst
        R.run("regularity", "flow_semigroup", 1e-8, semigroup)

        def flow_equivariance():
            worst = 0.0
            for cid in atlas.chart_ids:
                ch = atlas.chart(cid)
                x = sample_points(B, cid, 20, 1.0, seed)
                fx = flow(gamma, cid, x, 1.0, B)
                for g in ch.group:
                    worst = max(worst, float(np.abs(flow(gamma, cid, g.apply(x), 1.0, B) - g.apply(fx)).max()))
            return worst
        R.run("regularity", "flow_equivariance", 1e-8, flow_equivariance)
        if "linear" in have:
            def evol_series():
                lin = have["linear"]
                E = evol(TimeDependentSection.constant(lin), B)
                worst = 0.0
                for cid in atlas.chart_ids:
                    A = lin[cid].jacobian(np.zeros((1, atlas.dim)))[0]
                    x = sample_points(B, cid, 50, 1.0, seed)
                    worst = max(worst, float(np.abs(E.lift(cid, x) - x @ series_expm(A).T).max()))
                return worst
            R.run("regularity", "evol_matches_matrix_exponential", 1e-6, evol_series)

        def rlog():
            path = evolution_path(gamma, B)
            worst = 0.0
            for t in (0.2, 0.5, 0.8):
                est = right_log_derivative(path, t, atlas)
                for cid in atlas.chart_ids:
                    x = sample_points(B, cid, 10, 1.0, seed)
                    worst = max(worst, float(np.abs(est[cid](x) - gamma.value(cid, t, x)).max()))
            return worst
        R.run("regularity", "right_log_derivative", 1e-4, rlog)

    # equivariant_diffeo
    big = max(atlas.chart_ids, key=lambda c: atlas.chart(c).group.order)
    chart = atlas.chart(big)
    group = chart.group
    if group.is_linear:
        def kernel():
            bad = 0
            for i, g in enumerate(group):
                w = is_weak_equivalence(PlaneMap(g.apply, atlas.dim), group)
                if not w.accepted:
                    bad += 1
                    continue
                kw = kernel_witness(w, chart)
                bad += not (kw.status == "element" and kw.index == i)
            return bad
        R.run("equivariant_diffeo", "kernel_recovers_group", 0.5, kernel)
        if "equivariance" in sc.raw:
            def weak_eq():
                h = map_from_dict(sc.raw["equivariance"]["map"], group, atlas)
                w = is_weak_equivalence(h, group)
                return (0.0 if (not w.accepted or w.is_automorphism()) else 1.0), \
                    ("alpha=" + str(w.alpha)) if w.accepted else w.reason
            R.run("equivariant_diffeo", "alpha_is_automorphism", 0.5, weak_eq)
    return report


def _eq_on(sigma, cid, pts) -> float:
    return field_equivariance_residual(sigma[cid], sigma.atlas.chart(cid), pts)


def orbit_distance_to(atlas, p: OrbitPoint, target) -> float:
    return float(atlas.chart(p.chart).orbit_distance(p.rep, np.asarray(target, dtype=float)))


def series_expm(A: np.ndarray, terms: int = 30) -> np.ndarray:
    """Truncated power series of the matrix exponential."""
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms):
        term = term @ A / k
        out = out + term
    return out
