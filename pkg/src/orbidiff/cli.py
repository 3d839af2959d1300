"""Command line scenario runner.

Exit codes: 0 pass, 1 invariant failure, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import settings
from .diffeo_local import compose_sections, estimate_budget, exp_section, invert_section
from .equivariant_diffeo import (check_IS, descend, is_weak_equivalence, kernel_witness, map_from_dict)
from .errors import (ConfigError, ConsistencyError, CoverageError, DescentError, DomainError, JoinError,
                     NumericalError, OrbifoldError, ValidationError, BudgetError)
from .geodesics import exp_orb, reflection_angles, trace_orbifold_geodesic
from .orbifold_core import TangentOrbVector
from .orbisections import (Orbisection, bracket, field_equivariance_residual, linear_combination,
                           orbisection_from_dict)
from .regularity import evolve, evolution_path, right_log_derivative
from .scenario import Scenario, load_scenario
from .verify import (diamond_mixed_derivative, field_distance, group_law_residual, inversion_residual,
                     orbit_distance_to, run_verify)

EXIT_PASS, EXIT_INVARIANT, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

COMMANDS = ("trace", "expmap", "compose", "invert", "bracket", "evolve", "equivariance", "verify")


class _Context:
    def __init__(self, args: argparse.Namespace, sc: Scenario):
        self.args, self.sc = args, sc
        self.seed = sc.seed if args.seed is None else args.seed
        self.out = Path(args.out)
        self.grid = settings.grid_fields if args.grid is None else args.grid

    def header(self, **extra) -> dict:
        return {"command": self.args.command, "scenario": self.sc.name, "seed": self.seed, **extra}

    def section(self, ref: str) -> Orbisection:
        """Field name in the scenario, ``zero``, or an inline JSON field spec."""
        if ref == "zero":
            return Orbisection.zero(self.sc.atlas)
        if ref.lstrip().startswith("{"):
            try:
                spec = json.loads(ref)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"inline field spec: column {exc.colno}: {exc.msg}") from None
            return orbisection_from_dict(spec, self.sc.atlas)
        return self.sc.section(ref)

    def budget(self):
        return estimate_budget(self.sc.atlas, self.sc.metric)

    def regions(self, budget, r: float) -> dict:
        return {cid: budget.region(cid, r) for cid in self.sc.atlas.chart_ids}

    def equivariance(self, sigma: Orbisection, budget, r: float = 2.0) -> float:
        return max(field_equivariance_residual(sigma[cid], self.sc.atlas.chart(cid), budget.region(cid, r).grid(self.grid))
                   for cid in self.sc.atlas.chart_ids)


def _say(msg: str) -> None:
    print(msg, flush=True)


def _law_tol(ctx: _Context) -> float:
    if ctx.args.tol is not None:
        return ctx.args.tol
    return 1e-8 if ctx.sc.metric.flat else 1e-6


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_trace(ctx: _Context) -> int:
    sc, a = ctx.sc, ctx.args
    spec = sc.params("trace")
    xi = sc.trace_vector()
    horizon = a.horizon if a.horizon is not None else float(spec.get("horizon", 1.0))
    step = a.step if a.step is not None else float(spec.get("step", settings.geodesic_step))
    geo = trace_orbifold_geodesic(sc.atlas, sc.metric, xi, horizon, step)
    header, rows = io.trace_rows(geo, sc.atlas)
    io.write_csv(ctx.out / "trace.csv", header, rows, ctx.header(step=io.fmt(step), horizon=io.fmt(horizon)))
    if a.svg:
        (ctx.out / "trace.svg").write_text(io.trace_svg(geo, sc.atlas))
    t_end = geo.t_span[1]
    end = geo.point_at(t_end)
    canon = sc.atlas.chart(end.chart).canonical(end.rep)
    report = {"t_end": t_end, "end_chart": end.chart, "end_canonical": canon, "reason": geo.stop_reason,
              "transitions": [{"t": tr.time, "change": tr.change, "source": tr.source, "target": tr.target}
                              for tr in geo.transitions], "checks": []}
    status = EXIT_PASS
    tol = 1e-6 if a.tol is None else a.tol
    if "expect_orbit" in spec and t_end >= horizon - 1e-12:
        dist = orbit_distance_to(sc.atlas, end, spec["expect_orbit"])
        ok = dist < tol
        report["checks"].append({"name": "end_orbit", "value": dist, "tol": tol, "passed": ok})
        status = max(status, 0 if ok else EXIT_INVARIANT)
    if "singular_time" in spec:
        a_in, a_out = reflection_angles(geo, sc.atlas, float(spec["singular_time"]))
        ok = abs(a_in - a_out) < tol
        report["checks"].append({"name": "reflection_angles", "incoming": a_in, "outgoing": a_out,
                                 "value": abs(a_in - a_out), "tol": tol, "passed": ok})
        status = max(status, 0 if ok else EXIT_INVARIANT)
    io.write_json(ctx.out / "trace.json", report)
    _say(f"trace: t_end={io.fmt(t_end)} chart={end.chart} canonical=({', '.join(io.fmt(c) for c in canon)}) "
         f"transitions={len(geo.transitions)} reason={geo.stop_reason}")
    for c in report["checks"]:
        _say(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} (tol {c['tol']:.1e})")
    return status


def cmd_expmap(ctx: _Context) -> int:
    """exp_Orb of the field values over the Omega_1 grid, compared with the lifted E(sigma)."""
    sc, a = ctx.sc, ctx.args
    spec = sc.params("expmap")
    sigma = ctx.section(a.field or spec.get("field", "sigma"))
    budget = ctx.budget()
    E = exp_section(sigma, budget, check=True)
    step = a.step if a.step is not None else settings.exp_step
    d = sc.atlas.dim
    header = (["chart_id"] + [f"x_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)]
              + [f"exp_{i + 1}" for i in range(d)])
    rows, worst = [], 0.0
    for cid in sc.atlas.chart_ids:
        chart = sc.atlas.chart(cid)
        pts = budget.region(cid, 1.0).grid(ctx.grid)
        vecs = sigma[cid](pts)
        lifted = E.lift(cid, pts)
        for x, v, y in zip(pts, vecs, lifted):
            p = exp_orb(sc.atlas, sc.metric, TangentOrbVector(cid, x, v), step)
            q = sc.atlas.chart(p.chart).canonical(p.rep)
            if p.chart == cid:
                worst = max(worst, float(chart.orbit_distance(q, y)))
            rows.append([cid, *x, *v, *q])
    io.write_csv(ctx.out / "expmap.csv", header, rows, ctx.header(step=io.fmt(step)))
    tol = settings.tol_int if a.tol is None else a.tol
    ok = worst < tol
    io.write_json(ctx.out / "expmap.json", {"points": len(rows), "lift_consistency": worst, "tol": tol,
                                            "passed": ok, "budget": budget.to_dict()})
    _say(f"{'PASS' if ok else 'FAIL'} expmap.lift_consistency: {worst:.3e} (tol {tol:.1e})")
    return EXIT_PASS if ok else EXIT_INVARIANT


def cmd_compose(ctx: _Context) -> int:
    sc, a = ctx.sc, ctx.args
    spec = sc.params("compose")
    sigma = ctx.section(a.sigma or spec.get("sigma", "sigma"))
    tau = ctx.section(a.tau or spec.get("tau", "tau"))
    budget = ctx.budget()
    st = compose_sections(sigma, tau, budget)
    header, rows = io.field_rows(st, ctx.grid, ctx.regions(budget, 2.0))
    io.write_csv(ctx.out / "compose.csv", header, rows, ctx.header(region="omega_2"))
    tol = _law_tol(ctx)
    res = group_law_residual(sigma, tau, budget, a.samples, ctx.seed, composed=st)
    eq = ctx.equivariance(st, budget)
    checks = [{"name": "group_law", "value": res, "tol": tol, "passed": res < tol},
              {"name": "equivariance", "value": eq, "tol": tol, "passed": eq < tol}]
    return _finish(ctx, "compose", checks, {"budget": budget.to_dict()})


def cmd_invert(ctx: _Context) -> int:
    sc, a = ctx.sc, ctx.args
    spec = sc.params("invert")
    sigma = ctx.section(a.sigma or spec.get("sigma", "sigma"))
    budget = ctx.budget()
    star = invert_section(sigma, budget)
    header, rows = io.field_rows(star, ctx.grid, ctx.regions(budget, 2.0))
    io.write_csv(ctx.out / "invert.csv", header, rows, ctx.header(region="omega_2"))
    tol = _law_tol(ctx)
    left, right = inversion_residual(sigma, budget, a.samples, ctx.seed, star=star)
    checks = [{"name": "left_inverse", "value": left, "tol": tol, "passed": left < tol},
              {"name": "right_inverse", "value": right, "tol": tol, "passed": right < tol}]
    return _finish(ctx, "invert", checks, {"budget": budget.to_dict()})


def cmd_bracket(ctx: _Context) -> int:
    sc, a = ctx.sc, ctx.args
    spec = sc.params("bracket")
    sigma = ctx.section(a.sigma or spec.get("sigma", "sigma"))
    tau = ctx.section(a.tau or spec.get("tau", "tau"))
    budget = ctx.budget()
    br = bracket(sigma, tau)
    header, rows = io.field_rows(br, ctx.grid, ctx.regions(budget, 2.0))
    io.write_csv(ctx.out / "bracket.csv", header, rows, ctx.header(region="omega_2"))
    anti = field_distance(linear_combination(br, bracket(tau, sigma), 1.0), Orbisection.zero(sc.atlas),
                          ctx.regions(budget, 2.0), ctx.grid)
    mixed = 0.0
    for cid in sc.atlas.chart_ids:
        x = budget.region(cid, 1.0).grid(3)
        mixed = max(mixed, float(np.abs(diamond_mixed_derivative(sigma, tau, budget, cid, x) - br[cid](x)).max()))
    eq = ctx.equivariance(br, budget)
    checks = [{"name": "antisymmetry", "value": anti, "tol": 1e-12, "passed": anti < 1e-12},
              {"name": "mixed_derivative", "value": mixed, "tol": 1e-4 if a.tol is None else a.tol,
               "passed": mixed < (1e-4 if a.tol is None else a.tol)},
              {"name": "equivariance", "value": eq, "tol": settings.tol_int, "passed": eq < settings.tol_int}]
    return _finish(ctx, "bracket", checks, {})


def cmd_evolve(ctx: _Context) -> int:
    sc, a = ctx.sc, ctx.args
    gamma = sc.time_field()
    budget = ctx.budget()
    ev = evolve(gamma, budget, slices=a.slices)
    d = sc.atlas.dim
    header = ["t", "chart_id"] + [f"x_{i + 1}" for i in range(d)] + [f"f_{i + 1}" for i in range(d)]
    rows = []
    for k, t in enumerate(ev.times):
        sec = ev[k]
        for cid in sc.atlas.chart_ids:
            pts = budget.region(cid, 2.0).grid(ctx.grid)
            rows.extend([t, cid, *p, *v] for p, v in zip(pts, sec[cid](pts)))
    io.write_csv(ctx.out / "evolve.csv", header, rows, ctx.header(slices=a.slices, region="omega_2"))
    zero = max(float(np.abs(ev[0][cid](budget.region(cid, 2.0).grid(ctx.grid))).max(initial=0.0))
               for cid in sc.atlas.chart_ids)
    path = evolution_path(gamma, budget, check=False)
    tol = 1e-4 if a.tol is None else a.tol
    worst, per_t = 0.0, []
    for t in (0.25, 0.5, 0.75):
        est = right_log_derivative(path, t, sc.atlas)
        dist = field_distance(est, gamma.at(t), ctx.regions(budget, 1.0), 3)
        per_t.append({"t": t, "residual": dist})
        worst = max(worst, dist)
    checks = [{"name": "initial_slice_zero", "value": zero, "tol": 0.0, "passed": zero == 0.0},
              {"name": "right_log_derivative", "value": worst, "tol": tol, "passed": worst < tol}]
    return _finish(ctx, "evolve", checks, {"right_log_derivative": per_t, "budget": budget.to_dict()})


def cmd_equivariance(ctx: _Context) -> int:
    sc, a = ctx.sc, ctx.args
    spec = sc.params("equivariance")
    if a.map:
        try:
            spec["map"] = json.loads(a.map)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--map: column {exc.colno}: {exc.msg}") from None
    if "map" not in spec:
        raise ConfigError("equivariance section is missing field 'map'")
    report = {"charts": {}}
    tol = settings.tol_alg if a.tol is None else a.tol
    for cid in sc.atlas.chart_ids:
        group = sc.atlas.chart(cid).group
        entry: dict = {"order": group.order}
        entry["IS"] = check_IS(group) if group.is_linear else None
        h = map_from_dict(spec["map"], group, sc.atlas)
        res = is_weak_equivalence(h, group, tol=tol)
        if not res.accepted:
            entry.update(accepted=False, reason=res.reason, residual=res.residual)
        else:
            entry.update(accepted=True, alpha=list(res.alpha), residual=res.residual,
                         automorphism=res.is_automorphism())
            try:
                D = descend(res, sc.atlas.chart(cid), tol=tol)
                entry["descent_residual"] = D.residual
                w = kernel_witness(res, sc.atlas.chart(cid), tol=tol)
                entry["kernel"] = {"status": w.status, "index": w.index, "residual": w.residual}
            except DescentError as exc:
                entry["descent_error"] = str(exc)
        report["charts"][cid] = entry
        line = f"{cid}: |G|={group.order} IS={entry['IS']} "
        line += (f"alpha={entry['alpha']}" if entry["accepted"] else f"rejected ({entry['reason']})")
        if "kernel" in entry:
            line += f" kernel={entry['kernel']['status']}"
        _say(line)
    io.write_json(ctx.out / "equivariance.json", report)
    return EXIT_PASS


def cmd_verify(ctx: _Context) -> int:
    a = ctx.args
    rep = run_verify(ctx.sc, seed=ctx.seed, grid=a.grid, tol=a.tol, samples=a.samples, step=a.step)
    for r in rep.results:
        _say(r.line())
    io.write_json(ctx.out / "verify.json", rep.to_dict())
    n_fail = sum(not r.passed for r in rep.results)
    _say(f"verify {ctx.sc.name}: {len(rep.results) - n_fail}/{len(rep.results)} passed")
    return EXIT_PASS if rep.passed else EXIT_INVARIANT


def _finish(ctx: _Context, name: str, checks: list, extra: dict) -> int:
    for c in checks:
        _say(f"{'PASS' if c['passed'] else 'FAIL'} {name}.{c['name']}: {c['value']:.3e} (tol {c['tol']:.1e})")
    io.write_json(ctx.out / f"{name}_residual.json",
                  {"scenario": ctx.sc.name, "seed": ctx.seed, "checks": checks, **extra})
    return EXIT_PASS if all(c["passed"] for c in checks) else EXIT_INVARIANT


HANDLERS = {"trace": cmd_trace, "expmap": cmd_expmap, "compose": cmd_compose, "invert": cmd_invert,
            "bracket": cmd_bracket, "evolve": cmd_evolve, "equivariance": cmd_equivariance, "verify": cmd_verify}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario JSON file or bundled fixture name")
    common.add_argument("--step", type=float, help="geodesic integration step")
    common.add_argument("--horizon", type=float, help="trace horizon")
    common.add_argument("--grid", type=int, help="grid points per axis for sampled output")
    common.add_argument("--tol", type=float, help="override the pass/fail tolerance")
    common.add_argument("--seed", type=int, help="random seed (default: scenario seed)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--svg", action="store_true", help="also write an SVG plot (trace, d = 2)")
    common.add_argument("--samples", type=int, default=50, help="random samples for residual checks")

    p = argparse.ArgumentParser(prog="orbidiff", description="Orbifold geodesics and diffeomorphism-group charts.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("trace", parents=[common], help="orbifold geodesic trace (CSV, optional SVG)")
    s = sub.add_parser("expmap", parents=[common], help="exp_Orb of a field over a grid (CSV)")
    s.add_argument("--field", help="field name, 'zero' or inline JSON spec")
    for name, two in (("compose", True), ("invert", False), ("bracket", True)):
        s = sub.add_parser(name, parents=[common], help=f"{name} sections (CSV + residual JSON)")
        s.add_argument("--sigma", help="field name, 'zero' or inline JSON spec")
        if two:
            s.add_argument("--tau", help="field name, 'zero' or inline JSON spec")
    s = sub.add_parser("evolve", parents=[common], help="evolution of the time-dependent field")
    s.add_argument("--slices", type=int, default=8, help="number of time slices written")
    s = sub.add_parser("equivariance", parents=[common], help="weak equivalence, descent and kernel checks")
    s.add_argument("--map", help="inline JSON map spec")
    sub.add_parser("verify", parents=[common], help="full invariant suite")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
        return HANDLERS[args.command](_Context(args, sc))
    except (ConfigError, ValidationError) as exc:
        print(f"orbidiff {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, BudgetError, DomainError, CoverageError, ConsistencyError, JoinError,
            DescentError) as exc:
        print(f"orbidiff {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OrbifoldError as exc:
        print(f"orbidiff {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
