"""Regenerate the bundled scenario fixtures."""
import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "orbidiff" / "fixtures"


def poly(*terms):
    return {"kind": "polynomial", "terms": [[list(e), list(c)] for e, c in terms]}


def z3_field(a=0.0, b=0.0, c=0.0, e=0.0):
    """a x + b J x + c conj(z)^2 + e |x|^2 x (equivariant under rotations by 2 pi / 3)."""
    t = []
    if a or b:
        t += [((1, 0), (a, b)), ((0, 1), (-b, a))]
    if c:
        t += [((2, 0), (c, 0)), ((0, 2), (-c, 0)), ((1, 1), (0, -2 * c))]
    if e:
        t += [((3, 0), (e, 0)), ((1, 2), (e, 0)), ((2, 1), (0, e)), ((0, 3), (0, e))]
    return poly(*t)


BALL5 = {"kind": "ball", "center": [0, 0], "radius": 5}
CONFORMAL = {"*": {"kind": "conformal", "phi": [[[2, 0], 0.02], [[0, 2], 0.02]]}}
FLAT = {"*": {"kind": "flat"}}

mirror_fields = {
    "sigma": poly(((1, 0), (0.05, 0)), ((1, 1), (0.03, 0)), ((0, 0), (0, 0.04)), ((2, 0), (0, 0.02))),
    "tau": poly(((1, 0), (-0.04, 0)), ((0, 1), (0, 0.06)), ((1, 2), (0.01, 0))),
    "rho": poly(((3, 0), (0.01, 0)), ((0, 2), (0, 0.03)), ((1, 0), (0.02, 0))),
    "linear": {"kind": "linear", "matrix": [[0.1, 0], [0, -0.05]]},
    "linear_b": {"kind": "linear", "matrix": [[-0.06, 0], [0, 0.08]]},
}
mirror = {
    "name": "mirror",
    "seed": 0,
    "atlas": {"dimension": 2, "charts": [{"id": "U", "region": BALL5,
                                          "group": {"generators": [[[-1, 0], [0, 1]]]}}], "changes": []},
    "metric": FLAT,
    "fields": mirror_fields,
    "time_field": {"kind": "poly_t", "coefficients": [mirror_fields["linear"], mirror_fields["sigma"]]},
    "trace": {"chart": "U", "base": [2, 1], "vec": [-1, -1], "horizon": 3, "step": 1e-3,
              "expect_orbit": [1, -2], "singular_time": 2.0},
    "expmap": {"chart": "U", "field": "sigma"},
    "equivariance": {"map": {"kind": "scale", "factor": 2}},
}

cone_fields = {
    "sigma": z3_field(a=0.05, b=0.03, c=0.02),
    "tau": z3_field(a=-0.04, b=0.05, e=0.01),
    "rho": z3_field(a=0.02, c=0.03, e=-0.01),
    "linear": {"kind": "linear", "matrix": [[0.1, -0.15], [0.15, 0.1]]},
    "linear_b": {"kind": "linear", "matrix": [[-0.05, 0.04], [-0.04, -0.05]]},
}
cone = {
    "name": "cone",
    "seed": 0,
    "atlas": {"dimension": 2, "charts": [{"id": "U", "region": BALL5, "group": {"rotation_order": 3}}],
              "changes": []},
    "metric": FLAT,
    "fields": cone_fields,
    "time_field": {"kind": "poly_t", "coefficients": [cone_fields["linear"], cone_fields["sigma"]]},
    "trace": {"chart": "U", "base": [1, 0], "vec": [-1, 0], "horizon": 2.5, "step": 1e-3,
              "expect_orbit": [-1.5, 0]},
    "expmap": {"chart": "U", "field": "sigma"},
    "equivariance": {"map": {"kind": "scale", "factor": 2}},
}

line_fields = {
    "sigma": poly(((1,), (0.02,)), ((3,), (0.001,))),
    "tau": poly(((1,), (-0.015,)), ((3,), (0.002,))),
    "rho": poly(((1,), (0.01,)), ((3,), (-0.001,))),
    "linear": {"kind": "linear", "matrix": [[0.03]]},
    "linear_b": {"kind": "linear", "matrix": [[-0.02]]},
}
line = {
    "name": "line",
    "seed": 0,
    "atlas": {"dimension": 1,
              "charts": [{"id": "A", "region": {"kind": "ball", "center": [0], "radius": 2},
                          "group": {"generators": [[[-1]]]}},
                         {"id": "B", "region": {"kind": "ball", "center": [3], "radius": 2}, "group": {}}],
              "changes": [{"source": "A", "target": "B", "region": {"kind": "ball", "center": [3], "radius": 2},
                           "map": {"matrix": [[1]], "translation": [0]}},
                          {"source": "B", "target": "A", "region": {"kind": "ball", "center": [0], "radius": 2},
                           "map": {"matrix": [[1]], "translation": [0]}}]},
    "metric": FLAT,
    "fields": line_fields,
    "time_field": {"kind": "poly_t", "coefficients": [line_fields["linear"], line_fields["rho"]]},
    "trace": {"chart": "A", "base": [1.0], "vec": [-1.5], "horizon": 4, "step": 1e-3},
    "expmap": {"chart": "A", "field": "sigma"},
    "equivariance": {"map": {"kind": "scale", "factor": 2}},
}

tear_fields = {
    "sigma": z3_field(a=0.02, b=0.01, c=0.005),
    "tau": z3_field(a=-0.015, b=0.02, e=0.001),
    "rho": z3_field(a=0.005, c=0.003),
    "linear": {"kind": "linear", "matrix": [[0.01, -0.02], [0.02, 0.01]]},
    "linear_b": {"kind": "linear", "matrix": [[-0.01, 0.02], [-0.02, -0.01]]},
}
teardrop = {
    "name": "teardrop",
    "seed": 0,
    "atlas": {"dimension": 2,
              "charts": [{"id": "A", "region": {"kind": "ball", "center": [0, 0], "radius": 2},
                          "group": {"rotation_order": 3}},
                         {"id": "B", "region": {"kind": "ball", "center": [3, 0], "radius": 1.5}, "group": {}}],
              "changes": [{"source": "A", "target": "B", "region": {"kind": "ball", "center": [3, 0], "radius": 1.5},
                           "map": {"matrix": [[1, 0], [0, 1]], "translation": [0, 0]}},
                          {"source": "B", "target": "A", "region": {"kind": "ball", "center": [0, 0], "radius": 2},
                           "map": {"matrix": [[1, 0], [0, 1]], "translation": [0, 0]}}]},
    "metric": FLAT,
    "fields": tear_fields,
    "time_field": {"kind": "poly_t", "coefficients": [tear_fields["linear"], tear_fields["rho"]]},
    "trace": {"chart": "A", "base": [1, 0], "vec": [1, 0], "horizon": 4, "step": 1e-3},
    "expmap": {"chart": "A", "field": "sigma"},
    "equivariance": {"map": {"kind": "scale", "factor": 2}},
}

trivial_fields = {
    "sigma": poly(((0, 0), (0.03, -0.02)), ((1, 0), (0.05, 0.01)), ((0, 2), (0.02, 0))),
    "tau": poly(((0, 1), (0.04, -0.03)), ((2, 0), (0, 0.01))),
    "rho": poly(((1, 1), (0.02, 0.01)), ((0, 0), (-0.01, 0))),
    "linear": {"kind": "linear", "matrix": [[0.05, 0.08], [-0.03, 0.02]]},
    "linear_b": {"kind": "linear", "matrix": [[0.01, -0.04], [0.06, -0.02]]},
}
trivial = {
    "name": "trivial",
    "seed": 0,
    "atlas": {"dimension": 2, "charts": [{"id": "U", "region": BALL5, "group": {}}], "changes": []},
    "metric": FLAT,
    "fields": trivial_fields,
    "time_field": {"kind": "poly_t", "coefficients": [trivial_fields["linear"], trivial_fields["sigma"]]},
    "trace": {"chart": "U", "base": [1, 1], "vec": [0.5, -0.25], "horizon": 2, "step": 1e-3,
              "expect_orbit": [2, 0.5]},
    "expmap": {"chart": "U", "field": "sigma"},
    "equivariance": {"map": {"kind": "scale", "factor": 2}},
}


def conformal(base, name):
    out = json.loads(json.dumps(base))
    out["name"] = name
    out["metric"] = CONFORMAL
    out["trace"].pop("expect_orbit", None)
    out["trace"].pop("singular_time", None)
    return out


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "__init__.py").write_text('"""Bundled scenario fixtures."""\n')
    for name, spec in [("mirror", mirror), ("mirror_conformal", conformal(mirror, "mirror_conformal")),
                       ("cone", cone), ("cone_conformal", conformal(cone, "cone_conformal")),
                       ("line", line), ("teardrop", teardrop), ("trivial", trivial)]:
        (OUT / f"{name}.json").write_text(json.dumps(spec, indent=2) + "\n")


if __name__ == "__main__":
    main()
