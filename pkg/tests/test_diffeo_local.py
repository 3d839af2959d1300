from __future__ import annotations

import numpy as np
import pytest

from orbidiff.diffeo_local import (BUDGET_RADII, DiamondField, StarField, admissible_scale, compose_sections,
                                   estimate_budget, exp_lift, exp_section, inverse_exp, invert_lift, invert_section,
                                   local_inverse_exp, sample_points, validate_budget)
from orbidiff.errors import BudgetError
from orbidiff.geodesics import exp_map
from orbidiff.orbifold_core import Atlas, OrbitPoint
from orbidiff.orbisections import BumpField, Orbisection, PolynomialField, equivariant_average
from orbidiff.polynomial import Polynomial

from conftest import MIRROR, conformal_metric, flat_metric, mirror_chart


def quad_field(a, b, c):
    """Mirror-equivariant quadratic: (a x y, b + c x^2)."""
    return PolynomialField(Polynomial.from_terms(2, [((1, 1), [a, 0.0]), ((0, 0), [0.0, b]), ((2, 0), [0.0, c])]))


@pytest.fixture(scope="module")
def flat():
    at = Atlas([mirror_chart()], [])
    return estimate_budget(at, flat_metric(at))


@pytest.fixture(scope="module")
def conf():
    at = Atlas([mirror_chart()], [])
    return estimate_budget(at, conformal_metric(at))


def omega(budget, r, n=5):
    return budget.region("U", r).grid(n)


# -- budgets ----------------------------------------------------------------------------

def test_flat_budget_values(flat):
    b = flat["U"]
    # Omega_3 has radius 3 in a chart of radius 5
    assert b.eps == pytest.approx(2.0)
    assert b.delta == pytest.approx(2.0)
    assert b.nu == pytest.approx(1.0) and b.R == pytest.approx(1.0)
    assert b.tau == pytest.approx(0.2)
    assert b.ordering_ok()


def test_flat_pointwise_injectivity_radius(flat):
    x = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, -4.5]])
    np.testing.assert_allclose(flat.eps_at("U", x), 5.0 - np.linalg.norm(x, axis=-1))


def test_budget_regions_are_nested_balls(flat):
    for r in BUDGET_RADII:
        reg = flat.region("U", r)
        assert reg.radius == pytest.approx(r)
        np.testing.assert_allclose(reg.center, [0.0, 0.0])


def test_conformal_budget_is_consistent(conf):
    b = conf["U"]
    assert not b.flat
    assert 0 < b.eps <= 2.0 + 1e-12
    assert 0 < b.delta <= b.eps
    assert b.ordering_ok()
    assert b.sigma_t < b.tau and b.eps_n < b.tau


def test_budget_serialises(flat):
    d = flat.to_dict()["U"]
    assert d["tau"] == pytest.approx(0.2)
    assert set(d["regions"]) == {str(float(r)) for r in BUDGET_RADII}


# -- inverse exponential ------------------------------------------------------------------

def test_inverse_exp_flat_is_difference(flat):
    x = np.array([[0.3, -0.2], [1.0, 1.0]])
    y = np.array([[0.5, 0.1], [0.9, 1.3]])
    assert np.array_equal(local_inverse_exp(flat, "U", x, y), y - x)


def test_inverse_exp_newton_residual(conf):
    g = conf.metric["U"]
    x = omega(conf, 1.0)
    v = 0.1 * np.stack([np.cos(3 * x[:, 0]), np.sin(2 * x[:, 1])], axis=-1)
    y = exp_map(g, x, v)
    b = inverse_exp(g, x, y)
    assert np.abs(exp_map(g, x, b) - y).max() < 1e-10
    assert np.abs(b - v).max() < 1e-9


# -- E(sigma) -------------------------------------------------------------------------------

def test_zero_section_gives_identity(flat, conf):
    for budget in (flat, conf):
        E = exp_section(Orbisection.zero(budget.atlas), budget)
        x = omega(budget, 2.0)
        assert np.array_equal(E("U", x), x)
        assert np.array_equal(E.inverse_lift("U", x), x)


def test_constant_section_translates(flat):
    s = Orbisection.uniform(flat.atlas, PolynomialField.constant([0.0, 0.15]))
    E = exp_section(s, flat)
    x = omega(flat, 2.0)
    np.testing.assert_allclose(E("U", x), x + [0.0, 0.15], atol=1e-15)
    np.testing.assert_allclose(E.jacobian("U", x[0]), np.eye(2), atol=1e-15)


@pytest.mark.parametrize("which", ["flat", "conf"])
def test_lift_is_equivariant(which, flat, conf):
    budget = flat if which == "flat" else conf
    s = Orbisection.uniform(budget.atlas, quad_field(0.02, 0.05, 0.01))
    E = exp_section(s, budget)
    x = omega(budget, 2.0)
    assert E.equivariance_residual("U", x) < (1e-15 if which == "flat" else 1e-10)
    p = OrbitPoint("U", [0.7, -0.3])
    q = OrbitPoint("U", MIRROR @ p.rep)
    assert np.allclose(E.orbit_map(p).rep, E.orbit_map(q).rep, atol=1e-10)


def test_lift_inverse_round_trip(conf):
    s = Orbisection.uniform(conf.atlas, quad_field(0.02, 0.05, 0.01))
    E = exp_section(s, conf)
    x = omega(conf, 1.0)
    assert np.abs(E.inverse_lift("U", E("U", x)) - x).max() < 1e-10
    g = conf.metric["U"]
    assert np.abs(exp_lift(g, s["U"], invert_lift(g, s["U"], x)) - x).max() < 1e-10


def test_budget_error_names_chart_and_norm(flat):
    big = Orbisection.uniform(flat.atlas, PolynomialField.constant([0.0, 0.5]))
    with pytest.raises(BudgetError, match=r"chart U: c1 norm"):
        exp_section(big, flat)
    rep = validate_budget(big, flat)
    assert not rep.passed and rep.charts["U"].c1_norm == pytest.approx(0.5)


def test_validate_budget_length_cap(flat):
    # c1 on Omega_1 stays below tau, the length on Omega_2 exceeds min(eps, nu) = 1
    f = PolynomialField(Polynomial.from_terms(2, [((0, 20), [0.0, 0.005])]))
    rep = validate_budget(Orbisection.uniform(flat.atlas, f), flat)
    r = rep.charts["U"]
    assert r.c1_norm < 0.2
    # largest |y| on the open-disc 9-grid of radius 2 is 1.5
    assert r.max_length == pytest.approx(0.005 * 1.5 ** 20)
    assert any("sup length" in m for m in r.failures)


def test_admissible_scale(flat):
    s = Orbisection.uniform(flat.atlas, PolynomialField.constant([0.0, 1.0]))
    t = admissible_scale(s, flat)
    assert t == pytest.approx(0.2, abs=1e-6)
    assert validate_budget(s.scaled(t), flat).passed
    assert not validate_budget(s.scaled(t * 1.01), flat).passed


# -- the <> product --------------------------------------------------------------------------

def test_flat_diamond_closed_form(flat):
    s = Orbisection.uniform(flat.atlas, quad_field(0.02, 0.05, 0.01))
    t = Orbisection.uniform(flat.atlas, quad_field(-0.01, 0.03, 0.02))
    st = compose_sections(s, t, flat)
    assert isinstance(st["U"], PolynomialField)
    x = omega(flat, 2.0)
    tx = t("U", x)
    np.testing.assert_allclose(st("U", x), tx + s("U", x + tx), atol=1e-15)


def test_diamond_with_zero_is_identity(flat, conf):
    for budget in (flat, conf):
        s = Orbisection.uniform(budget.atlas, quad_field(0.02, 0.05, 0.01))
        z = Orbisection.zero(budget.atlas)
        assert compose_sections(s, z, budget)["U"] is s["U"]
        assert compose_sections(z, s, budget)["U"] is s["U"]


def test_constants_add(flat):
    a = Orbisection.uniform(flat.atlas, PolynomialField.constant([0.0, 0.05]))
    b = Orbisection.uniform(flat.atlas, PolynomialField.constant([0.0, -0.12]))
    x = omega(flat, 2.0)
    np.testing.assert_allclose(compose_sections(a, b, flat)("U", x), [[0.0, -0.07]] * len(x), atol=1e-15)


def test_conformal_diamond_matches_composition(conf):
    s = Orbisection.uniform(conf.atlas, quad_field(0.02, 0.05, 0.01))
    t = Orbisection.uniform(conf.atlas, quad_field(-0.01, 0.03, 0.02))
    st = compose_sections(s, t, conf)
    assert isinstance(st["U"], DiamondField)
    g = conf.metric["U"]
    x = omega(conf, 1.0)
    lhs = exp_lift(g, st["U"], x)
    rhs = exp_lift(g, s["U"], exp_lift(g, t["U"], x))
    assert np.abs(lhs - rhs).max() < 1e-10


def test_diamond_associative(flat, conf):
    for budget, tol in ((flat, 1e-14), (conf, 1e-8)):
        s = Orbisection.uniform(budget.atlas, quad_field(0.02, 0.05, 0.01))
        t = Orbisection.uniform(budget.atlas, quad_field(-0.01, 0.03, 0.02))
        r = Orbisection.uniform(budget.atlas, quad_field(0.01, -0.02, 0.0))
        x = omega(budget, 1.0, 4)
        left = compose_sections(compose_sections(s, t, budget, check=False), r, budget, check=False)
        right = compose_sections(s, compose_sections(t, r, budget, check=False), budget, check=False)
        assert np.abs(left("U", x) - right("U", x)).max() < tol


def test_diamond_non_polynomial_flat(flat):
    bump = equivariant_average(BumpField([1.0, 0.0], 1.5, [0.02, 0.03]), flat.atlas.chart("U").group)
    s = Orbisection.uniform(flat.atlas, bump)
    t = Orbisection.uniform(flat.atlas, quad_field(0.01, 0.02, 0.0))
    d = compose_sections(s, t, flat)
    x = omega(flat, 2.0)
    tx = t("U", x)
    np.testing.assert_allclose(d("U", x), tx + bump(x + tx), atol=1e-15)


# -- the * inverse ----------------------------------------------------------------------------

def test_star_of_zero_is_zero(flat, conf):
    for budget in (flat, conf):
        z = Orbisection.zero(budget.atlas)
        assert invert_section(z, budget)["U"].is_zero()


def test_star_flat_affine_closed_form(flat):
    A = np.array([[0.05, 0.0], [0.0, -0.08]])
    c = np.array([0.0, 0.1])
    s = Orbisection.uniform(flat.atlas, PolynomialField(Polynomial.linear(A, c)))
    inv = invert_section(s, flat)
    assert isinstance(inv["U"], PolynomialField)
    y = omega(flat, 2.0)
    # x + A x + c = y
    x = np.linalg.solve(np.eye(2) + A, (y - c).T).T
    np.testing.assert_allclose(inv("U", y), x - y, atol=1e-14)


@pytest.mark.parametrize("which", ["flat", "conf"])
def test_star_inverse_laws(which, flat, conf):
    budget = flat if which == "flat" else conf
    tol = 1e-10 if which == "flat" else 1e-8
    s = Orbisection.uniform(budget.atlas, quad_field(0.02, 0.05, 0.01))
    inv = invert_section(s, budget)
    assert isinstance(inv["U"], StarField)
    x = omega(budget, 1.0)
    assert np.abs(compose_sections(s, inv, budget, check=False)("U", x)).max() < tol
    assert np.abs(compose_sections(inv, s, budget, check=False)("U", x)).max() < tol


def test_star_flat_jacobian_matches_fd(flat):
    s = Orbisection.uniform(flat.atlas, quad_field(0.02, 0.05, 0.01))
    inv = invert_section(s, flat)["U"]
    y = np.array([0.4, -0.6])
    h = 1e-6
    fd = np.stack([(inv(y + h * e) - inv(y - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
    np.testing.assert_allclose(inv.jacobian(y), fd, atol=1e-8)


def test_then_composes_lifts(conf):
    s = Orbisection.uniform(conf.atlas, quad_field(0.02, 0.05, 0.01))
    t = Orbisection.uniform(conf.atlas, quad_field(-0.01, 0.03, 0.02))
    Es, Et = exp_section(s, conf), exp_section(t, conf)
    both = Es.then(Et)
    x = omega(conf, 1.0)
    np.testing.assert_allclose(both("U", x), Es("U", Et("U", x)), atol=1e-15)
    assert np.abs(both.inverse_lift("U", both("U", x)) - x).max() < 1e-10


def test_injectivity_witness_on_grid(flat):
    s = Orbisection.uniform(flat.atlas, quad_field(0.02, 0.05, 0.01))
    rep = validate_budget(s, flat)
    assert rep.passed
    assert rep.charts["U"].injectivity_ratio > 0.5
    assert rep.charts["U"].det_min > 0.5


def test_surjectivity_witness(flat, conf):
    for budget in (flat, conf):
        rep = validate_budget(Orbisection.uniform(budget.atlas, quad_field(0.02, 0.05, 0.01)), budget)
        assert rep.passed
        assert rep.charts["U"].surjectivity_residual < 1e-9
        assert "surjectivity_residual" in rep.to_dict()["charts"]["U"]


def test_sample_points_in_region(flat):
    pts = sample_points(flat, "U", 100, r=1.25, seed=3)
    assert pts.shape == (100, 2)
    assert np.all(np.linalg.norm(pts, axis=-1) <= 1.25)
    assert np.array_equal(pts, sample_points(flat, "U", 100, r=1.25, seed=3))
