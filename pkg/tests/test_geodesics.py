from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from orbidiff.errors import ExpDomainError, JoinError
from orbidiff.geodesics import (arc_distance, exp_map, exp_orb, geodesic_flow, initial_vector, integrate_geodesic,
                                join_geodesics, reflection_angles, trace_orbifold_geodesic)
from orbidiff.metric import ConformalMetric, ConstantMetric
from orbidiff.orbifold_core import Atlas, OrbitPoint, TangentOrbVector, orbit_distance, tangent_equal
from orbidiff.polynomial import Polynomial

from conftest import cone_chart, conformal_metric, flat_metric, mirror_chart


def mirror_fold(p):
    """Quotient oracle for R^2 / <diag(-1, 1)>: the representative with x <= 0."""
    p = np.asarray(p, dtype=float)
    return np.array([-abs(p[0]), p[1]])


def rk4_reference(accel, x, v, t, n):
    """Independent fixed-step RK4 for x'' = accel(x, x')."""
    h = t / n
    for _ in range(n):
        k1x, k1v = v, accel(x, v)
        k2x, k2v = v + 0.5 * h * k1v, accel(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, accel(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, accel(x + h * k3x, v + h * k3v)
        x = x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return x, v


def conformal_linear_accel(a):
    a = np.asarray(a, dtype=float)
    return lambda x, v: -(2 * (a @ v) * v - (v @ v) * a)


@pytest.fixture
def mirror():
    at = Atlas([mirror_chart()], [])
    return at, flat_metric(at)


# -- chart integration -----------------------------------------------------------

def test_flat_segment_is_straight_line():
    x0, v0 = np.array([0.3, -0.2]), np.array([1.5, 0.25])
    seg = integrate_geodesic(ConstantMetric(np.eye(2)), x0, v0, (0.0, 2.0), 1e-3)
    np.testing.assert_array_equal(seg.x, x0 + seg.t[:, None] * v0)


def test_flat_rk4_path_is_exact():
    x0, v0 = np.array([0.3, -0.2]), np.array([1.5, 0.25])
    seg = integrate_geodesic(ConstantMetric(np.eye(2)), x0, v0, (0.0, 2.0), 1e-3, closed_form=False)
    assert np.abs(seg.x - (x0 + seg.t[:, None] * v0)).max() < 1e-12


def test_conformal_matches_dense_reference():
    a = [0.2, -0.1]
    phi = Polynomial.from_terms(2, [((1, 0), a[0]), ((0, 1), a[1])])
    x0, v0 = np.array([0.1, 0.2]), np.array([0.8, -0.6])
    seg = integrate_geodesic(ConformalMetric(phi), x0, v0, (0.0, 1.0), 1e-3)
    ref, _ = rk4_reference(conformal_linear_accel(a), x0, v0, 1.0, 8000)
    assert np.abs(seg.x[-1] - ref).max() < 1e-6


def test_zero_velocity_is_constant():
    m = ConformalMetric(Polynomial.from_terms(2, [((2, 0), 0.3)]))
    seg = integrate_geodesic(m, [0.4, 0.1], [0.0, 0.0], (0.0, 1.0), 1e-2)
    assert np.all(seg.x == np.array([0.4, 0.1]))


def test_energy_conserved():
    m = ConformalMetric(Polynomial.from_terms(2, [((2, 0), 0.05), ((0, 2), 0.05), ((1, 0), 0.1)]))
    seg = integrate_geodesic(m, [0.1, -0.3], [1.0, 0.5], (0.0, 2.0), 1e-3)
    e = seg.energy()
    assert np.abs(e - e[0]).max() < 2e-6


def test_step_must_be_positive():
    with pytest.raises(ValueError):
        integrate_geodesic(ConstantMetric(np.eye(2)), [0, 0], [1, 0], (0, 1), 0.0)


def test_exit_event_is_localised():
    ch = mirror_chart(radius=1.0)
    m = ConformalMetric(Polynomial.from_terms(2, [((2, 0), 0.02), ((0, 2), 0.02)]))
    seg = integrate_geodesic(m, [0.0, 0.0], [1.0, 0.0], (0.0, 5.0), 1e-2, ch.domain, ch.margin)
    assert seg.exited
    assert abs(np.linalg.norm(seg.x[-1]) - (1.0 - ch.margin)) < 1e-8


def test_exp_map_flat_and_zero():
    assert np.array_equal(exp_map(ConstantMetric(np.eye(2)), [1.0, 2.0], [0.5, 0.5]), [1.5, 2.5])
    m = ConformalMetric(Polynomial.from_terms(2, [((2, 0), 0.3)]))
    assert np.array_equal(exp_map(m, [1.0, 2.0], [0.0, 0.0]), [1.0, 2.0])


# -- orbifold traces -----------------------------------------------------------------

def test_mirror_trace_fold_oracle(mirror):
    at, g = mirror
    xi = TangentOrbVector("U", [2.0, 1.0], [-1.0, -1.0])
    geo = trace_orbifold_geodesic(at, g, xi, 3.0, 1e-3)
    for t in np.linspace(0, 3, 31):
        p = geo.point_at(t)
        oracle = mirror_fold(xi.base + t * xi.vec)
        np.testing.assert_allclose(at.chart("U").canonical(p.rep), oracle, atol=1e-12)
    np.testing.assert_allclose(mirror_fold(geo.point_at(2.0).rep), [0.0, -1.0], atol=1e-12)
    assert orbit_distance(geo.point_at(3.0), OrbitPoint("U", [1.0, -2.0]), at) < 1e-6


def test_mirror_reflection_law(mirror):
    at, g = mirror
    geo = trace_orbifold_geodesic(at, g, TangentOrbVector("U", [2.0, 1.0], [-1.0, -1.0]), 3.0, 1e-3)
    a_in, a_out = reflection_angles(geo, at, 2.0)
    assert abs(a_in - a_out) < 1e-6
    assert abs(a_in - np.pi / 4) < 1e-9


def test_cone_radial_passes_tip():
    at = Atlas([cone_chart(3)], [])
    geo = trace_orbifold_geodesic(at, flat_metric(at), TangentOrbVector("U", [1.0, 0.0], [-1.0, 0.0]), 2.5)
    assert geo.stop_reason == "time-horizon"
    assert orbit_distance(geo.point_at(1.0), OrbitPoint("U", [0.0, 0.0]), at) < 1e-12
    assert orbit_distance(geo.point_at(2.5), OrbitPoint("U", [-1.5, 0.0]), at) < 1e-12


def test_teardrop_crosses_into_second_chart(fixtures):
    sc = fixtures("teardrop")
    geo = trace_orbifold_geodesic(sc.atlas, sc.metric, sc.trace_vector(), 4.0)
    assert len(geo.transitions) >= 1
    tr = geo.transitions[0]
    before = geo.segments[0]
    after = geo.segments[1]
    np.testing.assert_allclose(tr.map.apply(before.x[-1]), after.x[0], atol=1e-9)
    np.testing.assert_allclose(tr.map.push(before.v[-1]), after.v[0], atol=1e-9)
    # straight-line oracle in the plane: x(t) = (1 + t, 0)
    p = geo.point_at(2.5)
    np.testing.assert_allclose(sc.atlas.chart(p.chart).canonical(p.rep), [3.5, 0.0], atol=1e-9)


def test_leaving_the_atlas_is_reported(fixtures):
    sc = fixtures("line")
    geo = trace_orbifold_geodesic(sc.atlas, sc.metric, TangentOrbVector("A", [1.0], [1.0]), 10.0)
    assert geo.maximal and geo.stop_reason == "left-atlas"
    assert geo.t_span[1] < 10.0


def test_line_trace_transition_and_fold(fixtures):
    sc = fixtures("line")
    xi = sc.trace_vector()
    geo = trace_orbifold_geodesic(sc.atlas, sc.metric, xi, 4.0)
    # x(t) = 1 - 1.5 t in R, quotient by -1 gives |x|; the arc reaches chart B once |x| > 1.9
    for t in (0.5, 1.0, 1.5):
        p = geo.point_at(t)
        assert abs(abs(float(p.rep[0])) - abs(1 - 1.5 * t)) < 1e-12 or p.chart == "B"
    assert any(tr.target == "B" for tr in geo.transitions)


# -- exp_Orb and the geodesic flow ---------------------------------------------------

def test_exp_orb_fold(mirror):
    at, g = mirror
    p = exp_orb(at, g, TangentOrbVector("U", [2.0, 0.0], [-3.0, 0.0]))
    assert orbit_distance(p, OrbitPoint("U", [1.0, 0.0]), at) < 1e-12


def test_exp_orb_zero_vector_identity():
    at = Atlas([cone_chart(3)], [])
    for g in (flat_metric(at), conformal_metric(at)):
        for x in ([0.3, -0.4], [0.0, 0.0], [2.0, 1.0]):
            p = exp_orb(at, g, TangentOrbVector("U", x, [0.0, 0.0]))
            assert np.array_equal(p.rep, at.chart("U").canonical(np.array(x, dtype=float)))


def test_exp_orb_trivial_group_translation():
    from orbidiff.orbifold_core import FiniteGroup
    from conftest import chart
    at = Atlas([chart(FiniteGroup.trivial(2))], [])
    p = exp_orb(at, flat_metric(at), TangentOrbVector("U", [0.5, -1.0], [1.0, 2.0]))
    assert np.array_equal(p.rep, [1.5, 1.0])


def test_exp_orb_outside_domain(mirror):
    at, g = mirror
    with pytest.raises(ExpDomainError):
        exp_orb(at, g, TangentOrbVector("U", [0.0, 0.0], [0.0, 9.0]))


def test_geodesic_flow_basics(mirror):
    at, g = mirror
    xi = TangentOrbVector("U", [2.0, 1.0], [-1.0, -1.0])
    assert np.array_equal(geodesic_flow(at, g, xi, 0.0).rep, at.chart("U").canonical(xi.base))
    assert orbit_distance(geodesic_flow(at, g, xi, 1.0), exp_orb(at, g, xi), at) < 1e-15
    batch = geodesic_flow(at, g, [xi, xi.scaled(0.5)], 1.5)
    seq = [geodesic_flow(at, g, z, 1.5) for z in (xi, xi.scaled(0.5))]
    for a, b in zip(batch, seq):
        assert np.array_equal(a.rep, b.rep)


@hsettings(max_examples=25, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(0.0, 1.5), st.floats(-2, 2), st.floats(-2, 2))
def test_geodesic_flow_homogeneity(s, t, x, y):
    at = Atlas([mirror_chart(radius=12.0)], [])
    g = flat_metric(at)
    xi = TangentOrbVector("U", [x, y], [-1.0, 0.7])
    lhs = geodesic_flow(at, g, xi.scaled(s), t)
    rhs = geodesic_flow(at, g, xi, s * t)
    assert orbit_distance(lhs, rhs, at) < 1e-8


# -- initial vectors and joins ---------------------------------------------------------

def test_initial_vector_start_and_fold(mirror):
    at, g = mirror
    xi = TangentOrbVector("U", [2.0, 1.0], [-1.0, -1.0])
    geo = trace_orbifold_geodesic(at, g, xi, 3.0)
    assert tangent_equal(initial_vector(geo, 0.0), xi, at)
    assert tangent_equal(initial_vector(geo, 2.0), TangentOrbVector("U", [0.0, -1.0], [-1.0, -1.0]), at)


def test_join_reproduces_full_trace(mirror):
    at, g = mirror
    xi = TangentOrbVector("U", [2.0, 1.0], [-1.0, -1.0])
    full = trace_orbifold_geodesic(at, g, xi, 3.0)
    first = trace_orbifold_geodesic(at, g, xi, 1.0)
    second = trace_orbifold_geodesic(at, g, initial_vector(full, 1.0), 2.0, t0=1.0)
    joined = join_geodesics(first, second, at)
    assert joined.t_span == (0.0, 3.0)
    assert arc_distance(joined, full, at, np.linspace(0, 3, 61)) < 1e-8


def test_join_with_restriction_is_identity(mirror):
    at, g = mirror
    xi = TangentOrbVector("U", [2.0, 1.0], [-1.0, -1.0])
    c = trace_orbifold_geodesic(at, g, xi, 3.0)
    part = trace_orbifold_geodesic(at, g, initial_vector(c, 1.0), 1.0, t0=1.0)
    joined = join_geodesics(c, part, at)
    assert arc_distance(joined, c, at, np.linspace(0, 2, 21)) < 1e-12


def test_join_disjoint_spans_fail(mirror):
    at, g = mirror
    a = trace_orbifold_geodesic(at, g, TangentOrbVector("U", [2.0, 1.0], [-1.0, -1.0]), 1.0)
    b = trace_orbifold_geodesic(at, g, TangentOrbVector("U", [0.0, 0.0], [1.0, 0.0]), 1.0, t0=2.0)
    with pytest.raises(JoinError):
        join_geodesics(a, b, at)


def test_join_disagreeing_vectors_fail(mirror):
    at, g = mirror
    a = trace_orbifold_geodesic(at, g, TangentOrbVector("U", [2.0, 1.0], [-1.0, -1.0]), 1.0)
    b = trace_orbifold_geodesic(at, g, TangentOrbVector("U", [0.0, 3.0], [1.0, 0.0]), 1.0, t0=0.5)
    with pytest.raises(JoinError):
        join_geodesics(a, b, at)


# -- invariance properties ---------------------------------------------------------------

@pytest.mark.parametrize("conformal", [False, True])
def test_group_image_of_initial_data(conformal):
    at = Atlas([cone_chart(3)], [])
    g = conformal_metric(at) if conformal else flat_metric(at)
    xi = TangentOrbVector("U", [0.7, 0.2], [0.3, -0.9])
    h = at.chart("U").group[1]
    a = trace_orbifold_geodesic(at, g, xi, 1.5)
    b = trace_orbifold_geodesic(at, g, TangentOrbVector("U", h.apply(xi.base), h.push(xi.vec)), 1.5)
    for t in (0.5, 1.0, 1.5):
        xa, xb = a.state_at(t)[1], b.state_at(t)[1]
        assert np.abs(h.apply(xa) - xb).max() < (1e-12 if not conformal else 1e-6)


def test_uniqueness_for_equivalent_vectors(fixtures):
    sc = fixtures("cone_conformal")
    at, g = sc.atlas, sc.metric
    xi = TangentOrbVector("U", [0.5, 0.5], [-0.4, -0.2])
    h = at.chart("U").group[2]
    zeta = TangentOrbVector("U", h.apply(xi.base), h.push(xi.vec))
    a = trace_orbifold_geodesic(at, g, xi, 2.0)
    b = trace_orbifold_geodesic(at, g, zeta, 2.0)
    assert arc_distance(a, b, at, np.linspace(0, 2, 41)) < 1e-8


def test_restriction_retrace(fixtures):
    sc = fixtures("mirror_conformal")
    at, g = sc.atlas, sc.metric
    c = trace_orbifold_geodesic(at, g, TangentOrbVector("U", [1.0, 0.5], [-0.6, -0.3]), 2.0)
    again = trace_orbifold_geodesic(at, g, initial_vector(c, 0.5), 1.0, t0=0.5)
    assert arc_distance(c, again, at, np.linspace(0.5, 1.5, 11)) < 1e-6
