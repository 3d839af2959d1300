from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from orbidiff.errors import ConfigError, DomainError, ValidationError
from orbidiff.orbifold_core import (Atlas, Ball, Box, ChangeOfCharts, FiniteGroup, GroupElement, OrbifoldChart,
                                    OrbitPoint, TangentOrbVector, canonical_representative, fixed_subspace,
                                    is_singular, isotropy_group, orbit_equal, sample_singular_points,
                                    singular_mask, tangent_equal)

from conftest import MIRROR, chart, cone_chart, group_of, mirror_chart, rot

coord = st.floats(-3.0, 3.0, allow_nan=False)


def _span_equal(basis, expected) -> bool:
    """Two orthonormal bases span the same subspace."""
    expected = np.asarray(expected, dtype=float).reshape(basis.shape[0], -1)
    if basis.shape[1] != expected.shape[1]:
        return False
    if basis.shape[1] == 0:
        return True
    q, _ = np.linalg.qr(expected)
    return np.allclose(basis @ basis.T, q @ q.T, atol=1e-12)


# -- groups -----------------------------------------------------------------

def test_group_elements_must_be_orthogonal():
    with pytest.raises(ValidationError):
        GroupElement(np.array([[2.0, 0.0], [0.0, 1.0]]))


def test_group_closure_and_identity_first():
    g = FiniteGroup.cyclic_rotations(4)
    assert g.order == 4
    assert g[0].is_identity()
    n = g.order
    for i in range(n):
        for j in range(n):
            prod = g[i].compose(g[j])
            assert prod.distance(g[int(g.cayley_table[i, j])]) < 1e-9


def test_non_closed_element_list_fails():
    with pytest.raises(ValidationError):
        FiniteGroup([GroupElement.identity(2), GroupElement.rotation(2 * np.pi / 3)])


def test_duplicate_elements_fail():
    with pytest.raises(ValidationError):
        FiniteGroup([GroupElement.identity(2), GroupElement.identity(2)])


def test_chart_domain_must_be_invariant():
    with pytest.raises(ValidationError):
        OrbifoldChart("U", Ball([1.0, 0.0], 1.0), group_of(MIRROR))


def test_box_region_invariant_under_mirror():
    ch = OrbifoldChart("B", Box([0.0, 1.0], [2.0, 1.0]), group_of(MIRROR))
    assert ch.group.order == 2


# -- isotropy and singular locus ---------------------------------------------

def test_isotropy_mirror_fixed_line():
    assert isotropy_group(mirror_chart(), [0.0, 5.0 - 1e-3]).order == 2
    assert isotropy_group(mirror_chart(), [0.0, 4.0]).order == 2


def test_isotropy_mirror_regular_point():
    assert isotropy_group(mirror_chart(), [1.0, 0.0]).order == 1


def test_isotropy_cone_tip():
    assert isotropy_group(cone_chart(3), [0.0, 0.0]).order == 3


def test_isotropy_outside_domain():
    with pytest.raises(DomainError):
        isotropy_group(mirror_chart(), [10.0, 0.0])


def test_is_singular_examples():
    assert is_singular(mirror_chart(), [0.0, 3.0])
    assert not is_singular(mirror_chart(), [2.0, 3.0])
    line = chart(group_of(-np.eye(1), dim=1), radius=2.0, cid="A")
    assert is_singular(line, [0.0])
    assert not is_singular(line, [0.5])


# -- orbit equality ------------------------------------------------------------

def test_orbit_equal_mirror():
    at = Atlas([mirror_chart()], [])
    assert orbit_equal(OrbitPoint("U", [1, 2]), OrbitPoint("U", [-1, 2]), at)
    assert not orbit_equal(OrbitPoint("U", [1, 2]), OrbitPoint("U", [1, 3]), at)


def test_orbit_equal_z4():
    at = Atlas([cone_chart(4)], [])
    assert orbit_equal(OrbitPoint("U", [1, 0]), OrbitPoint("U", [0, 1]), at)


def test_orbit_equal_across_charts(fixtures):
    at = fixtures("line").atlas
    assert orbit_equal(OrbitPoint("A", [-1.5]), OrbitPoint("B", [1.5]), at)
    assert not orbit_equal(OrbitPoint("A", [-1.5]), OrbitPoint("B", [1.25]), at)


def test_orbit_equal_unconnected_charts_false():
    a = OrbifoldChart("A", Ball([0.0, 0.0], 1.0), FiniteGroup.trivial(2))
    b = OrbifoldChart("B", Ball([0.0, 0.0], 1.0), FiniteGroup.trivial(2))
    at = Atlas([a, b], [])
    assert not orbit_equal(OrbitPoint("A", [0.1, 0.1]), OrbitPoint("B", [0.1, 0.1]), at)


@hsettings(max_examples=40, deadline=None)
@given(coord, coord, coord, coord)
def test_orbit_equal_is_equivalence(a, b, c, d):
    at = Atlas([cone_chart(4, radius=6.0)], [])
    g = at.chart("U").group
    p = OrbitPoint("U", [a, b])
    q = OrbitPoint("U", g[1].apply(np.array([a, b])))
    r = OrbitPoint("U", g[3].apply(q.rep))
    s = OrbitPoint("U", [c + 7e-3 * (1 + abs(d)), d])
    assert orbit_equal(p, p, at)
    assert orbit_equal(p, q, at) and orbit_equal(q, p, at)
    assert orbit_equal(q, r, at) and orbit_equal(p, r, at)
    assert orbit_equal(p, s, at) == orbit_equal(s, p, at)


# -- canonical representatives -----------------------------------------------

def test_canonical_mirror():
    assert np.array_equal(canonical_representative(OrbitPoint("U", [-1, 2]), mirror_chart()), [-1, 2])
    assert np.array_equal(canonical_representative(OrbitPoint("U", [1, 2]), mirror_chart()), [-1, 2])


def test_canonical_trivial_group():
    ch = chart(FiniteGroup.trivial(2))
    x = np.array([0.3, -1.7])
    assert np.array_equal(canonical_representative(OrbitPoint("U", x), ch), x)


def test_canonical_z4_orbit_oracle():
    ch = cone_chart(4)
    got = canonical_representative(OrbitPoint("U", [0, 1]), ch)
    orbit = [np.array(p, dtype=float) for p in [(0, 1), (-1, 0), (0, -1), (1, 0)]]
    oracle = min(orbit, key=lambda p: (round(p[0], 9), round(p[1], 9)))
    np.testing.assert_allclose(got, oracle, atol=1e-12)


@hsettings(max_examples=60, deadline=None)
@given(coord, coord, st.integers(2, 6))
def test_canonical_is_idempotent_and_in_orbit(a, b, order):
    ch = cone_chart(order, radius=6.0)
    x = np.array([a, b])
    c = ch.canonical(x)
    assert float(ch.orbit_distance(c, x)) < 1e-9
    np.testing.assert_allclose(ch.canonical(c), c, atol=1e-9)
    for g in ch.group:
        np.testing.assert_allclose(ch.canonical(g.apply(x)), c, atol=1e-9)


# -- tangent equality ------------------------------------------------------------

def test_tangent_equal_mirror_at_origin():
    at = Atlas([mirror_chart()], [])
    assert tangent_equal(TangentOrbVector("U", [0, 0], [1, 0]), TangentOrbVector("U", [0, 0], [-1, 0]), at)


def test_tangent_equal_reflexive():
    at = Atlas([cone_chart(3)], [])
    xi = TangentOrbVector("U", [0.3, 0.4], [1.0, -2.0])
    assert tangent_equal(xi, xi, at)


def test_tangent_equal_regular_point_flip_is_false():
    at = Atlas([mirror_chart()], [])
    assert not tangent_equal(TangentOrbVector("U", [1, 0], [0, 1]), TangentOrbVector("U", [1, 0], [0, -1]), at)


@hsettings(max_examples=40, deadline=None)
@given(coord, coord, coord, coord, st.integers(0, 2))
def test_tangent_equal_implies_orbit_equal(a, b, c, d, k):
    at = Atlas([cone_chart(3, radius=6.0)], [])
    g = at.chart("U").group[k]
    xi = TangentOrbVector("U", [a, b], [c, d])
    zeta = TangentOrbVector("U", g.apply(xi.base), g.push(xi.vec))
    assert tangent_equal(xi, zeta, at)
    assert orbit_equal(xi.point, zeta.point, at)


# -- fixed subspaces -----------------------------------------------------------

def test_fixed_subspace_mirror():
    assert _span_equal(fixed_subspace(group_of(MIRROR)), [[0.0], [1.0]])


def test_fixed_subspace_trivial():
    assert fixed_subspace(FiniteGroup.trivial(2)).shape == (2, 2)


def test_fixed_subspace_minus_identity():
    assert fixed_subspace(group_of(-np.eye(2))).shape == (2, 0)


def test_fixed_subspace_rotation():
    assert fixed_subspace(FiniteGroup.cyclic_rotations(3)).shape == (2, 0)


def test_singular_samples_lie_on_fixed_sets():
    ch = mirror_chart()
    pts = sample_singular_points(ch, 20)
    assert pts.shape[0] >= 20
    assert np.all(singular_mask(ch, pts))
    np.testing.assert_allclose(pts[:, 0], 0.0, atol=1e-12)


# -- Newman density ------------------------------------------------------------

@pytest.mark.parametrize("group", [group_of(MIRROR), FiniteGroup.cyclic_rotations(3), group_of(-np.eye(2)),
                                   FiniteGroup.cyclic_rotations(6)])
def test_random_points_are_regular(group):
    ch = chart(group)
    pts = ch.domain.sample(np.random.default_rng(1), 1000)
    assert not np.any(singular_mask(ch, pts))


# -- atlas loading ---------------------------------------------------------------

def test_atlas_from_dict_requires_known_charts():
    spec = {"dimension": 1,
            "charts": [{"id": "A", "region": {"kind": "ball", "center": [0], "radius": 1}, "group": {}}],
            "changes": [{"source": "A", "target": "Z", "region": {"kind": "ball", "center": [0], "radius": 1},
                         "map": {"matrix": [[1]]}}]}
    with pytest.raises(ConfigError):
        Atlas.from_dict(spec)


def test_atlas_round_trip(fixtures):
    at = fixtures("teardrop").atlas
    again = Atlas.from_dict(at.to_dict())
    assert again.chart_ids == at.chart_ids
    assert len(again.changes) == len(at.changes)
    assert again.chart("A").group.order == 3


def test_change_must_map_into_target():
    a = OrbifoldChart("A", Ball([0.0], 1.0), FiniteGroup.trivial(1))
    b = OrbifoldChart("B", Ball([5.0], 1.0), FiniteGroup.trivial(1))
    bad = ChangeOfCharts("A", "B", Ball([0.0], 1.0), GroupElement(np.eye(1), [0.0]))
    with pytest.raises((ValidationError, ConfigError)):
        Atlas([a, b], [bad])


def test_rotation_matrix_helper():
    np.testing.assert_allclose(GroupElement.rotation(0.7).linear_part, rot(0.7))
