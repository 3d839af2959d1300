from __future__ import annotations

import numpy as np
import pytest

from orbidiff.equivariant_diffeo import (DescendedMap, PlaneMap, Rejection, WeakEquivalence, check_IS, descend,
                                         is_weak_equivalence, kernel_witness, map_from_dict)
from orbidiff.errors import ConfigError, DescentError
from orbidiff.orbifold_core import FiniteGroup, GroupElement, OrbitPoint

from conftest import MIRROR, chart, group_of, rot


def dihedral(n):
    """D_n generated by the rotation by 2 pi / n and the mirror."""
    return group_of(rot(2 * np.pi / n), MIRROR)


def pts(radius=1.0):
    g = np.linspace(-radius, radius, 7)
    return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)


# -- condition IS ---------------------------------------------------------------------------

@pytest.mark.parametrize("group,expected", [
    (FiniteGroup.trivial(2), True),
    (FiniteGroup.cyclic_rotations(3), True),
    (FiniteGroup.cyclic_rotations(6), True),
    (group_of(-np.eye(2)), True),
    (group_of(MIRROR), False),
    (dihedral(3), False),
    (group_of(-np.eye(1), dim=1), True),
])
def test_check_IS(group, expected):
    assert check_IS(group) is expected


def test_check_IS_oracle_fixed_vectors():
    # oracle: an element fixes a nonzero vector iff 1 is an eigenvalue
    for group in (FiniteGroup.cyclic_rotations(4), dihedral(4)):
        has_fixed = any(np.any(np.isclose(np.linalg.eigvals(g.linear_part), 1.0)) for g in list(group)[1:])
        assert check_IS(group) is (not has_fixed)


def test_check_IS_rejects_affine_group():
    shift = GroupElement(MIRROR, [2.0, 0.0])
    group = FiniteGroup([GroupElement.identity(2), shift])
    with pytest.raises(ConfigError):
        check_IS(group)


# -- weak equivalences ------------------------------------------------------------------------

def test_group_element_conjugation():
    G = dihedral(3)
    r = G[1]
    we = is_weak_equivalence(PlaneMap(r.apply, 2), G)
    assert isinstance(we, WeakEquivalence) and we.is_automorphism()
    for i, g in enumerate(G):
        conj = r.compose(g).compose(r.inverse())
        assert G[we.alpha[i]].distance(conj) < 1e-9


def test_scaling_has_identity_alpha():
    G = FiniteGroup.cyclic_rotations(4)
    we = is_weak_equivalence(PlaneMap.affine(2.0 * np.eye(2)), G)
    assert we.alpha == (0, 1, 2, 3)
    assert we.residual < 1e-14


def test_nonlinear_radial_map():
    G = FiniteGroup.cyclic_rotations(3)
    h = PlaneMap(lambda x: x * (1.0 + 0.1 * np.sum(x * x, axis=-1, keepdims=True)), 2)
    we = is_weak_equivalence(h, G)
    assert we.accepted and we.alpha == (0, 1, 2)


def test_translation_off_fixed_line_rejected():
    we = is_weak_equivalence(PlaneMap.affine(np.eye(2), [1.0, 0.0]), group_of(MIRROR))
    assert isinstance(we, Rejection) and not we.accepted
    # best match for the mirror is the identity, off by 2 |x_1| <= 1.96 on the shrunk grid
    assert we.residual == pytest.approx(1.96)


def test_translation_along_fixed_line_accepted():
    we = is_weak_equivalence(PlaneMap.affine(np.eye(2), [0.0, 1.0]), group_of(MIRROR))
    assert we.accepted and we.alpha == (0, 1)


def test_non_automorphism_rejected():
    # constant map: every g matches the identity, so alpha is not a bijection
    G = group_of(-np.eye(2))
    we = is_weak_equivalence(lambda x: np.zeros_like(x), G)
    assert isinstance(we, Rejection)
    assert "automorphism" in we.reason


def test_group_order_cap():
    with pytest.raises(ConfigError):
        is_weak_equivalence(PlaneMap.affine(np.eye(2)), FiniteGroup.cyclic_rotations(65))


# -- descent ------------------------------------------------------------------------------------

def test_descent_of_group_element_is_identity():
    G = FiniteGroup.cyclic_rotations(3)
    ch = chart(G)
    we = is_weak_equivalence(PlaneMap(G[1].apply, 2), G)
    D = descend(we, ch)
    assert isinstance(D, DescendedMap)
    x = pts()
    assert D.is_identity(x)
    np.testing.assert_allclose(D(x), ch.canonical(x), atol=1e-12)


def test_descent_of_scaling_on_line():
    G = group_of(-np.eye(1), dim=1)
    ch = chart(G, radius=5.0, cid="A")
    D = descend(is_weak_equivalence(PlaneMap.affine([[2.0]]), G), ch)
    x = np.linspace(-2, 2, 9)[:, None]
    # the quotient R / Z2 is [0, inf) via |x|; the canonical representative is -|x|
    np.testing.assert_allclose(D(x), -2 * np.abs(x), atol=1e-15)
    assert not D.is_identity(x)
    p = D(OrbitPoint("A", [0.75]))
    assert p.chart == "A" and p.rep[0] == pytest.approx(-1.5)


def test_descent_functorial():
    G = FiniteGroup.cyclic_rotations(4)
    ch = chart(G, radius=10.0)
    h = PlaneMap.affine(2.0 * rot(0.3))
    k = PlaneMap(lambda x: x * (1.0 + 0.05 * np.sum(x * x, axis=-1, keepdims=True)), 2)
    Dh = descend(is_weak_equivalence(h, G), ch)
    Dk = descend(is_weak_equivalence(k, G), ch)
    Dhk = descend(is_weak_equivalence(h @ k, G), ch)
    x = pts()
    np.testing.assert_allclose(Dhk(x), Dh(Dk(x)), atol=1e-12)


def test_descent_failure_reported():
    G = group_of(MIRROR)
    fake = WeakEquivalence(PlaneMap.affine(np.eye(2), [1.0, 0.0]), G, (0, 1), 0.0)
    with pytest.raises(DescentError):
        descend(fake, chart(G))


def test_descent_requires_matching_chart(fixtures):
    we = is_weak_equivalence(PlaneMap.affine(2.0 * np.eye(2)), FiniteGroup.cyclic_rotations(5))
    with pytest.raises(ConfigError):
        descend(we, fixtures("mirror").atlas)


# -- kernel -------------------------------------------------------------------------------------

def test_kernel_witness_element():
    G = group_of(-np.eye(2))
    we = is_weak_equivalence(PlaneMap.affine(-np.eye(2)), G)
    w = kernel_witness(we, chart(G))
    assert w.status == "element" and w.index == 1
    assert np.allclose(w.element.linear_part, -np.eye(2))


def test_kernel_witness_not_in_kernel():
    G = group_of(-np.eye(2))
    w = kernel_witness(is_weak_equivalence(PlaneMap.affine(2.0 * np.eye(2)), G), chart(G))
    assert w.status == "not-in-kernel" and w.residual > 0.5


def test_kernel_witness_none_found_for_discontinuous_map():
    # identity inside radius 0.5, antipodal outside: the choice is G-invariant, so h is equivariant
    # and descends to the identity without being a single group element
    G = group_of(-np.eye(2))
    h = PlaneMap(lambda x: np.where(np.linalg.norm(x, axis=-1, keepdims=True) < 0.5, x, -x), 2)
    we = is_weak_equivalence(h, G)
    assert we.accepted
    assert kernel_witness(we, chart(G)).status == "none-found"


# -- configuration -----------------------------------------------------------------------------

def test_map_from_dict_kinds():
    G = group_of(MIRROR)
    x = np.array([[0.5, -1.0]])
    np.testing.assert_allclose(map_from_dict({"kind": "scale", "factor": 3}, G)(x), 3 * x)
    np.testing.assert_allclose(map_from_dict({"kind": "linear", "matrix": [[0, 1], [1, 0]]}, G)(x), [[-1.0, 0.5]])
    np.testing.assert_allclose(map_from_dict({"kind": "affine", "matrix": [[1, 0], [0, 1]], "translation": [1, 2]},
                                             G)(x), [[1.5, 1.0]])
    np.testing.assert_allclose(map_from_dict({"kind": "translation", "vector": [0, 1]}, G)(x), [[0.5, 0.0]])
    np.testing.assert_allclose(map_from_dict({"kind": "group", "index": 1}, G)(x), [[-0.5, -1.0]])
    poly = map_from_dict({"kind": "polynomial", "terms": [[[1, 0], [1, 0]], [[0, 1], [0, 1]], [[2, 0], [0, 1]]]}, G)
    np.testing.assert_allclose(poly(x), [[0.5, -0.75]])


def test_map_compose_reads_right_to_left():
    G = FiniteGroup.trivial(2)
    m = map_from_dict({"kind": "compose", "maps": [{"kind": "scale", "factor": 2},
                                                   {"kind": "translation", "vector": [1, 0]}]}, G)
    np.testing.assert_allclose(m(np.array([[0.0, 1.0]])), [[2.0, 2.0]])


def test_map_flow_kind():
    G = group_of(MIRROR)
    m = map_from_dict({"kind": "flow", "field": {"kind": "linear", "matrix": [[0.1, 0], [0, -0.2]]}, "time": 1.0}, G)
    x = np.array([[0.5, 1.0]])
    np.testing.assert_allclose(m(x), x * np.exp([0.1, -0.2]), atol=1e-12)
    assert is_weak_equivalence(m, G).alpha == (0, 1)


def test_map_from_dict_unknown():
    with pytest.raises(ConfigError):
        map_from_dict({"kind": "twist"}, group_of(MIRROR))
