from __future__ import annotations

import numpy as np
import pytest

from orbidiff.metric import ConformalMetric, ConstantMetric, OrbifoldMetric
from orbidiff.orbifold_core import Atlas, Ball, FiniteGroup, GroupElement, OrbifoldChart
from orbidiff.polynomial import Polynomial
from orbidiff.scenario import load_fixture

MIRROR = np.diag([-1.0, 1.0])


def rot(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def group_of(*mats, dim: int = 2) -> FiniteGroup:
    return FiniteGroup.generated_by([GroupElement(np.asarray(m, dtype=float)) for m in mats], dim)


def chart(group: FiniteGroup, radius: float = 5.0, cid: str = "U", center=None) -> OrbifoldChart:
    d = group.dim
    return OrbifoldChart(cid, Ball(np.zeros(d) if center is None else center, radius), group)


def mirror_chart(radius: float = 5.0) -> OrbifoldChart:
    return chart(group_of(MIRROR), radius)


def cone_chart(order: int = 3, radius: float = 5.0) -> OrbifoldChart:
    return chart(FiniteGroup.cyclic_rotations(order), radius)


def single_atlas(ch: OrbifoldChart) -> Atlas:
    return Atlas([ch], [])


def flat_metric(atlas: Atlas) -> OrbifoldMetric:
    return OrbifoldMetric(atlas, {c: ConstantMetric(np.eye(atlas.dim)) for c in atlas.chart_ids})


def conformal_metric(atlas: Atlas, a: float = 0.02) -> OrbifoldMetric:
    """exp(2 a |x|^2) I, invariant under every orthogonal group."""
    d = atlas.dim
    terms = [(tuple(2 * np.eye(d, dtype=int)[k]), a) for k in range(d)]
    phi = Polynomial.from_terms(d, terms)
    return OrbifoldMetric(atlas, {c: ConformalMetric(phi) for c in atlas.chart_ids})


@pytest.fixture(scope="session")
def fixtures():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = load_fixture(name)
        return cache[name]
    return get
