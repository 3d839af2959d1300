"""Riemannian orbifolds on finite atlases: geodesics, orbisections and local charts of the diffeomorphism group."""
from __future__ import annotations

from .config import settings
from .diffeo_local import (LocalDiffeo, NeighborhoodBudget, compose_sections, estimate_budget, exp_section,
                           invert_section, validate_budget)
from .equivariant_diffeo import (PlaneMap, WeakEquivalence, check_IS, descend, is_weak_equivalence,
                                 kernel_witness)
from .errors import (BudgetError, ConfigError, DomainError, NumericalError, OrbifoldError, ValidationError)
from .geodesics import exp_map, exp_orb, geodesic_flow, integrate_geodesic, trace_orbifold_geodesic
from .metric import OrbifoldMetric, average_metric, christoffel, metric_from_dict
from .orbifold_core import (Atlas, FiniteGroup, OrbifoldChart, OrbitPoint, TangentOrbVector,
                            canonical_representative, is_singular, orbit_equal, tangent_equal)
from .orbisections import Orbisection, PolynomialField, bracket, c1_norm, equivariant_average
from .regularity import TimeDependentSection, evol, evolve, flow, right_log_derivative
from .scenario import Scenario, load_fixture, load_scenario

__version__ = "0.1.0"

__all__ = [
    "settings", "LocalDiffeo", "NeighborhoodBudget", "compose_sections", "estimate_budget", "exp_section",
    "invert_section", "validate_budget", "PlaneMap", "WeakEquivalence", "check_IS", "descend",
    "is_weak_equivalence", "kernel_witness", "BudgetError", "ConfigError", "DomainError", "NumericalError",
    "OrbifoldError", "ValidationError", "exp_map", "exp_orb", "geodesic_flow", "integrate_geodesic",
    "trace_orbifold_geodesic", "OrbifoldMetric", "average_metric", "christoffel", "metric_from_dict", "Atlas",
    "FiniteGroup", "OrbifoldChart", "OrbitPoint", "TangentOrbVector", "canonical_representative", "is_singular",
    "orbit_equal", "tangent_equal", "Orbisection", "PolynomialField", "bracket", "c1_norm",
    "equivariant_average", "TimeDependentSection", "evol", "evolve", "flow", "right_log_derivative", "Scenario",
    "load_fixture", "load_scenario",
]
