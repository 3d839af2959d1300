"""Global numerical tolerances.

The values can be changed at runtime, e.g. ``settings.tol_alg = 1e-10``;
functions read them at call time.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass
class Settings:
    tol_alg: float = 1e-9        # purely algebraic comparisons
    tol_metric: float = 1e-8     # metric compatibility residuals
    tol_int: float = 1e-6        # integrated quantities
    tol_energy: float = 1e-6     # energy drift per unit time
    h_fd: float = 1e-5           # central finite differences
    geodesic_step: float = 1e-3
    exp_step: float = 1e-2       # geodesic shooting inside the diffeomorphism chart
    margin_fraction: float = 0.05
    newton_tol: float = 1e-12
    newton_maxiter: int = 50
    grid_metric: int = 17
    grid_fields: int = 9
    grid_cap: int = 4096


settings = Settings()
