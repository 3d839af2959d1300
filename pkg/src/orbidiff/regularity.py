"""Flows of time-dependent orbisections, the evolution e(gamma) and right logarithmic derivatives."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .diffeo_local import LocalDiffeo, NeighborhoodBudget, fd_jacobian, inverse_exp
from .errors import BudgetError, ConfigError, FlowEscapeError
from .orbisections import ChartVectorField, Orbisection, c1_norm, linear_combination, orbisection_from_dict

FLOW_STEPS = 256       # RK4 steps per unit time
DEFAULT_SLICES = 64


class TimeDependentSection:
    """t -> gamma(t), either sum_k t^k sigma_k or K+1 equally spaced slices with linear interpolation."""

    def __init__(self, atlas, coefficients: Sequence[Orbisection] | None = None,
                 slices: Sequence[Orbisection] | None = None):
        if (coefficients is None) == (slices is None):
            raise ConfigError("give exactly one of coefficients or slices")
        self.atlas = atlas
        self.coefficients = list(coefficients) if coefficients is not None else None
        self.slices = list(slices) if slices is not None else None
        if self.slices is not None and len(self.slices) < 2:
            raise ConfigError("at least two slices are needed")

    @classmethod
    def constant(cls, sigma: Orbisection) -> "TimeDependentSection":
        return cls(sigma.atlas, coefficients=[sigma])

    def _weights(self, t: float) -> list[tuple[float, Orbisection]]:
        if self.coefficients is not None:
            return [(t ** k, c) for k, c in enumerate(self.coefficients)]
        K = len(self.slices) - 1
        s = min(max(t, 0.0), 1.0) * K
        i = min(int(np.floor(s)), K - 1)
        w = s - i
        return [(1.0 - w, self.slices[i]), (w, self.slices[i + 1])]

    def value(self, cid: str, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for w, s in self._weights(t):
            if w != 0.0:
                acc = acc + w * s[cid](x)
        return acc

    def jacobian(self, cid: str, t: float, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        acc = np.zeros(x.shape + (x.shape[-1],))
        for w, s in self._weights(t):
            if w != 0.0:
                acc = acc + w * s[cid].jacobian(x)
        return acc

    def at(self, t: float) -> Orbisection:
        acc = Orbisection.zero(self.atlas)
        for w, s in self._weights(t):
            acc = linear_combination(acc, s, w)
        return acc

    def sup_c1(self, cid: str, region, times=None, n: int | None = None) -> float:
        times = np.linspace(0.0, 1.0, 5) if times is None else times
        chart = self.atlas.chart(cid)
        return max(c1_norm(self.at(float(t))[cid], chart, region, n) for t in times)


def flow(gamma: TimeDependentSection, chart: str, x0, t: float, budget: NeighborhoodBudget | None = None,
         t0: float = 0.0, steps_per_unit: int = FLOW_STEPS) -> np.ndarray:
    """RK4 solution of x'(s) = gamma(s)(x(s)) from x(t0) = x0 to time t (batched over x0).

    The trajectory is monitored against Omega_3 of the budget (or the chart domain).
    """
    x = np.array(x0, dtype=float, copy=True)
    span = float(t) - float(t0)
    if span == 0.0:
        return x
    n = max(1, int(np.ceil(abs(span) * steps_per_unit - 1e-9)))
    h = span / n
    region = budget.region(chart, 3.0) if budget is not None else gamma.atlas.chart(chart).domain
    f = lambda s, y: gamma.value(chart, s, y)
    s = float(t0)
    for _ in range(n):
        k1 = f(s, x)
        k2 = f(s + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(s + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(s + h, x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += h
        if not np.all(region.contains(x)):
            raise FlowEscapeError(f"flow on chart {chart!r} leaves the monitored region at t={s:.6g}")
    return x


class EvolutionField(ChartVectorField):
    """x -> b(x, Fl(t, x))."""

    def __init__(self, gamma: TimeDependentSection, chart: str, t: float, budget: NeighborhoodBudget):
        super().__init__(gamma.atlas.dim)
        self.gamma, self.chart, self.t, self.budget = gamma, chart, float(t), budget
        self.metric = budget.metric[chart]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        y = flow(self.gamma, self.chart, x, self.t, self.budget)
        return inverse_exp(self.metric, x, y)

    def jacobian(self, x):
        if self.metric.flat:
            x = np.asarray(x, dtype=float)
            xb = x.reshape(-1, x.shape[-1])
            J = fd_jacobian(lambda p: flow(self.gamma, self.chart, p, self.t, self.budget), xb, h=1e-6)
            return (J - np.eye(x.shape[-1])).reshape(x.shape + (x.shape[-1],))
        return super().jacobian(x)

    def is_zero(self):
        return self.t == 0.0


def _check_gamma(gamma: TimeDependentSection, budget: NeighborhoodBudget, n: int = 5):
    for cid in gamma.atlas.chart_ids:
        cap = budget[cid].tau
        sup = gamma.sup_c1(cid, budget.region(cid, 1.0), n=n)
        if not sup < cap:
            raise BudgetError(f"chart {cid}: sup_t c1 norm of gamma {sup:.6g} exceeds tau {cap:.6g}")


def evolution_slice(gamma: TimeDependentSection, budget: NeighborhoodBudget, t: float) -> Orbisection:
    """e(gamma)(t); exactly the zero section at t = 0."""
    if t == 0.0:
        return Orbisection.zero(gamma.atlas)
    return Orbisection(gamma.atlas, {cid: EvolutionField(gamma, cid, t, budget) for cid in gamma.atlas.chart_ids})


class Evolution:
    """Cached slices e(gamma)(k/K), k = 0..K."""

    def __init__(self, gamma: TimeDependentSection, budget: NeighborhoodBudget, slices: int = DEFAULT_SLICES):
        self.gamma, self.budget, self.K = gamma, budget, int(slices)
        self._cache: dict[int, Orbisection] = {}

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.K + 1)

    def __len__(self):
        return self.K + 1

    def __getitem__(self, k: int) -> Orbisection:
        if k < 0:
            k += self.K + 1
        if not 0 <= k <= self.K:
            raise IndexError(k)
        if k not in self._cache:
            self._cache[k] = evolution_slice(self.gamma, self.budget, k / self.K)
        return self._cache[k]

    def at(self, t: float) -> Orbisection:
        return evolution_slice(self.gamma, self.budget, t)


def evolve(gamma: TimeDependentSection, budget: NeighborhoodBudget, slices: int = DEFAULT_SLICES,
           check: bool = True) -> Evolution:
    if check:
        _check_gamma(gamma, budget)
    return Evolution(gamma, budget, slices)


def _flow_diffeo(gamma, budget, t) -> LocalDiffeo:
    """E(e(gamma)(t)) with the inverse realised by the backward flow."""
    sec = evolution_slice(gamma, budget, t)
    inverses = {cid: (lambda y, c=cid: flow(gamma, c, y, 0.0, budget, t0=t)) for cid in gamma.atlas.chart_ids}
    return LocalDiffeo(budget.atlas, budget.metric, sec, budget, inverses=inverses)


def evol(gamma: TimeDependentSection, budget: NeighborhoodBudget, check: bool = True) -> LocalDiffeo:
    """E(e(gamma)(1))."""
    if check:
        _check_gamma(gamma, budget)
    return _flow_diffeo(gamma, budget, 1.0)


def evolution_path(gamma: TimeDependentSection, budget: NeighborhoodBudget, check: bool = True) -> Callable:
    """t -> E(e(gamma)(t))."""
    if check:
        _check_gamma(gamma, budget)
    return lambda t: _flow_diffeo(gamma, budget, float(t))


class RightLogField(ChartVectorField):
    """x -> d/dt p(t)(q) at q = p(t)^{-1}(x), by central differences."""

    def __init__(self, path: Callable, chart: str, t: float, h: float, dim: int):
        super().__init__(dim)
        self.path, self.chart, self.t, self.h = path, chart, float(t), float(h)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        q = self.path(self.t).inverse_lift(self.chart, x)
        up = self.path(self.t + self.h).lift(self.chart, q)
        dn = self.path(self.t - self.h).lift(self.chart, q)
        return (up - dn) / (2 * self.h)


def right_log_derivative(path: Callable, t: float, atlas, h_fd: float = 1e-4) -> Orbisection:
    """Estimate of (delta^r p)(t) = p'(t) . p(t)^{-1} as an orbisection."""
    return Orbisection(atlas, {cid: RightLogField(path, cid, t, h_fd, atlas.dim) for cid in atlas.chart_ids})


def time_dependent_from_dict(spec: dict, atlas) -> TimeDependentSection:
    """``{"kind": "poly_t", "coefficients": [field spec, ...]}`` or ``{"kind": "poly_t", "slices": [...]}``."""
    if spec.get("kind", "poly_t") != "poly_t":
        raise ConfigError(f"unknown time-dependent field kind {spec.get('kind')!r}")
    if "coefficients" in spec:
        return TimeDependentSection(atlas, coefficients=[orbisection_from_dict(c, atlas) for c in spec["coefficients"]])
    if "slices" in spec:
        return TimeDependentSection(atlas, slices=[orbisection_from_dict(c, atlas) for c in spec["slices"]])
    raise ConfigError("poly_t field needs 'coefficients' or 'slices'")
