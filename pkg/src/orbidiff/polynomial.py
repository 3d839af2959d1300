"""Multivariate polynomial maps R^d -> R^m.

Used for closed-form vector fields, conformal factors and metric entries.
Composition with affine maps keeps results polynomial, which is what the
equivariant averaging and the Lie bracket need.
"""
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


class Polynomial:
    """Polynomial map stored as monomial exponents (M, d) and coefficients (M, m)."""

    __slots__ = ("exponents", "coeffs")

    def __init__(self, exponents, coeffs, simplify: bool = True):
        exponents = np.asarray(exponents, dtype=np.int64)
        coeffs = np.asarray(coeffs, dtype=float)
        if exponents.ndim != 2:
            raise ValueError("exponents must be a 2-d integer array")
        if coeffs.ndim == 1:
            coeffs = coeffs[:, None]
        if coeffs.shape[0] != exponents.shape[0]:
            raise ValueError("one coefficient row per monomial required")
        if np.any(exponents < 0):
            raise ValueError("negative exponent")
        self.exponents = exponents
        self.coeffs = coeffs
        if simplify:
            self._simplify()

    # -- constructors ---------------------------------------------------
    @classmethod
    def zero(cls, dim: int, out: int) -> "Polynomial":
        return cls(np.zeros((0, dim), dtype=np.int64), np.zeros((0, out)))

    @classmethod
    def constant_in(cls, dim: int, value) -> "Polynomial":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(np.zeros((1, dim), dtype=np.int64), value[None, :])

    @classmethod
    def linear(cls, matrix, offset=None) -> "Polynomial":
        """x -> matrix @ x + offset."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        out, dim = matrix.shape
        exps = [np.eye(dim, dtype=np.int64)[k] for k in range(dim)]
        rows = [matrix[:, k] for k in range(dim)]
        if offset is not None:
            exps.append(np.zeros(dim, dtype=np.int64))
            rows.append(np.asarray(offset, dtype=float))
        return cls(np.array(exps), np.array(rows))

    @classmethod
    def from_terms(cls, dim: int, terms: Iterable[tuple[Sequence[int], object]], out: int | None = None) -> "Polynomial":
        """Build from ``[(exponent, coefficient), ...]``; coefficients may be scalars or m-vectors."""
        terms = list(terms)
        if not terms:
            return cls.zero(dim, out or 1)
        exps = np.array([list(e) for e, _ in terms], dtype=np.int64).reshape(len(terms), dim)
        coeffs = np.array([np.atleast_1d(np.asarray(c, dtype=float)) for _, c in terms])
        return cls(exps, coeffs)

    @classmethod
    def stack(cls, polys: Sequence["Polynomial"]) -> "Polynomial":
        """Concatenate the outputs of polynomials in the same variables."""
        dim = polys[0].dim
        outs = [p.out for p in polys]
        exps = np.vstack([p.exponents for p in polys]) if polys else np.zeros((0, dim), dtype=np.int64)
        coeffs = np.zeros((exps.shape[0], sum(outs)))
        r = c = 0
        for p in polys:
            coeffs[r:r + p.exponents.shape[0], c:c + p.out] = p.coeffs
            r += p.exponents.shape[0]
            c += p.out
        return cls(exps.reshape(-1, dim), coeffs)

    # -- basic properties -------------------------------------------------
    @property
    def dim(self) -> int:
        return self.exponents.shape[1]

    @property
    def out(self) -> int:
        return self.coeffs.shape[1]

    @property
    def degree(self) -> int:
        if self.exponents.shape[0] == 0:
            return 0
        return int(self.exponents.sum(axis=1).max())

    def is_zero(self) -> bool:
        return self.exponents.shape[0] == 0

    def _simplify(self):
        if self.exponents.shape[0] == 0:
            return
        uniq, inv = np.unique(self.exponents, axis=0, return_inverse=True)
        inv = np.asarray(inv).reshape(-1)
        summed = np.zeros((uniq.shape[0], self.coeffs.shape[1]))
        np.add.at(summed, inv, self.coeffs)
        keep = np.any(summed != 0.0, axis=1)
        self.exponents = uniq[keep]
        self.coeffs = summed[keep]

    # -- evaluation -------------------------------------------------------
    def monomials(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.exponents.shape[0] == 0:
            return np.zeros(x.shape[:-1] + (0,))
        # integer powers; 0**0 == 1
        return (x[..., None, :] ** self.exponents).prod(axis=-1)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.exponents.shape[0] == 0:
            return np.zeros(x.shape[:-1] + (self.out,))
        return self.monomials(x) @ self.coeffs

    def partial(self, k: int) -> "Polynomial":
        e = self.exponents
        mask = e[:, k] > 0
        if not np.any(mask):
            return Polynomial.zero(self.dim, self.out)
        ne = e[mask].copy()
        factor = ne[:, k].astype(float)
        ne[:, k] -= 1
        return Polynomial(ne, self.coeffs[mask] * factor[:, None])

    def gradient_polys(self) -> list["Polynomial"]:
        return [self.partial(k) for k in range(self.dim)]

    def jacobian(self, x) -> np.ndarray:
        """Array (..., m, d) of partial derivatives."""
        x = np.asarray(x, dtype=float)
        cols = [p(x) for p in self.gradient_polys()]
        return np.stack(cols, axis=-1)

    # -- algebra ----------------------------------------------------------
    def __add__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check_same_shape(other)
        return Polynomial(np.vstack([self.exponents, other.exponents]),
                          np.vstack([self.coeffs, other.coeffs]))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-1.0) * other

    def __neg__(self) -> "Polynomial":
        return (-1.0) * self

    def __mul__(self, scalar) -> "Polynomial":
        if isinstance(scalar, Polynomial):
            return self.times(scalar)
        return Polynomial(self.exponents.copy(), self.coeffs * float(scalar))

    __rmul__ = __mul__

    def _check_same_shape(self, other):
        if self.dim != other.dim or self.out != other.out:
            raise ValueError(f"shape mismatch: ({self.dim}->{self.out}) vs ({other.dim}->{other.out})")

    def times(self, scalar_poly: "Polynomial") -> "Polynomial":
        """Pointwise product with a scalar-valued polynomial."""
        if scalar_poly.out != 1 or scalar_poly.dim != self.dim:
            raise ValueError("times() expects a scalar polynomial on the same variables")
        if self.is_zero() or scalar_poly.is_zero():
            return Polynomial.zero(self.dim, self.out)
        e = (self.exponents[:, None, :] + scalar_poly.exponents[None, :, :]).reshape(-1, self.dim)
        c = (self.coeffs[:, None, :] * scalar_poly.coeffs[None, :, :]).reshape(-1, self.out)
        return Polynomial(e, c)

    def component(self, i: int) -> "Polynomial":
        return Polynomial(self.exponents.copy(), self.coeffs[:, i:i + 1])

    def left_matmul(self, matrix) -> "Polynomial":
        """x -> matrix @ p(x)."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        return Polynomial(self.exponents.copy(), self.coeffs @ matrix.T)

    def compose(self, inner: "Polynomial") -> "Polynomial":
        """x -> p(inner(x)); ``inner`` maps R^k -> R^d."""
        if inner.out != self.dim:
            raise ValueError("inner polynomial has wrong output dimension")
        comps = [inner.component(i) for i in range(self.dim)]
        one = Polynomial.constant_in(inner.dim, 1.0)
        cache: dict[tuple[int, int], Polynomial] = {}

        def power(i, n):
            if n == 0:
                return one
            key = (i, n)
            if key not in cache:
                cache[key] = power(i, n - 1).times(comps[i])
            return cache[key]

        result = Polynomial.zero(inner.dim, self.out)
        for exp, coeff in zip(self.exponents, self.coeffs):
            mono = one
            for i, n in enumerate(exp):
                if n:
                    mono = mono.times(power(i, int(n)))
            result = result + Polynomial(mono.exponents, mono.coeffs @ coeff[None, :])
        return result

    def compose_affine(self, matrix, offset=None) -> "Polynomial":
        return self.compose(Polynomial.linear(matrix, offset))

    def __repr__(self) -> str:
        return f"Polynomial(dim={self.dim}, out={self.out}, terms={self.exponents.shape[0]}, degree={self.degree})"

    def to_terms(self) -> list:
        return [[e.tolist(), c.tolist()] for e, c in zip(self.exponents, self.coeffs)]
