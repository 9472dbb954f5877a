"""Truncated multivariate Taylor arithmetic (jets).

A :class:`Jet` stores the Taylor coefficients of a scalar field around a base
point, up to a fixed total order, in a dense table indexed by multi-indices.
Coefficients are ``∂^α f / α!``.  Every coefficient array carries arbitrary
trailing batch dimensions, so one jet can hold a whole grid of points (and
tensor indices placed before the point axis).

Fields are lifted by evaluating them on jet-valued coordinates; the module
level functions :func:`sqrt`, :func:`exp`, :func:`log`, :func:`sin`,
:func:`cos` dispatch to numpy for plain arrays so the same evaluator code runs
on floats and on jets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np


class JetError(ValueError):
    """Raised for invalid jet construction or arithmetic."""


@dataclass(frozen=True)
class MultiIndex:
    exponents: tuple[int, ...]

    def __post_init__(self):
        if any(e < 0 for e in self.exponents):
            raise JetError(f"negative exponent in {self.exponents}")

    @property
    def degree(self) -> int:
        return sum(self.exponents)

    @property
    def factorial(self) -> int:
        return math.prod(math.factorial(e) for e in self.exponents)

    @classmethod
    def unit(cls, nvars: int, var: int, times: int = 1) -> "MultiIndex":
        e = [0] * nvars
        e[var] = times
        return cls(tuple(e))

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a + b for a, b in zip(self.exponents, other.exponents)))


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class _Table:
    """Monomial bookkeeping for one (nvars, order) pair."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        exps = [c for d in range(order + 1) for c in _compositions(d, nvars)]
        self.exps = np.array(exps, dtype=int).reshape(len(exps), nvars)
        self.index = {tuple(e): i for i, e in enumerate(exps)}
        self.degree = self.exps.sum(axis=1)
        self.size = len(exps)
        self.factorial = np.array(
            [math.prod(math.factorial(int(v)) for v in e) for e in self.exps], dtype=float
        )
        pairs = []
        for i, ei in enumerate(exps):
            for j, ej in enumerate(exps):
                if self.degree[i] + self.degree[j] <= order:
                    k = self.index[tuple(a + b for a, b in zip(ei, ej))]
                    pairs.append((k, i, j))
        self.npairs = len(pairs)
        # row i of a multiplies the leading block b[:n_i] into rows K_i
        self.mul_groups = []
        for i, ei in enumerate(exps):
            n = sum(1 for d in self.degree if d <= order - self.degree[i])
            k = np.array([self.index[tuple(a + b for a, b in zip(ei, exps[j]))] for j in range(n)])
            self.mul_groups.append((i, n, k))

    def diff_map(self, var: int):
        """Source indices and multipliers for ∂/∂v into the order-1 table."""
        lower = table(self.nvars, self.order - 1)
        src = np.empty(lower.size, dtype=int)
        mult = np.empty(lower.size, dtype=float)
        for i, e in enumerate(lower.exps):
            bumped = e.copy()
            bumped[var] += 1
            src[i] = self.index[tuple(bumped)]
            mult[i] = bumped[var]
        return src, mult


@lru_cache(maxsize=None)
def table(nvars: int, order: int) -> _Table:
    if order < 0:
        raise JetError("jet order must be non-negative")
    return _Table(nvars, order)


@lru_cache(maxsize=None)
def _diff_map(nvars: int, order: int, var: int):
    return table(nvars, order).diff_map(var)


def _product(a: np.ndarray, b: np.ndarray, t: _Table, combine) -> np.ndarray:
    """Truncated Cauchy product of two coefficient tables."""
    out = combine(a[0], b)
    for i, n, k in t.mul_groups[1:]:
        out[k] += combine(a[i], b[:n])
    return out


class Jet:
    """Truncated Taylor expansion of a field around a base point.

    Parameters
    ----------
    coeffs : ndarray, shape (ncoef, *batch)
        Coefficients ``∂^α f / α!`` in the graded monomial order of
        :func:`table`.
    nvars, order : int
        Number of variables and truncation order.
    point : ndarray, shape (nvars, *points), optional
        Base point; used only to reject mixing jets from different points.
    """

    __slots__ = ("coeffs", "nvars", "order", "point")
    __array_priority__ = 1000

    def __init__(self, coeffs, nvars: int, order: int, point=None):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != table(nvars, order).size:
            raise JetError("coefficient table does not match (nvars, order)")
        self.coeffs = coeffs
        self.nvars = nvars
        self.order = order
        self.point = point

    # construction -----------------------------------------------------
    @classmethod
    def variable(cls, var: int, point, order: int) -> "Jet":
        point = np.asarray(point, dtype=float)
        nvars = point.shape[0]
        t = table(nvars, order)
        c = np.zeros((t.size,) + point.shape[1:])
        c[0] = point[var]
        if order >= 1:
            c[t.index[MultiIndex.unit(nvars, var).exponents]] = 1.0
        return cls(c, nvars, order, point)

    def constant(self, value) -> "Jet":
        value = np.asarray(value, dtype=float)
        shape = np.broadcast_shapes(value.shape, self.shape)
        c = np.zeros((table(self.nvars, self.order).size,) + shape)
        c[0] = value
        return Jet(c, self.nvars, self.order, self.point)

    # basic properties --------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[1:]

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.coeffs[(slice(None),) + idx], self.nvars, self.order, self.point)

    def __repr__(self) -> str:
        return f"Jet(nvars={self.nvars}, order={self.order}, shape={self.shape})"

    def coefficient(self, alpha) -> np.ndarray:
        alpha = tuple(alpha.exponents if isinstance(alpha, MultiIndex) else alpha)
        return self.coeffs[table(self.nvars, self.order).index[alpha]]

    def partial(self, alpha) -> np.ndarray:
        """Value of the mixed partial derivative ``∂^α f`` at the base point."""
        alpha = alpha if isinstance(alpha, MultiIndex) else MultiIndex(tuple(alpha))
        return self.coefficient(alpha) * alpha.factorial

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise JetError("cannot raise the truncation order")
        n = table(self.nvars, order).size
        return Jet(self.coeffs[:n], self.nvars, order, self.point)

    def diff(self, var: int) -> "Jet":
        """Jet of ``∂f/∂v`` (one order lower)."""
        if self.order == 0:
            raise JetError("cannot differentiate an order-0 jet")
        src, mult = _diff_map(self.nvars, self.order, var)
        mult = mult.reshape((-1,) + (1,) * len(self.shape))
        return Jet(self.coeffs[src] * mult, self.nvars, self.order - 1, self.point)

    # arithmetic ---------------------------------------------------------
    def _coerce(self, other) -> tuple["Jet", "Jet"]:
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise JetError("jets over different variable counts")
            if not _same_point(self.point, other.point):
                raise JetError("jets lifted at different base points")
            order = min(self.order, other.order)
            a = self if self.order == order else self.truncate(order)
            b = other if other.order == order else other.truncate(order)
            if a.point is None:
                a = Jet(a.coeffs, a.nvars, a.order, b.point)
            return a, b
        return self, self.constant(other)

    def __add__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            shape = np.broadcast_shapes(self.shape, other.shape)
            c = np.array(np.broadcast_to(self.coeffs, self.coeffs.shape[:1] + shape))
            c[0] += other
            return Jet(c, self.nvars, self.order, self.point)
        a, b = self._coerce(other)
        return Jet(a.coeffs + b.coeffs, a.nvars, a.order, a.point)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.nvars, self.order, self.point)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self.coeffs * other, self.nvars, self.order, self.point)
        a, b = self._coerce(other)
        c = _product(a.coeffs, b.coeffs, table(a.nvars, a.order), np.multiply)
        return Jet(c, a.nvars, a.order, a.point)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * reciprocal(other)

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) and p >= 0:
            result, base = self.constant(1.0), self
            p = int(p)
            while p:
                if p & 1:
                    result = result * base
                p >>= 1
                if p:
                    base = base * base
            return result
        if isinstance(p, (int, np.integer)):
            return reciprocal(self ** (-int(p)))
        p = float(p)
        return _compose(self, lambda v, k: _falling(p, k) * v ** (p - k))

    def einsum(self, subscripts: str, other: "Jet") -> "Jet":
        """Jet-valued ``np.einsum`` over the batch dims of two jets."""
        a, b = self._coerce(other)
        ins, out = subscripts.split("->")
        s1, s2 = ins.split(",")
        spec = f"{s1},Z{s2}->Z{out}"
        c = _product(a.coeffs, b.coeffs, table(a.nvars, a.order), lambda u, v: np.einsum(spec, u, v))
        return Jet(c, a.nvars, a.order, a.point)


def _same_point(p, q) -> bool:
    if p is None or q is None or p is q:
        return True
    return np.shape(p) == np.shape(q) and np.array_equal(p, q)


def _falling(p: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= p - i
    return out


def _compose(a: Jet, deriv: Callable[[np.ndarray, int], np.ndarray]) -> Jet:
    """f(a) via the Taylor series of f at a's value; deriv(v, k) = f^(k)(v)."""
    v = a.value
    h = Jet(a.coeffs.copy(), a.nvars, a.order, a.point)
    h.coeffs[0] = 0.0
    result = a.constant(deriv(v, a.order) / math.factorial(a.order))
    for k in range(a.order - 1, -1, -1):
        result = result * h + deriv(v, k) / math.factorial(k)
    return result


def reciprocal(a):
    if not isinstance(a, Jet):
        return 1.0 / np.asarray(a, dtype=float)
    v = a.value
    if np.any(v == 0):
        raise JetError("division by a jet whose value is zero")
    return _compose(a, lambda x, k: (-1.0) ** k * math.factorial(k) / x ** (k + 1))


def sqrt(a):
    if not isinstance(a, Jet):
        return np.sqrt(a)
    if np.any(a.value <= 0):
        raise JetError("sqrt of a jet requires a positive value")
    return a ** 0.5


def exp(a):
    if not isinstance(a, Jet):
        return np.exp(a)
    return _compose(a, lambda v, k: np.exp(v))


def log(a):
    if not isinstance(a, Jet):
        return np.log(a)
    if np.any(a.value <= 0):
        raise JetError("log of a jet requires a positive value")
    return _compose(a, lambda v, k: np.log(v) if k == 0 else (-1.0) ** (k - 1) * math.factorial(k - 1) / v**k)


def sin(a):
    if not isinstance(a, Jet):
        return np.sin(a)
    return _compose(a, lambda v, k: (np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t))[k % 4](v))


def cos(a):
    if not isinstance(a, Jet):
        return np.cos(a)
    return _compose(a, lambda v, k: (np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t), np.sin)[k % 4](v))


def value(a):
    """Plain value of a jet or array."""
    return a.value if isinstance(a, Jet) else np.asarray(a, dtype=float)


def variable_names(m: int) -> list[str]:
    return [f"x{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(m)]


def jet_lift(field: Callable, point, order: int) -> Jet:
    """Lift ``field(x, y)`` to a jet at ``point = (x¹..xᵐ, y¹..yᵐ)``.

    ``field`` receives two lists of jet coordinates and must use arithmetic and
    the elementary functions of this module.  ``point`` may carry trailing
    batch dimensions.
    """
    point = np.asarray(point, dtype=float)
    if point.shape[0] % 2:
        raise JetError("point must hold m base and m fiber coordinates")
    m = point.shape[0] // 2
    y = point[m:].reshape(m, -1)
    if np.any(np.all(y == 0, axis=0)):
        raise JetError("fiber vector y = 0 is outside TM_o")
    coords = [Jet.variable(k, point, order) for k in range(2 * m)]
    out = field(coords[:m], coords[m:])
    if not isinstance(out, Jet):
        out = coords[0].constant(out)
    bad = ~np.isfinite(out.coeffs)
    if bad.any():
        t = table(2 * m, order)
        k = int(np.flatnonzero(bad.reshape(t.size, -1).any(axis=1))[0])
        names = variable_names(m)
        direction = "".join(
            f"∂{names[v]}" + (f"^{e}" if e > 1 else "") for v, e in enumerate(t.exps[k]) if e
        ) or "value"
        raise JetError(f"non-finite jet coefficient in direction {direction}")
    return out


def jet_arith(a: Jet, b, op: str) -> Jet:
    """Single arithmetic step on jets; ``op`` in add|mul|div|sqrt|pow.

    ``sqrt`` acts on ``a`` (``b`` ignored); ``pow`` raises ``a`` to the scalar
    exponent ``b``.
    """
    if isinstance(b, Jet) and not _same_point(a.point, b.point):
        raise JetError("jets lifted at different base points")
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "div":
        if np.any(value(b) == 0):
            raise JetError("division by a jet whose value is zero")
        return a / b
    if op == "sqrt":
        return sqrt(a)
    if op == "pow":
        return a ** b
    raise JetError(f"unknown jet operation {op!r}")


def stack(jets: Sequence[Jet], axis: int = 0) -> Jet:
    """Stack jets along a new batch axis (counted within the batch dims)."""
    j0 = jets[0]
    order = min(j.order for j in jets)
    cs = [j.truncate(order).coeffs if j.order != order else j.coeffs for j in jets]
    shape = np.broadcast_shapes(*(c.shape for c in cs))
    cs = [np.broadcast_to(c, shape) for c in cs]
    return Jet(np.stack(cs, axis=axis + 1), j0.nvars, order, j0.point)
