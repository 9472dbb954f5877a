"""Dense exterior algebra over a small set of anticommuting 1-form symbols.

Monomials are bitmasks over the generators (bit ``k`` set means generator
``k`` is present, wedged in increasing generator order).  Coefficients are
stored densely, shape ``(2**ngen, *batch)``, so one :class:`Form` holds the
value of a form at every node of a grid, and tensor indices may sit in the
batch dimensions.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from typing import Sequence

import numpy as np


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def wedge_sign(a: int, b: int) -> int:
    """Sign of reordering ``mono(a) ∧ mono(b)`` into increasing order."""
    swaps = 0
    for j in range(b.bit_length()):
        if b >> j & 1:
            swaps += popcount(a >> (j + 1))
    return -1 if swaps & 1 else 1


@lru_cache(maxsize=None)
def _wedge_table(ngen: int):
    """For every mask a: (compatible masks b, targets a|b, signs)."""
    size = 1 << ngen
    out = []
    for a in range(size):
        bs = np.array([b for b in range(size) if not a & b], dtype=int)
        signs = np.array([wedge_sign(a, int(b)) for b in bs], dtype=float)
        out.append((bs, a | bs, signs))
    return out


@lru_cache(maxsize=None)
def masks_of_degree(ngen: int, degree: int) -> tuple[int, ...]:
    return tuple(sum(1 << k for k in c) for c in combinations(range(ngen), degree))


@lru_cache(maxsize=None)
def degrees(ngen: int) -> np.ndarray:
    return np.array([popcount(m) for m in range(1 << ngen)])


class Form:
    """Element of Λ(span of ``gens``) with batched coefficients."""

    __slots__ = ("coeffs", "gens")
    __array_priority__ = 1000

    def __init__(self, coeffs, gens: Sequence[str]):
        self.gens = tuple(gens)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != 1 << len(self.gens):
            raise ValueError("coefficient array does not match generator count")
        self.coeffs = coeffs

    @property
    def ngen(self) -> int:
        return len(self.gens)

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[1:]

    @classmethod
    def zeros(cls, gens: Sequence[str], shape=()) -> "Form":
        return cls(np.zeros((1 << len(gens),) + tuple(shape)), gens)

    @classmethod
    def scalar(cls, value, gens: Sequence[str]) -> "Form":
        value = np.asarray(value, dtype=float)
        f = cls.zeros(gens, value.shape)
        f.coeffs[0] = value
        return f

    @classmethod
    def one_form(cls, components, gens: Sequence[str]) -> "Form":
        """Σ_k components[k] · gens[k]; components shape (ngen, *batch)."""
        components = np.asarray(components, dtype=float)
        f = cls.zeros(gens, components.shape[1:])
        for k in range(len(gens)):
            f.coeffs[1 << k] = components[k]
        return f

    @classmethod
    def generator(cls, k: int, gens: Sequence[str]) -> "Form":
        f = cls.zeros(gens)
        f.coeffs[1 << k] = 1.0
        return f

    def mask(self, *names: str) -> int:
        return sum(1 << self.gens.index(n) for n in names)

    def component(self, *names: str) -> np.ndarray:
        """Coefficient of the monomial ``names[0]∧names[1]∧…`` (ordering sign applied)."""
        mask, sign = 0, 1
        for n in names:
            bit = 1 << self.gens.index(n)
            if mask & bit:
                return np.zeros(self.shape)
            sign *= wedge_sign(mask, bit)
            mask |= bit
        return sign * self.coeffs[mask]

    def top(self) -> np.ndarray:
        return self.coeffs[-1]

    def part(self, degree: int) -> "Form":
        keep = (degrees(self.ngen) == degree).reshape((-1,) + (1,) * len(self.shape))
        return Form(self.coeffs * keep, self.gens)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def __getitem__(self, idx) -> "Form":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Form(self.coeffs[(slice(None),) + idx], self.gens)

    def __repr__(self) -> str:
        return f"Form(gens={self.gens}, shape={self.shape})"

    # algebra ------------------------------------------------------------
    def _check(self, other: "Form"):
        if other.gens != self.gens:
            raise ValueError(f"forms over different generators {self.gens} vs {other.gens}")

    def __add__(self, other):
        if isinstance(other, Form):
            self._check(other)
            return Form(self.coeffs + other.coeffs, self.gens)
        if np.all(np.asarray(other) == 0):
            return self
        return self + Form.scalar(other, self.gens)

    __radd__ = __add__

    def __neg__(self):
        return Form(-self.coeffs, self.gens)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        """Multiplication by a scalar field (array broadcast over the batch)."""
        if isinstance(other, Form):
            return self.wedge(other)
        return Form(self.coeffs * np.asarray(other, dtype=float), self.gens)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Form(self.coeffs / np.asarray(other, dtype=float), self.gens)

    def __xor__(self, other: "Form") -> "Form":
        return self.wedge(other)

    def wedge(self, other: "Form") -> "Form":
        self._check(other)
        a, b = self.coeffs, other.coeffs
        shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
        a = a.reshape(a.shape[:1] + (1,) * (len(shape) + 1 - a.ndim) + a.shape[1:])
        b = b.reshape(b.shape[:1] + (1,) * (len(shape) + 1 - b.ndim) + b.shape[1:])
        out = np.zeros((a.shape[0],) + shape)
        extra = (1,) * len(shape)
        nz = np.flatnonzero(np.any(a.reshape(a.shape[0], -1) != 0, axis=1))
        for m in nz:
            bs, tgt, signs = _wedge_table(self.ngen)[m]
            out[tgt] += (signs.reshape((-1,) + extra)) * a[m] * b[bs]
        return Form(out, self.gens)

    def pullback(self, matrix, new_gens: Sequence[str]) -> "Form":
        """Substitute ``gen_i ↦ Σ_j matrix[i, j] · new_gen_j``.

        ``matrix`` has shape (ngen, len(new_gens), *batch); the image of a
        monomial on a new monomial is the corresponding minor.
        """
        matrix = np.asarray(matrix, dtype=float)
        new_gens = tuple(new_gens)
        g_old, g_new = self.ngen, len(new_gens)
        mshape = matrix.shape[2:]
        shape = np.broadcast_shapes(self.shape, mshape)
        out = np.zeros((1 << g_new,) + shape)
        out[0] = self.coeffs[0]
        for d in range(1, min(g_old, g_new) + 1):
            for smask in masks_of_degree(g_old, d):
                c = self.coeffs[smask]
                if not np.any(c):
                    continue
                rows = [k for k in range(g_old) if smask >> k & 1]
                for tmask in masks_of_degree(g_new, d):
                    cols = [k for k in range(g_new) if tmask >> k & 1]
                    sub = matrix[np.ix_(rows, cols)]
                    minor = np.linalg.det(np.moveaxis(sub, (0, 1), (-2, -1))) if d > 1 else sub[0, 0]
                    out[tmask] += c * minor
        return Form(out, new_gens)


def stack(forms: Sequence[Form], axis: int = 0) -> Form:
    shape = np.broadcast_shapes(*(f.coeffs.shape for f in forms))
    return Form(np.stack([np.broadcast_to(f.coeffs, shape) for f in forms], axis=axis + 1), forms[0].gens)


def wedge_all(forms: Sequence[Form]) -> Form:
    out = forms[0]
    for f in forms[1:]:
        out = out.wedge(f)
    return out
