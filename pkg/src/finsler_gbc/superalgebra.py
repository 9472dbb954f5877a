"""Finite-dimensional superspace engine on the exterior algebra Λ*(V*).

Operators are dense ``2**m × 2**m`` matrices in the monomial basis of
Λ*(V*) (bitmask ``S`` ↔ ``v*^{s1}∧…∧v*^{sk}`` with ``s1 < … < sk``).  A
:class:`FormValuedOp` carries coefficients in a small auxiliary exterior
algebra (standing in for ``dx^i, δy^i``); auxiliary symbols anticommute with
odd operators (Koszul sign), which is the convention under which supertraces of
superbrackets vanish.

This module is an oracle: it favours brute force over speed.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import permutations
from typing import Sequence

import numpy as np

from .forms import Form, _wedge_table, popcount


class SuperalgebraError(ValueError):
    pass


@lru_cache(maxsize=None)
def _parity(m: int) -> np.ndarray:
    return np.array([popcount(s) & 1 for s in range(1 << m)])


@lru_cache(maxsize=None)
def _tau(m: int) -> np.ndarray:
    return 1.0 - 2.0 * _parity(m)


@lru_cache(maxsize=None)
def _elementary(m: int, kind: str, index: int) -> np.ndarray:
    size = 1 << m
    mat = np.zeros((size, size))
    bit = 1 << index
    for s in range(size):
        sign = -1.0 if popcount(s & (bit - 1)) & 1 else 1.0
        if kind == "wedge" and not s & bit:
            mat[s | bit, s] = sign
        elif kind == "contract" and s & bit:
            mat[s ^ bit, s] = sign
    mat.setflags(write=False)
    return mat


def _split(matrix: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Even (parity preserving) and odd parts of an operator matrix."""
    p = _parity(m)
    same = p[:, None] == p[None, :]
    return matrix * same, matrix * ~same


class SuperOp:
    """Operator on Λ*(V*) with ``dim V = m``."""

    __slots__ = ("matrix", "m")

    def __init__(self, matrix, m: int):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (1 << m, 1 << m):
            raise SuperalgebraError("matrix shape does not match 2**m")
        self.matrix = matrix
        self.m = m

    @classmethod
    def identity(cls, m: int) -> "SuperOp":
        return cls(np.eye(1 << m), m)

    @property
    def parity(self) -> str:
        """``even``, ``odd`` or ``mixed`` (the zero operator counts as even)."""
        even, odd = _split(self.matrix, self.m)
        e, o = np.any(even != 0), np.any(odd != 0)
        return "mixed" if e and o else "odd" if o else "even"

    def __matmul__(self, other: "SuperOp") -> "SuperOp":
        return SuperOp(self.matrix @ other.matrix, self.m)

    def __add__(self, other: "SuperOp") -> "SuperOp":
        return SuperOp(self.matrix + other.matrix, self.m)

    def __sub__(self, other: "SuperOp") -> "SuperOp":
        return SuperOp(self.matrix - other.matrix, self.m)

    def __neg__(self) -> "SuperOp":
        return SuperOp(-self.matrix, self.m)

    def __mul__(self, scalar) -> "SuperOp":
        return SuperOp(self.matrix * float(scalar), self.m)

    __rmul__ = __mul__

    def bracket(self, other: "SuperOp") -> "SuperOp":
        """Superbracket ``AB − (−1)^{|A||B|} BA`` (operands of pure parity)."""
        pa, pb = self.parity, other.parity
        if "mixed" in (pa, pb):
            raise SuperalgebraError("superbracket needs operators of pure parity")
        sign = -1.0 if pa == pb == "odd" else 1.0
        return SuperOp(self.matrix @ other.matrix - sign * other.matrix @ self.matrix, self.m)


def wedge_contract(kind: str, index: int, m: int) -> SuperOp:
    """``v*^index ∧`` (kind ``wedge``) or ``i_{v_index}`` (kind ``contract``); index is 1-based."""
    if kind not in ("wedge", "contract"):
        raise SuperalgebraError(f"unknown kind {kind!r}")
    if not 1 <= index <= m:
        raise SuperalgebraError(f"index {index} out of range 1..{m}")
    return SuperOp(_elementary(m, kind, index - 1), m)


def _wedge_vec(coeffs, m: int) -> np.ndarray:
    return sum(float(c) * _elementary(m, "wedge", i) for i, c in enumerate(coeffs))


def _contract_vec(coeffs, m: int) -> np.ndarray:
    return sum(float(c) * _elementary(m, "contract", i) for i, c in enumerate(coeffs))


def clifford(v, metric=None, hat: bool = False) -> SuperOp:
    """``c(v) = v*∧ − i_v`` or ``ĉ(v) = v*∧ + i_v`` with ``v* = g(v, ·)``."""
    v = np.asarray(v, dtype=float)
    m = v.shape[0]
    g = np.eye(m) if metric is None else np.asarray(metric, dtype=float)
    if not np.allclose(g, g.T, atol=1e-12) or np.linalg.eigvalsh(g).min() <= 0:
        raise SuperalgebraError("metric must be symmetric positive definite")
    sign = 1.0 if hat else -1.0
    return SuperOp(_wedge_vec(g @ v, m) + sign * _contract_vec(v, m), m)


def lift(B) -> SuperOp:
    """Derivation ``B♮ = −Σ B^j_i v*^i ∧ i_{v_j}``; ``B[j, i] = B^j_i``."""
    B = np.asarray(B, dtype=float)
    m = B.shape[0]
    out = np.zeros((1 << m, 1 << m))
    for i in range(m):
        for j in range(m):
            if B[j, i]:
                out -= B[j, i] * _elementary(m, "wedge", i) @ _elementary(m, "contract", j)
    return SuperOp(out, m)


class FormValuedOp:
    """Operator on Λ*(V*) with coefficients in an auxiliary exterior algebra.

    ``coeffs[a]`` is the operator multiplying auxiliary monomial ``a``; an
    element is ``Σ_a α_a ⊗ X_a`` and products follow
    ``(α⊗X)(β⊗Y) = (−1)^{|X||β|} αβ ⊗ XY``.
    """

    __slots__ = ("coeffs", "gens", "m")

    def __init__(self, coeffs, gens: Sequence[str], m: int):
        self.gens = tuple(gens)
        self.m = m
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (1 << len(self.gens), 1 << m, 1 << m):
            raise SuperalgebraError("coefficient array has the wrong shape")
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, gens, m) -> "FormValuedOp":
        return cls(np.zeros((1 << len(gens), 1 << m, 1 << m)), gens, m)

    @classmethod
    def from_op(cls, op: SuperOp, gens) -> "FormValuedOp":
        out = cls.zeros(gens, op.m)
        out.coeffs[0] = op.matrix
        return out

    @classmethod
    def tensor(cls, form: Form, op: SuperOp) -> "FormValuedOp":
        """``α ⊗ X`` for a scalar-batch :class:`Form` α."""
        if form.shape:
            raise SuperalgebraError("form must be unbatched")
        return cls(form.coeffs[:, None, None] * op.matrix[None], form.gens, op.m)

    def __add__(self, other: "FormValuedOp") -> "FormValuedOp":
        return FormValuedOp(self.coeffs + other.coeffs, self.gens, self.m)

    def __sub__(self, other: "FormValuedOp") -> "FormValuedOp":
        return FormValuedOp(self.coeffs - other.coeffs, self.gens, self.m)

    def __neg__(self) -> "FormValuedOp":
        return FormValuedOp(-self.coeffs, self.gens, self.m)

    def __mul__(self, scalar) -> "FormValuedOp":
        return FormValuedOp(self.coeffs * float(scalar), self.gens, self.m)

    __rmul__ = __mul__

    def __matmul__(self, other: "FormValuedOp") -> "FormValuedOp":
        if other.gens != self.gens or other.m != self.m:
            raise SuperalgebraError("incompatible operands")
        ngen = len(self.gens)
        out = np.zeros_like(self.coeffs)
        beta_odd = (np.array([popcount(b) for b in range(1 << ngen)]) & 1).astype(bool)
        table = _wedge_table(ngen)
        for a in np.flatnonzero(np.any(self.coeffs != 0, axis=(1, 2))):
            even, odd = _split(self.coeffs[a], self.m)
            bs, tgt, signs = table[a]
            y = other.coeffs[bs]
            left = np.where(beta_odd[bs][:, None, None], even - odd, even + odd)
            out[tgt] += signs[:, None, None] * (left @ y)
        return FormValuedOp(out, self.gens, self.m)

    def power(self, k: int) -> "FormValuedOp":
        out = FormValuedOp.from_op(SuperOp.identity(self.m), self.gens)
        for _ in range(k):
            out = out @ self
        return out


def supertrace(op):
    """``tr[τ X]``; per auxiliary monomial for a :class:`FormValuedOp`."""
    if isinstance(op, SuperOp):
        return float(np.dot(_tau(op.m), np.diag(op.matrix)))
    if isinstance(op, FormValuedOp):
        diag = np.diagonal(op.coeffs, axis1=1, axis2=2)
        return Form(diag @ _tau(op.m), op.gens)
    raise SuperalgebraError("supertrace expects a SuperOp or FormValuedOp")


def kronecker_delta(upper: Sequence[int], lower: Sequence[int]) -> int:
    """Generalized Kronecker delta ``δ^{upper}_{lower}`` = det[δ^{u_a}_{l_b}]."""
    if len(upper) != len(lower):
        raise SuperalgebraError("index lists must have equal length")
    return int(round(np.linalg.det(np.equal.outer(upper, lower).astype(float)))) if upper else 1


def _perm_sign(p: Sequence[int]) -> int:
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


@lru_cache(maxsize=None)
def _signed_perms(dim: int):
    return [(p, _perm_sign(p)) for p in permutations(range(dim))]


def delta_contract(factors: Sequence[Form]) -> Form:
    """``δ^{i1…id}_{j1…jd} M1[i1,j1] ∧ … ∧ Md[id,jd]`` with ``d = len(factors)``.

    Each factor is a matrix-valued :class:`Form` with batch shape
    ``(d, d, *rest)`` indexed ``[lower i, upper j]`` (so ``M[i, j] = M_i^j``).
    Only permutations contribute since every index ranges over ``d`` values.
    """
    d = len(factors)
    if any(f.shape[:2] != (d, d) for f in factors):
        raise SuperalgebraError("factor index dimension must equal the number of factors")
    perms = _signed_perms(d)
    total = None
    for p, sp in perms:
        # δ depends on the pairing only through sign(p)·sign(q); fix the upper order
        for q, sq in perms:
            term = factors[0][p[0], q[0]]
            for a in range(1, d):
                term = term.wedge(factors[a][p[a], q[a]])
            term = term * (sp * sq)
            total = term if total is None else total + term
    return total


def g1_closed_form(R: Form, P: Form, Upsilon: Form, Xi: Form, n: int, k: int,
                   coefficient: str = "printed") -> Form:
    """Closed-form δ-contraction for ``tr_s[c(e)c(∇e)^{2k−1}(R♮)^k(P♮)^{2n−2k}]``.

    ``coefficient='printed'`` uses ``(−1)^k C(2k−2, k−1)``; ``'engine'`` uses
    ``(−1)^k C(2k−1, k−1)``, the value the superalgebra engine produces.
    Inputs are matrix-valued forms indexed ``[lower, upper]``.
    """
    if not 1 <= k <= n:
        raise SuperalgebraError("k must lie in 1..n")
    d = 2 * n
    for f in (R, P, Upsilon, Xi):
        if f.shape[:2] != (d, d):
            raise SuperalgebraError("index dimension must be 2n")
    top = 2 * k - 2 if coefficient == "printed" else 2 * k - 1
    c = (-1) ** k * math.comb(top, k - 1)
    factors = [R] * k + [P] * (d - 2 * k) + [Upsilon] * (k - 1) + [Xi]
    return delta_contract(factors) * c


def _matrix_lift(M: Form, m: int) -> FormValuedOp:
    """``−Σ M_i^j ⊗ v*^i ∧ i_{v_j}`` for a matrix-valued form ``M[i, j]``."""
    out = FormValuedOp.zeros(M.gens, m)
    for i in range(m):
        for j in range(m):
            op = _elementary(m, "wedge", i) @ _elementary(m, "contract", j)
            out.coeffs -= M.coeffs[:, i, j, None, None] * op[None]
    return out


def _vector_clifford(omega: Form, vec: Form, m: int) -> FormValuedOp:
    """``ω_j ⊗ v*^j∧ − v^i ⊗ i_{v_i}`` for form-valued covector/vector."""
    out = FormValuedOp.zeros(omega.gens, m)
    for j in range(m):
        out.coeffs += omega.coeffs[:, j, None, None] * _elementary(m, "wedge", j)[None]
        out.coeffs -= vec.coeffs[:, j, None, None] * _elementary(m, "contract", j)[None]
    return out


def g1_engine(g, e, nabla_e: Form, R: Form, P: Form, n: int, k: int) -> Form:
    """Superalgebra evaluation of ``tr_s[c(e)c(∇e)^{2k−1}(R♮)^k(P♮)^{2n−2k}]``.

    ``g`` is the metric on V, ``e`` a unit vector, ``nabla_e`` the
    form-valued vector ``(∇e)^j``; ``(∇*ω)_i = g_ik (∇e)^k``.
    """
    m = 2 * n
    g = np.asarray(g, dtype=float)
    gens = R.gens
    ce = FormValuedOp.from_op(clifford(e, g), gens)
    nabla_omega = Form(np.einsum("ik,zk->zi", g, nabla_e.coeffs), gens)
    cne = _vector_clifford(nabla_omega, nabla_e, m)
    prod = ce @ cne.power(2 * k - 1) @ _matrix_lift(R, m).power(k) @ _matrix_lift(P, m).power(m - 2 * k)
    return supertrace(prod)


def upsilon_xi(g, e, nabla_e: Form) -> tuple[Form, Form]:
    """``Υ_i^j = (∇*ω)_i (∇e)^j`` and ``Ξ_i^j = ω_i (∇e)^j − e^j (∇*ω)_i``, indexed ``[i, j]``."""
    g = np.asarray(g, dtype=float)
    e = np.asarray(e, dtype=float)
    m = e.shape[0]
    omega = g @ e
    nabla_omega = Form(np.einsum("ik,zk->zi", g, nabla_e.coeffs), nabla_e.gens)
    ups = Form.zeros(nabla_e.gens, (m, m))
    xi = Form.zeros(nabla_e.gens, (m, m))
    for i in range(m):
        for j in range(m):
            ups.coeffs[:, i, j] = nabla_omega[i].wedge(nabla_e[j]).coeffs
            xi.coeffs[:, i, j] = omega[i] * nabla_e.coeffs[:, j] - e[j] * nabla_omega.coeffs[:, i]
    return ups, xi


def theta_engine(theta: Form, P: Form, n: int) -> Form:
    """Superalgebra evaluation of ``tr_s[θ♮ (P♮)^{2n−1}]``."""
    m = 2 * n
    return supertrace(_matrix_lift(theta, m) @ _matrix_lift(P, m).power(m - 1))


def theta_closed_form(theta: Form, P: Form, n: int) -> Form:
    """``δ^{i1…i2n}_{j1…j2n} P_{i1}^{j1}⋯P_{i_{2n−1}}^{j_{2n−1}} θ_{i_{2n}}^{j_{2n}}``."""
    return delta_contract([P] * (2 * n - 1) + [theta])


def random_instance(n: int, rng: np.random.Generator, ngen: int | None = None):
    """Synthetic data consistent with a unit section: returns (gens, g, e, ∇e, R, P, θ).

    ``g`` is SPD, ``g(e, e) = 1`` and ``g(e, ∇e) = 0``; R and P are random
    matrix-valued 2-forms, θ a matrix-valued 1-form, over ``ngen`` auxiliary
    generators (default ``4n``).
    """
    m = 2 * n
    ngen = 2 * m if ngen is None else ngen
    gens = tuple(f"a{i}" for i in range(ngen))
    A = rng.normal(size=(m, m))
    g = A @ A.T + m * np.eye(m)
    e = rng.normal(size=m)
    e /= math.sqrt(e @ g @ e)
    ne = Form.one_form(rng.normal(size=(ngen, m)), gens)
    proj = np.eye(m) - np.outer(e, g @ e)
    ne = Form(np.einsum("jk,zk->zj", proj, ne.coeffs), gens)

    def rand_form(degree):
        f = Form(rng.normal(size=(1 << ngen, m, m)), gens)
        return f.part(degree)

    return gens, g, e, ne, rand_form(2), rand_form(2), rand_form(1)
