"""Chern connection, curvature split R + P, special frame and Pfaffians.

Curvature convention: ``Ω^i_j = dϖ^i_j + ϖ^i_k ∧ ϖ^k_j`` with
``ϖ^i_j = Γ^i_jk dx^k``.  Components are read in the coframe
``{dx, δy}``::

    Ω^i_j = ½ R^i_{jkl} dx^k∧dx^l + P^i_{jkl} dx^k∧δy^l/F

so that ``R^i_{jkl} = δ_kΓ^i_{jl} − δ_lΓ^i_{jk} + Γ^i_{mk}Γ^m_{jl} − Γ^i_{ml}Γ^m_{jk}``
and ``P^i_{jkl} = −F ∂Γ^i_{jk}/∂y^l``.  Index layout: ``gamma[i, j, k]``,
``R[i, j, k, l]``, ``P[i, j, k, l]``; matrix-valued forms ``[i, j] = (·)^i_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import jets
from .finsler import FinslerData, horizontal_frame
from .forms import Form
from .jets import Jet

DYDY_TOL = 1e-10
P_CROSSCHECK_TOL = 1e-9


class ChernError(ValueError):
    pass


def coordinate_gens(m: int) -> tuple[str, ...]:
    return tuple(f"dx{i + 1}" for i in range(m)) + tuple(f"dy{i + 1}" for i in range(m))


def delta_gens(m: int) -> tuple[str, ...]:
    return tuple(f"dx{i + 1}" for i in range(m)) + tuple(f"δy{i + 1}" for i in range(m))


@dataclass
class ChernData:
    gamma: np.ndarray
    gamma_jet: Jet
    R: np.ndarray
    P: np.ndarray
    omega: Form  # ϖ^i_j in the {dx, δy} coframe, batch (m, m, N)
    Omega: Form  # Ω^i_j in the {dx, δy} coframe, batch (m, m, N)
    dydy_residual: float
    p_crosscheck: float


def _transpose(j: Jet, axes) -> Jet:
    nb = len(j.shape)
    return Jet(np.transpose(j.coeffs, (0,) + tuple(a + 1 for a in axes) + tuple(range(len(axes) + 1, nb + 1))),
               j.nvars, j.order, j.point)


def christoffel(fd: FinslerData) -> Jet:
    """Jet (order 1) of ``Γ^i_jk = ½ g^{il}(δ_k g_lj + δ_j g_lk − δ_l g_jk)``."""
    m = fd.m
    g = fd.g_jet
    dg = []
    for k in range(m):
        acc = g.diff(k)
        for a in range(m):
            acc = acc - fd.N_jet[a, k] * g.diff(m + a)
        dg.append(acc)
    D = jets.stack(dg, axis=2)  # D[l, j, k] = δ_k g_lj
    C = D + _transpose(D, (0, 2, 1)) - _transpose(D, (2, 0, 1))
    return 0.5 * _contract_first(fd.ginv_jet, C)


def _contract_first(ginv: Jet, C: Jet) -> Jet:
    extra = "".join(chr(ord("p") + i) for i in range(len(C.shape) - 3))
    return ginv.einsum(f"il{extra},ljk{extra}->ijk{extra}", C)


def connection_form(gamma: np.ndarray, gens) -> Form:
    """``ϖ^i_j = Γ^i_jk dx^k`` as a matrix-valued form."""
    m = gamma.shape[0]
    comps = np.zeros((len(gens),) + gamma.shape[:2] + gamma.shape[3:])
    comps[:m] = np.moveaxis(gamma, 2, 0)
    return Form.one_form(comps, gens)


def _matmul(a: Form, b: Form) -> Form:
    """``(a∧b)^i_j = a^i_k ∧ b^k_j`` for matrix-valued forms with batch (m, m, ...)."""
    m = a.shape[0]
    out = None
    for k in range(m):
        term = a[:, k][:, None].wedge(b[k][None])
        out = term if out is None else out + term
    return out


def curvature_split(fd: FinslerData, gamma_jet: Jet) -> ChernData:
    """Ω = dϖ + ϖ∧ϖ expanded in {dx, δy}; returns the R and P blocks with checks."""
    m = fd.m
    cgens, dgens = coordinate_gens(m), delta_gens(m)
    gamma = gamma_jet.value
    # dϖ^i_j = ∂_a Γ^i_jk (coord_a ∧ dx^k)
    dgam = np.array([gamma_jet.diff(a).value for a in range(2 * m)])
    dpi = None
    for k in range(m):
        first = Form.one_form(dgam[..., k, :], cgens)
        term = first.wedge(Form.generator(k, cgens))
        dpi = term if dpi is None else dpi + term
    pi_c = connection_form(gamma, cgens)
    Omega_c = dpi + _matmul(pi_c, pi_c)
    M = horizontal_frame(fd)
    Omega = Omega_c.pullback(M, dgens)
    pi = pi_c.pullback(M, dgens)

    R = np.zeros((m,) * 4 + fd.F.shape)
    P = np.zeros((m,) * 4 + fd.F.shape)
    for k in range(m):
        for l in range(m):
            if k != l:
                R[:, :, k, l] = Omega.component(dgens[k], dgens[l])
            P[:, :, k, l] = fd.F * Omega.component(dgens[k], dgens[m + l])
    dydy = 0.0
    for a in range(m):
        for b in range(a + 1, m):
            dydy = max(dydy, float(np.max(np.abs(Omega.component(dgens[m + a], dgens[m + b])), initial=0.0)))
    if dydy > DYDY_TOL:
        raise ChernError(f"δy∧δy curvature block is {dydy:.3e}; convention or implementation fault")
    P_direct = -fd.F * np.moveaxis(np.array([gamma_jet.diff(m + l).value for l in range(m)]), 0, 3)
    cross = float(np.max(np.abs(P - P_direct), initial=0.0))
    return ChernData(gamma, gamma_jet, R, P, pi, Omega, dydy, cross)


def chern_data(fd: FinslerData) -> ChernData:
    return curvature_split(fd, christoffel(fd))


def riemann_closed_form(fd: FinslerData, gamma_jet: Jet) -> np.ndarray:
    """R^i_{jkl} from the δ-derivative formula (independent of the form machinery)."""
    m = fd.m
    gamma = gamma_jet.value
    dgam = np.array([gamma_jet.diff(a).value for a in range(2 * m)])
    delta = dgam[:m] - np.einsum("ak...,aijl...->kijl...", fd.N, dgam[m:])  # delta[k] = δ_kΓ
    dk = np.moveaxis(delta, 0, 3)  # [i, j, l, k] = δ_kΓ^i_jl
    R = np.swapaxes(dk, 2, 3) - dk  # [i,j,k,l] = δ_kΓ^i_jl − δ_lΓ^i_jk
    quad = np.einsum("imk...,mjl...->ijkl...", gamma, gamma)
    return R + quad - np.swapaxes(quad, 2, 3)


def structure_residual_fields(cd: ChernData, fd: FinslerData,
                              gamma: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (torsion, almost-metricity) residuals, each of shape ``fd.F.shape``."""
    m = fd.m
    gamma = cd.gamma if gamma is None else gamma
    torsion = np.max(np.abs(gamma - np.swapaxes(gamma, 1, 2)).reshape((-1,) + fd.F.shape), axis=0)
    cgens, dgens = coordinate_gens(m), delta_gens(m)
    dg_comp = np.array([fd.g_jet.diff(a).value for a in range(2 * m)])
    dg = Form.one_form(dg_comp, cgens).pullback(horizontal_frame(fd), dgens)
    pi = connection_form(gamma, dgens)
    gpi = Form(np.einsum("ik...,zkj...->zij...", fd.g, pi.coeffs), dgens)  # g_ik ϖ^k_j
    a_comp = np.zeros((2 * m,) + fd.g.shape)
    a_comp[m:] = 2.0 * np.moveaxis(fd.A, 2, 0) / fd.F
    res = dg - gpi - Form(np.swapaxes(gpi.coeffs, 1, 2), dgens) - Form.one_form(a_comp, dgens)
    metricity = np.max(np.abs(res.coeffs).reshape((-1,) + fd.F.shape), axis=0)
    return torsion, metricity


def structure_residuals(cd: ChernData, fd: FinslerData, gamma: np.ndarray | None = None) -> tuple[float, float]:
    """(torsion, almost-metricity) residuals; ``gamma`` overrides cd.gamma (canary tests)."""
    torsion, metricity = structure_residual_fields(cd, fd, gamma)
    return float(np.max(torsion, initial=0.0)), float(np.max(metricity, initial=0.0))


# -- special frame -----------------------------------------------------------

@dataclass
class SpecialFrame:
    """g_F-orthonormal frame with ``e_m = y/F``.

    ``u[j, a] = u_a^j`` (columns are frame vectors), ``v[a, i]`` the dual
    coframe; ``conn[b, a] = ω^b_a`` and ``curv[b, a] = Ω^b_a`` are forms in
    the {dx, δy} coframe.
    """

    u: np.ndarray
    v: np.ndarray
    conn: Form
    curv: Form

    @property
    def coframe(self) -> np.ndarray:
        return self.v


def _frame_jets(fd: FinslerData) -> Jet:
    """Jet (order 1) of u[j, a]."""
    m = fd.m
    Fj = fd.F_jet.truncate(2)
    Fy = [Fj.diff(m + i) for i in range(m)]  # order 1
    y = [Jet.variable(m + i, fd.point, 1) for i in range(m)]
    Fj1 = Fj.truncate(1)
    g = fd.g_jet.truncate(1)
    if m == 2:
        sg = jets.sqrt(g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0])
        e1 = [Fy[1] / sg, -Fy[0] / sg]
        e2 = [y[0] / Fj1, y[1] / Fj1]
        return jets.stack([jets.stack([e1[j], e2[j]]) for j in range(m)])
    return _gram_schmidt(fd, g, [yi / Fj1 for yi in y])


def _gram_schmidt(fd: FinslerData, g: Jet, last: list) -> Jet:
    m = fd.m
    npts = fd.F.shape
    drop = np.argmax(np.abs(fd.y), axis=0)  # coordinate direction most aligned with y
    seeds = []
    for s in range(m - 1):
        idx = np.where(s < drop, s, s + 1)
        vec = np.zeros((m,) + npts)
        np.put_along_axis(vec, idx[None], 1.0, axis=0)
        seeds.append([last[0].constant(vec[j]) for j in range(m)])

    def inner(a, b):
        acc = None
        for i in range(m):
            for j in range(m):
                t = g[i, j] * a[i] * b[j]
                acc = t if acc is None else acc + t
        return acc

    basis = [last]
    for s in seeds:
        w = list(s)
        for b in basis:
            c = inner(b, w)
            w = [w[j] - c * b[j] for j in range(m)]
        nrm = jets.sqrt(inner(w, w))
        basis.append([w[j] / nrm for j in range(m)])
    vecs = basis[1:] + [last]
    u = jets.stack([jets.stack([vecs[a][j] for a in range(m)]) for j in range(m)])
    sign = np.sign(np.linalg.det(np.moveaxis(u.value, (0, 1), (-2, -1))))
    coeffs = u.coeffs.copy()
    coeffs[:, :, 0] *= sign
    return Jet(coeffs, u.nvars, u.order, u.point)


def special_frame(fd: FinslerData, cd: ChernData) -> SpecialFrame:
    """Special frame, its coframe, connection forms ω^b_a and curvature Ω^b_a."""
    m = fd.m
    u_jet = _frame_jets(fd)
    u = u_jet.value
    v = np.moveaxis(np.linalg.inv(np.moveaxis(u, (0, 1), (-2, -1))), (-2, -1), (0, 1))
    cgens, dgens = coordinate_gens(m), delta_gens(m)
    du = Form.one_form(np.array([u_jet.diff(a).value for a in range(2 * m)]), cgens)
    du = du.pullback(horizontal_frame(fd), dgens)
    # ω^b_a = v^b_i (du^i_a + ϖ^i_j u^j_a)
    inner = Form(du.coeffs + np.einsum("zij...,ja...->zia...", cd.omega.coeffs, u), dgens)
    conn = Form(np.einsum("bi...,zia...->zba...", v, inner.coeffs), dgens)
    curv = Form(np.einsum("bi...,zij...,ja...->zba...", v, cd.Omega.coeffs, u), dgens)
    return SpecialFrame(u, v, conn, curv)


def skew_curvature(curv: Form) -> Form:
    """``Ω̂^b_a = ½(Ω^b_a − Ω^a_b)``."""
    return Form(0.5 * (curv.coeffs - np.swapaxes(curv.coeffs, 1, 2)), curv.gens)


# -- Pfaffian ----------------------------------------------------------------

def _perm_parity(p) -> int:
    p = list(p)
    s = 1
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


def pfaffian(S, tol: float = 1e-12):
    """Pfaffian of an antisymmetric matrix of scalars ``S[a, b, ...]`` or of 2-forms.

    Uses ``Pf = 1/(2ⁿn!) Σ ε_{a1…a2n} S[a1,a2]⋯S[a_{2n−1},a_{2n}]`` with
    closed-form expansions for sizes 2 and 4.  For a form-valued matrix
    ``S[a, b] = Ω̂^b_a`` the products are wedges.
    """
    is_form = isinstance(S, Form)
    arr = S.coeffs if is_form else np.asarray(S, dtype=float)
    d = S.shape[0] if is_form else arr.shape[0]
    if d % 2:
        raise ChernError("Pfaffian needs an even dimension")
    a1, a2 = (1, 2) if is_form else (0, 1)
    asym = float(np.max(np.abs(arr + np.swapaxes(arr, a1, a2)), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(arr), initial=0.0)))
    if asym > tol * scale:
        raise ChernError(f"matrix is not antisymmetric (defect {asym:.3e})")

    def mul(a, b):
        return a.wedge(b) if is_form else a * b

    if d == 2:
        return S[0, 1]
    if d == 4:
        return mul(S[0, 1], S[2, 3]) - mul(S[0, 2], S[1, 3]) + mul(S[0, 3], S[1, 2])
    n = d // 2
    total = None
    for p in permutations(range(d)):
        term = S[p[0], p[1]]
        for k in range(1, n):
            term = mul(term, S[p[2 * k], p[2 * k + 1]])
        term = term * _perm_parity(p)
        total = term if total is None else total + term
    return total * (1.0 / (2 ** n * math.factorial(n)))
