"""Gauss–Bonnet–Chern integrands on the sphere bundle.

Integrands are assembled as forms in the ``{dx, δy}`` coframe of TM (batch
over points) and pulled back to SM by :func:`sm_pullback_matrix`.  The SM
coordinates are ``(x¹, x², θ)`` with ``y(x, θ) = u(θ)/F(x, u(θ))``; SM is
oriented by ``dx¹∧dx²∧dθ``.

Matrix-valued forms handed to the δ-contraction use the layout
``M[i, j] = M_i^j`` (lower index first), so the Chern curvature block
``R^j_i`` sits at ``[i, j]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chern import ChernData, SpecialFrame, delta_gens, pfaffian, skew_curvature
from .finsler import FinslerData
from .forms import Form
from .superalgebra import delta_contract

BERWALD_GATE = 1e-8
SM_GENS = ("dx1", "dx2", "dθ")
FRAME_GENS = ("ω1", "ω2", "ω3")


class GbcError(ValueError):
    pass


def sphere_volume(n: int) -> float:
    """Vol(S^{2n−1}) = 2πⁿ/(n−1)!."""
    return 2 * math.pi ** n / math.factorial(n - 1)


@dataclass(frozen=True)
class FiberOnlyForm:
    """A form that is meaningful only after integration along the fibres."""

    form: Form
    label: str

    def __getattr__(self, name):
        if name in ("coeffs", "top", "wedge", "pullback"):
            raise GbcError(f"{self.label} is fibre-only; integrate along fibres first "
                           "(use fiber_top_coefficient)")
        raise AttributeError(name)


def fiber_top_coefficient(f: FiberOnlyForm, pullback: np.ndarray) -> np.ndarray:
    """Top SM coefficient of a fibre-only form, for immediate fibre integration."""
    return f.form.pullback(pullback, SM_GENS).top()


# -- building blocks ---------------------------------------------------------

def _one_form(comps) -> Form:
    comps = np.asarray(comps)
    return Form.one_form(comps, delta_gens(comps.shape[0] // 2))


def dlogF(fd: FinslerData) -> Form:
    """``d log F = (δF/δx^i dx^i + F_{y^i} δy^i)/F``."""
    m = fd.m
    dF_h = fd.Fx - np.einsum("ji...,j...->i...", fd.N, fd.Fy)
    return _one_form(np.concatenate([dF_h, fd.Fy]) / fd.F)


def nabla_e(fd: FinslerData) -> tuple[Form, Form]:
    """``(∇e)^i = δy^i/F − (y^i/F) d log F`` and ``(∇*ω)_i = g_ik (∇e)^k``; batch (m, N)."""
    m = fd.m
    dl = dlogF(fd)
    gens = dl.gens
    comps = np.zeros((2 * m, m) + fd.F.shape)
    comps[m:] = np.eye(m)[..., None] / fd.F
    ne = Form.one_form(comps, gens) - Form(dl.coeffs[:, None] * (fd.y / fd.F)[None], gens)
    no = Form(np.einsum("ik...,zk...->zi...", fd.g, ne.coeffs), gens)
    return ne, no


def upsilon_xi(fd: FinslerData) -> tuple[Form, Form]:
    """Υ[i, j] = (∇*ω)_i ∧ (∇e)^j and Ξ[i, j] = F_{y^i}(∇e)^j − (y^j/F)(∇*ω)_i."""
    ne, no = nabla_e(fd)
    ups = no[:, None].wedge(ne[None, :])
    xi = Form(fd.Fy[:, None] * ne.coeffs[:, None] - (fd.y / fd.F)[None, :] * no.coeffs[:, :, None],
              ne.gens)
    return ups, xi


def curvature_blocks(cd: ChernData) -> tuple[Form, Form]:
    """(R, P) as matrix-valued 2-forms in the ``[lower, upper]`` layout."""
    Om = cd.Omega
    m = Om.shape[0]
    masks = np.arange(1 << (2 * m))
    horiz = (masks >> m) == 0
    keepR = horiz.reshape((-1,) + (1,) * len(Om.shape))
    two = np.array([bin(k).count("1") == 2 for k in masks]).reshape(keepR.shape)
    mixed = two & ~keepR & np.array([(k & ((1 << m) - 1)) != 0 for k in masks]).reshape(keepR.shape)
    R = Form(np.swapaxes(Om.coeffs * (keepR & two), 1, 2), Om.gens)
    P = Form(np.swapaxes(Om.coeffs * mixed, 1, 2), Om.gens)
    return R, P


def connection_lower_upper(cd: ChernData) -> Form:
    return Form(np.swapaxes(cd.omega.coeffs, 1, 2), cd.omega.gens)


# -- general formula ---------------------------------------------------------

def theorem2_coefficient(n: int, k: int) -> float:
    return ((-1) ** k * math.comb(2 * n, 2 * k) * math.comb(2 * k - 2, k - 1)
            / ((2 * math.pi) ** (2 * n) * math.factorial(2 * n)))


def theorem2_term1(fd: FinslerData, cd: ChernData, k: int) -> Form:
    """Normalized δ-contraction of R^k P^{2n−2k} Υ^{k−1} Ξ (a (4n−1)-form on TM)."""
    m = fd.m
    n = m // 2
    if not 1 <= k <= n:
        raise GbcError(f"k must lie in 1..{n}")
    R, P = curvature_blocks(cd)
    ups, xi = upsilon_xi(fd)
    out = delta_contract([R] * k + [P] * (m - 2 * k) + [ups] * (k - 1) + [xi])
    out = out * theorem2_coefficient(n, k)
    if np.any(out.coeffs[_wrong_degree(m, 4 * n - 1)] != 0):
        raise GbcError("general integrand has components outside degree 4n−1")
    return out


def _wrong_degree(m: int, degree: int) -> np.ndarray:
    return np.array([bin(k).count("1") != degree for k in range(1 << (2 * m))])


def theorem2_term2(fd: FinslerData, cd: ChernData, theta: Form | None = None) -> FiberOnlyForm:
    """Normalized δ P^{2n−1} ϖ; with ``theta`` given, ϖ is replaced by that matrix of 1-forms."""
    m = fd.m
    n = m // 2
    _, P = curvature_blocks(cd)
    last = connection_lower_upper(cd) if theta is None else theta
    out = delta_contract([P] * (m - 1) + [last]) * (1.0 / ((2 * math.pi) ** m * math.factorial(m)))
    return FiberOnlyForm(out, "theorem2_term2" if theta is None else "theta_term")


def constant_theta(coeffs, m: int) -> Form:
    """``ϑ_i^j = c[i, j, k] dx^k`` with constant coefficients (layout ``[lower, upper]``)."""
    c = np.asarray(coeffs, dtype=float)
    comps = np.zeros((2 * m, m, m))
    comps[:m] = np.moveaxis(c, 2, 0)
    return Form.one_form(comps, delta_gens(m))


# -- special-frame integrands --------------------------------------------------

def frame_coframe_forms(fd: FinslerData, frame: SpecialFrame) -> tuple[Form, Form, Form]:
    """ω¹, ω², ω³ = ω^1_2 as forms in the {dx, δy} coframe (surfaces)."""
    m = fd.m
    comps = np.zeros((2 * m, m) + fd.F.shape)
    comps[:m] = np.swapaxes(frame.v, 0, 1)
    co = _one_form(comps)
    return co[0], co[1], frame.conn[0, 1]


def _frame_matrix(w1: Form, w2: Form, w3: Form, pull: np.ndarray) -> np.ndarray:
    """Inverse of the SM coframe matrix: dx^i = Winv[i, α] ω^α."""
    rows = [w.pullback(pull, SM_GENS) for w in (w1, w2, w3)]
    W = np.array([[r.coeffs[1 << b] for b in range(3)] for r in rows])
    return np.moveaxis(np.linalg.inv(np.moveaxis(W, (0, 1), (-2, -1))), (-2, -1), (0, 1))


def frame_curvature_components(fd: FinslerData, frame: SpecialFrame, pull: np.ndarray):
    """Ω^b_a on SM expanded in (ω¹ω², ω¹ω³, ω²ω³); returns array [b, a, pair] and the 3-form ω¹ω²ω³."""
    w1, w2, w3 = frame_coframe_forms(fd, frame)
    Winv = _frame_matrix(w1, w2, w3, pull)
    curv = frame.curv.pullback(pull, SM_GENS).pullback(Winv, FRAME_GENS)
    comps = np.stack([curv.component("ω1", "ω2"), curv.component("ω1", "ω3"), curv.component("ω2", "ω3")], axis=2)
    vol = w1.wedge(w2).wedge(w3).pullback(pull, SM_GENS)
    return comps, vol


def corollary1_integrands(fd: FinslerData, frame: SpecialFrame, pull: np.ndarray) -> dict[str, np.ndarray]:
    """Top SM coefficients of the three surface integrands (normalized by 1/4π²).

    ``(log F)_{x^i}`` is the full partial derivative ``F_{x^i}/F``.
    """
    if fd.m != 2:
        raise GbcError("surface integrands need a surface (m = 2)")
    comps, vol = frame_curvature_components(fd, frame, pull)
    top = vol.top() / (4 * math.pi ** 2)
    R2_112 = comps[1, 0, 0]
    P1_111 = comps[0, 0, 1]
    P1_211 = comps[0, 1, 1]
    Gl = fd.lowered_spray
    F = fd.F
    sg = np.sqrt(fd.g[0, 0] * fd.g[1, 1] - fd.g[0, 1] * fd.g[1, 0])
    logFx = fd.Fx / F
    a = (fd.Fy[1] / sg) * (logFx[0] - Gl[0] / F ** 2) - (fd.Fy[0] / sg) * (logFx[1] - Gl[1] / F ** 2)
    return {
        "c1_R": R2_112 * top,
        "c1_P11": -(Gl[0] * fd.y[0] + Gl[1] * fd.y[1]) / F ** 3 * P1_111 * top,
        "c1_P21": a * P1_211 * top,
    }


def landsberg_component(fd: FinslerData, frame: SpecialFrame, pull: np.ndarray) -> np.ndarray:
    """P^1_{2 11} in the special frame (vanishes on Landsberg surfaces)."""
    comps, _ = frame_curvature_components(fd, frame, pull)
    return comps[0, 1, 1]


def berwald_integrand(fd: FinslerData, cd: ChernData, frame: SpecialFrame) -> Form:
    """``(−1/2π)ⁿ Vol(S^{2n−1})⁻¹ Pf(Ω̂) ω^{2n}_1 ⋯ ω^{2n}_{2n−1}`` (gated on P = 0)."""
    pnorm = float(np.max(np.abs(cd.P), initial=0.0))
    if pnorm > BERWALD_GATE:
        raise GbcError(f"Berwald gate: |P| = {pnorm:.3e} exceeds {BERWALD_GATE:.0e}; metric is not Berwald")
    m = fd.m
    n = m // 2
    skew = skew_curvature(frame.curv)
    S = Form(np.swapaxes(skew.coeffs, 1, 2), skew.gens)  # S[a, b] = Ω̂^b_a
    out = pfaffian(S)
    for a in range(m - 1):
        out = out.wedge(frame.conn[m - 1, a])
    return out * ((-1.0 / (2 * math.pi)) ** n / sphere_volume(n))


def fiber_volume_form(frame: SpecialFrame) -> Form:
    """``−ω³`` (surfaces): integrates over a fibre to Vol(Finsler S¹)."""
    return -frame.conn[0, 1]


# -- Mathai–Quillen fibrewise Gaussian -------------------------------------------

def mq_fiber_check(a: np.ndarray, R: np.ndarray, T: float = 1.0, cutoff: float = 6.0,
                   nr: int = 48, nphi: int = 48, tail_tol: float = 1e-10) -> dict:
    """Fibrewise ∫_{T_xM} tr_s[exp(A_T²)] for a Riemannian point, top (dx dy) part.

    ``a`` is the metric at x, ``R[i, j, k, l] = R^i_{jkl}`` its curvature.  The
    superconnection curvature at the fibre point Y (parallel frame at x) is
    ``A_T² = R♮ + T δy^i c(∂_i) − T² a(Y, Y)``.  Returns the 2-form coefficient
    of dx¹∧dx² and the target ``(−2π)ⁿ Pf(R)`` in the same normalization.
    """
    from .superalgebra import FormValuedOp, _elementary, supertrace

    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    n = m // 2
    tail = math.exp(-cutoff ** 2) * (1 + cutoff ** 2) ** (m)
    if tail > tail_tol:
        raise GbcError(f"cutoff {cutoff} too small: Gaussian tail bound {tail:.2e}")
    gens = tuple(f"dx{i + 1}" for i in range(m)) + tuple(f"dy{i + 1}" for i in range(m))
    # R♮ = −Σ R^j_i ⊗ v*^i ∧ i_j with R^j_i = ½ R^j_{ikl} dx^k dx^l
    Rsharp = FormValuedOp.zeros(gens, m)
    for i in range(m):
        for j in range(m):
            op = _elementary(m, "wedge", i) @ _elementary(m, "contract", j)
            for k in range(m):
                for l in range(k + 1, m):
                    Rsharp.coeffs[(1 << k) | (1 << l)] -= R[j, i, k, l] * op
    cl = []
    for i in range(m):
        c_i = sum(a[i, j] * _elementary(m, "wedge", j) for j in range(m)) - _elementary(m, "contract", i)
        f = FormValuedOp.zeros(gens, m)
        f.coeffs[1 << (m + i)] = T * c_i
        cl.append(f)
    nil = Rsharp
    for f in cl:
        nil = nil + f
    # exp(N) for nilpotent N (aux degree ≥ 1 in each term)
    expo = FormValuedOp.from_op(_identity(m), gens)
    term = expo
    for k in range(1, 2 * m + 1):
        term = (term @ nil) * (1.0 / k)
        expo = expo + term
    top = supertrace(expo).coeffs[-1]  # coefficient of dx1..dxm dy1..dym
    # Gaussian factor exp(−T² a(Y,Y)); integrate in a^{-1/2}-scaled polar coordinates
    xg, wg = np.polynomial.legendre.leggauss(nr)
    rho_max = cutoff / T
    rho = 0.5 * rho_max * (xg + 1)
    wr = 0.5 * rho_max * wg
    if m == 2:
        radial = np.sum(wr * rho * np.exp(-(T * rho) ** 2)) * 2 * math.pi
    else:
        radial = np.sum(wr * rho ** (m - 1) * np.exp(-(T * rho) ** 2)) * sphere_volume(n)
    gauss = radial / math.sqrt(np.linalg.det(a))
    # dx-dy reordering: coefficient of dx1..dxm ∧ dy1..dym integrated over dy → dx form
    value = top * gauss
    return {"value": float(value), "top": float(top), "gaussian": float(gauss),
            "target": float((-2 * math.pi) ** n * _pf_riemann(a, R))}


def _identity(m):
    from .superalgebra import SuperOp

    return SuperOp.identity(m)


def _pf_riemann(a: np.ndarray, R: np.ndarray) -> float:
    """Pf(R^{TM}) coefficient on dx¹∧…∧dx^m in an a-orthonormal frame."""
    m = a.shape[0]
    # orthonormal frame f = a^{-1/2}; Ω^b_a in that frame, as forms in dx
    w, V = np.linalg.eigh(a)
    s = V @ np.diag(w ** -0.5) @ V.T  # columns: orthonormal frame vectors
    sinv = np.linalg.inv(s)
    gens = tuple(f"dx{i + 1}" for i in range(m))
    comps = np.zeros((1 << m, m, m))
    Rf = np.einsum("bi,ijkl,ja->bakl", sinv, R, s)  # Ω^b_a components
    for k in range(m):
        for l in range(k + 1, m):
            comps[(1 << k) | (1 << l)] = Rf[:, :, k, l]
    Om = Form(comps, gens)
    S = Form(np.swapaxes(Om.coeffs, 1, 2), gens)  # S[a, b] = Ω^b_a
    return float(pfaffian(S).top())
