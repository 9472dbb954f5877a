import itertools

import numpy as np
import pytest
import sympy as sp

from finsler_gbc import chern
from finsler_gbc.chern import ChernError, pfaffian
from finsler_gbc.finsler import finsler_data
from finsler_gbc.forms import Form
from finsler_gbc.metrics import get_metric

RNG = np.random.default_rng(99)


def _sm_points(spec, n, rmax=1.6):
    if spec.topology == "torus":
        x = RNG.uniform(0, 1, (2, n))
    else:
        r, p = np.sqrt(RNG.uniform(0, rmax ** 2, n)), RNG.uniform(0, 2 * np.pi, n)
        x = np.array([r * np.cos(p), r * np.sin(p)])
    th = RNG.uniform(0, 2 * np.pi, n)
    return np.concatenate([x, np.array([np.cos(th), np.sin(th)]) * RNG.uniform(0.5, 2, n)])


def _data(name, n, **params):
    spec = get_metric(name, params or None)
    fd = finsler_data(spec, spec.charts[0].name, _sm_points(spec, n))
    return spec, fd, chern.chern_data(fd)


def _levi_civita_oracle(a_expr):
    X = sp.symbols("x1 x2")
    a = sp.Matrix(a_expr(*X))
    ainv = a.inv()
    gam = [[[sum(ainv[i, l] * (sp.diff(a[l, j], X[k]) + sp.diff(a[l, k], X[j]) - sp.diff(a[j, k], X[l]))
                 for l in range(2)) / 2 for k in range(2)] for j in range(2)] for i in range(2)]
    riem = [[[[sp.diff(gam[i][l][j], X[k]) - sp.diff(gam[i][k][j], X[l])
               + sum(gam[i][k][m] * gam[m][l][j] - gam[i][l][m] * gam[m][k][j] for m in range(2))
               for l in range(2)] for k in range(2)] for j in range(2)] for i in range(2)]
    return sp.lambdify(X, gam), sp.lambdify(X, riem)


def _ellipsoid_a(x1, x2, a=1, b=1, c=sp.Rational(3, 2)):
    s = x1 ** 2 + x2 ** 2
    X, Y, Z = 2 * x1 / (1 + s), 2 * x2 / (1 + s), (s - 1) / (1 + s)
    J = sp.Matrix([[sp.diff(f, v) for v in (x1, x2)] for f in (X, Y, Z)])
    D = sp.diag(a ** 2, b ** 2, c ** 2)
    return J.T * D * J


@pytest.fixture(scope="module")
def ellipsoid_oracle():
    return _levi_civita_oracle(_ellipsoid_a)


def test_flat_connection_and_curvature_vanish():
    _, fd, cd = _data("flat-t2", 20)
    assert np.abs(cd.gamma).max() == 0 and np.abs(cd.R).max() == 0 and np.abs(cd.P).max() == 0


def test_quartic_torus_is_berwald():
    _, fd, cd = _data("quartic-t2", 40)
    assert np.abs(cd.P).max() < 1e-10 and np.abs(cd.R).max() < 1e-10


def test_riemannian_gamma_and_riemann_match_classical(ellipsoid_oracle):
    gam_f, riem_f = ellipsoid_oracle
    spec, fd, cd = _data("ellipsoid-s2", 10)
    for k in range(10):
        x = fd.x[:, k]
        assert np.allclose(cd.gamma[..., k], np.array(gam_f(*x), dtype=float), atol=1e-9)
        assert np.allclose(cd.R[..., k], np.array(riem_f(*x), dtype=float), atol=1e-8)
    assert np.abs(cd.P).max() < 1e-10


def test_round_sphere_sign_convention():
    spec = get_metric("round-s2", {"r": 1.5})
    fd = finsler_data(spec, "S", np.array([0.2, -0.1, 1.0, 0.3]))
    cd = chern.chern_data(fd)
    a = fd.g[0, 0, 0]
    K = 1 / 1.5 ** 2
    assert cd.R[0, 1, 0, 1, 0] == pytest.approx(K * a, rel=1e-10)
    assert cd.R[0, 1, 1, 0, 0] == pytest.approx(-K * a, rel=1e-10)


def test_randers_gamma_identities():
    _, fd, cd = _data("randers-s2", 100)
    assert np.abs(cd.gamma - np.swapaxes(cd.gamma, 1, 2)).max() < 1e-12
    assert np.abs(np.einsum("ijkn,kn->ijn", cd.gamma, fd.y) - fd.N).max() < 1e-9
    torsion, metricity = chern.structure_residuals(cd, fd)
    assert torsion < 1e-8 and metricity < 1e-8
    assert cd.dydy_residual < 1e-10
    assert cd.p_crosscheck < 1e-9
    assert np.abs(cd.R + np.swapaxes(cd.R, 2, 3)).max() < 1e-12


def test_riemannian_metricity_and_canary():
    _, fd, cd = _data("round-s2", 20)
    assert chern.structure_residuals(cd, fd)[1] < 1e-10
    bad = cd.gamma.copy()
    bad[0, 0, 1] += 1e-3
    assert chern.structure_residuals(cd, fd, bad)[1] >= 1e-4


def test_closed_form_riemann_agrees_with_forms():
    _, fd, cd = _data("randers-s2", 30)
    assert np.allclose(chern.riemann_closed_form(fd, cd.gamma_jet), cd.R, atol=1e-10)


@pytest.mark.parametrize("name", ["round-s2", "randers-s2", "quartic-t2"])
def test_special_frame(name):
    spec, fd, cd = _data(name, 40)
    fr = chern.special_frame(fd, cd)
    G = np.einsum("ian,ijn,jbn->abn", fr.u, fd.g, fr.u)
    assert np.abs(G - np.eye(2)[..., None]).max() < 1e-12
    assert np.abs(fr.u[:, 1] - fd.y / fd.F).max() < 1e-14
    assert np.all(fr.u[0, 0] * fr.u[1, 1] - fr.u[0, 1] * fr.u[1, 0] > 0)
    assert np.allclose(np.einsum("ain,ibn->abn", fr.v, fr.u), np.eye(2)[..., None], atol=1e-12)
    e = fd.y / fd.F
    w = np.einsum("ain,in->an", fr.v, e)
    assert np.abs(w[0]).max() < 1e-12 and np.abs(w[1] - 1).max() < 1e-12


def test_euclidean_special_frame():
    fd = finsler_data(get_metric("flat-t2"), "T", np.array([0.1, 0.1, 1.0, 0.0]))
    fr = chern.special_frame(fd, chern.chern_data(fd))
    assert np.allclose(fr.u[..., 0], [[0.0, 1.0], [-1.0, 0.0]])


def test_riemannian_reduction_of_skew_curvature():
    _, fd, cd = _data("ellipsoid-s2", 20)
    fr = chern.special_frame(fd, cd)
    skew = chern.skew_curvature(fr.curv)
    assert np.abs(skew.coeffs - fr.curv.coeffs).max() < 1e-12
    assert np.array_equal(chern.skew_curvature(skew).coeffs, skew.coeffs)


def test_gram_schmidt_frame_in_higher_dimension():
    """The generic-m branch on a 4-dimensional Euclidean metric."""
    from finsler_gbc import jets
    from finsler_gbc.metrics import custom_metric

    spec = custom_metric(lambda c, x, y: jets.sqrt(y[0] * y[0] + 2 * y[1] * y[1] + y[2] * y[2] + y[3] * y[3]
                                                   + y[0] * y[1]), "torus")
    object.__setattr__(spec, "dim", 4)
    pt = np.concatenate([np.zeros((4, 3)), RNG.normal(size=(4, 3))])
    fd = finsler_data(spec, "T", pt)
    fr = chern.special_frame(fd, chern.chern_data(fd))
    G = np.einsum("ian,ijn,jbn->abn", fr.u, fd.g, fr.u)
    assert np.abs(G - np.eye(4)[..., None]).max() < 1e-12
    assert np.allclose(fr.u[:, 3], fd.y / fd.F)
    assert np.all(np.linalg.det(np.moveaxis(fr.u, -1, 0)) > 0)


def test_pfaffian_examples():
    assert pfaffian(np.array([[0, 2.5], [-2.5, 0]])) == 2.5
    a, b = 1.5, -0.7
    S = np.zeros((4, 4))
    S[0, 1], S[1, 0], S[2, 3], S[3, 2] = a, -a, b, -b
    assert pfaffian(S) == pytest.approx(a * b)
    for _ in range(50):
        A = RNG.normal(size=(4, 4))
        A = A - A.T
        assert pfaffian(A) ** 2 == pytest.approx(np.linalg.det(A), rel=1e-10)
    A = RNG.normal(size=(6, 6))
    A = A - A.T
    assert pfaffian(A) ** 2 == pytest.approx(np.linalg.det(A), rel=1e-10)


def test_pfaffian_errors():
    with pytest.raises(ChernError, match="even"):
        pfaffian(np.zeros((3, 3)))
    with pytest.raises(ChernError, match="antisymmetric"):
        pfaffian(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_form_pfaffian_matches_scalar_expansion():
    gens = tuple(f"e{i}" for i in range(4))
    coeffs = np.zeros((16, 4, 4))
    for a, b in itertools.combinations(range(4), 2):
        c = RNG.normal(size=6)
        coeffs[[3, 5, 6, 9, 10, 12], a, b] = c
        coeffs[[3, 5, 6, 9, 10, 12], b, a] = -c
    S = Form(coeffs, gens)
    pf = pfaffian(S)
    assert pf.part(4).max_abs() > 0 and (pf.coeffs - pf.part(4).coeffs).max() == 0
