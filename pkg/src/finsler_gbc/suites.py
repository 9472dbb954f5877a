"""Invariant suites run by ``verify``.

Each suite returns a list of :class:`Check` rows.  A row with
``asserted=False`` is informational: it is printed but does not affect the
exit status.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import chern as chern_mod
from . import gbc, superalgebra
from .finsler import finsler_data, lift_F
from .forms import Form
from .metrics import MetricSpec, partition_of_unity, sphere_transition, sphere_transition_jacobian
from .quadrature import (IntegrationScheme, _integrands, base_nodes, fiber_chart, fiber_integrate,
                         fiber_volume, sm_pullback_matrix)

SUITES = ("structure", "homogeneity", "supertrace", "imp", "mq", "curvature", "equivalence", "volume")


@dataclass
class Check:
    suite: str
    name: str
    value: float
    tol: float
    passed: bool
    asserted: bool = True
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _check(suite, name, value, tol, detail="", asserted=True, above=False) -> Check:
    """``value < tol`` (or ``value ≥ tol`` with ``above``) with NaN counted as failure."""
    value = float(value)
    ok = (value >= tol) if above else (value < tol)
    return Check(suite, name, value, tol, bool(ok and math.isfinite(value)), asserted, detail)


def sample_points(spec: MetricSpec, nbase: int = 6, nfiber: int = 12):
    """Indicatrix sample per chart: list of (chart name, FiberChart)."""
    out = []
    for chart in spec.charts:
        xs, _ = base_nodes(chart, nbase, nbase)
        keep = partition_of_unity(chart.name, xs[0], xs[1]) > 0
        out.append((chart.name, fiber_chart(spec, chart.name, xs[:, keep], nfiber)))
    return out


def _random_base(spec: MetricSpec, rng: np.random.Generator, count: int):
    """Random base points as (chart, x (2, count)) inside the chart support."""
    if spec.topology == "torus":
        return "T", rng.uniform(0, 1, size=(2, count))
    r = np.sqrt(rng.uniform(0, 1.5, size=count))
    phi = rng.uniform(0, 2 * np.pi, size=count)
    return "S", np.array([r * np.cos(phi), r * np.sin(phi)])


# -- suites --------------------------------------------------------------------

def structure_suite(spec: MetricSpec, nbase: int = 6, nfiber: int = 12) -> list[Check]:
    """Torsion, almost-metricity, Γ identities and the corrupted-Γ canary."""
    worst = dict.fromkeys(("torsion", "metricity", "dydy", "p_vs_dgamma", "trace_to_N",
                           "euler_g", "cartan_y", "cartan_sym"), 0.0)
    canary = np.inf
    for chart, fc in sample_points(spec, nbase, nfiber):
        fd = finsler_data(spec, chart, fc.points)
        cd = chern_mod.chern_data(fd)
        t, mres = chern_mod.structure_residuals(cd, fd)
        scale = 1.0 + float(np.max(np.abs(cd.gamma)))
        worst["torsion"] = max(worst["torsion"], t)
        worst["metricity"] = max(worst["metricity"], mres / scale)
        worst["dydy"] = max(worst["dydy"], cd.dydy_residual)
        worst["p_vs_dgamma"] = max(worst["p_vs_dgamma"], cd.p_crosscheck)
        yG = np.einsum("ijk...,k...->ij...", cd.gamma, fd.y)
        worst["trace_to_N"] = max(worst["trace_to_N"], float(np.max(np.abs(yG - fd.N))))
        gyy = np.einsum("ij...,i...,j...->...", fd.g, fd.y, fd.y)
        worst["euler_g"] = max(worst["euler_g"], float(np.max(np.abs(gyy - fd.F ** 2))))
        yA = np.einsum("ijk...,i...->jk...", fd.A, fd.y)
        worst["cartan_y"] = max(worst["cartan_y"], float(np.max(np.abs(yA))))
        sym = max(float(np.max(np.abs(fd.A - np.transpose(fd.A, p + (3,)))))
                  for p in ((1, 0, 2), (0, 2, 1), (2, 1, 0)))
        worst["cartan_sym"] = max(worst["cartan_sym"], sym)
        bad = cd.gamma.copy()
        bad[0, 0, 1] += 1e-3
        bad[0, 1, 0] += 1e-3
        canary = min(canary, chern_mod.structure_residuals(cd, fd, bad)[1])
    tols = {"torsion": 1e-8, "metricity": 1e-8, "dydy": 1e-10, "p_vs_dgamma": 1e-8,
            "trace_to_N": 1e-9, "euler_g": 1e-12, "cartan_y": 1e-10, "cartan_sym": 1e-12}
    rows = [_check("structure", k, v, tols[k]) for k, v in worst.items()]
    rows.append(_check("structure", "canary_detected", canary, 1e-4, "corrupted Γ (+1e-3)", above=True))
    return rows


def homogeneity_suite(spec: MetricSpec, seed: int = 0) -> list[Check]:
    """F(x, λy) = λF, Euler's relation, and λ-independence of the integrands."""
    rng = np.random.default_rng(seed)
    chart, x = _random_base(spec, rng, 20)
    theta = rng.uniform(0, 2 * np.pi, 20)
    y = np.array([np.cos(theta), np.sin(theta)]) * rng.uniform(0.5, 2, 20)
    F0 = lift_F(spec, chart, np.concatenate([x, y]), 1)
    worst_f = 0.0
    for lam in (0.5, 2.0, 7.0):
        Fl = lift_F(spec, chart, np.concatenate([x, lam * y]), 0).value
        worst_f = max(worst_f, float(np.max(np.abs(Fl - lam * F0.value) / (lam * F0.value))))
    euler = sum(y[i] * F0.diff(2 + i).value for i in range(2)) - F0.value
    rows = [_check("homogeneity", "F_degree_1", worst_f, 1e-12),
            _check("homogeneity", "euler_relation", float(np.max(np.abs(euler))), 1e-12)]
    fc = fiber_chart(spec, chart, x[:, :4], 8)
    theorems = ("t2", "c1") + (("berwald",) if spec.berwald else ())
    for th in theorems:
        base, _ = _integrands(spec, chart, fc.points, fc.dy_dtheta, th)
        worst = 0.0
        for lam in (0.5, 3.0):
            pts = fc.points.copy()
            pts[2:] *= lam
            terms, _ = _integrands(spec, chart, pts, fc.dy_dtheta * lam, th)
            worst = max(worst, max(float(np.max(np.abs(terms[k] - base[k]))) for k in terms))
        rows.append(_check("homogeneity", f"integrand_{th}", worst, 1e-10))
    return rows


def supertrace_suite(n1: int = 200, n2: int = 50, seed: int = 0) -> list[Check]:
    """Engine vs closed-form contraction on synthetic data.

    Errors are relative to ``max(1, max|engine|)``.  The asserted rows use the
    coefficient the engine produces, ``(−1)^k C(2k−1, k−1)``; the printed
    ``(−1)^k C(2k−2, k−1)`` is reported alongside without being asserted.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for n, count in ((1, n1), (2, n2)):
        if count <= 0:
            continue
        err = {(k, c): 0.0 for k in range(1, n + 1) for c in ("engine", "printed")}
        theta_err = 0.0
        for _ in range(count):
            gens, g, e, ne, R, P, th = superalgebra.random_instance(n, rng)
            ups, xi = superalgebra.upsilon_xi(g, e, ne)
            for k in range(1, n + 1):
                eng = superalgebra.g1_engine(g, e, ne, R, P, n, k).coeffs
                scale = max(1.0, float(np.max(np.abs(eng))))
                for c in ("engine", "printed"):
                    cf = superalgebra.g1_closed_form(R, P, ups, xi, n, k, coefficient=c).coeffs
                    err[k, c] = max(err[k, c], float(np.max(np.abs(eng - cf))) / scale)
            te = superalgebra.theta_engine(th, P, n).coeffs
            tc = superalgebra.theta_closed_form(th, P, n).coeffs
            theta_err = max(theta_err, float(np.max(np.abs(te - tc))) / max(1.0, float(np.max(np.abs(te)))))
        for (k, c), v in err.items():
            rows.append(_check("supertrace", f"g1_n{n}_k{k}_{c}", v, 1e-12,
                               f"{count} instances", asserted=(c == "engine")))
        rows.append(_check("supertrace", f"theta_n{n}", theta_err, 1e-12, f"{count} instances"))
    return rows


def imp_fiber_integrals(spec: MetricSpec, count: int = 20, nf: int = 64, seed: int = 1) -> np.ndarray:
    """Fibre integrals of δ P ϑ with a constant random ϑ at random base points."""
    rng = np.random.default_rng(seed)
    chart, x = _random_base(spec, rng, count)
    fc = fiber_chart(spec, chart, x, nf)
    fd = finsler_data(spec, chart, fc.points)
    cd = chern_mod.chern_data(fd)
    theta = gbc.constant_theta(rng.normal(size=(2, 2, 2)), 2)
    term = gbc.theorem2_term2(fd, cd, theta=theta)
    pull = sm_pullback_matrix(fd, fc.dy_dtheta)
    return fiber_integrate(gbc.fiber_top_coefficient(term, pull), nf)


def imp_suite(spec: MetricSpec) -> list[Check]:
    vals = imp_fiber_integrals(spec)
    return [_check("imp", "constant_theta_fiber_integral", float(np.max(np.abs(vals))), 1e-8,
                   "20 random base points")]


def mq_suite(spec: MetricSpec, count: int = 5, seed: int = 2) -> list[Check]:
    """Fibrewise Gaussian check; only meaningful for Riemannian metrics."""
    rows = []
    xg, wg = np.polynomial.legendre.leggauss(48)
    rho = 3.0 * (xg + 1)
    gauss = float(np.sum(3.0 * wg * rho * np.exp(-rho ** 2))) * 2 * math.pi
    rows.append(_check("mq", "gaussian_normalization", abs(gauss - math.pi), 1e-10))
    if spec.family != "riemannian":
        rows.append(Check("mq", "fiber_check", float("nan"), 1e-6, True, False, "skipped: not Riemannian"))
        return rows
    rng = np.random.default_rng(seed)
    chart, x = _random_base(spec, rng, count)
    fd = finsler_data(spec, chart, np.concatenate([x, np.tile([[1.0], [0.0]], count)]))
    cd = chern_mod.chern_data(fd)
    worst = 0.0
    for p in range(count):
        res = gbc.mq_fiber_check(fd.g[..., p], cd.R[..., p])
        worst = max(worst, abs(res["value"] - res["target"]))
    rows.append(_check("mq", "fiber_check", worst, 1e-6, f"{count} base points, T=1, cutoff 6"))
    return rows


def curvature_suite(spec: MetricSpec, nbase: int = 6, nfiber: int = 12) -> list[Check]:
    """Curvature magnitudes, the Berwald gate and the Riemannian reductions."""
    rnorm = pnorm = 0.0
    gvar = avar = pfvar = 0.0
    for chart, fc in sample_points(spec, nbase, nfiber):
        fd = finsler_data(spec, chart, fc.points)
        cd = chern_mod.chern_data(fd)
        rnorm = max(rnorm, float(np.max(np.abs(cd.R))))
        pnorm = max(pnorm, float(np.max(np.abs(cd.P))))
        if spec.family == "riemannian":
            nf = fc.theta.size
            g = fd.g.reshape(2, 2, -1, nf)
            gvar = max(gvar, float(np.max(np.abs(g - g[..., :1]))))
            avar = max(avar, float(np.max(np.abs(fd.A))))
            frame = chern_mod.special_frame(fd, cd)
            skew = chern_mod.skew_curvature(frame.curv)
            S = Form(np.swapaxes(skew.coeffs, 1, 2), skew.gens)
            pf = chern_mod.pfaffian(S).component("dx1", "dx2").reshape(-1, nf)
            pfvar = max(pfvar, float(np.max(np.abs(pf - pf[:, :1]))))
    rows = [Check("curvature", "max_R", rnorm, float("inf"), True, False),
            Check("curvature", "max_P", pnorm, float("inf"), True, False)]
    if spec.topology == "torus" and spec.family in ("riemannian", "minkowski-quartic"):
        rows.append(_check("curvature", "R_vanishes", rnorm, 1e-10))
        rows.append(_check("curvature", "P_vanishes", pnorm, 1e-10))
    if spec.berwald is not None:
        gate = pnorm < gbc.BERWALD_GATE
        rows.append(Check("curvature", "berwald_gate_consistent", pnorm, gbc.BERWALD_GATE,
                          gate == spec.berwald, True, f"family {spec.family}, gate {'open' if gate else 'closed'}"))
    if spec.family == "riemannian":
        rows.append(_check("curvature", "g_y_independent", gvar, 1e-12))
        rows.append(_check("curvature", "cartan_vanishes", avar, 1e-12))
        rows.append(_check("curvature", "pf_fiber_constant", pfvar, 1e-10))
    return rows


def equivalence_suite(spec: MetricSpec, nbase: int = 6, nfiber: int = 12) -> list[Check]:
    """General vs surface integrands pointwise; chart independence of the fibre term."""
    worst = 0.0
    for chart, fc in sample_points(spec, nbase, nfiber):
        t2, _ = _integrands(spec, chart, fc.points, fc.dy_dtheta, "t2")
        c1, _ = _integrands(spec, chart, fc.points, fc.dy_dtheta, "c1")
        worst = max(worst, float(np.max(np.abs(sum(t2.values()) - sum(c1.values())))))
    rows = [_check("equivalence", "t2_vs_c1_pointwise", worst, 1e-8)]
    if spec.topology == "sphere":
        rows.append(_check("equivalence", "term2_chart_independence", chart_disagreement(spec), 1e-8))
    return rows


def chart_disagreement(spec: MetricSpec, nf: int = 64) -> float:
    """Fibre integral of the fibre-only term at overlap points, compared across charts."""
    r = np.array([0.8, 1.0, 1.2])
    phi = np.array([0.3, 2.0, 4.1])
    xs = np.array([r * np.cos(phi), r * np.sin(phi)])
    xn = np.array(sphere_transition(xs[0], xs[1]))

    def density(chart, x):
        fc = fiber_chart(spec, chart, x, nf)
        terms, _ = _integrands(spec, chart, fc.points, fc.dy_dtheta, "t2")
        return fiber_integrate(terms["t2_P_varpi"], nf)

    ds, dn = density("S", xs), density("N", xn)
    J = sphere_transition_jacobian(xs[0], xs[1])
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    return float(np.max(np.abs(ds - dn * det)))


def volume_suite(spec: MetricSpec) -> list[Check]:
    """Vol(Finsler S¹) self-convergence (and 2π for Riemannian metrics)."""
    chart = spec.charts[0].name
    x = np.array([[0.2, 0.6], [0.4, 0.1]]) if spec.topology == "torus" else np.array([[0.2, 1.1], [0.4, -0.3]])
    vols = [fiber_volume(spec, chart, x, nf) for nf in (64, 128, 256)]
    spread = max(float(np.max(np.abs(vols[0] - vols[2]))), float(np.max(np.abs(vols[1] - vols[2]))))
    rows = [_check("volume", "self_convergence", spread, 1e-9, f"Vol = {vols[-1][0]:.12f}")]
    if spec.family == "riemannian":
        rows.append(_check("volume", "riemannian_2pi", float(np.max(np.abs(vols[-1] - 2 * math.pi))), 1e-12))
    if spec.topology == "torus" and spec.berwald:
        # χ = 0 branch: the Landsberg-side integrand vanishes pointwise
        fc = fiber_chart(spec, chart, x, 16)
        terms, _ = _integrands(spec, chart, fc.points, fc.dy_dtheta, "c1")
        rows.append(_check("volume", "rhs_integrand_vanishes", max(float(np.max(np.abs(v))) for v in terms.values()),
                           1e-10))
    return rows


def run_suites(spec: MetricSpec, suites=SUITES, supertrace_counts=(200, 50)) -> list[Check]:
    rows: list[Check] = []
    for s in suites:
        if s == "structure":
            rows += structure_suite(spec)
        elif s == "homogeneity":
            rows += homogeneity_suite(spec)
        elif s == "supertrace":
            rows += supertrace_suite(*supertrace_counts)
        elif s == "imp":
            rows += imp_suite(spec)
        elif s == "mq":
            rows += mq_suite(spec)
        elif s == "curvature":
            rows += curvature_suite(spec)
        elif s == "equivalence":
            rows += equivalence_suite(spec)
        elif s == "volume":
            rows += volume_suite(spec)
        else:
            raise ValueError(f"unknown suite {s!r}; choose from {SUITES}")
    return rows


def format_table(rows: list[Check]) -> str:
    lines = [f"{'suite':<12} {'check':<32} {'value':>12} {'tol':>9}  status"]
    for r in rows:
        status = ("PASS" if r.passed else "FAIL") if r.asserted else "info"
        lines.append(f"{r.suite:<12} {r.name:<32} {r.value:>12.3e} {r.tol:>9.1e}  {status}"
                     + (f"  ({r.detail})" if r.detail else ""))
    return "\n".join(lines)


__all__ = ["Check", "SUITES", "run_suites", "format_table", "IntegrationScheme"]
