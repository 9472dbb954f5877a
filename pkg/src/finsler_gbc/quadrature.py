"""Fibre and base quadrature and the Euler-characteristic driver.

Fibres are parametrized by radial scaling of the Euclidean circle,
``y(θ) = u(θ)/F(x, u(θ))`` with ``u = (cos θ, sin θ)``, and integrated with
the periodic trapezoid rule.  Sphere charts are disks of radius √3 integrated
with Gauss–Legendre in r (weight r) times the periodic trapezoid in φ; the
torus uses the periodic trapezoid on the unit square.  Reductions are done in
fixed chunk order so results are bit-stable for a given scheme.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import chern as chern_mod
from . import gbc
from .conventions import ledger_hash
from .finsler import FinslerData, finsler_data
from .metrics import Chart, MetricSpec, partition_of_unity

THEOREMS = ("t2", "c1", "berwald")


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class IntegrationScheme:
    """Resolution and rule choices.

    ``base`` is (W, H): radial × angular nodes on a disk chart, or x × y nodes
    on the torus.  ``ladder`` is the number of doublings after the base rung.
    """

    fiber_nodes: int = 16
    base: tuple[int, int] = (16, 16)
    ladder: int = 2
    chunk: int = 4096
    threads: int = 1
    fiber_rule: str = "trapezoid-periodic"

    def __post_init__(self):
        if self.fiber_nodes < 4 or min(self.base) < 2:
            raise QuadratureError("scheme resolutions too small")
        if self.ladder < 0 or self.chunk < 1 or self.threads < 1:
            raise QuadratureError("invalid ladder/chunk/threads")

    def refined(self, level: int) -> "IntegrationScheme":
        f = 2 ** level
        return replace(self, fiber_nodes=self.fiber_nodes * f, base=(self.base[0] * f, self.base[1] * f))

    def rungs(self) -> list["IntegrationScheme"]:
        return [self.refined(k) for k in range(self.ladder + 1)]

    def describe(self) -> dict:
        return {"fiber_nodes": self.fiber_nodes, "base": list(self.base), "ladder": self.ladder,
                "fiber_rule": self.fiber_rule}


def base_nodes(chart: Chart, w: int, h: int) -> tuple[np.ndarray, np.ndarray]:
    """Chart nodes (2, N) and weights (N) including the polar Jacobian."""
    if chart.kind == "square":
        gx = np.arange(w) / w
        gy = np.arange(h) / h
        X, Y = np.meshgrid(gx, gy, indexing="ij")
        return np.array([X.ravel(), Y.ravel()]), np.full(w * h, 1.0 / (w * h))
    xg, wg = np.polynomial.legendre.leggauss(w)
    r = 0.5 * chart.radius * (xg + 1)
    wr = 0.5 * chart.radius * wg * r
    phi = 2 * np.pi * (np.arange(h) + 0.5) / h
    Rr, Ph = np.meshgrid(r, phi, indexing="ij")
    W = np.repeat(wr, h) * (2 * np.pi / h)
    return np.array([(Rr * np.cos(Ph)).ravel(), (Rr * np.sin(Ph)).ravel()]), W


@dataclass
class FiberChart:
    """Indicatrix parametrization over base nodes ``x`` (2, Nb) with ``nf`` angles.

    Point arrays are flattened base-major: index ``b * nf + t``.
    """

    x: np.ndarray
    theta: np.ndarray
    r: np.ndarray  # 1/F(x, u(θ))
    y: np.ndarray  # (2, Nb*nf)
    dy_dtheta: np.ndarray
    weight: float  # trapezoid weight 2π/nf

    @property
    def points(self) -> np.ndarray:
        nf = self.theta.size
        return np.concatenate([np.repeat(self.x, nf, axis=1), self.y])


def fiber_chart(spec: MetricSpec, chart: str, x: np.ndarray, nf: int) -> FiberChart:
    theta = 2 * np.pi * np.arange(nf) / nf
    u = np.array([np.cos(theta), np.sin(theta)])
    du = np.array([-np.sin(theta), np.cos(theta)])
    nb = x.shape[1]
    X = np.repeat(x, nf, axis=1)
    U = np.tile(u, nb)
    dU = np.tile(du, nb)
    from .finsler import lift_F

    Fj = lift_F(spec, chart, np.concatenate([X, U]), 1)
    Fu = Fj.value
    if np.any(Fu <= 0) or not np.all(np.isfinite(Fu)):
        raise QuadratureError("F must be positive and finite on the unit circle")
    Fy = np.array([Fj.diff(2 + i).value for i in range(2)])
    r = 1.0 / Fu
    y = U * r
    dy = r * (dU - y * np.sum(Fy * dU, axis=0))
    return FiberChart(x, theta, r, y, dy, 2 * np.pi / nf)


def sm_pullback_matrix(fd: FinslerData, fc_dy_dtheta: np.ndarray) -> np.ndarray:
    """Matrix (4, 3, N) pulling {dx, δy} back to SM coordinates (dx¹, dx², dθ)."""
    m = fd.m
    N = fd.F.shape[0]
    M = np.zeros((2 * m, 3, N))
    M[0, 0] = 1.0
    M[1, 1] = 1.0
    dydx = -fd.y[:, None] * fd.Fx[None, :] / fd.F  # ∂_j y^i
    M[m:, :m] = dydx + fd.N
    M[m:, 2] = fc_dy_dtheta
    return M


# -- per-chunk integrands --------------------------------------------------------

def _integrands(spec: MetricSpec, chart: str, points: np.ndarray, dy_dtheta: np.ndarray,
                theorem: str) -> tuple[dict[str, np.ndarray], dict[str, float]]:
    fd = finsler_data(spec, chart, points)
    cd = chern_mod.chern_data(fd)
    pull = sm_pullback_matrix(fd, dy_dtheta)
    stats = {"p_norm": float(np.max(np.abs(cd.P), initial=0.0)),
             "r_norm": float(np.max(np.abs(cd.R), initial=0.0))}
    terms: dict[str, np.ndarray] = {}
    if theorem == "t2":
        terms["t2_R_Xi"] = gbc.theorem2_term1(fd, cd, 1).pullback(pull, gbc.SM_GENS).top()
        terms["t2_P_varpi"] = gbc.fiber_top_coefficient(gbc.theorem2_term2(fd, cd), pull)
    else:
        frame = chern_mod.special_frame(fd, cd)
        if theorem == "c1":
            terms.update(gbc.corollary1_integrands(fd, frame, pull))
        elif theorem == "berwald":
            terms["berwald_pf"] = gbc.berwald_integrand(fd, cd, frame).pullback(pull, gbc.SM_GENS).top()
        elif theorem == "volume":
            # a 1-form: keep its dθ coefficient
            terms["fiber_volume"] = gbc.fiber_volume_form(frame).pullback(pull, gbc.SM_GENS).coeffs[1 << 2]
        else:
            raise QuadratureError(f"unknown theorem {theorem!r}")
    return terms, stats


def fiber_integrate(values: np.ndarray, nf: int) -> np.ndarray:
    """Periodic trapezoid along each fibre; ``values`` flattened base-major."""
    v = np.asarray(values).reshape(-1, nf)
    return v.sum(axis=1) * (2 * np.pi / nf)


def base_integrate(per_chart: list[tuple[np.ndarray, np.ndarray]]) -> float:
    """Σ charts Σ nodes weight · coefficient (weights already include PU and Jacobian)."""
    total = 0.0
    for w, c in per_chart:
        total += math.fsum(w * c)
    return total


@dataclass
class ChiReport:
    metric: dict
    scheme: dict
    theorem: str
    terms: list
    chi: float
    nearest: int
    residual: float
    ladder: list
    conclusive: bool
    runtime_ms: float
    ledger_hash: str
    stats: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_json_dict(self, timestamp: bool = True) -> dict:
        d = asdict(self)
        d["schema_version"] = 1
        if not timestamp:
            d.pop("runtime_ms")
        else:
            d["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        return d


def integrate_theorem(spec: MetricSpec, theorem: str, scheme: IntegrationScheme,
                      node_hook: Callable | None = None) -> tuple[dict[str, float], dict[str, float]]:
    """One rung: Σ over charts of ∫_M ∫_{SM/M} of each labelled term."""
    nf = scheme.fiber_nodes
    totals: dict[str, float] = {}
    stats = {"p_norm": 0.0, "r_norm": 0.0}
    for chart in spec.charts:
        xs, wb = base_nodes(chart, *scheme.base)
        pu = partition_of_unity(chart.name, xs[0], xs[1])
        keep = pu > 0
        xs, wb = xs[:, keep], (wb * pu)[keep]
        nb_chunk = max(1, scheme.chunk // nf)
        starts = list(range(0, xs.shape[1], nb_chunk))

        def work(s):
            sl = slice(s, s + nb_chunk)
            fc = fiber_chart(spec, chart.name, xs[:, sl], nf)
            terms, st = _integrands(spec, chart.name, fc.points, fc.dy_dtheta, theorem)
            fib = {k: fiber_integrate(v, nf) for k, v in terms.items()}
            if node_hook is not None:
                node_hook(chart.name, fc, terms)
            return fib, st

        if scheme.threads > 1:
            with ThreadPoolExecutor(scheme.threads) as ex:
                results = list(ex.map(work, starts))
        else:
            results = [work(s) for s in starts]
        per_term: dict[str, list] = {}
        for (fib, st), s in zip(results, starts):
            for k, v in fib.items():
                per_term.setdefault(k, []).append(v)
            for k in stats:
                stats[k] = max(stats[k], st[k])
        for k, parts in per_term.items():
            totals[k] = totals.get(k, 0.0) + math.fsum(wb * np.concatenate(parts))
    return totals, stats


def euler_characteristic(spec: MetricSpec, theorem: str = "t2",
                         scheme: IntegrationScheme | None = None) -> ChiReport:
    """χ(M) from the chosen integrand family along the refinement ladder."""
    if theorem not in THEOREMS:
        raise QuadratureError(f"theorem must be one of {THEOREMS}")
    scheme = scheme or IntegrationScheme()
    t0 = time.perf_counter()
    ladder = []
    terms, stats = {}, {}
    for rung in scheme.rungs():
        terms, stats = integrate_theorem(spec, theorem, rung)
        chi = math.fsum(terms.values())
        ladder.append({"fiber_nodes": rung.fiber_nodes, "base": list(rung.base), "chi": chi,
                       "residual": abs(chi - round(chi))})
    chi = ladder[-1]["chi"]
    nearest = int(round(chi))
    residual = abs(chi - nearest)
    return ChiReport(
        metric=spec.describe(),
        scheme=scheme.describe(),
        theorem=theorem,
        terms=[{"label": k, "value": v} for k, v in terms.items()],
        chi=chi,
        nearest=nearest,
        residual=residual,
        ladder=ladder,
        conclusive=residual <= 0.1,
        runtime_ms=1000 * (time.perf_counter() - t0),
        ledger_hash=ledger_hash(),
        stats=stats,
    )


def fiber_volume(spec: MetricSpec, chart: str, x: np.ndarray, nf: int) -> np.ndarray:
    """Vol(Finsler S¹) = ∫_{S_xM} −ω³ at base points ``x`` (2, Nb)."""
    fc = fiber_chart(spec, chart, x, nf)
    terms, _ = _integrands(spec, chart, fc.points, fc.dy_dtheta, "volume")
    return fiber_integrate(terms["fiber_volume"], nf)


def digest(values) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype=float).tobytes()).hexdigest()
