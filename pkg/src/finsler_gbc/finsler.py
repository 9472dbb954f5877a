"""Pointwise Finsler data from jets of F².

All functions act on a batch of points ``point`` of shape ``(2m, N)`` holding
``(x¹..xᵐ, y¹..yᵐ)`` in one chart.  Index conventions: ``g[i, j]``,
``A[i, j, k]``, ``G[i] = G^i`` and ``N[i, j] = N^i_j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jets
from .jets import Jet
from .metrics import MetricSpec

COND_LIMIT = 1e8


class FinslerError(ValueError):
    pass


@dataclass
class FinslerData:
    """Finsler package at a batch of points of one chart.

    The jets keep enough Taylor data for the connection and curvature:
    ``g_jet`` to order 2, ``ginv_jet`` and ``N_jet`` to order 1.
    """

    chart: str
    point: np.ndarray
    F: np.ndarray
    Fy: np.ndarray
    Fx: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    A: np.ndarray
    G: np.ndarray
    N: np.ndarray
    F_jet: Jet
    g_jet: Jet
    ginv_jet: Jet
    N_jet: Jet

    @property
    def m(self) -> int:
        return self.point.shape[0] // 2

    @property
    def x(self) -> np.ndarray:
        return self.point[: self.m]

    @property
    def y(self) -> np.ndarray:
        return self.point[self.m:]

    @property
    def lowered_spray(self) -> np.ndarray:
        """``G_i = g_il G^l = ¼(y^j [F²]_{y^i x^j} − [F²]_{x^i})``."""
        return np.einsum("iln,ln->in", self.g, self.G)


def _matrix(entries) -> Jet:
    return jets.stack([jets.stack(row) for row in entries])


def _as_points(point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if point.ndim == 1:
        point = point[:, None]
    return point


def invert_metric(g: np.ndarray) -> np.ndarray:
    """Inverse of a batch of SPD matrices ``(m, m, N)`` with convexity and conditioning checks."""
    gm = np.moveaxis(g, (0, 1), (-2, -1))
    eig = np.linalg.eigvalsh(0.5 * (gm + np.swapaxes(gm, -1, -2)))
    lo, hi = eig[..., 0], eig[..., -1]
    if np.any(lo <= 0):
        k = int(np.argmin(lo))
        raise FinslerError(
            f"fundamental tensor not positive definite: smallest eigenvalue {lo.flat[k]:.3e} "
            f"(F is not strongly convex along this ray)")
    cond = hi / lo
    if np.any(cond > COND_LIMIT):
        raise FinslerError(f"fundamental tensor condition number {cond.max():.3e} exceeds {COND_LIMIT:.0e}")
    return np.moveaxis(np.linalg.solve(gm, np.broadcast_to(np.eye(g.shape[0]), gm.shape)), (-2, -1), (0, 1))


def _inverse_jet(g_jet: Jet, g0inv: np.ndarray) -> Jet:
    """Jet of g⁻¹ by the Neumann series around the value inverse (exact to order)."""
    inv0 = g_jet.constant(g0inv)
    delta = g_jet - g_jet.constant(g_jet.value)
    step = -inv0.einsum("ikn,kjn->ijn", delta)
    out, term = inv0, inv0
    for _ in range(g_jet.order):
        term = step.einsum("ikn,kjn->ijn", term)
        out = out + term
    return out


def lift_F(spec: MetricSpec, chart: str, point, order: int = 4) -> Jet:
    point = _as_points(point)
    if point.shape[0] != 2 * spec.dim:
        raise FinslerError(f"expected {2 * spec.dim} coordinates, got {point.shape[0]}")
    return jets.jet_lift(lambda x, y: spec.evaluate(chart, x, y), point, order)


def finsler_data(spec: MetricSpec, chart: str, point) -> FinslerData:
    """Full package (one order-4 lift of F) at a batch of points."""
    point = _as_points(point)
    m = spec.dim
    Fj = lift_F(spec, chart, point, 4)
    if np.any(Fj.value <= 0):
        raise FinslerError("F must be positive away from the zero section")
    L = Fj * Fj
    Ly = [L.diff(m + i) for i in range(m)]
    g_jet = _matrix([[0.5 * Ly[i].diff(m + j) for j in range(m)] for i in range(m)])
    g = g_jet.value
    ginv = invert_metric(g)
    ginv_jet = _inverse_jet(g_jet, ginv)

    yv = [Jet.variable(m + k, point, 2) for k in range(m)]
    rhs = []
    for l in range(m):
        acc = -L.diff(l)
        for k in range(m):
            acc = acc + L.diff(k).diff(m + l) * yv[k]
        rhs.append(acc)
    rhs = jets.stack(rhs)
    G_jet = 0.25 * ginv_jet.einsum("iln,ln->in", rhs)
    N_jet = jets.stack([G_jet[:, :].diff(m + j) for j in range(m)], axis=1)
    third = np.array([[[Ly[i].diff(m + j).diff(m + k).value for k in range(m)]
                       for j in range(m)] for i in range(m)])
    F = Fj.value
    return FinslerData(
        chart=chart,
        point=point,
        F=F,
        Fy=np.array([Fj.diff(m + i).value for i in range(m)]),
        Fx=np.array([Fj.diff(i).value for i in range(m)]),
        g=g,
        ginv=ginv,
        A=0.25 * F * third,
        G=G_jet.value,
        N=N_jet.value,
        F_jet=Fj,
        g_jet=g_jet,
        ginv_jet=ginv_jet.truncate(1),
        N_jet=N_jet,
    )


def fundamental_tensor(spec: MetricSpec, chart: str, x, y) -> np.ndarray:
    """``g_ij = ½[F²]_{y^i y^j}``; raises on loss of positive definiteness."""
    point = np.concatenate([np.atleast_1d(x), np.atleast_1d(y)])
    Fj = lift_F(spec, chart, point, 2)
    L = Fj * Fj
    m = spec.dim
    g = np.array([[0.5 * L.diff(m + i).diff(m + j).value for j in range(m)] for i in range(m)])
    invert_metric(g)
    return g[..., 0] if np.ndim(x) == 1 else g


def cartan_tensor(spec: MetricSpec, chart: str, x, y) -> np.ndarray:
    """``A_ijk = (F/4)[F²]_{y^i y^j y^k}``."""
    point = np.concatenate([np.atleast_1d(x), np.atleast_1d(y)])
    Fj = lift_F(spec, chart, point, 3)
    L = Fj * Fj
    m = spec.dim
    A = np.array([[[L.diff(m + i).diff(m + j).diff(m + k).value for k in range(m)]
                   for j in range(m)] for i in range(m)]) * 0.25 * Fj.value
    return A[..., 0] if np.ndim(x) == 1 else A


def spray_and_connection(spec: MetricSpec, chart: str, x, y) -> tuple[np.ndarray, np.ndarray]:
    """``(G^i, N^i_j)`` at a point (or a batch of points along the last axis)."""
    fd = finsler_data(spec, chart, np.concatenate([np.atleast_1d(x), np.atleast_1d(y)]))
    if np.ndim(x) == 1:
        return fd.G[..., 0], fd.N[..., 0]
    return fd.G, fd.N


def horizontal_frame(fd: FinslerData) -> np.ndarray:
    """Matrix ``M`` with ``(dx, dy)^T = M (dx, δy)^T``, shape (2m, 2m, N).

    ``δy^i = dy^i + N^i_j dx^j`` so ``dy^i = δy^i − N^i_j dx^j``.
    """
    m = fd.m
    n = fd.F.shape
    M = np.zeros((2 * m, 2 * m) + n)
    M[np.arange(2 * m), np.arange(2 * m)] = 1.0
    M[m:, :m] = -fd.N
    return M


def delta_dx(fd: FinslerData, field: Jet) -> np.ndarray:
    """``δf/δx^i = ∂f/∂x^i − N^j_i ∂f/∂y^j`` for a jet-valued field; shape (m, ...)."""
    m = fd.m
    out = []
    for i in range(m):
        v = field.diff(i).value
        for j in range(m):
            v = v - fd.N[j, i] * field.diff(m + j).value
        out.append(v)
    return np.array(out)


def hilbert_form(spec: MetricSpec, chart: str, x, y) -> np.ndarray:
    """Components ``F_{y^i}`` of ``ω = F_{y^i} dx^i``."""
    point = np.concatenate([np.atleast_1d(x), np.atleast_1d(y)])
    Fj = lift_F(spec, chart, point, 1)
    w = np.array([Fj.diff(spec.dim + i).value for i in range(spec.dim)])
    return w[..., 0] if np.ndim(x) == 1 else w


def preflight_convexity(spec: MetricSpec, nbase: int = 12, nfiber: int = 24) -> float:
    """Smallest eigenvalue of g (relative to F-scale) over a coarse SM sample; raises if ≤ 0."""
    from .quadrature import base_nodes  # local import: quadrature depends on this module

    worst = np.inf
    theta = 2 * np.pi * np.arange(nfiber) / nfiber
    u = np.array([np.cos(theta), np.sin(theta)])
    for chart in spec.charts:
        xs, _ = base_nodes(chart, nbase, nbase)
        X = np.repeat(xs, nfiber, axis=1)
        U = np.tile(u, xs.shape[1])
        point = np.concatenate([X, U])
        Fj = lift_F(spec, chart.name, point, 2)
        if np.any(Fj.value <= 0):
            raise FinslerError(f"F not positive in chart {chart.name}")
        L = Fj * Fj
        m = spec.dim
        g = np.array([[0.5 * L.diff(m + i).diff(m + j).value for j in range(m)] for i in range(m)])
        eig = np.linalg.eigvalsh(np.moveaxis(g, (0, 1), (-2, -1)))
        rel = eig[..., 0] / eig[..., -1]
        worst = min(worst, float(rel.min()))
        invert_metric(g)
    return worst
