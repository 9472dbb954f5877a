"""CSV dumps of integrands and curvature components on the SM grid.

Column orders are part of the versioned output format (see docs/formats.md)
and must only change together with :data:`CSV_VERSION`.
"""

from __future__ import annotations

import csv
from typing import IO

import numpy as np

from . import chern as chern_mod
from . import gbc
from .finsler import finsler_data
from .metrics import MetricSpec, partition_of_unity
from .quadrature import IntegrationScheme, base_nodes, fiber_chart, integrate_theorem, sm_pullback_matrix

CSV_VERSION = 1
INTEGRAND_COLUMNS = ("chart", "x1", "x2", "theta", "label", "coefficient")
CURVATURE_COLUMNS = ("chart", "x1", "x2", "theta", "R2_112", "P1_111", "P1_211",
                     "torsion", "metricity", "dydy", "p_crosscheck")


def _fmt(v) -> str:
    return repr(float(v))


def write_integrands(fh: IO[str], spec: MetricSpec, theorem: str, scheme: IntegrationScheme) -> int:
    """Top-monomial coefficient of every labelled term at every SM node; returns row count."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(INTEGRAND_COLUMNS)
    count = 0

    def hook(chart, fc, terms):
        nonlocal count
        pts = fc.points
        theta = np.tile(fc.theta, fc.x.shape[1])
        for label in sorted(terms):
            for p in range(pts.shape[1]):
                w.writerow((chart, _fmt(pts[0, p]), _fmt(pts[1, p]), _fmt(theta[p]), label,
                            _fmt(terms[label][p])))
                count += 1

    integrate_theorem(spec, theorem, IntegrationScheme(scheme.fiber_nodes, scheme.base, 0, scheme.chunk),
                      node_hook=hook)
    return count


def curvature_rows(spec: MetricSpec, chart: str, x: np.ndarray, nf: int) -> np.ndarray:
    """Numeric curvature columns (x1 … p_crosscheck) at base points ``x`` (2, Nb)."""
    fc = fiber_chart(spec, chart, x, nf)
    fd = finsler_data(spec, chart, fc.points)
    cd = chern_mod.chern_data(fd)
    frame = chern_mod.special_frame(fd, cd)
    pull = sm_pullback_matrix(fd, fc.dy_dtheta)
    comps, _ = gbc.frame_curvature_components(fd, frame, pull)
    torsion, metricity = chern_mod.structure_residual_fields(cd, fd)
    dg = chern_mod.delta_gens(fd.m)
    dydy = np.max(np.abs(cd.Omega.component(dg[2], dg[3])).reshape(-1, fd.F.size), axis=0)
    P_direct = -fd.F * np.moveaxis(np.array([cd.gamma_jet.diff(2 + l).value for l in range(2)]), 0, 3)
    cross = np.max(np.abs(cd.P - P_direct).reshape(-1, fd.F.size), axis=0)
    theta = np.tile(fc.theta, x.shape[1])
    return np.array([fc.points[0], fc.points[1], theta, comps[1, 0, 0], comps[0, 0, 1], comps[0, 1, 1],
                     torsion, metricity, dydy, cross])


def write_curvature(fh: IO[str], spec: MetricSpec, scheme: IntegrationScheme) -> int:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CURVATURE_COLUMNS)
    count = 0
    nb_chunk = max(1, scheme.chunk // scheme.fiber_nodes)
    for chart in spec.charts:
        xs, _ = base_nodes(chart, *scheme.base)
        xs = xs[:, partition_of_unity(chart.name, xs[0], xs[1]) > 0]
        for s in range(0, xs.shape[1], nb_chunk):
            rows = curvature_rows(spec, chart.name, xs[:, s:s + nb_chunk], scheme.fiber_nodes)
            for p in range(rows.shape[1]):
                w.writerow((chart.name,) + tuple(_fmt(v) for v in rows[:, p]))
                count += 1
    return count
