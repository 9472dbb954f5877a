"""Metric catalog, chart atlases and partitions of unity.

Every metric is evaluated in chart coordinates: ``spec.evaluate(chart, x, y)``
takes lists of coordinate values (floats, arrays or jets) and returns F.

The sphere uses two stereographic charts.  Chart ``S`` is centred at the south
pole, ``(x¹, x²) = (X, Y)/(1 − Z)``; chart ``N`` is centred at the north pole,
``(x¹, x²) = (X, −Y)/(1 + Z)``.  Both are orientation preserving for the
outward normal, and their transition is ``z ↦ 1/z`` in complex notation.  The
torus uses the periodic unit square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from . import jets


class MetricError(ValueError):
    pass


# -- charts ----------------------------------------------------------------

SPHERE_RADIUS = math.sqrt(3.0)
"""Chart disk radius: the partition of unity vanishes for |x| ≥ √3 (Z ≥ 1/2)."""

PU_LOW, PU_HIGH = -0.5, 0.5


def _smooth_step(t):
    """C∞ step: 0 for t ≤ 0, 1 for t ≥ 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def sphere_embedding(chart: str, x1, x2):
    """(X, Y, Z) on the unit sphere for chart coordinates; works on jets."""
    sign = _chart_sign(chart)
    s = x1 * x1 + x2 * x2
    d = 1.0 / (1.0 + s)
    return 2.0 * x1 * d, sign * 2.0 * x2 * d, sign * (s - 1.0) * d


def sphere_differential(chart: str, x1, x2, y1, y2):
    """(dX, dY, dZ) applied to the tangent vector y at x."""
    sign = _chart_sign(chart)
    s = x1 * x1 + x2 * x2
    p = x1 * y1 + x2 * y2
    d = 1.0 / (1.0 + s)
    d2 = d * d
    dX = 2.0 * y1 * d - 4.0 * x1 * p * d2
    dY = sign * (2.0 * y2 * d - 4.0 * x2 * p * d2)
    dZ = sign * 4.0 * p * d2
    return dX, dY, dZ


def _chart_sign(chart: str) -> float:
    if chart == "S":
        return 1.0
    if chart == "N":
        return -1.0
    raise MetricError(f"unknown sphere chart {chart!r}")


def sphere_transition(x1, x2):
    """Coordinates in the other sphere chart: ``z ↦ 1/z`` (an involution)."""
    s = x1 * x1 + x2 * x2
    return x1 / s, -x2 / s


def sphere_transition_jacobian(x1, x2):
    """∂x'/∂x for :func:`sphere_transition`, shape (2, 2, ...); determinant 1/s² > 0."""
    s = x1 * x1 + x2 * x2
    s2 = s * s
    return np.array([[(x2 * x2 - x1 * x1) / s2, -2 * x1 * x2 / s2],
                     [2 * x1 * x2 / s2, (x2 * x2 - x1 * x1) / s2]])


def partition_of_unity(chart: str, x1, x2):
    """Weight of ``chart`` at chart coordinates; the two sphere weights sum to 1."""
    if chart == "T":
        return np.ones(np.broadcast_shapes(np.shape(x1), np.shape(x2)))
    _, _, Z = sphere_embedding(chart, np.asarray(x1, float), np.asarray(x2, float))
    # chart S keeps the southern cap, chart N the northern one
    zs = Z if chart == "S" else -Z
    return 1.0 - _smooth_step((zs - PU_LOW) / (PU_HIGH - PU_LOW))


@dataclass(frozen=True)
class Chart:
    name: str
    kind: str  # "disk" (polar Gauss-Legendre) or "square" (periodic unit square)
    radius: float = SPHERE_RADIUS


SPHERE_CHARTS = (Chart("S", "disk"), Chart("N", "disk"))
TORUS_CHARTS = (Chart("T", "square"),)


# -- metric specs ------------------------------------------------------------

Evaluator = Callable[[str, list, list], object]


@dataclass(frozen=True)
class MetricSpec:
    """A Finsler metric given by its chart-coordinate evaluator.

    Parameters
    ----------
    name : str
        Catalog name.
    family : str
        ``riemannian``, ``randers``, ``minkowski-quartic`` or ``custom``.
    topology : str
        ``sphere`` or ``torus``; fixes the chart atlas and χ.
    params : mapping
        Parameter record used to build the evaluator.
    evaluator : callable
        ``evaluator(chart, x, y)`` returning F; must use jet-aware arithmetic.
    berwald : bool or None
        Whether the family is Berwald (P ≡ 0); None when unknown.
    """

    name: str
    family: str
    topology: str
    params: Mapping[str, object]
    evaluator: Evaluator = field(compare=False, repr=False)
    berwald: bool | None = None
    dim: int = 2

    @property
    def charts(self) -> tuple[Chart, ...]:
        return SPHERE_CHARTS if self.topology == "sphere" else TORUS_CHARTS

    @property
    def euler_characteristic(self) -> int:
        return 2 if self.topology == "sphere" else 0

    def evaluate(self, chart: str, x, y):
        return self.evaluator(chart, x, y)

    def describe(self) -> dict:
        return {"name": self.name, "family": self.family, "topology": self.topology,
                "params": dict(self.params)}


def _round(params):
    r = float(params["r"])

    def F(chart, x, y):
        s = x[0] * x[0] + x[1] * x[1]
        return 2.0 * r * jets.sqrt(y[0] * y[0] + y[1] * y[1]) / (1.0 + s)

    return F


def _ellipsoid(params):
    a, b, c = (float(params[k]) for k in "abc")

    def F(chart, x, y):
        dX, dY, dZ = sphere_differential(chart, x[0], x[1], y[0], y[1])
        return jets.sqrt(a * a * dX * dX + b * b * dY * dY + c * c * dZ * dZ)

    return F


def _randers(params):
    r, eps = float(params["r"]), float(params["eps"])

    def F(chart, x, y):
        s = x[0] * x[0] + x[1] * x[1]
        alpha = 2.0 * r * jets.sqrt(y[0] * y[0] + y[1] * y[1]) / (1.0 + s)
        X, Y, _ = sphere_embedding(chart, x[0], x[1])
        dX, dY, dZ = sphere_differential(chart, x[0], x[1], y[0], y[1])
        beta = eps * r * (dZ + 0.5 * (X * dY - Y * dX))
        return alpha + beta

    return F


def _flat(params):
    def F(chart, x, y):
        return jets.sqrt(y[0] * y[0] + y[1] * y[1])

    return F


def _quartic(params):
    c = float(params["c"])

    def F(chart, x, y):
        a, b = y[0] * y[0], y[1] * y[1]
        return (a * a + c * a * b + b * b) ** 0.25

    return F


_EXPR_FUNCS = {"sqrt": jets.sqrt, "exp": jets.exp, "log": jets.log, "sin": jets.sin,
               "cos": jets.cos, "pi": math.pi}


def _custom(params):
    expr = str(params["expr"])
    topology = str(params["topology"])
    try:
        code = compile(expr, "<metric expr>", "eval")
    except SyntaxError as exc:
        raise MetricError(f"cannot parse metric expression: {exc}") from exc
    allowed = set(_EXPR_FUNCS) | ({"X", "Y", "Z", "dX", "dY", "dZ"} if topology == "sphere"
                                  else {"x1", "x2", "y1", "y2"})
    unknown = set(code.co_names) - allowed
    if unknown:
        raise MetricError(f"unknown names in metric expression: {sorted(unknown)}")

    def F(chart, x, y):
        env = dict(_EXPR_FUNCS)
        if topology == "sphere":
            env.update(zip(("X", "Y", "Z"), sphere_embedding(chart, x[0], x[1])))
            env.update(zip(("dX", "dY", "dZ"), sphere_differential(chart, x[0], x[1], y[0], y[1])))
        else:
            env.update(x1=x[0], x2=x[1], y1=y[0], y2=y[1])
        return eval(code, {"__builtins__": {}}, env)

    return F


# name -> (family, topology, defaults, builder, berwald)
CATALOG = {
    "round-s2": ("riemannian", "sphere", {"r": 1.0}, _round, True),
    "ellipsoid-s2": ("riemannian", "sphere", {"a": 1.0, "b": 1.0, "c": 1.5}, _ellipsoid, True),
    "randers-s2": ("randers", "sphere", {"r": 1.0, "eps": 0.1}, _randers, False),
    "flat-t2": ("riemannian", "torus", {}, _flat, True),
    "quartic-t2": ("minkowski-quartic", "torus", {"c": 1.0}, _quartic, True),
    "custom": ("custom", "torus", {"expr": "sqrt(y1**2 + y2**2)", "topology": "torus"}, _custom, None),
}

SURFACE_METRICS = ("round-s2", "ellipsoid-s2", "randers-s2", "flat-t2", "quartic-t2")


def parse_param(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise MetricError(f"malformed parameter {text!r}; expected key=value")
    key, val = text.split("=", 1)
    key = key.strip()
    if not key:
        raise MetricError(f"malformed parameter {text!r}; empty key")
    return key, val.strip()


def get_metric(name: str, params: Mapping[str, object] | None = None) -> MetricSpec:
    """Build a catalog metric, validating parameter names and values."""
    if name not in CATALOG:
        raise MetricError(f"unknown metric {name!r}; choose from {sorted(CATALOG)}")
    family, topology, defaults, builder, berwald = CATALOG[name]
    merged = dict(defaults)
    for key, val in (params or {}).items():
        if key not in defaults:
            raise MetricError(f"metric {name!r} has no parameter {key!r}; known: {sorted(defaults)}")
        if isinstance(defaults[key], float):
            try:
                val = float(val)
            except (TypeError, ValueError):
                raise MetricError(f"parameter {key!r} must be a number, got {val!r}") from None
            if not math.isfinite(val):
                raise MetricError(f"parameter {key!r} must be finite")
        merged[key] = val
    if name == "custom":
        topology = str(merged["topology"])
        if topology not in ("sphere", "torus"):
            raise MetricError("custom topology must be 'sphere' or 'torus'")
    for key in ("r", "a", "b"):
        if key in merged and merged[key] <= 0:
            raise MetricError(f"parameter {key!r} must be positive")
    if name == "ellipsoid-s2" and merged["c"] <= 0:
        raise MetricError("parameter 'c' must be positive")
    if name == "randers-s2" and not 0 <= abs(merged["eps"]) < 1 / 1.5:
        # ‖dZ + ½(X dY − Y dX)‖ ≤ 3/2 on the unit sphere
        raise MetricError("Randers strength must satisfy |eps| < 2/3 so that ‖β‖_α < 1")
    if name == "quartic-t2" and not -2.0 < merged["c"]:
        raise MetricError("quartic cross coefficient must exceed -2 for positivity")
    return MetricSpec(name, family, topology, MappingProxyType(merged), builder(merged), berwald)


def custom_metric(evaluator: Evaluator, topology: str, name: str = "custom",
                  family: str = "custom", berwald: bool | None = None) -> MetricSpec:
    """Wrap a user evaluator ``F(chart, x, y)`` (jet-aware) as a metric."""
    if topology not in ("sphere", "torus"):
        raise MetricError("topology must be 'sphere' or 'torus'")
    return MetricSpec(name, family, topology, MappingProxyType({}), evaluator, berwald)
