"""The sign and orientation conventions used throughout, with a stable hash.

Every χ report carries :func:`ledger_hash` so results computed under
different conventions can never be confused.
"""

from __future__ import annotations

import hashlib
import json

CONVENTIONS = {
    "curvature": "Omega^i_j = d varpi^i_j + varpi^i_k ^ varpi^k_j",
    "R_components": "Omega^i_j = 1/2 R^i_{jkl} dx^k ^ dx^l + P^i_{jkl} dx^k ^ delta y^l / F",
    "P_formula": "P^i_{jkl} = -F dGamma^i_{jk}/dy^l",
    "sm_orientation": "dx1 ^ dx2 ^ dtheta, theta counterclockwise in the chart fibre",
    "fiber_parametrization": "y(theta) = u(theta)/F(x, u(theta)), u = (cos theta, sin theta)",
    "fiber_integral": "int_{SM/M} f dx1 dx2 dtheta = (int f dtheta) dx1 dx2",
    "sphere_charts": "S: (X, Y)/(1 - Z); N: (X, -Y)/(1 + Z)",
    "supertrace": "tr_s = tr[tau X], tau = (-1)^degree on Lambda(V*)",
    "koszul": "(a (x) X)(b (x) Y) = (-1)^{|X||b|} ab (x) XY",
    "lift": "B^natural = -sum B^j_i v*^i ^ i_{v_j}",
    "delta_layout": "matrix-valued forms indexed [lower, upper]; delta^{12}_{12} = 1",
    "log_F_x": "full partial derivative F_x/F before restriction to SM",
    "g1_coefficient": "printed (-1)^k C(2k-2, k-1)",
}


def ledger_text() -> str:
    return json.dumps(CONVENTIONS, sort_keys=True, indent=2, ensure_ascii=True)


def ledger_hash() -> str:
    return hashlib.sha256(ledger_text().encode()).hexdigest()
