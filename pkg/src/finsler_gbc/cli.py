"""Command-line front end: ``finsler-gbc {verify,chi,dump,calibrate}``.

Settings are resolved in increasing precedence: built-in defaults, the JSON
file given by ``--config``, ``FINSLER_GBC_*`` environment variables, then
command-line flags.

Exit codes: 0 all asserted checks passed; 1 a check failed or χ was
inconclusive; 2 invalid configuration; 3 the computation was refused
(e.g. the Berwald gate).  Failures are also written to stderr as one JSON
document.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .chern import ChernError
from .conventions import CONVENTIONS, ledger_hash
from .finsler import FinslerError, preflight_convexity
from .gbc import GbcError
from .metrics import CATALOG, MetricError, get_metric, parse_param
from .quadrature import THEOREMS, IntegrationScheme, QuadratureError, euler_characteristic

COMMANDS = ("verify", "chi", "dump", "calibrate")
ENV_PREFIX = "FINSLER_GBC_"

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_REFUSED = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything one invocation needs; the defaults alone are runnable."""

    command: str = "chi"
    metric: str = "round-s2"
    params: dict = field(default_factory=dict)
    theorem: str = "c1"
    fiber_nodes: int = IntegrationScheme.fiber_nodes
    base_grid: tuple = IntegrationScheme.base
    ladder: int = IntegrationScheme.ladder
    out: str | None = None
    dump: str | None = None
    strict: bool = False
    threads: int = 1
    timestamp: bool = True
    suites: tuple | None = None
    instances: tuple = (200, 50)

    def scheme(self) -> IntegrationScheme:
        return IntegrationScheme(fiber_nodes=self.fiber_nodes, base=tuple(self.base_grid),
                                 ladder=self.ladder, threads=self.threads)

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.theorem not in THEOREMS:
            raise ConfigError(f"theorem must be one of {THEOREMS}")
        get_metric(self.metric, self.params)  # raises MetricError
        try:
            self.scheme()
        except QuadratureError as exc:
            raise ConfigError(str(exc)) from exc
        if self.suites is not None:
            from .suites import SUITES

            bad = set(self.suites) - set(SUITES)
            if bad:
                raise ConfigError(f"unknown suites {sorted(bad)}; choose from {SUITES}")
        return self


# -- parsing helpers ----------------------------------------------------------------

def parse_grid(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        vals = list(text)
    else:
        parts = str(text).lower().split("x")
        if len(parts) != 2:
            raise ConfigError(f"base grid must look like WxH, got {text!r}")
        vals = parts
    try:
        w, h = (int(v) for v in vals)
    except ValueError:
        raise ConfigError(f"base grid must contain integers, got {text!r}") from None
    return w, h


def parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_params(items) -> dict:
    if isinstance(items, dict):
        return {str(k): v for k, v in items.items()}
    out = {}
    for item in items:
        k, v = parse_param(item)
        out[k] = v
    return out


def _coerce(key: str, value):
    """Convert a config-file or environment value to the RunConfig field type."""
    try:
        if key in ("fiber_nodes", "ladder", "threads"):
            return int(value)
        if key == "base_grid":
            return parse_grid(value)
        if key in ("strict", "timestamp"):
            return parse_bool(value)
        if key == "params":
            if isinstance(value, str):
                return _parse_params([p for p in value.split(",") if p.strip()])
            return _parse_params(value)
        if key == "suites":
            return tuple(value.split(",")) if isinstance(value, str) else tuple(value)
        if key == "instances":
            vals = value.split(",") if isinstance(value, str) else value
            return tuple(int(v) for v in vals)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value


_FIELDS = {f.name for f in fields(RunConfig)}

# environment variable suffix -> RunConfig field
ENV_VARS = {
    "METRIC": "metric", "PARAMS": "params", "THEOREM": "theorem", "FIBER_NODES": "fiber_nodes",
    "BASE_GRID": "base_grid", "LADDER": "ladder", "OUT": "out", "DUMP": "dump", "STRICT": "strict",
    "THREADS": "threads", "TIMESTAMP": "timestamp", "SUITES": "suites", "INSTANCES": "instances",
}


def load_config_file(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return {k: _coerce(k, v) for k, v in data.items()}


def env_overrides(environ) -> dict:
    out = {}
    for suffix, key in ENV_VARS.items():
        name = ENV_PREFIX + suffix
        if name in environ:
            out[key] = _coerce(key, environ[name])
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields")
    common.add_argument("--metric", help=f"catalog name: {', '.join(sorted(CATALOG))}")
    common.add_argument("--param", action="append", metavar="K=V", help="metric parameter (repeatable)")
    common.add_argument("--theorem", choices=THEOREMS)
    common.add_argument("--fiber-nodes", type=int)
    common.add_argument("--base-grid", metavar="WxH")
    common.add_argument("--ladder", type=int)
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--dump", metavar="PATH")
    common.add_argument("--strict", action="store_true", default=None)
    common.add_argument("--threads", type=int)
    common.add_argument("--no-timestamp", action="store_true", default=None)
    common.add_argument("--suites", metavar="A,B", help="verify: comma-separated suite names")
    common.add_argument("--instances", metavar="N1,N2", help="verify: synthetic supertrace instances for n=1,2")
    parser = argparse.ArgumentParser(prog="finsler-gbc", description="Finsler Gauss-Bonnet-Chern integrator.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run the invariant suites")
    sub.add_parser("chi", parents=[common], help="compute the Euler characteristic")
    sub.add_parser("dump", parents=[common], help="write integrand and curvature CSVs")
    sub.add_parser("calibrate", parents=[common], help="round-sphere sign calibration and convention ledger")
    return parser


def resolve_config(argv, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    args = build_parser().parse_args(argv)
    values: dict = {}
    if args.config:
        values.update(load_config_file(args.config))
    values.update(env_overrides(environ))
    flag_map = {
        "metric": args.metric, "theorem": args.theorem, "fiber_nodes": args.fiber_nodes,
        "ladder": args.ladder, "out": args.out, "dump": args.dump, "strict": args.strict,
        "threads": args.threads,
    }
    values.update({k: v for k, v in flag_map.items() if v is not None})
    if args.base_grid is not None:
        values["base_grid"] = parse_grid(args.base_grid)
    if args.param:
        values["params"] = {**values.get("params", {}), **_parse_params(args.param)}
    if args.no_timestamp:
        values["timestamp"] = False
    if args.suites is not None:
        values["suites"] = _coerce("suites", args.suites)
    if args.instances is not None:
        values["instances"] = _coerce("instances", args.instances)
    values["command"] = args.command
    return RunConfig(**values).validate()


# -- commands ------------------------------------------------------------------------

def _emit(text: str, path: str | None):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _fail(failures: list) -> None:
    sys.stderr.write(json.dumps({"status": "fail", "failures": failures}, sort_keys=True) + "\n")


def cmd_verify(cfg: RunConfig) -> int:
    from .suites import SUITES, format_table, run_suites

    spec = get_metric(cfg.metric, cfg.params)
    rows = run_suites(spec, cfg.suites or SUITES, supertrace_counts=cfg.instances)
    print(format_table(rows))
    if cfg.strict:
        # every reported comparison becomes asserted (skipped rows stay informational)
        for r in rows:
            if math.isfinite(r.value) and math.isfinite(r.tol):
                r.asserted = True
    failed = [r.to_dict() for r in rows if r.asserted and not r.passed]
    if cfg.out:
        doc = {"schema_version": 1, "metric": spec.describe(), "checks": [r.to_dict() for r in rows],
               "passed": not failed, "ledger_hash": ledger_hash()}
        Path(cfg.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    if failed:
        _fail(failed)
        return EXIT_FAIL
    return EXIT_OK


def cmd_chi(cfg: RunConfig) -> int:
    spec = get_metric(cfg.metric, cfg.params)
    preflight_convexity(spec)
    scheme = cfg.scheme()
    report = euler_characteristic(spec, cfg.theorem, scheme)
    doc = report.to_json_dict(timestamp=cfg.timestamp)
    failures = []
    if not report.conclusive:
        failures.append({"check": "conclusive", "residual": report.residual})
    if cfg.strict:
        if report.nearest != spec.euler_characteristic:
            failures.append({"check": "topology", "nearest": report.nearest,
                             "expected": spec.euler_characteristic})
        res = [r["residual"] for r in report.ladder]
        if any(b > a for a, b in zip(res, res[1:])):
            failures.append({"check": "ladder_monotone", "residuals": res})
        if spec.topology == "sphere" and cfg.theorem == "t2":
            from .suites import chart_disagreement

            dis = chart_disagreement(spec)
            doc["chart_overlap_disagreement"] = dis
            if dis > 1e-8:
                failures.append({"check": "chart_overlap", "value": dis})
    doc["passed"] = not failures
    _emit(json.dumps(doc, sort_keys=True, indent=2) + "\n", cfg.out)
    if cfg.dump:
        from .dumps import write_integrands

        with open(cfg.dump, "w", newline="") as fh:
            write_integrands(fh, spec, cfg.theorem, scheme)
    if failures:
        _fail(failures)
        return EXIT_FAIL
    return EXIT_OK


def cmd_dump(cfg: RunConfig) -> int:
    from .dumps import write_curvature, write_integrands

    spec = get_metric(cfg.metric, cfg.params)
    outdir = Path(cfg.out or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    scheme = cfg.scheme()
    with open(cfg.dump or outdir / "integrands.csv", "w", newline="") as fh:
        n_int = write_integrands(fh, spec, cfg.theorem, scheme)
    with open(outdir / "curvature.csv", "w", newline="") as fh:
        n_curv = write_curvature(fh, spec, scheme)
    print(json.dumps({"integrand_rows": n_int, "curvature_rows": n_curv}, sort_keys=True))
    return EXIT_OK


def calibration_record(scheme: IntegrationScheme | None = None) -> dict:
    """Round-sphere anchors for every sign choice, with the resulting ledger."""
    import numpy as np

    from .chern import chern_data
    from .finsler import finsler_data
    from .quadrature import fiber_volume

    spec = get_metric("round-s2")
    scheme = scheme or IntegrationScheme(fiber_nodes=16, base=(16, 16), ladder=0)
    chi = {th: euler_characteristic(spec, th, scheme).chi for th in THEOREMS}
    vol = float(fiber_volume(spec, "S", np.array([[0.3], [0.2]]), 32)[0])
    fd = finsler_data(spec, "S", np.array([0.0, 0.0, 1.0, 0.0]))
    R1_212 = float(chern_data(fd).R[0, 1, 0, 1, 0])
    a = float(fd.g[0, 0, 0])
    checks = {
        "chi_positive": all(round(v) == 2 for v in chi.values()),
        "fiber_volume_2pi": abs(vol - 2 * math.pi) < 1e-10,
        "R1_212_equals_Ka": abs(R1_212 - a) < 1e-10,  # K = 1 for the unit sphere
    }
    return {"conventions": CONVENTIONS, "ledger_hash": ledger_hash(), "chi": chi,
            "fiber_volume": vol, "R1_212_at_south_pole": R1_212, "metric_a11": a,
            "checks": checks, "passed": all(checks.values())}


def cmd_calibrate(cfg: RunConfig) -> int:
    rec = calibration_record()
    text = json.dumps(rec, sort_keys=True, indent=2) + "\n"
    Path(cfg.out or "conventions.json").write_text(text)
    print(json.dumps({"passed": rec["passed"], "ledger_hash": rec["ledger_hash"]}, sort_keys=True))
    if not rec["passed"]:
        _fail([k for k, v in rec["checks"].items() if not v])
        return EXIT_FAIL
    return EXIT_OK


def run(cfg: RunConfig) -> int:
    handlers = {"verify": cmd_verify, "chi": cmd_chi, "dump": cmd_dump, "calibrate": cmd_calibrate}
    try:
        return handlers[cfg.command](cfg)
    except (GbcError, FinslerError, ChernError, QuadratureError) as exc:
        _fail([{"error": type(exc).__name__, "message": str(exc)}])
        return EXIT_REFUSED


def main(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
    except (ConfigError, MetricError) as exc:
        _fail([{"error": type(exc).__name__, "message": str(exc)}])
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
