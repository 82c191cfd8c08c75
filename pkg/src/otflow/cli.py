"""Command line front end tying the pipeline together.

Subcommands: map (monotone map table), field (velocity table, optionally the
shifted Lipschitz variant via --eps), flow (trajectory table from one start
point), verify (build a pair and emit the verification report), example (run a
named registry problem end to end), pathology (counterexample tables), sudakov
(ray decomposition in d >= 2 with seeded Monte-Carlo verification).

Measure specs are JSON, inline or by file path.  Outputs land in --out (default
$OTFLOW_OUT or ./otflow-out) as CSV tables with fixed columns -- (x, T, Tp),
(x, v), (t, phi) -- plus a versioned report.json.  Runs are deterministic:
fixed config and seed give byte-identical files.  Exit codes: 0 success, 1
verification failure (report still written), 2 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field as dc_field

import numpy as np

from .config import DEFAULT_CONFIG, BuildConfig
from .errors import InputError, TransportError
from .flow import flow as flow_map, push_measure, verify_transport
from .measures import measure_to_dict, parse_measure
from .monotone import compute_monotone_map
from .pathology import (build_counterexample, probe_non_integrability,
                        probe_velocity_growth)
from .registry import example_names, get_example
from .sudakov import (assemble_field, decompose, measure_nd_to_dict,
                      parse_measure_nd, verify_nd)
from .velocity import SeedSpec, approximate_lipschitz, build_velocity

_SCHEMA_VERSION = 1
_OUT_ENV = "OTFLOW_OUT"
_FLOW_ROWS_CAP = 256  # trajectory tables stay readable even at large --n

_COMMANDS = ("map", "field", "flow", "verify", "example", "pathology",
             "sudakov")


# ======================================================================
# run configuration
# ======================================================================

@dataclass
class RunConfig:
    """Validated bundle of one CLI invocation.

    n must be a power of two at least 16; tolerances must be positive.  The
    remaining fields are taken verbatim from the subcommand's arguments.
    """

    command: str
    out: str
    fmt: str = "csv"
    n: int = 4096
    tol_julia: float = DEFAULT_CONFIG.tol_julia
    tol_time: float = DEFAULT_CONFIG.tol_time
    seed_kind: str = "affine"
    ck: str = "1"
    eps: float | None = None
    seed: int = 20260823
    extra: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.command not in _COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        n = int(self.n)
        if n < 16 or (n & (n - 1)) != 0:
            raise InputError(f"--n must be a power of two >= 16, got {self.n}")
        self.n = n
        for name, val in (("--tol-julia", self.tol_julia),
                          ("--tol-time", self.tol_time)):
            if not (np.isfinite(val) and val > 0.0):
                raise InputError(f"{name} must be positive, got {val}")
        if self.eps is not None and not (np.isfinite(self.eps) and self.eps > 0.0):
            raise InputError(f"--eps must be positive, got {self.eps}")
        if self.fmt not in ("csv", "json"):
            raise InputError(f"--format must be csv or json, got {self.fmt!r}")

    def build_config(self) -> BuildConfig:
        return DEFAULT_CONFIG.with_(tol_julia=self.tol_julia,
                                    tol_time=self.tol_time)

    def seed_spec(self) -> SeedSpec:
        if self.seed_kind == "hermite_ck":
            if self.ck not in ("0", "1"):
                raise InputError(
                    f"--seed-kind hermite_ck needs --ck 0 or 1, got {self.ck!r}")
            return SeedSpec(kind="hermite_ck", order_k=int(self.ck))
        return SeedSpec(kind=self.seed_kind)


# ======================================================================
# spec loading and file writing
# ======================================================================

def _load_spec(arg: str, what: str) -> dict:
    """Read a JSON measure spec from a file path or an inline string."""
    text = arg
    origin = "inline spec"
    if os.path.exists(arg):
        origin = arg
        with open(arg, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{what}: {origin} is not valid JSON: {e.msg} "
                         f"at line {e.lineno} column {e.colno}") from e
    if not isinstance(data, dict):
        raise InputError(f"{what}: {origin} must parse to a JSON object, "
                         f"got {type(data).__name__}")
    return data


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(u) for u in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    return v


def write_table(out_dir: str, name: str, header: list[str], rows, fmt: str) -> str:
    """Write one table as name.csv or name.json; returns the path written."""
    path = os.path.join(out_dir, f"{name}.{fmt}")
    if fmt == "csv":
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_cell(v) for v in row))
        body = "\n".join(lines) + "\n"
    else:
        records = [dict(zip(header, (_jsonable(v) for v in row))) for row in rows]
        body = json.dumps(records, sort_keys=True, indent=2) + "\n"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(body)
    return path


def write_report(out_dir: str, payload: dict) -> str:
    payload = dict(payload)
    payload.setdefault("schema_version", _SCHEMA_VERSION)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")
    return path


def _grid(m, n: int, cfg: BuildConfig) -> np.ndarray:
    lo, hi = m.window(cfg.eps_tail)
    return np.linspace(lo, hi, n)


# ======================================================================
# subcommands
# ======================================================================

def _cmd_map(rc: RunConfig) -> int:
    cfg = rc.build_config()
    m0 = parse_measure(_load_spec(rc.extra["mu0"], "--mu0"))
    m1 = parse_measure(_load_spec(rc.extra["mu1"], "--mu1"))
    T = compute_monotone_map(m0, m1)
    xs = _grid(m0, rc.n, cfg)
    rows = zip(xs, np.asarray(T.forward(xs), dtype=float),
               np.asarray(T.derivative(xs), dtype=float))
    write_table(rc.out, "map", ["x", "T", "Tp"], rows, rc.fmt)
    write_report(rc.out, {"command": "map", "ok": True, "n": rc.n,
                          "mu0": measure_to_dict(m0), "mu1": measure_to_dict(m1),
                          "window": list(m0.window(cfg.eps_tail))})
    return 0


def _cmd_field(rc: RunConfig) -> int:
    cfg = rc.build_config()
    m0 = parse_measure(_load_spec(rc.extra["mu0"], "--mu0"))
    m1 = parse_measure(_load_spec(rc.extra["mu1"], "--mu1"))
    approx = None
    if rc.eps is not None:
        res = approximate_lipschitz(m0, m1, rc.eps, seed=rc.seed_spec(),
                                    config=cfg)
        field = res.field
        approx = {"eps": res.eps, "shift": res.shift,
                  "w1_target_gap": res.w1_target_gap,
                  "candidates_tried": res.candidates_tried}
    else:
        field = build_velocity(m0, m1, seed=rc.seed_spec(), config=cfg)
    xs = np.linspace(field.domain[0], field.domain[1], rc.n)
    write_table(rc.out, "field", ["x", "v"], zip(xs, field(xs)), rc.fmt)
    report = {"command": "field", "ok": True, "n": rc.n,
              "mu0": measure_to_dict(m0), "mu1": measure_to_dict(m1),
              "seed_kind": rc.seed_kind, "field": field.describe()}
    if approx is not None:
        report["approximate"] = approx
    write_report(rc.out, report)
    return 0


def _cmd_flow(rc: RunConfig) -> int:
    cfg = rc.build_config()
    m0 = parse_measure(_load_spec(rc.extra["mu0"], "--mu0"))
    m1 = parse_measure(_load_spec(rc.extra["mu1"], "--mu1"))
    field = build_velocity(m0, m1, seed=rc.seed_spec(), config=cfg)
    x0 = rc.extra.get("x0")
    x0 = float(m0.quantile(0.5)) if x0 is None else float(x0)
    t_final = float(rc.extra.get("t", 1.0))
    ts = np.linspace(0.0, t_final, min(rc.n, _FLOW_ROWS_CAP) + 1)
    rows = [(t, float(flow_map(field, t, np.array([x0]))[0])) for t in ts]
    write_table(rc.out, "flow", ["t", "phi"], rows, rc.fmt)
    write_report(rc.out, {"command": "flow", "ok": True, "x0": x0,
                          "t_final": t_final, "n_rows": len(rows),
                          "mu0": measure_to_dict(m0),
                          "mu1": measure_to_dict(m1)})
    return 0


def _cmd_verify(rc: RunConfig) -> int:
    cfg = rc.build_config()
    m0 = parse_measure(_load_spec(rc.extra["mu0"], "--mu0"))
    m1 = parse_measure(_load_spec(rc.extra["mu1"], "--mu1"))
    field = build_velocity(m0, m1, seed=rc.seed_spec(), config=cfg)
    rep = verify_transport(field, m0, m1, n_push=rc.n + 1)
    write_report(rc.out, {"command": "verify", "ok": rep.passed,
                          "mu0": measure_to_dict(m0), "mu1": measure_to_dict(m1),
                          "verification": rep.to_dict()})
    return 0 if rep.passed else 1


def _resolve_example(rc: RunConfig) -> tuple[str, dict]:
    name = rc.extra["name"]
    kwargs = {}
    if name == "accumulating":
        if rc.ck in ("1", "c1"):
            name = "accumulating-c1"
        elif rc.ck in ("inf", "cinf"):
            name = "accumulating-cinf"
        else:
            raise InputError(
                f"example accumulating needs --ck 1 or inf, got {rc.ck!r}")
    if name == "affine":
        if rc.extra.get("alpha") is not None:
            kwargs["alpha"] = float(rc.extra["alpha"])
        if rc.extra.get("beta") is not None:
            kwargs["beta"] = float(rc.extra["beta"])
    return name, kwargs


def _cmd_example(rc: RunConfig) -> int:
    cfg = rc.build_config()
    name, kwargs = _resolve_example(rc)
    ex = get_example(name, **kwargs)
    field = ex.build(seed=rc.seed_spec(), config=cfg)
    T = field.map

    xs = _grid(ex.m0, rc.n, cfg)
    write_table(rc.out, "map", ["x", "T", "Tp"],
                zip(xs, np.asarray(T.forward(xs), dtype=float),
                    np.asarray(T.derivative(xs), dtype=float)), rc.fmt)
    xf = np.linspace(field.domain[0], field.domain[1], rc.n)
    write_table(rc.out, "field", ["x", "v"], zip(xf, field(xf)), rc.fmt)
    for tag, m in (("density0", ex.m0), ("density1", ex.m1)):
        xd = _grid(m, rc.n, cfg)
        write_table(rc.out, tag, ["x", "pdf"], zip(xd, m.pdf(xd)), rc.fmt)
    x0 = float(ex.m0.quantile(0.5))
    ts = np.linspace(0.0, 1.0, min(rc.n, _FLOW_ROWS_CAP) + 1)
    rows = [(t, float(flow_map(field, t, np.array([x0]))[0])) for t in ts]
    write_table(rc.out, "flow", ["t", "phi"], rows, rc.fmt)

    rep = verify_transport(field, ex.m0, ex.m1, n_push=rc.n + 1)
    write_report(rc.out, {"command": "example", "ok": rep.passed,
                          "example": name, "parameters": kwargs,
                          "description": ex.description,
                          "verification": rep.to_dict()})
    return 0 if rep.passed else 1


def _cmd_pathology(rc: RunConfig) -> int:
    variant = rc.extra.get("variant", "both")
    names = ("quadratic", "log_squared") if variant == "both" else (variant,)
    summary, ok = {}, True
    for v in names:
        cmap = build_counterexample(v)
        growth = probe_velocity_growth(cmap)
        write_table(rc.out, f"growth_{v}",
                    ["i", "alpha", "beta", "Tp", "P", "lower_bound"],
                    [(r["i"], r["alpha"], r["beta"], r["tprime"], r["product"],
                      r["lower_bound"]) for r in growth.rows], rc.fmt)
        dive = probe_non_integrability(cmap)
        write_table(rc.out, f"divergence_{v}",
                    ["m", "delta", "l1_partial", "increment", "l1_field",
                     "lower_bound", "anchor_speed", "clock_defect"],
                    [(r["m"], r["delta"], r["l1_partial"], r["increment"],
                      r["l1_field"], r["lower_bound"], r["anchor_speed"],
                      r["clock_defect"]) for r in dive.rows], rc.fmt)
        incs = [r["increment"] for r in dive.rows]
        l1_increasing = all(i > 0.0 for i in incs)
        # the finite-index threshold crossing is certified on the quadratic
        # gaps; the slower log-squared products stay monotone and bounded
        # below but need an astronomically deeper scan to reach the same mark
        crossing_ok = (growth.crossing_index is not None
                       if v == "quadratic" else True)
        v_ok = (growth.product_monotone and growth.bound_holds
                and crossing_ok
                and dive.anchor_speed_monotone and l1_increasing)
        ok = ok and v_ok
        summary[v] = {"ok": v_ok,
                      "crossing_index": growth.crossing_index,
                      "crossing_value": growth.crossing_value,
                      "i_scanned": growth.i_scanned,
                      "product_monotone": growth.product_monotone,
                      "bound_holds": growth.bound_holds,
                      "anchor_speed_monotone": dive.anchor_speed_monotone,
                      "l1_partial_increasing": l1_increasing,
                      "levels": list(dive.levels)}
    write_report(rc.out, {"command": "pathology", "ok": ok,
                          "variants": summary})
    return 0 if ok else 1


def _cmd_sudakov(rc: RunConfig) -> int:
    cfg = rc.build_config()
    m0 = parse_measure_nd(_load_spec(rc.extra["mu0"], "--mu0"))
    m1 = parse_measure_nd(_load_spec(rc.extra["mu1"], "--mu1"))
    family = decompose(m0, m1)
    field_nd = assemble_field(family, config=cfg)
    rep = verify_nd(field_nd, n_samples=rc.n, seed=rc.seed)
    width = max(len(a) for a in rep.per_ray_alphas) if rep.per_ray_alphas else 1
    header = ["ray"] + [f"alpha{k}" for k in range(width)] + ["w1"]
    rows = [[i, *alpha, w] for i, (alpha, w)
            in enumerate(zip(rep.per_ray_alphas, rep.per_ray_w1))]
    write_table(rc.out, "rays", header, rows, rc.fmt)
    write_report(rc.out, {"command": "sudakov", "ok": rep.ok,
                          "mu0": measure_nd_to_dict(m0),
                          "mu1": measure_nd_to_dict(m1),
                          "decomposition": family.describe(),
                          "verification": rep.to_dict()})
    return 0 if rep.ok else 1


_DISPATCH = {"map": _cmd_map, "field": _cmd_field, "flow": _cmd_flow,
             "verify": _cmd_verify, "example": _cmd_example,
             "pathology": _cmd_pathology, "sudakov": _cmd_sudakov}


def run(rc: RunConfig) -> int:
    """Execute one validated run configuration; returns the exit status."""
    os.makedirs(rc.out, exist_ok=True)
    return _DISPATCH[rc.command](rc)


# ======================================================================
# argument parsing
# ======================================================================

def _add_common(p: argparse.ArgumentParser, *, measures: bool = True):
    p.add_argument("--n", type=int, default=4096,
                   help="grid resolution; power of two >= 16 (default 4096)")
    p.add_argument("--tol-julia", type=float, default=DEFAULT_CONFIG.tol_julia,
                   help="relative residual bound for the propagation identity")
    p.add_argument("--tol-time", type=float, default=DEFAULT_CONFIG.tol_time,
                   help="absolute bound for clock/semigroup defects")
    p.add_argument("--seed-kind", default="affine",
                   choices=("constant", "affine", "hermite_ck"),
                   help="free profile on the seed interval (default affine)")
    p.add_argument("--ck", default="1",
                   help="junction order for hermite_ck seeds (0 or 1); for "
                        "'example accumulating' selects the 1 or inf variant")
    p.add_argument("--out", default=None,
                   help=f"output directory (default ${_OUT_ENV} or ./otflow-out)")
    p.add_argument("--format", default="csv", choices=("csv", "json"),
                   dest="fmt", help="table format (default csv)")
    if measures:
        p.add_argument("--mu0", required=True,
                       help="source measure: JSON spec or path to one")
        p.add_argument("--mu1", required=True,
                       help="target measure: JSON spec or path to one")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otflow",
        description="Autonomous velocity fields realizing monotone transport")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("map", help="monotone map table (x, T, Tp)")
    _add_common(p)

    p = sub.add_parser("field", help="velocity field table (x, v)")
    _add_common(p)
    p.add_argument("--eps", type=float, default=None,
                   help="build the shifted Lipschitz field within this "
                        "transport budget instead of the exact one")

    p = sub.add_parser("flow", help="trajectory table (t, phi) from one point")
    _add_common(p)
    p.add_argument("--x0", type=float, default=None,
                   help="starting point (default: source median)")
    p.add_argument("--t", type=float, default=1.0,
                   help="final time (default 1)")

    p = sub.add_parser("verify", help="build a pair and emit report.json")
    _add_common(p)

    p = sub.add_parser("example", help="run a named example end to end")
    p.add_argument("name", choices=sorted(set(example_names()) | {"accumulating"}),
                   help="registry entry")
    p.add_argument("--alpha", type=float, default=None,
                   help="map slope for the affine example")
    p.add_argument("--beta", type=float, default=None,
                   help="map offset for the affine example")
    _add_common(p, measures=False)

    p = sub.add_parser("pathology", help="counterexample growth/divergence tables")
    p.add_argument("--variant", default="both",
                   choices=("quadratic", "log_squared", "both"))
    _add_common(p, measures=False)

    p = sub.add_parser("sudakov", help="ray decomposition in d >= 2")
    _add_common(p)
    p.add_argument("--seed", type=int, default=20260823,
                   help="RNG seed for the Monte-Carlo check (recorded)")

    return parser


def _to_run_config(args: argparse.Namespace) -> RunConfig:
    out = args.out or os.environ.get(_OUT_ENV) or "otflow-out"
    extra = {k: v for k, v in vars(args).items()
             if k in ("mu0", "mu1", "x0", "t", "name", "alpha", "beta",
                      "variant")}
    return RunConfig(command=args.command, out=out, fmt=args.fmt, n=args.n,
                     tol_julia=args.tol_julia, tol_time=args.tol_time,
                     seed_kind=args.seed_kind, ck=str(args.ck),
                     eps=getattr(args, "eps", None),
                     seed=getattr(args, "seed", 20260823), extra=extra)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        rc = _to_run_config(args)
        return run(rc)
    except InputError as e:
        print(f"otflow: input error: {e}", file=sys.stderr)
        return 2
    except TransportError as e:
        print(f"otflow: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
