"""Command-line front end: ``opfbound solve | certify | batch``.

Reports go to stdout and diagnostics go to stderr.  JSON and CSV payloads
carry no wall-clock data unless ``--timings`` is given, so repeated runs are
byte-identical.

CSV columns, in order::

    case, model, k, l, s, feasibility_tol, optimality_tol, status, objective,
    gap_pct, rows, columns, iterations, error[, build_s, solve_s]
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from .lpcore import Status, solve
from .netdata import CaseParseError, CaseValidationError, Network, load_case
from .opfmodels import MODELS, ApproxConfig, build
from .verify import certify_cone, load_fixtures, optimality_gap

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3

COLUMNS = ("case", "model", "k", "l", "s", "feasibility_tol", "optimality_tol", "status",
           "objective", "gap_pct", "rows", "columns", "iterations", "error")
TIMING_COLUMNS = ("build_s", "solve_s")

REPORT_SCHEMA = {
    "type": "object",
    "required": list(COLUMNS),
    "properties": {
        "case": {"type": "string"},
        "model": {"enum": list(MODELS)},
        "k": {"type": "integer"},
        "l": {"type": "integer"},
        "s": {"type": "integer"},
        "feasibility_tol": {"type": "number"},
        "optimality_tol": {"type": "number"},
        "status": {"type": "string"},
        "objective": {"type": ["number", "null"]},
        "gap_pct": {"type": ["number", "null"]},
        "rows": {"type": ["integer", "null"]},
        "columns": {"type": ["integer", "null"]},
        "iterations": {"type": ["integer", "null"]},
        "error": {"type": "string"},
        "timings": {
            "type": "object",
            "properties": {"build_s": {"type": "number"}, "solve_s": {"type": "number"}},
        },
    },
}


@dataclass
class RunReport:
    case: str
    model: str
    k: int
    l: int
    s: int
    feasibility_tol: float
    optimality_tol: float
    status: str
    objective: float | None = None
    gap_pct: float | None = None
    rows: int | None = None
    columns: int | None = None
    iterations: int | None = None
    error: str = ""
    build_s: float = 0.0
    solve_s: float = 0.0

    def payload(self, timings: bool = False) -> dict:
        d = asdict(self)
        build_s, solve_s = d.pop("build_s"), d.pop("solve_s")
        if timings:
            d["timings"] = {"build_s": build_s, "solve_s": solve_s}
        return d

    def csv_row(self, timings: bool = False) -> list:
        d = asdict(self)
        cols = COLUMNS + (TIMING_COLUMNS if timings else ())
        return ["" if d[c] is None else _fmt(d[c]) for c in cols]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def _resolve_case(spec: str) -> Path:
    path = Path(spec)
    if path.exists():
        return path
    bundled = Path(__file__).parent / "data"
    for cand in (bundled / spec, bundled / f"{spec}.m", bundled / f"{spec}.json"):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"case file not found: {spec}")


def _case_name(net: Network, path: Path) -> str:
    return net.name or path.stem


def run_case(path, model: str, cfg: ApproxConfig, ac_ref: float | None = None,
             fixtures: dict | None = None) -> RunReport:
    """Build and solve one model; failures are recorded in the report, not raised."""
    path = Path(path)
    rep = RunReport(path.stem, model, cfg.k, cfg.l, cfg.s, cfg.feasibility, cfg.optimality, "Error")
    try:
        net = load_case(path)
        rep.case = _case_name(net, path)
        t0 = time.perf_counter()
        lp, _ = build(net, cfg, model)
        rep.build_s = time.perf_counter() - t0
    except (OSError, CaseParseError, CaseValidationError, ValueError) as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
        return rep
    rep.rows, rep.columns = lp.num_rows, lp.num_cols
    t0 = time.perf_counter()
    sol = solve(lp, cfg.tolerances())
    rep.solve_s = time.perf_counter() - t0
    rep.status = sol.status.value
    rep.iterations = sol.iterations
    if sol.status is Status.OPTIMAL:
        rep.objective = float(sol.objective)
        ref = ac_ref
        if ref is None and fixtures and rep.case in fixtures:
            ref = fixtures[rep.case].ac_objective
        if ref is not None:
            rep.gap_pct = optimality_gap(ref, rep.objective)
    else:
        rep.error = sol.message
    return rep


def _exit_code(rep: RunReport) -> int:
    if rep.status == Status.OPTIMAL.value:
        return EXIT_OK
    if rep.status in (Status.INFEASIBLE.value, Status.UNBOUNDED.value):
        return EXIT_INFEASIBLE
    if rep.status == "Error":
        return EXIT_USAGE
    return EXIT_NUMERICAL


def _render(reports: list[RunReport], fmt: str, timings: bool, single: bool = False) -> str:
    if fmt == "json":
        body = [r.payload(timings) for r in reports]
        return json.dumps(body[0] if single else body, indent=1) + "\n"
    header = list(COLUMNS + (TIMING_COLUMNS if timings else ()))
    rows = [r.csv_row(timings) for r in reports]
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return buf.getvalue()
    shown = [h for h in header if h not in ("feasibility_tol", "optimality_tol", "error")]
    pick = [header.index(h) for h in shown]
    table = [shown] + [[_short(r[i]) for i in pick] for r in rows]
    widths = [max(len(row[c]) for row in table) for c in range(len(shown))]
    lines = ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in table]
    return "\n".join(lines) + "\n"


def _short(v: str) -> str:
    try:
        f = float(v)
    except ValueError:
        return v
    if v.isdigit():
        return v
    return f"{f:.6g}"


def _config(args) -> ApproxConfig:
    tol = args.tol if args.tol is not None else 1e-8
    return ApproxConfig(k=args.k, l=args.l, s=args.s, feasibility=tol, optimality=tol)


def _fixtures() -> dict:
    try:
        return load_fixtures()
    except FileNotFoundError:
        return {}


def cmd_solve(args) -> int:
    try:
        path = _resolve_case(args.case)
        cfg = _config(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rep = run_case(path, args.model, cfg, args.ac_ref, _fixtures())
    if rep.error:
        print(f"{rep.case}: {rep.error}", file=sys.stderr)
    if rep.status == "Error":
        return EXIT_USAGE
    sys.stdout.write(_render([rep], args.out, args.timings, single=True))
    return _exit_code(rep)


def cmd_certify(args) -> int:
    if args.k < 2:
        print("error: k must be >= 2", file=sys.stderr)
        return EXIT_USAGE
    if args.samples < 1:
        print("error: samples must be positive", file=sys.stderr)
        return EXIT_USAGE
    cert = certify_cone(args.k, args.samples)
    print(cert.summary())
    return EXIT_OK if cert.passed else EXIT_INFEASIBLE


def _batch_job(job):
    path, model, cfg, fixtures = job
    return run_case(path, model, cfg, None, fixtures)


def cmd_batch(args) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        print(f"error: not a directory: {root}", file=sys.stderr)
        return EXIT_USAGE
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    bad = [m for m in models if m not in MODELS]
    if bad or not models:
        print(f"error: unknown model(s) {bad}; expected {MODELS}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _config(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cases = sorted(p for p in root.iterdir() if p.suffix.lower() in (".m", ".json"))
    fixtures = _fixtures()
    jobs = [(p, m, cfg, fixtures) for p in cases for m in models]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_batch_job, jobs))
    else:
        reports = [_batch_job(j) for j in jobs]
    reports.sort(key=lambda r: (r.case, r.model))
    for r in reports:
        if r.error:
            print(f"{r.case}/{r.model}: {r.error}", file=sys.stderr)
    sys.stdout.write(_render(reports, args.out, args.timings))
    return EXIT_OK


def _add_model_flags(p):
    p.add_argument("--k", type=int, default=16, help="cone approximation stages")
    p.add_argument("--l", type=int, default=20, help="tangent cuts per squared magnitude (LP-S)")
    p.add_argument("--s", type=int, default=20, help="tangent cuts per cosine (LP-S)")
    p.add_argument("--tol", type=float, default=None, help="feasibility and optimality tolerance")
    p.add_argument("--timings", action="store_true", help="include build/solve seconds")


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opfbound", description="LP lower bounds for AC OPF")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="bound one case")
    p.add_argument("--case", required=True, help="MATPOWER .m or network .json (or bundled name)")
    p.add_argument("--model", choices=MODELS, default="lp0")
    _add_model_flags(p)
    p.add_argument("--out", choices=("json", "csv", "table"), default="table")
    p.add_argument("--ac-ref", type=float, default=None, help="AC objective for the gap column")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="check the cone approximation accuracy")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("batch", help="bound every case in a directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--models", default="lp0,lps")
    _add_model_flags(p)
    p.add_argument("--out", choices=("json", "csv", "table"), default="csv")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_batch)
    return ap


def main(argv=None) -> int:
    ap = parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
