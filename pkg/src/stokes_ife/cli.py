"""
Command-line driver: single solves, convergence studies and self-checks.

Exit codes: 0 success, 1 usage error, 2 geometry error, 3 solver error,
4 output error, 5 verification failures.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass

from .analysis import ConvergenceReport, StudyConfig, run_study, solve_problem
from .assembly import BOUNDARY_PENALTIES, DEFAULT_BOUNDARY_PENALTY, DEFAULT_PENALTY_WEIGHT, PENALTY_WEIGHTS
from .exceptions import GeometryError, InvalidParams, SingularMatrix, SingularSystem

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_GEOMETRY = 2
EXIT_SOLVER = 3
EXIT_IO = 4
EXIT_VERIFY = 5

MODES = ("solve", "study", "verify")
FORMATS = ("table", "csv", "json", "plot")
DEFAULT_N = (8, 16, 32, 64)
CSV_COLUMNS = ("N", "eu_l2", "eu_l2_rate", "eu_h1", "eu_h1_rate", "ep_l2", "ep_l2_rate")

# JSON output of study/solve runs
REPORT_SCHEMA = {
    "type": "object",
    "required": ["params", "rows"],
    "properties": {
        "params": {
            "type": "object",
            "required": ["mu_plus", "mu_minus", "delta", "eta", "r0"],
            "properties": {
                "mu_plus": {"type": "number", "exclusiveMinimum": 0},
                "mu_minus": {"type": "number", "exclusiveMinimum": 0},
                "delta": {"enum": [-1, 1]},
                "eta": {"type": "number", "minimum": 0},
                "r0": {"type": "number"},
                "penalty_weight": {"enum": list(PENALTY_WEIGHTS)},
                "boundary_penalty": {"enum": list(BOUNDARY_PENALTIES)},
            },
        },
        "rows": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["n", "eu_l2", "eu_h1", "ep_l2", "eu_l2_rate", "eu_h1_rate", "ep_l2_rate"],
                "properties": {
                    "n": {"type": "integer", "minimum": 2},
                    "eu_l2": {"type": "number", "minimum": 0},
                    "eu_h1": {"type": "number", "minimum": 0},
                    "ep_l2": {"type": "number", "minimum": 0},
                    "eu_l2_rate": {"type": ["number", "null"]},
                    "eu_h1_rate": {"type": ["number", "null"]},
                    "ep_l2_rate": {"type": ["number", "null"]},
                    "residual": {"type": ["number", "null"]},
                    "seconds": {"type": ["number", "null"]},
                },
            },
        },
    },
}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    mode: str = "study"
    n_list: tuple = DEFAULT_N
    mu_plus: float = 5.0
    mu_minus: float = 1.0
    delta: int = -1
    eta: float = 0.0
    r0: float = 0.5
    out: str | None = None
    fmt: str = "table"
    penalty_weight: str = DEFAULT_PENALTY_WEIGHT
    boundary_penalty: str = DEFAULT_BOUNDARY_PENALTY
    cases: int = 200
    seed: int = 0
    dump_mesh: str | None = None

    def study_config(self) -> StudyConfig:
        return StudyConfig(
            n_list=tuple(self.n_list),
            mu_plus=self.mu_plus,
            mu_minus=self.mu_minus,
            delta=self.delta,
            eta=self.eta,
            r0=self.r0,
            penalty_weight=self.penalty_weight,
            boundary_penalty=self.boundary_penalty,
        )


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _n_list(text: str) -> tuple:
    try:
        values = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty N list")
    return values


def _build_parser() -> _Parser:
    p = _Parser(prog="stokes-ife", description="Immersed CR-P0 solver for a Stokes interface problem.")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--n", type=_n_list, help="mesh size, or a comma separated list for studies")
    p.add_argument("--mu-plus", type=float)
    p.add_argument("--mu-minus", type=float)
    p.add_argument("--delta", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--r0", type=float)
    p.add_argument("--format", dest="fmt", choices=FORMATS)
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--config", help="file with key=value lines; flags take precedence")
    p.add_argument("--penalty-weight", choices=PENALTY_WEIGHTS)
    p.add_argument("--boundary-penalty", choices=BOUNDARY_PENALTIES)
    p.add_argument("--cases", type=int, help="random cases per verify suite")
    p.add_argument("--seed", type=int)
    p.add_argument("--dump-mesh", help="write the mesh and cut data of the first N to this file")
    return p


_FILE_KEYS = {
    "mode": str,
    "n": _n_list,
    "mu_plus": float,
    "mu_minus": float,
    "delta": int,
    "eta": float,
    "r0": float,
    "format": str,
    "out": str,
    "penalty_weight": str,
    "boundary_penalty": str,
    "cases": int,
    "seed": int,
    "dump_mesh": str,
}


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from exc
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FILE_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _FILE_KEYS[key](value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return out


def _validate(cfg: RunConfig) -> RunConfig:
    if cfg.mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    if cfg.fmt not in FORMATS:
        raise UsageError(f"format must be one of {FORMATS}")
    for n in cfg.n_list:
        if n < 2 or n % 2:
            raise UsageError(f"N must be even and at least 2, got {n}")
    for name in ("mu_plus", "mu_minus"):
        v = getattr(cfg, name)
        if not (math.isfinite(v) and v > 0.0):
            raise UsageError(f"{name.replace('_', '-')} must be positive, got {v}")
    if cfg.delta not in (-1, 1):
        raise UsageError(f"delta must be -1 or 1, got {cfg.delta}")
    if not (math.isfinite(cfg.eta) and cfg.eta >= 0.0):
        raise UsageError(f"eta must be non-negative, got {cfg.eta}")
    if not (math.isfinite(cfg.r0) and cfg.r0 > 0.0):
        raise UsageError(f"r0 must be positive, got {cfg.r0}")
    if cfg.penalty_weight not in PENALTY_WEIGHTS:
        raise UsageError(f"penalty-weight must be one of {PENALTY_WEIGHTS}")
    if cfg.boundary_penalty not in BOUNDARY_PENALTIES:
        raise UsageError(f"boundary-penalty must be one of {BOUNDARY_PENALTIES}")
    if cfg.cases < 1:
        raise UsageError("cases must be positive")
    return cfg


def parse_args(argv=None) -> RunConfig:
    """Flags override values from ``--config``, which override the defaults."""
    ns = _build_parser().parse_args(argv)
    values = read_config_file(ns.config) if ns.config else {}
    flags = {k: v for k, v in vars(ns).items() if v is not None and k != "config"}
    if "fmt" in flags:
        flags["format"] = flags.pop("fmt")
    values.update(flags)
    if "n" in values:
        values["n_list"] = values.pop("n")
    if "format" in values:
        values["fmt"] = values.pop("format")
    return _validate(RunConfig(**values))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _sci(x) -> str:
    return f"{x:.3E}"


def _rate(x) -> str:
    return "" if x is None else f"{x:.2f}"


def format_table(report: ConvergenceReport) -> str:
    """Rows in the layout ``N & e & rate & e & rate & e & rate``."""
    header = "N & |e_u|_L2 & rate & |e_u|_H1 & rate & |e_p|_L2 & rate"
    lines = [header]
    for r in report.rows:
        cells = [str(r.n), _sci(r.eu_l2), _rate(r.eu_l2_rate), _sci(r.eu_h1), _rate(r.eu_h1_rate), _sci(r.ep_l2), _rate(r.ep_l2_rate)]
        lines.append(" & ".join(cells))
    return "\n".join(lines) + "\n"


def format_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow(
            [
                r.n,
                repr(r.eu_l2),
                "" if r.eu_l2_rate is None else repr(r.eu_l2_rate),
                repr(r.eu_h1),
                "" if r.eu_h1_rate is None else repr(r.eu_h1_rate),
                repr(r.ep_l2),
                "" if r.ep_l2_rate is None else repr(r.ep_l2_rate),
            ]
        )
    return buf.getvalue()


def format_json(report: ConvergenceReport) -> str:
    return json.dumps(report.to_dict(), indent=2) + "\n"


def format_plot(report: ConvergenceReport) -> str:
    """A gnuplot script with inline data drawing the three errors against N on log axes."""
    lines = [
        "# errors against N; run with: gnuplot -p <file>",
        "$errors << EOD",
        "# N eu_l2 eu_h1 ep_l2",
    ]
    for r in report.rows:
        lines.append(f"{r.n} {r.eu_l2:.6e} {r.eu_h1:.6e} {r.ep_l2:.6e}")
    p = report.params
    lines += [
        "EOD",
        "set logscale xy",
        "set xlabel 'N'",
        "set ylabel 'error'",
        f"set title 'mu+ = {p.get('mu_plus')}, mu- = {p.get('mu_minus')}'",
        "set key bottom left",
        "plot $errors using 1:2 with linespoints title 'velocity L2', \\",
        "     $errors using 1:3 with linespoints title 'velocity broken H1', \\",
        "     $errors using 1:4 with linespoints title 'pressure L2'",
    ]
    return "\n".join(lines) + "\n"


_FORMATTERS = {"table": format_table, "csv": format_csv, "json": format_json, "plot": format_plot}


def emit(report: ConvergenceReport, fmt: str = "table") -> str:
    if not report.rows:
        raise ValueError("empty report")
    if fmt not in _FORMATTERS:
        raise ValueError(f"unknown format {fmt!r}")
    return _FORMATTERS[fmt](report)


def _write(text: str, path: str | None, stdout) -> None:
    if path is None:
        stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------


def _emit_report(report, cfg: RunConfig, stdout) -> None:
    if cfg.fmt == "plot":
        # the table goes to stdout, the plot script to --out (or after the table)
        stdout.write(format_table(report))
        _write(format_plot(report), cfg.out, stdout)
    else:
        _write(emit(report, cfg.fmt), cfg.out, stdout)


def _dump_mesh(cfg: RunConfig, result) -> None:
    try:
        with open(cfg.dump_mesh, "w", encoding="utf-8") as fh:
            result.mesh.dump(fh, {"cuts": result.cuts.dump_lines()})
    except OSError as exc:
        raise OSError(f"cannot write {cfg.dump_mesh}: {exc.strerror}") from exc


def run_solve(cfg: RunConfig, stdout, stderr) -> int:
    sc = cfg.study_config()
    n = cfg.n_list[0]
    res = solve_problem(
        n, sc.mu_plus, sc.mu_minus, sc.delta, sc.eta, sc.r0, sc.error_degree, sc.penalty_weight, sc.boundary_penalty
    )
    if cfg.dump_mesh:
        _dump_mesh(cfg, res)
    report = ConvergenceReport(params={k: v for k, v in asdict(sc).items() if k not in ("n_list", "error_degree")})
    report.add(n, res.errors, res.field.residual, res.seconds)
    stderr.write(
        f"N={n}: {res.space.dofmap.size} unknowns, {len(res.space.bases)} interface elements, "
        f"residual {res.field.residual:.2e}, {res.seconds:.2f} s\n"
    )
    _emit_report(report, cfg, stdout)
    return EXIT_OK


def run_study_mode(cfg: RunConfig, stdout, stderr) -> int:
    def progress(row):
        stderr.write(f"N={row.n}: eu_l2={row.eu_l2:.3e} eu_h1={row.eu_h1:.3e} ep_l2={row.ep_l2:.3e} ({row.seconds:.1f} s)\n")

    if cfg.dump_mesh:
        sc = cfg.study_config()
        _dump_mesh(cfg, solve_problem(cfg.n_list[0], sc.mu_plus, sc.mu_minus, sc.delta, sc.eta, sc.r0))
    report = run_study(cfg.study_config(), progress)
    _emit_report(report, cfg, stdout)
    return EXIT_OK


def run_verify(cfg: RunConfig, stdout, stderr) -> int:
    from .verify import run_all

    start = time.perf_counter()
    results = run_all(cfg.cases, cfg.seed)
    lines = [r.line() for r in results]
    for r in results:
        lines += [f"  {m}" for m in r.messages]
    passed = sum(r.passed for r in results)
    failed = sum(r.failed for r in results)
    lines.append(f"total: {passed} passed, {failed} failed ({time.perf_counter() - start:.1f} s)")
    _write("\n".join(lines) + "\n", cfg.out, stdout)
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERIFY


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    runner = {"solve": run_solve, "study": run_study_mode, "verify": run_verify}[cfg.mode]
    try:
        return runner(cfg, stdout, stderr)
    except InvalidParams as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except GeometryError as exc:
        stderr.write(f"geometry error: {exc}\n")
        return EXIT_GEOMETRY
    except (SingularMatrix, SingularSystem) as exc:
        stderr.write(f"solver error: {exc}\n")
        return EXIT_SOLVER
    except OSError as exc:
        stderr.write(f"output error: {exc}\n")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
