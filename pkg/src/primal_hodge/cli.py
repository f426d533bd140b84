"""Command-line driver: ``primal-hodge {convergence,equivalence,diagnose,mesh}``.

Exit codes: 0 success, 1 a numerical check failed, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from .fespace_v import build_vspace, expected_dimension
from .mesh import DOMAINS, MeshError, format_mesh, level_mesh, read_mesh, refine, validate
from .solver import (
    DEFAULT_QUAD,
    SOLVER_TOL,
    SolverError,
    assemble_primal,
    cell_means,
    convergence_study,
    equivalence_check,
    poincare_estimate,
    problem_for,
    successive_rates,
)
from .whitney import discrete_harmonic_forms, hodge_decomposition_check

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
EQUIVALENCE_TOL = 1e-8

CONVERGENCE_HEADER = ["level", "h", "dofs", "e0", "erot", "ediv", "rate0", "raterot", "ratediv", "seconds"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    domains: list[str]
    levels: range
    quad: int = DEFAULT_QUAD
    tol: float | None = None
    out: Path | None = None
    format: str = "csv"
    timing: bool = False


def parse_levels(text: str) -> range:
    """``"A..B"`` or a single level ``"A"``; levels start at 2."""
    lo, sep, hi = text.partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError as exc:
        raise ConfigError(f"levels must look like A..B, got {text!r}") from exc
    if a < 2:
        raise ConfigError("levels start at 2")
    if b < a:
        raise ConfigError(f"empty level range {text!r}")
    return range(a, b + 1)


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{n}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


CONFIG_KEYS = {"domain", "levels", "quad", "tol", "out", "format", "timing"}


def build_config(args: argparse.Namespace, default_levels: str, all_domains: bool) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    unknown = set(file_values) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def pick(name, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        return file_values.get(name, default)

    domain = pick("domain", "all" if all_domains else "unit_square")
    domains = list(DOMAINS) if domain == "all" else [domain]
    for d in domains:
        if d not in DOMAINS:
            raise ConfigError(f"unknown domain {d!r}; expected one of {', '.join(DOMAINS)} or all")
    try:
        quad = int(pick("quad", DEFAULT_QUAD))
        tol = pick("tol", None)
        tol = None if tol is None else float(tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if quad < 2:
        raise ConfigError("quadrature degree must be at least 2")
    if tol is not None and not tol > 0:
        raise ConfigError("tolerance must be positive")
    fmt = pick("format", "csv")
    if fmt not in ("csv", "markdown"):
        raise ConfigError(f"format must be csv or markdown, got {fmt!r}")
    timing = pick("timing", False)
    if isinstance(timing, str):
        timing = timing.lower() in ("1", "true", "yes", "on")
    out = pick("out", None)
    return RunConfig(
        domains=domains,
        levels=parse_levels(str(pick("levels", default_levels))),
        quad=quad,
        tol=tol,
        out=Path(out) if out else None,
        format=fmt,
        timing=bool(timing),
    )


# ---------------------------------------------------------------------------
# report writing
# ---------------------------------------------------------------------------

def fmt_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return f"{float(v):.12g}"


def render(header: list[str], rows: list[list], fmt: str) -> str:
    cells = [[fmt_value(v) if not isinstance(v, str) else v for v in row] for row in rows]
    if fmt == "csv":
        return "\n".join([",".join(header)] + [",".join(r) for r in cells]) + "\n"
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in cells]
    return "\n".join(lines) + "\n"


def emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_convergence(cfg: RunConfig) -> int:
    if len(cfg.levels) < 2:
        raise ConfigError("a convergence study needs at least two levels")
    rows = []
    for domain in cfg.domains:
        study = convergence_study(
            domain,
            cfg.levels,
            cfg.quad,
            cfg.tol or SOLVER_TOL,
            clock=time.perf_counter if cfg.timing else None,
        )
        e0 = [r.errors.l2 for r in study.rows]
        er = [r.errors.rot for r in study.rows]
        ed = [r.errors.div for r in study.rows]
        rates = zip(successive_rates(e0), successive_rates(er), successive_rates(ed))
        for r, (r0, rr, rd) in zip(study.rows, rates):
            seconds = r.seconds if cfg.timing else None
            rows.append([r.level, r.h, r.dofs, r.errors.l2, r.errors.rot, r.errors.div, r0, rr, rd, seconds])
    emit(render(CONVERGENCE_HEADER, rows, cfg.format), cfg.out)
    return EXIT_OK


def cmd_equivalence(cfg: RunConfig) -> int:
    tol = cfg.tol or EQUIVALENCE_TOL
    header = ["domain", "level", "theta", "codifferential", "rot", "cell_mean", "pass"]
    rows, ok = [], True
    for domain in cfg.domains:
        forcing = problem_for(domain).forcing
        for level in cfg.levels:
            mesh = level_mesh(domain, level)
            report = equivalence_check(mesh, cell_means(mesh, forcing, cfg.quad))
            passed = report.ok(tol)
            ok &= passed
            res = report.residuals
            rows.append([domain, level, res["theta"], res["codifferential"], res["rot"], res["cell_mean"],
                         "yes" if passed else "no"])
    emit(render(header, rows, cfg.format), cfg.out)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_diagnose(cfg: RunConfig) -> int:
    header = [
        "domain", "level", "edges", "div_functions", "dim_v", "expected_dim",
        "harmonic_dim", "betti1", "hodge_rank_sum", "hodge_orthogonality", "poincare",
    ]
    rows, ok = [], True
    for domain in cfg.domains:
        mesh = level_mesh(domain, cfg.levels[0])
        for i, level in enumerate(cfg.levels):
            if i:
                mesh = refine(mesh)
            space = build_vspace(mesh)
            harmonic = discrete_harmonic_forms(mesh)
            hodge = hodge_decomposition_check(mesh, harmonic)
            b1 = 1 - mesh.euler_characteristic()
            system = assemble_primal(mesh, space, harmonic, lambda x: 0.0 * x, cfg.quad)
            expected = expected_dimension(mesh)
            ok &= len(harmonic) == b1 and space.ndofs == expected and hodge.ok()
            rows.append([
                domain, level, mesh.num_edges, space.num_div, space.ndofs, expected,
                len(harmonic), b1, hodge.rank_sum, hodge.max_orthogonality, poincare_estimate(system),
            ])
    emit(render(header, rows, cfg.format), cfg.out)
    if not ok:
        print("check failed: harmonic dimension, basis count or Hodge ranks", file=sys.stderr)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_mesh(args: argparse.Namespace) -> int:
    if args.input:
        try:
            mesh = read_mesh(args.input)
        except (OSError, MeshError) as exc:
            print(f"invalid mesh: {exc}", file=sys.stderr)
            return EXIT_CHECK
    else:
        if args.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {args.domain!r}")
        levels = parse_levels(args.levels or "2")
        if len(levels) != 1:
            raise ConfigError("mesh takes a single level")
        mesh = level_mesh(args.domain, levels[0])
    problems = validate(mesh)
    for p in problems:
        print(p, file=sys.stderr)
    if not args.input:
        emit(format_mesh(mesh), Path(args.out) if args.out else None)
    else:
        print(f"vertices {mesh.num_vertices} edges {mesh.num_edges} triangles {mesh.num_triangles} "
              f"betti1 {1 - mesh.euler_characteristic()}")
    return EXIT_CHECK if problems else EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, domain_help: str) -> None:
    p.add_argument("--domain", help=domain_help)
    p.add_argument("--levels", help="refinement levels A..B (A >= 2)")
    p.add_argument("--quad", type=int, help=f"quadrature degree (default {DEFAULT_QUAD})")
    p.add_argument("--tol", type=float, help="tolerance")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=["csv", "markdown"])
    p.add_argument("--config", help="key=value config file; flags take precedence")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="primal-hodge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="error table over refinement levels")
    _common(p, "unit_square (default), lshape, square_with_hole or all")
    p.add_argument("--timing", action="store_true", default=None, help="fill the seconds column")

    p = sub.add_parser("equivalence", help="primal versus mixed identities for piecewise-constant data")
    _common(p, "domain or all (default)")

    p = sub.add_parser("diagnose", help="harmonic dimensions, Hodge ranks, basis counts, Poincare estimates")
    _common(p, "domain or all (default)")

    p = sub.add_parser("mesh", help="emit a level mesh, or validate a mesh file")
    p.add_argument("--domain", default="unit_square")
    p.add_argument("--levels", help="single level (default 2)")
    p.add_argument("--out")
    p.add_argument("--input", help="validate this mesh file instead")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        if args.command == "mesh":
            return cmd_mesh(args)
        if args.command == "convergence":
            return cmd_convergence(build_config(args, "2..5", all_domains=False))
        if args.command == "equivalence":
            return cmd_equivalence(build_config(args, "2..3", all_domains=True))
        return cmd_diagnose(build_config(args, "2..4", all_domains=True))
    except (ConfigError, MeshError) as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"{parser.prog}: solver failure: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
