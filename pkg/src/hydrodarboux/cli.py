"""Command-line entry point: ``hydrodarboux <subcommand> <system> [options]``.

The system argument is a built-in name or a TOML file. Every subcommand
writes its reports into ``--out``; JSON reports are key-sorted and embed the
resolved configuration and the package version. Exit codes: 0 when all
gates pass, 2 when a gate fails or the mathematics refuses the request,
1 on usage or input errors.
"""

from __future__ import annotations

import argparse
import os
import sys as _sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .io import write_json

EXIT_OK, EXIT_INPUT, EXIT_GATE = 0, 1, 2


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    subcommand: str
    system: str
    out: str
    tol: float | None = None
    eps_hyp: float | None = None
    samples: int | None = None
    seed: int | None = None
    i: int | None = None
    j: int | None = None
    depth: int = 3
    phi: list = field(default_factory=list)
    grid: list | None = None
    base_u: list | None = None
    x0: float = 0.0
    t0: float = 0.0
    u_counts: int = 41
    interp: str = "linear"
    force: bool = False
    pair: list | None = None
    axis_data: list = field(default_factory=list)
    solution: str | None = None
    gate: float | None = None

    def validate(self):
        for name in ("tol", "eps_hyp"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.samples is not None and self.samples < 1:
            raise UsageError("--samples must be at least 1")
        if self.depth < 1:
            raise UsageError("--depth must be at least 1")
        if self.grid is not None:
            if len(self.grid) != 4:
                raise UsageError("--grid takes X,T,NX,NT")
            X, T, nx, nt = self.grid
            if not (X > 0 and T > 0) or nx != int(nx) or nt != int(nt) or nx < 3 or nt < 3:
                raise UsageError("--grid needs positive extents and at least 3 points per axis")
        if self.u_counts < 5:
            raise UsageError("--u-counts must be at least 5")
        if self.pair is not None and (len(self.pair) != 2 or self.pair[0] == self.pair[1]):
            raise UsageError("--pair takes two distinct indices I,J")
        if self.gate is not None and not self.gate > 0:
            raise UsageError("--gate must be positive")
        out = Path(self.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UsageError(f"cannot create output directory {out}: {exc}") from None
        if not os.access(out, os.W_OK):
            raise UsageError(f"output directory {out} is not writable")


def _floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hydrodarboux",
                                description="Darboux integrability tools for diagonal hydrodynamic-type systems.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("system", help="built-in name or TOML system file")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--tol", type=float)
    common.add_argument("--eps-hyp", type=float, dest="eps_hyp")
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    sub = p.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("diagnose", parents=[common], help="hyperbolicity, semihamiltonian and Darboux checks")

    lp = sub.add_parser("laplace", parents=[common], help="Laplace sequence search from index I")
    lp.add_argument("--i", type=int, required=True)
    lp.add_argument("--j", type=int, help="also report the single step for the pair (I, J)")
    lp.add_argument("--depth", type=int, default=3)

    sp = sub.add_parser("solve", parents=[common], help="end-to-end solution on an (x, t) lattice")
    sp.add_argument("--phi", action="append", default=[], help="driver phi_i(v), written in u1; repeat n times")
    sp.add_argument("--grid", type=_floats, required=True, help="X,T,NX,NT: x in [x0, x0+X], t in [t0, t0+T]")
    sp.add_argument("--base-u", type=_floats, dest="base_u", help="u at (x0, t0); default: domain centre")
    sp.add_argument("--x0", type=float, default=0.0)
    sp.add_argument("--t0", type=float, default=0.0)
    sp.add_argument("--u-counts", type=int, default=41, dest="u_counts")
    sp.add_argument("--interp", choices=["linear", "cubic"], default="linear")
    sp.add_argument("--force", action="store_true")
    sp.add_argument("--gate", type=float, help="residual gate (default 1e-5)")

    cp = sub.add_parser("congruence", parents=[common], help="conservation laws, focal charts, invariance")
    cp.add_argument("--pair", type=_ints, help="Laplace pair I,J (default 1,2)")
    cp.add_argument("--axis-data", action="append", default=[], dest="axis_data",
                    help="axis restrictions of one density as n expressions in u1 separated by ';'")
    cp.add_argument("--base-u", type=_floats, dest="base_u")
    cp.add_argument("--u-counts", type=int, default=21, dest="u_counts")
    cp.add_argument("--gate", type=float, help="invariance gate (default 1e-6)")

    vp = sub.add_parser("verify", parents=[common], help="PDE residual of a solution CSV")
    vp.add_argument("--solution", required=True)
    vp.add_argument("--gate", type=float, help="residual gate (default 1e-5)")
    return p


def _report(cfg: RunConfig, sys, body: dict, gates: dict) -> dict:
    return {
        "version": __version__,
        "config": {"run": asdict(cfg), "system": sys.config() if sys is not None else None},
        "gates": gates,
        "passed": all(g["passed"] for g in gates.values()),
        **body,
    }


def _gate(value, limit):
    v = float(value)
    return {"value": v, "limit": float(limit), "passed": bool(np.isfinite(v) and v <= limit)}


def _base_u(sys, given):
    if given is None:
        return [0.5 * (lo + hi) for lo, hi in sys.domain]
    if len(given) != sys.n:
        raise UsageError(f"--base-u needs {sys.n} values")
    for k, ((lo, hi), v) in enumerate(zip(sys.domain, given), 1):
        if not lo <= v <= hi:
            raise UsageError(f"--base-u coordinate {k} = {v} is outside [{lo}, {hi}]")
    return list(given)


# ---------------------------------------------------------------------------
# subcommands

def _diagnose(cfg, sys, out):
    from .system import full_report
    rep = full_report(sys)
    table = rep.coefficients
    hyp = rep.strictly_hyperbolic
    gates = {
        "strictly_hyperbolic": {"value": hyp.rejected / max(hyp.drawn, 1), "limit": 0.1,
                                "passed": bool(hyp.strictly_hyperbolic)},
        "coefficient_identity": _gate(table.identity_residual, sys.tol),
    }
    doc = _report(cfg, sys, {"report": rep.to_dict(),
                             "darboux_order_le1": rep.overall_darboux_order_le1}, gates)
    write_json(out / "diagnose.json", doc)
    return doc


def _laplace(cfg, sys, out):
    from .laplace import laplace_transform, sequence_terminates
    from .system import coefficient_table
    n = sys.n
    for name, v in (("--i", cfg.i), ("--j", cfg.j)):
        if v is not None and not 1 <= v <= n:
            raise UsageError(f"{name} must lie in 1..{n}")
    seq = sequence_terminates(sys, cfg.i, max_depth=cfg.depth)
    body = {"sequence": seq.to_dict(), "outcome": seq.outcome}
    gates = {}
    if cfg.j is not None:
        step = laplace_transform(sys, coefficient_table(sys), cfg.i, cfg.j)
        body["step"] = step.to_dict()
        gates["cross_form"] = _gate(step.residuals["cross_form"], 1e-7)
    doc = _report(cfg, sys, body, gates)
    write_json(out / "laplace.json", doc)
    return doc


def _solve(cfg, sys, out):
    from .hodograph import pipeline_solve, write_plot_script
    if len(cfg.phi) != sys.n:
        raise UsageError(f"give --phi exactly {sys.n} times")
    X, T, nx, nt = cfg.grid
    x = cfg.x0 + np.linspace(0.0, X, int(nx))
    t = cfg.t0 + np.linspace(0.0, T, int(nt))
    u0 = _base_u(sys, cfg.base_u)
    grid = pipeline_solve(sys, cfg.phi, (cfg.x0, cfg.t0, u0), x, t, force=cfg.force,
                          u_counts=cfg.u_counts, interp=cfg.interp)
    grid.write_csv(out / "solution.csv")
    t_show = sorted({float(t[0]), float(t[len(t) // 2]), float(t[-1])})
    write_plot_script(out / "plot_solution.py", "solution.csv", sys.n, t_show)
    limit = cfg.gate or 1e-5
    summary = {
        "route": grid.meta.get("route"),
        "max_residual": grid.max_residual,
        "converged": int(grid.converged.sum()),
        "points": int(grid.converged.size),
        "singular": int(grid.singular.sum()),
        "meta": grid.meta,
    }
    doc = _report(cfg, sys, {"summary": summary},
                  {"pde_residual": _gate(grid.max_residual, limit)})
    write_json(out / "solve.json", doc)
    return doc


def _default_axis_data(n, base):
    # pair k: N = u^k - b_k on the k-th axis and 0 on the others
    out = []
    for k in range(n):
        out.append(["u1 - %r" % float(base[k]) if i == k else "0" for i in range(n)])
    return out


def _congruence(cfg, sys, out):
    from .congruence import (focal_chart, laplace_transform_congruence, pencil_defect,
                             solve_density, verify_speed_invariance, write_mesh)
    from .hodograph import _axis_through
    from .system import check_darboux_order0, coefficient_table
    n = sys.n
    i, j = cfg.pair or (1, 2)
    if not (1 <= i <= n and 1 <= j <= n):
        raise UsageError(f"--pair indices must lie in 1..{n}")
    u0 = _base_u(sys, cfg.base_u)
    axes = [_axis_through(lo, hi, cfg.u_counts, v) for (lo, hi), v in zip(sys.domain, u0)]
    if cfg.axis_data:
        data = [s.split(";") for s in cfg.axis_data]
        if len(data) != n or any(len(d) != n for d in data):
            raise UsageError(f"give --axis-data {n} times, each with {n} ';'-separated expressions")
    else:
        data = _default_axis_data(n, u0)
    table = coefficient_table(sys)
    pairs = []
    for k, d in enumerate(data, 1):
        p = solve_density(sys, table, d, axes, tuple(u0))
        p.write(out / f"pair_{k}")
        pairs.append(p)
    charts = {}
    for m in range(1, n + 1):
        ch = focal_chart(sys, pairs, m)
        ch.write_csv(out / f"chart_{m}.csv")
        if n == 2:
            write_mesh(ch, out / f"chart_{m}.obj")
        entry = {"incidence": ch.incidence, "masked": int(ch.mask.sum())}
        if check_darboux_order0(sys, m).flag:
            entry["pencil_defect"] = pencil_defect(ch)
        charts[str(m)] = entry
    bar = laplace_transform_congruence(sys, table, pairs, i, j)
    for k, p in enumerate(bar, 1):
        p.write(out / f"pair_{k}_transformed")
    inv = verify_speed_invariance(sys, table, pairs, i, j, transformed=bar)
    inv.pop("extracted")
    inv.pop("points")
    body = {"pairs": [p.residuals for p in pairs], "charts": charts, "invariance": inv}
    gates = {
        "incidence": _gate(max(c["incidence"] for c in charts.values()), sys.tol),
        "speed_invariance": _gate(inv["max_speed_error"], cfg.gate or 1e-6),
    }
    doc = _report(cfg, sys, body, gates)
    write_json(out / "congruence.json", doc)
    return doc


def _verify(cfg, sys, out):
    from .grids import SolutionGrid
    from .hodograph import verify_solution
    path = Path(cfg.solution)
    if not path.is_file():
        raise UsageError(f"solution file {path} not found")
    grid = SolutionGrid.from_csv(path)
    if grid.n != sys.n:
        raise UsageError(f"{path} has {grid.n} components, the system has {sys.n}")
    res = verify_solution(sys, grid)
    doc = _report(cfg, sys, {"result": res.to_dict()},
                  {"pde_residual": _gate(res.max_residual, cfg.gate or 1e-5)})
    write_json(out / "verify.json", doc)
    return doc


COMMANDS = {"diagnose": _diagnose, "laplace": _laplace, "solve": _solve,
            "congruence": _congruence, "verify": _verify}


def run(argv=None) -> int:
    from .congruence import DependentDensities, NotConservationLaw
    from .congruence import PrereqViolated as CongruencePrereq
    from .expr import ParseError
    from .hodograph import NotDarbouxIntegrable, UnsupportedRoute
    from .laplace import CollidingCoefficients, DegenerateLaplace, PrereqViolated
    from .system import NotStrictlyHyperbolic, load_system

    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    cfg = RunConfig(**{k: v for k, v in vars(ns).items()})
    out = Path(cfg.out)
    try:
        cfg.validate()
        sys = load_system(cfg.system, tol=cfg.tol, eps_hyp=cfg.eps_hyp,
                          samples=cfg.samples, seed=cfg.seed)
    except (UsageError, ValueError, OSError, ParseError) as exc:
        print(f"hydrodarboux: error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    try:
        doc = COMMANDS[cfg.subcommand](cfg, sys, out)
    except UsageError as exc:
        print(f"hydrodarboux: error: {exc}", file=_sys.stderr)
        return EXIT_INPUT
    except (NotStrictlyHyperbolic, NotDarbouxIntegrable, UnsupportedRoute, PrereqViolated,
            CongruencePrereq, DegenerateLaplace, CollidingCoefficients, DependentDensities,
            NotConservationLaw, ArithmeticError) as exc:
        write_json(out / f"{cfg.subcommand}.json",
                   _report(cfg, sys, {"error": {"type": type(exc).__name__, "message": str(exc)}},
                           {"completed": {"value": 1.0, "limit": 0.0, "passed": False}}))
        print(f"hydrodarboux: {type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_GATE
    status = "pass" if doc["passed"] else "FAIL"
    print(f"{cfg.subcommand} {sys.name}: {status} -> {out}")
    return EXIT_OK if doc["passed"] else EXIT_GATE


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
