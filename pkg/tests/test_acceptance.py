"""Acceptance criteria 1-11 at their stated tolerances.

Each test prints and records one PASS/FAIL line; the lines are repeated in the
terminal summary. Run standalone with ``python3 tests/test_acceptance.py``.
"""
import json
import math
import shutil
import sys
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from hydrodarboux.cli import run
from hydrodarboux.congruence import ConservationPair, reciprocal_speeds, verify_speed_invariance
from hydrodarboux.expr import Binary, Const, DomainError, Unary, Var, differentiate, evaluate, parse, simplify
from hydrodarboux.hodograph import pipeline_solve, verify_solution
from hydrodarboux.integrate import integrate_orbit_solution, lame_coefficients, lame_function, p_for_b_zero
from hydrodarboux.laplace import equivalence_verdicts, laplace_transform
from hydrodarboux.system import (
    BUILTINS, DiagonalSystem, check_semihamiltonian, coefficient_table, load_system, sample_points,
)

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # standalone run
    ACCEPTANCE_LINES = {}


def record(num, ok, detail):
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[num] = line
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. derivative oracle

UNARY = ["sin", "cos", "exp", "tanh", "neg", "log", "sqrt"]
BINARY = ["add", "sub", "mul", "div"]


def random_expr(rng, depth, n=3):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.7:
            return Var(int(rng.integers(1, n + 1)))
        return Const(float(rng.choice([0.5, 1.0, 2.0, 3.0, -1.0])))
    r = rng.random()
    if r < 0.35:
        return Unary(UNARY[rng.integers(len(UNARY))], random_expr(rng, depth - 1, n))
    if r < 0.85:
        return Binary(BINARY[rng.integers(len(BINARY))], random_expr(rng, depth - 1, n),
                      random_expr(rng, depth - 1, n))
    return Binary("pow", random_expr(rng, depth - 1, n), Const(float(rng.choice([2.0, 3.0, -1.0, 0.5]))))


def mp_eval(e, p):
    """Independent 50-digit evaluation of an expression tree."""
    if isinstance(e, Const):
        return mpmath.mpf(e.value)
    if isinstance(e, Var):
        return p[e.index - 1]
    if isinstance(e, Unary):
        a = mp_eval(e.arg, p)
        if e.op == "neg":
            return -a
        if e.op in ("log", "sqrt") and a <= 0:
            raise DomainError(e.op, e)
        return getattr(mpmath, e.op)(a)
    a, b = mp_eval(e.left, p), mp_eval(e.right, p)
    if e.op == "pow":
        if a < 0 and b != int(b) or a == 0 and b < 0:
            raise DomainError("pow", e)
        return a ** b
    if e.op == "div":
        if b == 0:
            raise DomainError("div", e)
        return a / b
    return {"add": a + b, "sub": a - b, "mul": a * b}[e.op]


def central_difference(e, p, k, h=mpmath.mpf("1e-20")):
    with mpmath.workdps(50):
        q = [mpmath.mpf(v) for v in p]
        hi, lo = list(q), list(q)
        hi[k - 1] += h
        lo[k - 1] -= h
        return float((mp_eval(e, hi) - mp_eval(e, lo)) / (2 * h))


def test_criterion_01_derivative_oracle():
    rng = np.random.default_rng(20240601)
    cases, worst, drawn = 0, 0.0, 0
    while cases < 1000:
        drawn += 1
        e = random_expr(rng, 4)
        p = [float(v) for v in rng.uniform(0.3, 2.0, 3)]
        k = int(rng.integers(1, 4))
        try:
            dv = evaluate(differentiate(e, k, 3), p)
            fd = central_difference(e, p, k)
            fv = evaluate(e, p)
        except (DomainError, OverflowError, ZeroDivisionError):
            continue
        if not all(map(math.isfinite, (dv, fd, fv))) or max(abs(dv), abs(fv)) > 1e4:
            continue
        cases += 1
        worst = max(worst, abs(dv - fd) / max(1.0, abs(dv)))
    record(1, worst <= 1e-6, f"derivative oracle: {cases} cases ({drawn} drawn), max rel err {worst:.2e} <= 1e-6")


# ---------------------------------------------------------------------------
# 2. coefficient identity

def test_criterion_02_coefficient_identity():
    worst = {}
    for name in sorted(BUILTINS):
        s = load_system(name, samples=200)
        assert len(sample_points(s)) >= 200
        worst[name] = coefficient_table(s).identity_residual
    m = max(worst.values())
    record(2, m <= 1e-9, f"coefficient identity on {len(worst)} built-ins at 200 samples: max scaled residual {m:.2e} <= 1e-9")


# ---------------------------------------------------------------------------
# 3. semihamiltonian gate

def test_criterion_03_semihamiltonian():
    good = check_semihamiltonian(load_system("shifted3"))
    bad = check_semihamiltonian(load_system("nonsemiham3"))
    ok = good.flag and good.max_residual <= 1e-10 and not bad.flag and bad.witness is not None
    record(3, ok, f"semihamiltonian: shifted3 residual {good.max_residual:.1e} <= 1e-10; "
                  f"nonsemiham3 fails at witness {bad.witness}")


# ---------------------------------------------------------------------------
# 4. equivalence battery

BATTERY = [
    ("shifted3", 1), ("shifted3", 2), ("shifted3", 3), ("recip2", 1),
    ((["u1^2 + u2", "0"], [(1, 2), (1, 2)]), 1),
    ((["exp(u2) + u1", "0"], [(0, 1), (0, 1)]), 1),
    ("lindeg2", 1), ("lindeg2", 2), ("ratio2", 1),
]


def test_criterion_04_equivalence_battery():
    in_scope, agreed, notes = 0, 0, []
    ok = True
    for spec, i in BATTERY:
        s = load_system(spec) if isinstance(spec, str) else DiagonalSystem.from_strings(*spec)
        v = equivalence_verdicts(s, i)
        if v.in_scope:
            in_scope += 1
            agreed += v.agree
            ok &= v.agree
            if s.name == "shifted3":
                ok &= v.laplace is False and v.lemma is False and v.oracle is False
        else:
            # b = 0 instances: the Laplace step is undefined; the other two verdicts must still agree
            ok &= v.lemma == v.oracle
            notes.append(f"{s.name}[{i}] out of scope ({v.reason})")
    record(4, ok and in_scope >= 4, f"equivalence battery: {agreed}/{in_scope} in-scope instances agree; "
                                    + "; ".join(notes))


# ---------------------------------------------------------------------------
# 5. Laplace orbit

def test_criterion_05_laplace_orbit():
    s = load_system("shifted3")
    step = laplace_transform(s, coefficient_table(s), 1, 2)
    at0 = np.array([evaluate(l, (0, 0, 0)) for l in step.lambdas])
    err0 = float(np.max(np.abs(at0 - [-1, 0, 1])))
    pts = sample_points(s)
    fam = max(abs(evaluate(l, p) - sum(p) - c) for p in pts for l, c in zip(step.lambdas, (-1, 0, 1)))
    cross = step.residuals["cross_form"]
    record(5, err0 <= 1e-12 and fam <= 1e-12 and cross <= 1e-7,
           f"Laplace orbit: barlam(0) = {at0.tolist()} (err {err0:.1e}), shifted-family defect {fam:.1e}, "
           f"cross-form {cross:.1e} <= 1e-7")


# ---------------------------------------------------------------------------
# 6. Lame closed form

def test_criterion_06_lame():
    s = load_system("lindeg2")
    # 20 x 20 cells on axes that contain the base (2, 1)
    axes = [np.linspace(1.5, 2.5, 21), np.linspace(0.2, 1.2, 21)]
    H = lame_coefficients(coefficient_table(s), 1, (2.0, 1.0), axes)
    val = lame_function(coefficient_table(s), 1, (2.0, 1.0))(np.array([[2.0], [0.5]]))
    val = float(np.ravel(val)[0])
    ok = abs(val - 2 / 3) <= 1e-8 and H.defect <= 1e-8
    record(6, ok, f"Lame: H_1(2, 0.5) = {val:.12f} (2/3 +- 1e-8), loop defect {H.defect:.1e} on 20x20")


# ---------------------------------------------------------------------------
# 7. end-to-end Hopf

def _hopf(h, n=30):
    s = load_system("order0_decoupled")
    t = coefficient_table(s)
    u0 = np.array([3.5, 5.5])
    P = [p_for_b_zero(s, t, i, lame_function(t, i, u0), "u1") for i in (1, 2)]
    ax = np.arange(n) * h
    g = integrate_orbit_solution(s, P, (0.0, 0.0, u0), ax, ax)
    X, T = np.meshgrid(ax, ax, indexing="ij")
    exact = np.stack([T + np.sqrt(T ** 2 + 2 * X + k ** 2) for k in u0])
    err = float(np.max(np.abs(g.u - exact)[:, g.converged]))
    return g, err


def test_criterion_07_hopf():
    g1, e1 = _hopf(0.01)
    g2, e2 = _hopf(0.005)
    r1, r2 = g1.max_residual, g2.max_residual
    ok = e1 <= 1e-6 and r1 <= 1e-6 and r1 / r2 >= 3.5
    record(7, ok, f"Hopf: max error {e1:.1e} on 30x30, residual {r1:.1e} -> {r2:.1e} "
                  f"(ratio {r1 / r2:.2f} >= 3.5)")


# ---------------------------------------------------------------------------
# 8. lindeg2 pipeline

def test_criterion_08_lindeg2_pipeline():
    s = load_system("lindeg2")
    ax = np.linspace(0, 0.06, 31)
    g = pipeline_solve(s, ["1", "1"], (0.0, 0.0, (2.0, 1.0)), ax, ax)
    t = coefficient_table(s)
    u0 = (2.0, 1.0)
    P = [p_for_b_zero(s, t, i, lame_function(t, i, u0), "1") for i in (1, 2)]
    coarse = np.linspace(0, 0.6, 7)
    d = [integrate_orbit_solution(s, P, (0.0, 0.0, u0), coarse, coarse, substeps=k, verify=False).meta["path_defect"]
         for k in (1, 2)]
    ok = g.max_residual <= 1e-5 and g.meta["path_defect"] <= 1e-7 and d[0] / d[1] >= 8
    record(8, ok, f"lindeg2 pipeline ({g.meta['route']}): residual {g.max_residual:.1e} <= 1e-5, "
                  f"path defect {g.meta['path_defect']:.1e} <= 1e-7, RK4 halving ratio {d[0] / d[1]:.1f} >= 8")


# ---------------------------------------------------------------------------
# 9. congruence invariance

def _exp_pairs(s, axes, svals):
    out = []
    for sv in svals:
        k = [sv / (1 + c * sv) for c in (0, 1, 2)]
        N = "exp(%r*u1 + %r*u2 + %r*u3)" % tuple(k)
        out.append(ConservationPair.from_exprs(s, N, "(u1 + u2 + u3 - %r)*%s" % (1 / sv, N), axes))
    return out


def test_criterion_09_congruence_invariance():
    s = load_system("shifted3")
    axes = [np.linspace(-1, 1, 9)] * 3
    A = _exp_pairs(s, axes, [0.3, 0.5, 0.7])
    B = [ConservationPair.from_exprs(s, "u1 + u2 + u3", "(u1 + u2 + u3)^2/2 + u2 + 2*u3", axes)]
    B += _exp_pairs(s, axes, [0.4, 0.6])
    ra = verify_speed_invariance(s, None, A, 1, 2, n_samples=50)
    rb = verify_speed_invariance(s, None, B, 1, 2, n_samples=50)
    across = max(float(np.max(np.abs(ra["extracted"][m] - rb["extracted"][m]))) for m in ra["extracted"])
    err = max(ra["max_speed_error"], rb["max_speed_error"])
    ok = ra["samples"] >= 50 and ra["speeds_from"] == "laplace_transform" and err <= 1e-6 and across <= 1e-6
    record(9, ok, f"congruence: {ra['samples']} samples, speed error vs Laplace step {err:.1e} <= 1e-6, "
                  f"basis difference {across:.1e} <= 1e-6")


# ---------------------------------------------------------------------------
# 10. reciprocal sanity

def test_criterion_10_reciprocal():
    s = load_system("lindeg2")
    same = reciprocal_speeds(s, "1", "0", "0", "1")
    ident = all(simplify(a) == simplify(b) for a, b in zip(same.lambdas, s.lambdas))
    swap = reciprocal_speeds(s, "0", "1", "1", "0")
    inv = all(simplify(a) == simplify(parse("1", 2) / b) for a, b in zip(swap.lambdas, s.lambdas))
    r = reciprocal_speeds(s, "1", "0", "u1 + u2", "u1*u2")
    sh = check_semihamiltonian(r)
    s3 = load_system("shifted3")
    r3 = check_semihamiltonian(reciprocal_speeds(s3, "1", "0", "u1 + u2 + u3",
                                                 "(u1 + u2 + u3)^2/2 + u2 + 2*u3 + 10"))
    ok = ident and inv and sh.flag and sh.max_residual <= 1e-8 and r3.max_residual <= 1e-8
    record(10, ok, f"reciprocal: identity {ident}, swap -> 1/lam {inv}, lindeg2 residual {sh.max_residual:.1e} "
                   f"(vacuous for n=2), shifted3 residual {r3.max_residual:.1e} <= 1e-8")


# ---------------------------------------------------------------------------
# 11. determinism

RUNS = [
    ["diagnose", "nonsemiham3", "--seed", "3"],
    ["laplace", "shifted3", "--i", "1", "--j", "2", "--depth", "2"],
    ["solve", "lindeg2", "--phi", "1", "--phi", "1", "--grid", "0.06,0.06,16,16", "--base-u", "2,1"],
    ["congruence", "lindeg2", "--u-counts", "11"],
]


def _snapshot(out):
    return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir())}


def test_criterion_11_determinism(tmp_path):
    snaps = []
    for _ in range(2):
        snap = {}
        for argv in RUNS:
            out = tmp_path / argv[0]
            shutil.rmtree(out, ignore_errors=True)
            run(argv + ["--out", str(out)])
            snap.update({f"{argv[0]}/{k}": v for k, v in _snapshot(out).items()})
        snaps.append(snap)
    diff = sorted(k for k in snaps[0] if snaps[0][k] != snaps[1].get(k))
    record(11, not diff and snaps[0].keys() == snaps[1].keys(),
           f"determinism: {len(snaps[0])} output files byte-identical across two runs"
           + (f"; differing: {diff}" if diff else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
