"""Laplace transformations of the commuting-flow system and the involutivity oracle.

For an index pair (i, j) the transformation maps the speeds to

    barlam^j = lam^i
    barlam^i = lam^i_i / D + lam^i,              D = a_ji - d_i a_ij / a_ij = -b_ij
    barlam^k = (a_ij lam^k - a_kj lam^i) / (a_ij - a_kj),   k != i, j

and the i-th row of the coefficient table to bar a_im = a_im + d_m D / D.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .expr import Const, Expr, Var, differentiate, evaluate_array, is_zero, lambdify, simplify, to_string
from .system import (
    CoeffTable,
    DiagonalSystem,
    NotStrictlyHyperbolic,
    a_from_speeds,
    active_indices,
    check_darboux_order0,
    check_darboux_order1,
    check_semihamiltonian,
    coefficient_table,
    residual_max,
    sample_points,
)

__all__ = [
    "PrereqViolated", "DegenerateLaplace", "CollidingCoefficients",
    "LaplaceStep", "SequenceResult", "OracleResult",
    "laplace_transform", "transformed_a", "sequence_terminates", "order1_oracle",
    "denominator",
]


class PrereqViolated(ValueError):
    pass


class DegenerateLaplace(ValueError):
    pass


class CollidingCoefficients(ValueError):
    pass


def denominator(table: CoeffTable, i: int, j: int) -> Expr:
    """D_ij = a_ji - d_i a_ij / a_ij, which equals -b_ij."""
    return simplify(table.a[(j, i)] - table.da(i, j, i) / table.a[(i, j)])


def _check_prereq(sys, table, i, j):
    if i == j:
        raise ValueError("Laplace transformation needs i != j")
    if table.zero_flags[(i, j)]:
        raise PrereqViolated(f"a_{i}{j} vanishes identically")
    pts = sample_points(sys)
    D = denominator(table, i, j)
    if is_zero(D):
        raise DegenerateLaplace(f"D_{i}{j} = -b_{i}{j} vanishes identically")
    dv = np.abs(evaluate_array(D, pts))
    if np.nanmin(np.where(np.isnan(dv), 0.0, dv)) < sys.tol:
        k = int(np.argmin(np.where(np.isnan(dv), 0.0, dv)))
        raise DegenerateLaplace(f"D_{i}{j} vanishes at sample u={pts[k].tolist()}")
    for k in range(1, sys.n + 1):
        if k in (i, j):
            continue
        diff = evaluate_array(table.a[(i, j)] - table.a[(k, j)], pts)
        bad = ~(np.abs(diff) >= sys.tol)
        if bad.any():
            w = pts[int(np.argmax(bad))].tolist()
            raise CollidingCoefficients(f"a_{i}{j} - a_{k}{j} vanishes at u={w}")
    return D, pts


@dataclass(eq=False)
class LaplaceStep:
    """One Laplace transformation for the pair (i, j).

    ``a_row`` holds bar a_im (m != i) from the first closed form,
    ``a_bar`` the full table recomputed from the transformed speeds.
    Steps that would be degenerate raise instead of being returned, so
    ``degenerate`` is False on every constructed step.
    """

    pair: tuple
    lambdas: tuple
    system: DiagonalSystem
    D: Expr
    a_row: dict
    a_bar: dict
    residuals: dict
    barlam_j_exact: bool
    degenerate: bool = False

    def to_dict(self):
        return {
            "pair": list(self.pair),
            "lambdas": [to_string(l) for l in self.lambdas],
            "D": to_string(self.D),
            "a_row": {str(m): to_string(e) for m, e in sorted(self.a_row.items())},
            "residuals": self.residuals,
            "barlam_j_exact": self.barlam_j_exact,
            "degenerate": self.degenerate,
        }


def _transformed_speeds(sys, table, i, j, D):
    lam = sys.lambdas
    out = list(lam)
    out[j - 1] = lam[i - 1]
    out[i - 1] = simplify(sys.dlam(i, i) / D + lam[i - 1])
    aij = table.a[(i, j)]
    for k in range(1, sys.n + 1):
        if k not in (i, j):
            akj = table.a[(k, j)]
            out[k - 1] = simplify((aij * lam[k - 1] - akj * lam[i - 1]) / (aij - akj))
    return tuple(out)


def _row_forms(sys, table, i, j, D):
    """Both closed forms for the transformed row bar a_im."""
    first, product = {}, {}
    for m in range(1, sys.n + 1):
        if m == i:
            continue
        first[m] = simplify(table.a[(i, m)] + differentiate(D, m, sys.n) / D)
        if m != j:
            aim = table.a[(i, m)]
            if table.zero_flags[(i, m)]:
                product[m] = Const(0.0)
            else:
                inner = table.a[(m, i)] - table.da(i, m, i) / aim
                product[m] = simplify(aim * (1 - table.a[(m, j)] / table.a[(i, j)]) * (1 - inner / D))
    return first, product


def transformed_a(sys: DiagonalSystem, table: CoeffTable, i: int, j: int):
    """Transformed row bar a_im with the cross-form residual.

    Returns ``(row, residual)`` where ``row[m]`` is the first closed form and
    ``residual`` is the worst relative disagreement with the product form.
    """
    D, pts = _check_prereq(sys, table, i, j)
    first, product = _row_forms(sys, table, i, j, D)
    worst = 0.0
    for m, e in product.items():
        r, _ = residual_max([first[m], -e], pts)
        worst = max(worst, r)
    return first, worst


def laplace_transform(sys: DiagonalSystem, table: CoeffTable | None, i: int, j: int) -> LaplaceStep:
    table = table or coefficient_table(sys)
    D, pts = _check_prereq(sys, table, i, j)
    bar = _transformed_speeds(sys, table, i, j, D)
    first, product = _row_forms(sys, table, i, j, D)
    a_bar = {}
    for p, q in itertools.permutations(range(1, sys.n + 1), 2):
        a_bar[(p, q)] = a_from_speeds(bar, sys.n, p, q)
    cross_form = 0.0
    for m, e in product.items():
        r, _ = residual_max([first[m], -e], pts)
        cross_form = max(cross_form, r)
    cross_table = 0.0
    for m, e in first.items():
        r, _ = residual_max([e, -a_bar[(i, m)]], pts)
        cross_table = max(cross_table, r)
    new = DiagonalSystem(bar, sys.domain, eps_hyp=sys.eps_hyp, tol=sys.tol,
                         samples=sys.samples, seed=sys.seed, name=f"{sys.name}|L({i},{j})")
    speed_vals = new.speeds(pts)
    return LaplaceStep(
        pair=(i, j), lambdas=bar, system=new, D=D, a_row=first, a_bar=a_bar,
        residuals={"cross_form": cross_form, "cross_table": cross_table,
                   "finite_speeds": bool(np.all(np.isfinite(speed_vals)))},
        barlam_j_exact=simplify(bar[j - 1]) == simplify(sys.lambdas[i - 1]))


# ---------------------------------------------------------------------------
# sequences

@dataclass
class SequenceResult:
    """Breadth-first search for a terminating Laplace sequence from index i.

    ``outcome`` is one of ``terminated``, ``not terminated``, ``degenerate``
    or ``prerequisite violated``.
    """

    i: int
    depth: int
    outcome: str
    path: list | None
    steps: list = field(default_factory=list)
    proof: str | None = None
    nodes: list = field(default_factory=list)

    @property
    def terminated_at(self):
        return None if self.path is None else len(self.path)

    def to_dict(self):
        return {
            "i": self.i, "depth": self.depth, "outcome": self.outcome,
            "path": self.path, "terminated_at": self.terminated_at, "proof": self.proof,
            "steps": [s.to_dict() for s in self.steps], "nodes": self.nodes,
        }


def _row_vanishes(sys: DiagonalSystem, i: int):
    """(vanishes, proof) for all a_im of ``sys``, m != i."""
    row = [a_from_speeds(sys.lambdas, sys.n, i, m) for m in range(1, sys.n + 1) if m != i]
    if all(is_zero(e) for e in row):
        return True, "symbolic"
    pts = sample_points(sys)
    for e in row:
        v = np.abs(evaluate_array(e, pts))
        if not np.all(v <= sys.tol):
            return False, None
    return True, "numeric-only"


def sequence_terminates(sys: DiagonalSystem, i: int, max_depth: int = 3) -> SequenceResult:
    """Shortest path (j_1, ..., j_p) of Laplace steps killing the i-th row.

    Branches that hit a degenerate denominator, a vanishing a_ij, colliding
    coefficients or a non-hyperbolic transformed system end there and are
    recorded; they do not stop the search. Systems already visited (by
    printed speeds) are not expanded twice.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    nodes = []
    queue = deque([((), sys, [])])
    seen = {tuple(to_string(l) for l in sys.lambdas)}
    failures = []
    alive_at_depth = False
    while queue:
        path, cur, steps = queue.popleft()
        node = {"path": list(path), "lambdas": [to_string(l) for l in cur.lambdas]}
        nodes.append(node)
        done, proof = _row_vanishes(cur, i)
        if done:
            node["outcome"] = "terminated"
            return SequenceResult(i, max_depth, "terminated", list(path), steps, proof,
                                  sorted(nodes, key=lambda d: d["path"]))
        try:
            table = coefficient_table(cur)
            node["semihamiltonian_residual"] = check_semihamiltonian(cur, table).max_residual
        except NotStrictlyHyperbolic as exc:
            node["outcome"] = "prerequisite violated"
            node["reason"] = str(exc)
            failures.append("prerequisite violated")
            continue
        if len(path) >= max_depth:
            node["outcome"] = "not terminated"
            alive_at_depth = True
            continue
        node["outcome"] = "expanded"
        for j in range(1, cur.n + 1):
            if j == i:
                continue
            child = {"path": list(path) + [j]}
            try:
                step = laplace_transform(cur, table, i, j)
            except DegenerateLaplace as exc:
                child.update(outcome="degenerate", reason=str(exc))
                failures.append("degenerate")
                nodes.append(child)
                continue
            except (PrereqViolated, CollidingCoefficients) as exc:
                child.update(outcome="prerequisite violated", reason=str(exc))
                failures.append("prerequisite violated")
                nodes.append(child)
                continue
            key = tuple(to_string(l) for l in step.lambdas)
            if key in seen:
                child.update(outcome="revisited", lambdas=list(key))
                nodes.append(child)
                continue
            seen.add(key)
            queue.append((path + (j,), step.system, steps + [step]))
    nodes.sort(key=lambda d: (d["path"], d["outcome"]))
    if alive_at_depth or not failures:
        outcome = "not terminated"
    elif "degenerate" in failures:
        outcome = "degenerate"
    else:
        outcome = "prerequisite violated"
    return SequenceResult(i, max_depth, outcome, None, [], None, nodes)


# ---------------------------------------------------------------------------
# involutivity oracle

@dataclass
class OracleResult:
    applicable: bool
    involutive: bool
    max_defect: float
    witness: list | None = None
    j: int | None = None

    def to_dict(self):
        return {"applicable": self.applicable, "involutive": self.involutive,
                "max_defect": self.max_defect, "witness": self.witness, "j": self.j}


def _bracket(X, Y, N):
    """Lie bracket of vector fields given as coefficient lists over N variables."""
    out = []
    for c in range(N):
        terms = Const(0.0)
        for d in range(N):
            if not is_zero(X[d]):
                terms = terms + X[d] * differentiate(Y[c], d + 1, N)
            if not is_zero(Y[d]):
                terms = terms - Y[d] * differentiate(X[c], d + 1, N)
        out.append(simplify(terms))
    return out


def order1_oracle(sys: DiagonalSystem, table: CoeffTable | None, i: int,
                  p_values=(-1.0, 0.5, 2.0), random_p: int = 2) -> OracleResult:
    """Brute-force involutivity test of the reduced Monge distribution.

    Coordinates are (u^1..u^n, x, t, p) with p = u^i_x. The fields are
    barxi = d_t - lam^i d_x + lam^i_i p^2 d_p, eta_k = d_k + a_ik p d_p
    (k != i) and zeta = -d_x + b_ij p^2 d_p for the first j with
    lam^i_j != 0. The fields d/d(u^k_x), k != i, have constant coefficients
    that nothing depends on, so they commute with everything and are left
    out. Every pairwise bracket is projected onto the span by least squares.
    """
    if check_darboux_order0(sys, i).flag:
        return OracleResult(False, False, 0.0)
    table = table or coefficient_table(sys)
    active, _ = active_indices(sys, i)
    if not active:
        return OracleResult(False, False, 0.0)
    j = active[0]
    n = sys.n
    N = n + 3
    ix, it, ip = n, n + 1, n + 2
    p = Var(ip + 1)
    zero = Const(0.0)

    def field_(**comp):
        v = [zero] * N
        for idx, e in comp.items():
            v[int(idx)] = e
        return v

    xi = field_(**{str(ix): simplify(-sys.lam(i)), str(it): Const(1.0),
                   str(ip): simplify(sys.dlam(i, i) * p * p)})
    fields = [xi]
    for k in range(1, n + 1):
        if k != i:
            fields.append(field_(**{str(k - 1): Const(1.0), str(ip): simplify(table.a[(i, k)] * p)}))
    fields.append(field_(**{str(ix): Const(-1.0), str(ip): simplify(table.b[(i, j)] * p * p)}))

    brackets = [_bracket(X, Y, N) for X, Y in itertools.combinations(fields, 2)]

    upts = sample_points(sys)
    rng = np.random.default_rng(sys.seed)
    ps = list(p_values) + list(rng.uniform(-2.0, 2.0, size=random_p))
    pts = np.array([np.concatenate([u, [0.0, 0.0, pv]]) for u in upts for pv in ps])
    V = np.stack([np.stack([_eval(e, pts) for e in f], axis=1) for f in fields], axis=2)
    worst, witness = 0.0, None
    for br in brackets:
        c = np.stack([_eval(e, pts) for e in br], axis=1)
        for m in range(len(pts)):
            A = V[m]
            coef, *_ = np.linalg.lstsq(A, c[m], rcond=None)
            res = np.linalg.norm(c[m] - A @ coef) / (1.0 + np.linalg.norm(c[m]))
            if not np.isfinite(res):
                res = np.inf
            if witness is None or res > worst:
                worst, witness = float(res), pts[m].tolist()
    return OracleResult(True, worst <= sys.tol, worst, witness, j)


def _eval(e: Expr, pts: np.ndarray) -> np.ndarray:
    return np.broadcast_to(lambdify(e)(pts.T), (len(pts),))


# ---------------------------------------------------------------------------
# termination-theorem equivalence

@dataclass
class EquivalenceVerdicts:
    """The three order-1 verdicts for one index, with the scope decision.

    ``in_scope`` is False when a_im vanishes somewhere, when b_ij = 0 for
    some j (the transformation is then degenerate) or when a_ij and a_kj
    collide; the verdicts are still recorded but need not agree.
    """

    name: str
    i: int
    in_scope: bool
    reason: str | None
    laplace: bool | None
    lemma: bool
    oracle: bool
    laplace_j: int | None = None

    @property
    def agree(self) -> bool:
        return self.laplace == self.lemma == self.oracle

    def to_dict(self):
        return {"system": self.name, "i": self.i, "in_scope": self.in_scope, "reason": self.reason,
                "laplace": self.laplace, "lemma": self.lemma, "oracle": self.oracle,
                "laplace_j": self.laplace_j, "agree": self.agree}


def _vanishes(e: Expr, pts, tol) -> bool:
    if is_zero(e):
        return True
    v = np.abs(evaluate_array(e, pts))
    return bool(np.all(v <= tol))


def equivalence_verdicts(sys: DiagonalSystem, i: int) -> EquivalenceVerdicts:
    """Compare one-step Laplace termination, the order-1 criterion and the oracle.

    The Laplace verdict is True when some j != i gives a transformation
    whose i-th row bar a_im vanishes for every m.
    """
    table = coefficient_table(sys)
    pts = sample_points(sys)
    lemma = check_darboux_order1(sys, table, i).flag
    oracle = order1_oracle(sys, table, i).involutive
    reason = None
    for m in range(1, sys.n + 1):
        if m != i and not np.all(np.abs(evaluate_array(table.a[(i, m)], pts)) >= sys.tol):
            reason = f"a_{i}{m} vanishes on the domain"
            break
    laplace, jj, failures = False, None, []
    for j in range(1, sys.n + 1):
        if j == i:
            continue
        try:
            step = laplace_transform(sys, table, i, j)
        except (DegenerateLaplace, CollidingCoefficients, PrereqViolated) as exc:
            failures.append(f"({i},{j}): {exc}")
            continue
        if all(_vanishes(e, pts, sys.tol) for e in step.a_row.values()):
            laplace, jj = True, j
            break
    if reason is None and failures:
        reason = "; ".join(failures)
    return EquivalenceVerdicts(sys.name, i, reason is None, reason,
                               laplace if (laplace or not failures) else None, lemma, oracle, jj)
