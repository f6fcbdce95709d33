"""Diagonal systems u^i_t = lambda^i(u) u^i_x and their coefficient diagnostics.

Every identity is decided numerically on a seeded set of sample points in
the domain box; a check is additionally labelled ``symbolic`` when the
simplifier reduces the residual expression to a literal zero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import qmc

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .expr import Expr, differentiate, evaluate_array, is_zero, lambdify, parse, simplify, to_string

__all__ = [
    "DiagonalSystem", "CoeffTable", "CheckResult", "HyperbolicityReport",
    "Order0Result", "Order1Result", "DiagnosticsReport", "NotStrictlyHyperbolic",
    "BUILTINS", "load_system", "builtin_path", "sample_points", "check_hyperbolicity",
    "coefficient_table", "check_semihamiltonian", "check_commuting_compatibility",
    "check_darboux_order0", "check_darboux_order1", "check_linear_degeneracy",
    "full_report", "residual_max",
]

BUILTINS = ("constant2", "order0_decoupled", "lindeg2", "shifted3", "ratio2",
            "nonsemiham3", "recip2")


class NotStrictlyHyperbolic(ValueError):
    def __init__(self, message: str, witness=None, gap: float | None = None):
        super().__init__(message)
        self.witness = witness
        self.gap = gap


@dataclass(eq=False)
class DiagonalSystem:
    """Speeds ``lambdas[i-1]`` for ``i = 1..n`` on a rectangular domain box."""

    lambdas: tuple
    domain: tuple
    eps_hyp: float = 1e-8
    tol: float = 1e-9
    samples: int = 200
    seed: int = 0
    name: str = ""
    _memo: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.lambdas = tuple(self.lambdas)
        self.domain = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        if self.n < 2:
            raise ValueError("a diagonal system needs n >= 2")
        if len(self.domain) != self.n:
            raise ValueError("domain must give one interval per coordinate")
        for k, (lo, hi) in enumerate(self.domain, 1):
            if not lo < hi:
                raise ValueError(f"empty domain interval for u{k}: [{lo}, {hi}]")

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @classmethod
    def from_strings(cls, lambdas: Sequence[str], domain, **kw) -> "DiagonalSystem":
        n = len(lambdas)
        return cls(tuple(parse(s, n) for s in lambdas), domain, **kw)

    def lam(self, i: int) -> Expr:
        return self.lambdas[i - 1]

    def dlam(self, i: int, k: int) -> Expr:
        """Memoised partial derivative of lambda^i with respect to u^k."""
        key = ("dlam", i, k)
        if key not in self._memo:
            self._memo[key] = differentiate(self.lambdas[i - 1], k, self.n)
        return self._memo[key]

    def speeds(self, points) -> np.ndarray:
        """Array ``(m, n)`` of all speeds at ``(m, n)`` points."""
        pts = np.atleast_2d(points)
        return np.stack([evaluate_array(l, pts) for l in self.lambdas], axis=1)

    def with_options(self, **kw) -> "DiagonalSystem":
        opts = dict(eps_hyp=self.eps_hyp, tol=self.tol, samples=self.samples,
                    seed=self.seed, name=self.name)
        opts.update(kw)
        return DiagonalSystem(self.lambdas, self.domain, **opts)

    def config(self) -> dict:
        return {
            "name": self.name, "n": self.n,
            "lambdas": [to_string(l) for l in self.lambdas],
            "domain": [list(d) for d in self.domain],
            "eps_hyp": self.eps_hyp, "tol": self.tol,
            "samples": self.samples, "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# loading

def builtin_path(name: str) -> Path:
    if name not in BUILTINS:
        raise KeyError(f"unknown built-in system {name!r}; choose from {', '.join(BUILTINS)}")
    return Path(str(resources.files("hydrodarboux") / "data" / f"{name}.toml"))


def load_system(source, **overrides) -> DiagonalSystem:
    """Load a system from a built-in name or a TOML definition file.

    The file holds ``n``, ``lambda.l1..ln`` (expression strings) and
    ``domain.u1..un`` (two-element arrays), optionally ``tol``, ``eps_hyp``,
    ``samples`` and ``seed``. Keyword overrides that are not None win.
    """
    source = str(source)
    if source in BUILTINS:
        path, name = builtin_path(source), source
    else:
        path = Path(source)
        name = path.stem
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    try:
        n = int(doc["n"])
        lam = doc["lambda"]
        dom = doc["domain"]
        lambdas = [parse(str(lam[f"l{i}"]), n) for i in range(1, n + 1)]
        domain = [tuple(dom[f"u{i}"]) for i in range(1, n + 1)]
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc}") from None
    extra = set(lam) - {f"l{i}" for i in range(1, n + 1)}
    if extra:
        raise ValueError(f"{path}: unexpected speed keys {sorted(extra)}")
    for d in domain:
        if len(d) != 2:
            raise ValueError(f"{path}: domain entries must have two elements")
    opts = {"name": name}
    for key in ("tol", "eps_hyp", "samples", "seed"):
        if key in doc:
            opts[key] = doc[key]
    opts.update({k: v for k, v in overrides.items() if v is not None})
    return DiagonalSystem(tuple(lambdas), tuple(domain), **opts)


# ---------------------------------------------------------------------------
# sampling and hyperbolicity

@dataclass
class HyperbolicityReport:
    strictly_hyperbolic: bool
    worst_gap: float
    witness: list
    rejected: int
    drawn: int

    def to_dict(self):
        return {"flag": self.strictly_hyperbolic, "worst_gap": self.worst_gap,
                "witness": self.witness, "rejected": self.rejected, "drawn": self.drawn}


def _gaps(sys: DiagonalSystem, pts: np.ndarray) -> np.ndarray:
    lam = sys.speeds(pts)
    gap = np.full(len(pts), np.inf)
    for i, j in itertools.combinations(range(sys.n), 2):
        gap = np.minimum(gap, np.abs(lam[:, j] - lam[:, i]))
    return np.where(np.isnan(gap), -np.inf, gap)


def _sample(sys: DiagonalSystem):
    key = ("samples", sys.samples, sys.seed, sys.eps_hyp)
    if key in sys._memo:
        return sys._memo[key]
    lo = np.array([d[0] for d in sys.domain])
    hi = np.array([d[1] for d in sys.domain])
    corners = np.array(list(itertools.product(*sys.domain)), dtype=float)
    rng = np.random.default_rng(sys.seed)
    sampler = qmc.LatinHypercube(d=sys.n, seed=rng)

    accepted = []
    drawn = rejected = 0
    worst_gap, witness = np.inf, None
    gap = _gaps(sys, corners)
    drawn += len(corners)
    bad = gap < sys.eps_hyp
    rejected += int(bad.sum())
    accepted.append(corners[~bad])
    k = int(np.argmin(gap))
    worst_gap, witness = gap[k], corners[k]
    need = sys.samples
    # resample in Latin-hypercube batches until enough admissible points exist
    for _ in range(20):
        if need <= 0:
            break
        batch = qmc.scale(sampler.random(max(need, 8)), lo, hi)
        gap = _gaps(sys, batch)
        drawn += len(batch)
        bad = gap < sys.eps_hyp
        rejected += int(bad.sum())
        good = batch[~bad][:need]
        accepted.append(good)
        need -= len(good)
        k = int(np.argmin(gap))
        if gap[k] < worst_gap:
            worst_gap, witness = gap[k], batch[k]
    pts = np.concatenate(accepted, axis=0)
    report = HyperbolicityReport(
        strictly_hyperbolic=bool(rejected <= 0.1 * drawn and len(pts) > 0),
        worst_gap=float(worst_gap if np.isfinite(worst_gap) else np.nan),
        witness=[float(v) for v in witness],
        rejected=rejected, drawn=drawn)
    sys._memo[key] = (pts, report)
    return pts, report


def sample_points(sys: DiagonalSystem) -> np.ndarray:
    """Deterministic admissible sample points: the 2^n corners plus LHS points."""
    return _sample(sys)[0]


def check_hyperbolicity(sys: DiagonalSystem) -> HyperbolicityReport:
    return _sample(sys)[1]


def _require_hyperbolic(sys: DiagonalSystem):
    rep = check_hyperbolicity(sys)
    if not rep.strictly_hyperbolic:
        raise NotStrictlyHyperbolic(
            f"speeds collide: worst gap {rep.worst_gap:.3g} at u={rep.witness} "
            f"({rep.rejected}/{rep.drawn} samples rejected)", rep.witness, rep.worst_gap)


# ---------------------------------------------------------------------------
# residuals

def residual_max(terms: Sequence[Expr], points: np.ndarray):
    """Max over points of ``|sum(terms)| / (1 + max|term|)`` and the witness.

    NaN anywhere counts as an infinite residual.
    """
    pts = np.atleast_2d(points)
    vals = np.stack([evaluate_array(t, pts) for t in terms], axis=0)
    total = np.abs(vals.sum(axis=0))
    scale = 1.0 + np.abs(vals).max(axis=0)
    r = total / scale
    r = np.where(np.isnan(r), np.inf, r)
    k = int(np.argmax(r))
    return float(r[k]), [float(v) for v in pts[k]]


@dataclass
class CheckResult:
    flag: bool
    max_residual: float
    witness: list | None
    symbolic: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"flag": self.flag, "max_residual": self.max_residual,
                "witness": self.witness, "symbolic": self.symbolic, "detail": self.detail}


def _combine(results, tol):
    """Fold ``(name, residual, witness, symbolic)`` tuples into a CheckResult."""
    worst, witness, symbolic, detail = 0.0, None, True, {}
    for name, r, w, sym in results:
        detail[name] = r
        symbolic = symbolic and sym
        if witness is None or r > worst:
            worst, witness = r, w
    return CheckResult(flag=worst <= tol, max_residual=worst, witness=witness,
                       symbolic=symbolic if results else True, detail=detail)


def _identity(terms, points):
    r, w = residual_max(terms, points)
    return r, w, is_zero(_sum(terms))


def _sum(terms):
    out = terms[0]
    for t in terms[1:]:
        out = out + t
    return out


# ---------------------------------------------------------------------------
# coefficient table

@dataclass(eq=False)
class CoeffTable:
    """Off-diagonal ``a[(i, j)]`` and ``b[(i, j)]`` keyed by 1-based index pairs.

    ``b[(i, j)]`` is None when ``a[(i, j)]`` is syntactically zero.
    """

    n: int
    a: dict
    b: dict
    zero_flags: dict
    identity_residual: float = 0.0
    b_residual: float = 0.0
    _memo: dict = field(default_factory=dict, repr=False)

    def pairs(self):
        return [(i, j) for i in range(1, self.n + 1) for j in range(1, self.n + 1) if i != j]

    def da(self, i: int, j: int, k: int) -> Expr:
        """Memoised d a_ij / d u^k."""
        key = ("da", i, j, k)
        if key not in self._memo:
            self._memo[key] = differentiate(self.a[(i, j)], k, self.n)
        return self._memo[key]

    def db(self, i: int, j: int, k: int) -> Expr:
        key = ("db", i, j, k)
        if key not in self._memo:
            self._memo[key] = differentiate(self.b[(i, j)], k, self.n)
        return self._memo[key]

    def a_fn(self, i: int, j: int):
        return lambdify(self.a[(i, j)])

    def b_fn(self, i: int, j: int):
        b = self.b[(i, j)]
        return None if b is None else lambdify(b)

    def to_dict(self):
        return {
            "a": {f"{i},{j}": to_string(self.a[(i, j)]) for i, j in self.pairs()},
            "b": {f"{i},{j}": None if self.b[(i, j)] is None else to_string(self.b[(i, j)])
                  for i, j in self.pairs()},
            "zero_flags": {f"{i},{j}": self.zero_flags[(i, j)] for i, j in self.pairs()},
            "identity_residual": self.identity_residual,
            "b_residual": self.b_residual,
        }


def a_from_speeds(lambdas: Sequence[Expr], n: int, i: int, j: int) -> Expr:
    """a_ij = d_j lambda^i / (lambda^j - lambda^i), simplified."""
    num = differentiate(lambdas[i - 1], j, n)
    if is_zero(num):
        return simplify(num)
    return simplify(num / (lambdas[j - 1] - lambdas[i - 1]))


def coefficient_table(sys: DiagonalSystem) -> CoeffTable:
    """Build a_ij and b_ij = d_i a_ij / a_ij - a_ji and check both identities."""
    if "table" in sys._memo:
        return sys._memo["table"]
    _require_hyperbolic(sys)
    n = sys.n
    a, zero = {}, {}
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i != j:
                a[(i, j)] = a_from_speeds(sys.lambdas, n, i, j)
                zero[(i, j)] = is_zero(a[(i, j)])
    b = {}
    for (i, j), aij in a.items():
        if zero[(i, j)]:
            b[(i, j)] = None
        else:
            b[(i, j)] = simplify(differentiate(aij, i, n) / aij - a[(j, i)])
    table = CoeffTable(n, a, b, zero)

    pts = sample_points(sys)
    worst = 0.0
    worst_b = 0.0
    for (i, j), aij in a.items():
        gap = sys.lam(j) - sys.lam(i)
        r, _ = residual_max([gap * aij, -sys.dlam(i, j)], pts)
        worst = max(worst, r)
        if b[(i, j)] is None:
            continue
        # second formula for b_ij, away from points where lambda^i_j vanishes
        lij = sys.dlam(i, j)
        lij_vals = evaluate_array(lij, pts)
        keep = np.abs(lij_vals) > sys.tol
        if keep.any():
            alt = differentiate(lij, i, n) / lij + sys.dlam(i, i) / gap
            r, _ = residual_max([alt, -b[(i, j)]], pts[keep])
            worst_b = max(worst_b, r)
    table.identity_residual = worst
    table.b_residual = worst_b
    sys._memo["table"] = table
    return table


# ---------------------------------------------------------------------------
# checks

def _triples(n):
    return [t for t in itertools.permutations(range(1, n + 1), 3)]


def check_semihamiltonian(sys: DiagonalSystem, table: CoeffTable | None = None) -> CheckResult:
    """d_j a_ik = d_k a_ij over ordered triples of distinct indices (vacuous for n = 2)."""
    table = table or coefficient_table(sys)
    pts = sample_points(sys)
    results = []
    for i, j, k in _triples(sys.n):
        if j > k:
            continue  # the residual is antisymmetric in (j, k)
        terms = [table.da(i, k, j), -table.da(i, j, k)]
        r, w, sym = _identity(terms, pts)
        results.append((f"{i},{j},{k}", r, w, sym))
    return _combine(results, sys.tol)


def check_commuting_compatibility(sys: DiagonalSystem, table: CoeffTable | None = None) -> CheckResult:
    """Residual of d_j a_ki = a_ki a_ij + a_kj a_ji - a_ki a_kj over distinct triples."""
    table = table or coefficient_table(sys)
    pts = sample_points(sys)
    a = table.a
    results = []
    for k, i, j in _triples(sys.n):
        terms = [table.da(k, i, j), -(a[(k, i)] * a[(i, j)]), -(a[(k, j)] * a[(j, i)]),
                 a[(k, i)] * a[(k, j)]]
        r, w, sym = _identity(terms, pts)
        results.append((f"{k},{i},{j}", r, w, sym))
    return _combine(results, sys.tol)


@dataclass
class Order0Result:
    flag: bool
    symbolic: bool
    numeric_only: bool
    max_residual: float

    def to_dict(self):
        return {"flag": self.flag, "symbolic": self.symbolic,
                "numeric_only": self.numeric_only, "max_residual": self.max_residual}


def check_darboux_order0(sys: DiagonalSystem, i: int) -> Order0Result:
    """lambda^i depends on u^i only: d_k lambda^i = 0 for every k != i."""
    others = [sys.dlam(i, k) for k in range(1, sys.n + 1) if k != i]
    if all(is_zero(d) for d in others):
        return Order0Result(True, True, False, 0.0)
    pts = sample_points(sys)
    worst = 0.0
    for d in others:
        v = np.abs(evaluate_array(d, pts))
        worst = max(worst, float(np.max(np.where(np.isnan(v), np.inf, v))))
    ok = worst <= sys.tol
    return Order0Result(ok, False, ok, worst)


@dataclass
class Order1Result:
    applicable: bool
    flag: bool
    witness_j: int | None
    max_residual: float
    witness: list | None
    symbolic: bool
    skipped: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return {"applicable": self.applicable, "flag": self.flag, "witness_j": self.witness_j,
                "max_residual": self.max_residual, "witness": self.witness,
                "symbolic": self.symbolic, "skipped": self.skipped, "detail": self.detail}


def active_indices(sys: DiagonalSystem, i: int):
    """Split k != i into those with lambda^i_k nonzero and those skipped."""
    pts = sample_points(sys)
    active, skipped = [], []
    for k in range(1, sys.n + 1):
        if k == i:
            continue
        d = sys.dlam(i, k)
        if is_zero(d):
            skipped.append(k)
            continue
        v = np.abs(evaluate_array(d, pts))
        if np.all(v <= sys.tol):
            skipped.append(k)
        else:
            active.append(k)
    return active, skipped


def check_darboux_order1(sys: DiagonalSystem, table: CoeffTable | None, i: int) -> Order1Result:
    """Criterion for one Riemann invariant of order 1 in the i-th distribution.

    Conditions: the semihamiltonian triples with first index i hold; for the
    active set K = {k : lambda^i_k != 0} all b_ik coincide and
    d_k b_ik + a_ik b_ik = 0. Indices with lambda^i_k = 0 are skipped and
    reported. Not applicable when the order-0 criterion holds.
    """
    if check_darboux_order0(sys, i).flag:
        return Order1Result(False, False, None, 0.0, None, True)
    table = table or coefficient_table(sys)
    pts = sample_points(sys)
    active, skipped = active_indices(sys, i)

    base = []
    for j, k in itertools.permutations([m for m in range(1, sys.n + 1) if m != i], 2):
        if j < k:
            r, w, sym = _identity([table.da(i, k, j), -table.da(i, j, k)], pts)
            base.append((f"semiham {i},{j},{k}", r, w, sym))
    for k in active:
        bik = table.b[(i, k)]
        r, w, sym = _identity([table.db(i, k, k), table.a[(i, k)] * bik], pts)
        base.append((f"closure {k}", r, w, sym))

    best = None
    for j in active:
        res = list(base)
        for k in active:
            if k != j:
                r, w, sym = _identity([table.b[(i, k)], -table.b[(i, j)]], pts)
                res.append((f"b{i}{k}=b{i}{j}", r, w, sym))
        c = _combine(res, sys.tol)
        if best is None or c.max_residual < best[1].max_residual:
            best = (j, c)
        if c.flag:
            break
    j, c = best
    return Order1Result(True, c.flag, j if c.flag else None, c.max_residual, c.witness,
                        c.symbolic and c.flag, skipped, c.detail)


def check_linear_degeneracy(sys: DiagonalSystem) -> list:
    """Per-i flag: d_i lambda^i is syntactically zero."""
    return [is_zero(sys.dlam(i, i)) for i in range(1, sys.n + 1)]


@dataclass
class DiagnosticsReport:
    strictly_hyperbolic: HyperbolicityReport
    semihamiltonian: CheckResult
    commuting_compatibility: CheckResult
    linearly_degenerate: list
    darboux_order0: list
    darboux_order1: list
    overall_darboux_order_le1: bool
    coefficients: CoeffTable

    def to_dict(self):
        return {
            "strictly_hyperbolic": self.strictly_hyperbolic.to_dict(),
            "semihamiltonian": self.semihamiltonian.to_dict(),
            "commuting_compatibility": self.commuting_compatibility.to_dict(),
            "linearly_degenerate": list(self.linearly_degenerate),
            "darboux_order0": [r.to_dict() for r in self.darboux_order0],
            "darboux_order1": [r.to_dict() for r in self.darboux_order1],
            "overall_darboux_order_le1": self.overall_darboux_order_le1,
            "coefficients": self.coefficients.to_dict(),
        }


def full_report(sys: DiagonalSystem) -> DiagnosticsReport:
    hyp = check_hyperbolicity(sys)
    table = coefficient_table(sys)
    o0 = [check_darboux_order0(sys, i) for i in range(1, sys.n + 1)]
    o1 = [check_darboux_order1(sys, table, i) for i in range(1, sys.n + 1)]
    overall = all(a.flag or b.flag for a, b in zip(o0, o1))
    return DiagnosticsReport(
        strictly_hyperbolic=hyp,
        semihamiltonian=check_semihamiltonian(sys, table),
        commuting_compatibility=check_commuting_compatibility(sys, table),
        linearly_degenerate=check_linear_degeneracy(sys),
        darboux_order0=o0, darboux_order1=o1,
        overall_darboux_order_le1=overall, coefficients=table)
