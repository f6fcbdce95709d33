"""Conservation laws, focal submanifolds and the congruence Laplace transformation.

A conservation law N dx + M dt of the diagonal system has a density N
solving N_ij = a_ij N_i + a_ji N_j (i != j) and a flux with
d_i M = lam^i d_i N. Given n such pairs the i-th focal submanifold is
parametrised in the affine chart y = -Y / Y^{n+1} by

    y^0 = lam^i,   y^k = lam^i N^k - M^k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .expr import Expr, differentiate, evaluate_array, is_zero, lambdify, parse, simplify, to_string
from .grids import ScalarFieldGrid, base_index, fd_derivative, mesh_points
from .io import write_csv
from .laplace import CollidingCoefficients, DegenerateLaplace, laplace_transform
from .system import CoeffTable, DiagonalSystem, coefficient_table, residual_max, sample_points

__all__ = [
    "ConservationPair", "FocalChart", "DependentDensities", "PrereqViolated",
    "NotConservationLaw", "DenominatorVanishes",
    "solve_density", "focal_chart", "laplace_transform_congruence",
    "verify_speed_invariance", "reciprocal_speeds", "pencil_defect", "write_mesh",
    "cumulative_integral",
]


class DependentDensities(ValueError):
    pass


class PrereqViolated(ValueError):
    pass


class NotConservationLaw(ValueError):
    pass


class DenominatorVanishes(ZeroDivisionError):
    pass


# ---------------------------------------------------------------------------
# quadrature on lattices

def cumulative_integral(f: np.ndarray, h: float, axis: int, start: int) -> np.ndarray:
    """Integral of ``f`` along ``axis`` from node ``start`` to every node.

    Uses the four-point cubic rule h/24 (-f0 + 13 f1 + 13 f2 - f3) per cell
    with one-sided variants next to the ends, so the error is O(h^4).
    Falls back to the trapezoid rule on lines with fewer than four nodes.
    """
    v = np.moveaxis(np.asarray(f, dtype=float), axis, 0)
    m = len(v)
    cell = np.empty((max(m - 1, 0),) + v.shape[1:])
    if m >= 4:
        cell[0] = h / 24 * (9 * v[0] + 19 * v[1] - 5 * v[2] + v[3])
        cell[-1] = h / 24 * (9 * v[-1] + 19 * v[-2] - 5 * v[-3] + v[-4])
        if m > 3:
            cell[1:-1] = h / 24 * (-v[:-3] + 13 * v[1:-2] + 13 * v[2:-1] - v[3:])
    elif m >= 2:
        cell[:] = h / 2 * (v[:-1] + v[1:])
    out = np.zeros_like(v)
    if m >= 2:
        cum = np.concatenate([np.zeros((1,) + v.shape[1:]), np.cumsum(cell, axis=0)])
        out = cum - cum[start]
    return np.moveaxis(out, 0, axis)


def _staircase_quad(fields, steps, b_idx, order):
    """Integrate the gradient ``fields[k]`` along the staircase ``order``; 0 at the base."""
    n = len(fields)
    total = np.zeros(fields[0].shape)
    for pos, k in enumerate(order):
        sl = [slice(None)] * n
        for later in order[pos + 1:]:
            sl[later] = slice(b_idx[later], b_idx[later] + 1)
        total = total + cumulative_integral(fields[k][tuple(sl)], steps[k], k, b_idx[k])
    return total


# ---------------------------------------------------------------------------
# conservation pairs

@dataclass(eq=False)
class ConservationPair:
    """Density N and flux M on a u-lattice with gradients g_i = d_i N.

    ``N_expr`` and ``M_expr`` are set when the pair is known in closed form.
    """

    N: ScalarFieldGrid
    M: ScalarFieldGrid
    g: list
    N_expr: Expr | None = None
    M_expr: Expr | None = None
    residuals: dict = field(default_factory=dict)
    fine: "ConservationPair | None" = None
    refine: int = 1

    @property
    def axes(self):
        return self.N.axes

    @classmethod
    def from_exprs(cls, sys: DiagonalSystem, N, M, axes, base=None, table=None) -> "ConservationPair":
        """Closed-form pair evaluated on the lattice, after validating both PDEs."""
        n = sys.n
        N = parse(N, n) if isinstance(N, str) else N
        M = parse(M, n) if isinstance(M, str) else M
        table = table or coefficient_table(sys)
        pts = sample_points(sys)
        flux = max(residual_max([differentiate(M, i, n), -(sys.lam(i) * differentiate(N, i, n))], pts)[0]
                   for i in range(1, n + 1))
        dens = 0.0
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                Ni, Nj = differentiate(N, i, n), differentiate(N, j, n)
                terms = [differentiate(Ni, j, n), -(table.a[(i, j)] * Ni), -(table.a[(j, i)] * Nj)]
                dens = max(dens, residual_max(terms, pts)[0])
        if flux > 1e3 * sys.tol or dens > 1e3 * sys.tol:
            raise NotConservationLaw(
                f"({to_string(N)}, {to_string(M)}) fails the conservation-law equations: "
                f"flux residual {flux:.3g}, density residual {dens:.3g}")
        axes = [np.asarray(ax, dtype=float) for ax in axes]
        P = mesh_points(axes)
        base = tuple(float(ax[0]) for ax in axes) if base is None else tuple(base)
        ev = lambda e: np.broadcast_to(lambdify(e)(P), P.shape[1:]).copy()
        g = [ScalarFieldGrid(axes, ev(differentiate(N, i, n)), base, name=f"g{i}")
             for i in range(1, n + 1)]
        return cls(ScalarFieldGrid(axes, ev(N), base, name="N"),
                   ScalarFieldGrid(axes, ev(M), base, name="M"), g, N, M,
                   {"flux_residual": flux, "density_residual": dens, "mixed_defect": 0.0})

    def write(self, stem):
        pts = mesh_points(self.axes).reshape(len(self.axes), -1).T
        cols = [pts, self.N.values.reshape(-1, 1), self.M.values.reshape(-1, 1)]
        cols += [gi.values.reshape(-1, 1) for gi in self.g]
        n = len(self.axes)
        header = [f"u{k}" for k in range(1, n + 1)] + ["N", "M"] + [f"N_{k}" for k in range(1, n + 1)]
        return write_csv(f"{stem}.csv", header, np.hstack(cols))


def _one_var(e):
    e = parse(e, 1) if isinstance(e, str) else e
    f, d = lambdify(e), lambdify(differentiate(e, 1, 1))
    return (lambda v: np.broadcast_to(f(np.asarray(v)[None]), np.shape(v)),
            lambda v: np.broadcast_to(d(np.asarray(v)[None]), np.shape(v)))


def solve_density(sys: DiagonalSystem, table: CoeffTable | None, axis_data: Sequence, axes,
                  base, refine: int = 4, M0: float = 0.0, max_iter: int = 200) -> ConservationPair:
    """Density and flux from their restrictions to the coordinate axes through ``base``.

    ``axis_data[i-1]`` is N(base + (s - base_i) e_i) as a one-variable
    expression in ``u1``. The gradients g_i solve the Goursat problem
    d_j g_i = a_ij g_i + a_ji g_j (j != i) with g_i prescribed on the i-th
    axis line; it is solved by Picard iteration of its integral form on a
    lattice refined ``refine`` times, then N and M = int lam^i g_i du^i are
    recovered by staircase quadrature and sampled back on ``axes``.
    """
    n = sys.n
    table = table or coefficient_table(sys)
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    b_idx = base_index(axes, base)
    fns = [_one_var(e) for e in axis_data]
    n0 = [float(f(np.array(b))) for (f, _), b in zip(fns, base)]
    if max(n0) - min(n0) > 1e-12 * (1 + max(abs(v) for v in n0)):
        raise ValueError(f"axis data disagree at the base point: {n0}")

    fine = [np.linspace(ax[0], ax[-1], (len(ax) - 1) * refine + 1) if len(ax) > 1 else ax
            for ax in axes]
    fb = tuple(b * refine if len(ax) > 1 else 0 for b, ax in zip(b_idx, axes))
    steps = [float(ax[1] - ax[0]) if len(ax) > 1 else 1.0 for ax in fine]
    P = mesh_points(fine)
    shape = P.shape[1:]
    A = {(i, j): np.broadcast_to(lambdify(table.a[(i + 1, j + 1)])(P), shape)
         for i in range(n) for j in range(n) if i != j}
    lam = [np.broadcast_to(lambdify(l)(P), shape) for l in sys.lambdas]
    seed = [np.broadcast_to(fns[i][1](P[i]), shape).astype(float) for i in range(n)]

    g = [s.copy() for s in seed]
    change = prev = np.inf
    iters = 0
    for iters in range(1, max_iter + 1):
        new = []
        for i in range(n):
            total = seed[i].copy()
            js = [j for j in range(n) if j != i]
            for pos, j in enumerate(js):
                F = A[(i, j)] * g[i] + A[(j, i)] * g[j]
                sl = [slice(None)] * n
                for later in js[pos + 1:]:
                    sl[later] = slice(fb[later], fb[later] + 1)
                total = total + cumulative_integral(F[tuple(sl)], steps[j], j, fb[j])
            new.append(total)
        change = max(float(np.max(np.abs(a - b) / (1 + np.abs(b)))) for a, b in zip(new, g))
        g = new
        if not np.isfinite(change):
            raise FloatingPointError("density iteration diverged")
        # stop at convergence or once rounding noise stops the decrease
        if change < 1e-15 or (change < 1e-12 and change > 0.5 * prev):
            break
        prev = change

    N = n0[0] + _staircase_quad(g, steps, fb, list(range(n)))
    N_alt = n0[0] + _staircase_quad(g, steps, fb, list(range(n))[::-1])
    flux = [lam[k] * g[k] for k in range(n)]
    M = M0 + _staircase_quad(flux, steps, fb, list(range(n)))

    sub = tuple(slice(None, None, refine) if len(ax) > 1 else slice(None) for ax in axes)
    bt = tuple(float(b) for b in base)
    gg = [ScalarFieldGrid(axes, gi[sub].copy(), bt, name=f"g{i + 1}") for i, gi in enumerate(g)]
    pair = ConservationPair(ScalarFieldGrid(axes, N[sub].copy(), bt, name="N"),
                            ScalarFieldGrid(axes, M[sub].copy(), bt, name="M"), gg)
    path = float(np.max(np.abs(N - N_alt) / (1 + np.abs(N))))
    pair.N.defect = path
    # differences are taken on the refined lattice where g was computed
    fine_pair = ConservationPair(ScalarFieldGrid(fine, N, bt), ScalarFieldGrid(fine, M, bt),
                                 [ScalarFieldGrid(fine, gi, bt) for gi in g])
    pair.residuals = _pair_residuals(sys, table, fine_pair)
    pair.fine, pair.refine = fine_pair, refine
    pair.residuals.update(picard_iterations=iters, picard_change=change, path_defect=path)
    return pair


def _pair_residuals(sys, table, pair) -> dict:
    """Fourth-order finite-difference residuals of the defining equations."""
    n = sys.n
    axes = pair.axes
    h = [float(ax[1] - ax[0]) if len(ax) > 1 else 1.0 for ax in axes]
    P = mesh_points(axes)
    g = [gi.values for gi in pair.g]
    mixed = dens = flux = 0.0
    for i in range(n):
        for j in range(n):
            if i == j or len(axes[j]) < 5:
                continue
            dj_gi = fd_derivative(g[i], h[j], j)
            if len(axes[i]) >= 5:
                di_gj = fd_derivative(g[j], h[i], i)
                r = np.abs(dj_gi - di_gj) / (1 + np.abs(dj_gi) + np.abs(di_gj))
                mixed = max(mixed, _nanmax(r))
            rhs = lambdify(table.a[(i + 1, j + 1)])(P) * g[i] + lambdify(table.a[(j + 1, i + 1)])(P) * g[j]
            dens = max(dens, _nanmax(np.abs(dj_gi - rhs) / (1 + np.abs(dj_gi) + np.abs(rhs))))
    for i in range(n):
        if len(axes[i]) < 5:
            continue
        dM = fd_derivative(pair.M.values, h[i], i)
        rhs = np.broadcast_to(lambdify(sys.lam(i + 1))(P), P.shape[1:]) * g[i]
        flux = max(flux, _nanmax(np.abs(dM - rhs) / (1 + np.abs(dM) + np.abs(rhs))))
    return {"mixed_defect": mixed, "density_residual": dens, "flux_residual": flux}


def _nanmax(a) -> float:
    a = np.asarray(a)
    return float(np.nanmax(a)) if np.any(np.isfinite(a)) else 0.0


# ---------------------------------------------------------------------------
# focal charts

@dataclass(eq=False)
class FocalChart:
    """Affine focal points y^0..y^n on the lattice for the index ``i``."""

    i: int
    axes: list
    y: np.ndarray
    incidence: float
    mask: np.ndarray

    def write_csv(self, path):
        pts = mesh_points(self.axes).reshape(len(self.axes), -1).T
        ys = self.y.reshape(self.y.shape[0], -1).T
        header = [f"u{k}" for k in range(1, len(self.axes) + 1)] + [f"y{k}" for k in range(self.y.shape[0])]
        return write_csv(path, header, np.hstack([pts, ys]))


def focal_chart(sys: DiagonalSystem, pairs: Sequence[ConservationPair], i: int,
                det_floor: float = 1e-10) -> FocalChart:
    """The i-th focal submanifold y^0 = lam^i, y^k = lam^i N^k - M^k.

    Raises :class:`DependentDensities` if the Jacobian of (N^1..N^n) is
    singular at some lattice node. ``incidence`` is the largest violation of
    the line equations y^k = N^k y^0 - M^k.
    """
    n = sys.n
    if len(pairs) != n:
        raise ValueError(f"need {n} conservation pairs")
    axes = pairs[0].axes
    P = mesh_points(axes)
    Jac = np.stack([np.stack([p.g[k].values for k in range(n)], axis=-1) for p in pairs], axis=-2)
    det = np.linalg.det(Jac)
    scale = 1.0 + np.prod(np.max(np.abs(Jac), axis=-1), axis=-1)
    bad = ~(np.abs(det) > det_floor * scale)
    if bad.any():
        w = np.argwhere(bad)[0]
        raise DependentDensities(f"densities are dependent near u={[float(P[(k,) + tuple(w)]) for k in range(n)]}")
    lam = np.broadcast_to(lambdify(sys.lam(i))(P), P.shape[1:])
    y = np.empty((n + 1,) + P.shape[1:])
    y[0] = lam
    for k, p in enumerate(pairs, 1):
        y[k] = lam * p.N.values - p.M.values
    inc = max(float(np.max(np.abs(y[k] - (p.N.values * y[0] - p.M.values))))
              for k, p in enumerate(pairs, 1))
    mask = ~np.all(np.isfinite(y), axis=0)
    return FocalChart(i, axes, y, inc, mask)


def pencil_defect(chart: FocalChart) -> float:
    """Largest variance of y^0 along u^k-lines, k != i (0 for an order-0 index)."""
    worst = 0.0
    for k in range(len(chart.axes)):
        if k == chart.i - 1:
            continue
        worst = max(worst, float(np.nanmax(np.var(chart.y[0], axis=k))))
    return worst


def write_mesh(chart: FocalChart, path) -> Path:
    """Indexed triangle mesh (``v x y z`` / ``f a b c`` lines) of an n = 2 chart."""
    if len(chart.axes) != 2:
        raise ValueError("meshes are emitted for n = 2 charts only")
    n1, n2 = (len(ax) for ax in chart.axes)
    ok = ~chart.mask
    index = -np.ones((n1, n2), dtype=int)
    lines = [f"# focal chart i={chart.i}: vertices (y0, y1, y2) over the (u1, u2) lattice"]
    count = 0
    for a in range(n1):
        for b in range(n2):
            if ok[a, b]:
                count += 1
                index[a, b] = count
                lines.append("v " + " ".join(repr(float(v)) for v in chart.y[:, a, b]))
    for a in range(n1 - 1):
        for b in range(n2 - 1):
            q = index[a, b], index[a + 1, b], index[a + 1, b + 1], index[a, b + 1]
            if q[0] > 0 and q[1] > 0 and q[2] > 0:
                lines.append(f"f {q[0]} {q[1]} {q[2]}")
            if q[0] > 0 and q[2] > 0 and q[3] > 0:
                lines.append(f"f {q[0]} {q[2]} {q[3]}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# Laplace transformation of the congruence

def laplace_transform_congruence(sys: DiagonalSystem, table: CoeffTable | None,
                                 pairs: Sequence[ConservationPair], i: int, j: int) -> list:
    """Transformed pairs N' = N - d_j N / a_ij, M' = M - lam^i d_j N / a_ij.

    Closed-form pairs are transformed symbolically as well.
    """
    table = table or coefficient_table(sys)
    if table.zero_flags[(i, j)]:
        raise PrereqViolated(f"a_{i}{j} vanishes identically")
    return [_transform_pair(sys, table, p, i, j) for p in pairs]


def _transform_pair(sys, table, p, i, j):
    if p.fine is not None and p.N_expr is None:
        # transform on the refined lattice and sample back
        fb = _transform_pair(sys, table, p.fine, i, j)
        r = p.refine
        sub = tuple(slice(None, None, r) if len(ax) > 1 else slice(None) for ax in p.axes)
        grid = lambda f: ScalarFieldGrid(p.axes, f.values[sub].copy(), p.N.base, name=f.name)
        return ConservationPair(grid(fb.N), grid(fb.M), [grid(gk) for gk in fb.g],
                                fine=fb, refine=r)
    n = sys.n
    aij = table.a[(i, j)]
    P = mesh_points(p.axes)
    a = np.broadcast_to(lambdify(aij)(P), P.shape[1:])
    lam = np.broadcast_to(lambdify(sys.lam(i))(P), P.shape[1:])
    dj = p.g[j - 1].values
    with np.errstate(divide="ignore", invalid="ignore"):
        Nb = p.N.values - dj / a
        Mb = p.M.values - lam * dj / a
    base = p.N.base
    Ne = Me = None
    if p.N_expr is not None:
        djN = differentiate(p.N_expr, j, n)
        Ne = simplify(p.N_expr - djN / aij)
        Me = simplify(p.M_expr - sys.lam(i) * djN / aij)
        gb = [ScalarFieldGrid(p.axes, np.broadcast_to(lambdify(differentiate(Ne, k, n))(P),
                                                      P.shape[1:]).copy(), base, name=f"g{k}")
              for k in range(1, n + 1)]
    else:
        h = [float(ax[1] - ax[0]) for ax in p.axes]
        gb = [ScalarFieldGrid(p.axes, fd_derivative(Nb, h[k], k), base, name=f"g{k + 1}")
              for k in range(n)]
    return ConservationPair(ScalarFieldGrid(p.axes, Nb, base, name="N"),
                            ScalarFieldGrid(p.axes, Mb, base, name="M"), gb, Ne, Me)


def _expected_speeds(sys, table, i, j):
    """Speed formulas of the transformed conservation laws; None where undefined."""
    n = sys.n
    D = simplify(table.a[(j, i)] - table.da(i, j, i) / table.a[(i, j)])
    out = {}
    for m in range(1, n + 1):
        if m == j:
            out[m] = sys.lam(i)
        elif m == i:
            out[m] = None if is_zero(D) else simplify(sys.lam(i) + sys.dlam(i, i) / D)
        else:
            # the coefficient is a_mj: the transformed speed formula, not a_mi
            aij, amj = table.a[(i, j)], table.a[(m, j)]
            diff = simplify(aij - amj)
            out[m] = None if is_zero(diff) else simplify((aij * sys.lam(m) - amj * sys.lam(i)) / diff)
    return out, D


def verify_speed_invariance(sys: DiagonalSystem, table: CoeffTable | None,
                            pairs: Sequence[ConservationPair], i: int, j: int,
                            n_samples: int = 50, transformed=None) -> dict:
    """Check d_m M' = s_m d_m N' for the transformed pairs and extract s_m.

    For every direction m the extracted speed is the least-squares quotient
    sum_k d_m M'^k d_m N'^k / sum_k (d_m N'^k)^2 over the pairs, evaluated
    exactly for closed-form pairs and by fourth-order differences otherwise,
    at ``n_samples`` seeded interior lattice nodes. The relations are checked
    against the transformed speed formulas and the extracted speeds against
    the speeds returned by :func:`laplace_transform` (the formulas when that
    step is degenerate). Directions where a formula is undefined (b_ij = 0
    for m = i) are reported as degenerate.
    """
    table = table or coefficient_table(sys)
    n = sys.n
    bar = transformed if transformed is not None else laplace_transform_congruence(sys, table, pairs, i, j)
    expected, D = _expected_speeds(sys, table, i, j)
    try:
        step = laplace_transform(sys, table, i, j)
    except (DegenerateLaplace, CollidingCoefficients):
        step = None
    axes = pairs[0].axes
    rng = np.random.default_rng(sys.seed)
    margin = 2
    ranges = [np.arange(margin, len(ax) - margin) if len(ax) > 2 * margin else np.arange(len(ax))
              for ax in axes]
    idx = np.stack([rng.choice(r, size=n_samples) for r in ranges], axis=1)
    P = mesh_points(axes)
    pts = np.array([[P[(k,) + tuple(ix)] for k in range(n)] for ix in idx])
    closed = all(p.N_expr is not None for p in bar)
    h = [float(ax[1] - ax[0]) for ax in axes]

    def deriv(p, which, m):
        if closed:
            e = p.N_expr if which == "N" else p.M_expr
            return evaluate_array(differentiate(e, m, n), pts)
        if p.fine is not None:
            # differences on the refined lattice at the same nodes
            src, r = p.fine, p.refine
            hf = [float(ax[1] - ax[0]) for ax in src.axes]
            grid = src.N.values if which == "N" else src.M.values
            d = fd_derivative(grid, hf[m - 1], m - 1)
            return np.array([d[tuple(ix * r)] for ix in idx])
        grid = p.N.values if which == "N" else p.M.values
        d = fd_derivative(grid, h[m - 1], m - 1)
        return np.array([d[tuple(ix)] for ix in idx])

    report = {"pair": [i, j], "closed_form": closed, "samples": n_samples,
              "degenerate_directions": [], "directions": {}}
    worst_rel = worst_speed = 0.0
    extracted = {}
    for m in range(1, n + 1):
        dN = np.stack([deriv(p, "N", m) for p in bar])
        dM = np.stack([deriv(p, "M", m) for p in bar])
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.sum(dM * dN, axis=0) / np.sum(dN * dN, axis=0)
        extracted[m] = s
        entry = {}
        if expected[m] is None:
            report["degenerate_directions"].append(m)
            entry["degenerate"] = True
        else:
            lam_bar = evaluate_array(expected[m], pts)
            rel = np.abs(dM - lam_bar * dN) / (1 + np.abs(dM) + np.abs(lam_bar * dN))
            ref = evaluate_array(step.lambdas[m - 1], pts) if step is not None else lam_bar
            sp = np.abs(s - ref) / (1 + np.abs(ref))
            entry.update(relation_residual=_nanmax(rel), speed_error=_nanmax(sp))
            worst_rel = max(worst_rel, entry["relation_residual"])
            worst_speed = max(worst_speed, entry["speed_error"])
        report["directions"][str(m)] = entry
    report["speeds_from"] = "laplace_transform" if step is not None else "relation formulas"
    report["max_relation_residual"] = worst_rel
    report["max_speed_error"] = worst_speed
    report["extracted"] = {str(m): v for m, v in extracted.items()}
    report["points"] = pts
    return report


# ---------------------------------------------------------------------------
# reciprocal transformations

def reciprocal_speeds(sys: DiagonalSystem, B, A, N, M) -> DiagonalSystem:
    """Speeds (B lam^i - A) / (M - N lam^i) after dX = B dx + A dt, dT = N dx + M dt."""
    n = sys.n
    B, A, N, M = (parse(e, n) if isinstance(e, str) else e for e in (B, A, N, M))
    pts = sample_points(sys)
    for name, (dens, flux) in (("(B, A)", (B, A)), ("(N, M)", (N, M))):
        for i in range(1, n + 1):
            r, w = residual_max([differentiate(flux, i, n), -(sys.lam(i) * differentiate(dens, i, n))], pts)
            if r > 1e3 * sys.tol:
                raise NotConservationLaw(f"{name} is not a conservation law: residual {r:.3g} at u={w}")
    speeds = []
    for i in range(1, n + 1):
        den = simplify(M - N * sys.lam(i))
        vals = np.abs(evaluate_array(den, pts))
        if is_zero(den) or not np.all(vals >= sys.tol):
            raise DenominatorVanishes(f"M - N lam^{i} vanishes on the domain")
        speeds.append(simplify((B * sys.lam(i) - A) / den))
    return DiagonalSystem(tuple(speeds), sys.domain, eps_hyp=sys.eps_hyp, tol=sys.tol,
                          samples=sys.samples, seed=sys.seed, name=f"{sys.name}|reciprocal")
