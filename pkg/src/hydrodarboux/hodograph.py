"""Generalized hodograph solutions and finite-difference verification.

Given a commuting flow mu, the solution is read off from the implicit
relations mu^i(u) = lam^i(u) t + x, solved pointwise by safeguarded Newton
iteration with warm starts along a continuation sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .expr import Expr, differentiate, lambdify, parse, to_string
from .grids import SolutionGrid, lattice_axis
from .io import write_csv
from .system import DiagonalSystem, coefficient_table, full_report

__all__ = [
    "SolutionGrid", "VerifyResult", "NotDarbouxIntegrable", "UnsupportedRoute",
    "solve_tsarev", "verify_solution", "pipeline_solve", "write_plot_script",
]

NEWTON_TOL = 1e-12
MAX_ITER = 25


class NotDarbouxIntegrable(ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class UnsupportedRoute(NotImplementedError):
    pass


# ---------------------------------------------------------------------------
# verification

@dataclass
class VerifyResult:
    max_residual: float
    field: np.ndarray
    witness: tuple | None

    def to_dict(self):
        return {"max_residual": self.max_residual, "witness": self.witness,
                "checked_points": int(np.isfinite(self.field).sum())}


def verify_solution(sys: DiagonalSystem, grid: SolutionGrid) -> VerifyResult:
    """Residual of u^i_t = lam^i(u) u^i_x by second-order centered differences.

    The residual at an interior point is
    max_i |u^i_t - lam^i u^i_x| / (1 + |u^i_t| + |lam^i u^i_x|); it is only
    evaluated where the point and its four neighbours are converged. The
    field is stored on ``grid.residual`` as well as returned.
    """
    x, t, u = grid.x, grid.t, grid.u
    if len(x) < 3 or len(t) < 3:
        raise ValueError("verification needs at least 3 points per axis")
    hx = x[2:] - x[:-2]
    ht = t[2:] - t[:-2]
    ux = (u[:, 2:, 1:-1] - u[:, :-2, 1:-1]) / hx[None, :, None]
    ut = (u[:, 1:-1, 2:] - u[:, 1:-1, :-2]) / ht[None, None, :]
    uc = u[:, 1:-1, 1:-1]
    lam = np.stack([np.broadcast_to(lambdify(l)(uc), uc.shape[1:]) for l in sys.lambdas])
    r = np.abs(ut - lam * ux) / (1.0 + np.abs(ut) + np.abs(lam * ux))
    r = r.max(axis=0)
    c = grid.converged
    ok = c[1:-1, 1:-1] & c[2:, 1:-1] & c[:-2, 1:-1] & c[1:-1, 2:] & c[1:-1, :-2]
    field = np.full(c.shape, np.nan)
    inner = np.where(ok, r, np.nan)
    inner = np.where(np.isnan(inner) & ok, np.inf, inner)
    field[1:-1, 1:-1] = inner
    grid.residual = field
    if not np.isfinite(field).any() and not np.isinf(field).any():
        return VerifyResult(float("nan"), field, None)
    k = np.nanargmax(field)
    w = np.unravel_index(k, field.shape)
    return VerifyResult(float(field[w]), field, (float(x[w[0]]), float(t[w[1]])))


# ---------------------------------------------------------------------------
# Tsarev implicit form

def _as_fns(mu, n):
    """Value and gradient callables for mu given as Exprs, strings or callables."""
    vals, grads = [], []
    for m in mu:
        if isinstance(m, str):
            m = parse(m, n)
        if isinstance(m, Expr):
            f = lambdify(m, "numpy")
            d = [lambdify(differentiate(m, k, n), "numpy") for k in range(1, n + 1)]
            vals.append(lambda u, f=f: float(f(u)))
            grads.append(lambda u, d=d: np.array([float(g(u)) for g in d]))
        else:
            vals.append(m)
            grads.append(getattr(m, "gradient", None))
    return vals, grads


def _fd_grad(f, u, h):
    g = np.empty(len(u))
    for k in range(len(u)):
        e = np.zeros(len(u))
        e[k] = h[k]
        g[k] = (f(u + e) - f(u - e)) / (2 * h[k])
    return g


def _newton(F, J, u0, tol, max_iter):
    """Safeguarded Newton: returns (u, converged, iterations, singular)."""
    u = np.array(u0, dtype=float)
    r = F(u)
    norm = np.max(np.abs(r)) if np.all(np.isfinite(r)) else np.inf
    for it in range(max_iter + 1):
        if norm <= tol:
            return u, True, it, False
        if it == max_iter or not np.isfinite(norm):
            break
        A = J(u)
        if not np.all(np.isfinite(A)):
            return u, False, it, True
        try:
            cond = np.linalg.cond(A)
        except np.linalg.LinAlgError:
            cond = np.inf
        if not np.isfinite(cond) or cond > 1e14:
            return u, False, it, True
        step = np.linalg.solve(A, -r)
        lam = 1.0
        for _ in range(30):
            trial = u + lam * step
            rt = F(trial)
            nt = np.max(np.abs(rt)) if np.all(np.isfinite(rt)) else np.inf
            if nt < norm or nt <= tol:
                break
            lam /= 2
        else:
            return u, False, it + 1, False
        u, r, norm = trial, rt, nt
    return u, False, max_iter, False


def solve_tsarev(sys: DiagonalSystem, mu, x_axis, t_axis, seed, sweep: str = "row",
                 newton_tol: float = NEWTON_TOL, max_iter: int = MAX_ITER,
                 fd_step=None) -> SolutionGrid:
    """Solve mu^i(u) - lam^i(u) t - x = 0 at every (x, t) lattice point.

    Parameters
    ----------
    mu : sequence
        n Exprs (exact Jacobian) or callables of a point ``u``; callables may
        carry a ``gradient`` attribute, otherwise centered differences with
        step ``fd_step`` (default 1e-6 * (1 + |u|)) are used.
    seed : array_like
        Initial guess at ``(x_axis[0], t_axis[0])``.
    sweep : {'row', 'col'}
        'row' walks along x for each t in turn, 'col' along t for each x.
        Each point starts from its predecessor in the sweep, falling back to
        any converged lattice neighbour and finally to the seed.
    """
    n = sys.n
    x = np.asarray(x_axis, dtype=float)
    t = np.asarray(t_axis, dtype=float)
    vals, grads = _as_fns(mu, n)
    lam = [lambdify(l, "numpy") for l in sys.lambdas]
    dlam = [[lambdify(sys.dlam(i, k), "numpy") for k in range(1, n + 1)] for i in range(1, n + 1)]

    def grad(i, u):
        g = grads[i]
        if g is not None:
            return np.asarray(g(u), dtype=float)
        h = fd_step if fd_step is not None else 1e-6 * (1.0 + np.abs(u))
        h = np.broadcast_to(np.asarray(h, dtype=float), u.shape)
        return _fd_grad(vals[i], u, h)

    shape = (len(x), len(t))
    U = np.full((n,) + shape, np.nan)
    conv = np.zeros(shape, dtype=bool)
    iters = np.zeros(shape, dtype=int)
    sing = np.zeros(shape, dtype=bool)
    if sweep == "row":
        order = [(a, b) for b in range(len(t)) for a in range(len(x))]
    elif sweep == "col":
        order = [(a, b) for a in range(len(x)) for b in range(len(t))]
    else:
        raise ValueError("sweep must be 'row' or 'col'")
    seed = np.asarray(seed, dtype=float)
    prev = None
    for a, b in order:
        xv, tv = x[a], t[b]

        def F(u):
            return np.array([vals[i](u) - float(lam[i](u)) * tv - xv for i in range(n)])

        def J(u):
            return np.array([grad(i, u) - tv * np.array([float(d(u)) for d in dlam[i]])
                             for i in range(n)])

        starts = []
        if prev is not None and conv[prev]:
            starts.append(U[(slice(None),) + prev])
        for da, db in ((-1, 0), (0, -1), (1, 0), (0, 1)):
            p = (a + da, b + db)
            if 0 <= p[0] < shape[0] and 0 <= p[1] < shape[1] and conv[p]:
                starts.append(U[(slice(None),) + p])
        starts.append(seed)
        best = None
        cands = starts[:2]
        if not any(c is seed for c in cands):
            cands.append(seed)
        for s in cands:
            u, ok, it, sg = _newton(F, J, s, newton_tol, max_iter)
            if best is None or ok:
                best = (u, ok, it, sg)
            if ok:
                break
        u, ok, it, sg = best
        U[:, a, b] = u if ok else np.nan
        conv[a, b] = ok
        iters[a, b] = it
        sing[a, b] = sg
        prev = (a, b)
    return SolutionGrid(x, t, U, conv, iters, sing,
                        meta={"route": "tsarev", "sweep": sweep, "newton_tol": newton_tol,
                              "max_iter": max_iter, "converged": int(conv.sum()),
                              "singular": int(sing.sum())})


# ---------------------------------------------------------------------------
# end-to-end

def _b_zero_everywhere(sys, table):
    from .integrate import b_is_zero
    return [b_is_zero(sys, table, i) for i in range(1, sys.n + 1)]


def pipeline_solve(sys: DiagonalSystem, phis: Sequence | None, base, x_axis, t_axis, *,
                   mu=None, force: bool = False, u_counts: int | Sequence[int] = 41,
                   substeps: int = 16, interp: str = "linear") -> SolutionGrid:
    """Diagnose, build a commuting flow or the b = 0 closed form, solve and verify.

    Parameters
    ----------
    phis : sequence of one-variable expressions in ``u1``
        The drivers phi_i.
    base : tuple
        ``(x0, t0, u0)``; the solution passes through u0 at (x0, t0), which
        must be the first node of both axes.
    mu : sequence, optional
        A commuting flow given directly; skips integration and goes straight
        to the implicit solve.

    Routes
    ------
    ``given-mu``: Newton on the implicit relations with the supplied mu.
    ``lame``: every component has b = 0. H_i come from Lame quadrature,
    P^i = H_i / (phi_i - t lam^i_i H_i) and u is integrated along orbits.
    ``frobenius``: every component has b != 0 or a vanishing a-row. mu is
    integrated on a u-lattice over the domain, interpolated and the implicit
    relations are solved.
    Systems mixing both kinds are refused with :class:`UnsupportedRoute`.
    """
    from .integrate import PfaffianSpec, integrate_frobenius_mu, lame_function, p_for_b_zero, integrate_orbit_solution

    x0, t0, u0 = base
    u0 = np.asarray(u0, dtype=float)
    x = np.asarray(x_axis, dtype=float)
    t = np.asarray(t_axis, dtype=float)
    if not (np.isclose(x[0], x0) and np.isclose(t[0], t0)):
        raise ValueError("(x0, t0) must be the first node of the (x, t) lattice")
    report = full_report(sys)
    if not report.overall_darboux_order_le1 and not force:
        bad = [i + 1 for i, (a, b) in enumerate(zip(report.darboux_order0, report.darboux_order1))
               if not (a.flag or b.flag)]
        raise NotDarbouxIntegrable(
            f"system is not Darboux integrable in order <= 1 (indices {bad} fail); "
            "use force=True to proceed anyway", report)
    table = coefficient_table(sys)

    if mu is not None:
        grid = solve_tsarev(sys, mu, x, t, u0)
        grid.meta["route"] = "given-mu"
    else:
        if phis is None or len(phis) != sys.n:
            raise ValueError(f"need {sys.n} driver functions phi_i")
        bzero = _b_zero_everywhere(sys, table)
        order0 = [r.flag for r in report.darboux_order0]
        if all(bzero):
            P = [p_for_b_zero(sys, table, i, lame_function(table, i, u0), phis[i - 1], base=u0)
                 for i in range(1, sys.n + 1)]
            grid = integrate_orbit_solution(sys, P, (x0, t0, u0), x, t, substeps=substeps,
                                            verify=False)
            grid.meta["route"] = "lame"
        elif all(o or not z for o, z in zip(order0, bzero)):
            counts = [u_counts] * sys.n if np.isscalar(u_counts) else list(u_counts)
            axes = [_axis_through(lo, hi, c, v) for (lo, hi), c, v in zip(sys.domain, counts, u0)]
            spec = PfaffianSpec.from_table(sys, table, phis)
            lam0 = np.array([float(lambdify(l, "math")(u0)) for l in sys.lambdas])
            mu0 = lam0 * t0 + x0
            grids = integrate_frobenius_mu(spec, mu0, axes, tuple(u0), substeps=substeps, tol=sys.tol)
            mu_fns = [_interp_fn(g, interp) for g in grids]
            grid = solve_tsarev(sys, mu_fns, x, t, u0)
            grid.meta.update(route="frobenius", interp=interp,
                             mu_defect=max(g.defect for g in grids),
                             commuting_residual=grids[0].meta["commuting_residual"])
        else:
            raise UnsupportedRoute(
                "components with b = 0 and b != 0 are mixed; neither the Lame closed form "
                "nor the Frobenius integration covers every index")
    res = verify_solution(sys, grid)
    grid.meta["max_residual"] = res.max_residual
    grid.meta["darboux_order_le1"] = report.overall_darboux_order_le1
    return grid


def _axis_through(lo, hi, count, v):
    """Uniform axis over [lo, hi] (about ``count`` nodes) shifted to contain ``v``."""
    h = (hi - lo) / (count - 1)
    k_lo = int(np.floor((v - lo) / h + 1e-9))
    k_hi = int(np.floor((hi - v) / h + 1e-9))
    return v + h * np.arange(-k_lo, k_hi + 1)


def _interp_fn(g, method):
    it = g.interpolator(method)
    lo = np.array([ax[0] for ax in g.axes])
    hi = np.array([ax[-1] for ax in g.axes])
    steps = np.array(g.steps)

    def f(u):
        u = np.asarray(u, dtype=float)
        if np.any(u < lo) or np.any(u > hi):
            return np.nan
        return float(it(u[None, :])[0])

    def gradient(u):
        # centered differences at the cell scale, one-sided at the box faces
        u = np.asarray(u, dtype=float)
        out = np.empty(len(u))
        for k in range(len(u)):
            h = steps[k] / 2
            a = max(u[k] - h, lo[k])
            b = min(u[k] + h, hi[k])
            ua, ub = u.copy(), u.copy()
            ua[k], ub[k] = a, b
            out[k] = (f(ub) - f(ua)) / (b - a)
        return out

    f.gradient = gradient
    return f


# ---------------------------------------------------------------------------
# output

def write_plot_script(path, csv_name: str, n: int, t_values: Sequence[float]) -> Path:
    """Emit a matplotlib script that draws u^i(x, t) profiles at fixed t."""
    tv = ", ".join(repr(float(v)) for v in t_values)
    lines = [
        "import numpy as np",
        "import matplotlib.pyplot as plt",
        "",
        f'data = np.genfromtxt("{csv_name}", delimiter=",", names=True)',
        f"t_values = [{tv}]",
        f"fig, axes = plt.subplots(1, {n}, figsize=(4 * {n}, 3), squeeze=False)",
        f"for i in range({n}):",
        "    ax = axes[0, i]",
        "    for tv in t_values:",
        "        rows = np.isclose(data['t'], tv) & (data['converged'] > 0)",
        "        ax.plot(data['x'][rows], data['u%d' % (i + 1)][rows], label='t=%g' % tv)",
        "    ax.set_xlabel('x')",
        "    ax.set_ylabel('u%d' % (i + 1))",
        "    ax.legend()",
        "fig.tight_layout()",
        f'fig.savefig("{Path(csv_name).stem}.png", dpi=120)',
        "",
    ]
    path = Path(path)
    path.write_text("\n".join(lines))
    return path
