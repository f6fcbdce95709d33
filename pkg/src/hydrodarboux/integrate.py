"""Numerical integration of the closed Pfaffian systems.

Covers Lame coefficients (d_k ln H_i = a_ik), commuting flows from
d mu^i = b_i (mu^i - phi_i(u^i)) du^i + sum_k a_ik (mu^k - mu^i) du^k,
the closed form P^i = H_i / (phi_i - t lam^i_i H_i) when b = 0, the orbit
system du^i = P^i (dx + lam^i dt) and the two-component quadrature.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad_vec

from .expr import Expr, differentiate, evaluate_array, is_zero, lambdify, parse, simplify
from .grids import BlowUp, ScalarFieldGrid, SolutionGrid, base_index, fd_derivative, mesh_points, staircase
from .system import (
    CoeffTable,
    DiagonalSystem,
    active_indices,
    check_darboux_order0,
    check_darboux_order1,
    residual_max,
    sample_points,
)

__all__ = [
    "QuadratureError", "NonIntegrableWarning", "DenominatorZero", "SingularMap", "OmegaNotClosed",
    "BlowUp", "PfaffianSpec", "PField", "N2Quadrature",
    "lame_coefficients", "lame_function", "integrate_frobenius_mu", "p_for_b_zero",
    "integrate_orbit_solution", "solve_n2_quadrature", "phi_function", "b_is_zero",
]


class QuadratureError(ArithmeticError):
    pass


class DenominatorZero(ZeroDivisionError):
    pass


class SingularMap(ArithmeticError):
    pass


class OmegaNotClosed(ArithmeticError):
    pass


class NonIntegrableWarning(RuntimeWarning):
    pass


def phi_function(phi) -> Callable:
    """Vectorised one-variable callable from an Expr or string in ``u1``, or a callable."""
    if callable(phi) and not isinstance(phi, Expr):
        return phi
    e = parse(phi, 1) if isinstance(phi, str) else phi
    fn = lambdify(e)
    return lambda v: np.broadcast_to(fn(np.asarray(v, dtype=float)[None]), np.shape(v))


def _expr_fn(e: Expr) -> Callable:
    """Callable of ``u`` with shape ``(n, ...)`` returning an array of shape ``u.shape[1:]``."""
    fn = lambdify(e)
    return lambda u: np.broadcast_to(fn(u), np.shape(u)[1:])


# ---------------------------------------------------------------------------
# Lame coefficients

@functools.lru_cache(maxsize=None)
def _composite_rule(nodes, panels):
    """Abscissae on [0, 1] and weights of a composite Gauss-Legendre rule."""
    x, w = leggauss(nodes)
    edges = np.linspace(0.0, 1.0, panels + 1)
    tau = ((edges[:-1, None] + edges[1:, None]) / 2 + (edges[1:, None] - edges[:-1, None]) / 2 * x).ravel()
    wt = np.tile(w, panels) / (2 * panels)
    return tau, wt


def _segment_integrals(g, a0, a1, nodes=12, panels=4):
    """Composite Gauss-Legendre integral of ``g(s)`` from ``a0`` to ``a1`` (arrays).

    ``g`` receives all quadrature abscissae at once, with a leading node axis.
    """
    tau, wt = _composite_rule(nodes, panels)
    a0 = np.asarray(a0, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    span = a1 - a0
    sh = (-1,) + (1,) * span.ndim
    vals = g(a0 + span * tau.reshape(sh))
    return span * np.tensordot(wt, vals, axes=(0, 0))


def lame_function(table: CoeffTable, i: int, base: Sequence[float], nodes: int = 12,
                  panels: int = 4) -> Callable:
    """Callable H_i(u) for ``u`` of shape ``(n, ...)``, with H_i = 1 on the i-th axis.

    ln H_i is integrated along the staircase that leaves the i-th axis line
    through ``base`` and then moves along the remaining axes in ascending
    order, each segment by composite Gauss-Legendre quadrature.
    """
    n = table.n
    base = np.asarray(base, dtype=float)
    fns = {k: _expr_fn(table.a[(i, k)]) for k in range(1, n + 1) if k != i}
    zero = {k: table.zero_flags[(i, k)] for k in fns}

    def H(u):
        u = np.asarray(u, dtype=float)
        shape = u.shape[1:]
        cur = [np.broadcast_to(base[k], shape).astype(float) for k in range(n)]
        cur[i - 1] = u[i - 1]
        lnH = np.zeros(shape)
        for k in range(1, n + 1):
            if k == i:
                continue
            if not zero[k]:
                def g(s, k=k):
                    pt = list(cur)
                    pt[k - 1] = s
                    return fns[k](np.stack(np.broadcast_arrays(*pt)))
                lnH = lnH + _segment_integrals(g, cur[k - 1], u[k - 1], nodes, panels)
            cur[k - 1] = u[k - 1]
        return np.exp(lnH)

    return H


def lame_coefficients(table: CoeffTable, i: int, base: Sequence[float], axes) -> ScalarFieldGrid:
    """H_i on the lattice ``axes`` by adaptive staircase quadrature.

    Each lattice segment is integrated with ``scipy.integrate.quad_vec``
    (all parallel lines at once). The recorded defect is the largest loop
    integral of sum_k a_ik du^k around a lattice cell in a coordinate plane
    (k, l) with k, l != i; for n = 2 there is no such plane and the defect
    is 0 by construction.
    """
    n = table.n
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    b_idx = base_index(axes, base)
    fns = {k: _expr_fn(table.a[(i, k)]) for k in range(1, n + 1) if k != i}
    order = [i - 1] + [k - 1 for k in range(1, n + 1) if k != i]

    ranges = [np.array([b]) for b in b_idx]
    block = np.zeros((1,) * n)
    for k in order:
        nk = len(axes[k])
        shape = list(block.shape)
        shape[k] = nk
        line = np.full(shape, np.nan)
        sl = [slice(None)] * n
        sl[k] = slice(b_idx[k], b_idx[k] + 1)
        line[tuple(sl)] = block
        coords = []
        for a in range(n):
            vals = axes[a][ranges[a]] if a != k else np.array([axes[k][b_idx[k]]])
            sh = [1] * n
            sh[a] = len(vals)
            coords.append(np.broadcast_to(vals.reshape(sh), block.shape).astype(float))
        for direction in (1, -1):
            acc = block
            q = b_idx[k]
            while 0 <= q + direction < nk:
                s0, s1 = axes[k][q], axes[k][q + direction]
                if k != i - 1 and not table.zero_flags[(i, k + 1)]:
                    def g(s, k=k):
                        pt = list(coords)
                        pt[k] = np.full(block.shape, s)
                        return fns[k + 1](np.stack(pt))
                    val, _ = quad_vec(g, s0, s1, epsabs=1e-14, epsrel=1e-13)
                    if not np.all(np.isfinite(val)):
                        raise QuadratureError(f"a_{i}{k + 1} is singular on the integration path")
                    acc = acc + val
                q += direction
                sl[k] = slice(q, q + 1)
                line[tuple(sl)] = acc
        block = line
        ranges[k] = np.arange(nk)
    H = np.exp(block)
    defect = _loop_defect(table, i, axes)
    return ScalarFieldGrid(axes, H, tuple(float(b) for b in base), defect, name=f"H{i}",
                           meta={"kind": "lame", "i": i, "loop_planes": max(0, (n - 1) * (n - 2) // 2)})


def _loop_defect(table, i, axes) -> float:
    n = table.n
    others = [k for k in range(1, n + 1) if k != i]
    if len(others) < 2:
        return 0.0
    P = mesh_points(axes)
    worst = 0.0
    for ka in range(len(others)):
        for la in range(ka + 1, len(others)):
            k, l = others[ka] - 1, others[la] - 1
            fk = _expr_fn(table.a[(i, k + 1)])
            fl = _expr_fn(table.a[(i, l + 1)])
            # integrals along every k-edge and every l-edge of the lattice
            ek = _edge_integrals(fk, P, axes, k)
            el = _edge_integrals(fl, P, axes, l)
            # cell loop: bottom k-edge + right l-edge - top k-edge - left l-edge
            bottom = ek[_sl(n, l, slice(0, -1))]
            top = ek[_sl(n, l, slice(1, None))]
            left = el[_sl(n, k, slice(0, -1))]
            right = el[_sl(n, k, slice(1, None))]
            loop = bottom + right - top - left
            if loop.size:
                worst = max(worst, float(np.nanmax(np.abs(loop))))
    return worst


def _sl(n, axis, s):
    out = [slice(None)] * n
    out[axis] = s
    return tuple(out)


def _edge_integrals(fn, P, axes, k):
    lo = P[(slice(None),) + _sl(len(axes), k, slice(0, -1))]
    hi_k = P[k][_sl(len(axes), k, slice(1, None))]

    def g(s):
        pt = [np.broadcast_to(lo[a], s.shape) for a in range(len(axes))]
        pt[k] = s
        return fn(np.stack(pt))

    return _segment_integrals(g, lo[k], hi_k, nodes=10, panels=1)


# ---------------------------------------------------------------------------
# commuting flows from the Frobenius system

def b_is_zero(sys: DiagonalSystem, table: CoeffTable, i: int) -> bool:
    """True when every defined b_ik (k != i) vanishes, symbolically or at all samples."""
    pts = sample_points(sys)
    for k in range(1, sys.n + 1):
        if k == i or table.b[(i, k)] is None:
            continue
        e = table.b[(i, k)]
        if is_zero(e):
            continue
        if not np.all(np.abs(evaluate_array(e, pts)) <= sys.tol):
            return False
    return True


@dataclass(eq=False)
class PfaffianSpec:
    """Coefficients of the closed Pfaffian system for mu.

    ``a[(i, k)]`` and ``b[i]`` are callables of ``u`` shaped ``(n, ...)``.
    ``b[i] = None`` marks a component whose row of ``a`` vanishes: then
    mu^i = phi_i(u^i) + const, integrated as d mu^i = phi_i'(u^i) du^i.
    """

    n: int
    a: dict
    b: dict
    phi: list
    dphi: list | None = None
    j: list | None = None

    @classmethod
    def from_table(cls, sys: DiagonalSystem, table: CoeffTable, phis, j=None) -> "PfaffianSpec":
        n = sys.n
        phi_exprs = [parse(p, 1) if isinstance(p, str) else p for p in phis]
        a = {(i, k): _expr_fn(table.a[(i, k)]) for i in range(1, n + 1)
             for k in range(1, n + 1) if i != k}
        b, jj = {}, []
        for i in range(1, n + 1):
            if check_darboux_order0(sys, i).flag:
                b[i] = None
                jj.append(None)
                continue
            if j is not None and j[i - 1] is not None:
                ji = j[i - 1]
            else:
                res = check_darboux_order1(sys, table, i)
                ji = res.witness_j
                if ji is None:
                    ji = active_indices(sys, i)[0][0]
                    warnings.warn(f"index {i} fails the order-1 criterion; using j={ji}",
                                  NonIntegrableWarning, stacklevel=2)
            jj.append(ji)
            b[i] = _expr_fn(table.b[(i, ji)])
        dphi = [phi_function(differentiate(e, 1, 1)) for e in phi_exprs]
        return cls(n, a, b, [phi_function(e) for e in phi_exprs], dphi, jj)


def _mu_rhs(spec: PfaffianSpec):
    n = spec.n

    def f(k, q, y):
        u = np.stack(q)
        out = np.empty_like(y)
        kk = k + 1
        for i in range(1, n + 1):
            if i == kk:
                bi = spec.b.get(i)
                if bi is None:
                    if spec.dphi is None:
                        out[i - 1] = 0.0
                    else:
                        out[i - 1] = spec.dphi[i - 1](u[i - 1])
                else:
                    out[i - 1] = bi(u) * (y[i - 1] - spec.phi[i - 1](u[i - 1]))
            else:
                out[i - 1] = spec.a[(i, kk)](u) * (y[kk - 1] - y[i - 1])
        return out

    return f


def integrate_frobenius_mu(spec: PfaffianSpec, mu0, axes, base, substeps: int = 16,
                           tol: float = 1e-9) -> list:
    """Commuting flow mu on the lattice by staircase RK4 from ``mu0`` at ``base``.

    Returns one :class:`ScalarFieldGrid` per component. Each carries the
    path-independence defect (canonical staircase vs the reversed axis order,
    relative to 1 + |mu|) and, in ``meta['commuting_residual']``, the largest
    fourth-order finite-difference residual of d_k mu^i = a_ik (mu^k - mu^i).
    """
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    b_idx = base_index(axes, base)
    f = _mu_rhs(spec)
    can = staircase(f, mu0, axes, b_idx, substeps=substeps)
    alt = staircase(f, mu0, axes, b_idx, order=list(range(spec.n))[::-1], substeps=substeps)
    defect = float(np.nanmax(np.abs(can - alt) / (1.0 + np.abs(can))))
    comm = _commuting_residual(spec, can, axes)
    if defect > 100 * tol:
        warnings.warn(f"path-independence defect {defect:.3g} exceeds 100*tol; "
                      "the Pfaffian system is not closed on this domain",
                      NonIntegrableWarning, stacklevel=2)
    out = []
    for i in range(spec.n):
        d_i = float(np.nanmax(np.abs(can[i] - alt[i]) / (1.0 + np.abs(can[i]))))
        out.append(ScalarFieldGrid(axes, can[i], tuple(float(v) for v in base), d_i,
                                   name=f"mu{i + 1}",
                                   meta={"kind": "mu", "commuting_residual": comm,
                                         "substeps": substeps, "defect_all": defect}))
    return out


def _commuting_residual(spec, mu, axes) -> float:
    n = spec.n
    P = mesh_points(axes)
    worst = 0.0
    for i in range(1, n + 1):
        for k in range(1, n + 1):
            if k == i or len(axes[k - 1]) < 5:
                continue
            h = axes[k - 1][1] - axes[k - 1][0]
            d = fd_derivative(mu[i - 1], h, k - 1, order=4)
            rhs = spec.a[(i, k)](P) * (mu[k - 1] - mu[i - 1])
            r = np.abs(d - rhs) / (1.0 + np.abs(rhs) + np.abs(d))
            if np.any(np.isfinite(r)):
                worst = max(worst, float(np.nanmax(r)))
    return worst


# ---------------------------------------------------------------------------
# b = 0: closed-form P^i and the orbit system

class PField:
    """P^i(u, t) = H_i / (phi_i(u^i) - t lam^i_i H_i); NaN on the breakdown locus."""

    def __init__(self, i, H, phi, dlam_ii, t=None, eps=1e-12):
        self.i = i
        self.H = H
        self.phi = phi_function(phi)
        self.dlam = _expr_fn(dlam_ii)
        self.t = t
        self.eps = eps

    def denominator(self, u, t):
        u = np.asarray(u, dtype=float)
        H = self.H(u)
        return self.phi(u[self.i - 1]) - t * self.dlam(u) * H, H

    def __call__(self, u, t=None, x=None):
        t = self.t if t is None else t
        if t is None:
            raise ValueError("t is required")
        den, H = self.denominator(u, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = H / den
        return np.where((np.abs(den) > self.eps) & np.isfinite(out), out, np.nan)

    def breakdown(self, u, t=None):
        """Mask of points on (or numerically at) the breakdown locus."""
        t = self.t if t is None else t
        den, _ = self.denominator(u, t)
        return ~(np.abs(den) > self.eps)


def p_for_b_zero(sys: DiagonalSystem, table: CoeffTable, i: int, H, phi, t=None,
                 base=None) -> PField:
    """P^i for a component with b_ik = 0 for all k != i.

    ``H`` is a callable H_i(u) (e.g. from :func:`lame_function`) and ``phi``
    a one-variable expression in ``u1`` or a callable. With ``t`` given the
    returned field has t fixed. ``base`` (with ``t``) is checked for a zero
    denominator.
    """
    if not b_is_zero(sys, table, i):
        raise ValueError(f"b_{i}k does not vanish; P^{i} has no closed form here")
    phi_e = parse(phi, 1) if isinstance(phi, str) else phi
    dlam = sys.dlam(i, i)
    if isinstance(phi_e, Expr) and is_zero(phi_e) and is_zero(dlam):
        raise DenominatorZero(f"phi_{i} and lam^{i}_{i} both vanish: the denominator is identically 0")
    P = PField(i, H, phi_e, dlam, t)
    if base is not None:
        tt = 0.0 if t is None else t
        u = np.asarray(base, dtype=float).reshape(-1, 1)
        if P.breakdown(u, tt)[0]:
            raise DenominatorZero(f"P^{i} denominator vanishes at u={list(base)}, t={tt}")
    return P


def integrate_orbit_solution(sys: DiagonalSystem, P, start, x_axis, t_axis, substeps: int = 16,
                             verify: bool = True) -> SolutionGrid:
    """u(x, t) from du^i = P^i (dx + lam^i dt) by staircase RK4 in the (x, t) plane.

    ``P`` is a list of callables ``P_i(u, t, x)`` for ``u`` of shape
    ``(n, ...)``. ``start = (x0, t0, u0)`` must sit on a lattice node.
    Points where P is undefined (breakdown locus) are masked rather than fatal.
    """
    x0, t0, u0 = start
    axes = [np.asarray(x_axis, dtype=float), np.asarray(t_axis, dtype=float)]
    b_idx = base_index(axes, (x0, t0))
    lam = [_expr_fn(l) for l in sys.lambdas]
    n = sys.n

    def f(k, q, y):
        x, t = q
        p = np.stack([P[i](y, t, x) for i in range(n)])
        if k == 0:
            return p
        return np.stack([lam[i](y) for i in range(n)]) * p

    can = staircase(f, u0, axes, b_idx, substeps=substeps, on_blowup="mask")
    alt = staircase(f, u0, axes, b_idx, order=[1, 0], substeps=substeps, on_blowup="mask")
    both = np.all(np.isfinite(can), axis=0) & np.all(np.isfinite(alt), axis=0)
    diff = np.abs(can - alt) / (1.0 + np.abs(can))
    defect = float(np.max(diff[:, both])) if both.any() else float("nan")
    grid = SolutionGrid(axes[0], axes[1], can, both.copy(),
                        meta={"route": "orbit", "path_defect": defect, "substeps": substeps,
                              "masked": int((~both).sum())})
    if verify:
        from .hodograph import verify_solution
        verify_solution(sys, grid)
    return grid


# ---------------------------------------------------------------------------
# n = 2 quadrature

@dataclass(eq=False)
class N2Quadrature:
    """t(u), x(u) and W(u) on a u-lattice with the consistency checks."""

    t: ScalarFieldGrid
    x: ScalarFieldGrid
    W: ScalarFieldGrid
    omega_residual: float
    omega_symbolic: bool
    path_defect: float
    invertible: np.ndarray
    residual: np.ndarray
    max_residual: float
    meta: dict = field(default_factory=dict)


def solve_n2_quadrature(sys: DiagonalSystem, table: CoeffTable, H1, H2, phi1, phi2, axes,
                        base=None, substeps: int = 16, strict: bool = False,
                        det_floor: float = 1e-10) -> N2Quadrature:
    """General solution of a two-component system with b_12 = b_21 = 0.

    Integrates (ln W, t, x) along staircases in u, with the constants pinned
    so that t = x = 0 (and W = 1) at ``base``. The map u -> (x, t) is then
    inverted by fourth-order finite differences on nodes where its Jacobian
    is nonsingular and the PDE residual u^i_t - lam^i u^i_x is evaluated there.
    """
    if sys.n != 2:
        raise ValueError("the quadrature route needs n = 2")
    for i in (1, 2):
        if not b_is_zero(sys, table, i):
            raise ValueError(f"b_{i}{3 - i} does not vanish")
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    base = tuple(ax[len(ax) // 2] for ax in axes) if base is None else tuple(base)
    b_idx = base_index(axes, base)
    l1, l2 = sys.lambdas
    w1 = simplify(sys.dlam(1, 1) / (l2 - l1))
    w2 = simplify(sys.dlam(2, 2) / (l1 - l2))
    closed = [differentiate(w1, 2, 2), -differentiate(w2, 1, 2)]
    om_res, _ = residual_max(closed, sample_points(sys))
    om_sym = is_zero(simplify(closed[0] + closed[1]))
    if om_res > sys.tol:
        raise OmegaNotClosed(f"omega is not closed: residual {om_res:.3g}")
    L1, L2, W1, W2 = (_expr_fn(e) for e in (l1, l2, w1, w2))
    p1, p2 = phi_function(phi1), phi_function(phi2)

    def f(k, q, y):
        u = np.stack(q)
        a, b = L1(u), L2(u)
        lnW, t, x = y
        if k == 0:
            w = W1(u)
            src = p1(u[0]) / (H1(u) * (a - b))
            return np.stack([w + 0 * lnW, src + w * t, -b * src - b * w * t])
        w = W2(u)
        src = p2(u[1]) / (H2(u) * (b - a))
        return np.stack([w + 0 * lnW, src + w * t, -a * src - a * w * t])

    can = staircase(f, np.zeros(3), axes, b_idx, substeps=substeps)
    alt = staircase(f, np.zeros(3), axes, b_idx, order=[1, 0], substeps=substeps)
    defect = float(np.nanmax(np.abs(can - alt) / (1.0 + np.abs(can))))

    h1, h2 = (ax[1] - ax[0] for ax in axes)
    t, x = can[1], can[2]
    t1, t2 = fd_derivative(t, h1, 0), fd_derivative(t, h2, 1)
    x1, x2 = fd_derivative(x, h1, 0), fd_derivative(x, h2, 1)
    det = x1 * t2 - x2 * t1
    scale = 1.0 + np.abs(x1 * t2) + np.abs(x2 * t1)
    ok = np.isfinite(det) & (np.abs(det) > det_floor * scale)
    residual = np.full(t.shape, np.nan)
    if not ok.any():
        if strict:
            raise SingularMap("the map u -> (x, t) is singular at every node")
    else:
        # inverse Jacobian: rows (u1, u2), columns (x, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            u1x, u1t = t2 / det, -x2 / det
            u2x, u2t = -t1 / det, x1 / det
        U = mesh_points(axes)
        lam1, lam2 = L1(U), L2(U)
        r1 = np.abs(u1t - lam1 * u1x) / (1 + np.abs(u1t) + np.abs(lam1 * u1x))
        r2 = np.abs(u2t - lam2 * u2x) / (1 + np.abs(u2t) + np.abs(lam2 * u2x))
        residual = np.where(ok, np.maximum(r1, r2), np.nan)
    max_res = float(np.nanmax(residual)) if ok.any() else float("nan")
    b = tuple(float(v) for v in base)
    return N2Quadrature(
        t=ScalarFieldGrid(axes, t, b, defect, name="t"),
        x=ScalarFieldGrid(axes, x, b, defect, name="x"),
        W=ScalarFieldGrid(axes, np.exp(can[0]), b, defect, name="W"),
        omega_residual=om_res, omega_symbolic=om_sym, path_defect=defect,
        invertible=ok, residual=residual, max_residual=max_res,
        meta={"pinned": "t = x = 0 and W = 1 at the base point", "base": list(b)})
