"""Lattices, staircase RK4 sweeps and finite-difference helpers.

A staircase sweep integrates a Pfaffian system dy = sum_k f_k(q, y) dq^k
over a rectangular lattice: first along axis ``order[0]`` through the base
node, then from every node of that line along ``order[1]``, and so on.
All lines of one sweep stage are integrated together as numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .io import write_csv, write_json

__all__ = [
    "BlowUp", "ScalarFieldGrid", "SolutionGrid", "lattice_axis", "base_index",
    "staircase", "fd_derivative", "mesh_points",
]

BLOWUP = 1e12


class BlowUp(ArithmeticError):
    pass


def lattice_axis(lo: float, hi: float, count: int) -> np.ndarray:
    return np.linspace(lo, hi, count)


def base_index(axes, base) -> tuple:
    """Lattice index of ``base``; it must coincide with a node."""
    idx = []
    for k, (ax, b) in enumerate(zip(axes, base), 1):
        j = int(np.argmin(np.abs(ax - b)))
        step = np.max(np.abs(np.diff(ax))) if len(ax) > 1 else 1.0
        if abs(ax[j] - b) > 1e-9 * max(step, abs(b), 1.0):
            raise ValueError(f"base coordinate {k} = {b} is not a lattice node")
        idx.append(j)
    return tuple(idx)


def mesh_points(axes) -> np.ndarray:
    """All lattice points as an ``(d, N1, ..., Nd)`` array."""
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=0)


def _rk4(f, k, coords, s0, s1, y, substeps):
    h = (s1 - s0) / substeps
    s = s0
    for _ in range(substeps):
        k1 = f(k, _with(coords, k, s), y)
        k2 = f(k, _with(coords, k, s + h / 2), y + h / 2 * k1)
        k3 = f(k, _with(coords, k, s + h / 2), y + h / 2 * k2)
        k4 = f(k, _with(coords, k, s + h), y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s = s + h
    return y


def _with(coords, k, s):
    out = list(coords)
    out[k] = np.full_like(coords[k], s)
    return out


def staircase(f, y0, axes, base, order=None, substeps: int = 16, on_blowup: str = "raise"):
    """Integrate ``dy/dq_k = f(k, q, y)`` over the lattice spanned by ``axes``.

    Parameters
    ----------
    f : callable
        ``f(k, q, y)`` with ``k`` the 0-based axis, ``q`` a list of coordinate
        arrays broadcast to the shape of ``y[0]`` and ``y`` of shape
        ``(m, ...)``; returns an array shaped like ``y``.
    y0 : array_like
        State at the base node, shape ``(m,)``.
    base : tuple of int
        Lattice index of the base node.
    order : sequence of int, optional
        Axis order of the staircase; default ``0, 1, ..., d-1``.
    on_blowup : {'raise', 'mask'}
        Whether values beyond 1e12 raise :class:`BlowUp` or become NaN.

    Returns
    -------
    ndarray of shape ``(m, N1, ..., Nd)``.
    """
    d = len(axes)
    order = list(range(d)) if order is None else list(order)
    y0 = np.asarray(y0, dtype=float)
    m = y0.shape[0]
    block = y0.reshape((m,) + (1,) * d)
    ranges = [np.array([b]) for b in base]
    for k in order:
        shape = list(block.shape)
        nk = len(axes[k])
        shape[k + 1] = nk
        line = np.full(shape, np.nan)
        sl = [slice(None)] * (d + 1)
        sl[k + 1] = slice(base[k], base[k] + 1)
        line[tuple(sl)] = block
        coords = []
        for a in range(d):
            vals = axes[a][ranges[a]] if a != k else np.array([axes[k][base[k]]])
            sh = [1] * d
            sh[a] = len(vals)
            coords.append(vals.reshape(sh))
        bshape = block.shape[1:]
        coords = [np.broadcast_to(c, bshape).astype(float) for c in coords]
        for direction in (1, -1):
            y = block
            q = base[k]
            while 0 <= q + direction < nk:
                s0, s1 = axes[k][q], axes[k][q + direction]
                y = _rk4(f, k, coords, s0, s1, y, substeps)
                big = ~(np.abs(y) <= BLOWUP)
                if np.any(big & ~np.isnan(y)):
                    if on_blowup == "raise":
                        raise BlowUp(f"solution exceeds {BLOWUP:g} along axis {k + 1}")
                    y = np.where(big, np.nan, y)
                q += direction
                sl[k + 1] = slice(q, q + 1)
                line[tuple(sl)] = y
        block = line
        ranges[k] = np.arange(nk)
    return block


def fd_derivative(values: np.ndarray, h: float, axis: int, order: int = 4) -> np.ndarray:
    """Centered difference along ``axis``; NaN where the stencil does not fit."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    out = np.full_like(v, np.nan)
    if order == 2:
        if len(v) >= 3:
            out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    elif order == 4:
        if len(v) >= 5:
            out[2:-2] = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * h)
    else:
        raise ValueError("order must be 2 or 4")
    return np.moveaxis(out, 0, axis)


@dataclass(eq=False)
class ScalarFieldGrid:
    """Values of a scalar function on a rectangular lattice in u-space."""

    axes: list
    values: np.ndarray
    base: tuple
    defect: float = 0.0
    name: str = "f"
    meta: dict = field(default_factory=dict)

    @property
    def steps(self):
        return [float(ax[1] - ax[0]) if len(ax) > 1 else 0.0 for ax in self.axes]

    @property
    def counts(self):
        return [len(ax) for ax in self.axes]

    def interpolator(self, method: str = "linear"):
        return RegularGridInterpolator(tuple(self.axes), self.values, method=method,
                                       bounds_error=False, fill_value=np.nan)

    def value_at(self, u) -> float:
        """Value at a lattice node (exact) or by multilinear interpolation."""
        u = np.asarray(u, dtype=float)
        try:
            return float(self.values[base_index(self.axes, u)])
        except ValueError:
            return float(self.interpolator()(u[None, :])[0])

    def metadata(self) -> dict:
        return {"name": self.name, "base": list(map(float, self.base)),
                "steps": self.steps, "counts": self.counts,
                "lower": [float(ax[0]) for ax in self.axes],
                "defect": self.defect, **self.meta}

    def write(self, stem) -> tuple:
        """Write ``stem.csv`` (u1..un, value) and ``stem.json`` metadata."""
        pts = mesh_points(self.axes).reshape(len(self.axes), -1).T
        rows = np.column_stack([pts, self.values.reshape(-1)])
        header = [f"u{k}" for k in range(1, len(self.axes) + 1)] + [self.name]
        return (write_csv(f"{stem}.csv", header, rows),
                write_json(f"{stem}.json", self.metadata()))


@dataclass(eq=False)
class SolutionGrid:
    """u(x, t) on a lattice with per-point solver flags and PDE residuals.

    ``u`` has shape ``(n, Nx, Nt)``; ``converged``, ``iterations``,
    ``singular`` and ``residual`` have shape ``(Nx, Nt)``.
    """

    x: np.ndarray
    t: np.ndarray
    u: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray | None = None
    singular: np.ndarray | None = None
    residual: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.x), len(self.t))
        if self.iterations is None:
            self.iterations = np.zeros(shape, dtype=int)
        if self.singular is None:
            self.singular = np.zeros(shape, dtype=bool)
        if self.residual is None:
            self.residual = np.full(shape, np.nan)

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def max_residual(self) -> float:
        r = self.residual[np.isfinite(self.residual)]
        return float(r.max()) if r.size else float("nan")

    def rows(self):
        X, T = np.meshgrid(self.x, self.t, indexing="ij")
        cols = [X.ravel(), T.ravel()] + [self.u[i].ravel() for i in range(self.n)]
        cols += [self.converged.ravel().astype(int), self.residual.ravel()]
        return np.column_stack(cols)

    def header(self):
        return ["x", "t"] + [f"u{i}" for i in range(1, self.n + 1)] + ["converged", "residual"]

    def write_csv(self, path):
        return write_csv(path, self.header(), self.rows())

    @classmethod
    def from_csv(cls, path) -> "SolutionGrid":
        from .io import read_csv
        header, data = read_csv(path)
        if header[:2] != ["x", "t"]:
            raise ValueError(f"{path}: expected columns x, t, u1..un")
        ucols = [k for k, h in enumerate(header) if h.startswith("u") and h[1:].isdigit()]
        x = np.unique(data[:, 0])
        t = np.unique(data[:, 1])
        if len(x) * len(t) != len(data):
            raise ValueError(f"{path}: rows do not form a rectangular (x, t) lattice")
        ix = np.searchsorted(x, data[:, 0])
        it = np.searchsorted(t, data[:, 1])
        u = np.full((len(ucols), len(x), len(t)), np.nan)
        for c, k in enumerate(ucols):
            u[c, ix, it] = data[:, k]
        conv = np.ones((len(x), len(t)), dtype=bool)
        if "converged" in header:
            conv[ix, it] = data[:, header.index("converged")] != 0
        conv &= np.all(np.isfinite(u), axis=0)
        return cls(x, t, u, conv)
