"""Exact solutions from the b = 0 closed form.

Two cases: the decoupled Hopf pair lam^i = u^i, where the answer is known in
closed form, and the linearly degenerate pair lam = (u2, u1).
"""
import numpy as np

from hydrodarboux.hodograph import pipeline_solve
from hydrodarboux.integrate import integrate_orbit_solution, lame_function, p_for_b_zero
from hydrodarboux.system import coefficient_table, load_system

s = load_system("order0_decoupled")
t = coefficient_table(s)
u0 = np.array([3.5, 5.5])
P = [p_for_b_zero(s, t, i, lame_function(t, i, u0), "u1") for i in (1, 2)]
for h in (0.01, 0.005):
    ax = np.arange(30) * h
    g = integrate_orbit_solution(s, P, (0.0, 0.0, u0), ax, ax)
    X, T = np.meshgrid(ax, ax, indexing="ij")
    exact = np.stack([T + np.sqrt(T ** 2 + 2 * X + k ** 2) for k in u0])
    print(f"Hopf h={h}: max error {np.max(np.abs(g.u - exact)):.1e}, PDE residual {g.max_residual:.1e}")

# lindeg2 through u = (2, 1) with phi = 1; the pipeline picks the route itself
s = load_system("lindeg2")
ax = np.linspace(0, 0.06, 31)
g = pipeline_solve(s, ["1", "1"], (0.0, 0.0, (2.0, 1.0)), ax, ax)
print(f"lindeg2 via {g.meta['route']}: residual {g.max_residual:.1e}, path defect {g.meta['path_defect']:.1e}")
print("u at (x, t) = (0.06, 0.06):", g.u[:, -1, -1])
