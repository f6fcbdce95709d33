import numpy as np
import pytest

from hydrodarboux.grids import SolutionGrid
from hydrodarboux.hodograph import (
    NotDarbouxIntegrable, pipeline_solve, solve_tsarev, verify_solution, write_plot_script,
)
from hydrodarboux.system import load_system


def _closed_hopf(x, t, k=0.0):
    X, T = np.meshgrid(x, t, indexing="ij")
    return T + np.sqrt(T ** 2 + 2 * X + k)


def test_tsarev_constant_speeds_exact():
    s = load_system("constant2")
    x = t = np.linspace(0, 1, 5)
    g = solve_tsarev(s, ["u1", "u2"], x, t, (0.0, 0.0))
    X, T = np.meshgrid(x, t, indexing="ij")
    assert np.max(np.abs(g.u[0] - X)) <= 1e-14 and np.max(np.abs(g.u[1] - X - T)) <= 1e-14
    assert g.converged.all() and g.iterations.max() <= 1


def test_tsarev_hopf_matches_closed_form():
    s = load_system("order0_decoupled")
    x = np.linspace(1, 1.29, 30)
    t = np.linspace(0, 0.29, 30)
    g = solve_tsarev(s, ["u1^2/2", "u2^2/2"], x, t, (1.5, 1.5))
    exact = _closed_hopf(x, t)
    assert g.converged.all()
    assert np.max(np.abs(g.u - exact)) <= 1e-9
    assert g.iterations.max() <= 8


def test_tsarev_sweep_independence():
    s = load_system("order0_decoupled")
    x = np.linspace(1, 1.29, 12)
    t = np.linspace(0, 0.29, 12)
    a = solve_tsarev(s, ["u1^2/2", "u2^2/2"], x, t, (1.5, 1.5), sweep="row")
    b = solve_tsarev(s, ["u1^2/2", "u2^2/2"], x, t, (1.5, 1.5), sweep="col")
    both = a.converged & b.converged
    assert np.max(np.abs(a.u[:, both] - b.u[:, both])) <= 1e-8


def test_tsarev_degenerate_flow_is_flagged():
    s = load_system("shifted3")
    g = solve_tsarev(s, [str(l) for l in s.lambdas], np.linspace(0, 1, 4), np.linspace(0.1, 0.5, 4),
                     (0.1, 0.2, 0.3))
    assert not g.converged.all()
    assert g.singular.any()


def test_verify_exact_solutions():
    s = load_system("constant2")
    x = t = np.linspace(0, 1, 6)
    X, T = np.meshgrid(x, t, indexing="ij")
    g = SolutionGrid(x, t, np.stack([X, X + T]), np.ones(X.shape, bool))
    assert verify_solution(s, g).max_residual <= 1e-13


def _hopf_grid(h):
    # k_i = (u_i at the origin)^2 with u(0, 0) = (3.5, 5.5)
    x = np.arange(30) * h
    t = np.arange(30) * h
    u = np.stack([_closed_hopf(x, t, 3.5 ** 2), _closed_hopf(x, t, 5.5 ** 2)])
    return SolutionGrid(x, t, u, np.ones(u.shape[1:], bool))


def test_verify_hopf_and_convergence_rate():
    s = load_system("order0_decoupled")
    r1 = verify_solution(s, _hopf_grid(0.01)).max_residual
    r2 = verify_solution(s, _hopf_grid(0.005)).max_residual
    assert r1 <= 1e-6 and r1 / r2 >= 3.5


def test_verify_detects_perturbation():
    s = load_system("order0_decoupled")
    g = _hopf_grid(0.01)
    g.u[0, 15, 15] += 1e-2
    res = verify_solution(s, g)
    assert res.max_residual > 1e-1
    hot = np.argwhere(g.residual > 1e-3)
    assert np.all(np.abs(hot - [15, 15]).max(axis=1) <= 1)


def test_pipeline_lindeg2():
    s = load_system("lindeg2")
    ax = np.linspace(0, 0.06, 31)
    g = pipeline_solve(s, ["1", "1"], (0.0, 0.0, (2.0, 1.0)), ax, ax)
    assert g.meta["route"] == "lame"
    assert g.max_residual <= 1e-5 and g.meta["path_defect"] <= 1e-7


def test_pipeline_given_mu_traveling_pair():
    s = load_system("constant2")
    x = t = np.linspace(0, 0.5, 6)
    g = pipeline_solve(s, None, (0.0, 0.0, (0.0, 0.0)), x, t, mu=["u1", "u2"])
    X, T = np.meshgrid(x, t, indexing="ij")
    assert g.meta["route"] == "given-mu"
    assert np.max(np.abs(g.u[1] - X - T)) <= 1e-14


def test_pipeline_frobenius_route():
    s = load_system("recip2")
    ax = np.linspace(0, 0.2, 11)
    g = pipeline_solve(s, ["u1", "u1"], (0.0, 0.0, (1.5, 1.5)), ax, ax, u_counts=21, interp="cubic")
    assert g.meta["route"] == "frobenius" and g.converged.all()
    assert g.max_residual <= 1e-3


def test_pipeline_refuses_non_integrable():
    s = load_system("shifted3")
    ax = np.linspace(0, 1, 4)
    with pytest.raises(NotDarbouxIntegrable) as exc:
        pipeline_solve(s, ["u1"] * 3, (0.0, 0.0, (0, 0, 0)), ax, ax)
    assert exc.value.report is not None


def test_solution_csv_round_trip(tmp_path):
    g = _hopf_grid(0.01)
    verify_solution(load_system("order0_decoupled"), g)
    g.write_csv(tmp_path / "sol.csv")
    back = SolutionGrid.from_csv(tmp_path / "sol.csv")
    assert np.array_equal(back.u, g.u) and np.array_equal(back.x, g.x)
    script = write_plot_script(tmp_path / "plot.py", "sol.csv", 2, [0.0, 0.1])
    text = script.read_text()
    assert "sol.csv" in text
    compile(text, "plot.py", "exec")
