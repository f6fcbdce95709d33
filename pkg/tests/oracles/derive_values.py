"""Independent sympy derivation of the reference values frozen in values.json.

Run ``python3 tests/oracles/derive_values.py`` to regenerate. Nothing here
imports the package under test.
"""

import json
from pathlib import Path

import sympy as sp

u1, u2, u3, x, t, s = sp.symbols("u1 u2 u3 x t s")


def a_coeff(lam, us, i, j):
    return sp.simplify(sp.diff(lam[i], us[j]) / (lam[j] - lam[i]))


def laplace_speeds(lam, us, i, j):
    n = len(lam)
    a = lambda p, q: a_coeff(lam, us, p, q)
    D = sp.simplify(a(j, i) - sp.diff(a(i, j), us[i]) / a(i, j))
    out = list(lam)
    out[j] = lam[i]
    out[i] = sp.simplify(sp.diff(lam[i], us[i]) / D + lam[i])
    for k in range(n):
        if k not in (i, j):
            out[k] = sp.simplify((a(i, j) * lam[k] - a(k, j) * lam[i]) / (a(i, j) - a(k, j)))
    return out


def main():
    vals = {}

    # shifted family, pair (1, 2)
    S = u1 + u2 + u3
    lam3 = [S, S + 1, S + 2]
    us3 = [u1, u2, u3]
    bar = laplace_speeds(lam3, us3, 0, 1)
    vals["shifted3_bar_at_origin"] = [float(b.subs({u1: 0, u2: 0, u3: 0})) for b in bar]
    pt = {u1: 0.3, u2: -0.2, u3: 0.5}
    vals["shifted3_bar_at_point"] = {"u": [0.3, -0.2, 0.5], "bar": [float(b.subs(pt)) for b in bar]}
    # semihamiltonian symmetry for the shifted family (exact zero)
    a3 = {(p, q): a_coeff(lam3, us3, p, q) for p in range(3) for q in range(3) if p != q}
    vals["shifted3_semiham_zero"] = all(
        sp.simplify(sp.diff(a3[(i, j)], us3[k]) - sp.diff(a3[(i, k)], us3[j])) == 0
        for i in range(3) for j in range(3) for k in range(3) if len({i, j, k}) == 3)

    # nonsemihamiltonian example: symmetry residual at a point
    lamn = [u2 * u3, u1, u2]
    an = {(p, q): a_coeff(lamn, us3, p, q) for p in range(3) for q in range(3) if p != q}
    r = sp.diff(an[(0, 1)], u3) - sp.diff(an[(0, 2)], u2)
    vals["nonsemiham3_sym_123_at"] = {"u": [3.5, 1.5, 5.5], "value": float(r.subs({u1: 3.5, u2: 1.5, u3: 5.5}))}
    vals["nonsemiham3_a12_at"] = float(an[(0, 1)].subs({u1: 3.5, u2: 1.5, u3: 5.5}))

    # recip2: one step from index 1 kills the row
    lamr = [-1 / (u1 + u2), sp.Integer(0)]
    barr = laplace_speeds(lamr, [u1, u2], 0, 1)
    vals["recip2_bar_a12_zero"] = sp.simplify(a_coeff(barr, [u1, u2], 0, 1)) == 0
    # (u1^2 + u2, 0): one step does not kill the row
    lamq = [u1 ** 2 + u2, sp.Integer(0)]
    barq = laplace_speeds(lamq, [u1, u2], 0, 1)
    aq = sp.simplify(a_coeff(barq, [u1, u2], 0, 1))
    vals["quad2_bar_a12_at"] = {"u": [1.5, 1.5], "value": float(aq.subs({u1: 1.5, u2: 1.5}))}

    # Lame coefficients of lam = (u2, u1) normalised at (2, 1)
    H1 = (u1 - 1) / (u1 - u2)
    H2 = (2 - u2) / (u1 - u2)
    al = {(0, 1): 1 / (u1 - u2), (1, 0): 1 / (u2 - u1)}
    assert sp.simplify(sp.diff(sp.log(H1), u2) - al[(0, 1)]) == 0
    assert sp.simplify(sp.diff(sp.log(H2), u1) - al[(1, 0)]) == 0
    assert H1.subs({u1: 2, u2: 1}) == 1 and H2.subs({u1: 2, u2: 1}) == 1
    vals["lindeg2_H1_at_2_05"] = float(H1.subs({u1: 2, u2: sp.Rational(1, 2)}))
    vals["lindeg2_H1"] = str(H1)
    vals["lindeg2_H2"] = str(H2)

    # Hopf closed form through u0 at x = t = 0
    k = sp.symbols("k", positive=True)
    U = t + sp.sqrt(t ** 2 + 2 * x + k)
    vals["hopf_pde_zero"] = sp.simplify(sp.diff(U, t) - U * sp.diff(U, x)) == 0
    vals["hopf_implicit_zero"] = sp.simplify(U - t - sp.sqrt(2 * x + k + t ** 2)) == 0

    # reciprocal transform of lam = (u2, u1) by N = u1 + u2, M = u1 u2
    N, M = u1 + u2, u1 * u2
    laml = [u2, u1]
    assert all(sp.simplify(sp.diff(M, v) - l * sp.diff(N, v)) == 0 for v, l in zip([u1, u2], laml))
    rec = [sp.simplify(l / (M - N * l)) for l in laml]
    vals["lindeg2_reciprocal"] = [str(e) for e in rec]
    vals["lindeg2_reciprocal_at"] = {"u": [2.0, 0.5], "value": [float(e.subs({u1: 2, u2: 0.5})) for e in rec]}

    # shifted family conservation laws: exponential densities and the linear one
    c = [0, 1, 2]
    ks = [s / (1 + ci * s) for ci in c]
    Ne = sp.exp(sum(kk * v for kk, v in zip(ks, us3)))
    Me = (S - 1 / s) * Ne
    ok = all(sp.simplify(sp.diff(Me, v) - l * sp.diff(Ne, v)) == 0 for v, l in zip(us3, lam3))
    Nl, Ml = S, S ** 2 / 2 + u2 + 2 * u3
    ok = ok and all(sp.simplify(sp.diff(Ml, v) - l * sp.diff(Nl, v)) == 0 for v, l in zip(us3, lam3))
    vals["shifted3_densities_ok"] = ok

    out = Path(__file__).with_name("values.json")
    out.write_text(json.dumps(vals, indent=2, sort_keys=True) + "\n")
    print(json.dumps(vals, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
