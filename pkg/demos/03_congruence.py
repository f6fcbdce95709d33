"""Conservation laws as a congruence of lines, and what a Laplace step does to it.

The transformed conservation laws carry the transformed characteristic speeds,
and those speeds do not depend on which densities were used.
"""
import numpy as np

from hydrodarboux.congruence import (
    ConservationPair, focal_chart, pencil_defect, reciprocal_speeds, solve_density,
    verify_speed_invariance,
)
from hydrodarboux.expr import to_string
from hydrodarboux.system import check_semihamiltonian, load_system

# densities from data on the coordinate axes through a base point
s = load_system("lindeg2")
axes = [np.linspace(1.5, 3.0, 21), np.linspace(0.2, 1.2, 21)]
p = solve_density(s, None, ["u1 + 0.2", "1.5 + u1"], axes, (1.5, 0.2))
print("lindeg2 density from axis data, N(3, 1.2) =", p.N.values[-1, -1], "(u1 + u2 = 4.2)")

# order-0 case: every focal line is a pencil
d = load_system("order0_decoupled")
ax = [np.linspace(3, 4, 11), np.linspace(5, 6, 11)]
pairs = [solve_density(d, None, ["u1", "u1 - 2"], ax, (3.0, 5.0)),
         solve_density(d, None, ["u1^2", "u1^2 - 16"], ax, (3.0, 5.0))]
print("order0_decoupled pencil defect:", pencil_defect(focal_chart(d, pairs, 1)))


def exp_pairs(sys, axes, svals):
    out = []
    for sv in svals:
        k = [sv / (1 + c * sv) for c in (0, 1, 2)]
        N = "exp(%r*u1 + %r*u2 + %r*u3)" % tuple(k)
        out.append(ConservationPair.from_exprs(sys, N, "(u1 + u2 + u3 - %r)*%s" % (1 / sv, N), axes))
    return out


s3 = load_system("shifted3")
ax3 = [np.linspace(-1, 1, 9)] * 3
A = exp_pairs(s3, ax3, [0.3, 0.5, 0.7])
B = [ConservationPair.from_exprs(s3, "u1 + u2 + u3", "(u1 + u2 + u3)^2/2 + u2 + 2*u3", ax3)]
B += exp_pairs(s3, ax3, [0.4, 0.6])
for name, basis in (("A", A), ("B", B)):
    rep = verify_speed_invariance(s3, None, basis, 1, 2)
    print(f"shifted3 basis {name}: speed error vs Laplace step {rep['max_speed_error']:.1e}")

# reciprocal change of variables built from the density u1 + u2 of lindeg2
r = reciprocal_speeds(s, "1", "0", "u1 + u2", "u1*u2")
print("reciprocal lindeg2 speeds:", [to_string(l) for l in r.lambdas],
      "semihamiltonian:", check_semihamiltonian(r).flag)
