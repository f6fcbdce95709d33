"""Diagnostics and Laplace sequences on the built-in systems.

Run with ``python3 demos/01_diagnostics_and_laplace.py``.
"""
from hydrodarboux.expr import evaluate, to_string
from hydrodarboux.laplace import equivalence_verdicts, laplace_transform, sequence_terminates
from hydrodarboux.system import coefficient_table, full_report, load_system

# linearly degenerate pair: b vanishes, Darboux integrable in order <= 1
rep = full_report(load_system("lindeg2"))
print("lindeg2  semihamiltonian:", rep.semihamiltonian.flag,
      " linearly degenerate:", rep.linearly_degenerate,
      " order <= 1:", rep.overall_darboux_order_le1)

# the shifted family lam^i = u1 + u2 + u3 + c_i is mapped into itself with c shifted by one
s = load_system("shifted3")
step = laplace_transform(s, coefficient_table(s), 1, 2)
print("shifted3 step (1,2):", [to_string(l) for l in step.lambdas])
print("  at the origin:", [evaluate(l, (0, 0, 0)) for l in step.lambdas])

# so the sequence never terminates, and all three integrability verdicts say no
print("  sequence from i=1:", sequence_terminates(s, 1, max_depth=2).outcome)
print("  verdicts:", equivalence_verdicts(s, 1).to_dict())

# a two-component system whose first step kills the a-row
r = sequence_terminates(load_system("recip2"), 1)
print("recip2 sequence:", r.outcome, "after path", r.path)

# a system that fails the symmetry condition, with the offending point
bad = full_report(load_system("nonsemiham3")).semihamiltonian
print("nonsemiham3 semihamiltonian:", bad.flag, "witness", bad.witness)
