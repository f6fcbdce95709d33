import json
from pathlib import Path

import numpy as np
import pytest

from hydrodarboux.expr import evaluate, is_zero
from hydrodarboux.system import (
    BUILTINS, DiagonalSystem, NotStrictlyHyperbolic, check_commuting_compatibility,
    check_darboux_order0, check_darboux_order1, check_hyperbolicity, check_linear_degeneracy,
    check_semihamiltonian, coefficient_table, full_report, load_system, sample_points,
)

ORACLE = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())


def sys2(l1, l2, dom=((1.5, 3.0), (0.2, 1.2)), **kw):
    return DiagonalSystem.from_strings([l1, l2], dom, **kw)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtins_load_and_are_hyperbolic(name):
    s = load_system(name)
    assert s.n >= 2 and len(s.domain) == s.n
    assert check_hyperbolicity(s).strictly_hyperbolic


def test_load_from_file_with_overrides(tmp_path):
    f = tmp_path / "sys.toml"
    f.write_text('n = 2\ntol = 1e-8\n[lambda]\nl1 = "u2"\nl2 = "u1"\n'
                 '[domain]\nu1 = [1.5, 3.0]\nu2 = [0.2, 1.2]\n')
    s = load_system(f, seed=7)
    assert s.tol == 1e-8 and s.seed == 7 and s.name == "sys"


def test_load_rejects_missing_keys(tmp_path):
    f = tmp_path / "bad.toml"
    f.write_text('n = 2\n[lambda]\nl1 = "u2"\n[domain]\nu1 = [0, 1]\nu2 = [0, 1]\n')
    with pytest.raises(ValueError, match="missing"):
        load_system(f)


def test_sampling_is_seeded_and_includes_corners():
    s = load_system("shifted3")
    a, b = sample_points(s), sample_points(s.with_options(seed=0))
    assert np.array_equal(a, b)
    assert len(a) >= s.samples
    assert any(np.allclose(p, [-1, -1, -1]) for p in a)
    c = sample_points(s.with_options(seed=5))
    assert not np.array_equal(a, c)


def test_hyperbolicity_failure_has_witness():
    s = sys2("u2", "u2", dom=((0, 1), (0, 1)))
    rep = check_hyperbolicity(s)
    assert not rep.strictly_hyperbolic and rep.witness is not None
    with pytest.raises(NotStrictlyHyperbolic):
        coefficient_table(s)


def test_coefficients_lindeg2():
    t = coefficient_table(load_system("lindeg2"))
    assert evaluate(t.a[(1, 2)], (2.0, 1.0)) == pytest.approx(1.0)
    assert is_zero(t.b[(1, 2)]) and is_zero(t.b[(2, 1)])


def test_constant_speeds_have_zero_table():
    t = coefficient_table(load_system("constant2"))
    assert all(t.zero_flags.values())


def test_shifted_family_coefficients():
    t = coefficient_table(load_system("shifted3"))
    for (i, j), e in t.a.items():
        assert evaluate(e, (0.1, 0.2, 0.3)) == pytest.approx(1.0 / (j - i))


def test_coefficient_identity_on_every_builtin():
    for name in BUILTINS:
        t = coefficient_table(load_system(name))
        assert t.identity_residual <= 1e-9


def test_semihamiltonian():
    assert check_semihamiltonian(load_system("lindeg2")).flag  # vacuous for n = 2
    r = check_semihamiltonian(load_system("shifted3"))
    assert r.flag and r.max_residual == 0.0 and ORACLE["shifted3_semiham_zero"]
    bad = check_semihamiltonian(load_system("nonsemiham3"))
    assert not bad.flag and bad.witness is not None and bad.max_residual > 0.1


def test_nonsemihamiltonian_value_matches_oracle():
    s = load_system("nonsemiham3")
    t = coefficient_table(s)
    ref = ORACLE["nonsemiham3_sym_123_at"]
    val = evaluate(t.da(1, 2, 3) - t.da(1, 3, 2), ref["u"])
    assert val == pytest.approx(ref["value"], rel=1e-12)
    assert evaluate(t.a[(1, 2)], ref["u"]) == pytest.approx(ORACLE["nonsemiham3_a12_at"], rel=1e-12)


def test_commuting_compatibility():
    assert check_commuting_compatibility(load_system("shifted3")).flag
    assert check_commuting_compatibility(load_system("order0_decoupled")).max_residual == 0.0
    assert not check_commuting_compatibility(load_system("nonsemiham3")).flag


def test_order0():
    assert check_darboux_order0(load_system("order0_decoupled"), 1).flag
    assert not check_darboux_order0(load_system("lindeg2"), 1).flag
    s = sys2("u1", "u1 + u2", dom=((1, 2), (3, 4)))
    assert check_darboux_order0(s, 1).flag and not check_darboux_order0(s, 2).flag


def test_order1():
    s = load_system("lindeg2")
    r = check_darboux_order1(s, coefficient_table(s), 1)
    assert r.applicable and r.flag and r.witness_j == 2
    s3 = load_system("shifted3")
    assert not check_darboux_order1(s3, coefficient_table(s3), 1).flag
    r2 = load_system("ratio2")
    assert check_darboux_order1(r2, coefficient_table(r2), 1).flag


def test_order0_excludes_order1():
    s = load_system("order0_decoupled")
    r = check_darboux_order1(s, coefficient_table(s), 1)
    assert not r.applicable


def test_linear_degeneracy():
    assert check_linear_degeneracy(load_system("lindeg2")) == [True, True]
    assert check_linear_degeneracy(load_system("order0_decoupled")) == [False, False]
    assert check_linear_degeneracy(sys2("u2", "u2", dom=((0, 1), (0, 1)))) == [True, False]


def test_full_report():
    rep = full_report(load_system("lindeg2"))
    assert rep.semihamiltonian.flag and all(rep.linearly_degenerate) and rep.overall_darboux_order_le1
    rep3 = full_report(load_system("shifted3"))
    assert rep3.semihamiltonian.flag and not rep3.overall_darboux_order_le1
    assert all(r.flag for r in full_report(load_system("order0_decoupled")).darboux_order0)


def test_diagnostics_are_deterministic():
    a = full_report(load_system("nonsemiham3")).to_dict()
    b = full_report(load_system("nonsemiham3")).to_dict()
    assert json.dumps(a, sort_keys=True, default=str) == json.dumps(b, sort_keys=True, default=str)
