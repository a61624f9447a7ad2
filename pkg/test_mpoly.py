#!/usr/bin/env python3
"""
mpoly のテスト
Groebner 基底の変換台帳、単位イデアル証明書、alpha 分解
"""
import pytest
import sympy

from errors import BudgetExceeded, InputError, MathematicalFailure
from fields import RationalField
from fixtures import make_rng
from mpoly import (
    AlphaDecomposition,
    IdealCertificate,
    MultiPoly,
    _Budget,
    _from_dict,
    _reduce,
    alpha_decomposition,
    alpha_identity,
    certify_beta_decomposition,
    decomposition_from_pairs,
    dual_to_alpha,
    groebner,
    mpoly_to_univariate,
    unit_certificate,
    unit_oracle,
    univariate_to_mpoly,
    variables,
)
from polyalg import FactoredPoly, degree, dense_poly, ext_gcd, partition_of_unity
from posets import AlphaSystem, mask_of, optimal_alpha


def mp(text, nvars=1):
    return MultiPoly.from_expr(text, nvars)


def xy(text):
    return MultiPoly.from_expr(text, 2, names=("x", "y"))


def _check_ledger(gens, basis, transform):
    for b, row in zip(basis, transform):
        total = MultiPoly.zero(gens[0].nvars)
        for q, g in zip(row, gens):
            total = total + q * g
        assert total == b


def test_groebner_independent_variables():
    gens = [xy("x"), xy("y")]
    basis, transform = groebner(gens)
    assert len(basis) == 2
    assert set(map(repr, basis)) == set(map(repr, gens))
    _check_ledger(gens, basis, transform)


def test_groebner_finds_unit():
    gens = [mp("x1"), mp("x1 + 1")]
    basis, transform = groebner(gens)
    assert len(basis) == 1 and basis[0] == 1
    _check_ledger(gens, basis, transform)


def test_groebner_circle_and_diagonal():
    gens = [xy("x**2 + y**2 - 1"), xy("x - y")]
    basis, transform = groebner(gens)
    assert any(b * 2 == xy("2*y**2 - 1") for b in basis)
    _check_ledger(gens, basis, transform)


def test_groebner_budget():
    gens = [xy("x**2 + y**2 - 1"), xy("x - y")]
    with pytest.raises(BudgetExceeded, match="basis budget exceeded"):
        groebner(gens, budget_terms=3)


def test_budget_counts_ledger_rows():
    # x^2 を x で割ると余りは 0 だが、台帳の行は 26 項になる
    gens = variables(2)
    x = _from_dict({(1, 0): 1}, gens)
    heavy = _from_dict({(i, j): 1 for i in range(5) for j in range(5)}, gens)
    one = _from_dict({(0, 0): 1}, gens)
    square = _from_dict({(2, 0): 1}, gens)
    with pytest.raises(BudgetExceeded):
        _reduce(square, [one], [x], [[heavy]], gens, _Budget(10))
    remainder, row = _reduce(square, [one], [x], [[heavy]], gens, _Budget(100))
    assert remainder.is_zero
    assert len(row[0].monoms()) == 26


def test_groebner_rejects_zero_generators():
    with pytest.raises(InputError):
        groebner([MultiPoly.zero(2)])


def test_unit_certificate_examples():
    cert = unit_certificate([mp("x1"), mp("x1 + 1")])
    assert cert.is_unit
    assert cert.cofactors[0] == -1 and cert.cofactors[1] == 1
    assert cert.verify()

    assert unit_certificate([xy("x"), xy("y")]).status == "not-unit"
    # 実数上なら共通零点はないが、有理数体上の判定は not-unit
    assert unit_certificate([xy("x**2 + 1"), xy("y**2")]).status == "not-unit"


def test_not_unit_has_common_zero():
    suite = [
        ([xy("x"), xy("y")], (0, 0)),
        ([xy("x*y - 1"), xy("x - 1")], (1, 1)),
        ([xy("x**2 - y"), xy("y - 4")], (2, 4)),
        ([xy("x**2 + y**2 - 2"), xy("x - y")], (1, 1)),
    ]
    for gens, point in suite:
        assert not unit_certificate(gens).is_unit
        assert all(abs(g.evaluate(point)) < 1e-12 for g in gens)


def test_unit_means_no_common_zero():
    suite = [
        [xy("x"), xy("x - 1")],
        [xy("x*y - 1"), xy("x")],
        [xy("x"), xy("y"), xy("x + y - 1")],
        [xy("x**2 + y**2 + 1"), xy("x"), xy("y")],
    ]
    for gens in suite:
        cert = unit_certificate(gens)
        assert cert.is_unit
        assert cert.combination() == 1


def test_random_linear_triples_are_generically_unit():
    rng = make_rng(13)
    units = 0
    for _ in range(10):
        gens = []
        for _ in range(3):
            a, b, c = (int(v) for v in rng.integers(-5, 6, 3))
            gens.append(MultiPoly.from_terms(2, {(1, 0): a, (0, 1): b, (0, 0): c if c else 1}))
        units += unit_certificate(gens).is_unit
    assert units >= 8


def test_unit_status_matches_reference_groebner():
    rng = make_rng(17)
    gens2 = variables(2)
    for _ in range(20):
        gens = []
        for _ in range(int(rng.integers(2, 4))):
            terms = {}
            for exp in ((2, 0), (1, 1), (0, 2), (1, 0), (0, 1), (0, 0)):
                terms[exp] = int(rng.integers(-2, 3)) if sum(exp) < 2 or rng.integers(0, 2) else 0
            gens.append(MultiPoly.from_terms(2, terms))
        if all(g.is_zero for g in gens):
            continue
        reference = sympy.groebner([g.poly.as_expr() for g in gens], *gens2, order="grevlex")
        assert unit_certificate(gens).is_unit == (list(reference.exprs) == [1])


def test_unit_certificate_matches_univariate_gcd():
    # 1 変数では単位イデアル ⟺ gcd が定数
    field = RationalField()
    rng = make_rng(19)
    shared = 0
    for trial in range(60):
        a, b = (dense_poly([int(c) for c in rng.integers(-3, 4, int(rng.integers(2, 4)))], field)
                for _ in range(2))
        if trial % 2:
            common = dense_poly([int(rng.integers(-3, 4)), 1], field)
            a, b = a * common, b * common
        if a.is_zero or b.is_zero:
            continue
        g, s, t = ext_gcd(a, b, field)
        cert = unit_certificate([univariate_to_mpoly(a), univariate_to_mpoly(b)])
        assert cert.is_unit == (degree(g) == 0)
        if trial % 2:
            shared += 1
            assert not cert.is_unit
        assert s * a + t * b == g
    assert shared > 20


def test_certify_beta_decomposition():
    full = AlphaSystem.of(2, [[0, 1, 2]])
    certs = certify_beta_decomposition([xy("x"), xy("y"), xy("x + y - 1")], full)
    assert certs[mask_of([0, 1, 2])].is_unit
    certs = certify_beta_decomposition([xy("x"), xy("y"), xy("x + y")], full)
    assert not certs[mask_of([0, 1, 2])].is_unit
    certs = certify_beta_decomposition([xy("x"), xy("y")], AlphaSystem.of(1, [[0]]))
    assert not certs[mask_of([0])].is_unit


def test_dual_to_alpha_two_factors():
    factors = [mp("x1"), mp("x1 + 1")]
    full = mask_of([0, 1])
    certs = {full: unit_certificate(factors)}
    cofactors = dual_to_alpha(factors, AlphaSystem.singletons(1), certs)
    assert cofactors[mask_of([0])] == 1
    assert cofactors[mask_of([1])] == -1
    assert alpha_identity(factors, cofactors) == 1


def test_dual_to_alpha_missing_certificate():
    factors = [mp("x1"), mp("x1 + 1")]
    with pytest.raises(MathematicalFailure, match="missing unit certificate"):
        dual_to_alpha(factors, AlphaSystem.singletons(1), {})


def test_alpha_decomposition_matches_univariate_partition():
    field = RationalField()
    factors = [mp("x1"), mp("x1 + 1"), mp("x1 + 2")]
    dec = alpha_decomposition(factors, AlphaSystem.singletons(2))
    assert dec.verify()

    P = FactoredPoly.of(field, [(0, 1), (1, 1), (2, 1)])
    cert = partition_of_unity(P)
    for i in range(3):
        mine = mpoly_to_univariate(dec.cofactors[1 << i], field)
        # 余因子は P_i を法として一意
        assert (mine - cert.cofactors[i]).rem(cert.factors[i]).is_zero


def test_alpha_decomposition_grouped_members():
    factors = [mp("x1"), mp("x1 - 1"), mp("x1 - 2")]
    alpha = AlphaSystem.of(2, [[0], [1, 2]])
    dec = alpha_decomposition(factors, alpha)
    assert set(dec.cofactors) <= set(dec.alpha.members)
    assert alpha_identity(factors, dec.cofactors) == 1

    again = AlphaDecomposition.from_json(dec.to_json())
    assert again.verify()


def test_alpha_roles_rejected():
    factors = [mp("x1"), mp("x1 - 1"), mp("x1 - 2")]
    with pytest.raises(InputError, match="L itself"):
        alpha_decomposition(factors, AlphaSystem.of(2, [[0, 1, 2]]))
    with pytest.raises(InputError, match="empty set alone"):
        certify_beta_decomposition(factors, AlphaSystem.of(2, [[]]))


def test_decomposition_from_pairs():
    factors = [mp("x1"), mp("x1 - 1"), mp("x1 + 3"), mp("2*x1 + 1")]
    cofactors = decomposition_from_pairs(factors)
    as_dict = {1 << i: q for i, q in enumerate(cofactors)}
    assert alpha_identity(factors, as_dict) == 1


def test_decomposition_from_pairs_single_factor():
    assert decomposition_from_pairs([mp("x1 + 5")]) == [MultiPoly.constant(1, 1)]


def test_optimal_alpha_from_unit_oracle():
    factors = [mp("x1"), mp("x1 + 1"), mp("x1 + 2")]
    alpha_opt, beta_opt = optimal_alpha(2, unit_oracle(factors))
    assert sorted(alpha_opt.subsets()) == [[0, 1], [0, 2], [1, 2]]
    assert sorted(beta_opt.subsets()) == [[0], [1], [2]]


def test_certificate_json_round_trip():
    cert = unit_certificate([xy("x"), xy("x - 1"), xy("y**2 + x")])
    again = IdealCertificate.from_json(cert.to_json())
    assert again.verify()

    forged = cert.to_json()
    forged["cofactors"][0] = MultiPoly.constant(3, 2).to_json()
    assert not IdealCertificate.from_json(forged).verify()


def test_univariate_bridge():
    field = RationalField()
    q = dense_poly([1, 0, -2, 5], field)
    assert (mpoly_to_univariate(univariate_to_mpoly(q), field) - q).is_zero


def test_from_json_rejects_bad_terms():
    with pytest.raises(InputError):
        MultiPoly.from_json({"nvars": 1, "terms": [{"exp": [1], "num": 1}]})
    with pytest.raises(InputError):
        MultiPoly.from_json({"nvars": 1, "terms": [{"exp": [1, 2], "num": 1, "den": 1}]})
