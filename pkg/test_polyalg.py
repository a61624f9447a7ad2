#!/usr/bin/env python3
"""
polyalg のテスト
分解定理の係数（partition of unity）と拡張ユークリッド、数値因数分解
"""
import numpy as np
import pytest
import sympy

from errors import InputError, MathematicalFailure
from fields import FloatField, GaussianField, RationalField
from fixtures import make_rng, random_factored_poly, random_roots
from polyalg import (
    FactoredPoly,
    UnityCertificate,
    coefficients,
    cofactors_by_linear_solve,
    degree,
    dense_poly,
    expand,
    ext_gcd,
    factor_numeric,
    nilpotent_inverse_series,
    partition_of_unity,
    real_partition,
)

QQ_FIELD = RationalField()


def _coeffs(q, field=QQ_FIELD):
    return [field.to_sympy(c) for c in coefficients(q)]


def test_ext_gcd_coprime_linears():
    a = dense_poly([1, 1], QQ_FIELD)
    b = dense_poly([2, 1], QQ_FIELD)
    g, s, t = ext_gcd(a, b, QQ_FIELD)
    assert _coeffs(g) == [1]
    assert _coeffs(s) == [-1]
    assert _coeffs(t) == [1]


def test_ext_gcd_identical_inputs():
    a = dense_poly([0, 0, 1], QQ_FIELD)
    g, s, t = ext_gcd(a, a, QQ_FIELD)
    assert _coeffs(g) == [0, 0, 1]
    assert (s * a + t * a - g).is_zero


def test_ext_gcd_square_against_linear():
    a = dense_poly([0, 0, 1], QQ_FIELD)
    b = dense_poly([1, 1], QQ_FIELD)
    g, s, t = ext_gcd(a, b, QQ_FIELD)
    assert _coeffs(g) == [1]
    assert _coeffs(s) == [1]
    assert _coeffs(t) == [1, -1]


def test_ext_gcd_rejects_float():
    field = FloatField()
    with pytest.raises(InputError):
        ext_gcd(dense_poly([1, 1], field), dense_poly([2, 1], field), field)


def test_nilpotent_inverse_series_examples():
    q = nilpotent_inverse_series(1, 0, 2, QQ_FIELD)
    assert _coeffs(q) == [1, -1]
    q = nilpotent_inverse_series(2, 0, 1, QQ_FIELD)
    assert _coeffs(q) == [sympy.Rational(1, 2)]

    # mu=0, lambda=1, p=3: x * q = 1 mod (x+1)^3
    q = nilpotent_inverse_series(0, 1, 3, QQ_FIELD)
    modulus = dense_poly([1, 1], QQ_FIELD) ** 3
    assert degree(q) == 2
    assert _coeffs((dense_poly([0, 1], QQ_FIELD) * q).rem(modulus)) == [1]


def test_nilpotent_inverse_series_random():
    rng = make_rng(11)
    for _ in range(60):
        mu, lam = random_roots(rng, 2)
        p = int(rng.integers(1, 6))
        q = nilpotent_inverse_series(mu, lam, p, QQ_FIELD)
        product = (dense_poly([mu, 1], QQ_FIELD) * q).rem(dense_poly([lam, 1], QQ_FIELD) ** p)
        assert _coeffs(product) == [1]


def test_nilpotent_inverse_series_pole():
    with pytest.raises(InputError, match="series pole"):
        nilpotent_inverse_series(3, 3, 2, QQ_FIELD)


def test_partition_two_simple_roots():
    P = FactoredPoly.of(QQ_FIELD, [(1, 1), (2, 1)])
    cert = partition_of_unity(P)
    assert [_coeffs(q) for q in cert.cofactors] == [[1], [-1]]
    assert cert.verify()


def test_partition_single_factor():
    P = FactoredPoly.of(QQ_FIELD, [(3, 4)])
    cert = partition_of_unity(P)
    assert [_coeffs(q) for q in cert.cofactors] == [[1]]
    assert [_coeffs(c) for c in cert.complements] == [[1]]


def test_partition_repeated_root():
    # x^2 (x+1): Q_0 = 1 - x against x + 1, Q_1 = 1 against x^2
    P = FactoredPoly.of(QQ_FIELD, [(0, 2), (1, 1)])
    cert = partition_of_unity(P)
    assert _coeffs(cert.cofactors[0]) == [1, -1]
    assert _coeffs(cert.cofactors[1]) == [1]
    assert not cert.problems()


def test_partition_soundness_random():
    rng = make_rng(1)
    for _ in range(500):
        P = random_factored_poly(rng, QQ_FIELD, max_ell=5, max_mult=4)
        cert = partition_of_unity(P)
        assert cert.residual().is_zero
        for q, p in zip(cert.cofactors, P.multiplicities):
            assert degree(q) <= p - 1


def test_closed_form_agrees_with_normalized():
    rng = make_rng(2)
    for _ in range(200):
        ell = int(rng.integers(1, 6))
        P = FactoredPoly.of(QQ_FIELD, [(r, 1) for r in random_roots(rng, ell + 1)])
        closed = partition_of_unity(P, "closed")
        general = partition_of_unity(P, "normalized")
        for i, (a, b) in enumerate(zip(closed.cofactors, general.cofactors)):
            expected = sympy.Integer(1)
            for j, lam in enumerate(P.roots):
                if j != i:
                    expected /= QQ_FIELD.to_sympy(lam) - QQ_FIELD.to_sympy(P.roots[i])
            assert _coeffs(a) == [expected]
            assert (a - b).is_zero


def test_partition_matches_linear_solve():
    rng = make_rng(3)
    for _ in range(40):
        P = random_factored_poly(rng, QQ_FIELD, max_ell=3, max_mult=3)
        cert = partition_of_unity(P)
        oracle = cofactors_by_linear_solve(P)
        assert all((a - b).is_zero for a, b in zip(cert.cofactors, oracle))


def test_partition_rejects_unknown_method():
    P = FactoredPoly.of(QQ_FIELD, [(1, 1), (2, 1)])
    with pytest.raises(InputError):
        partition_of_unity(P, "magic")
    with pytest.raises(InputError):
        partition_of_unity(FactoredPoly.of(QQ_FIELD, [(1, 2), (2, 1)]), "closed")


def test_duplicate_roots_rejected():
    with pytest.raises(InputError, match="duplicate root"):
        FactoredPoly.of(QQ_FIELD, [(1, 1), (1, 2)])


def test_float_cluster_rejected():
    with pytest.raises(InputError, match="ill-conditioned"):
        FactoredPoly.of(FloatField(epsilon=1e-6), [(1.0, 1), (1.0 + 1e-9, 1)])


def test_float_partition_identity():
    field = FloatField()
    P = FactoredPoly.of(field, [(0.5, 2), (-1.25, 1), (3.0, 3)])
    cert = partition_of_unity(P)
    assert cert.verify()


def test_real_partition_conjugate_pair_only():
    gauss = GaussianField()
    P = FactoredPoly.of(gauss, [(sympy.I, 1), (-sympy.I, 1)])
    cert = real_partition(P)
    assert cert.mode == "grouped-real"
    assert cert.groups == ((0, 1),) or cert.groups == ((1, 0),)
    assert _coeffs(cert.cofactors[0], cert.field) == [1]
    assert _coeffs(cert.factors[0], cert.field) == [1, 0, 1]


def test_real_partition_mixed_roots():
    gauss = GaussianField()
    P = FactoredPoly.of(gauss, [(0, 1), (sympy.I, 1), (-sympy.I, 1)])
    cert = real_partition(P)
    assert isinstance(cert.field, RationalField)
    assert len(cert.cofactors) == 2
    assert cert.residual().is_zero
    # x (x^2 + 1): Q_real = 1 against x^2 + 1, Q_pair = -x against x
    assert _coeffs(cert.cofactors[0], cert.field) == [1]
    assert _coeffs(cert.cofactors[1], cert.field) == [0, -1]


def test_real_partition_of_real_roots_matches_full():
    P = FactoredPoly.of(QQ_FIELD, [(1, 1), (2, 1)])
    grouped = real_partition(P)
    full = partition_of_unity(P)
    assert all((a - b).is_zero for a, b in zip(grouped.cofactors, full.cofactors))


def test_real_partition_requires_conjugate_closure():
    gauss = GaussianField()
    P = FactoredPoly.of(gauss, [(sympy.I, 1), (2, 1)])
    with pytest.raises(InputError, match="conjugate"):
        real_partition(P)


def test_factor_numeric_simple_roots():
    result = factor_numeric([2, -3, 1])
    lams = sorted(complex(FloatField().scalar(lam)).real for lam in result.roots)
    assert lams == pytest.approx([-2.0, -1.0])
    assert result.multiplicities == [1, 1]


def test_factor_numeric_double_root():
    result = factor_numeric([0, 0, 1], cluster_tol=1e-6)
    assert result.multiplicities == [2]
    assert abs(FloatField().scalar(result.roots[0])) < 1e-6


def test_factor_numeric_merges_near_cluster():
    coeffs = list(reversed(np.poly([1.0, 1.0, 1.0000001])))
    result = factor_numeric(coeffs, cluster_tol=1e-3)
    assert result.multiplicities == [3]
    assert FloatField().scalar(result.roots[0]) == pytest.approx(-1.0, abs=1e-6)


def test_factor_numeric_rejects_exact_field():
    with pytest.raises(InputError):
        factor_numeric([1, 1], field=QQ_FIELD)


def test_certificate_json_round_trip_verifies():
    P = FactoredPoly.of(QQ_FIELD, [(0, 2), (sympy.Rational(-1, 3), 1)], leading=5)
    cert = partition_of_unity(P)
    again = UnityCertificate.from_json(cert.to_json())
    assert again.verify()

    broken = cert.to_json()
    broken["cofactors"][1] = [{"num": 7, "den": 1}]
    assert not UnityCertificate.from_json(broken).verify()


def test_expand_keeps_leading_coefficient():
    P = FactoredPoly.of(QQ_FIELD, [(1, 1), (2, 1)], leading=3)
    assert _coeffs(expand(P)) == [6, 9, 3]


def test_failed_check_raises():
    P = FactoredPoly.of(QQ_FIELD, [(1, 1), (2, 1)])
    cert = partition_of_unity(P)
    bad = UnityCertificate(source=P, cofactors=(cert.cofactors[0], cert.cofactors[0]),
                           complements=cert.complements, factors=cert.factors, field=QQ_FIELD)
    with pytest.raises(MathematicalFailure):
        bad.check()
