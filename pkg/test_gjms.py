#!/usr/bin/env python3
"""
gjms のテスト
係数・球面モデル・零空間・2 階問題への還元と係数の符号
"""
import pytest
import sympy

from errors import InputError
from fields import get_field
from gjms import (
    SpectralModel,
    gjms_coefficients,
    gjms_eigenstructure,
    gjms_nullspace,
    gjms_operator,
    gjms_solve,
    gjms_weak_blocks,
    printed_coefficients,
    sphere_model,
    y_polynomial,
)
from opcore import OperatorHandle
from polyalg import partition_of_unity

QQ_FIELD = get_field("exact")
R = sympy.Rational


def sphere_spec(n, k, l_max):
    model = sphere_model(n, l_max)
    spec = gjms_coefficients(n, k).with_curvature(model.scalar_curvature)
    return spec, model


def test_coefficients_n4_k3():
    spec = gjms_coefficients(4, 3)
    assert spec.c == (R(1, 6), 0, R(-1, 3))
    assert spec.b == (0, R(-1, 6), R(-1, 2))


def test_coefficient_consistency():
    for n in range(3, 13):
        for k in range(1, 9):
            spec = gjms_coefficients(n, k)
            assert spec.b[0] == 0
            for ci, bi in zip(spec.c, spec.b):
                assert bi == ci - spec.c[0]


def test_coefficients_reject_bad_input():
    with pytest.raises(InputError):
        gjms_coefficients(2, 1)
    with pytest.raises(InputError):
        gjms_coefficients(4, 0)


def test_sphere_model_multiplicities():
    model = sphere_model(2, 3)
    assert model.entries == ((0, 1), (2, 3), (6, 5), (12, 7))
    assert model.dim == 16
    assert sphere_model(4, 1).entries[1] == (4, 5)
    assert model.scalar_curvature == 2


def test_model_json():
    assert SpectralModel.from_json({"preset": "unit-sphere", "l_max": 2}, 3) == sphere_model(3, 2)
    model = SpectralModel.from_json({"entries": [[0, 2], ["1/2", 1]]}, 4)
    assert model.dim == 3
    assert model.entries[1][0] == R(1, 2)
    with pytest.raises(InputError):
        SpectralModel.from_json({"preset": "torus", "l_max": 2}, 3)
    with pytest.raises(InputError):
        SpectralModel.from_json({"entries": [[1, 0]]}, 3)


def test_sphere_eigenvalues_match_product_formula():
    # 球面上の P_k の固有値: prod_j (l + n/2 + j - 1)(l + n/2 - j)
    for n in (3, 4, 5, 6):
        for k in (1, 2, 3):
            spec, model = sphere_spec(n, k, 5)
            P, _, _ = gjms_operator(spec, model, QQ_FIELD)
            for l, (value, _) in enumerate(P.spectrum):
                expected = sympy.Integer(1)
                for j in range(1, k + 1):
                    expected *= (l + R(n, 2) + j - 1) * (l + R(n, 2) - j)
                assert QQ_FIELD.to_sympy(value) == expected


def test_operator_requires_curvature_and_dimension():
    spec = gjms_coefficients(4, 2)
    with pytest.raises(InputError, match="scalar curvature"):
        gjms_operator(spec, sphere_model(4, 2))
    with pytest.raises(InputError, match="n=4"):
        gjms_operator(spec.with_curvature(12), sphere_model(5, 2))


def test_nullspace_generic():
    spec, model = sphere_spec(5, 3, 6)
    report = gjms_nullspace(spec, model, QQ_FIELD)
    assert report.branch == "direct_sum"
    assert report.total_dim == report.direct_dim == 0


def test_nullspace_engineered():
    spec, model = sphere_spec(4, 3, 4)
    report = gjms_nullspace(spec, model, QQ_FIELD)
    assert [c.dim for c in report.components] == [0, 1, 5]
    assert [c.entries for c in report.components] == [[], [0], [1]]
    assert report.total_dim == report.direct_dim == 6
    assert report.to_json()["consistent"]


def test_nullspace_flat():
    spec = gjms_coefficients(4, 2).with_curvature(0)
    model = SpectralModel.from_json({"entries": [[0, 2], [1, 1], [3, 1]]}, 4)
    report = gjms_nullspace(spec, model, QQ_FIELD)
    assert report.branch == "generalized"
    assert report.total_dim == report.direct_dim == 2
    with pytest.raises(InputError):
        gjms_solve(spec, model, [1, 1, 1, 1], QQ_FIELD)


def test_k2_cofactors():
    for n in (3, 4, 7):
        Sc = R(n * (n - 1), 3)
        spec = gjms_coefficients(n, 2).with_curvature(Sc)
        cert = partition_of_unity(y_polynomial(spec, QQ_FIELD))
        values = [QQ_FIELD.to_sympy(q.LC()) for q in cert.cofactors]
        expected = R(n * (n - 1)) / (2 * Sc)
        assert values == [-expected, expected]


def test_sign_audit_is_stable():
    for n in range(4, 9):
        for k in range(2, 5):
            spec = gjms_coefficients(n, k).with_curvature(n * (n - 1))
            printed = printed_coefficients(spec, QQ_FIELD)
            cert = partition_of_unity(y_polynomial(spec, QQ_FIELD))
            for q, c in zip(cert.cofactors, printed):
                assert QQ_FIELD.to_sympy(q.LC()) == (-1) ** (k - 1) * QQ_FIELD.to_sympy(c)


def test_solve_s5_float():
    field = get_field("float")
    spec, model = sphere_spec(5, 3, 10)
    f = field.vector([1.0] * model.dim)
    report = gjms_solve(spec, model, f, field)
    assert report.residual <= 1e-10
    assert report.extra["direct_difference"] <= 1e-10
    audit = report.extra["sign_audit"]
    assert audit["observed_sign"] == audit["expected_sign"] == 1
    assert audit["printed_residual"] <= 1e-10
    assert len(report.extra["table"]) == 11


def test_solve_s5_exact():
    spec, model = sphere_spec(5, 3, 4)
    report = gjms_solve(spec, model, [1] * model.dim, QQ_FIELD)
    assert report.residual == 0
    assert report.extra["direct_difference"] == 0
    assert report.extra["table"][0]["multiplicity"] == 1


def test_solve_even_order_sign_flip():
    spec, model = sphere_spec(5, 2, 3)
    report = gjms_solve(spec, model, [1] * model.dim, QQ_FIELD)
    audit = report.extra["sign_audit"]
    assert audit["expected_sign"] == audit["observed_sign"] == -1
    assert not audit["printed_formula_matches"]
    assert audit["printed_residual"] > 0
    assert report.residual == 0


def test_eigenstructure_rational_split():
    spec, model = sphere_spec(5, 2, 4)
    # l = 1: Y = 35/4, P_2 = Y (Y - 2)
    report = gjms_eigenstructure(spec, model, R(945, 16), QQ_FIELD)
    assert report.splits
    assert [c.entries for c in report.components] == [[1]]
    assert report.total_dim == report.direct_dim == 6


def test_eigenstructure_irrational_roots():
    spec, model = sphere_spec(5, 2, 4)
    report = gjms_eigenstructure(spec, model, 1, QQ_FIELD)
    assert not report.splits
    assert report.components == []
    assert report.consistent
    assert len(report.to_json()["notes"]) == 2


def test_eigenstructure_float():
    field = get_field("float")
    spec, model = sphere_spec(5, 2, 4)
    report = gjms_eigenstructure(spec, model, 945 / 16, field)
    assert report.total_dim == report.direct_dim == 6


def test_weak_blocks_identity():
    spec, model = sphere_spec(4, 3, 2)
    S = OperatorHandle.dense(sympy.eye(model.dim), QQ_FIELD)
    blocks = gjms_weak_blocks(spec, model, S, QQ_FIELD)
    assert blocks.dims == [0, 1, 5]
    assert blocks.block(2, 2) == sympy.eye(5)
    assert blocks.block(1, 2) == sympy.zeros(1, 5)
