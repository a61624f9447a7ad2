#!/usr/bin/env python3
"""
koszul のテスト
符号規則・複体の条件・ホモトピー・階数による完全性・余因子なしの再構成
"""
import itertools

import pytest
import sympy

from config import settings
from errors import BudgetExceeded, InputError, MathematicalFailure
from fields import RationalField
from fixtures import (
    diagonal_operator,
    jordan_matrix,
    make_rng,
    quotient_operator,
    random_jordan_blocks,
    random_roots,
)
from koszul import (
    build_complex,
    complex_from_alpha,
    diamond_exact,
    exactness_by_rank,
    grade_masks,
    homotopy_block_map,
    koszul_block_map,
    reconstruct_Qfree,
    sign,
    verify_complex,
    verify_homotopy,
)
from mpoly import MultiPoly, product, unit_certificate
from opcore import (
    OperatorHandle,
    build_decomposition,
    mpoly_matrix,
    poly_matrix,
    solve_backward,
    solve_forward,
)
from polyalg import FactoredPoly, dense_poly, ext_gcd
from posets import AlphaSystem

QQ_FIELD = RationalField()


def vec(*values):
    return QQ_FIELD.vector(values)


def coprime_quotient():
    """x と x+1 が x が作用する Q[x]/(x(x+1)) 上で生成する複体"""
    x = sympy.Symbol("x")
    D = quotient_operator(sympy.Poly(x * (x + 1), x), QQ_FIELD, name="D")
    a = dense_poly([0, 1], QQ_FIELD)
    b = dense_poly([1, 1], QQ_FIELD)
    _, s, t = ext_gcd(a, b, QQ_FIELD)
    factors = [OperatorHandle.dense(poly_matrix(D, p), QQ_FIELD, name=f"P{i}")
               for i, p in enumerate((a, b))]
    homotopy = [OperatorHandle.dense(poly_matrix(D, q), QQ_FIELD, name=f"Q{i}")
                for i, q in enumerate((s, t))]
    return factors, homotopy


def test_sign_examples():
    assert sign(0, 3) == 1
    assert sign(0b001, 1) == -1
    assert sign(0b011, 2) == 1
    assert sign(0b101, 3) == 1
    assert sign(0b101, 1) == -1
    assert sign(0b110, 0) == 1


def test_sign_antisymmetry_exhaustive():
    for ell in range(6):
        full = (1 << (ell + 1)) - 1
        for J in range(full + 1):
            outside = [i for i in range(ell + 1) if not J >> i & 1]
            for i, j in itertools.permutations(outside, 2):
                assert sign(J, i) * sign(J | 1 << i, j) == -sign(J, j) * sign(J | 1 << j, i)


def test_grade_masks_order():
    assert grade_masks(2, 1) == (0b001, 0b010, 0b100)
    assert grade_masks(2, 2) == (0b011, 0b101, 0b110)
    assert grade_masks(2, 0) == (0,)


def test_two_operator_blocks():
    P0, P1 = sympy.diag(1, 2), sympy.diag(3, 4)
    kc = build_complex([OperatorHandle.dense(P0, QQ_FIELD), OperatorHandle.dense(P1, QQ_FIELD)])
    assert koszul_block_map(kc, 0) == P0.col_join(P1)
    assert koszul_block_map(kc, 1) == (-P1).row_join(P0)
    assert koszul_block_map(kc, 1) * koszul_block_map(kc, 0) == sympy.zeros(2, 2)
    assert kc.to_json()["grade_dims"] == [2, 4, 2]


def test_verify_complex_commuting_family():
    rng = make_rng(21)
    ops = [diagonal_operator([int(x) for x in rng.integers(-3, 4, 4)], QQ_FIELD) for _ in range(4)]
    report = verify_complex(build_complex(ops))
    assert report.is_complex
    assert report.method == "blocks"
    assert max(report.residuals) == 0


def test_verify_complex_detects_non_commuting():
    ops = [OperatorHandle.dense([[0, 1], [0, 0]], QQ_FIELD),
           OperatorHandle.dense([[0, 0], [1, 0]], QQ_FIELD)]
    with pytest.raises(InputError, match="do not commute"):
        build_complex(ops)
    report = verify_complex(build_complex(ops, check_commutation=False))
    assert not report.is_complex


def test_verify_complex_with_callbacks():
    ops = [OperatorHandle.from_callback(lambda v, k=k: k * v, 3, QQ_FIELD, name=f"{k}I")
           for k in (2, 3, -1)]
    report = verify_complex(build_complex(ops), rng=make_rng(0))
    assert report.method == "random_chains"
    assert report.is_complex


def test_homotopy_on_quotient_ring():
    factors, homotopy = coprime_quotient()
    kc = build_complex(factors, homotopy)
    report = verify_homotopy(kc)
    assert report.ok
    assert len(report.residuals) == 3
    assert all(r == 0 for r in report.residuals)


def test_homotopy_block_shapes():
    factors, homotopy = coprime_quotient()
    kc = build_complex(factors, homotopy)
    assert homotopy_block_map(kc, 1).shape == (2, 4)
    assert homotopy_block_map(kc, 2).shape == (4, 2)
    with pytest.raises(InputError):
        homotopy_block_map(kc, 0)


def test_homotopy_with_callback_operators():
    factors, homotopy = coprime_quotient()
    wrap = [OperatorHandle.from_callback(op.apply, op.dim, QQ_FIELD, name=op.name)
            for op in factors + homotopy]
    kc = build_complex(wrap[:2], wrap[2:])
    report = verify_homotopy(kc, rng=make_rng(3))
    assert report.method == "random_chains"
    assert report.ok


def test_homotopy_rejects_wrong_cofactors():
    factors, homotopy = coprime_quotient()
    kc = build_complex(factors, list(reversed(homotopy)))
    with pytest.raises(MathematicalFailure, match="identity"):
        verify_homotopy(kc)
    with pytest.raises(InputError):
        verify_homotopy(build_complex(factors))


def test_exactness_coprime_vs_shared_kernel():
    factors, _ = coprime_quotient()
    assert exactness_by_rank(build_complex(factors)).exact

    same = diagonal_operator([0, 1], QQ_FIELD)
    report = exactness_by_rank(build_complex([same, same]))
    assert not report.exact
    first = report.grades[0]
    assert (first.kernel_dim, first.image_rank) == (1, 0)


def test_exactness_respects_rank_limit(monkeypatch):
    factors, _ = coprime_quotient()
    monkeypatch.setitem(settings, "rank_limit", 4)
    with pytest.raises(BudgetExceeded):
        exactness_by_rank(build_complex(factors))


def _line(root):
    return MultiPoly.from_terms(1, {(1,): 1, (0,): -root})


def _factor_roots(rng, eigenvalues, ell, shared):
    """ell + 1 個の根集合; shared がなければ全体の共通根はない"""
    pool = list(eigenvalues) + [e + 10 for e in eigenvalues]
    while True:
        roots = []
        for _ in range(ell + 1):
            k = min(int(rng.integers(1, 3)), len(pool))
            roots.append({pool[int(i)] for i in rng.choice(len(pool), k, replace=False)})
        if shared is not None:
            return [r | {shared} for r in roots]
        if not set.intersection(*roots):
            return roots


def test_rank_exactness_agrees_with_homotopy():
    rng = make_rng(41)
    for trial in range(50):
        ell = int(rng.integers(2, 4))
        eigenvalues = random_roots(rng, int(rng.integers(1, 4)), -3, 3, denominators=(1,))
        blocks = random_jordan_blocks(rng, eigenvalues, max_block=2, max_blocks_per_eigenvalue=1)
        A, _, _ = jordan_matrix(blocks, rng)
        D = OperatorHandle.dense(A, QQ_FIELD, name="D")
        shared = eigenvalues[0] if trial % 2 else None
        factors = [product([_line(r) for r in sorted(roots)], 1)
                   for roots in _factor_roots(rng, eigenvalues, ell, shared)]
        ops = [OperatorHandle.dense(mpoly_matrix([D], q), QQ_FIELD, name=f"P{j}")
               for j, q in enumerate(factors)]
        rank_report = exactness_by_rank(build_complex(ops))

        cert = unit_certificate(factors)
        assert cert.is_unit == (shared is None)
        if cert.is_unit:
            homotopy = [OperatorHandle.dense(mpoly_matrix([D], q), QQ_FIELD, name=f"Q{j}")
                        for j, q in enumerate(cert.cofactors)]
            homotopy_report = verify_homotopy(build_complex(ops, homotopy))
            assert homotopy_report.ok
            by_homotopy = [p not in homotopy_report.failed_grades for p in range(ell + 2)]
            assert [g.exact for g in rank_report.grades] == by_homotopy
        else:
            # D の固有ベクトルが全因子に消される
            assert not rank_report.exact
            assert rank_report.grades[0].kernel_dim > 0


def test_diamond_exact_examples():
    factors, _ = coprime_quotient()
    assert diamond_exact(build_complex(factors), 0, 1)
    same = diagonal_operator([0, 1], QQ_FIELD)
    kc = build_complex([same, same])
    assert not diamond_exact(kc, 0, 1)
    with pytest.raises(InputError):
        diamond_exact(kc, 1, 1)


def _shifted_diagonals(D_entries, roots):
    D = diagonal_operator(D_entries, QQ_FIELD, name="D")
    P = FactoredPoly.of(QQ_FIELD, [(lam, 1) for lam in roots])
    dec = build_decomposition(D, P)
    ops = [diagonal_operator([d + lam for d in D_entries], QQ_FIELD) for lam in roots]
    return dec, build_complex(ops)


def test_reconstruct_qfree_example():
    # P0 = diag(0,1,2), P1 = diag(1,2,3)
    dec, kc = _shifted_diagonals([-1, 0, 1], [1, 2])
    f = vec(0, 4, 6)
    components = [vec(7, 4, 3), vec(0, 2, 2)]
    report = reconstruct_Qfree(kc, f, components)
    assert report.reconstruction == vec(7, 2, 1)
    assert report.residual == 0
    assert report.extra["unique"]
    assert solve_backward(dec, components, f).reconstruction == report.reconstruction


def _jordan_family(rng):
    """共役した Jordan 行列 D と、D の固有値で退化する因子 (D + lam_i)^p_i"""
    eigenvalues = random_roots(rng, int(rng.integers(1, 4)), -4, 4, denominators=(1,))
    blocks = random_jordan_blocks(rng, eigenvalues, max_block=2, max_blocks_per_eigenvalue=1)
    A, _, _ = jordan_matrix(blocks, rng)
    D = OperatorHandle.dense(A, QQ_FIELD, name="D")
    roots = [-e for e in eigenvalues]
    if len(roots) == 1 or rng.integers(0, 2):
        roots.append(5 + int(rng.integers(0, 3)))
    P = FactoredPoly.of(QQ_FIELD, [(lam, int(rng.integers(1, 3))) for lam in roots])
    dec = build_decomposition(D, P)
    ops = [OperatorHandle.dense(dec.factor_matrix(i), QQ_FIELD, name=f"P{i}")
           for i in range(dec.ell + 1)]
    return dec, build_complex(ops)


def test_reconstruct_qfree_matches_backward_random():
    rng = make_rng(8)
    for trial in range(50):
        if trial % 2:
            dec, kc = _jordan_family(rng)
        else:
            roots = random_roots(rng, int(rng.integers(2, 5)), -4, 4, denominators=(1,))
            entries = [int(x) for x in rng.integers(-4, 5, int(rng.integers(2, 6)))]
            dec, kc = _shifted_diagonals(entries, roots)
        u = QQ_FIELD.random_vector(dec.base.dim, rng)
        f = dec.apply_P(u)
        components = solve_forward(dec, u)
        report = reconstruct_Qfree(kc, f, components)
        assert report.residual == 0
        assert report.reconstruction == solve_backward(dec, components, f).reconstruction


def test_reconstruct_qfree_errors():
    _, kc = _shifted_diagonals([-1, 0, 1], [1, 2])
    with pytest.raises(InputError, match="does not solve"):
        reconstruct_Qfree(kc, vec(0, 4, 6), [vec(7, 5, 3), vec(0, 2, 2)])
    with pytest.raises(InputError, match="components"):
        reconstruct_Qfree(kc, vec(0, 4, 6), [vec(7, 4, 3)])

    same = diagonal_operator([0, 1], QQ_FIELD)
    with pytest.raises(MathematicalFailure, match="diamond"):
        reconstruct_Qfree(build_complex([same, same]), vec(0, 1), [vec(0, 1), vec(0, 1)])


def test_complex_from_alpha_grouped():
    D = diagonal_operator([0, 1, 2, 3], QQ_FIELD, name="D")
    factors = [MultiPoly.from_expr(e, 1) for e in ("x1", "x1 - 1", "x1 - 2")]
    alpha = AlphaSystem.of(2, [[0], [1, 2]])
    kc = complex_from_alpha([D], factors, alpha)
    assert kc.ell == 1
    assert kc.labels == ([0], [1, 2])
    assert verify_complex(kc).is_complex
    assert verify_homotopy(kc).ok
    assert exactness_by_rank(kc).exact


def test_build_complex_validation():
    a = diagonal_operator([1, 2], QQ_FIELD)
    b = diagonal_operator([1, 2, 3], QQ_FIELD)
    with pytest.raises(InputError, match="different dimensions"):
        build_complex([a, b])
    with pytest.raises(InputError):
        build_complex([])
    with pytest.raises(InputError, match="homotopy"):
        build_complex([a, a], [a])
