"""
Koszul complex of a commuting family P_0..P_ell.

V(p) is the sum of copies V_J over subsets J of size p. The map V_J -> V_{J+i}
is sign(J, i) * P_i with sign(J, i) = (-1)^|{j in J : j < i}|. A homotopy
Q_0..Q_ell with sum Q_i P_i = id maps V_{J+i} -> V_J by sign(J, i) * Q_i.
"""
import functools
import itertools
import logging
from dataclasses import dataclass, field as dataclass_field
from math import comb

import numpy as np

from config import settings
from errors import BudgetExceeded, InputError, MathematicalFailure
from mpoly import MultiPoly, alpha_decomposition, complement_product
from opcore import OperatorHandle, SolveReport, check_commuting, mpoly_matrix
from posets import MAX_GROUND, indices_of, mask_of


def sign(J, i):
    """(-1)^|{j in J : j < i}|"""
    return -1 if (J & ((1 << i) - 1)).bit_count() % 2 else 1


@functools.lru_cache(maxsize=None)
def grade_masks(ell, p):
    """Subsets of size p of {0..ell}, in lexicographic order of their indices."""
    return tuple(mask_of(c) for c in itertools.combinations(range(ell + 1), p))


@dataclass(frozen=True, eq=False)
class KoszulComplex:
    factors: tuple
    homotopy: tuple = None
    labels: tuple = None

    @property
    def ell(self):
        return len(self.factors) - 1

    @property
    def dim(self):
        return self.factors[0].dim

    @property
    def field(self):
        return self.factors[0].field

    @property
    def materializable(self):
        ops = list(self.factors) + list(self.homotopy or ())
        return all(op.backend != "apply" for op in ops)

    @functools.cached_property
    def factor_matrices(self):
        return [op.to_matrix() for op in self.factors]

    @functools.cached_property
    def homotopy_matrices(self):
        return [op.to_matrix() for op in self.homotopy]

    def grade_dim(self, p):
        if p < 0 or p > self.ell + 1:
            return 0
        return comb(self.ell + 1, p) * self.dim

    def to_json(self):
        return {
            "kind": "koszul_complex",
            "ell": self.ell,
            "dim": self.dim,
            "grade_dims": [self.grade_dim(p) for p in range(self.ell + 2)],
            "labels": list(self.labels) if self.labels else None,
            "has_homotopy": self.homotopy is not None,
        }


def build_complex(factors, homotopy=None, check_commutation=True, labels=None):
    factors = tuple(factors)
    if not factors:
        raise InputError("a Koszul complex needs at least one operator")
    if len(factors) > MAX_GROUND:
        raise InputError(f"at most {MAX_GROUND} operators are supported")
    dims = {op.dim for op in factors}
    if len(dims) != 1:
        raise InputError(f"operators act on spaces of different dimensions {sorted(dims)}")
    if homotopy is not None:
        homotopy = tuple(homotopy)
        if len(homotopy) != len(factors):
            raise InputError(f"{len(homotopy)} homotopy operators for {len(factors)} factors")
        if any(q.dim != factors[0].dim for q in homotopy):
            raise InputError("homotopy operators must act on the same space as the factors")
    if check_commutation:
        check_commuting(list(factors))
    kc = KoszulComplex(factors=factors, homotopy=homotopy,
                       labels=tuple(labels) if labels is not None else None)
    logging.debug(f"Koszul complex: ell={kc.ell}, n={kc.dim}, "
                  f"total dim={kc.dim * 2 ** (kc.ell + 1)}")
    return kc


# ---- block maps ---------------------------------------------------------

def _require_matrices(kc, what):
    if not kc.materializable:
        raise InputError(f"{what} needs dense or diagonal operators")


def _require_rank_budget(total):
    if total > settings["rank_limit"]:
        logging.error(f"Rank check of dimension {total} exceeds {settings['rank_limit']}")
        raise BudgetExceeded(f"total dimension {total} exceeds the rank limit {settings['rank_limit']}")


@functools.lru_cache(maxsize=64)
def koszul_block_map(kc, p):
    """P(p): V(p) -> V(p+1) as a block matrix."""
    _require_matrices(kc, "assembling P(p)")
    if not 0 <= p <= kc.ell:
        raise InputError(f"P(p) is defined for 0 <= p <= {kc.ell}, got {p}")
    rows, cols = grade_masks(kc.ell, p + 1), grade_masks(kc.ell, p)
    row_index = {J: r for r, J in enumerate(rows)}
    blocks = {}
    for c, J in enumerate(cols):
        for i in range(kc.ell + 1):
            if not J >> i & 1:
                blocks[(row_index[J | 1 << i], c)] = sign(J, i) * kc.factor_matrices[i]
    return kc.field.place_blocks(blocks, len(rows), len(cols), kc.dim)


@functools.lru_cache(maxsize=64)
def homotopy_block_map(kc, p):
    """Q(p): V(p) -> V(p-1) as a block matrix."""
    _require_matrices(kc, "assembling Q(p)")
    if kc.homotopy is None:
        raise InputError("complex has no homotopy")
    if not 1 <= p <= kc.ell + 1:
        raise InputError(f"Q(p) is defined for 1 <= p <= {kc.ell + 1}, got {p}")
    rows, cols = grade_masks(kc.ell, p - 1), grade_masks(kc.ell, p)
    col_index = {K: c for c, K in enumerate(cols)}
    blocks = {}
    for r, J in enumerate(rows):
        for i in range(kc.ell + 1):
            if not J >> i & 1:
                blocks[(r, col_index[J | 1 << i])] = sign(J, i) * kc.homotopy_matrices[i]
    return kc.field.place_blocks(blocks, len(rows), len(cols), kc.dim)


def apply_differential(kc, p, chain):
    """P(p) applied to a chain {J: v_J} of grade p."""
    field = kc.field
    out = {K: field.zero_vector(kc.dim) for K in grade_masks(kc.ell, p + 1)}
    for J, v in chain.items():
        for i in range(kc.ell + 1):
            if not J >> i & 1:
                out[J | 1 << i] = out[J | 1 << i] + sign(J, i) * kc.factors[i].apply(v)
    return out


def apply_homotopy(kc, p, chain):
    """Q(p) applied to a chain of grade p."""
    field = kc.field
    out = {J: field.zero_vector(kc.dim) for J in grade_masks(kc.ell, p - 1)}
    for K, v in chain.items():
        for i in indices_of(K):
            J = K & ~(1 << i)
            out[J] = out[J] + sign(J, i) * kc.homotopy[i].apply(v)
    return out


def _random_chain(kc, p, rng):
    return {J: kc.field.random_vector(kc.dim, rng) for J in grade_masks(kc.ell, p)}


def _chain_norm(field, chain):
    return max((field.norm(v) for v in chain.values()), default=0.0)


def _operator_scale(field, mats):
    return max((field.max_abs(m) for m in mats), default=1.0)


# ---- reports ------------------------------------------------------------

@dataclass
class ComplexReport:
    residuals: list
    method: str
    is_complex: bool

    def to_json(self):
        return {
            "kind": "complex_report",
            "method": self.method,
            "residuals": self.residuals,
            "max_residual": max(self.residuals, default=0.0),
            "is_complex": self.is_complex,
        }


@dataclass
class HomotopyReport:
    residuals: list
    method: str
    failed_grades: list = dataclass_field(default_factory=list)

    @property
    def ok(self):
        return not self.failed_grades

    def to_json(self):
        return {
            "kind": "homotopy_report",
            "method": self.method,
            "residuals": self.residuals,
            "failed_grades": self.failed_grades,
            "exact": self.ok,
        }


@dataclass
class GradeExactness:
    grade: int
    dim: int
    kernel_dim: int
    image_rank: int

    @property
    def exact(self):
        return self.kernel_dim == self.image_rank


@dataclass
class ExactnessReport:
    grades: list

    @property
    def exact(self):
        return all(g.exact for g in self.grades)

    def to_json(self):
        return {
            "kind": "exactness_report",
            "grades": [{"p": g.grade, "dim": g.dim, "kernel_dim": g.kernel_dim,
                        "image_rank": g.image_rank, "exact": g.exact} for g in self.grades],
            "exact": self.exact,
        }


# ---- checks -------------------------------------------------------------

def verify_complex(kc, trials=4, rng=None):
    """P(p+1) P(p) = 0 for every p; needs only commutation of the factors."""
    field = kc.field
    residuals, ok = [], True
    if kc.materializable:
        scale = _operator_scale(field, kc.factor_matrices) ** 2
        for p in range(kc.ell):
            composite = koszul_block_map(kc, p + 1) @ koszul_block_map(kc, p)
            residuals.append(field.max_abs(composite))
            ok = ok and field.is_zero_matrix(composite, scale=scale)
        method = "blocks"
    else:
        rng = rng if rng is not None else np.random.default_rng(settings["seed"])
        for p in range(kc.ell):
            worst = 0.0
            for _ in range(trials):
                middle = apply_differential(kc, p, _random_chain(kc, p, rng))
                out = apply_differential(kc, p + 1, middle)
                scale = _chain_norm(field, middle) ** 2
                worst = max(worst, _chain_norm(field, out))
                ok = ok and all(field.is_zero_vector(v, scale=scale) for v in out.values())
            residuals.append(worst)
        method = "random_chains"
    if not ok:
        logging.warning(f"Koszul maps do not compose to zero: residuals {residuals}")
    return ComplexReport(residuals=residuals, method=method, is_complex=ok)


def _check_homotopy_preconditions(kc, rng):
    field, n = kc.field, kc.dim
    if kc.materializable:
        P, Q = kc.factor_matrices, kc.homotopy_matrices
        scale = _operator_scale(field, P + Q) ** 2
        total = -field.identity(n)
        for q, p in zip(Q, P):
            total = total + q @ p
        if not field.is_zero_matrix(total, scale=scale):
            logging.warning(f"sum Q_i P_i - id has max entry {field.max_abs(total):.3e}")
            raise MathematicalFailure("sum of Q_i P_i differs from the identity "
                                      f"(residual {field.max_abs(total):.3e})")
        for i, q in enumerate(Q):
            for j, p in enumerate(P):
                if not field.is_zero_matrix(q @ p - p @ q, scale=scale):
                    raise MathematicalFailure(f"homotopy Q_{i} does not commute with P_{j}")
        return
    v = field.random_vector(n, rng)
    total = -v
    for q, p in zip(kc.homotopy, kc.factors):
        total = total + q.apply(p.apply(v))
    if not field.is_zero_vector(total, scale=field.norm(v)):
        raise MathematicalFailure("sum of Q_i P_i differs from the identity "
                                  f"(residual {field.norm(total):.3e})")
    for i, q in enumerate(kc.homotopy):
        for j, p in enumerate(kc.factors):
            if not q.commutes_with(p, rng=rng):
                raise MathematicalFailure(f"homotopy Q_{i} does not commute with P_{j}")


def verify_homotopy(kc, trials=4, rng=None):
    """Q(p+1) P(p) + P(p-1) Q(p) = id on every grade p = 0..ell+1."""
    if kc.homotopy is None:
        raise InputError("complex has no homotopy")
    field = kc.field
    rng = rng if rng is not None else np.random.default_rng(settings["seed"])
    _check_homotopy_preconditions(kc, rng)

    residuals, failed = [], []
    if kc.materializable:
        scale = _operator_scale(field, kc.factor_matrices + kc.homotopy_matrices) ** 2
        for p in range(kc.ell + 2):
            total = -field.identity(kc.grade_dim(p))
            if p <= kc.ell:
                total = total + homotopy_block_map(kc, p + 1) @ koszul_block_map(kc, p)
            if p >= 1:
                total = total + koszul_block_map(kc, p - 1) @ homotopy_block_map(kc, p)
            residuals.append(field.max_abs(total))
            if not field.is_zero_matrix(total, scale=scale):
                failed.append(p)
        method = "blocks"
    else:
        for p in range(kc.ell + 2):
            worst = 0.0
            for _ in range(trials):
                chain = _random_chain(kc, p, rng)
                out = {J: -v for J, v in chain.items()}
                if p <= kc.ell:
                    back = apply_homotopy(kc, p + 1, apply_differential(kc, p, chain))
                    out = {J: out[J] + back[J] for J in out}
                if p >= 1:
                    forth = apply_differential(kc, p - 1, apply_homotopy(kc, p, chain))
                    out = {J: out[J] + forth[J] for J in out}
                scale = _chain_norm(field, chain)
                worst = max(worst, _chain_norm(field, out))
                if not all(field.is_zero_vector(v, scale=scale) for v in out.values()):
                    failed.append(p)
                    break
            residuals.append(worst)
        method = "random_chains"
    if failed:
        logging.warning(f"Homotopy identity fails at grades {failed}")
    return HomotopyReport(residuals=residuals, method=method, failed_grades=failed)


def exactness_by_rank(kc):
    """Per grade: exact iff dim ker P(p) = rank P(p-1)."""
    _require_matrices(kc, "rank-based exactness")
    _require_rank_budget(kc.dim * 2 ** (kc.ell + 1))
    field = kc.field
    ranks = [field.rank(koszul_block_map(kc, p)) for p in range(kc.ell + 1)]
    grades = []
    for p in range(kc.ell + 2):
        outgoing = ranks[p] if p <= kc.ell else 0
        incoming = ranks[p - 1] if p >= 1 else 0
        grades.append(GradeExactness(grade=p, dim=kc.grade_dim(p),
                                     kernel_dim=kc.grade_dim(p) - outgoing, image_rank=incoming))
    report = ExactnessReport(grades=grades)
    logging.debug(f"exactness_by_rank: ranks {ranks}, exact={report.exact}")
    return report


def diamond_exact(kc, i, j):
    """Exactness of 0 -> V -> V + V -> V -> 0 built from (P_i, P_j)."""
    if i == j:
        raise InputError("a diamond needs two distinct indices")
    for idx in (i, j):
        if not 0 <= idx <= kc.ell:
            raise InputError(f"index {idx} outside 0..{kc.ell}")
    _require_matrices(kc, "diamond exactness")
    _require_rank_budget(4 * kc.dim)
    field, n = kc.field, kc.dim
    a, b = sorted((i, j))
    Pa, Pb = kc.factor_matrices[a], kc.factor_matrices[b]
    first = field.vstack([Pa, Pb])
    second = field.hstack([sign(1 << a, b) * Pb, sign(1 << b, a) * Pa], n)
    return field.rank(first) == n and field.rank(second) == n


# ---- reconstruction without cofactors -----------------------------------

def _apply_all(kc, u):
    for op in kc.factors:
        u = op.apply(u)
    return u


def reconstruct_Qfree(kc, f, components):
    """u with P u = f from u^i solving P_i u^i = f, using exact diamonds instead of cofactors.

    w_J stands for P_J u. Starting from w_{L - i} = u^i, each w_J is the unique
    solution of P_i w_J = w_{J + i} for all i outside J.
    """
    _require_matrices(kc, "reconstruct_Qfree")
    field, n, ell = kc.field, kc.dim, kc.ell
    components = list(components)
    if len(components) != ell + 1:
        raise InputError(f"expected {ell + 1} components, got {len(components)}")
    scale = field.norm(f)
    for i, (op, t) in enumerate(zip(kc.factors, components)):
        if len(t) != n:
            raise InputError(f"component {i} has length {len(t)}, expected {n}")
        r = op.apply(t) - f
        if not field.is_zero_vector(r, scale=scale):
            raise InputError(f"component {i} does not solve P_{i} u = f (residual {field.norm(r):.3e})")
    for i in range(ell + 1):
        for j in range(i + 1, ell + 1):
            if not diamond_exact(kc, i, j):
                logging.warning(f"Diamond ({i}, {j}) is not exact")
                raise MathematicalFailure(f"diamond ({i}, {j}) is not exact")

    full = (1 << (ell + 1)) - 1
    mats = kc.factor_matrices
    w = {full & ~(1 << i): components[i] for i in range(ell + 1)}

    unique = True
    for size in range(ell - 1, -1, -1):
        for J in grade_masks(ell, size):
            outside = [i for i in range(ell + 1) if not J >> i & 1]
            for a_pos, a in enumerate(outside):
                for b in outside[a_pos + 1:]:
                    lhs = kc.factors[b].apply(w[J | 1 << a])
                    rhs = kc.factors[a].apply(w[J | 1 << b])
                    if not field.is_zero_vector(lhs - rhs, scale=field.norm(lhs)):
                        raise MathematicalFailure(f"chase at {indices_of(J)} is inconsistent "
                                                  f"for the pair ({a}, {b})")
            system = field.vstack([mats[i] for i in outside])
            rhs = field.concat([w[J | 1 << i] for i in outside])
            solution = field.solve(system, rhs)
            if solution is None:
                raise MathematicalFailure(f"no preimage at subset {indices_of(J)}")
            unique = unique and field.rank(system) == n
            w[J] = solution

    u = w[0] if ell >= 1 else components[0]
    Pu = _apply_all(kc, u)
    residual = field.norm(Pu - f) / max(field.norm(f), 1.0)
    if not field.is_zero_vector(Pu - f, scale=scale):
        logging.warning(f"Q-free reconstruction residual {residual:.3e}")
        raise MathematicalFailure(f"reconstructed u misses P u = f (residual {residual:.3e})")
    return SolveReport(residual=residual, components=components, reconstruction=u, field=field,
                       extra={"method": "qfree", "unique": unique})


# ---- complexes from alpha decompositions --------------------------------

def complex_from_alpha(ops, factors, alpha, budget_terms=None):
    """Koszul complex of {P^J[D] : J in Max(alpha)} with the alpha cofactors as homotopy."""
    ops = list(ops)
    if not ops:
        raise InputError("complex_from_alpha needs at least one operator")
    check_commuting(ops)
    field = ops[0].field
    decomposition = alpha_decomposition(factors, alpha, budget_terms)
    nvars = factors[0].nvars
    members = list(decomposition.alpha)
    family, homotopy = [], []
    for J in members:
        label = indices_of(J)
        family.append(OperatorHandle.dense(mpoly_matrix(ops, complement_product(factors, J)),
                                           field, name=f"P^{label}"))
        q = decomposition.cofactors.get(J, MultiPoly.zero(nvars))
        homotopy.append(OperatorHandle.dense(mpoly_matrix(ops, q), field, name=f"Q_{label}"))
    logging.info(f"Complex from alpha: {len(members)} members {[indices_of(J) for J in members]}")
    return build_complex(family, homotopy, check_commutation=False,
                         labels=[indices_of(J) for J in members])
