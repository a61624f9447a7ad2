"""
Polynomial identities applied to concrete linear operators.

OperatorHandle wraps a square operator as a dense matrix, a diagonal spectral
model (eigenvalue, multiplicity) or a matrix-free callback. A decomposition
of P[D] = c * prod (D + lambda_i)^p_i realizes the projectors
Proj_i = Q_i[D] P^i[D] and the maps

    F(u)_i = c * P^i[D] u        B(t) = c^-1 * sum_i Q_i[D] t_i

relating solutions of P[D] u = f to tuples with (D + lambda_i)^p_i u_i = f.
"""
import functools
import logging
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from config import settings
from errors import BudgetExceeded, InputError, MathematicalFailure
from polyalg import (
    FactoredPoly,
    coefficients,
    constant,
    dense_poly,
    exact_roots,
    expand,
    factor_numeric,
    monic_product,
    partition_of_unity,
    real_partition,
)
from posets import indices_of, is_pairwise_disjoint
from mpoly import complement_product, subset_product


def _rng(rng):
    return rng if rng is not None else np.random.default_rng(settings["seed"])


@dataclass(frozen=True, eq=False)
class OperatorHandle:
    dim: int
    backend: str
    field: object
    matrix: object = None
    spectrum: tuple = ()
    callback: object = None
    name: str = ""

    @classmethod
    def dense(cls, rows, field, name=""):
        m = field.matrix(rows)
        r, c = m.shape
        if r != c:
            raise InputError(f"dense operator {name!r} must be square, got {r}x{c}")
        return cls(dim=r, backend="dense", field=field, matrix=m, name=name)

    @classmethod
    def diagonal(cls, entries, field, name=""):
        spectrum = []
        for entry in entries:
            eig, mult = entry
            if not isinstance(mult, int) or isinstance(mult, bool) or mult < 1:
                raise InputError(f"multiplicity must be a positive integer, got {mult!r}")
            spectrum.append((field.scalar(eig), mult))
        if not spectrum:
            raise InputError("diagonal operator needs at least one entry")
        return cls(dim=sum(m for _, m in spectrum), backend="diagonal", field=field,
                   spectrum=tuple(spectrum), name=name)

    @classmethod
    def from_callback(cls, fn, dim, field, name="", rng=None, trials=3):
        """Register v -> D v; linearity is spot-checked on random triples."""
        if dim < 1:
            raise InputError("operator dimension must be positive")
        handle = cls(dim=dim, backend="apply", field=field, callback=fn, name=name)
        rng = _rng(rng)
        for _ in range(trials):
            u, v = field.random_vector(dim, rng), field.random_vector(dim, rng)
            a, b = (field.scalar(int(x)) for x in rng.integers(-4, 5, 2))
            lhs = handle.apply(a * u + b * v)
            rhs = a * handle.apply(u) + b * handle.apply(v)
            if not field.is_zero_vector(lhs - rhs, scale=field.norm(rhs)):
                raise InputError(f"callback operator {name!r} is not linear")
        return handle

    def apply(self, v):
        if len(v) != self.dim:
            raise InputError(f"vector of length {len(v)} for operator of dimension {self.dim}")
        if self.backend == "dense":
            return self.matrix @ v
        if self.backend == "diagonal":
            return self.field.hadamard(self.field.vector(self.diagonal_values()), v)
        out = self.callback(v)
        if len(out) != self.dim:
            raise InputError(f"callback {self.name!r} returned a vector of length {len(out)}")
        return out

    def diagonal_values(self):
        values = []
        for eig, mult in self.spectrum:
            values.extend([eig] * mult)
        return values

    def to_matrix(self):
        if self.backend == "dense":
            return self.matrix
        if self.backend == "diagonal":
            return self.field.diag(self.diagonal_values())
        columns = [self.apply(self.field.unit_vector(self.dim, j)) for j in range(self.dim)]
        return self.field.hstack(columns, self.dim)

    def commutes_with(self, other, trials=8, rng=None):
        rng = _rng(rng)
        for _ in range(trials):
            v = self.field.random_vector(self.dim, rng)
            ab, ba = self.apply(other.apply(v)), other.apply(self.apply(v))
            if not self.field.is_zero_vector(ab - ba, scale=self.field.norm(ab)):
                return False
        return True

    def to_json(self):
        if self.backend == "dense":
            return {"dense": self.field.matrix_to_json(self.matrix)}
        if self.backend == "diagonal":
            return {"diagonal": [[self.field.to_json(e), m] for e, m in self.spectrum]}
        raise InputError("callback operators have no JSON form")

    @classmethod
    def from_json(cls, obj, field, name=""):
        if not isinstance(obj, dict) or len(obj) != 1:
            raise InputError(f"operator must be {{'dense': rows}} or {{'diagonal': entries}}, got {obj!r}")
        if "dense" in obj:
            rows = [[field.from_json(x) for x in row] for row in obj["dense"]]
            return cls.dense(rows, field, name=name)
        if "diagonal" in obj:
            entries = []
            for entry in obj["diagonal"]:
                if not isinstance(entry, list) or len(entry) != 2:
                    raise InputError(f"diagonal entry must be [eigenvalue, multiplicity], got {entry!r}")
                entries.append((field.from_json(entry[0]), entry[1]))
            return cls.diagonal(entries, field, name=name)
        raise InputError(f"unknown operator backend {next(iter(obj))!r}")


def check_commuting(ops, trials=8, rng=None):
    """Spot-check pairwise commutation; a failure names the pair."""
    rng = _rng(rng)
    for i in range(len(ops)):
        for j in range(i + 1, len(ops)):
            if ops[i].dim != ops[j].dim:
                raise InputError(f"operators {i} and {j} have different dimensions")
            if not ops[i].commutes_with(ops[j], trials=trials, rng=rng):
                raise InputError(f"operators {i} and {j} do not commute")


# ---- polynomials in operators -------------------------------------------

def _scalars(field, q):
    return [field.scalar(c) for c in q.all_coeffs()]


def apply_poly(D, q, v):
    """q[D] v by Horner's rule; diagonal models evaluate q at each eigenvalue."""
    if len(v) != D.dim:
        raise InputError(f"vector of length {len(v)} for operator of dimension {D.dim}")
    field = D.field
    coeffs = _scalars(field, q)
    if D.backend == "diagonal":
        values = [field.horner(coeffs, e) for e in D.diagonal_values()]
        return field.hadamard(field.vector(values), v)
    result = coeffs[0] * v
    for c in coeffs[1:]:
        result = D.apply(result) + c * v
    return result


def poly_matrix(D, q):
    """Materialize q[D] (dense or diagonal operators only)."""
    if D.backend == "apply":
        raise InputError("materializing a polynomial needs a dense or diagonal operator")
    if D.dim > settings["rank_limit"]:
        raise BudgetExceeded(f"dimension {D.dim} exceeds the rank limit {settings['rank_limit']}")
    field = D.field
    if D.backend == "diagonal":
        coeffs = _scalars(field, q)
        return field.diag([field.horner(coeffs, e) for e in D.diagonal_values()])
    columns = [apply_poly(D, q, field.unit_vector(D.dim, j)) for j in range(D.dim)]
    return field.hstack(columns, D.dim)


def apply_mpoly(ops, q, v):
    """q(D_1, ..., D_k) v for a commuting family."""
    if len(ops) != q.nvars:
        raise InputError(f"{q.nvars}-variable polynomial applied to {len(ops)} operators")
    field = ops[0].field
    result = field.zero_vector(ops[0].dim)
    for exp, coeff in q.terms().items():
        w = v
        for op, e in zip(ops, exp):
            for _ in range(e):
                w = op.apply(w)
        result = result + field.scalar(coeff) * w
    return result


def mpoly_matrix(ops, q):
    field, n = ops[0].field, ops[0].dim
    columns = [apply_mpoly(ops, q, field.unit_vector(n, j)) for j in range(n)]
    return field.hstack(columns, n)


# ---- decompositions -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class OperatorDecomposition:
    base: OperatorHandle
    poly: FactoredPoly
    certificate: object

    @property
    def field(self):
        return self.base.field

    @property
    def ell(self):
        return len(self.certificate.factors) - 1

    @functools.cached_property
    def leading(self):
        value = self.poly.field.to_sympy(self.poly.leading)
        return self.field.scalar(self.field.convert(value))

    @functools.cached_property
    def monic(self):
        return monic_product(self.certificate.factors, self.certificate.field)

    def apply_factor(self, i, v):
        return apply_poly(self.base, self.certificate.factors[i], v)

    def apply_complement(self, i, v):
        return apply_poly(self.base, self.certificate.complements[i], v)

    def apply_cofactor(self, i, v):
        return apply_poly(self.base, self.certificate.cofactors[i], v)

    def apply_P(self, v):
        return self.leading * apply_poly(self.base, self.monic, v)

    def project(self, i, u):
        return self.apply_cofactor(i, self.apply_complement(i, u))

    def factor_matrix(self, i):
        return poly_matrix(self.base, self.certificate.factors[i])

    def P_matrix(self):
        return self.leading * poly_matrix(self.base, self.monic)

    def projector_matrix(self, i):
        if self.base.backend == "apply" or self.base.dim > settings["dense_limit"]:
            raise InputError("projector matrices are only materialized for dense or diagonal "
                             f"operators with n <= {settings['dense_limit']}")
        columns = [self.project(i, self.field.unit_vector(self.base.dim, j))
                   for j in range(self.base.dim)]
        return self.field.hstack(columns, self.base.dim)

    def require_full_mode(self):
        if self.certificate.mode != "full":
            raise InputError("this operation needs a decomposition with one factor per root")


def _compatible(D, P):
    if D.field.exact != P.field.exact:
        raise InputError(f"operator is in {D.field.name} mode but the polynomial is {P.field.name}")
    if P.field.name == "gaussian" and D.field.name != "gaussian":
        raise InputError("complex roots need real_decomposition for a real operator")


def build_decomposition(D, P, certificate=None):
    """Attach the partition-of-unity certificate of P to the operator D."""
    if certificate is None:
        _compatible(D, P)
        certificate = partition_of_unity(P)
    logging.debug(f"Decomposition: n={D.dim}, ell={len(certificate.factors) - 1}, "
                  f"mode={certificate.mode}")
    return OperatorDecomposition(base=D, poly=P, certificate=certificate)


def real_decomposition(D, P):
    """Decomposition of a real operator with conjugate pairs grouped into real quadratic powers."""
    if not D.field.exact:
        raise InputError("real_decomposition runs in exact mode")
    return build_decomposition(D, P, certificate=real_partition(P))


@dataclass
class SolveReport:
    residual: float
    components: list
    reconstruction: object
    field: object
    extra: dict = dataclass_field(default_factory=dict)

    def to_json(self):
        out = {
            "kind": "solve_report",
            "residual": self.residual,
            "components": [self.field.vector_to_json(c) for c in self.components],
            "reconstruction": self.field.vector_to_json(self.reconstruction),
        }
        out.update(self.extra)
        return out


def _residual(field, Pu, f):
    return field.norm(Pu - f) / max(field.norm(f), 1.0)


def _is_null(dec, u):
    field = dec.field
    Pu = dec.apply_P(u)
    return field.is_zero_vector(Pu, scale=field.norm(u)), field.norm(Pu)


def split_nullvector(dec, u):
    """u_i = Proj_i u for a null vector u of P[D]."""
    field = dec.field
    ok, measured = _is_null(dec, u)
    if not ok:
        raise InputError(f"vector is not in the null space of P (residual {measured:.3e})")
    parts = [dec.project(i, u) for i in range(dec.ell + 1)]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    scale = field.norm(u)
    if not field.is_zero_vector(total - u, scale=scale):
        raise MathematicalFailure("projections do not sum to the input vector")
    for i, part in enumerate(parts):
        if not field.is_zero_vector(dec.apply_factor(i, part), scale=scale):
            raise MathematicalFailure(f"component {i} is not annihilated by its factor")
    return parts


def solve_forward(dec, u):
    """F(u) = (c * P^i[D] u)_i"""
    return [dec.leading * dec.apply_complement(i, u) for i in range(dec.ell + 1)]


def solve_backward(dec, components, f):
    """B(t) = c^-1 sum Q_i[D] t_i for a tuple of factor solutions."""
    field = dec.field
    if len(components) != dec.ell + 1:
        raise InputError(f"expected {dec.ell + 1} components, got {len(components)}")
    scale = field.norm(f)
    for i, t in enumerate(components):
        r = dec.apply_factor(i, t) - f
        if not field.is_zero_vector(r, scale=scale):
            raise InputError(f"component {i} does not solve its factor equation "
                             f"(residual {field.norm(r):.3e})")
    u = dec.apply_cofactor(0, components[0])
    for i in range(1, dec.ell + 1):
        u = u + dec.apply_cofactor(i, components[i])
    u = u * (1 / dec.leading)
    residual = _residual(field, dec.apply_P(u), f)
    logging.debug(f"solve_backward residual {residual:.3e}")
    return SolveReport(residual=residual, components=list(components), reconstruction=u, field=field)


def solve_factorwise(dec, f):
    """Solve each (D + lambda_i)^p_i u_i = f directly, then reconstruct u."""
    field, D = dec.field, dec.base
    if D.backend == "apply":
        raise InputError("factor problems of callback operators need an external solver")
    components = []
    for i, factor in enumerate(dec.certificate.factors):
        if D.backend == "diagonal":
            coeffs = _scalars(field, factor)
            values = [field.horner(coeffs, e) for e in D.diagonal_values()]
            data = field.entries(f)
            out = []
            for idx, (value, fx) in enumerate(zip(values, data)):
                if field.is_zero(value):
                    if not field.is_zero_vector(field.vector([fx]), scale=field.norm(f)):
                        raise MathematicalFailure(f"factor {i} is singular at entry {idx} where f is nonzero")
                    out.append(0)
                else:
                    out.append(fx / value)
            components.append(field.vector(out))
        else:
            u_i = field.solve(dec.factor_matrix(i), f)
            if u_i is None:
                raise MathematicalFailure(f"factor {i} equation has no solution for this f")
            components.append(u_i)
    return solve_backward(dec, components, f)


# ---- alpha systems ------------------------------------------------------

def alpha_forward(ops, factors, alpha, u):
    """u -> (P^J u)_{J in alpha}"""
    return {J: apply_mpoly(ops, complement_product(factors, J), u) for J in alpha}


def alpha_solve(ops, factors, alpha, cofactors, f, components):
    """B(t) = sum_J Q_J t_J from entries with P_J t_J = f."""
    field = ops[0].field
    scale = field.norm(f)
    for J in alpha:
        if J not in components:
            raise InputError(f"missing tuple entry for subset {indices_of(J)}")
        r = apply_mpoly(ops, subset_product(factors, J), components[J]) - f
        if not field.is_zero_vector(r, scale=scale):
            raise InputError(f"entry for subset {indices_of(J)} does not solve P_J u_J = f "
                             f"(residual {field.norm(r):.3e})")
    u = field.zero_vector(ops[0].dim)
    for J, q in cofactors.items():
        if J not in alpha:
            raise InputError(f"cofactor for subset {indices_of(J)} outside alpha")
        u = u + apply_mpoly(ops, q, components[J])
    full = (1 << len(factors)) - 1
    Pu = apply_mpoly(ops, subset_product(factors, full), u)
    residual = _residual(field, Pu, f)

    disjoint = is_pairwise_disjoint(alpha)
    forward = alpha_forward(ops, factors, alpha, u)
    roundtrip = all(field.is_zero_vector(forward[J] - components[J], scale=field.norm(components[J]))
                    for J in alpha)
    ordered = list(alpha)
    return SolveReport(
        residual=residual,
        components=[components[J] for J in ordered],
        reconstruction=u,
        field=field,
        extra={"pairwise_disjoint": disjoint, "roundtrip": roundtrip,
               "subsets": [indices_of(J) for J in ordered]},
    )


# ---- structure of a single decomposition --------------------------------

@dataclass
class Filtration:
    pieces: list
    coefficients: list
    leading: object


def filtration_expand(dec, i, u_i):
    """Graded pieces u^(s) = q_s (D + lambda_i)^s P^i[D] u_i, q_s the Taylor coefficients of Q_i at -lambda_i."""
    dec.require_full_mode()
    field = dec.field
    lam, p = dec.poly.factors[i]
    scale = field.norm(u_i)
    if not field.is_zero_vector(dec.apply_factor(i, u_i), scale=scale):
        raise InputError(f"vector is not annihilated by factor {i}")

    cert_field = dec.certificate.field
    shift = cert_field.convert(dec.poly.field.to_sympy(lam))
    K = cert_field.domain
    cofactor = dec.certificate.cofactors[i]
    moved = cofactor.compose(dense_poly([K.neg(shift), K.one], cert_field))
    taylor = coefficients(moved) + [K.zero] * p
    taylor = [field.scalar(cert_field.to_sympy(c)) for c in taylor[:p]]

    base = dec.apply_complement(i, u_i)
    lam_scalar = field.scalar(cert_field.to_sympy(shift))
    pieces = []
    power = base
    for s in range(p):
        pieces.append(taylor[s] * power)
        power = dec.base.apply(power) + lam_scalar * power

    expected = K.one
    for j, (lam_j, p_j) in enumerate(dec.poly.factors):
        if j != i:
            diff = K.sub(cert_field.convert(dec.poly.field.to_sympy(lam_j)), shift)
            expected = K.quo(expected, K.pow(diff, p_j))
    leading = field.scalar(cert_field.to_sympy(expected))
    if not field.eq(taylor[0], leading):
        raise MathematicalFailure(f"leading filtration coefficient {taylor[0]} differs from {leading}")
    return Filtration(pieces=pieces, coefficients=taylor, leading=leading)


@dataclass
class EigenReport:
    mu: object
    decomposition: OperatorDecomposition
    component_dims: list
    eigenspace_dim: int
    consistent: bool
    bases: list

    def to_json(self):
        field = self.decomposition.field
        poly = self.decomposition.poly
        return {
            "kind": "eigen_report",
            "mu": field.to_json(field.convert(self.mu)),
            "factors": [{"lambda": poly.field.to_json(lam), "p": p,
                         "generalized_eigenvalue": poly.field.to_json(poly.field.domain.neg(lam))}
                        for lam, p in poly.factors],
            "component_dims": self.component_dims,
            "eigenspace_dim": self.eigenspace_dim,
            "consistent": self.consistent,
        }


def shifted_poly(P, mu):
    """Factor P(x) - mu over the field of P."""
    field = P.field
    q = expand(P) - constant(mu, field)
    if not field.exact:
        return factor_numeric(q, field=field)
    roots = exact_roots(q, field)
    if sum(m for _, m in roots) != q.degree():
        raise MathematicalFailure(f"P - mu does not split over the {field.name} field")
    K = field.domain
    return FactoredPoly(field=field, leading=field.convert(q.LC()),
                        factors=tuple((K.neg(r), m) for r, m in roots))


def eigen_structure(dec, mu):
    """The mu-eigenspace of P[D] split into generalized eigenspaces of D.

    Callback operators get the factorization only (component dims None).
    """
    dec.require_full_mode()
    field = dec.field
    shifted = shifted_poly(dec.poly, mu)
    sub = build_decomposition(dec.base, shifted)
    if dec.base.backend == "apply":
        return EigenReport(mu=mu, decomposition=sub, component_dims=None, eigenspace_dim=None,
                           consistent=None, bases=[])
    n = dec.base.dim
    matrix = sub.P_matrix()
    null = field.nullspace(matrix)
    dims, bases = [], []
    for i in range(sub.ell + 1):
        images = [sub.project(i, b) for b in null]
        block = field.hstack(images, n)
        dims.append(field.rank(block))
        bases.append(field.column_space(block))
    eigenspace_dim = n - field.rank(matrix)
    consistent = sum(dims) == eigenspace_dim == len(null)
    return EigenReport(mu=mu, decomposition=sub, component_dims=dims,
                       eigenspace_dim=eigenspace_dim, consistent=consistent, bases=bases)


@dataclass
class NullRangeAudit:
    null_dim: int
    component_null_dims: list
    range_dim: int
    range_intersection_dim: int

    @property
    def consistent(self):
        return (self.null_dim == sum(self.component_null_dims)
                and self.range_dim == self.range_intersection_dim)

    def to_json(self):
        return {
            "kind": "nullrange_audit",
            "null_dim": self.null_dim,
            "component_null_dims": self.component_null_dims,
            "range_dim": self.range_dim,
            "range_intersection_dim": self.range_intersection_dim,
            "consistent": self.consistent,
        }


def _intersect(field, a, b):
    """Columns spanning col(a) & col(b)."""
    n = a.shape[0]
    if a.shape[1] == 0 or b.shape[1] == 0:
        return field.zeros(n, 0)
    stacked = field.hstack([a, -b], n)
    null = field.nullspace(stacked)
    k = a.shape[1]
    images = [a @ field.head(v, k) for v in null]
    return field.column_space(field.hstack(images, n))


def nullrange_audit(dec):
    """dim N(P) against sum dim N(P_i), dim R(P) against dim of the intersection of R(P_i)."""
    field = dec.field
    n = dec.base.dim
    P = dec.P_matrix()
    factor_mats = [dec.factor_matrix(i) for i in range(dec.ell + 1)]
    null_dims = [n - field.rank(m) for m in factor_mats]
    intersection = field.column_space(factor_mats[0])
    for m in factor_mats[1:]:
        intersection = _intersect(field, intersection, field.column_space(m))
    audit = NullRangeAudit(
        null_dim=n - field.rank(P),
        component_null_dims=null_dims,
        range_dim=field.rank(P),
        range_intersection_dim=field.rank(intersection),
    )
    if not audit.consistent:
        logging.warning(f"Null/range audit inconsistent: {audit.to_json()}")
    return audit


@dataclass
class ProjectorAudit:
    null_dim: int
    idempotent: bool
    orthogonal: bool
    sums_to_identity_on_null: bool
    identity_on_space: bool
    component_dims: list

    @property
    def ok(self):
        return (self.idempotent and self.orthogonal and self.sums_to_identity_on_null
                and self.identity_on_space)

    def to_json(self):
        return {
            "kind": "projector_audit",
            "null_dim": self.null_dim,
            "component_dims": self.component_dims,
            "idempotent": self.idempotent,
            "orthogonal": self.orthogonal,
            "sums_to_identity_on_null": self.sums_to_identity_on_null,
            "identity_on_space": self.identity_on_space,
            "ok": self.ok,
        }


def projector_audit(dec, trials=4, rng=None):
    """Projector laws on N(P) and sum Q_i[D] P^i[D] = id on random vectors of the whole space."""
    field = dec.field
    null = field.nullspace(dec.P_matrix())
    idempotent = orthogonal = sums = True
    images = [[] for _ in range(dec.ell + 1)]
    for b in null:
        scale = field.norm(b)
        parts = [dec.project(i, b) for i in range(dec.ell + 1)]
        total = field.zero_vector(dec.base.dim)
        for i, part in enumerate(parts):
            images[i].append(part)
            total = total + part
            for j in range(dec.ell + 1):
                again = dec.project(j, part)
                expected = part if i == j else field.zero_vector(dec.base.dim)
                if not field.is_zero_vector(again - expected, scale=scale):
                    if i == j:
                        idempotent = False
                    else:
                        orthogonal = False
        sums = sums and field.is_zero_vector(total - b, scale=scale)

    rng = _rng(rng)
    identity = True
    for _ in range(trials):
        v = field.random_vector(dec.base.dim, rng)
        total = field.zero_vector(dec.base.dim)
        for i in range(dec.ell + 1):
            total = total + dec.project(i, v)
        identity = identity and field.is_zero_vector(total - v, scale=field.norm(v))

    dims = [field.rank(field.hstack(parts, dec.base.dim)) for parts in images]
    audit = ProjectorAudit(null_dim=len(null), idempotent=idempotent, orthogonal=orthogonal,
                           sums_to_identity_on_null=sums, identity_on_space=identity,
                           component_dims=dims)
    if not audit.ok:
        logging.warning(f"Projector audit failed: {audit.to_json()}")
    return audit
