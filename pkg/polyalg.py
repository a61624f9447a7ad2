"""
Univariate polynomial algebra and partition-of-unity certificates.

A factored polynomial is stored as a leading coefficient plus roots lambda_i
with multiplicities p_i, meaning c * prod (x + lambda_i)^p_i. The generalized
eigenvalue of an operator attached to the factor (x + lambda_i) is -lambda_i.
"""
import logging
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import sympy

from errors import InputError, MathematicalFailure
from fields import FloatField, GaussianField, RationalField, get_field, has_imaginary

X = sympy.Symbol("x")


# ---- dense polynomials --------------------------------------------------

def dense_poly(coeffs, field):
    """Build a sympy Poly in x from coefficients listed lowest degree first."""
    rep = [field.convert(c) for c in reversed(list(coeffs))]
    return sympy.Poly.from_list(rep or [field.domain.zero], X, domain=field.domain)


def constant(value, field):
    return dense_poly([value], field)


def linear_power(lam, p, field):
    """(x + lam)^p"""
    return dense_poly([lam, 1], field) ** p


def coefficients(q):
    """Domain coefficients of q, lowest degree first; [] for the zero polynomial."""
    if q.is_zero:
        return []
    return list(reversed(q.rep.to_list()))


def degree(q):
    return -1 if q.is_zero else q.degree()


def convert_poly(q, source, target):
    """Move a polynomial between fields through sympy numbers."""
    return dense_poly([target.convert(source.to_sympy(c)) for c in coefficients(q)], target)


def poly_to_json(q, field):
    return [field.to_json(c) for c in coefficients(q)]


def poly_from_json(obj, field):
    if not isinstance(obj, list):
        raise InputError(f"polynomial must be a coefficient list, got {obj!r}")
    return dense_poly([field.from_json(c) for c in obj], field)


def _negligible(q, field, scale=1.0):
    if field.exact:
        return q.is_zero
    bound = field.epsilon * max(scale, 1.0)
    return all(abs(field.scalar(c)) <= bound for c in coefficients(q))


def _max_coefficient(q, field):
    return max((abs(complex(field.to_sympy(c))) for c in coefficients(q)), default=0.0)


# ---- factored polynomials -----------------------------------------------

@dataclass(frozen=True, eq=False)
class FactoredPoly:
    field: object
    leading: object
    factors: tuple

    def __post_init__(self):
        if not self.factors:
            raise InputError("a factored polynomial needs at least one factor")
        if self.field.is_zero(self.leading):
            raise InputError("leading coefficient must be nonzero")
        for i, (lam, p) in enumerate(self.factors):
            if not isinstance(p, int) or isinstance(p, bool) or p < 1:
                raise InputError(f"multiplicity of factor {i} must be a positive integer, got {p!r}")
        roots = [lam for lam, _ in self.factors]
        for i in range(len(roots)):
            for j in range(i + 1, len(roots)):
                if self.field.eq(roots[i], roots[j]):
                    if self.field.exact:
                        raise InputError(f"duplicate root at factors {i} and {j}")
                    raise InputError(f"ill-conditioned root cluster at factors {i} and {j}")

    @classmethod
    def of(cls, field, factors, leading=1):
        """Convenience constructor from raw scalars: of(field, [(lam, p), ...])."""
        return cls(
            field=field,
            leading=field.convert(leading),
            factors=tuple((field.convert(lam), int(p)) for lam, p in factors),
        )

    @property
    def ell(self):
        return len(self.factors) - 1

    @property
    def roots(self):
        return [lam for lam, _ in self.factors]

    @property
    def multiplicities(self):
        return [p for _, p in self.factors]

    @property
    def degree(self):
        return sum(self.multiplicities)

    def factor_poly(self, i):
        lam, p = self.factors[i]
        return linear_power(lam, p, self.field)

    def to_json(self):
        return {
            "leading": self.field.to_json(self.leading),
            "factors": [{"lambda": self.field.to_json(lam), "p": p} for lam, p in self.factors],
        }

    @classmethod
    def from_json(cls, obj, field=None):
        if not isinstance(obj, dict) or set(obj) - {"leading", "factors"} or "factors" not in obj:
            raise InputError(f"factored polynomial must be {{'leading', 'factors'}}, got {obj!r}")
        field = field or get_field()
        if field.exact and not isinstance(field, GaussianField) and has_imaginary(obj):
            field = GaussianField(epsilon=field.epsilon, null_tolerance=field.null_tolerance)
        factors = []
        for entry in obj["factors"]:
            if not isinstance(entry, dict) or set(entry) != {"lambda", "p"}:
                raise InputError(f"factor must be {{'lambda', 'p'}}, got {entry!r}")
            factors.append((field.from_json(entry["lambda"]), entry["p"]))
        leading = field.from_json(obj.get("leading", 1))
        return cls(field=field, leading=leading, factors=tuple(factors))


def expand(P):
    """Dense form c * prod (x + lambda_i)^p_i."""
    q = constant(P.leading, P.field)
    for i in range(len(P.factors)):
        q = q * P.factor_poly(i)
    return q


def monic_product(polys, field):
    q = constant(1, field)
    for f in polys:
        q = q * f
    return q


# ---- certificates -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UnityCertificate:
    """Cofactors Q_g with sum_g Q_g * P^g = 1, where P^g is the product of the other factors.

    In full mode there is one group per root. In grouped-real mode a group is
    either a real root or a conjugate pair, and the factor of a pair is the
    real quadratic power ((x + k)(x + conj k))^p.
    """

    source: FactoredPoly
    cofactors: tuple
    complements: tuple
    factors: tuple
    field: object
    mode: str = "full"
    groups: tuple = dataclass_field(default=())

    def residual(self):
        total = constant(0, self.field)
        for q, comp in zip(self.cofactors, self.complements):
            total = total + q * comp
        return total - constant(1, self.field)

    def problems(self):
        """List of human readable failures; empty when the certificate holds."""
        found = []
        n = len(self.factors)
        if not (len(self.cofactors) == len(self.complements) == n):
            return [f"length mismatch: {len(self.cofactors)} cofactors, "
                    f"{len(self.complements)} complements, {n} factors"]

        scale = max((_max_coefficient(q * c, self.field)
                     for q, c in zip(self.cofactors, self.complements)), default=1.0)
        for i in range(n):
            expected = monic_product([f for j, f in enumerate(self.factors) if j != i], self.field)
            if not _negligible(self.complements[i] - expected, self.field, scale):
                found.append(f"complement {i} is not the product of the other factors")

        try:
            monic = convert_poly(expand(self.source), self.source.field, self.field)
            monic = monic * constant(1 / self.field.scalar(
                self.field.convert(self.source.field.to_sympy(self.source.leading))), self.field)
        except InputError:
            found.append("source polynomial does not live in the certificate field")
        else:
            product = monic_product(self.factors, self.field)
            if not _negligible(product - monic, self.field, _max_coefficient(monic, self.field)):
                found.append("factors do not multiply to the source polynomial")

        if self.mode == "full":
            for i, (q, (_, p)) in enumerate(zip(self.cofactors, self.source.factors)):
                if degree(q) > p - 1:
                    found.append(f"cofactor {i} has degree {degree(q)} > {p - 1}")

        residual = self.residual()
        if not _negligible(residual, self.field, scale):
            found.append(f"sum Q_i P^i - 1 = {residual.as_expr()} is not zero")
        return found

    def verify(self):
        problems = self.problems()
        for problem in problems:
            logging.warning(f"Unity certificate check failed: {problem}")
        return not problems

    def check(self):
        problems = self.problems()
        if problems:
            raise MathematicalFailure("; ".join(problems))
        return self

    def to_json(self):
        return {
            "kind": "unity_certificate",
            "mode": self.mode,
            "field": self.field.name,
            "source": self.source.to_json(),
            "groups": [list(g) for g in self.groups],
            "factors": [poly_to_json(f, self.field) for f in self.factors],
            "cofactors": [poly_to_json(q, self.field) for q in self.cofactors],
            "complements": [poly_to_json(c, self.field) for c in self.complements],
        }

    @classmethod
    def from_json(cls, obj, epsilon=None):
        expected = {"kind", "mode", "field", "source", "groups", "factors", "cofactors", "complements"}
        if not isinstance(obj, dict) or set(obj) != expected:
            raise InputError("malformed unity certificate")
        field = get_field(obj["field"], epsilon=epsilon)
        source_field = field
        if has_imaginary(obj["source"]):
            source_field = GaussianField(epsilon=field.epsilon)
        return cls(
            source=FactoredPoly.from_json(obj["source"], source_field),
            cofactors=tuple(poly_from_json(q, field) for q in obj["cofactors"]),
            complements=tuple(poly_from_json(c, field) for c in obj["complements"]),
            factors=tuple(poly_from_json(f, field) for f in obj["factors"]),
            field=field,
            mode=obj["mode"],
            groups=tuple(tuple(g) for g in obj["groups"]),
        )


# ---- extended Euclid and nilpotent inverses -----------------------------

def ext_gcd(a, b, field):
    """Return (g, s, t) with s*a + t*b = g = gcd(a, b) monic. Exact modes only."""
    if not field.exact:
        raise InputError("ext_gcd is exact-only; float callers use partition_of_unity")
    if a.is_zero and b.is_zero:
        raise InputError("ext_gcd of two zero polynomials")
    s, t, g = a.gcdex(b)
    return g, s, t


def nilpotent_inverse_series(mu, lam, p, field):
    """Inverse of (x + mu) modulo (x + lam)^p as a polynomial of degree p - 1.

    (mu - lam)^-1 * sum_{s<p} (x + lam)^s / (lam - mu)^s
    """
    K = field.domain
    mu, lam = field.convert(mu), field.convert(lam)
    if p < 1:
        raise InputError(f"series length must be positive, got {p}")
    if field.eq(mu, lam):
        raise InputError("series pole: roots coincide")
    d = K.sub(mu, lam)
    base = dense_poly([lam, 1], field)
    ratio = K.quo(K.one, K.neg(d))
    coeff = K.quo(K.one, d)
    result = constant(0, field)
    power = constant(1, field)
    for _ in range(p):
        result = result + power * constant(coeff, field)
        power = power * base
        coeff = K.mul(coeff, ratio)
    return result


# ---- partitions of unity ------------------------------------------------

def _simple_root_cofactors(P):
    K = P.field.domain
    cofactors = []
    for i, lam_i in enumerate(P.roots):
        value = K.one
        for j, lam_j in enumerate(P.roots):
            if j != i:
                value = K.quo(value, K.sub(lam_j, lam_i))
        cofactors.append(constant(value, P.field))
    return cofactors


def _normalized_cofactors(P):
    cofactors = []
    for i, (lam_i, p_i) in enumerate(P.factors):
        modulus = linear_power(lam_i, p_i, P.field)
        q = constant(1, P.field)
        for j, (lam_j, p_j) in enumerate(P.factors):
            if j == i:
                continue
            inverse = nilpotent_inverse_series(lam_j, lam_i, p_i, P.field)
            for _ in range(p_j):
                q = (q * inverse).rem(modulus)
        cofactors.append(q)
    return cofactors


def partition_of_unity(P, method="auto"):
    """Cofactors Q_i, deg Q_i <= p_i - 1, with sum Q_i * prod_{j != i} (x + lambda_j)^p_j = 1.

    method: "auto" uses the constant formula when every p_i = 1,
    "closed" forces it, "normalized" always reduces products of inverse
    series modulo (x + lambda_i)^p_i.
    """
    field = P.field
    factors = [P.factor_poly(i) for i in range(len(P.factors))]
    complements = [
        monic_product([f for j, f in enumerate(factors) if j != i], field)
        for i in range(len(factors))
    ]
    simple = all(p == 1 for p in P.multiplicities)
    if method not in ("auto", "closed", "normalized"):
        raise InputError(f"unknown cofactor method {method!r}")
    if method == "closed" and not simple:
        raise InputError("closed-form cofactors need all multiplicities equal to 1")

    if P.ell == 0:
        cofactors = [constant(1, field)]
    elif method == "closed" or (method == "auto" and simple):
        cofactors = _simple_root_cofactors(P)
    else:
        cofactors = _normalized_cofactors(P)

    logging.debug(f"Partition of unity: ell={P.ell}, degree={P.degree}, field={field.name}")
    cert = UnityCertificate(
        source=P,
        cofactors=tuple(cofactors),
        complements=tuple(complements),
        factors=tuple(factors),
        field=field,
        mode="full",
        groups=tuple((i,) for i in range(len(factors))),
    )
    return cert.check()


def _to_real(q, source, target, what):
    coeffs = []
    for c in coefficients(q):
        re, im = source.to_sympy(c).as_real_imag()
        if im != 0:
            raise MathematicalFailure(f"{what} has a non-real coefficient {source.to_sympy(c)}")
        coeffs.append(re)
    return dense_poly(coeffs, target)


def real_partition(P):
    """Grouped-real partition of unity for a polynomial with a conjugate-closed root set.

    Real roots keep their own cofactor; a conjugate pair (k, conj k) of
    multiplicity p gets Q = Q_k (x + conj k)^p + Q_conj (x + k)^p against the
    complement of ((x + k)(x + conj k))^p.
    """
    if not P.field.exact:
        raise InputError("real_partition needs exact arithmetic")
    if not isinstance(P.field, GaussianField):
        cert = partition_of_unity(P)
        return UnityCertificate(
            source=P,
            cofactors=cert.cofactors,
            complements=cert.complements,
            factors=cert.factors,
            field=P.field,
            mode="grouped-real",
            groups=cert.groups,
        ).check()

    gauss = P.field
    real = RationalField(epsilon=gauss.epsilon, null_tolerance=gauss.null_tolerance)
    if not gauss.is_real(P.leading):
        raise InputError("leading coefficient of a real polynomial must be real")

    groups = []
    used = set()
    for i, (lam, p) in enumerate(P.factors):
        if i in used:
            continue
        if gauss.is_real(lam):
            groups.append((i,))
            used.add(i)
            continue
        partner = None
        conj = gauss.conjugate(lam)
        for j, (mu, q) in enumerate(P.factors):
            if j not in used and j != i and gauss.eq(mu, conj):
                partner = j if q == p else None
                break
        if partner is None:
            raise InputError(f"root set not conjugate-closed: factor {i} has no conjugate partner")
        first, second = (i, partner) if sympy.im(gauss.to_sympy(lam)) > 0 else (partner, i)
        groups.append((first, second))
        used.update((i, partner))

    full = partition_of_unity(P)
    cofactors, factors = [], []
    for group in groups:
        if len(group) == 1:
            i = group[0]
            cofactors.append(_to_real(full.cofactors[i], gauss, real, f"cofactor {i}"))
            factors.append(_to_real(full.factors[i], gauss, real, f"factor {i}"))
        else:
            a, b = group
            combined = full.cofactors[a] * full.factors[b] + full.cofactors[b] * full.factors[a]
            cofactors.append(_to_real(combined, gauss, real, f"pair cofactor {group}"))
            factors.append(_to_real(full.factors[a] * full.factors[b], gauss, real, f"pair factor {group}"))
    complements = [
        monic_product([f for h, f in enumerate(factors) if h != g], real)
        for g in range(len(factors))
    ]
    logging.debug(f"Grouped-real partition: {len(groups)} groups from {len(P.factors)} roots")
    return UnityCertificate(
        source=P,
        cofactors=tuple(cofactors),
        complements=tuple(complements),
        factors=tuple(factors),
        field=real,
        mode="grouped-real",
        groups=tuple(groups),
    ).check()


# ---- root finding -------------------------------------------------------

def cluster_roots(values, tol):
    """Greedy clustering of complex numbers; returns [(centroid, count), ...]."""
    clusters = []
    for z in sorted((complex(v) for v in values), key=lambda c: (c.real, c.imag)):
        for members in clusters:
            if any(abs(z - m) <= tol for m in members):
                members.append(z)
                break
        else:
            clusters.append([z])
    return [(complex(np.mean(members)), len(members)) for members in clusters]


def factor_numeric(p, cluster_tol=1e-6, field=None):
    """Factor a float polynomial through companion-matrix eigenvalues.

    p is a Poly or a coefficient list (lowest degree first).
    """
    field = field or FloatField()
    if field.exact:
        raise InputError("factor_numeric requires float mode")
    if isinstance(p, sympy.Poly):
        coeffs = [complex(c) for c in p.all_coeffs()]
    else:
        coeffs = [field.scalar(c) for c in reversed(list(p))]
    while coeffs and coeffs[0] == 0:
        coeffs.pop(0)
    if len(coeffs) < 2:
        raise InputError("factor_numeric needs a polynomial of degree >= 1")

    roots = np.roots(np.asarray(coeffs, dtype=complex))
    clusters = cluster_roots(roots, cluster_tol)
    result = FactoredPoly.of(field, [(-z, m) for z, m in clusters], leading=coeffs[0])

    expanded = [complex(c) for c in expand(result).all_coeffs()]
    scale = max(abs(c) for c in coeffs)
    error = max(abs(a - b) for a, b in zip(expanded, coeffs)) / scale
    if len(expanded) != len(coeffs) or error > 1e-8:
        logging.warning(f"Numeric factorization residual {error:.3e} exceeds 1e-8")
        raise MathematicalFailure(f"unreliable factorization (relative residual {error:.3e})")
    logging.debug(f"factor_numeric: {len(clusters)} clusters, residual {error:.3e}")
    return result


def exact_roots(q, field):
    """Roots of q lying in the field, with multiplicity: [(root, m), ...].

    Roots are returned as domain elements (the root, not lambda).
    """
    if not field.exact:
        raise InputError("exact_roots needs an exact field")
    if degree(q) < 1:
        return []
    found = q.ground_roots()
    roots = []
    for root, mult in found.items():
        roots.append((field.convert(root), int(mult)))
    roots.sort(key=lambda rm: sympy.default_sort_key(field.to_sympy(rm[0])))
    return roots


def cofactors_by_linear_solve(P):
    """Cofactors from the square coefficient system of sum Q_i P^i = 1, deg Q_i <= p_i - 1."""
    field = P.field
    if not isinstance(field, RationalField):
        raise InputError("the linear-solve oracle runs over the rationals only")
    d = P.degree
    factors = [P.factor_poly(i) for i in range(len(P.factors))]
    columns, unknowns = [], []
    for i, (_, p) in enumerate(P.factors):
        comp = monic_product([f for j, f in enumerate(factors) if j != i], field)
        for s in range(p):
            coeffs = [field.to_sympy(c) for c in coefficients(comp * dense_poly([0] * s + [1], field))]
            columns.append(coeffs + [0] * (d - len(coeffs)))
            unknowns.append((i, s))
    system = sympy.Matrix(columns).T
    rhs = sympy.Matrix([1] + [0] * (d - 1))
    if system.rank() < d:
        raise MathematicalFailure("singular cofactor system")
    solution = system.LUsolve(rhs)
    by_factor = [[0] * p for p in P.multiplicities]
    for (i, s), value in zip(unknowns, solution):
        by_factor[i][s] = value
    return tuple(dense_poly(coeffs, field) for coeffs in by_factor)
