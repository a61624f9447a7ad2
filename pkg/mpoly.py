"""
Multivariate polynomials over QQ and unit-ideal certificates.

Groebner bases are computed by Buchberger's algorithm in graded reverse
lexicographic order while a transform ledger records every basis element as
a combination of the input generators, so that 1 in <P_j> comes with explicit
cofactors.
"""
import functools
import logging
from dataclasses import dataclass

import sympy
from sympy import QQ
from sympy.polys.orderings import grevlex
from sympy.polys.polyerrors import PolynomialError

from config import settings
from errors import BudgetExceeded, InputError, MathematicalFailure
from polyalg import coefficients, dense_poly
from posets import AlphaSystem, complements, indices_of, lower_closure, mask_of, maximal


@functools.lru_cache(maxsize=None)
def variables(nvars):
    if nvars < 1:
        raise InputError(f"number of variables must be positive, got {nvars}")
    return tuple(sympy.symbols(f"x1:{nvars + 1}"))


def _from_dict(terms, gens):
    return sympy.Poly.from_dict(terms, *gens, domain=QQ)


class MultiPoly:
    """Immutable multivariate polynomial with rational coefficients."""

    __slots__ = ("poly",)

    def __init__(self, poly):
        if not isinstance(poly, sympy.Poly):
            raise TypeError("MultiPoly wraps a sympy Poly")
        object.__setattr__(self, "poly", poly)

    def __setattr__(self, name, value):
        raise AttributeError("MultiPoly is immutable")

    # ---- constructors ---------------------------------------------------

    @classmethod
    def from_terms(cls, nvars, terms):
        gens = variables(nvars)
        clean = {}
        for exp, coeff in dict(terms).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != nvars or any(e < 0 for e in exp):
                raise InputError(f"exponent {exp} does not fit {nvars} variables")
            coeff = sympy.Rational(coeff)
            if coeff != 0:
                clean[exp] = clean.get(exp, 0) + coeff
        return cls(_from_dict(clean, gens))

    @classmethod
    def zero(cls, nvars):
        return cls.from_terms(nvars, {})

    @classmethod
    def constant(cls, value, nvars):
        return cls.from_terms(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, i, nvars):
        exp = [0] * nvars
        exp[i] = 1
        return cls.from_terms(nvars, {tuple(exp): 1})

    @classmethod
    def from_expr(cls, text, nvars, names=None):
        """Parse an expression; names maps the variables, default x1..xk."""
        gens = variables(nvars)
        if names is not None:
            if len(names) != nvars:
                raise InputError("one name per variable is required")
            local = {name: g for name, g in zip(names, gens)}
        else:
            local = {str(g): g for g in gens}
        try:
            expr = sympy.sympify(text, locals=local)
            return cls(sympy.Poly(expr, *gens, domain=QQ))
        except (sympy.SympifyError, PolynomialError) as e:
            raise InputError(f"cannot parse polynomial {text!r}") from e

    # ---- arithmetic -----------------------------------------------------

    @property
    def nvars(self):
        return len(self.poly.gens)

    def _wrap(self, other):
        if isinstance(other, MultiPoly):
            if other.nvars != self.nvars:
                raise InputError("polynomials in different numbers of variables")
            return other.poly
        return _from_dict({(0,) * self.nvars: sympy.Rational(other)}, self.poly.gens)

    def __add__(self, other):
        return MultiPoly(self.poly + self._wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return MultiPoly(self.poly - self._wrap(other))

    def __rsub__(self, other):
        return MultiPoly(self._wrap(other) - self.poly)

    def __mul__(self, other):
        return MultiPoly(self.poly * self._wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return MultiPoly(-self.poly)

    def __pow__(self, n):
        return MultiPoly(self.poly ** n)

    def __eq__(self, other):
        if isinstance(other, MultiPoly):
            return self.nvars == other.nvars and (self.poly - other.poly).is_zero
        return (self.poly - self._wrap(other)).is_zero

    __hash__ = None

    def __repr__(self):
        return f"MultiPoly({self.poly.as_expr()})"

    @property
    def is_zero(self):
        return self.poly.is_zero

    @property
    def is_constant(self):
        return self.poly.is_ground

    def terms(self):
        if self.poly.is_zero:
            return {}
        return dict(self.poly.terms())

    def total_degree(self):
        return -1 if self.poly.is_zero else self.poly.total_degree()

    def leading(self):
        """(monomial, coefficient) of the grevlex leading term."""
        if self.poly.is_zero:
            raise InputError("zero polynomial has no leading term")
        return self.poly.terms(order=grevlex)[0]

    def evaluate(self, point):
        total = 0j
        for exp, coeff in self.terms().items():
            value = complex(coeff)
            for x, e in zip(point, exp):
                value *= complex(x) ** e
            total += value
        return total

    def to_json(self):
        terms = []
        for exp, coeff in sorted(self.terms().items(), key=lambda t: grevlex(t[0]), reverse=True):
            coeff = sympy.Rational(coeff)
            terms.append({"exp": list(exp), "num": int(coeff.p), "den": int(coeff.q)})
        return {"nvars": self.nvars, "terms": terms}

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict) or set(obj) != {"nvars", "terms"}:
            raise InputError(f"polynomial must be {{'nvars', 'terms'}}, got {obj!r}")
        nvars = obj["nvars"]
        if not isinstance(nvars, int) or nvars < 1:
            raise InputError(f"nvars must be a positive integer, got {nvars!r}")
        terms = {}
        for term in obj["terms"]:
            if not isinstance(term, dict) or set(term) != {"exp", "num", "den"}:
                raise InputError(f"term must be {{'exp', 'num', 'den'}}, got {term!r}")
            if term["den"] == 0:
                raise InputError("term with zero denominator")
            exp = tuple(term["exp"])
            terms[exp] = terms.get(exp, 0) + sympy.Rational(term["num"], term["den"])
        return cls.from_terms(nvars, terms)


def product(polys, nvars):
    result = MultiPoly.constant(1, nvars)
    for p in polys:
        result = result * p
    return result


def subset_product(factors, mask):
    """P_J = product of factors[j] for j in J (1 for the empty set)."""
    return product([factors[j] for j in indices_of(mask)], factors[0].nvars)


def complement_product(factors, mask):
    """P^J = product of factors[j] for j not in J."""
    full = (1 << len(factors)) - 1
    return subset_product(factors, full & ~mask)


# ---- Buchberger with a transform ledger ---------------------------------

class _Budget:
    def __init__(self, limit):
        self.limit = limit
        self.used = 0

    @staticmethod
    def _size(polys):
        return sum(len(p.monoms()) for p in polys if not p.is_zero)

    def _fail(self, total):
        logging.error(f"Groebner term budget exceeded ({total} > {self.limit})")
        raise BudgetExceeded(f"basis budget exceeded ({total} terms > {self.limit})")

    def charge(self, *polys):
        """Stored basis elements and ledger rows count permanently."""
        self.used += self._size(polys)
        if self.used > self.limit:
            self._fail(self.used)

    def check(self, *polys):
        """Intermediate remainders and their ledger rows count only while they are alive."""
        total = self.used + self._size(polys)
        if total > self.limit:
            self._fail(total)


def _lead(p):
    return p.terms(order=grevlex)[0]


def _divides(a, b):
    return all(x <= y for x, y in zip(a, b))


def _reduce(p, pt, basis, transforms, gens, budget, skip=None):
    """Full reduction of p by basis; pt is updated so r = sum rt_i * gen_i."""
    remainder = _from_dict({}, gens)
    while not p.is_zero:
        mono, coeff = _lead(p)
        for k, g in enumerate(basis):
            if k == skip:
                continue
            g_mono, g_coeff = _lead(g)
            if _divides(g_mono, mono):
                shift = tuple(a - b for a, b in zip(mono, g_mono))
                term = _from_dict({shift: coeff / g_coeff}, gens)
                p = p - term * g
                pt = [a - term * b for a, b in zip(pt, transforms[k])]
                budget.check(p, *pt)
                break
        else:
            lt = _from_dict({mono: coeff}, gens)
            remainder = remainder + lt
            p = p - lt
    return remainder, pt


def _scaled(p, pt, gens):
    _, coeff = _lead(p)
    inv = _from_dict({(0,) * len(gens): 1 / coeff}, gens)
    return p * inv, [t * inv for t in pt]


def groebner(gens, budget_terms=None):
    """Reduced Groebner basis (grevlex) and transform rows: basis[k] = sum transform[k][i] * gens[i]."""
    gens = list(gens)
    if not gens:
        raise InputError("groebner needs at least one generator")
    nvars = gens[0].nvars
    if any(g.nvars != nvars for g in gens):
        raise InputError("generators live in different numbers of variables")
    if all(g.is_zero for g in gens):
        raise InputError("groebner of zero generators")

    symbols = variables(nvars)
    budget = _Budget(settings["budget_terms"] if budget_terms is None else budget_terms)
    m = len(gens)
    zero = _from_dict({}, symbols)
    one = _from_dict({(0,) * nvars: 1}, symbols)

    basis, transforms = [], []
    for i, g in enumerate(gens):
        if g.is_zero:
            continue
        basis.append(g.poly)
        transforms.append([one if j == i else zero for j in range(m)])
    budget.charge(*basis)

    def unit_from(k):
        p, pt = _scaled(basis[k], transforms[k], symbols)
        return [MultiPoly(p)], [[MultiPoly(t) for t in pt]]

    for k, g in enumerate(basis):
        if g.is_ground:
            return unit_from(k)

    pairs = [(i, j) for j in range(len(basis)) for i in range(j)]
    while pairs:
        i, j = pairs.pop(0)
        (mi, ci), (mj, cj) = _lead(basis[i]), _lead(basis[j])
        if all(min(a, b) == 0 for a, b in zip(mi, mj)):
            continue
        lcm = tuple(max(a, b) for a, b in zip(mi, mj))
        ti = _from_dict({tuple(a - b for a, b in zip(lcm, mi)): 1 / ci}, symbols)
        tj = _from_dict({tuple(a - b for a, b in zip(lcm, mj)): 1 / cj}, symbols)
        s = ti * basis[i] - tj * basis[j]
        st = [ti * a - tj * b for a, b in zip(transforms[i], transforms[j])]
        r, rt = _reduce(s, st, basis, transforms, symbols, budget)
        if r.is_zero:
            continue
        basis.append(r)
        transforms.append(rt)
        budget.charge(r, *rt)
        if r.is_ground:
            logging.debug(f"Unit found after {len(basis)} basis elements")
            return unit_from(len(basis) - 1)
        new = len(basis) - 1
        pairs.extend((k, new) for k in range(new))
        logging.debug(f"Buchberger: basis size {len(basis)}, pending pairs {len(pairs)}")

    # minimal basis, then full inter-reduction and monic scaling
    order = sorted(range(len(basis)), key=lambda k: grevlex(_lead(basis[k])[0]))
    kept = []
    for k in order:
        if not any(_divides(_lead(basis[h])[0], _lead(basis[k])[0]) for h in kept):
            kept.append(k)
    minimal_basis = [basis[k] for k in kept]
    minimal_transforms = [transforms[k] for k in kept]

    reduced, reduced_transforms = [], []
    for idx in range(len(minimal_basis)):
        r, rt = _reduce(minimal_basis[idx], minimal_transforms[idx], minimal_basis,
                        minimal_transforms, symbols, budget, skip=idx)
        r, rt = _scaled(r, rt, symbols)
        reduced.append(r)
        reduced_transforms.append(rt)

    ranking = sorted(range(len(reduced)), key=lambda k: grevlex(_lead(reduced[k])[0]), reverse=True)
    return ([MultiPoly(reduced[k]) for k in ranking],
            [[MultiPoly(t) for t in reduced_transforms[k]] for k in ranking])


# ---- certificates -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IdealCertificate:
    generators: tuple
    cofactors: tuple
    status: str

    @property
    def is_unit(self):
        return self.status == "unit"

    def combination(self):
        nvars = self.generators[0].nvars
        total = MultiPoly.zero(nvars)
        for q, g in zip(self.cofactors, self.generators):
            total = total + q * g
        return total

    def verify(self, budget_terms=None):
        if self.is_unit:
            ok = len(self.cofactors) == len(self.generators) and self.combination() == 1
        elif self.status == "not-unit":
            ok = not self.cofactors and not unit_certificate(self.generators, budget_terms).is_unit
        else:
            ok = False
        if not ok:
            logging.warning(f"Ideal certificate with status {self.status} failed verification")
        return ok

    def to_json(self):
        return {
            "kind": "ideal_certificate",
            "status": self.status,
            "generators": [g.to_json() for g in self.generators],
            "cofactors": [q.to_json() for q in self.cofactors],
        }

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict) or set(obj) != {"kind", "status", "generators", "cofactors"}:
            raise InputError("malformed ideal certificate")
        return cls(
            generators=tuple(MultiPoly.from_json(g) for g in obj["generators"]),
            cofactors=tuple(MultiPoly.from_json(q) for q in obj["cofactors"]),
            status=obj["status"],
        )


def unit_certificate(gens, budget_terms=None):
    """Decide 1 in <gens>; when it is, return cofactors with sum Q_i g_i = 1."""
    gens = tuple(gens)
    if not gens:
        raise InputError("unit_certificate needs at least one generator")
    if all(g.is_zero for g in gens):
        return IdealCertificate(gens, (), "not-unit")
    basis, transform = groebner(gens, budget_terms)
    if len(basis) == 1 and basis[0] == 1:
        cert = IdealCertificate(gens, tuple(transform[0]), "unit")
        if cert.combination() != 1:
            raise MathematicalFailure("cofactor ledger does not reproduce 1")
        return cert
    return IdealCertificate(gens, (), "not-unit")


def certify_beta_decomposition(factors, beta, budget_terms=None):
    """Unit certificate for {P_j : j in J} for every J in beta."""
    if len(beta) < 1:
        raise InputError("beta must have at least one member")
    beta.require_dual_role()
    certs = {}
    for J in beta:
        certs[J] = unit_certificate([factors[j] for j in indices_of(J)], budget_terms)
        logging.debug(f"beta member {indices_of(J)}: {certs[J].status}")
    return certs


def unit_oracle(factors, budget_terms=None):
    """Cached predicate J -> (1 in <P_j : j in J>)."""

    @functools.lru_cache(maxsize=None)
    def oracle(mask):
        if mask == 0:
            return False
        return unit_certificate([factors[j] for j in indices_of(mask)], budget_terms).is_unit

    return oracle


def _cofactor_for(J, certs):
    cert = certs.get(J)
    if cert is None or not cert.is_unit:
        raise MathematicalFailure(f"missing unit certificate for required subset {indices_of(J)}")
    idx = indices_of(J)
    if len(cert.cofactors) != len(idx):
        raise InputError(f"certificate for {idx} has {len(cert.cofactors)} cofactors")
    return dict(zip(idx, cert.cofactors))


def dual_to_alpha(factors, alpha, beta_certs):
    """Cofactors Q_I, I in lower(alpha), with sum Q_I * P^I = 1.

    Built by induction over alpha^u: for J in alpha^u with certificate
    sum_{j in J} c_j P_j = 1, each j contributes c_j to Q_{J-j} when J-j
    lies in lower(alpha) and c_j * Q_{J-j, I} otherwise.
    """
    factors = list(factors)
    ell = len(factors) - 1
    if alpha.ell != ell:
        raise InputError(f"alpha is over ell={alpha.ell}, factors give ell={ell}")
    lower = lower_closure(alpha)
    if lower.full in lower:
        raise InputError("alpha may not contain L itself")
    nvars = factors[0].nvars
    memo = {}

    def expansion(J):
        if J in memo:
            return memo[J]
        result = {}
        for j, c in _cofactor_for(J, beta_certs).items():
            rest = J & ~(1 << j)
            if rest in lower:
                result[rest] = result.get(rest, MultiPoly.zero(nvars)) + c
            else:
                for I, q in expansion(rest).items():
                    result[I] = result.get(I, MultiPoly.zero(nvars)) + c * q
        memo[J] = result
        return result

    cofactors = expansion(lower.full)
    if alpha_identity(factors, cofactors) != 1:
        raise MathematicalFailure("dual_to_alpha output does not expand to 1")
    logging.debug(f"dual_to_alpha: {len(memo)} subsets of alpha^u visited")
    return cofactors


def alpha_identity(factors, cofactors):
    """sum_I Q_I * P^I"""
    nvars = factors[0].nvars
    total = MultiPoly.zero(nvars)
    for I, q in cofactors.items():
        total = total + q * complement_product(factors, I)
    return total


def fold_to_alpha(factors, alpha, cofactors):
    """Move cofactors on lower(alpha) onto Max(alpha): Q_I' += Q_I * P_{I' - I}."""
    tops = list(maximal(alpha))
    nvars = factors[0].nvars
    folded = {top: MultiPoly.zero(nvars) for top in tops}
    for I, q in cofactors.items():
        target = next((top for top in tops if I & top == I), None)
        if target is None:
            raise InputError(f"subset {indices_of(I)} lies under no member of alpha")
        folded[target] = folded[target] + q * subset_product(factors, target & ~I)
    return folded


@dataclass(frozen=True, eq=False)
class AlphaDecomposition:
    """Certificate sum_{J in alpha} Q_J * P^J = 1 for a family of factors."""

    factors: tuple
    alpha: AlphaSystem
    cofactors: dict

    def verify(self):
        ok = set(self.cofactors) <= set(self.alpha.members) and \
            alpha_identity(list(self.factors), self.cofactors) == 1
        if not ok:
            logging.warning("alpha decomposition failed verification")
        return ok

    def to_json(self):
        return {
            "kind": "alpha_decomposition",
            "factors": [f.to_json() for f in self.factors],
            "alpha": self.alpha.to_json(),
            "cofactors": [{"subset": indices_of(J), "poly": q.to_json()}
                          for J, q in sorted(self.cofactors.items())],
        }

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict) or set(obj) != {"kind", "factors", "alpha", "cofactors"}:
            raise InputError("malformed alpha decomposition")
        return cls(
            factors=tuple(MultiPoly.from_json(f) for f in obj["factors"]),
            alpha=AlphaSystem.from_json(obj["alpha"]),
            cofactors={mask_of(entry["subset"]): MultiPoly.from_json(entry["poly"])
                       for entry in obj["cofactors"]},
        )


def alpha_decomposition(factors, alpha, budget_terms=None):
    """Certify every member of alpha^u and fold the induced cofactors onto Max(alpha)."""
    alpha.require_decomposition_role()
    alpha_u, _ = complements(alpha)
    certs = certify_beta_decomposition(factors, alpha_u, budget_terms)
    cofactors = dual_to_alpha(factors, alpha, certs)
    folded = fold_to_alpha(factors, alpha, cofactors)
    return AlphaDecomposition(tuple(factors), maximal(alpha), folded)


def pairwise_certificates(factors, budget_terms=None):
    ell = len(factors) - 1
    return certify_beta_decomposition(factors, AlphaSystem.pairs(ell), budget_terms) if ell else {}


def decomposition_from_pairs(factors, budget_terms=None):
    """Full decomposition sum Q_i P^i = 1 from pairwise unit certificates."""
    factors = list(factors)
    ell = len(factors) - 1
    nvars = factors[0].nvars
    if ell == 0:
        return [MultiPoly.constant(1, nvars)]
    pair_certs = pairwise_certificates(factors, budget_terms)
    for J, cert in pair_certs.items():
        if not cert.is_unit:
            raise MathematicalFailure(f"factors {indices_of(J)} are not relatively invertible")

    certs = dict(pair_certs)
    full = (1 << (ell + 1)) - 1
    for J in range(full + 1):
        if J.bit_count() < 3:
            continue
        idx = indices_of(J)
        a, b = idx[0], idx[1]
        pair = pair_certs[(1 << a) | (1 << b)]
        padded = [MultiPoly.zero(nvars)] * len(idx)
        padded[0], padded[1] = pair.cofactors
        certs[J] = IdealCertificate(tuple(factors[j] for j in idx), tuple(padded), "unit")

    cofactors = dual_to_alpha(factors, AlphaSystem.singletons(ell), certs)
    return [cofactors.get(1 << i, MultiPoly.zero(nvars)) for i in range(ell + 1)]


# ---- one-variable bridges -----------------------------------------------

def univariate_to_mpoly(q):
    terms = {(s,): q.domain.to_sympy(c) for s, c in enumerate(coefficients(q))}
    return MultiPoly.from_terms(1, terms)


def mpoly_to_univariate(m, field):
    if m.nvars != 1:
        raise InputError("only one-variable polynomials convert to univariate form")
    terms = m.terms()
    top = max((exp[0] for exp in terms), default=-1)
    return dense_poly([terms.get((s,), 0) for s in range(top + 1)], field)

