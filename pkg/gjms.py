"""
GJMS operators on Einstein manifolds, realized on diagonal spectral models.

With constant scalar curvature Sc the order-2k operator factors as

    P_k = prod_{i=1..k} (Delta + c_i Sc) = prod_{i=1..k} (Y + b_i Sc),  Y = Delta + c_1 Sc

with c_i = (n+2i-2)(n-2i) / (4n(n-1)) and b_i = i(1-i) / (n(n-1)) = c_i - c_1.
A spectral model lists eigenvalues of Delta with multiplicities; the unit
sphere S^n has eigenvalues l(l+n-1) and Sc = n(n-1).
"""
import logging
from dataclasses import dataclass, field as dataclass_field, replace
from math import comb

import sympy

from errors import InputError, MathematicalFailure
from fields import get_field, parse_scalar
from opcore import OperatorHandle, build_decomposition, solve_factorwise
from polyalg import FactoredPoly, constant, exact_roots, expand, factor_numeric
from symmetry import symmetry_blocks

SPHERE_PRESET = "unit-sphere"
# 数値因数分解の根と固有値を同一視する許容誤差
ROOT_MATCH_TOL = 1e-6


@dataclass(frozen=True)
class GJMSSpec:
    n: int
    k: int
    c: tuple
    b: tuple
    Sc: object = None

    def with_curvature(self, Sc):
        value = parse_scalar(Sc) if isinstance(Sc, (dict, str, int, float)) else sympy.sympify(Sc)
        return replace(self, Sc=value)

    def to_json(self, field=None):
        field = field or get_field("exact")
        out = {
            "n": self.n,
            "k": self.k,
            "c": [field.to_json(v) for v in self.c],
            "b": [field.to_json(v) for v in self.b],
        }
        if self.Sc is not None:
            out["Sc"] = field.to_json(self.Sc)
        return out


def gjms_coefficients(n, k):
    """Exact c_1..c_k and b_1..b_k for dimension n."""
    if not isinstance(n, int) or n < 3:
        raise InputError(f"GJMS coefficients need n >= 3, got {n!r}")
    if not isinstance(k, int) or k < 1:
        raise InputError(f"order parameter k must be >= 1, got {k!r}")
    scale = n * (n - 1)
    c = tuple(sympy.Rational((n + 2 * i - 2) * (n - 2 * i), 4 * scale) for i in range(1, k + 1))
    b = tuple(sympy.Rational(i * (1 - i), scale) for i in range(1, k + 1))
    for i, (ci, bi) in enumerate(zip(c, b), start=1):
        if bi != ci - c[0]:
            raise MathematicalFailure(f"b_{i} = {bi} differs from c_{i} - c_1 = {ci - c[0]}")
    return GJMSSpec(n=n, k=k, c=c, b=b)


@dataclass(frozen=True)
class SpectralModel:
    n: int
    entries: tuple
    preset: str = None
    l_max: int = None

    @property
    def dim(self):
        return sum(m for _, m in self.entries)

    @property
    def scalar_curvature(self):
        """Sc of the preset geometry, None for a plain entry list."""
        if self.preset == SPHERE_PRESET:
            return sympy.Integer(self.n * (self.n - 1))
        return None

    def to_json(self, field=None):
        if self.preset == SPHERE_PRESET:
            return {"preset": SPHERE_PRESET, "l_max": self.l_max}
        field = field or get_field("exact")
        return {"entries": [[field.to_json(e), m] for e, m in self.entries]}

    @classmethod
    def from_json(cls, obj, n):
        if not isinstance(obj, dict):
            raise InputError(f"spectral model must be an object, got {obj!r}")
        if "preset" in obj:
            if set(obj) != {"preset", "l_max"}:
                raise InputError("preset model takes exactly {'preset', 'l_max'}")
            if obj["preset"] != SPHERE_PRESET:
                raise InputError(f"unknown spectral preset {obj['preset']!r}")
            return sphere_model(n, obj["l_max"])
        if set(obj) != {"entries"}:
            raise InputError(f"spectral model must be {{'entries'}} or a preset, got keys {sorted(obj)}")
        entries = []
        for entry in obj["entries"]:
            if not isinstance(entry, list) or len(entry) != 2:
                raise InputError(f"model entry must be [eigenvalue, multiplicity], got {entry!r}")
            eig, mult = entry
            if not isinstance(mult, int) or isinstance(mult, bool) or mult < 1:
                raise InputError(f"multiplicity must be a positive integer, got {mult!r}")
            entries.append((parse_scalar(eig), mult))
        if not entries:
            raise InputError("spectral model needs at least one entry")
        return cls(n=n, entries=tuple(entries))


def sphere_model(n, l_max):
    """Laplacian spectrum of the unit sphere S^n up to degree l_max."""
    if not isinstance(n, int) or n < 2:
        raise InputError(f"sphere dimension must be >= 2, got {n!r}")
    if not isinstance(l_max, int) or isinstance(l_max, bool) or l_max < 0:
        raise InputError(f"l_max must be a nonnegative integer, got {l_max!r}")
    entries = []
    for l in range(l_max + 1):
        mult = comb(l + n, n) - comb(l + n - 2, n)
        entries.append((sympy.Integer(l * (l + n - 1)), mult))
    return SpectralModel(n=n, entries=tuple(entries), preset=SPHERE_PRESET, l_max=l_max)


def _require_curvature(spec):
    if spec.Sc is None:
        raise InputError("GJMS spec has no scalar curvature; use with_curvature")


def _check_dimension(spec, model):
    if spec.n != model.n:
        raise InputError(f"spec is for n={spec.n} but the model is for n={model.n}")


def y_values(spec, model, field):
    """Eigenvalues of Y = Delta + c_1 Sc per model entry."""
    shift = field.scalar(spec.c[0] * spec.Sc)
    return [field.scalar(e) + shift for e, _ in model.entries]


def y_polynomial(spec, field):
    """P_k as a factored polynomial in Y: roots b_i Sc, or Y^k when Sc = 0."""
    _require_curvature(spec)
    if spec.Sc == 0:
        return FactoredPoly.of(field, [(0, spec.k)])
    return FactoredPoly.of(field, [(b * spec.Sc, 1) for b in spec.b])


def gjms_operator(spec, model, field=None):
    """(P_k, Y, factored polynomial in Y); both product forms are compared entrywise."""
    _require_curvature(spec)
    _check_dimension(spec, model)
    field = field or get_field()
    Sc = field.scalar(spec.Sc)
    ys = y_values(spec, model, field)
    p_values = []
    for (eig, _), y in zip(model.entries, ys):
        in_delta, in_y = 1, 1
        for ci, bi in zip(spec.c, spec.b):
            in_delta = in_delta * (field.scalar(eig) + field.scalar(ci) * Sc)
            in_y = in_y * (y + field.scalar(bi) * Sc)
        if not field.eq(in_delta, in_y):
            raise MathematicalFailure(f"product forms disagree at Delta eigenvalue {eig}: "
                                      f"{in_delta} vs {in_y}")
        p_values.append(in_y)
    mults = [m for _, m in model.entries]
    Y = OperatorHandle.diagonal(list(zip(ys, mults)), field, name="Y")
    P = OperatorHandle.diagonal(list(zip(p_values, mults)), field, name=f"P_{spec.k}")
    poly = y_polynomial(spec, field)
    logging.debug(f"GJMS operator n={spec.n}, k={spec.k}, model dim {model.dim}")
    return P, Y, poly


def _matches(field, a, b):
    if field.exact:
        return a == b
    return abs(a - b) <= ROOT_MATCH_TOL * max(1.0, abs(b))


@dataclass
class SpectralComponent:
    index: int
    y_eigenvalue: object
    entries: list
    dim: int


@dataclass
class NullspaceReport:
    branch: str
    components: list
    total_dim: int
    direct_dim: int
    field: object

    @property
    def consistent(self):
        return self.total_dim == self.direct_dim

    def to_json(self):
        field = self.field
        return {
            "kind": "gjms_nullspace",
            "branch": self.branch,
            "components": [{"i": c.index, "y_eigenvalue": field.to_json(field.convert(c.y_eigenvalue)),
                            "entries": c.entries, "dim": c.dim} for c in self.components],
            "total_dim": self.total_dim,
            "direct_dim": self.direct_dim,
            "consistent": self.consistent,
        }


def gjms_nullspace(spec, model, field=None):
    """N(P_k) split into eigenspaces of Y with eigenvalues -b_i Sc."""
    field = field or get_field()
    P, Y, _ = gjms_operator(spec, model, field)
    ys = y_values(spec, model, field)
    mults = [m for _, m in model.entries]
    Sc = field.scalar(spec.Sc)
    if spec.Sc == 0:
        targets, branch = [(1, field.scalar(0))], "generalized"
    else:
        targets, branch = [(i, -field.scalar(b) * Sc) for i, b in enumerate(spec.b, start=1)], "direct_sum"
    components = []
    for i, target in targets:
        hits = [idx for idx, y in enumerate(ys) if _matches(field, y, target)]
        components.append(SpectralComponent(index=i, y_eigenvalue=target, entries=hits,
                                            dim=sum(mults[idx] for idx in hits)))
    direct = sum(m for value, m in P.spectrum if _matches(field, value, 0))
    report = NullspaceReport(branch=branch, components=components,
                             total_dim=sum(c.dim for c in components), direct_dim=direct, field=field)
    if not report.consistent:
        logging.warning(f"GJMS null space audit: {report.total_dim} != {report.direct_dim}")
        raise MathematicalFailure(f"Y-eigenspace dimensions {report.total_dim} do not add up "
                                  f"to dim N(P_k) = {report.direct_dim}")
    return report


def printed_coefficients(spec, field=None):
    """(n(n-1)/Sc)^(k-1) prod_{j != i} 1 / ((j - i)(j + i - 1)) for i = 1..k."""
    _require_curvature(spec)
    if spec.Sc == 0:
        raise InputError("the printed reconstruction coefficients need Sc != 0")
    field = field or get_field()
    scale = sympy.Rational(spec.n * (spec.n - 1)) / spec.Sc
    out = []
    for i in range(1, spec.k + 1):
        value = scale ** (spec.k - 1)
        for j in range(1, spec.k + 1):
            if j != i:
                value = value / ((j - i) * (j + i - 1))
        out.append(field.scalar(value))
    return out


def _sign_audit(spec, dec, field):
    printed = printed_coefficients(spec, field)
    cofactors = [field.scalar(dec.certificate.field.to_sympy(q.LC()))
                 for q in dec.certificate.cofactors]
    ratios = [q / p for q, p in zip(cofactors, printed)]
    observed = None
    if all(field.eq(r, ratios[0]) for r in ratios) and (field.eq(ratios[0], 1) or field.eq(ratios[0], -1)):
        observed = 1 if field.eq(ratios[0], 1) else -1
    return printed, cofactors, {
        "expected_sign": (-1) ** (spec.k - 1),
        "observed_sign": observed,
        "printed_formula_matches": observed == 1,
    }


def gjms_solve(spec, model, f, field=None):
    """Solve P_k u = f through the k second-order problems (Y + b_i Sc) u_i = f."""
    _require_curvature(spec)
    if spec.Sc == 0:
        raise InputError("the second-order reduction needs Sc != 0")
    field = field or get_field()
    P, Y, poly = gjms_operator(spec, model, field)
    f = field.vector(f) if isinstance(f, list) else f
    if len(f) != model.dim:
        raise InputError(f"f has length {len(f)}, model dimension is {model.dim}")
    dec = build_decomposition(Y, poly)
    report = solve_factorwise(dec, f)
    u = report.reconstruction

    p_values = P.diagonal_values()
    direct = []
    for idx, (value, fx) in enumerate(zip(p_values, field.entries(f))):
        if field.is_zero(value):
            direct.append(0)
        else:
            direct.append(fx / value)
    direct = field.vector(direct)
    difference = field.norm(u - direct) / max(field.norm(direct), 1.0)

    printed, cofactors, audit = _sign_audit(spec, dec, field)
    u_printed = field.zero_vector(model.dim)
    for c, t in zip(printed, report.components):
        u_printed = u_printed + c * t
    printed_residual = field.norm(P.apply(u_printed) - f) / max(field.norm(f), 1.0)
    audit["printed_residual"] = printed_residual
    audit["cofactors"] = [field.to_json(field.convert(q)) for q in cofactors]
    audit["printed"] = [field.to_json(field.convert(p)) for p in printed]
    if audit["observed_sign"] != audit["expected_sign"]:
        logging.warning(f"Sign audit: observed {audit['observed_sign']}, "
                        f"expected {audit['expected_sign']}")

    table, offset = [], 0
    ys = y_values(spec, model, field)
    for (eig, mult), y, pv in zip(model.entries, ys, P.spectrum):
        table.append({
            "delta_eigenvalue": field.to_json(field.convert(eig)),
            "multiplicity": mult,
            "y_eigenvalue": field.to_json(field.convert(y)),
            "p_value": field.to_json(field.convert(pv[0])),
            "u": field.to_json(field.convert(field.entries(u)[offset])),
            "direct": field.to_json(field.convert(field.entries(direct)[offset])),
        })
        offset += mult

    report.extra.update({
        "n": spec.n,
        "k": spec.k,
        "Sc": field.to_json(field.convert(spec.Sc)),
        "direct_difference": difference,
        "sign_audit": audit,
        "table": table,
    })
    logging.info(f"GJMS solve n={spec.n}, k={spec.k}: residual {report.residual:.3e}, "
                 f"difference to direct division {difference:.3e}")
    return report


@dataclass
class EigenstructureReport:
    mu: object
    splits: bool
    components: list
    total_dim: int
    direct_dim: int
    field: object
    notes: list = dataclass_field(default_factory=list)

    @property
    def consistent(self):
        return self.total_dim == self.direct_dim

    def to_json(self):
        field = self.field
        return {
            "kind": "gjms_eigenstructure",
            "mu": field.to_json(field.convert(self.mu)),
            "splits": self.splits,
            "components": [{"y_eigenvalue": field.to_json(field.convert(c.y_eigenvalue)),
                            "entries": c.entries, "dim": c.dim} for c in self.components],
            "total_dim": self.total_dim,
            "direct_dim": self.direct_dim,
            "consistent": self.consistent,
            "notes": self.notes,
        }


def gjms_eigenstructure(spec, model, mu, field=None):
    """The mu-eigenspace of P_k split by the roots of P_k(Y) - mu."""
    field = field or get_field()
    P, Y, poly = gjms_operator(spec, model, field)
    mu = field.scalar(mu)
    q = expand(poly) - constant(mu, poly.field)
    if field.exact:
        found = exact_roots(q, poly.field)
        roots = [field.scalar(poly.field.to_sympy(r)) for r, _ in found]
        splits = sum(m for _, m in found) == q.degree()
    else:
        factored = factor_numeric(q, field=field)
        roots = [-field.scalar(lam) for lam in factored.roots]
        splits = True
    ys = y_values(spec, model, field)
    mults = [m for _, m in model.entries]
    components = []
    for index, root in enumerate(roots):
        hits = [idx for idx, y in enumerate(ys) if _matches(field, y, root)]
        if hits:
            components.append(SpectralComponent(index=index, y_eigenvalue=root, entries=hits,
                                                dim=sum(mults[idx] for idx in hits)))
    direct = sum(m for value, m in P.spectrum if _matches(field, value, mu))
    notes = ["diagonal model: generalized Y-eigenspaces are eigenspaces"]
    if not splits:
        notes.append("P_k(Y) - mu does not split over the rationals; "
                     "only rational roots can meet the model")
    report = EigenstructureReport(mu=mu, splits=splits, components=components,
                                  total_dim=sum(c.dim for c in components), direct_dim=direct,
                                  field=field, notes=notes)
    if not report.consistent:
        logging.warning(f"GJMS eigenspace audit failed for mu={mu}")
    return report


def gjms_weak_blocks(spec, model, S, field=None):
    """Blocks of a weak symmetry S of P_k relative to the factors Y + b_i Sc."""
    field = field or get_field()
    _, Y, poly = gjms_operator(spec, model, field)
    dec = build_decomposition(Y, poly)
    return symmetry_blocks(dec, S)
