"""
Weak and strong symmetries of a decomposed operator.

A weak symmetry S maps N(P) into N(P). Once P = P_0 ... P_ell is decomposed,
S restricted to N(P) splits into blocks Proj_i S Proj_j : N(P_j) -> N(P_i),
written in coordinates of fixed bases of the factor null spaces.
A strong symmetry preserves every eigenspace N(P - mu).
"""
import logging
from dataclasses import dataclass

import numpy as np

from errors import InputError, MathematicalFailure
from opcore import OperatorHandle, poly_matrix
from polyalg import cluster_roots, dense_poly, exact_roots


def _require_materializable(dec, S):
    if dec.base.backend == "apply" or S.backend == "apply":
        raise InputError("symmetry blocks need dense or diagonal operators")
    if S.dim != dec.base.dim:
        raise InputError(f"symmetry acts on dimension {S.dim}, operator on {dec.base.dim}")


def _factor_bases(dec):
    field, n = dec.field, dec.base.dim
    return [field.hstack(field.nullspace(dec.factor_matrix(i)), n) for i in range(dec.ell + 1)]


def _coordinates(field, basis, v, what):
    c = field.solve(basis, v)
    if c is None:
        raise MathematicalFailure(f"{what} does not lie in the expected null space")
    return c


@dataclass(frozen=True, eq=False)
class SymmetryBlocks:
    decomposition: object
    null_basis: object
    bases: tuple
    blocks: dict

    @property
    def field(self):
        return self.decomposition.field

    @property
    def dims(self):
        return [b.shape[1] for b in self.bases]

    def block(self, i, j):
        return self.blocks[(i, j)]

    def to_json(self):
        field = self.field
        return {
            "kind": "symmetry_blocks",
            "dims": self.dims,
            "blocks": [{"i": i, "j": j, "entries": field.matrix_to_json(m)}
                       for (i, j), m in sorted(self.blocks.items())],
        }


def symmetry_blocks(dec, S):
    """Blocks Proj_i S Proj_j of a weak symmetry S on bases of N(P_j) and N(P_i)."""
    _require_materializable(dec, S)
    field, n = dec.field, dec.base.dim
    P = dec.P_matrix()
    scale = max(field.max_abs(P), 1.0)
    null = field.nullspace(P)
    for k, b in enumerate(null):
        image = S.apply(b)
        residual = P @ image
        if not field.is_zero_vector(residual, scale=scale * max(field.norm(image), 1.0)):
            logging.warning(f"Weak symmetry check failed at null basis vector {k}")
            raise MathematicalFailure(f"S maps null basis vector {k} = {field.vector_to_json(b)} "
                                      f"out of N(P) (residual {field.norm(residual):.3e})")

    bases = _factor_bases(dec)
    if sum(b.shape[1] for b in bases) != len(null):
        raise MathematicalFailure("factor null spaces do not add up to N(P)")
    blocks = {}
    for j, Bj in enumerate(bases):
        images = [S.apply(field.column(Bj, c)) for c in range(Bj.shape[1])]
        for i, Bi in enumerate(bases):
            coords = [_coordinates(field, Bi, dec.project(i, y), f"Proj_{i} S applied to basis {j}")
                      for y in images]
            blocks[(i, j)] = field.hstack(coords, Bi.shape[1])
    logging.debug(f"symmetry_blocks: dims {[b.shape[1] for b in bases]}")
    return SymmetryBlocks(decomposition=dec, null_basis=field.hstack(null, n),
                          bases=tuple(bases), blocks=blocks)


@dataclass
class RestrictedOperator:
    """An operator on N(P) given by the images of the columns of ``basis``."""

    basis: object
    images: object
    field: object

    def matches(self, S):
        """True when S agrees with this operator on every basis vector."""
        field = self.field
        for c in range(self.basis.shape[1]):
            expected = S.apply(field.column(self.basis, c))
            got = field.column(self.images, c)
            if not field.is_zero_vector(got - expected, scale=field.norm(expected)):
                return False
        return True

    def to_json(self):
        return {
            "kind": "restricted_operator",
            "basis": self.field.matrix_to_json(self.basis),
            "images": self.field.matrix_to_json(self.images),
        }


def reconstruct_symmetry(blocks):
    """sum_{i,j} inclusion_i . block(i, j) . Proj_j on a basis of N(P)."""
    dec, field = blocks.decomposition, blocks.field
    n = dec.base.dim
    basis = blocks.null_basis
    images = []
    for c in range(basis.shape[1]):
        b = field.column(basis, c)
        total = field.zero_vector(n)
        for j, Bj in enumerate(blocks.bases):
            cj = _coordinates(field, Bj, dec.project(j, b), f"Proj_{j} of null basis vector {c}")
            for i, Bi in enumerate(blocks.bases):
                total = total + Bi @ (blocks.block(i, j) @ cj)
        images.append(total)
    return RestrictedOperator(basis=basis, images=field.hstack(images, n), field=field)


def compose_blocks(a, b):
    """Blocks of S . T from the blocks of S and T (matrix product over the direct sum)."""
    if a.decomposition is not b.decomposition:
        raise InputError("blocks belong to different decompositions")
    field, dims = a.field, a.dims
    blocks = {}
    for i in range(len(dims)):
        for k in range(len(dims)):
            total = field.zeros(dims[i], dims[k])
            for j in range(len(dims)):
                total = total + a.block(i, j) @ b.block(j, k)
            blocks[(i, k)] = total
    return SymmetryBlocks(decomposition=a.decomposition, null_basis=a.null_basis,
                          bases=a.bases, blocks=blocks)


@dataclass
class ElementarySymmetry:
    i: int
    j: int
    row: int
    col: int
    operator: OperatorHandle


def weak_symmetry_basis(dec):
    """Weak symmetries H . Proj_j for H running over the matrix units of Hom(N(P_j), N(P_i)).

    The list has sum_{i,j} dim N(P_i) * dim N(P_j) members.
    """
    field = dec.field
    bases = _factor_bases(dec)
    coordinate_maps = [field.left_inverse(B) @ dec.projector_matrix(j) for j, B in enumerate(bases)]
    elements = []
    for i, Bi in enumerate(bases):
        for j, Bj in enumerate(bases):
            for r in range(Bi.shape[1]):
                for c in range(Bj.shape[1]):
                    matrix = Bi[:, r:r + 1] @ coordinate_maps[j][c:c + 1, :]
                    elements.append(ElementarySymmetry(
                        i=i, j=j, row=r, col=c,
                        operator=OperatorHandle.dense(matrix, field, name=f"E[{i},{j}]({r},{c})"),
                    ))
    logging.debug(f"weak_symmetry_basis: {len(elements)} elements")
    return elements


# ---- strong symmetries --------------------------------------------------

def spectrum_of(D):
    """Distinct eigenvalues of D as operator scalars."""
    field = D.field
    if D.backend == "apply":
        raise InputError("the spectrum of a callback operator is not computable")
    if D.backend == "diagonal":
        values = [e for e, _ in D.spectrum]
    elif field.exact:
        char = D.matrix.charpoly()
        q = dense_poly(list(reversed(char.all_coeffs())), field)
        roots = exact_roots(q, field)
        if sum(m for _, m in roots) != D.dim:
            raise InputError("D has eigenvalues outside the rationals; use float mode")
        values = [field.scalar(field.to_sympy(r)) for r, _ in roots]
    else:
        values = [c for c, _ in cluster_roots(np.linalg.eigvals(D.matrix), 1e-6)]
    distinct = []
    for v in values:
        if not any(field.eq(v, w) for w in distinct):
            distinct.append(v)
    return distinct


def _kernel_basis(D, q):
    field = D.field
    return field.hstack(field.nullspace(poly_matrix(D, q)), D.dim)


def _preserves(field, S, basis):
    """S maps span(basis) into itself."""
    if basis.shape[1] == 0:
        return True
    return field.rank(field.hstack([basis, S @ basis], basis.shape[0])) == field.rank(basis)


def _linear(field, root):
    """x - root"""
    return dense_poly([-root, 1], field)


@dataclass
class StrongSymmetryCheck:
    condition: str
    points: list
    preserved: bool


@dataclass
class StrongSymmetryReport:
    field: object
    sigma: object
    checks: list
    bruteforce: list
    verdict: bool
    agrees: bool

    def to_json(self):
        field = self.field

        def js(v):
            return field.to_json(field.convert(v))

        return {
            "kind": "strong_symmetry_report",
            "sigma": js(self.sigma),
            "conditions": [{"condition": c.condition, "points": [js(p) for p in c.points],
                            "preserved": c.preserved} for c in self.checks],
            "bruteforce": [{"xi": [js(x) for x in c.points], "preserved": c.preserved}
                           for c in self.bruteforce],
            "verdict": self.verdict,
            "agrees_with_definition": self.agrees,
        }


def strong_symmetry_bruteforce(D, lam1, lam2, S):
    """Checks S against N((D + xi1)(D + xi2)) for each xi1 + xi2 = lam1 + lam2 with xi1 = -s, s in Spec D."""
    field = D.field
    sigma = field.scalar(lam1) + field.scalar(lam2)
    Sm = S.to_matrix()
    checks = []
    for s in spectrum_of(D):
        xi1, xi2 = -s, sigma + s
        q = dense_poly([xi1, 1], field) * dense_poly([xi2, 1], field)
        checks.append(StrongSymmetryCheck("definition", [xi1, xi2],
                                          _preserves(field, Sm, _kernel_basis(D, q))))
    return checks


def strong_symmetry_degree2(D, lam1, lam2, S):
    """Strong symmetries of (D + lam1)(D + lam2) by the three conditions on Spec D.

    (i)   -xi0 in Spec D, xi0 = (lam1 + lam2) / 2: S preserves N((D + xi0)^2)
    (ii)  s, s' = -(lam1 + lam2) - s both in Spec D, s != s': S preserves N(D - s) + N(D - s')
    (iii) s in Spec D without partner: S preserves N(D - s)
    """
    if D.backend == "apply" or S.backend == "apply":
        raise InputError("strong symmetry checks need dense or diagonal operators")
    if S.dim != D.dim:
        raise InputError(f"S acts on dimension {S.dim}, D on {D.dim}")
    field = D.field
    lam1, lam2 = field.scalar(lam1), field.scalar(lam2)
    sigma = lam1 + lam2
    xi0 = sigma / 2
    spectrum = spectrum_of(D)
    Sm = S.to_matrix()

    def in_spectrum(v):
        return any(field.eq(v, s) for s in spectrum)

    checks = []
    if in_spectrum(-xi0):
        basis = _kernel_basis(D, dense_poly([xi0, 1], field) ** 2)
        checks.append(StrongSymmetryCheck("i", [-xi0], _preserves(field, Sm, basis)))
    paired = []
    for s in spectrum:
        if field.eq(s, -xi0) or any(field.eq(s, t) for t in paired):
            continue
        partner = -sigma - s
        if in_spectrum(partner):
            paired.extend([s, partner])
            q = _linear(field, s) * _linear(field, partner)
            checks.append(StrongSymmetryCheck("ii", [s, partner],
                                              _preserves(field, Sm, _kernel_basis(D, q))))
        else:
            checks.append(StrongSymmetryCheck("iii", [s],
                                              _preserves(field, Sm, _kernel_basis(D, _linear(field, s)))))

    verdict = all(c.preserved for c in checks)
    brute = strong_symmetry_bruteforce(D, lam1, lam2, S)
    agrees = verdict == all(c.preserved for c in brute)
    if not agrees:
        logging.warning("degree-2 strong symmetry conditions disagree with the definition")
    return StrongSymmetryReport(field=field, sigma=sigma, checks=checks, bruteforce=brute,
                                verdict=verdict, agrees=agrees)
