"""
Instance generators shared by the tests and the CLI self-check.

Everything is driven by a numpy Generator so a seed reproduces the instance.
"""
import numpy as np
import sympy

from config import settings
from opcore import OperatorHandle
from polyalg import FactoredPoly


def make_rng(seed=None):
    return np.random.default_rng(settings["seed"] if seed is None else seed)


def random_rational(rng, low=-9, high=9, denominators=(1, 1, 2, 3)):
    den = int(rng.choice(denominators))
    return sympy.Rational(int(rng.integers(low * den, high * den + 1)), den)


def random_roots(rng, count, low=-9, high=9, denominators=(1, 1, 2, 3)):
    """count distinct rationals in [low, high]."""
    roots = []
    while len(roots) < count:
        r = random_rational(rng, low, high, denominators)
        if r not in roots:
            roots.append(r)
    return roots


def random_factored_poly(rng, field, max_ell=5, max_mult=4, low=-9, high=9, leading=None):
    ell = int(rng.integers(0, max_ell + 1))
    roots = random_roots(rng, ell + 1, low, high)
    mults = [int(m) for m in rng.integers(1, max_mult + 1, ell + 1)]
    if leading is None:
        leading = random_rational(rng, 1, 4)
    return FactoredPoly.of(field, list(zip(roots, mults)), leading=leading)


def random_rational_matrix(rng, n, low=-5, high=5):
    return sympy.Matrix(n, n, [sympy.Integer(int(x)) for x in rng.integers(low, high + 1, n * n)])


def unimodular_matrix(rng, n, steps=None):
    """Integer matrix with determinant 1 built from random elementary row operations."""
    m = sympy.eye(n)
    if n < 2:
        return m
    for _ in range(steps if steps is not None else 3 * n):
        i, j = (int(x) for x in rng.choice(n, 2, replace=False))
        m[i, :] = m[i, :] + int(rng.integers(-2, 3)) * m[j, :]
    return m


def jordan_matrix(blocks, rng=None, conjugate=True):
    """A = V J V^-1 with J block diagonal from [(eigenvalue, size), ...].

    Returns (A, V, J); V is unimodular so A stays integral for integer eigenvalues.
    """
    J = sympy.diag(*[sympy.Matrix.jordan_block(size, sympy.Rational(eig)) for eig, size in blocks])
    n = J.shape[0]
    if not conjugate:
        return J, sympy.eye(n), J
    V = unimodular_matrix(rng if rng is not None else make_rng(), n)
    return V * J * V.inv(), V, J


def random_jordan_blocks(rng, eigenvalues, max_block=3, max_blocks_per_eigenvalue=2):
    blocks = []
    for eig in eigenvalues:
        for _ in range(int(rng.integers(1, max_blocks_per_eigenvalue + 1))):
            blocks.append((eig, int(rng.integers(1, max_block + 1))))
    return blocks


def companion_matrix(m):
    """Matrix of multiplication by x on Q[x]/(m) in the basis 1, x, ..., x^(d-1)."""
    coeffs = [sympy.Rational(c) for c in m.monic().all_coeffs()]
    d = len(coeffs) - 1
    low_first = list(reversed(coeffs))
    C = sympy.zeros(d, d)
    for i in range(1, d):
        C[i, i - 1] = 1
    for i in range(d):
        C[i, d - 1] = -low_first[i]
    return C


def quotient_operator(m, field, name="x"):
    """x acting on Q[x]/(m) as a dense operator."""
    return OperatorHandle.dense(companion_matrix(m), field, name=name)


def random_commuting_diagonals(rng, count, n, low=-3, high=3):
    """count diagonal integer matrices of size n (entry lists)."""
    return [[sympy.Integer(int(x)) for x in rng.integers(low, high + 1, n)] for _ in range(count)]


def diagonal_operator(entries, field, name=""):
    """Dense diagonal matrix operator from an entry list."""
    return OperatorHandle.dense(field.diag([field.scalar(e) for e in entries]), field, name=name)


def annihilated_vector(dec, i, rng):
    """A random vector in N(P_i): Proj_i applied to a random vector of N(P)."""
    field = dec.field
    null = field.nullspace(dec.P_matrix())
    v = field.zero_vector(dec.base.dim)
    for b in null:
        v = v + field.scalar(int(rng.integers(-3, 4))) * b
    return dec.project(i, v)

