"""
Scalar fields and dense linear algebra for each arithmetic mode.

exact    : rationals (sympy QQ), vectors and matrices are sympy Matrix
gaussian : rational complex numbers (sympy QQ_I), polynomial arithmetic only
float    : complex doubles (sympy CC for polynomials, numpy/scipy for vectors)
"""
import logging
from fractions import Fraction

import numpy as np
import scipy.linalg
import sympy
from sympy import CC, QQ, QQ_I
from sympy.polys.polyerrors import CoercionFailed

from config import settings
from errors import InputError


def parse_scalar(obj):
    """Turn a JSON scalar into a sympy number.

    Accepted forms: {"num": int, "den": int}, {"re": ..., "im": ...},
    bare int/float, or a rational string such as "3/4".
    """
    if isinstance(obj, bool):
        raise InputError(f"boolean is not a scalar: {obj!r}")
    if isinstance(obj, dict):
        if set(obj) == {"num", "den"}:
            num, den = obj["num"], obj["den"]
            if not isinstance(num, int) or not isinstance(den, int) or isinstance(num, bool):
                raise InputError(f"num/den must be integers: {obj!r}")
            if den == 0:
                raise InputError("scalar with zero denominator")
            return sympy.Rational(num, den)
        if set(obj) == {"re", "im"}:
            return parse_scalar(obj["re"]) + sympy.I * parse_scalar(obj["im"])
        raise InputError(f"unrecognized scalar object: {obj!r}")
    if isinstance(obj, int):
        return sympy.Integer(obj)
    if isinstance(obj, float):
        return sympy.Float(obj)
    if isinstance(obj, str):
        try:
            return sympy.Rational(obj)
        except (TypeError, ValueError) as e:
            raise InputError(f"cannot parse scalar {obj!r}") from e
    raise InputError(f"unrecognized scalar: {obj!r}")


def has_imaginary(obj):
    """True when a JSON payload contains a scalar with a nonzero imaginary part."""
    if isinstance(obj, dict):
        if set(obj) == {"re", "im"}:
            return parse_scalar(obj["im"]) != 0
        return any(has_imaginary(v) for v in obj.values())
    if isinstance(obj, list):
        return any(has_imaginary(v) for v in obj)
    return False


def _rational_json(value):
    value = sympy.Rational(value)
    return {"num": int(value.p), "den": int(value.q)}


class Field:
    """Common interface; subclasses fix the domain and the vector representation."""

    name = ""
    exact = True
    domain = None

    def __init__(self, epsilon=None, null_tolerance=None):
        self.epsilon = settings["epsilon"] if epsilon is None else float(epsilon)
        self.null_tolerance = (
            settings["null_tolerance"] if null_tolerance is None else float(null_tolerance)
        )

    def __repr__(self):
        return f"{type(self).__name__}(epsilon={self.epsilon})"

    # ---- scalars -------------------------------------------------------

    def _sympify(self, value):
        if isinstance(value, (dict, str)):
            return parse_scalar(value)
        if isinstance(value, bool):
            raise InputError(f"boolean is not a scalar: {value!r}")
        if isinstance(value, Fraction):
            return sympy.Rational(value.numerator, value.denominator)
        if isinstance(value, (np.integer, np.floating, np.complexfloating)):
            value = value.item()
        return sympy.sympify(value)

    def convert(self, value):
        """Return ``value`` as an element of the field's sympy domain."""
        if self.domain.of_type(value):
            return value
        try:
            return self.domain.from_sympy(self._sympify(value))
        except (CoercionFailed, sympy.SympifyError, TypeError) as e:
            raise InputError(f"{value!r} is not an element of the {self.name} field") from e

    def to_sympy(self, element):
        return self.domain.to_sympy(self.convert(element))

    def scalar(self, value):
        """Scalar used for vector arithmetic: sympy number (exact) or complex (float)."""
        return self.to_sympy(value)

    def is_zero(self, element):
        return self.convert(element) == self.domain.zero

    def eq(self, a, b):
        return self.convert(a) == self.convert(b)

    def is_real(self, element):
        return sympy.im(self.to_sympy(element)) == 0

    def to_json(self, element):
        raise NotImplementedError

    def from_json(self, obj):
        return self.convert(parse_scalar(obj))

    def horner(self, coeffs, value):
        """Evaluate a polynomial given by operator scalars, highest degree first."""
        acc = 0
        for c in coeffs:
            acc = acc * value + c
        return acc

    # ---- linear algebra ------------------------------------------------

    def _no_linear_algebra(self, *args, **kwargs):
        raise InputError(f"operator algebra is not available in {self.name} mode")

    vector = matrix = zeros = identity = diag = _no_linear_algebra


class RationalField(Field):
    """Exact rationals. Vectors are sympy column matrices."""

    name = "exact"
    exact = True
    domain = QQ

    def _sympify(self, value):
        if isinstance(value, float):
            # 10進表記どおりの有理数として扱う
            return sympy.Rational(repr(value))
        result = super()._sympify(value)
        if isinstance(result, sympy.Float):
            return sympy.Rational(repr(float(result)))
        return result

    def to_json(self, element):
        return _rational_json(self.to_sympy(element))

    def vector(self, values):
        if isinstance(values, sympy.MatrixBase):
            return sympy.Matrix(values).reshape(len(values), 1)
        return sympy.Matrix([self.scalar(v) for v in values])

    def matrix(self, rows):
        if isinstance(rows, sympy.MatrixBase):
            return sympy.Matrix(rows)
        rows = [list(r) for r in rows]
        if not rows:
            raise InputError("empty matrix")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise InputError("ragged matrix rows")
        return sympy.Matrix([[self.scalar(v) for v in r] for r in rows])

    def zeros(self, rows, cols=1):
        return sympy.zeros(rows, cols)

    def identity(self, n):
        return sympy.eye(n)

    def diag(self, values):
        n = len(values)
        m = sympy.zeros(n, n)
        for i, v in enumerate(values):
            m[i, i] = v
        return m

    def unit_vector(self, n, j):
        v = sympy.zeros(n, 1)
        v[j, 0] = 1
        return v

    def zero_vector(self, n):
        return sympy.zeros(n, 1)

    def head(self, v, k):
        return v[:k, :]

    def concat(self, vectors):
        return sympy.Matrix.vstack(*vectors)

    def left_inverse(self, b):
        """K with K b = I for a basis matrix b of full column rank."""
        if b.shape[1] == 0:
            return sympy.zeros(0, b.shape[0])
        return (b.T * b).inv() * b.T

    def entries(self, v):
        return list(v)

    def column(self, a, j):
        return a[:, j]

    def hstack(self, columns, rows):
        if not columns:
            return sympy.zeros(rows, 0)
        return sympy.Matrix.hstack(*columns)

    def vstack(self, blocks):
        return sympy.Matrix.vstack(*blocks)

    def place_blocks(self, blocks, block_rows, block_cols, n):
        """Assemble an (rows*n) x (cols*n) matrix from {(r, c): n x n block}."""
        m = sympy.zeros(block_rows * n, block_cols * n)
        for (r, c), block in blocks.items():
            m[r * n:(r + 1) * n, c * n:(c + 1) * n] = block
        return m

    def hadamard(self, a, b):
        return a.multiply_elementwise(b)

    def rank(self, a):
        if 0 in a.shape:
            return 0
        return a.rank()

    def nullspace(self, a):
        rows, cols = a.shape
        if cols == 0:
            return []
        if rows == 0:
            return [self.unit_vector(cols, j) for j in range(cols)]
        return a.nullspace()

    def column_space(self, a):
        if 0 in a.shape:
            return sympy.zeros(a.shape[0], 0)
        cols = a.columnspace()
        return self.hstack(cols, a.shape[0])

    def solve(self, a, b):
        """A particular solution of a x = b, or None when inconsistent."""
        if a.shape[1] == 0:
            return sympy.zeros(0, 1) if self.is_zero_vector(b) else None
        try:
            solution, params = a.gauss_jordan_solve(b)
        except ValueError:
            return None
        if params.shape[0]:
            solution = solution.xreplace({p: 0 for p in params})
        return solution

    def norm(self, v):
        if len(v) == 0:
            return 0.0
        return float(max(abs(x) for x in v))

    def max_abs(self, a):
        if 0 in a.shape:
            return 0.0
        return float(max(abs(x) for x in a))

    def is_zero_vector(self, v, scale=0.0):
        return all(x == 0 for x in v)

    def is_zero_matrix(self, a, scale=0.0):
        return all(x == 0 for x in a)

    def random_vector(self, n, rng, low=-5, high=5):
        return sympy.Matrix([sympy.Integer(int(x)) for x in rng.integers(low, high + 1, n)])

    def vector_to_json(self, v):
        return [self.to_json(x) for x in v]

    def matrix_to_json(self, a):
        return [[self.to_json(a[i, j]) for j in range(a.shape[1])] for i in range(a.shape[0])]


class GaussianField(Field):
    """Exact rational complex numbers. Used for polynomial identities with complex roots."""

    name = "gaussian"
    exact = True
    domain = QQ_I

    def _sympify(self, value):
        if isinstance(value, float):
            return sympy.Rational(repr(value))
        if isinstance(value, complex):
            return sympy.Rational(repr(value.real)) + sympy.I * sympy.Rational(repr(value.imag))
        return super()._sympify(value)

    def to_json(self, element):
        re, im = self.to_sympy(element).as_real_imag()
        return {"re": _rational_json(re), "im": _rational_json(im)}

    def conjugate(self, element):
        return self.convert(sympy.conjugate(self.to_sympy(element)))


class FloatField(Field):
    """Complex doubles with a relative epsilon. Vectors are numpy arrays."""

    name = "float"
    exact = False
    domain = CC

    def scalar(self, value):
        if isinstance(value, (int, float, complex)) and not isinstance(value, bool):
            return complex(value)
        return complex(self.convert(value))

    def to_sympy(self, element):
        return sympy.sympify(self.scalar(element))

    def is_zero(self, element):
        return abs(self.scalar(element)) <= self.epsilon

    def eq(self, a, b):
        a, b = self.scalar(a), self.scalar(b)
        return abs(a - b) <= self.epsilon * max(1.0, abs(a), abs(b))

    def is_real(self, element):
        c = self.scalar(element)
        return abs(c.imag) <= self.epsilon * max(1.0, abs(c))

    def to_json(self, element):
        c = self.scalar(element)
        if c.imag == 0:
            return c.real
        return {"re": c.real, "im": c.imag}

    def from_json(self, obj):
        return self.convert(complex(parse_scalar(obj)))

    def vector(self, values):
        if isinstance(values, sympy.MatrixBase):
            values = list(values)
        return np.asarray([self.scalar(v) for v in values], dtype=complex).reshape(-1)

    def matrix(self, rows):
        if isinstance(rows, np.ndarray):
            return rows.astype(complex)
        if isinstance(rows, sympy.MatrixBase):
            rows = rows.tolist()
        rows = [list(r) for r in rows]
        if not rows:
            raise InputError("empty matrix")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise InputError("ragged matrix rows")
        return np.asarray([[self.scalar(v) for v in r] for r in rows], dtype=complex)

    def zeros(self, rows, cols=None):
        if cols is None:
            return np.zeros(rows, dtype=complex)
        return np.zeros((rows, cols), dtype=complex)

    def identity(self, n):
        return np.eye(n, dtype=complex)

    def diag(self, values):
        return np.diag(np.asarray(values, dtype=complex))

    def unit_vector(self, n, j):
        v = np.zeros(n, dtype=complex)
        v[j] = 1.0
        return v

    def zero_vector(self, n):
        return np.zeros(n, dtype=complex)

    def head(self, v, k):
        return v[:k]

    def concat(self, vectors):
        return np.concatenate(vectors)

    def left_inverse(self, b):
        if b.shape[1] == 0:
            return np.zeros((0, b.shape[0]), dtype=complex)
        return np.linalg.pinv(b)

    def entries(self, v):
        return [complex(x) for x in v]

    def column(self, a, j):
        return a[:, j]

    def hstack(self, columns, rows):
        if not columns:
            return np.zeros((rows, 0), dtype=complex)
        return np.column_stack(columns)

    def vstack(self, blocks):
        return np.vstack(blocks)

    def place_blocks(self, blocks, block_rows, block_cols, n):
        m = np.zeros((block_rows * n, block_cols * n), dtype=complex)
        for (r, c), block in blocks.items():
            m[r * n:(r + 1) * n, c * n:(c + 1) * n] = block
        return m

    def hadamard(self, a, b):
        return a * b

    def rank(self, a):
        if 0 in a.shape:
            return 0
        s = np.linalg.svd(a, compute_uv=False)
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.sum(s > self.null_tolerance * s[0]))

    def nullspace(self, a):
        rows, cols = a.shape
        if cols == 0:
            return []
        if rows == 0:
            return [self.unit_vector(cols, j) for j in range(cols)]
        basis = scipy.linalg.null_space(a, rcond=self.null_tolerance)
        return [basis[:, j] for j in range(basis.shape[1])]

    def column_space(self, a):
        if 0 in a.shape:
            return np.zeros((a.shape[0], 0), dtype=complex)
        return scipy.linalg.orth(a, rcond=self.null_tolerance)

    def solve(self, a, b):
        if a.shape[1] == 0:
            return np.zeros(0, dtype=complex) if self.is_zero_vector(b) else None
        x, *_ = np.linalg.lstsq(a, b, rcond=None)
        if not self.is_zero_vector(a @ x - b, scale=self.norm(b)):
            return None
        return x

    def norm(self, v):
        if len(v) == 0:
            return 0.0
        return float(np.linalg.norm(v))

    def max_abs(self, a):
        if a.size == 0:
            return 0.0
        return float(np.max(np.abs(a)))

    def is_zero_vector(self, v, scale=0.0):
        return self.norm(v) <= self.null_tolerance * max(scale, 1.0)

    def is_zero_matrix(self, a, scale=0.0):
        return self.max_abs(a) <= self.null_tolerance * max(scale, 1.0)

    def random_vector(self, n, rng, low=-5, high=5):
        return rng.uniform(low, high, n).astype(complex)

    def vector_to_json(self, v):
        return [self.to_json(x) for x in v]

    def matrix_to_json(self, a):
        return [[self.to_json(x) for x in row] for row in a]


_FIELDS = {
    "exact": RationalField,
    "gaussian": GaussianField,
    "float": FloatField,
}


def get_field(mode=None, epsilon=None, null_tolerance=None):
    """Factory for the field object of a mode (exact / gaussian / float)."""
    mode = mode or settings["mode"]
    if mode not in _FIELDS:
        raise InputError(f"unknown mode {mode!r}; expected one of {sorted(_FIELDS)}")
    logging.debug(f"Using {mode} field")
    return _FIELDS[mode](epsilon=epsilon, null_tolerance=null_tolerance)
