"""Truncated multivariate power series in the Fermi variables (x_1, ..., x_n, t).

A :class:`MultiSeries` is a polynomial truncated at a total degree bound ``D``.
Coefficients are either exact (``int``/``fractions.Fraction``) or ``float``;
exact series are used by the verification paths and can be converted one-way
to floats with :meth:`MultiSeries.to_float`.  The last variable is always the
normal coordinate ``t``.

Terms are kept in a plain ``dict`` keyed by exponent tuples.  Anything that
iterates over terms does so in lexicographic key order so that float results
are reproducible.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Number
from types import MappingProxyType

import numpy as np

from .errors import DomainError, PreconditionError, ShapeError

__all__ = [
    "MultiSeries",
    "SeriesMatrix",
    "PolyBlock",
    "series_mul",
    "series_derive",
    "series_eval",
    "series_dilate",
    "matrix_series_invert",
]


def _is_exact(c):
    return isinstance(c, (int, Fraction)) and not isinstance(c, bool)


class MultiSeries:
    """Polynomial in ``n_vars`` variables truncated at total degree ``degree_bound``.

    Parameters
    ----------
    n_vars : int
        Number of variables (``n`` spatial ones plus ``t``).
    degree_bound : int
        Terms of total degree above this are discarded.
    coeffs : mapping, optional
        Exponent tuple -> coefficient.  Zero coefficients and terms above the
        degree bound are dropped.
    """

    __slots__ = ("n_vars", "degree_bound", "_coeffs")

    def __init__(self, n_vars, degree_bound, coeffs=None):
        if n_vars < 1 or degree_bound < 0:
            raise ShapeError(f"invalid series shape ({n_vars}, {degree_bound})")
        self.n_vars = int(n_vars)
        self.degree_bound = int(degree_bound)
        clean = {}
        for key, c in (coeffs or {}).items():
            key = tuple(int(e) for e in key)
            if len(key) != self.n_vars or min(key) < 0:
                raise ShapeError(f"bad multi-index {key} for {self.n_vars} variables")
            if sum(key) > self.degree_bound or c == 0:
                continue
            clean[key] = clean.get(key, 0) + c
        self._coeffs = {k: clean[k] for k in sorted(clean) if clean[k] != 0}

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, n_vars, degree_bound, value):
        return cls(n_vars, degree_bound, {(0,) * n_vars: value})

    @classmethod
    def zero(cls, n_vars, degree_bound):
        return cls(n_vars, degree_bound)

    @classmethod
    def one(cls, n_vars, degree_bound):
        return cls.constant(n_vars, degree_bound, 1)

    @classmethod
    def variable(cls, n_vars, degree_bound, index, coeff=1):
        if not 0 <= index < n_vars:
            raise ShapeError(f"variable index {index} out of range")
        key = [0] * n_vars
        key[index] = 1
        return cls(n_vars, degree_bound, {tuple(key): coeff})

    # -- basic protocol ---------------------------------------------------

    @property
    def coeffs(self):
        return MappingProxyType(self._coeffs)

    def __len__(self):
        return len(self._coeffs)

    def __iter__(self):
        return iter(self._coeffs.items())

    def __getitem__(self, key):
        return self._coeffs.get(tuple(key), 0)

    def __repr__(self):
        return f"MultiSeries(n_vars={self.n_vars}, D={self.degree_bound}, terms={len(self)})"

    def __str__(self):
        if not self._coeffs:
            return "0"
        names = [f"x{i + 1}" for i in range(self.n_vars - 1)] + ["t"]
        parts = []
        for key, c in self._coeffs.items():
            mono = "*".join(
                names[v] if e == 1 else f"{names[v]}^{e}" for v, e in enumerate(key) if e
            )
            parts.append(f"{c}*{mono}" if mono else f"{c}")
        return " + ".join(parts)

    def __eq__(self, other):
        if isinstance(other, Number):
            other = MultiSeries.constant(self.n_vars, self.degree_bound, other)
        if not isinstance(other, MultiSeries):
            return NotImplemented
        return (
            self.n_vars == other.n_vars
            and self.degree_bound == other.degree_bound
            and self._coeffs == other._coeffs
        )

    def __hash__(self):
        return hash((self.n_vars, self.degree_bound, tuple(self._coeffs.items())))

    @property
    def is_exact(self):
        return all(_is_exact(c) for c in self._coeffs.values())

    @property
    def is_zero(self):
        return not self._coeffs

    def max_degree(self):
        return max((sum(k) for k in self._coeffs), default=-1)

    def min_degree(self):
        return min((sum(k) for k in self._coeffs), default=self.degree_bound + 1)

    def homogeneous_part(self, degree):
        return MultiSeries(
            self.n_vars,
            self.degree_bound,
            {k: c for k, c in self._coeffs.items() if sum(k) == degree},
        )

    def with_bound(self, degree_bound):
        return MultiSeries(self.n_vars, degree_bound, self._coeffs)

    def map_coeffs(self, fn):
        return MultiSeries(
            self.n_vars, self.degree_bound, {k: fn(c) for k, c in self._coeffs.items()}
        )

    def to_float(self):
        return self.map_coeffs(float)

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other):
        if self.n_vars != other.n_vars or self.degree_bound != other.degree_bound:
            raise ShapeError(
                f"series shapes differ: ({self.n_vars}, {self.degree_bound}) vs "
                f"({other.n_vars}, {other.degree_bound})"
            )

    def _coerce(self, other):
        if isinstance(other, MultiSeries):
            self._check(other)
            return other
        if isinstance(other, Number):
            return MultiSeries.constant(self.n_vars, self.degree_bound, other)
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        out = dict(self._coeffs)
        for k, c in other._coeffs.items():
            out[k] = out.get(k, 0) + c
        return MultiSeries(self.n_vars, self.degree_bound, out)

    __radd__ = __add__

    def __neg__(self):
        return self.map_coeffs(lambda c: -c)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, MultiSeries):
            return series_mul(self, other)
        if isinstance(other, Number):
            return self.map_coeffs(lambda c: c * other)
        return NotImplemented

    __rmul__ = __mul__

    def __pow__(self, k):
        out = MultiSeries.one(self.n_vars, self.degree_bound)
        for _ in range(int(k)):
            out = out * self
        return out

    def derive(self, var):
        return series_derive(self, var)

    def dilate(self, r):
        return series_dilate(self, r)

    def __call__(self, point):
        return series_eval(self, point)


def series_mul(a, b):
    """Product of two series truncated at their common degree bound."""
    a._check(b)
    D = a.degree_bound
    out = {}
    b_items = [(kb, cb, sum(kb)) for kb, cb in b._coeffs.items()]
    for ka, ca in a._coeffs.items():
        da = sum(ka)
        for kb, cb, db in b_items:
            if da + db > D:
                continue
            key = tuple(i + j for i, j in zip(ka, kb))
            out[key] = out.get(key, 0) + ca * cb
    return MultiSeries(a.n_vars, D, out)


def series_derive(s, var):
    """Formal partial derivative in variable ``var``.

    The degree bound is kept; the top-degree slot is simply empty afterwards.
    """
    if not 0 <= var < s.n_vars:
        raise ShapeError(f"variable index {var} out of range for {s.n_vars} variables")
    out = {}
    for k, c in s._coeffs.items():
        e = k[var]
        if e == 0:
            continue
        key = list(k)
        key[var] = e - 1
        out[tuple(key)] = c * e
    return MultiSeries(s.n_vars, s.degree_bound, out)


def series_eval(s, point):
    """Evaluate ``s`` at a point with ``n_vars`` coordinates.

    Powers of each coordinate are tabulated once and the terms are summed in
    lexicographic multi-index order.  Exact coordinates with exact coefficients
    give an exact result.
    """
    point = list(point)
    if len(point) != s.n_vars:
        raise ShapeError(f"point has {len(point)} coordinates, expected {s.n_vars}")
    D = s.degree_bound
    powers = []
    for p in point:
        row = [1]
        for _ in range(D):
            row.append(row[-1] * p)
        powers.append(row)
    total = 0
    for k, c in s._coeffs.items():
        term = c
        for v, e in enumerate(k):
            if e:
                term = term * powers[v][e]
        total = total + term
    return total


def series_dilate(s, r):
    """Substitute ``(x, t) -> (r x, r t)``: each degree-``k`` term scales by ``r**k``."""
    if not r > 0:
        raise DomainError(f"dilation factor must be positive, got {r}")
    pw = [1]
    for _ in range(s.degree_bound):
        pw.append(pw[-1] * r)
    return MultiSeries(
        s.n_vars, s.degree_bound, {k: c * pw[sum(k)] for k, c in s._coeffs.items()}
    )


class SeriesMatrix:
    """Square matrix of :class:`MultiSeries` with a shared shape.

    Parameters
    ----------
    entries : sequence of sequences of MultiSeries
    symmetric : bool
        When set, ``entries[i][j] == entries[j][i]`` is enforced.
    """

    __slots__ = ("entries", "symmetric", "dim", "n_vars", "degree_bound")

    def __init__(self, entries, symmetric=False):
        entries = tuple(tuple(row) for row in entries)
        dim = len(entries)
        if dim == 0 or any(len(row) != dim for row in entries):
            raise ShapeError("series matrix must be square and non-empty")
        first = entries[0][0]
        for row in entries:
            for e in row:
                if not isinstance(e, MultiSeries):
                    raise ShapeError("series matrix entries must be MultiSeries")
                first._check(e)
        if symmetric:
            for i in range(dim):
                for j in range(i):
                    if entries[i][j] != entries[j][i]:
                        raise ShapeError(f"entries ({i},{j}) and ({j},{i}) differ")
        self.entries = entries
        self.symmetric = bool(symmetric)
        self.dim = dim
        self.n_vars = first.n_vars
        self.degree_bound = first.degree_bound

    @classmethod
    def identity(cls, dim, n_vars, degree_bound):
        one = MultiSeries.one(n_vars, degree_bound)
        zero = MultiSeries.zero(n_vars, degree_bound)
        return cls(
            [[one if i == j else zero for j in range(dim)] for i in range(dim)],
            symmetric=True,
        )

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def __repr__(self):
        return f"SeriesMatrix(dim={self.dim}, n_vars={self.n_vars}, D={self.degree_bound})"

    def __eq__(self, other):
        if not isinstance(other, SeriesMatrix):
            return NotImplemented
        return self.entries == other.entries

    def _combine(self, other, fn):
        if self.dim != other.dim:
            raise ShapeError("matrix dimensions differ")
        return SeriesMatrix(
            [[fn(a, b) for a, b in zip(ra, rb)] for ra, rb in zip(self.entries, other.entries)],
            symmetric=self.symmetric and other.symmetric,
        )

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b)

    def __neg__(self):
        return SeriesMatrix([[-e for e in row] for row in self.entries], self.symmetric)

    def __matmul__(self, other):
        if self.dim != other.dim:
            raise ShapeError("matrix dimensions differ")
        d = self.dim
        zero = MultiSeries.zero(self.n_vars, self.degree_bound)
        out = []
        for i in range(d):
            row = []
            for j in range(d):
                acc = zero
                for k in range(d):
                    a, b = self.entries[i][k], other.entries[k][j]
                    if a.is_zero or b.is_zero:
                        continue
                    acc = acc + a * b
                row.append(acc)
            out.append(row)
        return SeriesMatrix(out)

    def transpose(self):
        d = self.dim
        return SeriesMatrix([[self.entries[j][i] for j in range(d)] for i in range(d)], self.symmetric)

    def is_symmetric(self):
        d = self.dim
        return all(self.entries[i][j] == self.entries[j][i] for i in range(d) for j in range(i))

    def map(self, fn):
        return SeriesMatrix([[fn(e) for e in row] for row in self.entries], self.symmetric)

    def to_float(self):
        return self.map(MultiSeries.to_float)

    def dilate(self, r):
        return self.map(lambda e: series_dilate(e, r))

    def homogeneous_part(self, degree):
        return self.map(lambda e: e.homogeneous_part(degree))

    def constant_part(self):
        """Degree-0 coefficients as a nested list."""
        z = (0,) * self.n_vars
        return [[e[z] for e in row] for row in self.entries]

    def is_identity(self):
        return self == SeriesMatrix.identity(self.dim, self.n_vars, self.degree_bound)

    def evaluate(self, point):
        return np.array([[series_eval(e, point) for e in row] for row in self.entries])


def matrix_series_invert(M):
    """Invert a series matrix whose degree-0 part is the identity.

    Uses the truncated Neumann sum ``sum_j (-(M - I))**j``; since ``M - I`` has
    no constant term its ``j``-th power starts at degree ``j``, so ``j`` up to
    the degree bound is enough.
    """
    const = M.constant_part()
    for i in range(M.dim):
        for j in range(M.dim):
            if const[i][j] != (1 if i == j else 0):
                raise PreconditionError("degree-0 part of the matrix is not the identity")
    eye = SeriesMatrix.identity(M.dim, M.n_vars, M.degree_bound)
    E = M - eye
    term = eye
    total = eye
    for _ in range(M.degree_bound):
        term = -(term @ E)
        if all(e.is_zero for row in term.entries for e in row):
            break
        total = total + term
    if M.symmetric or M.is_symmetric():
        d = M.dim
        # (I - E + E^2 ...) is symmetric when E is; rebuild with the flag set
        total = SeriesMatrix(
            [[total.entries[min(i, j)][max(i, j)] for j in range(d)] for i in range(d)],
            symmetric=True,
        )
    return total


class PolyBlock:
    """Vectorized float evaluation of a stack of series sharing the same variables.

    The block stores one exponent table and a coefficient column per series, so
    many polynomials (e.g. all metric entries) are evaluated at many points with
    a few array operations.

    Parameters
    ----------
    exponents : array_like, shape (K, V)
    coefficients : array_like, shape (K, m)
    """

    def __init__(self, exponents, coefficients):
        self.exponents = np.asarray(exponents, dtype=int).reshape(-1, np.shape(exponents)[-1])
        self.coefficients = np.asarray(coefficients, dtype=float).reshape(len(self.exponents), -1)
        self.n_vars = self.exponents.shape[1]
        self.max_power = int(self.exponents.max()) if self.exponents.size else 0

    @classmethod
    def from_series(cls, series_list):
        series_list = list(series_list)
        n_vars = series_list[0].n_vars
        keys = sorted({k for s in series_list for k in s.coeffs})
        if not keys:
            keys = [(0,) * n_vars]
        index = {k: i for i, k in enumerate(keys)}
        C = np.zeros((len(keys), len(series_list)))
        for j, s in enumerate(series_list):
            for k, c in s:
                C[index[k], j] = float(c)
        return cls(np.array(keys, dtype=int), C)

    def _power_table(self, pts):
        P = np.ones((self.max_power + 3,) + pts.shape)
        for e in range(1, self.max_power + 3):
            P[e] = P[e - 1] * pts
        return P

    def _monomials(self, P, exps):
        # P[e, m, v] = pts[m, v] ** e; negative exponents contribute zero
        V = np.ones((P.shape[1], len(exps)))
        for v in range(self.n_vars):
            e = exps[:, v]
            col = np.where(e >= 0, P[np.clip(e, 0, None), :, v].T, 0.0)
            V *= col
        return V

    def evaluate(self, points, derivatives=0):
        """Values (and optionally first/second partials) at ``points``.

        Returns
        -------
        values : ndarray, shape (M, m)
        grad : ndarray, shape (M, V, m), if ``derivatives >= 1``
        hess : ndarray, shape (M, V, V, m), if ``derivatives >= 2``
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        P = self._power_table(pts)
        E = self.exponents
        vals = self._monomials(P, E) @ self.coefficients
        if derivatives == 0:
            return vals
        nv = self.n_vars
        grad = np.empty((len(pts), nv, self.coefficients.shape[1]))
        for a in range(nv):
            Ea = E.copy()
            Ea[:, a] -= 1
            grad[:, a, :] = self._monomials(P, Ea) @ (self.coefficients * E[:, a : a + 1])
        if derivatives == 1:
            return vals, grad
        hess = np.empty((len(pts), nv, nv, self.coefficients.shape[1]))
        for a in range(nv):
            for b in range(a, nv):
                Eab = E.copy()
                Eab[:, a] -= 1
                Eab[:, b] -= 1
                fac = E[:, a] * (E[:, b] - (1 if a == b else 0))
                h = self._monomials(P, Eab) @ (self.coefficients * fac[:, None])
                hess[:, a, b, :] = h
                hess[:, b, a, :] = h
        return vals, grad, hess
