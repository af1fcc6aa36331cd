"""Analysis on the closed upper hemisphere S^n_+ = {|(x, t)| = 1, t >= 0}.

Functions satisfying the Neumann condition at the equator are represented in
the span of spherical harmonics that are even under ``t -> -t``.  On that span
the Laplace-Beltrami operator is diagonal, and the Jacobi operator
``L = -(Delta + n)`` has kernel exactly ``span{x^1, ..., x^n}``.

Integrals use a product rule: Gauss(-Jacobi) in ``t = cos(theta)`` on
``[0, 1]`` times a rule on the equatorial sphere ``S^{n-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy.linalg import null_space
from scipy.special import roots_jacobi

from .errors import ConfigError, ShapeError, SolvabilityError
from .series import PolyBlock

__all__ = [
    "QuadratureRule",
    "HarmonicBasis",
    "SurfaceFunction",
    "build_quadrature",
    "build_basis",
    "integrate",
    "project",
    "project_K",
    "project_Kperp",
    "laplace_beltrami",
    "apply_L",
    "solve_L",
    "kernel_moments",
    "sphere_area",
]


def sphere_area(n):
    """Area of the unit sphere S^n in R^{n+1}."""
    return 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    @property
    def n(self):
        return self.nodes.shape[1] - 1

    def __len__(self):
        return len(self.weights)


def _sphere_rule(m, degree):
    """Nodes and weights on S^m (in R^{m+1}) exact for polynomials of ``degree``."""
    if m == 1:
        M = degree + 2 if degree % 2 == 0 else degree + 1
        ang = 2 * np.pi * (np.arange(M) + 0.5) / M
        return np.column_stack([np.cos(ang), np.sin(ang)]), np.full(M, 2 * np.pi / M)
    a = (m - 2) / 2
    z, wz = roots_jacobi(degree // 2 + 1, a, a)
    sub_nodes, sub_w = _sphere_rule(m - 1, degree)
    s = np.sqrt(1 - z**2)
    nodes = np.concatenate([np.column_stack([si * sub_nodes, np.full(len(sub_w), zi)]) for zi, si in zip(z, s)])
    weights = np.concatenate([wi * sub_w for wi in wz])
    return nodes, weights


def build_quadrature(n, exactness):
    """Product rule on S^n_+ exact for polynomials of total degree ``exactness``.

    For odd ``n`` the polar weight ``(1 - t^2)^{(n-2)/2}`` is only partly
    polynomial; the non-polynomial factor ``(1 + t)^{(n-2)/2}`` is analytic on
    ``[0, 1]`` and extra Gauss-Jacobi points bring the error to round-off.
    """
    if n < 2:
        raise ConfigError("hemisphere analysis needs n >= 2")
    a = (n - 2) / 2
    if a == int(a):
        # polynomial weight: plain Gauss-Legendre on [0, 1]
        v, wv = roots_jacobi(int(exactness + 2 * a) // 2 + 1, 0.0, 0.0)
        z = (1 + v) / 2
        wz = wv / 2 * (1 - z**2) ** a
    else:
        v, wv = roots_jacobi(exactness // 2 + 12, a, 0.0)
        z = (1 + v) / 2
        wz = wv * 0.5 ** (a + 1) * (1 + z) ** a
    eq_nodes, eq_w = _sphere_rule(n - 1, exactness)
    s = np.sqrt(1 - z**2)
    nodes = np.concatenate([np.column_stack([si * eq_nodes, np.full(len(eq_w), zi)]) for zi, si in zip(z, s)])
    weights = np.concatenate([wi * eq_w for wi in wz])
    nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
    return QuadratureRule(nodes, weights, int(exactness))


def _monomials(nv, k, even_last=False):
    out = []
    for combo in combinations_with_replacement(range(nv), k):
        e = [0] * nv
        for v in combo:
            e[v] += 1
        if even_last and e[-1] % 2:
            continue
        out.append(tuple(e))
    return sorted(out, reverse=True)


def _laplacian_matrix(nv, src, dst):
    index = {e: i for i, e in enumerate(dst)}
    A = np.zeros((len(dst), len(src)))
    for j, e in enumerate(src):
        for v in range(nv):
            if e[v] >= 2:
                f = list(e)
                f[v] -= 2
                A[index[tuple(f)], j] += e[v] * (e[v] - 1)
    return A


class HarmonicBasis:
    """Orthonormal spherical harmonics on S^n_+ that are even in ``t``.

    Each member is a homogeneous harmonic polynomial in ``(x_1..x_n, t)``, so
    it can be evaluated (with derivatives) anywhere in R^{n+1}.  Members of
    degree 1 are ``x^i / |x^i|`` in order and form the kernel ``K``.

    Attributes
    ----------
    degrees : ndarray of int
        Degree of each member; ``Delta`` acts by ``-k(k+n-1)``.
    kernel_ids : ndarray of int
        Indices of the ``n`` degree-1 members.
    kernel_norm : float
        ``|x^i|`` in L^2(S^n_+); its square is ``area(S^n_+) / (n+1)``.
    """

    def __init__(self, n, L_max, quad):
        if L_max < 2:
            raise ConfigError("L_max must be at least 2")
        if quad.exactness_degree < 2 * L_max + 4:
            raise ConfigError(
                f"quadrature exactness {quad.exactness_degree} is below 2*L_max+4 = {2 * L_max + 4}"
            )
        self.n = n
        self.L_max = L_max
        self.quad = quad
        nv = n + 1
        all_exps = []
        blocks = []
        degrees = []
        for k in range(L_max + 1):
            src = _monomials(nv, k, even_last=True)
            if k < 2:
                C = np.eye(len(src))
                if k == 1:
                    # order x_1..x_n
                    order = sorted(range(len(src)), key=lambda i: src[i].index(1))
                    C = C[:, order]
            else:
                dst = _monomials(nv, k - 2)
                C = null_space(_laplacian_matrix(nv, src, dst))
            all_exps.extend(src)
            blocks.append((len(all_exps) - len(src), len(src), C))
            degrees.extend([k] * C.shape[1])
        K = len(all_exps)
        coef = np.zeros((K, len(degrees)))
        col = 0
        for start, size, C in blocks:
            coef[start : start + size, col : col + C.shape[1]] = C
            col += C.shape[1]
        raw = PolyBlock(np.array(all_exps), coef)
        B = raw.evaluate(quad.nodes)
        W = quad.weights
        # Loewdin orthonormalization within each degree
        degrees = np.array(degrees)
        for k in range(L_max + 1):
            idx = np.flatnonzero(degrees == k)
            G = B[:, idx].T @ (W[:, None] * B[:, idx])
            ev, U = np.linalg.eigh(G)
            S = U @ np.diag(ev**-0.5) @ U.T
            coef[:, idx] = coef[:, idx] @ S
        self.degrees = degrees
        self.poly = PolyBlock(np.array(all_exps), coef)
        self.node_values = self.poly.evaluate(quad.nodes)
        self.eigenvalues = -(degrees * (degrees + n - 1)).astype(float)
        self.kernel_ids = np.flatnonzero(degrees == 1)
        self.kernel_norm = math.sqrt(sphere_area(n) / 2 / (n + 1))
        # measured, not assumed: ||x^1||^2 by quadrature
        x1 = quad.nodes[:, 0]
        self.kernel_norm_quadrature = math.sqrt(float(np.sum(W * x1 * x1)))

    def __len__(self):
        return len(self.degrees)

    @property
    def size(self):
        return len(self.degrees)

    def evaluate(self, points, derivatives=0):
        """Basis values (and partials) at arbitrary points of R^{n+1}."""
        return self.poly.evaluate(points, derivatives=derivatives)

    def gram(self):
        B, W = self.node_values, self.quad.weights
        return B.T @ (W[:, None] * B)

    def function(self, coeffs):
        return SurfaceFunction(self, np.asarray(coeffs, dtype=float))

    def zero(self):
        return SurfaceFunction(self, np.zeros(self.size))

    def member(self, i):
        c = np.zeros(self.size)
        c[i] = 1.0
        return SurfaceFunction(self, c)

    def coordinate(self, i):
        """The restriction of ``x^i`` (``i < n``) as a basis expansion."""
        c = np.zeros(self.size)
        c[self.kernel_ids[i]] = self.kernel_norm_quadrature
        return SurfaceFunction(self, c)


@dataclass(eq=False)
class SurfaceFunction:
    """A function on S^n_+ given by its coefficients in a :class:`HarmonicBasis`."""

    basis: HarmonicBasis
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.basis.size,):
            raise ShapeError(f"expected {self.basis.size} coefficients, got {self.coeffs.shape}")

    def _other(self, other):
        if isinstance(other, SurfaceFunction):
            if other.basis is not self.basis:
                raise ShapeError("surface functions live in different bases")
            return other.coeffs
        return NotImplemented

    def __add__(self, other):
        c = self._other(other)
        return SurfaceFunction(self.basis, self.coeffs + c)

    def __sub__(self, other):
        c = self._other(other)
        return SurfaceFunction(self.basis, self.coeffs - c)

    def __neg__(self):
        return SurfaceFunction(self.basis, -self.coeffs)

    def __mul__(self, scalar):
        return SurfaceFunction(self.basis, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SurfaceFunction(self.basis, self.coeffs / float(scalar))

    def copy(self):
        return SurfaceFunction(self.basis, self.coeffs.copy())

    def node_values(self):
        return self.basis.node_values @ self.coeffs

    def __call__(self, points):
        return self.basis.evaluate(points) @ self.coeffs

    def norm(self):
        """L^2(S^n_+) norm."""
        return float(np.linalg.norm(self.coeffs))

    def sup_norm(self):
        """Maximum absolute value over the quadrature nodes."""
        return float(np.max(np.abs(self.node_values()))) if self.basis.size else 0.0


def build_basis(n, L_max=8, quadrature_order=24):
    """Quadrature on S^n_+ and the even-harmonic basis up to degree ``L_max``."""
    if n < 2:
        raise ConfigError("hemisphere analysis needs n >= 2")
    if quadrature_order < 2 * L_max + 4:
        raise ConfigError(
            f"quadrature exactness {quadrature_order} is below 2*L_max+4 = {2 * L_max + 4}"
        )
    quad = build_quadrature(n, quadrature_order)
    return HarmonicBasis(n, L_max, quad), quad


def _node_values(f, quad):
    if isinstance(f, SurfaceFunction):
        return f.node_values()
    if callable(f):
        return np.asarray(f(quad.nodes), dtype=float)
    vals = np.asarray(f, dtype=float)
    if vals.shape != (len(quad),):
        raise ShapeError(f"expected {len(quad)} node values, got {vals.shape}")
    return vals


def integrate(f, quad):
    """Integral over S^n_+ of a surface function, node-value array or callable."""
    return float(np.dot(quad.weights, _node_values(f, quad)))


def project(values, basis):
    """Weighted discrete projection of node values onto the basis.

    The basis is orthonormal for the quadrature inner product, so this is the
    weighted least-squares fit.  Returns ``(SurfaceFunction, residual)`` where
    the residual is the largest node-wise misfit.
    """
    vals = _node_values(values, basis.quad)
    coeffs = basis.node_values.T @ (basis.quad.weights * vals)
    residual = float(np.max(np.abs(basis.node_values @ coeffs - vals))) if len(vals) else 0.0
    return SurfaceFunction(basis, coeffs), residual


def project_K(f, basis=None):
    """Coordinates of the kernel part: component ``i`` is ``<f, x^i> / <x^i, x^i>``.

    Accepts a :class:`SurfaceFunction` or node values (then ``basis`` is required).
    """
    if isinstance(f, SurfaceFunction):
        basis = f.basis
        return f.coeffs[basis.kernel_ids] / basis.kernel_norm_quadrature
    if basis is None:
        raise ShapeError("project_K of node values needs the basis")
    vals = _node_values(f, basis.quad)
    X = basis.quad.nodes[:, : basis.n]
    W = basis.quad.weights
    return (X.T @ (W * vals)) / (basis.kernel_norm_quadrature**2)


def project_Kperp(f):
    """Remove the kernel coefficients."""
    c = f.coeffs.copy()
    c[f.basis.kernel_ids] = 0.0
    return SurfaceFunction(f.basis, c)


def laplace_beltrami(f):
    return SurfaceFunction(f.basis, f.basis.eigenvalues * f.coeffs)


def apply_L(f):
    """Jacobi operator of the flat hemisphere, ``-(Delta + n) f``."""
    return SurfaceFunction(f.basis, -(f.basis.eigenvalues + f.basis.n) * f.coeffs)


def solve_L(f, tol=1e-10):
    """Unique ``phi`` in K-perp with ``-(Delta + n) phi = P_perp f``.

    Raises
    ------
    SolvabilityError
        If the kernel component of ``f`` exceeds ``tol``.
    """
    k = project_K(f)
    if np.max(np.abs(k)) > tol:
        raise SolvabilityError(f"right-hand side has kernel component {k}", kernel_component=k)
    basis = f.basis
    mult = -(basis.eigenvalues + basis.n)
    out = np.zeros_like(f.coeffs)
    mask = np.ones(basis.size, dtype=bool)
    mask[basis.kernel_ids] = False
    out[mask] = f.coeffs[mask] / mult[mask]
    return SurfaceFunction(basis, out)


def kernel_moments(n, quad):
    """Moments of the kernel projection computed by quadrature, next to the
    closed-form constants in terms of ball volumes ``w_m = Vol(B^m)``.

    ``c_n`` is the coefficient in ``P(H(r, tau, 0)) = -c_n r^2 grad(hmean) + O(r^3)``;
    it equals ``P(t x^1)_1``.
    """
    X, t, W = quad.nodes[:, :n], quad.nodes[:, n], quad.weights
    gram = float(np.sum(W * X[:, 0] ** 2))
    cross = float(np.sum(W * X[:, 0] * X[:, 1])) if n > 1 else 0.0
    p_t = (X.T @ (W * t)) / gram
    p_tx = float(np.sum(W * t * X[:, 0] ** 2)) / gram
    p_txxx_iiii = float(np.sum(W * t * X[:, 0] ** 4)) / gram  # = 3 * A
    p_txxx_iijj = float(np.sum(W * t * X[:, 0] ** 2 * X[:, 1] ** 2)) / gram  # = A
    p_txx_max = 0.0
    for i in range(n):
        for j in range(n):
            p_txx_max = max(p_txx_max, float(np.max(np.abs(X.T @ (W * t * X[:, i] * X[:, j])))) / gram)
    wn = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    wn1 = math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2 + 1)
    return {
        "n": n,
        "int_x1x1": gram,
        "int_x1x2": cross,
        "P_t": p_t.tolist(),
        "P_txx_max": p_txx_max,
        "P_tx": p_tx,
        "P_txxx_coeff": p_txxx_iijj,
        "P_txxx_iiii": p_txxx_iiii,
        "c_n": p_tx,
        "closed_form": {
            "int_x1x1": wn1 / 2,
            "P_tx": wn / (wn1 * (n + 2)),
            "P_txxx_coeff": 2 * wn / ((n + 2) * (n + 4) * wn1),
            "c_n": 2 * wn / ((n + 2) * wn1),
        },
    }
