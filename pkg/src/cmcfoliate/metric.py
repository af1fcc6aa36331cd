"""Fermi-coordinate metric jets and the fourth-order inverse-metric polynomial.

Index conventions (all arrays are indexed exactly as the symbols are written):

========  ==========================  =====================
field     symbol                      shape
========  ==========================  =====================
h         h_{ij}                      (n, n)
h1        h_{ij,k}                    (n, n, n)
h2        h_{ij,kl}                   (n, n, n, n)
h3        h_{ij,klm}                  (n,) * 5
Rtt       R_{titj}                    (n, n)
Rtt_k     R_{titj,k}                  (n, n, n)
Rtt_t     R_{titj,t}                  (n, n)
Rtt_kl    R_{titj,kl}                 (n,) * 4
Rtt_tk    R_{titj,tk}                 (n, n, n)
Rtt_tt    R_{titj,tt}                 (n, n)
Rb        Rbar_{ikjl}                 (n,) * 4
Rb_m      Rbar_{ikjl,m}               (n,) * 5
Rb_mp     Rbar_{ikjl,mp}              (n,) * 6
========  ==========================  =====================

Comma indices are covariant derivatives along the boundary (``t`` for the
normal direction).  ``Sym_ij`` denotes the average over the named index pair.
Jets may hold floats or exact rationals (object arrays of ``Fraction``).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import DomainError, NondegeneracyError, ValidationError
from .series import MultiSeries, PolyBlock, SeriesMatrix, matrix_series_invert

__all__ = [
    "BoundaryJet",
    "MetricModel",
    "MetricEvaluator",
    "JET_FIELDS",
    "inverse_metric_series",
    "direct_metric_series",
    "rescaled_inverse_metric",
    "ambient_laplacian",
    "make_model",
    "euclidean_model",
    "bump_model",
    "table_model",
    "random_jet",
    "umbilic_jet",
]

# field name -> number of indices
JET_FIELDS = {
    "h": 2,
    "h1": 3,
    "h2": 4,
    "h3": 5,
    "Rtt": 2,
    "Rtt_k": 3,
    "Rtt_t": 2,
    "Rtt_kl": 4,
    "Rtt_tk": 3,
    "Rtt_tt": 2,
    "Rb": 4,
    "Rb_m": 5,
    "Rb_mp": 6,
}

_SYM_IJ_FIELDS = ("h", "h1", "h2", "h3", "Rtt", "Rtt_k", "Rtt_t", "Rtt_kl", "Rtt_tk", "Rtt_tt")


@dataclass(frozen=True, eq=False)
class BoundaryJet:
    """Curvature and second-fundamental-form data at one boundary point.

    Missing fields default to zero.  Arrays are stored as given (float or
    object dtype); use :meth:`validate` to check the symmetry invariants.
    """

    n: int
    h: np.ndarray = None
    h1: np.ndarray = None
    h2: np.ndarray = None
    h3: np.ndarray = None
    Rtt: np.ndarray = None
    Rtt_k: np.ndarray = None
    Rtt_t: np.ndarray = None
    Rtt_kl: np.ndarray = None
    Rtt_tk: np.ndarray = None
    Rtt_tt: np.ndarray = None
    Rb: np.ndarray = None
    Rb_m: np.ndarray = None
    Rb_mp: np.ndarray = None
    exact: bool = field(default=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"boundary dimension must be positive, got {self.n}")
        dtype = object if self.exact else float
        zero = Fraction(0) if self.exact else 0.0
        for name, rank in JET_FIELDS.items():
            val = getattr(self, name)
            shape = (self.n,) * rank
            if val is None:
                arr = np.full(shape, zero, dtype=dtype)
            else:
                arr = np.array(val, dtype=dtype)
                if arr.shape != shape:
                    raise ValidationError(f"jet field {name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zero(cls, n, exact=False):
        return cls(n, exact=exact)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_float(self):
        if not self.exact:
            return self
        kw = {name: getattr(self, name).astype(float) for name in JET_FIELDS}
        return BoundaryJet(self.n, exact=False, **kw)

    def as_dict(self):
        return {name: np.asarray(getattr(self, name), dtype=float).tolist() for name in JET_FIELDS}

    @classmethod
    def from_dict(cls, n, data):
        unknown = set(data) - set(JET_FIELDS)
        if unknown:
            raise ValidationError(f"unknown jet fields: {sorted(unknown)}")
        return cls(n, **{k: np.asarray(v, dtype=float) for k, v in data.items()})

    @property
    def hmean(self):
        return np.trace(self.h)

    def violations(self, tol=1e-12):
        """Names of violated invariants (empty when the jet is valid)."""
        bad = []

        def differs(a, b):
            if self.exact:
                return bool(np.any(a != b))
            return not np.allclose(a, b, atol=tol, rtol=0)

        for name in _SYM_IJ_FIELDS:
            a = getattr(self, name)
            if differs(a, np.swapaxes(a, 0, 1)):
                bad.append(f"{name} not symmetric in (i,j)")
        for name in ("Rb", "Rb_m", "Rb_mp"):
            a = getattr(self, name)
            if differs(a, -np.swapaxes(a, 0, 1)):
                bad.append(f"{name} not antisymmetric under i<->k")
            if differs(a, -np.swapaxes(a, 2, 3)):
                bad.append(f"{name} not antisymmetric under j<->l")
            perm = (2, 3, 0, 1) + tuple(range(4, a.ndim))
            if differs(a, np.transpose(a, perm)):
                bad.append(f"{name} not symmetric under pair exchange (ik)<->(jl)")
        if not self.exact:
            for name in JET_FIELDS:
                if not np.all(np.isfinite(getattr(self, name))):
                    bad.append(f"{name} has non-finite entries")
        return bad

    def validate(self, tol=1e-12):
        bad = self.violations(tol)
        if bad:
            raise ValidationError("invalid boundary jet: " + "; ".join(bad))
        return self


# ---------------------------------------------------------------------------
# Inverse-metric polynomial

# Named constants of the fourth-order inverse-metric expansion.  The
# self-test swaps entries here to check that its oracles catch a bad constant.
INVERSE_METRIC_CONSTANTS = {
    "t": Fraction(2),
    "xx_Rb": Fraction(1, 3),
    "tx_h1": Fraction(2),
    "tt_R": Fraction(1),
    "tt_hh": Fraction(3),
    "xxx_Rbm": Fraction(1, 6),
    "txx_Rbh": Fraction(2, 3),
    "txx_h2": Fraction(1),
    "ttx_Rk": Fraction(1),
    "ttx_h1h": Fraction(6),
    "ttt_Rt": Fraction(1, 3),
    "ttt_Rh": Fraction(8, 3),
    "ttt_hhh": Fraction(4),
    "xxxx_Rbmp": Fraction(1, 20),
    "xxxx_RbRb": Fraction(1, 15),
    "txxx_Rbmh": Fraction(1, 3),
    "txxx_Rbh1": Fraction(2, 3),
    "txxx_h3": Fraction(1, 3),
    "ttxx_Rkl": Fraction(1, 2),
    "ttxx_RbR": Fraction(1, 3),
    "ttxx_Rbhh": Fraction(7, 3),
    "ttxx_SymRbh_left": Fraction(-4, 3),
    "ttxx_SymRbh_right": Fraction(-4, 3),
    "ttxx_hRbh": Fraction(4, 3),
    "ttxx_h2h": Fraction(4),
    "ttxx_hh_kl": Fraction(-1, 2),
    "ttxx_h1h1": Fraction(4),
    "tttx_Rtk": Fraction(1, 3),
    "tttx_Rkh": Fraction(8, 3),
    "tttx_Rh1": Fraction(8, 3),
    "tttx_h1hh_a": Fraction(8),
    "tttx_h1hh_b": Fraction(4),
    "tttt_Rtt": Fraction(1, 12),
    "tttt_RtRt": Fraction(-1, 3),
    "tttt_RR": Fraction(1),
    "tttt_Rhh": Fraction(6),
    "tttt_Rth": Fraction(5, 6),
    "tttt_SymRh_left": Fraction(-8, 3),
    "tttt_SymRh_right": Fraction(-8, 3),
    "tttt_hRh": Fraction(13, 3),
    "tttt_hhhh": Fraction(5),
}


def _sym(a, i=0, j=1):
    """Average of ``a`` and ``a`` with axes ``i`` and ``j`` swapped."""
    return (a + np.swapaxes(a, i, j)) * Fraction(1, 2)


def _es(spec, *ops):
    return np.einsum(spec, *ops, optimize=False)


def _inverse_metric_terms(jet, C):
    """Coefficient tensors ``T[i, j, k1..kq]`` keyed by ``(q, p)`` for the monomial
    ``x_{k1}...x_{kq} t^p`` of ``g^{ij}``."""
    h, h1, h2, h3 = jet.h, jet.h1, jet.h2, jet.h3
    R, Rk, Rt, Rkl, Rtk, Rtt = jet.Rtt, jet.Rtt_k, jet.Rtt_t, jet.Rtt_kl, jet.Rtt_tk, jet.Rtt_tt
    Rb, Rbm, Rbmp = jet.Rb, jet.Rb_m, jet.Rb_mp
    hh = h @ h
    T = {}
    # degree 1
    T[(0, 1)] = C["t"] * h
    # degree 2
    T[(2, 0)] = C["xx_Rb"] * np.transpose(Rb, (0, 2, 1, 3))
    T[(1, 1)] = C["tx_h1"] * h1
    T[(0, 2)] = C["tt_R"] * R + C["tt_hh"] * hh
    # degree 3
    T[(3, 0)] = C["xxx_Rbm"] * np.transpose(Rbm, (0, 2, 1, 3, 4))
    T[(2, 1)] = C["txx_Rbh"] * _sym(_es("ikml,mj->ijkl", Rb, h)) + C["txx_h2"] * h2
    T[(1, 2)] = C["ttx_Rk"] * Rk + C["ttx_h1h"] * _sym(_es("ilk,lj->ijk", h1, h))
    T[(0, 3)] = C["ttt_Rt"] * Rt + C["ttt_Rh"] * _sym(R @ h) + C["ttt_hhh"] * (hh @ h)
    # degree 4
    T[(4, 0)] = C["xxxx_Rbmp"] * np.transpose(Rbmp, (0, 2, 1, 3, 4, 5)) + C["xxxx_RbRb"] * _es(
        "ikql,jmqp->ijklmp", Rb, Rb
    )
    T[(3, 1)] = (
        C["txxx_Rbmh"] * _sym(_es("ilpmk,pj->ijklm", Rbm, h))
        + C["txxx_Rbh1"] * _sym(_es("ikpl,pjm->ijklm", Rb, h1))
        + C["txxx_h3"] * h3
    )
    S = _sym(_es("pkml,mj->pjkl", Rb, h))  # Sym_pj(Rbar_{pkml} h_{mj})
    hh_kl = (
        _es("imkl,mj->ijkl", h2, h)
        + _es("imk,mjl->ijkl", h1, h1)
        + _es("iml,mjk->ijkl", h1, h1)
        + _es("im,mjkl->ijkl", h, h2)
    )  # (h_{im} h_{mj})_{,kl} by the Leibniz rule
    T[(2, 2)] = (
        C["ttxx_Rkl"] * Rkl
        + C["ttxx_RbR"] * _sym(_es("ikml,mj->ijkl", Rb, R))
        + C["ttxx_Rbhh"] * _sym(_es("ikml,pj,mp->ijkl", Rb, h, h))
        + C["ttxx_SymRbh_left"] * _es("pjkl,ip->ijkl", S, h)
        + C["ttxx_SymRbh_right"] * _es("ipkl,pj->ijkl", S, h)
        + C["ttxx_hRbh"] * _es("mkpl,im,pj->ijkl", Rb, h, h)
        + C["ttxx_h2h"] * _sym(_es("imkl,mj->ijkl", h2, h))
        + C["ttxx_hh_kl"] * hh_kl
        + C["ttxx_h1h1"] * _es("imk,mjl->ijkl", h1, h1)
    )
    T[(1, 3)] = (
        C["tttx_Rtk"] * Rtk
        + C["tttx_Rkh"] * _sym(_es("ilk,lj->ijk", Rk, h))
        + C["tttx_Rh1"] * _sym(_es("il,ljk->ijk", R, h1))
        + C["tttx_h1hh_a"] * _es("jlk,lm,im->ijk", h1, h, h)
        + C["tttx_h1hh_b"] * _es("mlk,lj,im->ijk", h1, h, h)
    )
    hR = h @ R
    T[(0, 4)] = (
        C["tttt_Rtt"] * Rtt
        + C["tttt_RtRt"] * (Rt @ Rt)
        + C["tttt_RR"] * (R @ R)
        + C["tttt_Rhh"] * _sym(_es("ik,lj,kl->ij", R, h, h))
        + C["tttt_Rth"] * _sym(Rt @ h)
        + C["tttt_SymRh_left"] * (h @ _sym(hR))
        + C["tttt_SymRh_right"] * (_sym(hR) @ h)
        + C["tttt_hRh"] * (h @ R @ h)
        + C["tttt_hhhh"] * (hh @ hh)
    )
    # the metric is symmetric; terms written without Sym are symmetrized here
    return {key: _sym(val) for key, val in T.items()}


def inverse_metric_series(jet, degree_bound=4, constants=None):
    """Inverse metric ``g^{ab}`` in Fermi coordinates through total degree four.

    Returns an ``(n+1) x (n+1)`` symmetric :class:`SeriesMatrix` in the
    variables ``(x_1..x_n, t)``: ``g^{tt} = 1``, ``g^{ti} = 0`` and ``g^{ij}``
    the fourth-order polynomial in the boundary jet.  The fifth-order
    remainder is not represented.
    """
    jet.validate()
    C = dict(INVERSE_METRIC_CONSTANTS)
    if constants:
        C.update({k: Fraction(v) if isinstance(v, int) else v for k, v in constants.items()})
    if not jet.exact:
        C = {k: float(v) for k, v in C.items()}
    n = jet.n
    nv = n + 1
    one = Fraction(1) if jet.exact else 1.0
    acc = [[{} for _ in range(n)] for _ in range(n)]
    for i in range(n):
        acc[i][i][(0,) * nv] = one
    for (q, p), T in _inverse_metric_terms(jet, C).items():
        if q + p > degree_bound:
            continue
        for ks in np.ndindex(*((n,) * q)):
            key = [0] * nv
            for k in ks:
                key[k] += 1
            key[n] = p
            key = tuple(key)
            for i in range(n):
                for j in range(n):
                    c = T[(i, j) + ks]
                    if c != 0:
                        acc[i][j][key] = acc[i][j].get(key, 0) + c
    zero = MultiSeries.zero(nv, degree_bound)
    rows = []
    for a in range(nv):
        row = []
        for b in range(nv):
            if a < n and b < n:
                row.append(MultiSeries(nv, degree_bound, acc[a][b]))
            elif a == b:
                row.append(MultiSeries.constant(nv, degree_bound, one))
            else:
                row.append(zero)
        rows.append(row)
    return SeriesMatrix(rows, symmetric=True)


def direct_metric_series(jet, degree_bound=4):
    """Metric ``g_{ab}`` as the truncated series inverse of :func:`inverse_metric_series`."""
    return matrix_series_invert(inverse_metric_series(jet, degree_bound))


def rescaled_inverse_metric(jet, r, degree_bound=4):
    """``g^{ab}(r x, r t)`` as a polynomial in ``(x, t)``; the identity at ``r = 0``."""
    if r < 0:
        raise DomainError(f"radius must be non-negative, got {r}")
    nv = jet.n + 1
    if r == 0:
        return SeriesMatrix.identity(nv, nv, degree_bound)
    return inverse_metric_series(jet, degree_bound).dilate(r)


class MetricEvaluator:
    """Pointwise rescaled inverse metric with first partials, for a fixed jet and ``r``.

    Only the ``n x n`` block depends on the point; the ``t`` row and column are
    those of the identity.  The metric ``g_{ab}`` is taken to be the pointwise
    matrix inverse of the polynomial ``g^{ab}``.
    """

    def __init__(self, jet, r, degree_bound=4):
        self.n = jet.n
        self.r = float(r)
        fjet = jet.to_float()
        ginv = rescaled_inverse_metric(fjet, self.r, degree_bound)
        n = self.n
        self.series = ginv
        self.block = PolyBlock.from_series(ginv.entries[i][j] for i in range(n) for j in range(n))
        self.flat = self.r == 0 or all(
            ginv.entries[i][j] == (1.0 if i == j else 0.0) for i in range(n) for j in range(n)
        )

    def evaluate(self, points):
        """Return ``(Ginv, dGinv)`` with shapes ``(M, n+1, n+1)`` and ``(M, n+1, n+1, n+1)``;
        ``dGinv[m, c, a, b]`` is the ``c``-th partial of ``g^{ab}``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        M = len(pts)
        n, nv = self.n, self.n + 1
        G = np.zeros((M, nv, nv))
        dG = np.zeros((M, nv, nv, nv))
        G[:, n, n] = 1.0
        if self.flat:
            G[:, :n, :n] = np.eye(n)
            return G, dG
        vals, grad = self.block.evaluate(pts, derivatives=1)
        G[:, :n, :n] = vals.reshape(M, n, n)
        dG[:, :, :n, :n] = grad.reshape(M, nv, n, n)
        return G, dG

    def geometry(self, points):
        """``Ginv``, ``dGinv`` and the gradient of ``log sqrt(det g)``."""
        G, dG = self.evaluate(points)
        # d log sqrt(det g) = -1/2 tr(g_{..} d g^{..})
        g = np.linalg.inv(G)
        dlog = -0.5 * np.einsum("mab,mcba->mc", g, dG)
        return G, dG, dlog


def _check_half_ball(points, radius=2.0):
    pts = np.atleast_2d(points)
    if np.any(pts[:, -1] < -1e-14) or np.any(np.linalg.norm(pts, axis=1) >= radius):
        raise DomainError("query point outside the half ball B_2^+")


def ambient_laplacian(jet, r, points, value, grad, hess, evaluator=None):
    """Laplace-Beltrami operator of the rescaled metric applied to a scalar field.

    Parameters
    ----------
    jet : BoundaryJet
    r : float
        Rescaling radius; ``r = 0`` is the Euclidean metric.
    points : ndarray, shape (M, n+1)
        Query points in the half ball ``B_2^+``.
    value, grad, hess : ndarray
        The field and its Euclidean partials at ``points`` (shapes ``(M,)``,
        ``(M, n+1)``, ``(M, n+1, n+1)``).

    Returns
    -------
    ndarray, shape (M,)
        ``g^{ab} f_ab + (d_a g^{ab} + g^{ab} d_a log sqrt(det g)) f_b``.
    """
    points = np.atleast_2d(points)
    _check_half_ball(points)
    ev = evaluator or MetricEvaluator(jet, r)
    G, dG, dlog = ev.geometry(points)
    div = np.einsum("maab->mb", dG) + np.einsum("mab,ma->mb", G, dlog)
    return np.einsum("mab,mab->m", G, hess) + np.einsum("mb,mb->m", div, grad)


# ---------------------------------------------------------------------------
# Models


@dataclass
class MetricModel:
    """A smooth field of boundary jets ``tau -> jet`` together with the boundary
    mean curvature ``hmean = tr h`` and its first two derivatives."""

    n: int
    jet_at: Callable
    hmean: Callable
    hmean_grad: Callable
    hmean_hess: Callable
    domain_radius: float = 0.25
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def describe(self):
        return {"kind": self.kind, "n": self.n, **self.params}

    def consistency(self, tau, step=1e-4):
        """Mismatch of the supplied mean-curvature data against the jets and
        against central differences of ``hmean``."""
        tau = np.asarray(tau, dtype=float)
        jet = self.jet_at(tau)
        e = np.eye(self.n)
        fd_grad = np.array(
            [(self.hmean(tau + step * e[i]) - self.hmean(tau - step * e[i])) / (2 * step) for i in range(self.n)]
        )
        fd_hess = np.array(
            [
                (self.hmean_grad(tau + step * e[i]) - self.hmean_grad(tau - step * e[i])) / (2 * step)
                for i in range(self.n)
            ]
        )
        return {
            "trace_h": abs(self.hmean(tau) - np.trace(jet.h)),
            "trace_h1": float(np.max(np.abs(self.hmean_grad(tau) - np.einsum("jji->i", jet.h1)))),
            "fd_grad": float(np.max(np.abs(fd_grad - self.hmean_grad(tau)))),
            "fd_hess": float(np.max(np.abs(fd_hess - self.hmean_hess(tau)))),
        }


def euclidean_model(n, domain_radius=0.25):
    zero = BoundaryJet.zero(n)
    return MetricModel(
        n=n,
        jet_at=lambda tau: zero,
        hmean=lambda tau: 0.0,
        hmean_grad=lambda tau: np.zeros(n),
        hmean_hess=lambda tau: np.zeros((n, n)),
        domain_radius=domain_radius,
        kind="euclidean",
    )


def bump_model(n, a, Q, domain_radius=0.25, allow_degenerate=False):
    """Umbilic boundary with mean curvature ``a + tau^T Q tau / 2`` around ``p``.

    ``h_ij(tau) = hmean(tau) / n * delta_ij`` and its tau-derivatives fill
    ``h1``, ``h2``; every curvature slot is zero.  A singular ``Q`` raises
    :class:`NondegeneracyError` unless ``allow_degenerate`` is set, in which
    case the solver rejects the model instead.
    """
    Q = np.array(Q, dtype=float)
    if Q.shape != (n, n) or not np.allclose(Q, Q.T):
        raise ValidationError("bump Hessian Q must be a symmetric n x n matrix")
    if np.linalg.matrix_rank(Q) < n and not allow_degenerate:
        raise NondegeneracyError("bump Hessian Q is singular; the critical point must be nondegenerate")
    a = float(a)
    eye = np.eye(n)

    def hmean(tau):
        tau = np.asarray(tau, dtype=float)
        return a + 0.5 * tau @ Q @ tau

    def jet_at(tau):
        tau = np.asarray(tau, dtype=float)
        return BoundaryJet(
            n,
            h=hmean(tau) / n * eye,
            h1=np.einsum("ij,k->ijk", eye, Q @ tau) / n,
            h2=np.einsum("ij,kl->ijkl", eye, Q) / n,
        )

    return MetricModel(
        n=n,
        jet_at=jet_at,
        hmean=hmean,
        hmean_grad=lambda tau: Q @ np.asarray(tau, dtype=float),
        hmean_hess=lambda tau: Q.copy(),
        domain_radius=domain_radius,
        kind="bump",
        params={"a": a, "Q": Q.tolist()},
    )


def _transport(jet, d):
    """Taylor-transport a jet by the boundary offset ``d`` (flat to the jet's order)."""
    h = (
        jet.h
        + np.einsum("ijk,k->ij", jet.h1, d)
        + 0.5 * np.einsum("ijkl,k,l->ij", jet.h2, d, d)
        + np.einsum("ijklm,k,l,m->ij", jet.h3, d, d, d) / 6.0
    )
    h1 = jet.h1 + np.einsum("ijkl,l->ijk", jet.h2, d) + 0.5 * np.einsum("ijklm,l,m->ijk", jet.h3, d, d)
    h2 = jet.h2 + np.einsum("ijklm,m->ijkl", jet.h3, d)
    Rtt = jet.Rtt + np.einsum("ijk,k->ij", jet.Rtt_k, d) + 0.5 * np.einsum("ijkl,k,l->ij", jet.Rtt_kl, d, d)
    Rtt_k = jet.Rtt_k + np.einsum("ijkl,l->ijk", jet.Rtt_kl, d)
    Rtt_t = jet.Rtt_t + np.einsum("ijk,k->ij", jet.Rtt_tk, d)
    Rb = jet.Rb + np.einsum("ikjlm,m->ikjl", jet.Rb_m, d) + 0.5 * np.einsum("ikjlmp,m,p->ikjl", jet.Rb_mp, d, d)
    Rb_m = jet.Rb_m + np.einsum("ikjlmp,p->ikjlm", jet.Rb_mp, d)
    return jet.replace(h=h, h1=h1, h2=h2, Rtt=Rtt, Rtt_k=Rtt_k, Rtt_t=Rtt_t, Rb=Rb, Rb_m=Rb_m)


def table_model(n, entries, domain_radius=0.25, tol=1e-9):
    """Model from user jets at one or more boundary offsets.

    Each entry is ``{"tau": [...], "jet": {field: array}}`` and may carry
    ``"hmean"`` / ``"hmean_grad"`` values, which must agree with the traces of
    ``h`` and ``h1``.  ``jet_at(tau)`` Taylor-transports the jet of the nearest
    entry.
    """
    if not entries:
        raise ValidationError("table model needs at least one entry")
    taus, jets = [], []
    for k, entry in enumerate(entries):
        tau = np.asarray(entry.get("tau", np.zeros(n)), dtype=float)
        if tau.shape != (n,):
            raise ValidationError(f"entry {k}: tau must have {n} components")
        try:
            jet = BoundaryJet.from_dict(n, entry.get("jet", {})).validate()
        except ValidationError as exc:
            raise ValidationError(f"entry {k}: {exc}") from None
        if "hmean" in entry and abs(entry["hmean"] - np.trace(jet.h)) > tol:
            raise ValidationError(f"entry {k}: hmean disagrees with trace of h")
        if "hmean_grad" in entry:
            g = np.einsum("jji->i", jet.h1)
            if np.max(np.abs(np.asarray(entry["hmean_grad"], dtype=float) - g)) > tol:
                raise ValidationError(f"entry {k}: hmean_grad disagrees with h_jj,i (gradient mismatch)")
        taus.append(tau)
        jets.append(jet)
    taus = np.array(taus)

    def jet_at(tau):
        tau = np.asarray(tau, dtype=float)
        k = int(np.argmin(np.linalg.norm(taus - tau, axis=1)))
        d = tau - taus[k]
        return jets[k] if not np.any(d) else _transport(jets[k], d)

    def grad(tau):
        return np.einsum("jji->i", jet_at(tau).h1)

    def hess(tau):
        H = np.einsum("jjil->il", jet_at(tau).h2)
        return 0.5 * (H + H.T)

    return MetricModel(
        n=n,
        jet_at=jet_at,
        hmean=lambda tau: float(np.trace(jet_at(tau).h)),
        hmean_grad=grad,
        hmean_hess=hess,
        domain_radius=domain_radius,
        kind="table",
        params={"entries": len(entries)},
    )


def make_model(spec):
    """Build a :class:`MetricModel` from a dict such as ``{"kind": "bump", "n": 2,
    "a": 1, "Q": [[1, 0], [0, 1]]}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    n = spec.pop("n", None)
    if n is None or int(n) < 1:
        raise ValidationError("model spec needs a positive dimension n")
    n = int(n)
    radius = spec.pop("domain_radius", 0.25)
    if kind == "euclidean":
        return euclidean_model(n, radius)
    if kind == "bump":
        return bump_model(n, spec.get("a", 1.0), spec.get("Q", np.eye(n)), radius)
    if kind == "table":
        return table_model(n, spec.get("entries", []), radius)
    raise ValidationError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# Test jets


def umbilic_jet(n, kappa, exact=False):
    """Jet whose only nonzero slot is ``h = kappa * I``."""
    one = Fraction(1) if exact else 1.0
    eye = np.array([[one if i == j else 0 * one for j in range(n)] for i in range(n)], dtype=object if exact else float)
    return BoundaryJet(n, h=eye * kappa, exact=exact)


def _kn(A, B):
    """Kulkarni-Nomizu product: an algebraic curvature tensor from two symmetric forms."""
    return (
        np.einsum("ij,kl->ikjl", A, B)
        + np.einsum("kl,ij->ikjl", A, B)
        - np.einsum("il,kj->ikjl", A, B)
        - np.einsum("kj,il->ikjl", A, B)
    )


def random_jet(n, rng, exact=False, scale=1.0, den=7):
    """Random jet satisfying every symmetry invariant.

    With ``exact=True`` all entries are small rationals with denominator ``den``.
    """
    if exact:

        def draw(shape):
            a = rng.integers(-den, den + 1, size=shape)
            return np.vectorize(lambda v: Fraction(int(v), den) * Fraction(scale), otypes=[object])(a)

    else:

        def draw(shape):
            return rng.uniform(-1.0, 1.0, size=shape) * scale

    def symij(shape):
        a = draw(shape)
        return (a + np.swapaxes(a, 0, 1)) * (Fraction(1, 2) if exact else 0.5)

    def curv(extra):
        out = None
        for idx in np.ndindex(*((n,) * extra)) if extra else [()]:
            R = _kn(symij((n, n)), symij((n, n)))
            if out is None:
                out = np.empty((n,) * 4 + (n,) * extra, dtype=R.dtype)
            out[(...,) + idx] = R
        return out

    return BoundaryJet(
        n,
        h=symij((n, n)),
        h1=symij((n,) * 3),
        h2=symij((n,) * 4),
        h3=symij((n,) * 5),
        Rtt=symij((n, n)),
        Rtt_k=symij((n,) * 3),
        Rtt_t=symij((n, n)),
        Rtt_kl=symij((n,) * 4),
        Rtt_tk=symij((n,) * 3),
        Rtt_tt=symij((n, n)),
        Rb=curv(0),
        Rb_m=curv(1),
        Rb_mp=curv(2),
        exact=exact,
    )


def volume_unit_ball(m):
    """Volume of the unit ball in R^m."""
    return math.pi ** (m / 2) / math.gamma(m / 2 + 1)
