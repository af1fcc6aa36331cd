"""Mean curvature of perturbed hemispheres in the rescaled Fermi metric.

The leaf ``S_phi = {(1 + s phi(y)) y : y in S^n_+}`` is the zero set of

    F = rho - s phibar - (s^2 / 2) phibar^2,     rho = |X|^2 / 2,

where ``phibar`` is the degree-0 homogeneous extension of ``phi``.  Its inward
mean curvature in the metric ``g^{ab}(r X)`` is

    H = Delta_g F / Psi - g(grad F, grad Psi) / Psi^2,    Psi = |dF|_g,

which equals ``n / (1 + c)`` on the Euclidean sphere of radius ``1 + c``.

Closed-form expansions in ``r`` and the derivatives in the graph direction
are provided next to finite-difference evaluators that check them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GeometryError, NumericalError
from .hemisphere import SurfaceFunction, project
from .metric import MetricEvaluator

__all__ = [
    "CurvatureField",
    "extend_homogeneous",
    "mean_curvature",
    "H_expansion_r2",
    "H_r_first_order",
    "H_phi_linearized",
    "H_phi_r_mixed",
    "H_phi_r_literature",
    "H_phi_phi",
    "H_phi_phi_fd",
    "EMBEDDING_DELTA",
]

EMBEDDING_DELTA = 0.5
FD_STEPS = (1e-4, 5e-5)
R_STEPS = (1e-3, 5e-4)


@dataclass(eq=False)
class CurvatureField:
    """Node values of a curvature quantity together with their basis projection."""

    values: np.ndarray
    function: SurfaceFunction
    projection_residual: float
    r: float = 0.0
    s: float = 0.0

    @property
    def basis(self):
        return self.function.basis


def _field(values, basis, r=0.0, s=0.0):
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite curvature values")
    fn, res = project(values, basis)
    return CurvatureField(values, fn, res, r, s)


def extend_homogeneous(phi, points, derivatives=2):
    """Value, gradient and Hessian of ``phibar(X) = phi(X / |X|)``.

    Each basis member is a homogeneous polynomial ``p`` of degree ``d``, so
    ``phibar = sum_k c_k p_k(X) |X|^{-d_k}`` and the partials follow from the
    product rule.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    rho2 = np.einsum("ma,ma->m", X, X)
    if np.any(rho2 == 0):
        raise DomainError("the homogeneous extension is undefined at the origin")
    basis = phi.basis
    vals, grad, hess = basis.evaluate(X, derivatives=2)
    M, nv = X.shape
    out_v = np.zeros(M)
    out_g = np.zeros((M, nv))
    out_h = np.zeros((M, nv, nv))
    eye = np.eye(nv)
    for d in np.unique(basis.degrees):
        mask = basis.degrees == d
        c = phi.coeffs[mask]
        if not np.any(c):
            continue
        p = vals[:, mask] @ c
        gp = grad[:, :, mask] @ c
        out_v += p * rho2 ** (-d / 2)
        if derivatives == 0:
            continue
        a = rho2 ** (-d / 2)
        b = d * rho2 ** (-d / 2 - 1)
        out_g += gp * a[:, None] - (b * p)[:, None] * X
        if derivatives < 2:
            continue
        hp = hess[:, :, :, mask] @ c
        cross = np.einsum("ma,mb->mab", gp, X)
        out_h += (
            hp * a[:, None, None]
            - b[:, None, None] * (cross + np.swapaxes(cross, 1, 2))
            - (b * p)[:, None, None] * eye
            + (d * (d + 2) * p * rho2 ** (-d / 2 - 2))[:, None, None] * np.einsum("ma,mb->mab", X, X)
        )
    return out_v, out_g, out_h


def _laplacian(G, dG, dlog, grad, hess):
    div = np.einsum("maab->mb", dG) + np.einsum("mab,ma->mb", G, dlog)
    return np.einsum("mab,mab->m", G, hess) + np.einsum("mb,mb->m", div, grad)


def mean_curvature_at(jet, r, phi, s, base_points, evaluator=None, delta=EMBEDDING_DELTA, check_product=False):
    """Mean curvature of ``S_{s phi}`` at the graph points over ``base_points``."""
    Y = np.atleast_2d(np.asarray(base_points, dtype=float))
    M, nv = Y.shape
    if phi is None or s == 0:
        pv = np.zeros(M)
        pg = np.zeros((M, nv))
        ph = np.zeros((M, nv, nv))
        X = Y
    else:
        radial = 1.0 + s * (phi.basis.evaluate(Y) @ phi.coeffs)
        if np.max(np.abs(radial - 1.0)) > delta:
            raise DomainError(f"graph perturbation exceeds the embedding bound {delta}")
        X = radial[:, None] * Y
        pv, pg, ph = extend_homogeneous(phi, X)
    ev = evaluator or MetricEvaluator(jet, r)
    G, dG, dlog = ev.geometry(X)
    eye = np.broadcast_to(np.eye(nv), (M, nv, nv))
    # Delta F = Delta rho - s Delta phibar - s^2/2 Delta phibar^2
    lap_rho = _laplacian(G, dG, dlog, X, eye)
    lap_phi = _laplacian(G, dG, dlog, pg, ph)
    sq_grad = 2 * pv[:, None] * pg
    sq_hess = 2 * pv[:, None, None] * ph + 2 * np.einsum("ma,mb->mab", pg, pg)
    lap_sq = _laplacian(G, dG, dlog, sq_grad, sq_hess)
    lapF = lap_rho - s * lap_phi - 0.5 * s * s * lap_sq
    Fg = X - (s * (1 + s * pv))[:, None] * pg
    FH = eye - (s * (1 + s * pv))[:, None, None] * ph - s * s * np.einsum("ma,mb->mab", pg, pg)
    if check_product:
        alt = _laplacian(G, dG, dlog, Fg, FH)
        if np.max(np.abs(alt - lapF)) > 1e-9 * max(1.0, np.max(np.abs(lapF))):
            raise NumericalError("product-rule Laplacian disagrees with the expanded form")
    GF = np.einsum("mab,mb->ma", G, Fg)
    psi2 = np.einsum("ma,ma->m", Fg, GF)
    if np.any(psi2 <= 1e-12):
        raise GeometryError("degenerate graph: |dF| vanishes")
    psi = np.sqrt(psi2)
    dpsi = (np.einsum("ma,mac->mc", GF, FH) + 0.5 * np.einsum("ma,mcab,mb->mc", Fg, dG, Fg)) / psi[:, None]
    return lapF / psi - np.einsum("ma,ma->m", GF, dpsi) / psi2


def mean_curvature(jet, r, phi, s, basis=None, evaluator=None, delta=EMBEDDING_DELTA):
    """Mean curvature ``H(r, tau, s phi)`` at the quadrature nodes.

    Parameters
    ----------
    jet : BoundaryJet
        Jet at the center ``c(tau)``.
    r : float
        Rescaling radius (``r = 0`` gives the Euclidean metric).
    phi : SurfaceFunction or None
    s : float
        Amplitude of the graph; the leaf is ``(1 + s phi) y``.
    """
    if r < 0:
        raise DomainError("r must be non-negative")
    basis = basis if basis is not None else phi.basis
    vals = mean_curvature_at(jet, r, phi, s, basis.quad.nodes, evaluator, delta)
    return _field(vals, basis, r, s)


# ---------------------------------------------------------------------------
# Expansions in r


def _expansion_terms(jet, Y):
    n = jet.n
    x, t = Y[:, :n], Y[:, n]
    h = np.asarray(jet.h, dtype=float)
    h1 = np.asarray(jet.h1, dtype=float)
    Rtt = np.asarray(jet.Rtt, dtype=float)
    Rb = np.asarray(jet.Rb, dtype=float)
    hxx = np.einsum("ij,mi,mj->m", h, x, x)
    first = np.trace(h) * t - (n + 3) * hxx * t
    terms = {
        "hh_xxxx": hxx**2 * t**2,
        "h1_xxx": np.einsum("ijk,mi,mj,mk->m", h1, x, x, x) * t,
        "Rtt_xx": np.einsum("ij,mi,mj->m", Rtt, x, x) * t**2,
        "hh_xx": np.einsum("ij,mi,mj->m", h @ h, x, x) * t**2,
        "hhtr_xx": np.trace(h) * hxx * t**2,
        "Ric_xx": np.einsum("kikj,mi,mj->m", Rb, x, x),
        "divh_x": np.einsum("jij,mi->m", h1, x) * t,
        "hsq": np.sum(h * h) * t**2,
    }
    return first, terms


# coefficients of the r^2 bracket; ``literature`` selects the alternative set
def _expansion_coeffs(n, literature=False):
    return {
        "hh_xxxx": (3 * n + 2) / 2 if literature else (3 * n + 18) / 2,
        "h1_xxx": -(n + 4),
        "Rtt_xx": -(n + 4) / 2,
        "hh_xx": -(3 * n + 20) / 2,
        "hhtr_xx": -1.0,
        "Ric_xx": 1 / 3 if literature else -1 / 3,
        "divh_x": 2.0,
        "hsq": 2.0,
    }


def H_expansion_values(jet, r, points, literature=False):
    Y = np.atleast_2d(points)
    first, terms = _expansion_terms(jet, Y)
    coeffs = _expansion_coeffs(jet.n, literature)
    second = sum(coeffs[k] * v for k, v in terms.items())
    return jet.n + r * first + r * r * second


def H_expansion_r2(jet, r, basis, literature=False):
    """Second-order expansion of ``H(r, tau, 0)`` at the nodes.

    ``H = n + r [h_ii t - (n+3) h_ij t x_i x_j] + r^2 [...] + O(r^3)``.  The
    default coefficients are the ones that agree with a direct evaluation of
    the mean curvature; ``literature=True`` uses an alternative set in
    circulation, ``(3n + 2)/2`` for ``h_ij h_kl t^2 x_i x_j x_k x_l`` and
    ``+1/3`` for the boundary Ricci term, which leaves an ``O(r^2)`` error.
    """
    return _field(H_expansion_values(jet, r, basis.quad.nodes, literature), basis, r, 0.0)


def H_r_first_order(jet, basis):
    """``H_r(0, tau, 0) = h_ii t - (n+3) h_ij t x_i x_j`` as a curvature field."""
    first, _ = _expansion_terms(jet, basis.quad.nodes)
    return _field(first, basis)


# ---------------------------------------------------------------------------
# Derivatives in the graph direction


def _richardson(d1, d2, order=2):
    """Combine estimates with steps ``h`` and ``h/2`` of error ``O(h^order)``."""
    f = 2**order
    return (f * d2 - d1) / (f - 1)


def H_phi_linearized(jet, r, phi0, psi, steps=FD_STEPS, evaluator=None):
    """Derivative of ``H(r, tau, phi)`` at ``phi0`` in the direction ``psi``.

    Central differences at two steps combined by Richardson extrapolation.  At
    ``(r, phi0) = (0, 0)`` the result is ``-(Delta + n) psi``.
    """
    basis = psi.basis
    ev = evaluator or MetricEvaluator(jet, r)
    base = phi0 if phi0 is not None else basis.zero()
    est = []
    for eps in steps:
        hp = mean_curvature_at(jet, r, base + psi * eps, 1.0, basis.quad.nodes, ev)
        hm = mean_curvature_at(jet, r, base - psi * eps, 1.0, basis.quad.nodes, ev)
        est.append((hp - hm) / (2 * eps))
    vals = _richardson(*est)
    return _field(vals, basis, r, 1.0)


def _d_s(jet, r, psi, eps):
    basis = psi.basis
    ev = MetricEvaluator(jet, r)
    hp = mean_curvature_at(jet, r, psi, eps, basis.quad.nodes, ev)
    hm = mean_curvature_at(jet, r, psi, -eps, basis.quad.nodes, ev)
    return (hp - hm) / (2 * eps)


def H_phi_r_mixed(jet, psi, r_steps=R_STEPS, eps=FD_STEPS[0]):
    """Mixed derivative ``d_r d_s H(r, tau, s psi)`` at ``r = s = 0``.

    Central in ``s``; one-sided three-point in ``r`` (the rescaled metric is
    only defined for ``r >= 0``), Richardson-extrapolated over ``r_steps``.
    """
    d0 = _d_s(jet, 0.0, psi, eps)
    est = []
    for hr in r_steps:
        d1 = _d_s(jet, hr, psi, eps)
        d2 = _d_s(jet, 2 * hr, psi, eps)
        est.append((-3 * d0 + 4 * d1 - d2) / (2 * hr))
    return _field(_richardson(*est), psi.basis)


def H_phi_r_literature(jet, psi):
    """A closed form in circulation for ``H_{phi r}(0, tau, 0) psi`` (diagnostic only).

    One term of that formula is malformed (a bare ``partial t`` in
    front of ``h_ij x^i x^j``); it is read here as a factor ``t``.
    """
    basis = psi.basis
    Y = basis.quad.nodes
    n = jet.n
    x, t = Y[:, :n], Y[:, n]
    h = np.asarray(jet.h, dtype=float)
    v, g, H = extend_homogeneous(psi, Y)
    hx = x @ h
    hxx = np.einsum("mi,mi->m", hx, x)
    lap = basis.evaluate(Y) @ (basis.eigenvalues * psi.coeffs)
    vals = (
        2 * np.einsum("mi,mi->m", g[:, :n], hx) * (t**3 + t**2 + n * t)
        - 2 * np.einsum("mij,ij->m", H[:, :n, :n], h) * t
        + g[:, n] * (np.trace(h) + t * hxx)
        + (lap + 3 * v) * hxx * t
        - v * hxx * t**2
    )
    return _field(vals, basis)


def H_phi_phi(psi, literature=False):
    """Second variation ``d^2/ds^2 H(0, tau, s psi)`` at ``s = 0``.

    ``2 n psi^2 + 4 psi Delta psi - (n - 2) |grad phibar|^2``.  With
    ``literature=True`` the ``psi Delta psi`` term is dropped, as in a variant
    in circulation; that version disagrees with finite differences except on constants.
    """
    basis = psi.basis
    Y = basis.quad.nodes
    v, g, _ = extend_homogeneous(psi, Y)
    n = basis.n
    vals = 2 * n * v**2 - (n - 2) * np.einsum("ma,ma->m", g, g)
    if not literature:
        lap = basis.evaluate(Y) @ (basis.eigenvalues * psi.coeffs)
        vals = vals + 4 * v * lap
    return _field(vals, basis)


def H_phi_phi_fd(jet, psi, steps=(2e-3, 1e-3)):
    """Second ``s``-derivative of ``H(0, tau, s psi)`` at ``s = 0`` by central differences."""
    basis = psi.basis
    ev = MetricEvaluator(jet, 0.0)
    h0 = mean_curvature_at(jet, 0.0, None, 0.0, basis.quad.nodes, ev)
    est = []
    for eps in steps:
        hp = mean_curvature_at(jet, 0.0, psi, eps, basis.quad.nodes, ev)
        hm = mean_curvature_at(jet, 0.0, psi, -eps, basis.quad.nodes, ev)
        est.append((hp - 2 * h0 + hm) / eps**2)
    return _field(_richardson(*est), basis)
