"""Lyapunov-Schmidt reduction for free-boundary CMC hemispheres.

For fixed ``(r, tau)`` the graph ``phi`` in K-perp solves
``P_perp (H(r, tau, r phi) - n) = 0``; the kernel part gives the reduced map
``F(r, tau) = P(H - n) / r^2`` whose zero ``tau(r)`` centers the leaf.
Continuation in ``r`` assembles the foliation, which is then checked for
transversality and the free-boundary condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curvature import H_r_first_order, extend_homogeneous, mean_curvature, mean_curvature_at
from .errors import (
    ContinuationError,
    DomainError,
    GeometryError,
    InsufficientDataError,
    NondegeneracyError,
)
from .hemisphere import build_basis, kernel_moments, project, project_K, project_Kperp, solve_L
from .metric import MetricEvaluator

__all__ = [
    "SolverSettings",
    "SolverContext",
    "LeafSolution",
    "FoliationResult",
    "solve_kperp",
    "reduced_map",
    "solve_tau",
    "solve_leaf",
    "build_foliation",
    "verify_foliation",
    "tau_slope_fit",
    "r_grid",
]

TAU_FLOOR = 1e-14
HESS_COND_MAX = 1e10
X_CAP = 0.95


@dataclass
class SolverSettings:
    tol_perp: float = 1e-8
    tol_K: float = 1e-7
    max_iters: int = 40
    L_max: int = 8
    quadrature_order: int = 24
    tau_iters: int = 20
    tol_tau_step: float = 1e-9


class SolverContext:
    """Basis, quadrature and kernel moments shared by every leaf of a run."""

    def __init__(self, n, settings=None):
        self.n = n
        self.settings = settings or SolverSettings()
        self.basis, self.quad = build_basis(n, self.settings.L_max, self.settings.quadrature_order)
        self.moments = kernel_moments(n, self.quad)
        self.c_n = self.moments["c_n"]

    @classmethod
    def for_model(cls, model, settings=None, context=None):
        if context is not None:
            return context
        return cls(model.n, settings)


@dataclass(eq=False)
class LeafSolution:
    r: float
    tau: np.ndarray
    phi: object
    kperp_residual: float
    kernel_residual: float
    newton_iters: int
    converged: bool
    projection_residual: float = 0.0
    reduced: np.ndarray = None
    tau_iters: int = 0

    def record(self):
        return {
            "r": self.r,
            "tau": [float(v) for v in self.tau],
            "kperp_residual": self.kperp_residual,
            "kernel_residual": self.kernel_residual,
            "projection_residual": self.projection_residual,
            "newton_iters": self.newton_iters,
            "tau_iters": self.tau_iters,
            "converged": bool(self.converged),
        }


@dataclass(eq=False)
class FoliationResult:
    model: object
    leaves: list
    tau_slope_fit: float = float("nan")
    det_min: float = None
    free_boundary_max_angle: float = None
    flags: list = field(default_factory=list)
    context: object = None
    verification: dict = None

    @property
    def radii(self):
        return np.array([leaf.r for leaf in self.leaves])

    @property
    def taus(self):
        return np.array([leaf.tau for leaf in self.leaves])


# ---------------------------------------------------------------------------
# K-perp solve


def _kperp_start(jet, ctx):
    """``phi_0`` with ``L phi_0 + P_perp H_r(0, tau, 0) = 0``."""
    hr = H_r_first_order(jet, ctx.basis)
    return solve_L(project_Kperp(hr.function) * -1.0), hr.projection_residual


def _residual(jet, r, phi, ctx, evaluator):
    field_ = mean_curvature(jet, r, phi, r, ctx.basis, evaluator)
    g, res = project(field_.values - ctx.n, ctx.basis)
    return g, res


def solve_kperp(model, r, tau, phi_init=None, context=None, settings=None, jet=None):
    """Solve ``P_perp (H(r, tau, r phi) - n) = 0`` for ``phi`` in K-perp.

    Quasi-Newton with the frozen operator ``L``:
    ``phi <- phi - L^{-1} P_perp (H - n) / r``.  At ``r = 0`` the limit problem
    ``L phi + H_r(0, tau, 0) = 0`` is solved directly.

    Returns
    -------
    phi : SurfaceFunction
    diagnostics : dict
        ``kperp_residual``, ``kernel_residual`` (coefficient sup-norms of the
        projected residual), ``kernel`` (the vector ``P(H - n)``),
        ``projection_residual`` and ``iters``.
    """
    ctx = SolverContext.for_model(model, settings, context)
    st = ctx.settings
    if r < 0:
        raise DomainError("r must be non-negative")
    tau = np.asarray(tau, dtype=float)
    jet = jet if jet is not None else model.jet_at(tau)
    if r == 0:
        phi, pres = _kperp_start(jet, ctx)
        return phi, {
            "kperp_residual": 0.0,
            "kernel_residual": 0.0,
            "kernel": np.zeros(ctx.n),
            "projection_residual": pres,
            "iters": 1,
        }
    ev = MetricEvaluator(jet, r)
    phi = project_Kperp(phi_init) if phi_init is not None else ctx.basis.zero()
    history = []
    for it in range(st.max_iters + 1):
        try:
            g, pres = _residual(jet, r, phi, ctx, ev)
        except (DomainError, GeometryError) as exc:
            raise GeometryError(f"leaf at r={r} left the graph regime: {exc}") from None
        perp = project_Kperp(g)
        kperp = perp.sup_norm()
        history.append(kperp)
        if kperp <= st.tol_perp:
            k = project_K(g)
            return phi, {
                "kperp_residual": kperp,
                "kernel_residual": float(np.max(np.abs(k))),
                "kernel": k,
                "projection_residual": pres,
                "iters": it,
            }
        if it == st.max_iters or not math.isfinite(kperp):
            break
        phi = phi - solve_L(perp) / r
    raise ContinuationError(
        f"K-perp iteration at r={r} did not converge in {st.max_iters} steps "
        f"(residual {history[-1]:.3g}); try a smaller r-step",
        partial={"phi": phi, "history": history},
    )


def reduced_map(model, r, tau, phi_init=None, context=None, settings=None):
    """``F(r, tau) = P(H(r, tau, r phi(r, tau)) - n) / r^2``.

    At ``r = 0`` the limit ``-c_n grad(hmean)(tau)`` is returned with ``c_n``
    from the quadrature moments.  Returns ``(F, phi, diagnostics)``.
    """
    ctx = SolverContext.for_model(model, settings, context)
    tau = np.asarray(tau, dtype=float)
    phi, diag = solve_kperp(model, r, tau, phi_init, ctx)
    if r == 0:
        F = -ctx.c_n * np.asarray(model.hmean_grad(tau), dtype=float)
    else:
        F = diag["kernel"] / (r * r)
    return F, phi, diag


def _check_hessian(model, tau, ctx):
    Hs = np.asarray(model.hmean_hess(tau), dtype=float)
    J = -ctx.c_n * Hs
    cond = np.linalg.cond(J) if np.any(J) else math.inf
    if not math.isfinite(cond) or cond > HESS_COND_MAX:
        raise NondegeneracyError(
            f"Hessian of the boundary mean curvature is singular at tau={tau.tolist()} (condition {cond:.3g})"
        )
    return J, cond


def solve_tau(model, r, tau_init=None, phi_init=None, context=None, settings=None):
    """Newton iteration on the reduced map with Jacobian ``-c_n hess(hmean)``.

    Returns a converged :class:`LeafSolution` once ``|F| <= tol_K`` and the
    next Newton step is below ``tol_tau_step``.  When the starting point
    already satisfies both, ``tau`` is returned unchanged.
    """
    ctx = SolverContext.for_model(model, settings, context)
    st = ctx.settings
    tau = np.zeros(model.n) if tau_init is None else np.array(tau_init, dtype=float)
    J, cond = _check_hessian(model, tau, ctx)
    phi = phi_init
    total = 0
    for it in range(st.tau_iters + 1):
        F, phi, diag = reduced_map(model, r, tau, phi, ctx)
        total += diag["iters"]
        if not np.all(np.isfinite(F)):
            break
        J, cond = _check_hessian(model, tau, ctx)
        step = np.linalg.solve(J, F)
        if float(np.max(np.abs(F))) <= st.tol_K and float(np.max(np.abs(step))) <= st.tol_tau_step:
            return LeafSolution(
                r=float(r),
                tau=tau,
                phi=phi,
                kperp_residual=diag["kperp_residual"],
                kernel_residual=diag["kernel_residual"],
                newton_iters=total,
                converged=True,
                projection_residual=diag["projection_residual"],
                reduced=F,
                tau_iters=it,
            )
        if it == st.tau_iters:
            break
        tau = tau - step
        if np.linalg.norm(tau) > model.domain_radius:
            raise ContinuationError(f"tau left the model domain at r={r}: {tau.tolist()}")
    raise ContinuationError(f"tau iteration at r={r} did not converge (|F| = {np.max(np.abs(F)):.3g})")


def solve_leaf(model, r, tau=None, pin_tau=False, phi_init=None, context=None, settings=None):
    """One leaf; with ``pin_tau`` the center is held fixed and only ``phi`` is solved."""
    ctx = SolverContext.for_model(model, settings, context)
    if not pin_tau:
        return solve_tau(model, r, tau, phi_init, ctx)
    tau = np.zeros(model.n) if tau is None else np.asarray(tau, dtype=float)
    phi, diag = solve_kperp(model, r, tau, phi_init, ctx)
    return LeafSolution(
        r=float(r),
        tau=tau,
        phi=phi,
        kperp_residual=diag["kperp_residual"],
        kernel_residual=diag["kernel_residual"],
        newton_iters=diag["iters"],
        converged=True,
        projection_residual=diag["projection_residual"],
        reduced=diag["kernel"] / (r * r) if r > 0 else np.zeros(model.n),
    )


# ---------------------------------------------------------------------------
# Foliation


def r_grid(start, stop, count, spacing="geometric"):
    if count == 1:
        return np.array([float(start)])
    if spacing == "geometric":
        return np.geomspace(start, stop, count)
    return np.linspace(start, stop, count)


def tau_slope_fit(radii, taus, floor=TAU_FLOOR):
    """Least-squares slope of ``log |tau|`` against ``log r``.

    Returns ``(slope, flag)``.  When every ``|tau|`` is below ``floor`` the
    centers are identically zero, which is ``O(r^k)`` for every ``k``; the slope
    is then ``inf`` with flag ``"tau_identically_zero"``.
    """
    radii = np.asarray(radii, dtype=float)
    norms = np.linalg.norm(np.atleast_2d(taus), axis=1)
    keep = norms > floor
    if not np.any(keep):
        return math.inf, "tau_identically_zero"
    if np.count_nonzero(keep) < 2:
        return math.nan, "too_few_nonzero_tau"
    slope = np.polyfit(np.log(radii[keep]), np.log(norms[keep]), 1)[0]
    return float(slope), None


def build_foliation(model, radii, context=None, settings=None, pin_tau=False, verify=True, sample_density=15):
    """Continue leaves over the increasing grid ``radii``, warm-starting each leaf
    from the previous one.

    Raises
    ------
    ContinuationError
        With ``partial`` set to the :class:`FoliationResult` built so far.
    """
    ctx = SolverContext.for_model(model, settings, context)
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or len(radii) == 0 or np.any(np.diff(radii) <= 0) or radii[0] < 0:
        raise DomainError("r grid must be non-negative and strictly increasing")
    if radii[-1] > model.domain_radius:
        raise DomainError(f"r grid exceeds the model radius {model.domain_radius}")
    if not pin_tau:
        _check_hessian(model, np.zeros(model.n), ctx)
    result = FoliationResult(model=model, leaves=[], context=ctx)
    tau, phi = np.zeros(model.n), None
    for r in radii:
        try:
            leaf = solve_leaf(model, r, tau, pin_tau, phi, ctx)
        except ContinuationError as exc:
            result.flags.append("partial")
            raise ContinuationError(f"continuation stopped at r={r}: {exc}", partial=result) from None
        result.leaves.append(leaf)
        tau, phi = leaf.tau, leaf.phi
    result.tau_slope_fit, flag = tau_slope_fit(result.radii, result.taus)
    if flag:
        result.flags.append(flag)
    if verify and len(result.leaves) >= 3:
        verify_foliation(result, sample_density)
    return result


def _disk_samples(n, density, cap=X_CAP):
    axis = np.linspace(-cap, cap, density)
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return grid[np.linalg.norm(grid, axis=1) <= cap + 1e-12]


def _equator_samples(n, density):
    axis = np.linspace(-1.0, 1.0, density)
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"), axis=-1).reshape(-1, n)
    norms = np.linalg.norm(grid, axis=1)
    dirs = grid[norms > 0.5] / norms[norms > 0.5, None]
    return np.unique(np.round(dirs, 14), axis=0)


def _leaf_profile(leaf, xs):
    """``phi(x, t(x))`` and its x-gradient along the upper hemisphere."""
    t = np.sqrt(1.0 - np.sum(xs**2, axis=1))
    Y = np.column_stack([xs, t])
    vals, grad = leaf.phi.basis.evaluate(Y, derivatives=1)
    v = vals @ leaf.phi.coeffs
    g = grad @ leaf.phi.coeffs
    dx = g[:, :-1] - g[:, -1:] * xs / t[:, None]
    return v, dx, t


def verify_foliation(result, sample_density=15):
    """Transversality and free-boundary diagnostics of a foliation.

    The leaves are placed in the chart centered at the base point by
    ``Upsilon(r, x) = (tau(r) + rho x, rho t(x))`` with
    ``rho = r (1 + r phi_r(x, t(x)))`` (first-order composition of the center
    offset).  ``r``-derivatives are second-order differences across the leaf
    grid; ``x``-derivatives are exact.  The determinant is reported with the
    orientation sign ``(-1)^n``, so the flat value is ``r^n / t(x)``.
    """
    leaves = result.leaves
    if len(leaves) < 3:
        raise InsufficientDataError(f"verification needs at least 3 leaves, got {len(leaves)}")
    n = result.model.n
    xs = _disk_samples(n, sample_density)
    radii = np.array([leaf.r for leaf in leaves])
    taus = np.array([leaf.tau for leaf in leaves])
    prof = [_leaf_profile(leaf, xs) for leaf in leaves]
    t = prof[0][2]
    rho = np.array([r * (1 + r * v) for r, (v, _, _) in zip(radii, prof)])  # (R, M)
    rho_x = np.array([r * r * dx for r, (_, dx, _) in zip(radii, prof)])  # (R, M, n)
    rho_r = np.gradient(rho, radii, axis=0)
    tau_r = np.gradient(taus, radii, axis=0)
    sign = (-1) ** n
    dets = np.empty_like(rho)
    for k in range(len(radii)):
        D = np.zeros((len(xs), n + 1, n + 1))
        D[:, :n, 0] = tau_r[k] + rho_r[k][:, None] * xs
        D[:, n, 0] = rho_r[k] * t
        for i in range(n):
            D[:, :n, i + 1] = rho_x[k][:, i : i + 1] * xs
            D[:, i, i + 1] += rho[k]
            D[:, n, i + 1] = rho_x[k][:, i] * t - rho[k] * xs[:, i] / t
        dets[k] = sign * np.linalg.det(D)
    scaled = dets * t[None, :] / radii[:, None] ** n
    angle = 0.0
    eq = _equator_samples(n, sample_density)
    Yeq = np.column_stack([eq, np.zeros(len(eq))])
    for leaf in leaves:
        angle = max(angle, _boundary_angle(result.model.jet_at(leaf.tau), leaf, Yeq))
    result.det_min = float(np.min(dets))
    result.free_boundary_max_angle = float(angle)
    report = {
        "det_min": result.det_min,
        "det_scaled_min": float(np.min(scaled)),
        "det_scaled_max": float(np.max(scaled)),
        "free_boundary_max_angle": result.free_boundary_max_angle,
        "tau_slope_fit": result.tau_slope_fit,
        "samples": int(len(xs)),
        "equator_samples": int(len(eq)),
        "x_cap": X_CAP,
        "flags": list(result.flags),
    }
    result.verification = report
    return report


def _boundary_angle(jet, leaf, Yeq):
    """Largest angle between the conormal of the leaf and ``-T`` on the equator.

    The leaf is the zero set of ``F``; it meets ``{t = 0}`` orthogonally iff
    ``dF`` has no ``t`` component there (``g^{tt} = 1``, ``g^{ti} = 0``), and
    the deviation angle is ``arcsin(|F_t| / |dF|_g)``.
    """
    r = leaf.r
    s = r
    phi = leaf.phi
    radial = 1.0 + s * (phi.basis.evaluate(Yeq) @ phi.coeffs)
    X = radial[:, None] * Yeq
    pv, pg, _ = extend_homogeneous(phi, X, derivatives=1)
    Fg = X - (s * (1 + s * pv))[:, None] * pg
    G, _ = MetricEvaluator(jet, r).evaluate(X)
    norm = np.sqrt(np.einsum("ma,mab,mb->m", Fg, G, Fg))
    return float(np.max(np.arcsin(np.clip(np.abs(Fg[:, -1]) / norm, 0.0, 1.0))))


def leaf_points(leaf, xs):
    """Chart coordinates ``Upsilon(r, x)`` of one leaf at disk samples ``xs``."""
    v, _, t = _leaf_profile(leaf, xs)
    rho = leaf.r * (1 + leaf.r * v)
    return np.column_stack([leaf.tau[None, :] + rho[:, None] * xs, rho * t])


def leaf_mean_curvature(model, leaf, context):
    """Rescaled mean curvature of a solved leaf at the quadrature nodes."""
    jet = model.jet_at(leaf.tau)
    return mean_curvature_at(jet, leaf.r, leaf.phi, leaf.r, context.basis.quad.nodes)
