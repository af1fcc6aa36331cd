import math

import numpy as np
import pytest

from cmcfoliate.curvature import mean_curvature
from cmcfoliate.errors import InsufficientDataError, NondegeneracyError
from cmcfoliate.hemisphere import project, project_Kperp, solve_L
from cmcfoliate.metric import bump_model, euclidean_model, table_model
from cmcfoliate.solver import (
    SolverContext,
    SolverSettings,
    build_foliation,
    r_grid,
    reduced_map,
    solve_kperp,
    solve_leaf,
    solve_tau,
    tau_slope_fit,
    verify_foliation,
)


def h3_table_model():
    """Umbilic-type boundary with hmean = 1 + |tau|^2/2 + a cubic term, so the
    center drifts at second order in r."""
    d = np.eye(2)
    S3 = np.zeros((2, 2, 2))
    S3[0, 0, 0] = 1.0
    S3[0, 1, 1] = S3[1, 0, 1] = S3[1, 1, 0] = 0.5
    entry = {
        "tau": [0, 0],
        "jet": {
            "h": (0.5 * d).tolist(),
            "h2": (np.einsum("ij,kl->ijkl", d, d) / 2).tolist(),
            "h3": (np.einsum("ij,klm->ijklm", d, S3) / 2).tolist(),
        },
    }
    return table_model(2, [entry])


@pytest.mark.parametrize("r", [0.0, 0.05, 0.2])
def test_euclidean_leaf_is_hemisphere(ctx2, r):
    phi, diag = solve_kperp(euclidean_model(2), r, np.zeros(2), context=ctx2)
    assert phi.norm() == 0.0
    assert diag["kperp_residual"] <= 1e-10
    if r > 0:
        assert diag["iters"] == 0


def test_bump_r0_is_linear_solve(ctx2):
    m = bump_model(2, 1, np.eye(2))
    phi0, _ = solve_kperp(m, 0.0, np.zeros(2), context=ctx2)
    # oracle: H_r from a finite difference of the mean curvature in r
    jet = m.jet_at(np.zeros(2))
    h = 1e-4
    H1 = mean_curvature(jet, h, None, 0, ctx2.basis).values
    H2 = mean_curvature(jet, 2 * h, None, 0, ctx2.basis).values
    hr, _ = project((-3 * 2 + 4 * H1 - H2) / (2 * h), ctx2.basis)
    oracle = solve_L(project_Kperp(hr) * -1.0)
    assert np.max(np.abs(phi0.coeffs - oracle.coeffs)) < 1e-6
    assert phi0.norm() == pytest.approx(0.2368536569489426, rel=1e-10)


def test_bump_leaf_converges_and_tracks_phi0(ctx2):
    m = bump_model(2, 1, np.eye(2))
    phi0, _ = solve_kperp(m, 0.0, np.zeros(2), context=ctx2)
    gaps = []
    for r in (0.05, 0.025):
        phi, diag = solve_kperp(m, r, np.zeros(2), context=ctx2)
        assert diag["kperp_residual"] <= 1e-8
        assert not np.any(phi.coeffs[ctx2.basis.kernel_ids])
        gaps.append((phi - phi0).norm())
    assert gaps[0] / gaps[1] == pytest.approx(2.0, rel=0.1)


def test_reduced_map_leading_order(ctx2):
    assert np.all(reduced_map(euclidean_model(2), 0.1, np.zeros(2), context=ctx2)[0] == 0)
    m = bump_model(2, 1, np.diag([2.0, -1.0]))
    tau = np.array([0.05, 0.02])
    F0, _, _ = reduced_map(m, 0.0, tau, context=ctx2)
    assert F0 == pytest.approx(-0.375 * np.array([0.1, -0.02]), abs=1e-14)
    radii = np.array([0.1, 0.05, 0.025, 0.0125])
    errs = [np.max(np.abs(reduced_map(m, r, tau, context=ctx2)[0] - F0)) for r in radii]
    assert np.polyfit(np.log(radii), np.log(errs), 1)[0] >= 0.9


def test_nondegeneracy_guard(ctx2):
    with pytest.raises(NondegeneracyError):
        solve_tau(euclidean_model(2), 0.05, context=ctx2)
    with pytest.raises(NondegeneracyError):
        build_foliation(euclidean_model(2), [0.05, 0.1], context=ctx2)


def test_solve_tau(ctx2):
    leaf = solve_tau(bump_model(2, 1, np.eye(2)), 0.0, context=ctx2)
    assert np.all(leaf.tau == 0) and leaf.tau_iters == 0
    m = bump_model(2, 1, np.diag([2.0, -1.0]))
    leaf = solve_tau(m, 0.05, [0.01, 0.01], context=ctx2)
    assert np.max(np.abs(leaf.reduced)) <= 1e-7
    assert np.linalg.norm(leaf.tau) < 1e-6


def test_euclidean_pinned_foliation(ctx2):
    res = build_foliation(euclidean_model(2), r_grid(0.02, 0.2, 4), context=ctx2, pin_tau=True)
    assert all(leaf.phi.norm() == 0 for leaf in res.leaves)
    rep = res.verification
    # flat determinant is r^n / t(x); the scaled value is 1
    assert rep["det_scaled_min"] == pytest.approx(1.0, abs=1e-12)
    assert rep["det_scaled_max"] == pytest.approx(1.0, abs=1e-12)
    assert res.free_boundary_max_angle <= 1e-8


def test_bump_foliation_tau_identically_zero(ctx2):
    res = build_foliation(bump_model(2, 1, np.eye(2)), r_grid(0.02, 0.2, 5), context=ctx2)
    assert res.tau_slope_fit == math.inf and "tau_identically_zero" in res.flags
    assert res.det_min > 0


def test_h3_model_center_drifts_quadratically(ctx2):
    res = build_foliation(h3_table_model(), r_grid(0.02, 0.2, 6), context=ctx2)
    assert 1.8 <= res.tau_slope_fit <= 2.2
    assert res.det_min > 0
    # warm-start consistency: solve the last leaf from scratch
    last = res.leaves[-1]
    fresh = solve_leaf(h3_table_model(), last.r, context=ctx2)
    assert np.max(np.abs(fresh.tau - last.tau)) < 1e-7
    assert np.max(np.abs(fresh.phi.coeffs - last.phi.coeffs)) < 1e-7


def test_three_dimensional_smoke():
    ctx = SolverContext(3, SolverSettings(L_max=4, quadrature_order=12))
    res = build_foliation(bump_model(3, 1, np.diag([1.0, 1.0, 2.0])), [0.05, 0.1, 0.15], context=ctx)
    assert all(leaf.converged for leaf in res.leaves)
    assert res.det_min > 0


def test_verify_needs_three_leaves(ctx2):
    res = build_foliation(bump_model(2, 1, np.eye(2)), [0.05, 0.1], context=ctx2)
    assert res.det_min is None
    with pytest.raises(InsufficientDataError):
        verify_foliation(res)


def test_slope_fit_helper():
    r = np.array([0.1, 0.2, 0.4])
    assert tau_slope_fit(r, np.column_stack([3 * r**2, 0 * r]))[0] == pytest.approx(2.0)
    assert tau_slope_fit(r, np.zeros((3, 2))) == (math.inf, "tau_identically_zero")
