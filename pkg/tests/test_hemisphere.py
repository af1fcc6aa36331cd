import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cmcfoliate.errors import ConfigError, SolvabilityError
from cmcfoliate.hemisphere import (
    apply_L,
    build_basis,
    build_quadrature,
    integrate,
    kernel_moments,
    project,
    project_K,
    project_Kperp,
    solve_L,
    sphere_area,
)


def hemisphere_monomial(alpha, beta):
    """Exact integral of x^alpha t^beta over the upper unit hemisphere."""
    if any(a % 2 for a in alpha):
        return 0.0
    n = len(alpha)
    num = math.prod(math.gamma((a + 1) / 2) for a in alpha) * math.gamma((beta + 1) / 2)
    return num / math.gamma((sum(alpha) + beta + n + 1) / 2)


@pytest.mark.parametrize("n", [2, 3])
def test_area(n):
    q = build_quadrature(n, 10)
    assert q.weights.sum() == pytest.approx(sphere_area(n) / 2, rel=1e-14)
    assert np.allclose(np.linalg.norm(q.nodes, axis=1), 1.0)
    assert np.all(q.nodes[:, -1] >= 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=2, max_size=2), st.integers(0, 6))
def test_quadrature_exact_on_monomials(alpha, beta):
    assume(sum(alpha) + beta <= 12)
    q = build_quadrature(2, 12)
    vals = np.prod(q.nodes[:, :2] ** np.array(alpha), axis=1) * q.nodes[:, 2] ** beta
    assert integrate(vals, q) == pytest.approx(hemisphere_monomial(alpha, beta), abs=1e-13)


def test_quadrature_odd_dimension():
    q = build_quadrature(3, 10)
    vals = q.nodes[:, 0] ** 2 * q.nodes[:, 3] ** 3
    assert integrate(vals, q) == pytest.approx(hemisphere_monomial([2, 0, 0], 3), abs=1e-13)


def test_basis_sizes_and_orthonormality(basis2):
    # even-in-t harmonics of degree k in three variables: k + 1 of them
    assert basis2.size == sum(k + 1 for k in range(7))
    assert np.allclose(basis2.gram(), np.eye(basis2.size), atol=1e-12)
    assert list(basis2.kernel_ids) == [1, 2]
    assert basis2.kernel_norm == pytest.approx(basis2.kernel_norm_quadrature, rel=1e-13)


def test_low_quadrature_is_rejected():
    with pytest.raises(ConfigError):
        build_basis(2, L_max=8, quadrature_order=12)


def test_moments_frozen():
    m = kernel_moments(2, build_quadrature(2, 16))
    assert m["int_x1x1"] == pytest.approx(2 * math.pi / 3, abs=1e-13)
    assert m["c_n"] == pytest.approx(3 / 8, abs=1e-14)
    assert m["P_txxx_coeff"] == pytest.approx(1 / 16, abs=1e-14)
    # the closed form for P(t x^1) is half the quadrature value
    assert m["closed_form"]["P_tx"] == pytest.approx(m["P_tx"] / 2, rel=1e-13)
    assert max(map(abs, m["P_t"])) < 1e-14 and m["P_txx_max"] < 1e-14
    m3 = kernel_moments(3, build_quadrature(3, 12))
    assert m3["c_n"] == pytest.approx(0.33953054526271004, rel=1e-12)
    assert m3["c_n"] == pytest.approx(m3["closed_form"]["c_n"], rel=1e-12)


def test_projection_roundtrip(basis2, rng):
    f = basis2.function(rng.normal(size=basis2.size))
    g, res = project(f.node_values(), basis2)
    assert np.allclose(g.coeffs, f.coeffs, atol=1e-12) and res < 1e-12


def test_kernel_projection(basis2):
    x1 = basis2.coordinate(0)
    k = project_K(x1)
    assert k == pytest.approx([1.0, 0.0], abs=1e-13)
    assert np.allclose(project_K(x1.node_values(), basis2), k, atol=1e-13)
    assert project_Kperp(x1).norm() == 0.0


def test_solve_L_inverts_on_kperp(basis2, rng):
    f = project_Kperp(basis2.function(rng.normal(size=basis2.size)))
    phi = solve_L(f)
    assert np.allclose(apply_L(phi).coeffs, f.coeffs, atol=1e-13)
    assert not np.any(phi.coeffs[basis2.kernel_ids])


def test_solve_L_rejects_kernel_component(basis2):
    with pytest.raises(SolvabilityError) as info:
        solve_L(basis2.coordinate(1))
    assert info.value.kernel_component[1] == pytest.approx(1.0)


def test_kernel_maps_to_zero(basis2):
    assert np.all(apply_L(basis2.coordinate(0)).coeffs == 0)
