import time
from fractions import Fraction

import numpy as np
import pytest

from cmcfoliate.errors import DomainError, NondegeneracyError, ValidationError
from cmcfoliate.metric import (
    BoundaryJet,
    MetricEvaluator,
    ambient_laplacian,
    bump_model,
    direct_metric_series,
    euclidean_model,
    inverse_metric_series,
    make_model,
    random_jet,
    rescaled_inverse_metric,
    table_model,
    umbilic_jet,
)
from cmcfoliate.series import matrix_series_invert


def _t_coeffs(s, n):
    return [s[(0,) * n + (k,)] for k in range(5)]


def test_umbilic_inverse_metric_is_geometric():
    # g_ij = (1 - kappa t)^2 delta, so g^ij = sum (k+1) kappa^k t^k
    jet = umbilic_jet(2, Fraction(1, 2), exact=True)
    G = inverse_metric_series(jet)
    assert _t_coeffs(G[0, 0], 2) == [1, 1, Fraction(3, 4), Fraction(1, 2), Fraction(5, 16)]
    assert G[0, 1].is_zero
    g = direct_metric_series(jet)
    assert _t_coeffs(g[1, 1], 2) == [1, -1, Fraction(1, 4), 0, 0]


def test_normal_part_is_identity():
    jet = random_jet(3, np.random.default_rng(0), exact=True)
    G = inverse_metric_series(jet)
    assert G[3, 3] == 1
    assert all(G[i, 3].is_zero for i in range(3))


def test_boundary_curvature_term_frozen():
    # only Rb: g^ij = delta + 1/3 Rb_ikjl x_k x_l + ...
    A = np.diag([1, 2]).astype(object) * Fraction(1)
    B = np.eye(2, dtype=object) * Fraction(1)
    from cmcfoliate.metric import _kn

    Rb = _kn(A, B)
    jet = BoundaryJet(2, Rb=Rb, exact=True).validate()
    G = inverse_metric_series(jet)
    # Rb_{0101} = A00 B11 + A11 B00 = 3; coefficient of x_2^2 in g^11 is 1/3 * Rb[0,1,0,1]
    assert G[0, 0][(0, 2, 0)] == Fraction(1)
    assert G[0, 0][(2, 0, 0)] == 0


def test_random_rational_jets_invert_exactly():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    for k in range(10):
        jet = random_jet(2 + k % 2, rng, exact=True)
        G = inverse_metric_series(jet)
        assert (G @ matrix_series_invert(G)).is_identity()
    assert time.perf_counter() - start < 30


def test_bad_symmetry_is_named():
    Rb = np.zeros((2, 2, 2, 2))
    Rb[0, 1, 0, 1] = 1.0
    jet = BoundaryJet(2, Rb=Rb)
    with pytest.raises(ValidationError, match="antisymmetric under i<->k"):
        jet.validate()
    with pytest.raises(ValidationError, match=r"h not symmetric"):
        BoundaryJet(2, h=[[0.0, 1.0], [0.0, 0.0]]).validate()


def test_shape_is_checked():
    with pytest.raises(ValidationError):
        BoundaryJet(2, h=np.zeros((3, 3)))


def test_rescaled_metric_identity_at_zero():
    jet = random_jet(2, np.random.default_rng(1))
    assert rescaled_inverse_metric(jet, 0.0).is_identity()
    with pytest.raises(DomainError):
        rescaled_inverse_metric(jet, -0.1)


def test_evaluator_derivatives_and_volume_form():
    jet = random_jet(2, np.random.default_rng(2), scale=0.5)
    ev = MetricEvaluator(jet, 0.3)
    pts = np.array([[0.2, -0.3, 0.5], [0.5, 0.1, 0.6]])
    G, dG, dlog = ev.geometry(pts)
    h = 1e-6
    for c in range(3):
        e = np.zeros(3)
        e[c] = h
        Gp, _, _ = ev.geometry(pts + e)
        Gm, _, _ = ev.geometry(pts - e)
        assert np.allclose((Gp - Gm) / (2 * h), dG[:, c], atol=1e-8)
        ld = lambda M: 0.5 * np.log(np.linalg.det(np.linalg.inv(M)))
        fd = (np.array([ld(M) for M in Gp]) - np.array([ld(M) for M in Gm])) / (2 * h)
        assert np.allclose(fd, dlog[:, c], atol=1e-8)


def test_ambient_laplacian_flat_and_domain():
    jet = BoundaryJet.zero(2)
    pts = np.array([[0.1, 0.2, 0.3]])
    # Delta |X|^2 / 2 = 3 in R^3
    val = ambient_laplacian(jet, 0.1, pts, None, pts, np.eye(3)[None])
    assert val[0] == pytest.approx(3.0, abs=1e-15)
    with pytest.raises(DomainError):
        ambient_laplacian(jet, 0.1, np.array([[3.0, 0, 0.1]]), None, pts, np.eye(3)[None])


def test_bump_model_data():
    m = bump_model(2, 1, np.diag([2.0, -1.0]))
    tau = np.array([0.05, -0.02])
    jet = m.jet_at(tau)
    assert np.trace(jet.h) == pytest.approx(m.hmean(tau))
    c = m.consistency(tau)
    assert max(c.values()) < 1e-8
    with pytest.raises(NondegeneracyError, match="singular"):
        bump_model(2, 1, np.diag([1.0, 0.0]))


def test_table_model_transport_and_checks():
    d = np.eye(2)
    entry = {"tau": [0, 0], "jet": {"h": (0.5 * d).tolist(), "h2": (np.einsum("ij,kl->ijkl", d, d) / 2).tolist()}}
    m = table_model(2, [entry])
    assert np.allclose(m.hmean_hess(np.zeros(2)), d)
    assert np.allclose(m.hmean_grad(np.array([0.1, 0.0])), [0.1, 0.0])
    bad = dict(entry, hmean_grad=[1.0, 0.0])
    with pytest.raises(ValidationError, match="gradient mismatch"):
        table_model(2, [bad])


def test_make_model_dispatch():
    assert make_model({"kind": "euclidean", "n": 3}).kind == "euclidean"
    assert make_model({"kind": "bump", "n": 2}).params["a"] == 1.0
    with pytest.raises(ValidationError):
        make_model({"kind": "torus", "n": 2})
    assert euclidean_model(2).hmean_hess(np.zeros(2)).sum() == 0
