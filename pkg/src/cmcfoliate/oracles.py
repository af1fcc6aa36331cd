"""Oracle suite behind ``cmcfoliate selftest``.

Each check returns an :class:`OracleResult`; the suite passes iff all do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .curvature import (
    H_expansion_values,
    H_phi_linearized,
    H_phi_phi,
    H_phi_phi_fd,
    extend_homogeneous,
    mean_curvature_at,
)
from .errors import ConfigError
from .hemisphere import build_basis, build_quadrature, kernel_moments
from .metric import INVERSE_METRIC_CONSTANTS, BoundaryJet, inverse_metric_series, random_jet, umbilic_jet
from .series import MultiSeries, matrix_series_invert


@dataclass
class OracleResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<24} {self.detail}"


def _random_series(rng, nv, bound, den=5):
    coeffs = {}
    for _ in range(6):
        e = tuple(int(v) for v in rng.integers(0, 3, size=nv))
        if sum(e) <= bound:
            coeffs[e] = Fraction(int(rng.integers(-den, den + 1)), den)
    return MultiSeries(nv, bound, coeffs)


def check_series_ring(rng, trials=20):
    bad = 0
    for _ in range(trials):
        a, b, c = (_random_series(rng, 3, 4) for _ in range(3))
        bad += (a * b) * c != a * (b * c)
        bad += a * (b + c) != a * b + a * c
        bad += a * b != b * a
        bad += not (a - a).is_zero
    return OracleResult("series_ring_axioms", bad == 0, f"{trials} exact triples, {bad} violations")


def check_exact_inversion(rng, count=6, constants=None):
    worst = 0
    for k in range(count):
        n = 2 + k % 2
        jet = random_jet(n, rng, exact=True, scale=Fraction(1, 2))
        G = inverse_metric_series(jet, constants=constants)
        P = G @ matrix_series_invert(G)
        worst += not P.is_identity()
    return OracleResult("exact_inversion", worst == 0, f"{count} rational jets, {worst} non-identity products")


def check_umbilic_metric(constants=None):
    """With ``h = kappa I`` alone the Fermi metric is ``(1 - kappa t)^2 delta``
    on the boundary block, so the inverted series must be that quadratic."""
    kappa = Fraction(1, 2)
    ok = True
    for n in (2, 3):
        jet = umbilic_jet(n, kappa, exact=True)
        g = matrix_series_invert(inverse_metric_series(jet, constants=constants))
        nv = n + 1
        expect = {(0,) * nv: Fraction(1), (0,) * n + (1,): -2 * kappa, (0,) * n + (2,): kappa * kappa}
        want = MultiSeries(nv, 4, expect)
        for i in range(n):
            for j in range(n):
                target = want if i == j else MultiSeries.zero(nv, 4)
                ok &= g[i, j] == target
    return OracleResult("umbilic_metric", bool(ok), "direct metric equals (1 - kappa t)^2 through degree 4")


def check_eigen_relations(basis):
    """Degree-0 extensions of the harmonics satisfy ``Delta_R^{n+1} pbar = Delta_S p`` on the sphere."""
    Y = basis.quad.nodes
    worst = 0.0
    for i in range(basis.size):
        psi = basis.member(i)
        v, _, H = extend_homogeneous(psi, Y)
        lap = np.trace(H, axis1=1, axis2=2)
        worst = max(worst, float(np.max(np.abs(lap - basis.eigenvalues[i] * v))))
    return OracleResult("eigen_relations", worst < 1e-9, f"max |Delta p - lambda p| = {worst:.2e}")


def check_orthonormal(basis):
    err = float(np.max(np.abs(basis.gram() - np.eye(basis.size))))
    eq = np.column_stack([basis.quad.nodes[:, :-1], np.zeros(len(basis.quad))])
    eq /= np.linalg.norm(eq, axis=1, keepdims=True)
    _, grad = basis.evaluate(eq, derivatives=1)
    neu = float(np.max(np.abs(grad[:, -1, :])))
    return OracleResult("basis_neumann", err < 1e-10 and neu < 1e-12, f"gram {err:.1e}, d_t at equator {neu:.1e}")


def check_moments(n=2):
    m1 = kernel_moments(n, build_quadrature(n, 20))
    m2 = kernel_moments(n, build_quadrature(n, 28))
    area_ok = abs(m1["int_x1x1"] - m1["closed_form"]["int_x1x1"]) < 1e-12
    zero_ok = max(abs(v) for v in m1["P_t"]) < 1e-12 and m1["P_txx_max"] < 1e-12
    stable = abs(m1["c_n"] - m2["c_n"]) < 1e-10
    ok = area_ok and zero_ok and stable
    return OracleResult("moments", ok, f"c_{n} = {m1['c_n']:.15f}, two-order drift {abs(m1['c_n'] - m2['c_n']):.1e}")


def check_round_sphere(basis):
    jet = BoundaryJet.zero(basis.n)
    c = 0.2
    one = basis.function(np.eye(basis.size)[0] / basis.node_values[0, 0])
    H = mean_curvature_at(jet, 0.0, one, c, basis.quad.nodes)
    err = float(np.max(np.abs(H - basis.n / (1 + c))))
    return OracleResult("round_sphere", err < 1e-10, f"max |H - n/(1+c)| = {err:.1e}")


def check_linearization(basis, rng, count=5):
    jet = BoundaryJet.zero(basis.n)
    worst = 0.0
    for _ in range(count):
        psi = basis.function(rng.normal(size=basis.size) * 0.2)
        fd = H_phi_linearized(jet, 0.0, None, psi).values
        exact = basis.node_values @ (-(basis.eigenvalues + basis.n) * psi.coeffs)
        worst = max(worst, float(np.max(np.abs(fd - exact)) / np.max(np.abs(exact))))
    return OracleResult("fd_linearization", worst < 1e-5, f"relative error {worst:.1e}")


def check_second_variation(basis, rng):
    jet = BoundaryJet.zero(basis.n)
    psi = basis.function(rng.normal(size=basis.size) * 0.2)
    a = H_phi_phi(psi).values
    b = H_phi_phi_fd(jet, psi).values
    err = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
    return OracleResult("fd_second_variation", err < 1e-5, f"relative error {err:.1e}")


def check_expansion(basis, rng, count=3):
    radii = np.array([0.2, 0.1, 0.05, 0.025])
    worst = math.inf
    for _ in range(count):
        jet = random_jet(basis.n, rng, scale=0.5)
        errs = [
            np.max(np.abs(mean_curvature_at(jet, r, None, 0.0, basis.quad.nodes) - H_expansion_values(jet, r, basis.quad.nodes)))
            for r in radii
        ]
        worst = min(worst, np.polyfit(np.log(radii), np.log(errs), 1)[0])
    return OracleResult("expansion_order", worst >= 2.7, f"min log-log slope {worst:.2f}")


def run_suite(n=2, L_max=6, quadrature_order=16, seed=0, metric_overrides=None):
    """Run every oracle; ``metric_overrides`` replaces named inverse-metric
    constants (a mutation hook for testing the suite itself)."""
    rng = np.random.default_rng(seed)
    constants = None
    if metric_overrides:
        unknown = sorted(set(metric_overrides) - set(INVERSE_METRIC_CONSTANTS))
        if unknown:
            raise ConfigError(f"unknown inverse-metric constants: {unknown}")
        constants = {k: Fraction(str(v)) for k, v in metric_overrides.items()}
    basis, _ = build_basis(n, L_max, quadrature_order)
    return [
        check_series_ring(rng),
        check_exact_inversion(rng, constants=constants),
        check_umbilic_metric(constants),
        check_eigen_relations(basis),
        check_orthonormal(basis),
        check_moments(n),
        check_round_sphere(basis),
        check_linearization(basis, rng),
        check_second_variation(basis, rng),
        check_expansion(basis, rng),
    ]


__all__ = ["OracleResult", "run_suite"]
