"""Weight, Laplacian and operator-T tests against dense oracles."""

import math

import numpy as np
import pytest

from isosand.elliptic import complete_integrals, jacobi_ratio
from isosand.isograph import build_multigrid_tiling, build_square_lattice
from isosand.weights import (
    attach_weights,
    compute_model_bounds,
    conductance,
    laplacian_apply,
    operator_T_apply,
    transition_kernel,
    vertex_mass_squared,
)

OFFSETS5 = [0.17, 0.31, 0.05, 0.43, 0.09]


@pytest.fixture(scope="module")
def square5_k05():
    return attach_weights(build_square_lattice(5), complete_integrals(0.5))


def dense_laplacian(w):
    n = w.n_vertices
    L = np.zeros((n, n))
    for e, (u, v) in enumerate(w.base.edges):
        L[u, v] -= w.rho[e]
        L[v, u] -= w.rho[e]
    L[np.diag_indices(n)] = w.diag
    return L


class TestConductance:
    def test_critical_tan(self):
        p0 = complete_integrals(0.0)
        assert conductance(math.pi / 4, p0) == pytest.approx(1.0, abs=1e-12)
        assert conductance(math.pi / 6, p0) == pytest.approx(math.tan(math.pi / 6), abs=1e-12)

    def test_elliptic_value_against_mpmath(self):
        import mpmath
        mpmath.mp.dps = 30
        p = complete_integrals(0.5)
        m = mpmath.mpf("0.25")
        u = mpmath.ellipk(m) / 2
        want = float(mpmath.ellipfun("sn", u, m=m) / mpmath.ellipfun("cn", u, m=m))
        assert conductance(math.pi / 4, p) == pytest.approx(want, rel=1e-13)

    def test_weight_bounds(self, square5_k05):
        w = square5_k05
        p, eps = w.params, w.base.epsilon
        lo = jacobi_ratio("sc", p.elliptic_angle(eps), p)
        hi = jacobi_ratio("sc", p.K - p.elliptic_angle(eps), p)
        assert np.all(w.rho >= lo - 1e-12)
        assert np.all(w.rho <= hi + 1e-12)


class TestMass:
    def test_zero_at_critical(self):
        p0 = complete_integrals(0.0)
        assert vertex_mass_squared([math.pi / 4] * 4, p0) == 0.0
        w = attach_weights(build_square_lattice(3), p0)
        assert np.all(w.mass2 == 0.0)

    @pytest.mark.parametrize("k", [0.3, 0.5, 0.8])
    def test_positive_for_positive_k(self, k):
        p = complete_integrals(k)
        for g in (build_square_lattice(3), build_multigrid_tiling(5, OFFSETS5, 7.0)):
            w = attach_weights(g, p)
            assert np.all(w.mass2 > 0)

    def test_square_vertex_value(self):
        # interior vertex: 4 edges at pi/4, so 4*(A(K/2) - sc(K/2));
        # oracle: mpmath quadrature at 30 digits
        import mpmath
        mpmath.mp.dps = 30
        p = complete_integrals(0.5)
        w = attach_weights(build_square_lattice(3), p)
        assert w.mass2[w.base.origin] == pytest.approx(
            vertex_mass_squared([math.pi / 4] * 4, p), rel=1e-12)
        m = mpmath.mpf("0.25")
        K, E = mpmath.ellipk(m), mpmath.ellipe(m)
        u = K / 2
        dc2 = mpmath.quad(
            lambda v: (mpmath.ellipfun("dn", v, m=m) / mpmath.ellipfun("cn", v, m=m)) ** 2,
            [0, u])
        A = (dc2 + (E - K) / K * u) / mpmath.sqrt(1 - m)
        sc = mpmath.ellipfun("sn", u, m=m) / mpmath.ellipfun("cn", u, m=m)
        assert w.mass2[w.base.origin] == pytest.approx(float(4 * (A - sc)), abs=1e-10)

    def test_mass_lower_bound(self):
        # f = A - sc is concave and vanishes at 0 and K, so each edge
        # contributes at least min(f(eps_ell), f(K - eps_ell))
        from isosand.elliptic import func_a, jacobi_ratio

        p = complete_integrals(0.5)
        g = build_multigrid_tiling(5, OFFSETS5, 8.0)
        w = attach_weights(g, p)
        eps_ell = p.elliptic_angle(g.epsilon)
        f = lambda th: func_a(th, p) - jacobi_ratio("sc", th, p)
        per_edge = min(f(eps_ell), f(p.K - eps_ell))
        assert per_edge > 0
        assert np.all(w.mass2 >= g.degree() * per_edge - 1e-12)

    def test_diag_recomputable(self, square5_k05):
        w = square5_k05
        rho_sum = np.zeros(w.n_vertices)
        np.add.at(rho_sum, w.base.edges[:, 0], w.rho)
        np.add.at(rho_sum, w.base.edges[:, 1], w.rho)
        assert np.allclose(w.diag, rho_sum + w.mass2, rtol=0, atol=1e-15)


class TestOperators:
    def test_constant_function(self, square5_k05):
        w = square5_k05
        f = np.full(w.n_vertices, 3.7)
        assert np.allclose(laplacian_apply(w, f), 3.7 * w.mass2, atol=1e-13)

    def test_laplacian_columns(self, square5_k05):
        w = square5_k05
        L = dense_laplacian(w)
        y = 7
        f = np.zeros(w.n_vertices)
        f[y] = 1.0
        assert np.allclose(laplacian_apply(w, f), L[:, y], atol=1e-13)

    def test_matches_dense_oracle(self, square5_k05):
        w = square5_k05
        L = dense_laplacian(w)
        rng = np.random.default_rng(5)
        f = rng.normal(size=w.n_vertices)
        assert np.abs(laplacian_apply(w, f) - L @ f).max() < 1e-12

    def test_laplacian_symmetric(self, square5_k05):
        L = dense_laplacian(square5_k05)
        assert np.abs(L - L.T).max() < 1e-13

    def test_positive_definite_small_patch(self):
        w = attach_weights(build_square_lattice(3), complete_integrals(0.5))
        L = dense_laplacian(w)
        assert np.linalg.eigvalsh(L).min() > 0

    def test_T_zero_and_columns(self, square5_k05):
        w = square5_k05
        assert np.all(operator_T_apply(w, np.zeros(w.n_vertices)) == 0)
        y = 11
        f = np.zeros(w.n_vertices)
        f[y] = 1.0
        col = operator_T_apply(w, f)
        assert col[y] == pytest.approx(-1.0)
        adj = w.adjacency
        for x in range(w.n_vertices):
            if x == y:
                continue
            assert col[x] == pytest.approx(adj[x, y] / w.diag[y], abs=1e-15)

    def test_T_is_minus_laplacian_Dinv(self, square5_k05):
        w = square5_k05
        rng = np.random.default_rng(9)
        f = rng.normal(size=w.n_vertices)
        direct = operator_T_apply(w, f)
        via_lap = -laplacian_apply(w, f / w.diag)
        assert np.abs(direct - via_lap).max() < 1e-12


class TestTransitionKernel:
    def test_probabilities_sum_to_one(self, square5_k05):
        w = square5_k05
        for x in (0, w.base.origin, w.n_vertices - 1):
            moves, kill = transition_kernel(w, x)
            assert sum(p for _, p in moves) + kill == pytest.approx(1.0, abs=1e-14)

    def test_no_kill_at_critical(self):
        w = attach_weights(build_square_lattice(2), complete_integrals(0.0))
        _, kill = transition_kernel(w, w.base.origin)
        assert kill == 0.0

    def test_symmetric_neighbours(self, square5_k05):
        w = square5_k05
        moves, kill = transition_kernel(w, w.base.origin)
        probs = [p for _, p in moves]
        assert len(probs) == 4
        assert max(probs) - min(probs) < 1e-15
        assert kill > 0


class TestModelBounds:
    def test_square_interior_constant(self, square5_k05):
        w = square5_k05
        b = compute_model_bounds(w)
        assert b.c <= b.c_prime
        assert b.delta > 0
        assert not b.degenerate
        # kill probability bounded below by delta everywhere
        kill = w.mass2 / w.diag
        assert np.all(kill >= b.delta)

    def test_measured_row_sums_sharpen(self, square5_k05):
        w = square5_k05
        fake = np.full(w.n_vertices, 2.0)
        b = compute_model_bounds(w, potential_row_sums=fake)
        assert b.a == 2.0
        assert b.alpha == pytest.approx(b.c_prime * 2.0)
        assert b.beta == b.c

    def test_degenerate_at_critical(self):
        w = attach_weights(build_square_lattice(2), complete_integrals(0.0))
        b = compute_model_bounds(w)
        assert b.degenerate
        assert b.delta == 0.0
