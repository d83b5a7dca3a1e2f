"""Saddle-point, decay-vector and predicted-radius tests.

Oracles: the m = 0 trigonometric closed forms, bisection on the m = 0
equation, small-m ratio tests, and the unit-circle identity checked by
direct complex arithmetic.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import bisect

from isosand.elliptic import complete_integrals
from isosand.errors import NotAdmissibleError
from isosand.isograph import build_square_lattice, lift_coordinates
from isosand.limitshape import (
    canonical_orientation,
    direction_profile,
    f_s_eval,
    predicted_plane_shape,
    predicted_radius,
    saddle_point_u,
    theta_vector,
    theta_zero_radius,
    u_s_zero,
)

SQ = np.array([math.pi / 4, 3 * math.pi / 4])      # square-lattice palette
P5 = math.pi * np.arange(5) / 5                    # 5-direction palette

P0 = complete_integrals(0.0)
P03 = complete_integrals(0.3)
P05 = complete_integrals(0.5)


def random_admissible(rng, palette):
    """Random l1-unit direction whose forced support fits a half-plane."""
    d = len(palette)
    while True:
        s = rng.dirichlet(np.ones(d)) * rng.choice([-1, 1], size=d)
        try:
            canonical_orientation(s, palette)
            return s
        except NotAdmissibleError:
            continue


class TestCanonicalOrientation:
    def test_identity_for_positive_input(self):
        s = np.array([0.25, 0.75])
        sc, ac, rec = canonical_orientation(s, np.array([0.3, -0.2]))
        assert np.allclose(sc, s)
        assert np.all(rec.flips == 1)
        assert np.all(np.abs(ac) < math.pi / 2)

    def test_negative_coordinate_flipped(self):
        s = np.array([0.5, -0.5])
        sc, ac, rec = canonical_orientation(s, SQ)
        assert np.allclose(sc, [0.5, 0.5])
        assert rec.flips[1] == -1
        # flipped second angle: 3pi/4 - pi = -pi/4 in the rotated frame
        assert np.allclose(sorted(ac), [-math.pi / 4, math.pi / 4], atol=1e-12)

    def test_postcondition_positive_cosine_sum(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            s = random_admissible(rng, P5)
            sc, ac, _ = canonical_orientation(s, P5)
            assert np.dot(sc, np.cos(ac)) > 0

    def test_not_admissible(self):
        palette = np.array([0.0, math.pi / 3, 2 * math.pi / 3])
        with pytest.raises(NotAdmissibleError):
            canonical_orientation([1.0, -1.0, 1.0], palette)

    def test_zero_direction(self):
        with pytest.raises(NotAdmissibleError):
            canonical_orientation([0.0, 0.0], SQ)


class TestSaddleMachinery:
    def test_f_s_massless_closed_form(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            s = rng.dirichlet(np.ones(5))
            u = rng.uniform(-1.5, 1.5)
            ac = rng.uniform(-1.2, 1.2, size=5)
            want = 0.5 * np.dot(s, np.sin(u - ac))
            assert f_s_eval(u, s, ac, P0) == pytest.approx(want, abs=1e-13)

    def test_u_s_zero_single_direction(self):
        assert u_s_zero([1.0], [0.7]) == pytest.approx(0.7, abs=1e-14)

    def test_u_s_zero_symmetric_pair(self):
        assert u_s_zero([0.5, 0.5], [0.9, -0.9]) == pytest.approx(0.0, abs=1e-15)

    def test_u_s_zero_matches_bisection(self):
        rng = np.random.default_rng(6)
        for _ in range(15):
            sc, ac, _ = canonical_orientation(random_admissible(rng, P5), P5)
            u0 = u_s_zero(sc, ac)
            root = bisect(lambda u: f_s_eval(u, sc, ac, P0),
                          -math.pi / 2 + 1e-9, math.pi / 2 - 1e-9, xtol=1e-14)
            assert u0 == pytest.approx(root, abs=1e-12)

    def test_root_finder_at_m_zero(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            sc, ac, _ = canonical_orientation(random_admissible(rng, P5), P5)
            assert saddle_point_u(sc, ac, P0) == pytest.approx(
                u_s_zero(sc, ac), abs=1e-10)

    def test_small_m_drift_is_linear(self):
        sc, ac, _ = canonical_orientation([0.6, -0.4], SQ)
        u0 = u_s_zero(sc, ac)
        drifts = []
        for m in (1e-2, 1e-3, 1e-4):
            pm = complete_integrals(math.sqrt(m))
            drifts.append(abs(saddle_point_u(sc, ac, pm) - u0) / m)
        # |u_s(m) - u_s(0)| = O(m): the ratio stabilizes within a factor 2
        assert drifts[0] / drifts[1] < 2.0 and drifts[1] / drifts[0] < 2.0
        assert drifts[1] / drifts[2] < 2.0 and drifts[2] / drifts[1] < 2.0

    def test_square_diagonal_symmetry(self):
        # symmetric direction between two symmetric angles: root at center
        sc, ac, _ = canonical_orientation([0.5, -0.5], SQ)
        assert saddle_point_u(sc, ac, P05) == pytest.approx(0.0, abs=1e-12)

    def test_sign_certificate(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            sc, ac, _ = canonical_orientation(random_admissible(rng, P5), P5)
            u0 = u_s_zero(sc, ac)
            assert np.dot(sc, np.cos(u0 - ac)) >= 1e-8


class TestThetaVector:
    def test_zero_at_critical(self):
        assert np.all(theta_vector(0.4, SQ, P0) == 0.0)

    @settings(max_examples=200, deadline=None)
    @given(u=st.floats(-8, 8), k=st.floats(0.01, 0.95))
    def test_components_bounded_by_half_log(self, u, k):
        # nd ranges over [1, 1/k'], so |theta_j| <= -log(k')/2 everywhere
        p = complete_integrals(k)
        cap = -0.5 * math.log(p.k_prime) + 1e-12
        th = theta_vector(u, P5, p)
        assert np.all(np.abs(th) <= cap)

    def test_matches_log_form(self):
        from isosand.elliptic import jacobi_ratio
        u = 0.23
        th = theta_vector(u, SQ, P05)
        for j, ab in enumerate(SQ):
            v = 0.5 * (u - P05.elliptic_angle(ab))
            want = -math.log(math.sqrt(P05.k_prime) * jacobi_ratio("nd", v, P05))
            assert th[j] == pytest.approx(want, abs=1e-14)

    def test_small_m_expansion(self):
        # theta(u_s(m)) ~ (m/4) * cos(u_s(0) - alpha) componentwise
        sc, ac, _ = canonical_orientation([0.7, -0.3], SQ)
        u0 = u_s_zero(sc, ac)
        target = np.cos(u0 - ac)
        m = 1e-4
        pm = complete_integrals(math.sqrt(m))
        th = theta_vector(saddle_point_u(sc, ac, pm), ac, pm)
        assert np.allclose(th * 4 / m, target, rtol=1e-2)

    def test_orientation_invariance(self):
        # n . theta evaluated in the original frame equals the canonical one
        rng = np.random.default_rng(12)
        for _ in range(10):
            s = random_admissible(rng, P5)
            prof = direction_profile(s, P5, P03)
            n = rng.integers(-6, 7, size=5).astype(float)
            u_orig = prof.u_s + P03.elliptic_angle(prof.orientation.rotation)
            th_orig = theta_vector(u_orig, P5, P03)
            lhs = float(n @ th_orig)
            rhs = float((prof.orientation.flips * n) @ prof.theta_us)
            assert lhs == pytest.approx(rhs, abs=1e-12)


class TestRadii:
    def test_positive_finite(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            s = random_admissible(rng, P5)
            r = predicted_radius(s, P5, P03)
            assert 0 < r < math.inf

    def test_reorientation_invariance(self):
        s = np.array([0.5, -0.5])
        flipped_palette = SQ + np.where(s < 0, math.pi, 0.0)
        r1 = predicted_radius(s, SQ, P05)
        r2 = predicted_radius(np.abs(s), flipped_palette, P05)
        assert r1 == pytest.approx(r2, rel=1e-12)

    def test_k_zero_radius_single_direction(self):
        assert theta_zero_radius([1.0], [0.4]) == pytest.approx(1.0, abs=1e-14)

    def test_k_zero_radius_square_diagonal(self):
        sc, ac, _ = canonical_orientation([0.5, -0.5], SQ)
        assert theta_zero_radius(sc, ac) == pytest.approx(math.sqrt(2), rel=1e-14)

    def test_unit_circle_identity(self):
        # |pi(r s)| = 1 and the rotated point is e^{i u_s(0)}
        rng = np.random.default_rng(16)
        for _ in range(50):
            s = random_admissible(rng, P5)
            sc, ac, rec = canonical_orientation(s, P5)
            r = theta_zero_radius(sc, ac)
            point = r * np.dot(sc, np.exp(1j * ac))
            assert abs(point) == pytest.approx(1.0, abs=1e-12)
            u0 = u_s_zero(sc, ac)
            assert point.real == pytest.approx(math.cos(u0), abs=1e-12)
            assert point.imag == pytest.approx(math.sin(u0), abs=1e-12)

    def test_radius_grows_like_4_over_m(self):
        s = np.array([0.5, -0.5])
        r03 = predicted_radius(s, SQ, P03)
        r01 = predicted_radius(s, SQ, complete_integrals(0.1))
        limit = theta_zero_radius(*canonical_orientation(s, SQ)[:2])
        assert r01 * 0.01 / 4 == pytest.approx(limit, rel=0.01)
        assert r03 * 0.09 / 4 == pytest.approx(limit, rel=0.1)


@pytest.fixture(scope="module")
def square_patch():
    g = build_square_lattice(24)
    return g, lift_coordinates(g)


class TestPlaneShape:

    def test_square_symmetry(self, square_patch):
        g, lift = square_patch
        curve = predicted_plane_shape(g, lift, P05, 16, (10, 24))
        r = curve.radius_plane
        assert not np.isnan(r).any()
        # dihedral symmetry of the lattice: quarter-turn invariance
        assert np.allclose(r, np.roll(r, 4), rtol=1e-6)

    def test_continuity(self, square_patch):
        g, lift = square_patch
        curve = predicted_plane_shape(g, lift, P05, 32, (10, 24))
        assert curve.max_adjacent_jump < 0.5

    def test_k_to_zero_circle(self, square_patch):
        g, lift = square_patch
        devs = []
        for k in (0.3, 0.1, 0.03):
            p = complete_integrals(k)
            curve = predicted_plane_shape(g, lift, p, 16, (10, 24))
            devs.append(np.nanmax(np.abs(curve.radius_plane * p.m / 4 - 1.0)))
        assert devs[0] > devs[1] > devs[2]
        assert devs[2] < 1e-2
