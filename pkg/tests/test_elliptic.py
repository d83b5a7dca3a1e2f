"""Elliptic kernel tests against independent high-precision oracles.

Oracles: scipy adaptive quadrature of the defining integrals for K and E,
and mpmath (30 significant digits) for Jacobi functions and the Dc/A
integrals.  The implementation under test never goes through either path.
"""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from isosand.elliptic import (
    complete_integrals,
    elliptic_angle,
    func_a,
    integral_dc,
    jacobi_ratio,
    jacobi_sn_cn_dn,
)
from isosand.errors import PoleError

mpmath.mp.dps = 30


def mp_sn_cn_dn(u, k):
    m = mpmath.mpf(k) ** 2
    sn = mpmath.ellipfun("sn", u, m=m)
    cn = mpmath.ellipfun("cn", u, m=m)
    dn = mpmath.ellipfun("dn", u, m=m)
    return float(sn), float(cn), float(dn)


class TestCompleteIntegrals:
    def test_k_zero_is_pi_over_two(self):
        p = complete_integrals(0.0)
        assert p.K == pytest.approx(math.pi / 2, abs=0)
        assert p.E == pytest.approx(math.pi / 2, abs=0)
        assert p.k_prime == 1.0
        assert math.isinf(p.K_prime)
        assert p.E_prime == 1.0

    @pytest.mark.parametrize("k", [0.1, 0.3, 0.5, 0.8, 0.95])
    def test_against_defining_integral(self, k):
        p = complete_integrals(k)
        K_ref = quad(lambda t: 1 / math.sqrt(1 - k**2 * math.sin(t) ** 2),
                     0, math.pi / 2, epsabs=1e-13, epsrel=1e-13)[0]
        E_ref = quad(lambda t: math.sqrt(1 - k**2 * math.sin(t) ** 2),
                     0, math.pi / 2, epsabs=1e-13, epsrel=1e-13)[0]
        assert p.K == pytest.approx(K_ref, rel=1e-12)
        assert p.E == pytest.approx(E_ref, rel=1e-12)

    @pytest.mark.parametrize("k", [0.05, 0.3, 0.5, 0.8, 0.99])
    def test_legendre_relation(self, k):
        p = complete_integrals(k)
        legendre = p.E * p.K_prime + p.E_prime * p.K - p.K * p.K_prime
        assert legendre == pytest.approx(math.pi / 2, abs=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            complete_integrals(-0.1)
        with pytest.raises(ValueError):
            complete_integrals(1.0)

    def test_k_prime_consistency(self):
        p = complete_integrals(0.73)
        assert p.k_prime == pytest.approx(math.sqrt(1 - 0.73**2), rel=1e-15)
        assert p.K >= math.pi / 2
        assert p.E <= math.pi / 2


class TestJacobiFunctions:
    def test_trig_degeneration(self):
        p = complete_integrals(0.0)
        for u in np.linspace(-5, 5, 41):
            sn, cn, dn = jacobi_sn_cn_dn(u, p)
            assert sn == pytest.approx(math.sin(u), abs=1e-15)
            assert cn == pytest.approx(math.cos(u), abs=1e-15)
            assert dn == 1.0

    def test_origin(self):
        for k in (0.0, 0.2, 0.6, 0.9):
            p = complete_integrals(k)
            assert jacobi_sn_cn_dn(0.0, p) == (0.0, 1.0, 1.0)

    def test_quarter_period(self):
        p = complete_integrals(0.5)
        sn, cn, dn = jacobi_sn_cn_dn(p.K, p)
        assert sn == pytest.approx(1.0, abs=1e-13)
        assert cn == pytest.approx(0.0, abs=1e-13)
        assert dn == pytest.approx(p.k_prime, rel=1e-13)

    def test_against_mpmath(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            k = rng.uniform(0.05, 0.95)
            u = rng.uniform(-8, 8)
            p = complete_integrals(k)
            got = jacobi_sn_cn_dn(u, p)
            ref = mp_sn_cn_dn(u, k)
            for g, r in zip(got, ref):
                assert g == pytest.approx(r, abs=2e-13)

    @settings(max_examples=300, deadline=None)
    @given(u=st.floats(-10, 10), k=st.floats(0, 0.99))
    def test_pythagorean_identities(self, u, k):
        p = complete_integrals(k)
        sn, cn, dn = jacobi_sn_cn_dn(u, p)
        assert abs(sn * sn + cn * cn - 1.0) < 1e-12
        assert abs(dn * dn + p.m * sn * sn - 1.0) < 1e-12


class TestJacobiRatios:
    def test_trig_ratios_at_k_zero(self):
        p = complete_integrals(0.0)
        for u in np.linspace(-1.4, 1.4, 15):
            assert jacobi_ratio("sc", u, p) == pytest.approx(math.tan(u), abs=1e-12)
            assert jacobi_ratio("nd", u, p) == 1.0
            assert jacobi_ratio("dc", u, p) == pytest.approx(1 / math.cos(u), abs=1e-12)

    def test_ratio_table_against_mpmath(self):
        p = complete_integrals(0.6)
        for code in ("sc", "nd", "dc", "cd", "sd", "ns", "cs", "ds", "nc", "dn", "sn", "cn"):
            u = 0.37
            num = {"s": "sn", "c": "cn", "d": "dn", "n": None}
            def part(letter):
                if letter == "n":
                    return mpmath.mpf(1)
                return mpmath.ellipfun(num[letter], u, m=mpmath.mpf(0.6) ** 2)
            ref = float(part(code[0]) / part(code[1]))
            assert jacobi_ratio(code, u, p) == pytest.approx(ref, rel=1e-12)

    def test_pole_error(self):
        p = complete_integrals(0.4)
        with pytest.raises(PoleError):
            jacobi_ratio("sc", p.K, p)
        with pytest.raises(PoleError):
            jacobi_ratio("ns", 0.0, p)
        with pytest.raises(PoleError):
            jacobi_ratio("dc", 3 * p.K + 1e-12, p)

    def test_bad_code(self):
        p = complete_integrals(0.4)
        with pytest.raises(ValueError):
            jacobi_ratio("ss", 0.3, p)
        with pytest.raises(ValueError):
            jacobi_ratio("xy", 0.3, p)


class TestDcAndA:
    def test_empty_integral(self):
        for k in (0.0, 0.3, 0.8):
            assert integral_dc(0.0, complete_integrals(k)) == 0.0

    def test_tan_at_k_zero(self):
        p = complete_integrals(0.0)
        for u in (-1.2, -0.5, 0.4, 1.3):
            assert integral_dc(u, p) == pytest.approx(math.tan(u), abs=1e-14)
            assert func_a(u, p) == pytest.approx(math.tan(u), abs=1e-14)

    def test_dc_against_mpmath(self):
        # independent oracle: mpmath quadrature of dc^2 at 30 digits
        k, u = 0.6, 0.7
        p = complete_integrals(k)
        m = mpmath.mpf(k) ** 2
        ref = mpmath.quad(
            lambda v: (mpmath.ellipfun("dn", v, m=m) / mpmath.ellipfun("cn", v, m=m)) ** 2,
            [0, u],
        )
        assert integral_dc(u, p) == pytest.approx(float(ref), abs=1e-11)

    def test_a_against_mpmath(self):
        k = 0.5
        p = complete_integrals(k)
        u = p.K / 3
        m = mpmath.mpf(k) ** 2
        dc2 = mpmath.quad(
            lambda v: (mpmath.ellipfun("dn", v, m=m) / mpmath.ellipfun("cn", v, m=m)) ** 2,
            [0, u],
        )
        kp = mpmath.sqrt(1 - m)
        Km = mpmath.ellipk(m)
        Em = mpmath.ellipe(m)
        ref = float((dc2 + (Em - Km) / Km * u) / kp)
        assert func_a(u, p) == pytest.approx(ref, abs=1e-11)
        assert func_a(0.0, p) == 0.0

    def test_pole_guard(self):
        p = complete_integrals(0.5)
        with pytest.raises(PoleError):
            integral_dc(p.K, p)
        with pytest.raises(PoleError):
            integral_dc(-1.01 * p.K, p)

    def test_dc_odd_and_increasing(self):
        p = complete_integrals(0.7)
        grid = np.linspace(-0.9 * p.K, 0.9 * p.K, 31)
        vals = [integral_dc(u, p) for u in grid]
        for u, v in zip(grid, vals):
            assert v == pytest.approx(-integral_dc(-u, p), abs=1e-11)
        assert np.all(np.diff(vals) > 0)


class TestMassIntegrand:
    """f(theta) = A - sc is the per-edge mass contribution."""

    @pytest.mark.parametrize("k", [0.2, 0.5, 0.8])
    def test_concavity_and_positivity(self, k):
        p = complete_integrals(k)
        f = lambda th: func_a(th, p) - jacobi_ratio("sc", th, p)
        rng = np.random.default_rng(3)
        for _ in range(60):
            a, b = np.sort(rng.uniform(0.02 * p.K, 0.98 * p.K, size=2))
            if b - a < 1e-3:
                continue
            assert f(0.5 * (a + b)) > 0.5 * (f(a) + f(b))
        eps_ell = p.elliptic_angle(0.15)
        for th in np.linspace(eps_ell, p.K - eps_ell, 17):
            assert f(th) > 0

    def test_vanishes_at_zero(self):
        p = complete_integrals(0.5)
        f0 = func_a(1e-9, p) - jacobi_ratio("sc", 1e-9, p)
        assert abs(f0) < 1e-11


class TestEllipticAngle:
    def test_identity_at_k_zero(self):
        p = complete_integrals(0.0)
        assert elliptic_angle(math.pi / 4, p) == pytest.approx(math.pi / 4, abs=0)

    def test_right_angle_maps_to_K(self):
        for k in (0.2, 0.6, 0.9):
            p = complete_integrals(k)
            assert elliptic_angle(math.pi / 2, p) == pytest.approx(p.K, rel=1e-15)

    def test_scaling(self):
        p = complete_integrals(0.5)
        assert elliptic_angle(0.3, p) == pytest.approx(0.3 * 2 * p.K / math.pi, rel=1e-15)
