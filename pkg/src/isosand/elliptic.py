"""Real-argument elliptic kernel: complete integrals, Jacobi functions and
the auxiliary integrals entering the edge/vertex weight formulas.

Everything is computed through the arithmetic-geometric mean (AGM).  The
complete integrals K and E come from the classical AGM sums, the Jacobi
functions sn, cn, dn from the descending Landen (amplitude) recursion of
DLMF 22.20(ii).  The degenerate modulus k = 0 is handled as an exact
trigonometric branch so that critical weights are exact.

Angles: natural angles (radians) are rescaled by 2K/pi at evaluation sites
only; nothing in this module stores rescaled angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from scipy.integrate import quad

from .errors import PoleError

# Relative distance from a real pole (in units of K) below which ratio
# evaluation refuses to proceed.
POLE_MARGIN = 1e-9

_LETTERS = "scdn"


@dataclass(frozen=True)
class ElliptParams:
    """Bundle of modulus-level constants shared by all elliptic evaluations.

    k is the elliptic modulus, m = k**2 the parameter, k_prime the
    complementary modulus.  K, E are the complete integrals of first and
    second kind at k; K_prime, E_prime the same at k_prime.  At k = 0 the
    complementary integral K' diverges and is stored as math.inf.
    """

    k: float
    m: float
    k_prime: float
    K: float
    K_prime: float
    E: float
    E_prime: float

    def elliptic_angle(self, theta_bar: float) -> float:
        """Rescale a natural angle to elliptic units: (2K/pi) * theta_bar."""
        return (2.0 * self.K / math.pi) * theta_bar


def _agm_chain(k: float):
    """AGM sequences (a_n, b_n, c_n) starting from (1, k', k)."""
    a = [1.0]
    b = [math.sqrt((1.0 - k) * (1.0 + k))]
    c = [k]
    while c[-1] > 4e-16 * a[-1]:
        an, bn = a[-1], b[-1]
        a.append(0.5 * (an + bn))
        b.append(math.sqrt(an * bn))
        c.append(0.5 * (an - bn))
        if c[-1] >= c[-2] or len(a) > 64:  # stalled at rounding noise
            break
    return a, b, c


def _complete_K_E(k: float):
    a, _, c = _agm_chain(k)
    K = math.pi / (2.0 * a[-1])
    E = K * (1.0 - sum(2.0 ** (n - 1) * c[n] ** 2 for n in range(len(c))))
    return K, E


def complete_integrals(k: float) -> ElliptParams:
    """Complete elliptic integrals for modulus k in [0, 1).

    Returns the full ElliptParams bundle.  K and E are AGM values accurate
    to better than 1e-13 relative; the Legendre relation
    E*K' + E'*K - K*K' = pi/2 can be used as an independent cross-check
    for k > 0.

    Raises:
        ValueError: if k is outside [0, 1).
    """
    if not 0.0 <= k < 1.0:
        raise ValueError(f"elliptic modulus must lie in [0, 1), got {k}")
    m = k * k
    k_prime = math.sqrt((1.0 - k) * (1.0 + k))
    if k == 0.0:
        # K'(0) diverges; E(k'=1) = 1 exactly.
        return ElliptParams(0.0, 0.0, 1.0, math.pi / 2, math.inf, math.pi / 2, 1.0)
    K, E = _complete_K_E(k)
    K_prime, E_prime = _complete_K_E(k_prime)
    return ElliptParams(k, m, k_prime, K, K_prime, E, E_prime)


def _amplitude(u: float, k: float) -> tuple[float, float]:
    """Jacobi amplitude am(u|k) plus the first Landen back-step phi_1.

    Descending Landen recursion, DLMF 22.20(ii): phi_N = 2^N a_N u, then
    sin(2 phi_{n-1} - phi_n) = (c_n/a_n) sin(phi_n) downward.
    """
    a, _, c = _agm_chain(k)
    n = len(a) - 1
    phi = 2.0**n * a[n] * u
    phi1 = phi
    while n > 0:
        s = c[n] / a[n] * math.sin(phi)
        s = min(1.0, max(-1.0, s))
        phi_prev = 0.5 * (phi + math.asin(s))
        if n == 1:
            phi1 = phi
        phi = phi_prev
        n -= 1
    return phi, phi1


def jacobi_sn_cn_dn(u: float, p: ElliptParams) -> tuple[float, float, float]:
    """The three primary Jacobi functions sn, cn, dn at real u for modulus p.k.

    All three are finite on the real line.  At k = 0 this is exactly
    (sin u, cos u, 1).
    """
    if p.k == 0.0:
        return math.sin(u), math.cos(u), 1.0
    phi, _ = _amplitude(u, p.k)
    sn = math.sin(phi)
    cn = math.cos(phi)
    # dn is positive on the real line for k < 1, so the square root is safe.
    dn = math.sqrt(1.0 - p.m * sn * sn)
    return sn, cn, dn


def _pole_distance(u: float, code: str, K: float) -> float:
    """Distance from u to the nearest real pole of the ratio `code`.

    Real poles sit at the real zeros of the denominator: sn vanishes at
    even multiples of K, cn at odd multiples; dn and the constant 1 have
    no real zeros.
    """
    q = code[1]
    if q == "s":
        anchor = 0.0
    elif q == "c":
        anchor = K
    else:
        return math.inf
    period = 2.0 * K
    r = math.remainder(u - anchor, period)
    return abs(r)


def jacobi_ratio(code: str, u: float, p: ElliptParams) -> float:
    """Glaisher ratio of primary Jacobi functions, e.g. sc = sn/cn, nd = 1/dn.

    Args:
        code: two distinct letters from {s, c, d, n}.
        u: real argument.
        p: modulus bundle.

    Raises:
        PoleError: if u lies within 1e-9*K of a real pole of the ratio.
        ValueError: for a malformed code.
    """
    if len(code) != 2 or code[0] not in _LETTERS or code[1] not in _LETTERS \
            or code[0] == code[1]:
        raise ValueError(f"bad Jacobi ratio code {code!r}")
    if _pole_distance(u, code, p.K) < POLE_MARGIN * p.K:
        raise PoleError(f"{code}({u!r}|k={p.k}) evaluated too close to a real pole")
    sn, cn, dn = jacobi_sn_cn_dn(u, p)
    val = {"s": sn, "c": cn, "d": dn, "n": 1.0}
    return val[code[0]] / val[code[1]]


@lru_cache(maxsize=65536)
def _dc2_integral(u: float, k: float) -> float:
    p = complete_integrals(k)

    def dc2(v):
        sn, cn, dn = jacobi_sn_cn_dn(v, p)
        return (dn / cn) ** 2

    value, err = quad(dc2, 0.0, u, epsabs=1e-13, epsrel=1e-13, limit=200)
    return value


def integral_dc(u: float, p: ElliptParams) -> float:
    """Dc(u|k) = integral of dc^2 from 0 to u, by adaptive quadrature.

    The integrand has double poles where cn vanishes, so the interval must
    stay strictly inside (-K, K).

    Raises:
        PoleError: if [0, u] touches the pole of dc at +-K.
    """
    if abs(u) >= p.K * (1.0 - POLE_MARGIN):
        raise PoleError(f"Dc integration interval [0, {u!r}] touches the pole at K")
    if p.k == 0.0:
        return math.tan(u)
    return _dc2_integral(u, p.k)


def func_a(u: float, p: ElliptParams) -> float:
    """A(u|k) = (Dc(u|k) + (E-K)/K * u) / k'.

    Degenerates to tan(u) at k = 0 (k' = 1, E = K).
    """
    return (integral_dc(u, p) + (p.E - p.K) / p.K * u) / p.k_prime


def elliptic_angle(theta_bar: float, p: ElliptParams) -> float:
    """Natural angle -> elliptic angle: (2K/pi) * theta_bar."""
    return p.elliptic_angle(theta_bar)
