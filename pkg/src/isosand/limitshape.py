"""Directional saddle points, decay vectors and predicted limit radii.

For an l1-unit direction s supported on edge types whose angles fit in an
open half-plane, the saddle point u_s is the unique root of

    f_s(u, m) = sum_j s_j (sn cn / dn)((u - alpha_j)/2 | m)

in a period window around the closed-form m = 0 root
u_s(0) = arctan(sum s_j sin(alpha_j) / sum s_j cos(alpha_j)).  The decay
vector theta(u) has components -log(sqrt(k') nd((u - alpha_j)/2)) and the
predicted limit radius in R^d is 1/(theta(u_s) . s); its plane radius is
|pi(s)| times that.  As k -> 0 the rescaled plane shape tends to the unit
circle.

Directions are always reduced to a canonical frame first: coordinates
flipped nonnegative and angles rotated into (-pi/2, pi/2).  The flips
negate the matching theta components and the rotation shifts u, so radii
and decay products are frame-invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .elliptic import ElliptParams, jacobi_sn_cn_dn
from .errors import InvariantViolation, NotAdmissibleError, RootLocationError
from .isograph import IsoradialGraph, SurfaceLift, project

ROOT_SCAN_POINTS = 256


@dataclass(frozen=True)
class OrientationRecord:
    """Sign flips and frame rotation applied by canonical_orientation."""

    flips: np.ndarray      # (d,) entries +-1
    rotation: float        # natural radians subtracted from every angle


@dataclass(frozen=True)
class DirectionProfile:
    """A direction with its saddle point, decay vector and limit radius.

    All arrays live in the canonical frame: s has nonnegative entries
    summing to 1, alpha_bar angles lie in (-pi/2, pi/2) on the support.
    radius = 1/(theta_us . s) is the predicted limit radius in R^d per
    unit log N.
    """

    s: np.ndarray
    alpha_bar: np.ndarray
    u_s: float
    theta_us: np.ndarray
    radius: float
    orientation: OrientationRecord

    def chi(self, u: float, p: ElliptParams) -> float:
        """Directional log-decay rate -theta(u) . s at elliptic argument u."""
        return -float(theta_vector(u, self.alpha_bar, p) @ self.s)


def canonical_orientation(s, palette):
    """Reorient a direction into the nonnegative orthant and a half-plane.

    Coordinates with s_j < 0 are flipped (their angle shifted by pi); the
    forced support angles must then fit in an open half-plane, which is
    rotated to be centered at zero.  Non-support angles get the flip that
    lands them in [-pi/2, pi/2) as well.

    Returns:
        (s_canonical, alpha_bar_canonical, OrientationRecord)

    Raises:
        NotAdmissibleError: if no open half-plane contains the support.
    """
    s = np.asarray(s, dtype=float)
    palette = np.asarray(palette, dtype=float)
    norm = np.abs(s).sum()
    if norm == 0:
        raise NotAdmissibleError("zero direction")
    s = s / norm
    flips = np.where(s < 0, -1, 1).astype(np.int8)
    s_c = s * flips
    forced = (palette + np.where(flips < 0, math.pi, 0.0)) % (2 * math.pi)

    support = s_c > 0
    ang = np.sort(forced[support])
    if len(ang) == 1:
        arc_start, arc_len = ang[0], 0.0
    else:
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
        widest = int(np.argmax(gaps))
        arc_len = 2 * math.pi - gaps[widest]
        arc_start = ang[(widest + 1) % len(ang)]
    if arc_len >= math.pi - 1e-12:
        raise NotAdmissibleError(
            f"support angles span an arc of {arc_len:.6f} >= pi; "
            "direction is not realizable by a monotone path")
    rotation = (arc_start + arc_len / 2.0) % (2 * math.pi)

    alpha_c = np.empty_like(palette)
    for j in range(len(palette)):
        beta = math.remainder(forced[j] - rotation, 2 * math.pi)
        if not support[j] and not -math.pi / 2 <= beta < math.pi / 2:
            flips[j] = -flips[j]
            beta = math.remainder(beta + math.pi, 2 * math.pi)
        alpha_c[j] = beta
    if not (np.dot(s_c, np.cos(alpha_c)) > 0):
        raise NotAdmissibleError("reoriented direction has nonpositive cosine sum")
    return s_c, alpha_c, OrientationRecord(flips=flips, rotation=rotation)


def f_s_eval(u: float, s, alpha_bar, p: ElliptParams) -> float:
    """f_s(u, m) = sum_j s_j (sn cn / dn)((u - alpha_j)/2 | m).

    alpha_bar are natural angles; the elliptic rescaling by 2K/pi is
    applied here.  At m = 0 this reduces to (1/2) sum s_j sin(u - alpha).
    """
    total = 0.0
    for sj, ab in zip(s, alpha_bar):
        if sj == 0:
            continue
        v = 0.5 * (u - p.elliptic_angle(ab))
        sn, cn, dn = jacobi_sn_cn_dn(v, p)
        total += sj * sn * cn / dn
    return total


def u_s_zero(s, alpha_bar) -> float:
    """Closed-form saddle point at m = 0: arctan of the sine/cosine sums."""
    s = np.asarray(s, dtype=float)
    a = np.asarray(alpha_bar, dtype=float)
    den = float(np.dot(s, np.cos(a)))
    num = float(np.dot(s, np.sin(a)))
    if den <= 0:
        raise NotAdmissibleError("cosine sum must be positive (canonical frame)")
    return math.atan(num / den)


def saddle_point_u(s, alpha_bar, p: ElliptParams, scan_points: int = ROOT_SCAN_POINTS) -> float:
    """Locate the saddle point: the ascending root of f_s nearest u_s(0).

    Scans one full period (length 4K) centered on the elliptic rescaling
    of the m = 0 closed form, brackets every sign change, picks the
    ascending one nearest the anchor and polishes with Brent's method to
    |f_s| < 1e-12.

    Raises:
        RootLocationError: if the scan finds no sign change (carries the
            scanned samples for diagnosis).
    """
    anchor = p.elliptic_angle(u_s_zero(s, alpha_bar))
    period = 4.0 * p.K
    grid = anchor + np.linspace(-0.5 * period, 0.5 * period, scan_points, endpoint=False)
    vals = np.array([f_s_eval(u, s, alpha_bar, p) for u in grid])

    sign = np.sign(vals)
    nz = sign != 0
    crossings = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            crossings.append((grid[i], grid[i], vals[i + 1] - vals[i]))
        elif sign[i] * sign[i + 1] < 0:
            crossings.append((grid[i], grid[i + 1], vals[i + 1] - vals[i]))
    if not crossings:
        raise RootLocationError("no sign change of f_s in the scan window",
                                samples=(grid, vals))
    ascending = [c for c in crossings if c[2] > 0]
    pool = ascending if ascending else crossings
    lo, hi, _ = min(pool, key=lambda c: abs(0.5 * (c[0] + c[1]) - anchor))
    if lo == hi:
        root = lo
    else:
        root = brentq(lambda x: f_s_eval(x, s, alpha_bar, p), lo, hi,
                      xtol=1e-15, rtol=8.9e-16)
    resid = abs(f_s_eval(root, s, alpha_bar, p))
    if resid > 1e-12:
        raise RootLocationError(f"root residual {resid:.3e} exceeds 1e-12",
                                samples=(grid, vals))
    return float(root)


def theta_vector(u: float, alpha_bar, p: ElliptParams) -> np.ndarray:
    """Decay vector theta(u): components -log(sqrt(k') nd((u - alpha_j)/2)).

    Computed as -(1/4) log1p(-m) + (1/2) log1p(-m sn^2) per component,
    which stays accurate down to m ~ 1e-12.
    """
    out = np.empty(len(alpha_bar))
    for j, ab in enumerate(alpha_bar):
        v = 0.5 * (u - p.elliptic_angle(ab))
        sn, _, _ = jacobi_sn_cn_dn(v, p)
        out[j] = -0.25 * math.log1p(-p.m) + 0.5 * math.log1p(-p.m * sn * sn)
    return out


def direction_profile(s, palette, p: ElliptParams) -> DirectionProfile:
    """Full directional profile: canonical frame, saddle point, radius.

    Raises:
        InvariantViolation: if theta(u_s) . s is not positive (the decay
            product must be, for admissible directions and k > 0).
    """
    s_c, alpha_c, orient = canonical_orientation(s, palette)
    u_s = saddle_point_u(s_c, alpha_c, p)
    theta = theta_vector(u_s, alpha_c, p)
    decay = float(theta @ s_c)
    if decay <= 0:
        raise InvariantViolation(f"theta(u_s).s = {decay} is not positive")
    return DirectionProfile(s=s_c, alpha_bar=alpha_c, u_s=u_s, theta_us=theta,
                            radius=1.0 / decay, orientation=orient)


def predicted_radius(s, palette, p: ElliptParams) -> float:
    """Predicted limit radius 1/(theta(u_s) . s) in R^d per unit log N."""
    if p.k == 0.0:
        raise ValueError("massless weights have no finite limit radius")
    return direction_profile(s, palette, p).radius


def theta_zero_radius(s, alpha_bar) -> float:
    """Massless limit radius 1/(sum_j s_j cos(u_s(0) - alpha_j)).

    The corresponding plane point has modulus exactly 1: the rescaled
    plane limit shape is the unit circle.
    """
    u0 = u_s_zero(s, alpha_bar)
    s = np.asarray(s, dtype=float)
    den = float(np.dot(s, np.cos(u0 - np.asarray(alpha_bar))))
    return 1.0 / den


@dataclass
class ShapeCurve:
    """Sampled predicted plane limit shape.

    Per plane-direction bin: the estimated lift direction n(v-hat), the
    R^d radius and the plane radius (both per unit log N).  Bins with no
    annulus vertices carry NaN rows.
    """

    angles: np.ndarray
    n_of_v: np.ndarray
    radius_rd: np.ndarray
    radius_plane: np.ndarray
    k: float
    normalization: str = "logN"

    @property
    def max_adjacent_jump(self) -> float:
        r = self.radius_plane[~np.isnan(self.radius_plane)]
        if len(r) < 2:
            return 0.0
        return float(np.abs(np.diff(np.concatenate([r, r[:1]]))).max())


def predicted_plane_shape(g: IsoradialGraph, lift: SurfaceLift, p: ElliptParams,
                          n_samples: int, annulus) -> ShapeCurve:
    """Predicted plane limit shape from finite-annulus direction estimates.

    For each of n_samples plane-direction bins, vertices of the annulus
    estimate the limiting lift direction n(v-hat); the profile of that
    direction gives the R^d radius, and |pi(n(v-hat))| rescales it to the
    plane.
    """
    if p.k == 0.0:
        raise ValueError("massless weights have no finite limit radius")
    r1, r2 = annulus
    norm1 = lift.norm1_primal
    sel = np.flatnonzero((norm1 >= r1) & (norm1 <= r2))
    if len(sel) == 0:
        raise ValueError(f"no vertices with |n|_1 in [{r1}, {r2}]")
    pos = g.positions - g.positions[g.origin]
    angle = np.angle(pos[sel]) % (2 * math.pi)
    which = np.minimum((angle / (2 * math.pi) * n_samples).astype(int), n_samples - 1)
    reduced = lift.reduced(sel)

    angles = (np.arange(n_samples) + 0.5) * 2 * math.pi / n_samples
    n_of_v = np.full((n_samples, g.d), np.nan)
    radius_rd = np.full(n_samples, np.nan)
    radius_plane = np.full(n_samples, np.nan)
    for b in range(n_samples):
        hit = which == b
        if not hit.any():
            continue
        mean = reduced[hit].mean(axis=0)
        s = mean / np.abs(mean).sum()
        prof = direction_profile(s, g.palette, p)
        n_of_v[b] = s
        radius_rd[b] = prof.radius
        radius_plane[b] = prof.radius * abs(project(s, g))
    return ShapeCurve(angles=angles, n_of_v=n_of_v, radius_rd=radius_rd,
                      radius_plane=radius_plane, k=p.k)
