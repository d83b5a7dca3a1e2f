"""Killed-random-walk potential and Green function on truncated regions.

The potential U(x0, .) counts expected visits of the walk started at x0;
the Green function is Gr = U D^{-1}, equivalently the inverse of the
massive Laplacian.  On a finite patch both are computed exactly by two
independent routes: conjugate gradients on the symmetric positive-definite
Laplacian, and the probabilistic Neumann/Jacobi series of the transition
kernel.  Truncation uses Dirichlet-zero boundary: restricting the
Laplacian to a region while keeping the full diagonal kills the walk on
exit, so the region solve is exact for the absorbed walk.

The decay-rate constant used for region sizing is
log(sqrt(k') * nd((K - eps_ell)/2 | k)), the tight two-point bound on the
directional log-decay per unit l1 distance (attained on the square
lattice along the axes).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import breadth_first_order

from .elliptic import ElliptParams, jacobi_ratio
from .errors import NumericalError, PoleError
from .isograph import IsoradialGraph, SurfaceLift
from .weights import WeightedGraph

log = logging.getLogger(__name__)


def decay_rate_bound(p: ElliptParams, epsilon: float) -> float:
    """Upper bound on the directional log-decay rate chi(u_s), always < 0.

    Equals log(sqrt(k') * nd((K - eps_ell)/2)) where eps_ell is the
    elliptic angle bound; the extremal direction concentrates on two edge
    types at the maximal angular spread 2(K - eps_ell).

    Raises:
        ValueError: for k = 0 (no exponential decay) or a bad angle bound.
    """
    if p.k == 0.0:
        raise ValueError("massless weights have no exponential decay rate")
    eps_ell = p.elliptic_angle(epsilon)
    if not 0 < eps_ell < p.K:
        raise ValueError(f"angle bound {epsilon} out of range")
    v = 0.5 * (p.K - eps_ell)
    return math.log(math.sqrt(p.k_prime) * jacobi_ratio("nd", v, p))


def truncation_radius(p: ElliptParams, epsilon: float, tol: float,
                      cap: int = 100_000) -> int:
    """Smallest l1 radius R with (slowest decay)^R below tol.

    Used to size solve regions so the Dirichlet truncation error is below
    the solver tolerance.  For k = 0 there is no exponential bound and the
    user-supplied cap is returned with a warning.
    """
    if tol >= 1.0:
        return 0
    if p.k == 0.0:
        log.warning("k = 0: no exponential decay bound, returning cap %d", cap)
        return cap
    rate = -decay_rate_bound(p, epsilon)
    return min(cap, int(math.ceil(math.log(1.0 / tol) / rate)))


@dataclass
class GreenField:
    """Potential and Green values of one origin on a solve region.

    U and Gr are full-length vertex arrays, zero outside the region;
    Gr = U / D holds exactly by construction.  `interior` marks region
    vertices at graph distance > margin from the region's inner boundary,
    where truncation effects are negligible.
    """

    origin: int
    region: np.ndarray
    interior: np.ndarray
    U: np.ndarray
    Gr: np.ndarray
    residual: float
    method: str
    iterations: int
    cross_rel_diff: float | None = None


def _region_matrix(w: WeightedGraph, region: np.ndarray) -> sp.csr_matrix:
    return w.laplacian[region][:, region].tocsr()


def _interior_in_region(w: WeightedGraph, region: np.ndarray, margin: int) -> np.ndarray:
    nv = w.n_vertices
    in_region = np.zeros(nv, dtype=bool)
    in_region[region] = True
    seed = w.base.boundary | ~in_region
    adj = w.base.adjacency.astype(bool)
    reach = seed
    for _ in range(int(margin)):
        reach = reach | ((adj @ reach.astype(np.int8)) > 0)
    return in_region & ~reach


def _cg_solve(L: sp.csr_matrix, b: np.ndarray, rtol: float, max_iter: int):
    """Jacobi-preconditioned CG with iterative refinement to machine scale."""
    M = sp.diags(1.0 / L.diagonal())
    x = np.zeros_like(b)
    iters = 0
    scale = np.abs(b).max()
    for _ in range(6):
        r = b - L @ x
        if np.abs(r).max() <= 1e-15 * scale:
            break
        dx, info = spla.cg(L, r, rtol=max(rtol, 1e-8), atol=0.0, M=M, maxiter=max_iter)
        x = x + dx
        iters += 1
    residual = np.abs(b - L @ x).max()
    if residual > 1e-9 * scale:
        raise NumericalError(f"CG failed to converge: residual {residual:.3e}")
    return x, iters


def _neumann_solve(w, region, local_x0, omega: float, max_iter: int):
    """Jacobi iteration of u <- delta + omega * P^T u on the region."""
    A = w.adjacency[region][:, region].tocsr()
    Dr = w.diag[region]
    u = np.zeros(len(region))
    u[local_x0] = 1.0
    delta = u.copy()
    inc = math.inf
    for it in range(max_iter):
        nxt = delta + omega * (A @ (u / Dr))
        inc = np.abs(nxt - u).max()
        u = nxt
        # float fixed point: updates freeze once below an ulp of the target
        if inc <= 2e-15 * u.max():
            return u, it + 1
    raise NumericalError(
        f"Neumann series did not plateau in {max_iter} iterations "
        f"(last increment {inc:.3e})")


def solve_potential(w: WeightedGraph, x0: int, region=None, method: str = "cg",
                    margin: int = 10, rtol: float = 1e-13,
                    omega: float = 1.0, max_iter: int = 400_000) -> GreenField:
    """Solve for U(x0, .) and Gr(x0, .) on a region with absorbing boundary.

    Args:
        w: weighted patch (k > 0, or a strict subregion so the walk can
            exit and the restricted Laplacian stays definite).
        x0: origin vertex (must lie in the region).
        region: vertex indices of the solve region; None means the whole
            patch.
        method: "cg", "neumann", or "both" (cross-validates and reports
            the max relative difference on the interior).
        margin: graph-distance width of the boundary ring excluded from
            the interior flags.

    Raises:
        NumericalError: on solver non-convergence.
        ValueError: for k = 0 on the full patch (singular operator).
    """
    nv = w.n_vertices
    region = np.arange(nv) if region is None else np.asarray(region)
    if w.params.k == 0.0 and len(region) == nv:
        raise ValueError("k = 0 requires a strict subregion (absorbing boundary)")
    hit = np.flatnonzero(region == x0)
    if len(hit) == 0:
        raise ValueError("origin must lie inside the solve region")
    lx0 = int(hit[0])

    L = _region_matrix(w, region)
    b = np.zeros(len(region))
    b[lx0] = 1.0

    if method in ("cg", "both"):
        gr_loc, iters = _cg_solve(L, b, rtol, max_iter=min(max_iter, 20_000))
        used = "cg"
    elif method == "neumann":
        u_loc, iters = _neumann_solve(w, region, lx0, omega, max_iter)
        gr_loc = u_loc / w.diag[region]
        used = "neumann"
    else:
        raise ValueError(f"unknown method {method!r}")

    cross = None
    interior = _interior_in_region(w, region, margin)
    if method == "both":
        u2, _ = _neumann_solve(w, region, lx0, omega, max_iter)
        gr2 = u2 / w.diag[region]
        sel = interior[region]
        if not sel.any():
            sel = np.ones(len(region), dtype=bool)  # tiny patch: compare everywhere
        denom = np.maximum(np.abs(gr_loc[sel]), 1e-300)
        cross = float(np.abs((gr_loc[sel] - gr2[sel]) / denom).max())
        log.info("solver cross-check: max interior relative difference %.3e", cross)

    Gr = np.zeros(nv)
    Gr[region] = gr_loc
    U = Gr * w.diag
    residual = float(np.abs(L @ gr_loc - b).max())
    return GreenField(origin=x0, region=region, interior=interior, U=U, Gr=Gr,
                      residual=residual, method=used, iterations=iters,
                      cross_rel_diff=cross)


def potential_row_sums(w: WeightedGraph, region=None, rtol: float = 1e-13) -> np.ndarray:
    """sum_y U(y, x) for every x in the region, via one Laplacian solve.

    U^T 1 = D Delta^{-1} 1, so a single solve against the all-ones vector
    gives every column sum of the potential at once.
    """
    nv = w.n_vertices
    region = np.arange(nv) if region is None else np.asarray(region)
    L = _region_matrix(w, region)
    g, _ = _cg_solve(L, np.ones(len(region)), rtol, max_iter=20_000)
    out = np.zeros(nv)
    out[region] = w.diag[region] * g
    return out


# ---------------------------------------------------------------------------
# asymptotics

@dataclass(frozen=True)
class AsymptoticGreenParams:
    """Directional decay data: rate chi(u0) = -theta(u0).s and curvature."""

    direction: np.ndarray
    u0: float
    chi_u0: float
    chi2_u0: float


def asymptotic_params(profile, p: ElliptParams, fd_step: float | None = None):
    """Decay rate and curvature for a direction profile.

    chi'' is taken by central finite differences of chi(u) = -theta(u).s
    with step 1e-4*K (the curvature only enters prefactors).
    """
    h = fd_step if fd_step is not None else 1e-4 * p.K
    chi0 = profile.chi(profile.u_s, p)
    chi2 = (profile.chi(profile.u_s + h, p) - 2 * chi0
            + profile.chi(profile.u_s - h, p)) / (h * h)
    return AsymptoticGreenParams(direction=profile.s, u0=profile.u_s,
                                 chi_u0=chi0, chi2_u0=chi2)


def asymptotic_green(profile, p: ElliptParams, n_vec) -> float:
    """Saddle-point approximation of Gr(x0, y) for y with lift vector n_vec.

    Evaluates k' exp(-n.theta(u_s)) / (2 sqrt(2 pi |n|_1 chi''(u_s))) in
    the profile's canonical frame; intended for ratio comparisons against
    the exact solver.
    """
    n = np.asarray(n_vec, dtype=float)
    norm1 = np.abs(n).sum()
    if norm1 < 1:
        raise ValueError("asymptotic form needs |n|_1 >= 1")
    n_canon = profile.orientation.flips * n
    ap = asymptotic_params(profile, p)
    if ap.chi2_u0 <= 0:
        raise NumericalError(f"chi'' = {ap.chi2_u0} is not positive at u_s")
    expo = -float(n_canon @ profile.theta_us)
    return p.k_prime * math.exp(expo) / (2.0 * math.sqrt(2.0 * math.pi * norm1 * ap.chi2_u0))


def decay_regression(distances, gr_values):
    """Directional decay rate from exact Green values along a ray.

    Fits log Gr = a + b*r - (1/2) log r + c/r; the -1/2 log r term is the
    known algebraic prefactor of the saddle-point form and c/r absorbs its
    leading finite-distance correction.  Returns the rate b (negative).
    """
    r = np.asarray(distances, dtype=float)
    y = np.log(np.asarray(gr_values)) + 0.5 * np.log(r)
    basis = np.vstack([np.ones_like(r), r, 1.0 / r]).T
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    return float(coef[1])


# ---------------------------------------------------------------------------
# discrete exponential

def _exp_factor(w: WeightedGraph, alpha_bar_eff: float, u: float) -> complex:
    p = w.params
    v = 0.5 * (u - p.elliptic_angle(alpha_bar_eff))
    # sc has poles at K mod 2K (jacobi_ratio raises there)
    return 1j * math.sqrt(p.k_prime) * jacobi_ratio("sc", v, p)


def discrete_exponential(w: WeightedGraph, lift: SurfaceLift, x: int, y: int,
                         u: float) -> complex:
    """Discrete exponential between two primal vertices at real u.

    Path independence lets the product collapse to one factor per edge
    type raised to the signed step count n(y) - n(x):
    prod_j (i sqrt(k') sc((u - alpha_j)/2))^{n_j}.

    Raises:
        PoleError: if u sits on a pole of a needed factor (or of a
            reciprocal factor for negative counts).
    """
    p = w.params
    from .elliptic import POLE_MARGIN

    dn_vec = lift.coords[y].astype(int) - lift.coords[x].astype(int)
    out = complex(1.0)
    for j, nj in enumerate(dn_vec):
        if nj == 0:
            continue
        v = 0.5 * (u - p.elliptic_angle(w.base.palette[j]))
        if nj < 0 and abs(math.remainder(v, 2 * p.K)) < POLE_MARGIN * p.K:
            raise PoleError(f"reciprocal factor for type {j} has a pole at u={u}")
        f = _exp_factor(w, w.base.palette[j], u)
        out *= f**int(nj)
    return out


def diamond_path(g: IsoradialGraph, a: int, b: int) -> list[int]:
    """A diamond-graph path from a to b (global ids; duals offset by nv).

    Uses the BFS tree rooted at `a`, so different roots give structurally
    different paths between the same endpoints.
    """
    order, pred = breadth_first_order(g.diamond_adjacency, a, directed=False,
                                      return_predecessors=True)
    path = [b]
    while path[-1] != a:
        prev = pred[path[-1]]
        if prev < 0:
            raise ValueError(f"no diamond path from {a} to {b}")
        path.append(int(prev))
    return path[::-1]


def discrete_exponential_along(w: WeightedGraph, path: list[int], u: float) -> complex:
    """Discrete exponential as an explicit product along a diamond path."""
    g = w.base
    nv = g.n_vertices
    steps = {}
    for (pv, dv), t, s in zip(g.diamond_edges, g.diamond_type, g.diamond_sign):
        steps[(pv, dv + nv)] = (t, s)
        steps[(dv + nv, pv)] = (t, -s)
    out = complex(1.0)
    for a, b in zip(path[:-1], path[1:]):
        t, s = steps[(a, b)]
        alpha_eff = g.palette[t] + (0.0 if s > 0 else math.pi)
        out *= _exp_factor(w, alpha_eff, u)
    return out
