"""Isoradial graph builders and surface-lift machinery.

Graphs are finite patches stored explicitly: primal vertices with plane
positions, primal edges carrying the rhombus half-angle theta_bar and the
frame angle alpha_bar, plus the diamond structure (dual vertices and unit
diamond edges typed by direction).  Two builders are provided:

* a square-lattice patch (the canonical instance, d = 2), and
* a de Bruijn multigrid patch (generalized dual method), which yields a
  rhombic tiling; one bipartition class of the tiling is declared primal.

Every diamond edge is parallel to one of d palette directions, so a patch
lifts to a monotone surface in Z^d by signed counting of edge types.  The
lift, the plane projection and the finite-scale geometric diagnostics
(bi-Lipschitz constants, admissible directions, asymptotic flatness) live
here as well.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import ConstructionError, StructuralError

log = logging.getLogger(__name__)

GEOM_TOL = 1e-9


@dataclass
class IsoradialGraph:
    """A finite isoradial patch with its diamond graph.

    Primal vertices are indexed 0..n_vertices-1, dual vertices (face
    circumcenters) 0..n_duals-1.  Diamond edges are (primal, dual) pairs;
    the step from the primal endpoint to the dual endpoint equals
    diamond_sign * exp(1j * palette[diamond_type]).  Instances are treated
    as immutable once built.
    """

    kind: str
    d: int
    palette: np.ndarray
    epsilon: float
    positions: np.ndarray
    edges: np.ndarray
    theta_bar: np.ndarray
    alpha_bar: np.ndarray
    origin: int
    boundary: np.ndarray
    dual_positions: np.ndarray
    diamond_edges: np.ndarray
    diamond_type: np.ndarray
    diamond_sign: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_duals(self) -> int:
        return len(self.dual_positions)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric primal adjacency; data holds 1-based edge ids."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        eid = np.arange(1, self.n_edges + 1)
        m = sp.csr_matrix(
            (np.concatenate([eid, eid]), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(self.n_vertices, self.n_vertices),
        )
        m.sum_duplicates()
        return m

    @cached_property
    def diamond_adjacency(self) -> sp.csr_matrix:
        """Adjacency of the diamond graph; duals are offset by n_vertices."""
        nv = self.n_vertices
        p = self.diamond_edges[:, 0]
        q = self.diamond_edges[:, 1] + nv
        ones = np.ones(len(p), dtype=np.int8)
        n = nv + self.n_duals
        m = sp.csr_matrix(
            (np.concatenate([ones, ones]), (np.concatenate([p, q]), np.concatenate([q, p]))),
            shape=(n, n),
        )
        return m

    def degree(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)


@dataclass
class SurfaceLift:
    """Z^d coordinates of the diamond vertices of a patch.

    The rows of `coords` are n(y) for primal vertices first (0..nv-1),
    dual vertices after (nv..nv+nd-1).  n(origin) = 0 and adjacent diamond
    vertices differ by exactly one signed unit vector; both facts are
    verified on every edge at construction.
    """

    coords: np.ndarray
    nv: int

    @property
    def n_primal(self) -> np.ndarray:
        return self.coords[: self.nv]

    @cached_property
    def norm1(self) -> np.ndarray:
        """l1 norms for all diamond vertices."""
        return np.abs(self.coords).sum(axis=1)

    @property
    def norm1_primal(self) -> np.ndarray:
        return self.norm1[: self.nv]

    def reduced(self, idx) -> np.ndarray:
        """Reduced coordinates n(y)/|n(y)|_1 for the given primal indices.

        The origin (zero vector) reduces to the zero row.
        """
        n = self.coords[idx].astype(float)
        norms = np.abs(n).sum(axis=-1)
        return n / np.where(norms > 0, norms, 1.0)[..., None]


def project(x, g: IsoradialGraph):
    """Plane projection of Z^d (or R^d) coordinates: sum_j x_j e^{i alpha_j}."""
    unit = np.exp(1j * g.palette)
    return np.asarray(x, dtype=float) @ unit


# ---------------------------------------------------------------------------
# builders

def build_square_lattice(radius: int) -> IsoradialGraph:
    """Square-lattice patch of graph distance <= radius around the origin.

    The embedding has unit circumradius (lattice spacing sqrt(2)); every
    rhombus half-angle is pi/4 and the diamond palette has the two
    directions pi/4 and 3*pi/4.
    """
    r = int(radius)
    if r < 1:
        raise ConstructionError("square lattice radius must be >= 1")
    side = np.arange(-r, r + 1)
    I, J = np.meshgrid(side, side, indexing="ij")
    keep = np.abs(I) + np.abs(J) <= r
    I, J = I[keep], J[keep]
    nv = len(I)
    ids = -np.ones((2 * r + 3, 2 * r + 3), dtype=np.int64)
    ids[I + r + 1, J + r + 1] = np.arange(nv)
    scale = math.sqrt(2.0)
    positions = scale * (I + 1j * J)
    origin = int(ids[r + 1, r + 1])

    edges, alpha = [], []
    for di, dj, direction in ((1, 0, 0.0), (0, 1, math.pi / 2)):
        nb = ids[I + di + r + 1, J + dj + r + 1]
        ok = nb >= 0
        e = np.stack([ids[I + r + 1, J + r + 1][ok], nb[ok]], axis=1)
        edges.append(e)
        alpha.append(np.full(len(e), (direction - math.pi / 4) % (2 * math.pi)))
    edges = np.concatenate(edges).astype(np.int32)
    alpha_bar = np.concatenate(alpha)
    theta_bar = np.full(len(edges), math.pi / 4)

    # dual vertices: face centers (i+1/2, j+1/2) touching at least one vertex
    fi, fj = np.meshgrid(np.arange(-r - 1, r + 1), np.arange(-r - 1, r + 1), indexing="ij")
    fi, fj = fi.ravel(), fj.ravel()
    corner_ok = np.zeros(len(fi), dtype=bool)
    for ci, cj in ((0, 0), (1, 0), (0, 1), (1, 1)):
        ii, jj = fi + ci, fj + cj
        inside = (np.abs(ii) + np.abs(jj)) <= r
        corner_ok |= inside
    fi, fj = fi[corner_ok], fj[corner_ok]
    ndual = len(fi)
    dual_positions = scale * ((fi + 0.5) + 1j * (fj + 0.5))

    # diamond edges: primal corner -> face center, typed by palette direction
    de, dt, ds = [], [], []
    # (corner offset, type, sign): step primal->dual is sign * e^{i palette[type]}
    corner_info = (((0, 0), 0, 1), ((1, 1), 0, -1), ((1, 0), 1, 1), ((0, 1), 1, -1))
    for (ci, cj), typ, sign in corner_info:
        ii, jj = fi + ci, fj + cj
        inside = (np.abs(ii) + np.abs(jj)) <= r
        pid = ids[ii[inside] + r + 1, jj[inside] + r + 1]
        did = np.arange(ndual)[inside]
        de.append(np.stack([pid, did], axis=1))
        dt.append(np.full(inside.sum(), typ, dtype=np.int8))
        ds.append(np.full(inside.sum(), sign, dtype=np.int8))
    diamond_edges = np.concatenate(de).astype(np.int32)

    return IsoradialGraph(
        kind="square",
        d=2,
        palette=np.array([math.pi / 4, 3 * math.pi / 4]),
        epsilon=math.pi / 4,
        positions=positions,
        edges=edges,
        theta_bar=theta_bar,
        alpha_bar=alpha_bar,
        origin=origin,
        boundary=(np.abs(I) + np.abs(J)) == r,
        dual_positions=dual_positions,
        diamond_edges=diamond_edges,
        diamond_type=np.concatenate(dt),
        diamond_sign=np.concatenate(ds),
        meta={"radius": r},
    )


def _multigrid_tiles(d, gamma, grid_radius):
    """Enumerate de Bruijn tiles: integer corner coordinates per grid pair."""
    angles = math.pi * np.arange(d) / d
    ca, sa = np.cos(angles), np.sin(angles)
    corners = []
    types = []
    degenerate = 0
    for j in range(d):
        for l in range(j + 1, d):
            det = ca[j] * sa[l] - sa[j] * ca[l]  # sin(a_l - a_j) != 0
            span = int(math.ceil(grid_radius + abs(gamma[j]) + 1))
            span_l = int(math.ceil(grid_radius + abs(gamma[l]) + 1))
            nj, nl = np.meshgrid(np.arange(-span, span + 1),
                                 np.arange(-span_l, span_l + 1), indexing="ij")
            nj, nl = nj.ravel(), nl.ravel()
            rj, rl = nj - gamma[j], nl - gamma[l]
            x = (rj * sa[l] - rl * sa[j]) / det
            y = (rl * ca[j] - rj * ca[l]) / det
            inside = x * x + y * y <= grid_radius**2
            nj, nl, x, y = nj[inside], nl[inside], x[inside], y[inside]
            base = np.empty((len(nj), d), dtype=np.int64)
            for m in range(d):
                if m == j:
                    base[:, m] = nj
                elif m == l:
                    base[:, m] = nl
                else:
                    t = x * ca[m] + y * sa[m] + gamma[m]
                    degenerate += int(np.count_nonzero(np.abs(t - np.round(t)) < GEOM_TOL))
                    base[:, m] = np.ceil(t).astype(np.int64)
            if len(base):
                corners.append(base)
                types.append(np.stack([np.full(len(base), j, dtype=np.int8),
                                       np.full(len(base), l, dtype=np.int8)], axis=1))
    if degenerate:
        raise ConstructionError(
            f"degenerate multigrid offsets: {degenerate} near-triple line intersections")
    if not corners:
        raise ConstructionError("multigrid patch is empty; increase the radius")
    return np.concatenate(corners), np.concatenate(types)


def build_multigrid_tiling(d: int, offsets, radius: float) -> IsoradialGraph:
    """De Bruijn multigrid patch: a rhombic tiling covering a disc.

    Grid j consists of the lines {z : Re(z e^{-i pi j/d}) + offsets[j]
    integer}; each pairwise line intersection dualizes to a unit rhombus.
    The tiling is the diamond graph of the returned isoradial graph; the
    bipartition class containing the vertex nearest the disc center is
    declared primal.

    Args:
        d: number of grid directions (>= 2; >= 3 for quasiperiodic patches).
        offsets: d real grid offsets.  Offsets producing a triple line
            intersection (within 1e-9) are rejected.
        radius: plane radius of the patch around its central vertex.

    Raises:
        ConstructionError: for degenerate offsets or bad parameters.
    """
    if d < 2:
        raise ConstructionError("multigrid needs at least 2 directions")
    gamma = np.asarray(offsets, dtype=float)
    if gamma.shape != (d,):
        raise ConstructionError(f"expected {d} offsets, got shape {gamma.shape}")
    slack = float(np.abs(gamma).sum()) + d
    grid_radius = 2.0 * (radius + slack) / d

    corner_base, pair_types = _multigrid_tiles(d, gamma, grid_radius)
    ntile = len(corner_base)
    # four corners per tile: K, K+e_j, K+e_l, K+e_j+e_l
    all_corners = np.repeat(corner_base, 4, axis=0)
    tj = pair_types[:, 0].astype(np.int64)
    tl = pair_types[:, 1].astype(np.int64)
    rows = 4 * np.arange(ntile)
    all_corners[rows + 1, tj] += 1          # c10
    all_corners[rows + 2, tl] += 1          # c01
    all_corners[rows + 3, tj] += 1          # c11
    all_corners[rows + 3, tl] += 1

    verts, inverse = np.unique(all_corners, axis=0, return_inverse=True)
    zeta = np.exp(1j * math.pi * np.arange(d) / d)
    pos = verts.astype(float) @ zeta
    cid = inverse.reshape(ntile, 4)  # columns: c00, c10, c01, c11

    # keep the connected component of the tiling containing the center
    te_u = np.concatenate([cid[:, 0], cid[:, 2], cid[:, 0], cid[:, 1]])
    te_v = np.concatenate([cid[:, 1], cid[:, 3], cid[:, 2], cid[:, 3]])
    te_t = np.concatenate([tj, tj, tl, tl]).astype(np.int8)
    nall = len(verts)
    tiling = sp.csr_matrix((np.ones(len(te_u), np.int8), (te_u, te_v)), shape=(nall, nall))
    ncomp, labels = connected_components(tiling + tiling.T, directed=False)
    center = int(np.argmin(np.abs(pos)))
    in_comp = labels == labels[center]
    tile_ok = in_comp[cid].all(axis=1)
    cid, tj, tl = cid[tile_ok], tj[tile_ok], tl[tile_ok]
    te_u = np.concatenate([cid[:, 0], cid[:, 2], cid[:, 0], cid[:, 1]])
    te_v = np.concatenate([cid[:, 1], cid[:, 3], cid[:, 2], cid[:, 3]])
    te_t = np.concatenate([tj, tj, tl, tl]).astype(np.int8)

    parity = (verts.sum(axis=1) & 1).astype(np.int8)
    primal_parity = int(parity[center])
    is_primal = in_comp & (parity == primal_parity)
    is_dual = in_comp & (parity != primal_parity)
    pmap = -np.ones(nall, dtype=np.int64)
    dmap = -np.ones(nall, dtype=np.int64)
    pmap[is_primal] = np.arange(is_primal.sum())
    dmap[is_dual] = np.arange(is_dual.sum())

    # tiling (diamond) edges, deduplicated
    u_is_primal = pmap[te_u] >= 0
    prim = np.where(u_is_primal, pmap[te_u], pmap[te_v])
    dual = np.where(u_is_primal, dmap[te_v], dmap[te_u])
    # step u->v along the edge is +zeta[type]; re-orient as primal->dual
    sign = np.where(u_is_primal, 1, -1).astype(np.int8)
    packed = np.stack([prim, dual, te_t.astype(np.int64), sign.astype(np.int64)], axis=1)
    packed = np.unique(packed, axis=0)
    diamond_edges = packed[:, :2].astype(np.int32)
    diamond_type = packed[:, 2].astype(np.int8)
    diamond_sign = packed[:, 3].astype(np.int8)

    # primal edges: the tile diagonal within the primal class
    angles = math.pi * np.arange(d) / d
    dphi = np.abs(angles[tj] - angles[tl])
    dphi = np.where(dphi > math.pi, 2 * math.pi - dphi, dphi)  # in (0, pi)
    c00_primal = pmap[cid[:, 0]] >= 0
    eu = np.where(c00_primal, cid[:, 0], cid[:, 1])
    ev = np.where(c00_primal, cid[:, 3], cid[:, 2])
    half = np.where(c00_primal, dphi, math.pi - dphi) / 2.0
    edges = np.stack([pmap[eu], pmap[ev]], axis=1).astype(np.int32)
    direction = np.angle(pos[ev] - pos[eu])
    alpha_bar = (direction - half) % (2 * math.pi)

    positions = pos[is_primal]
    dual_positions = pos[is_dual]
    origin = int(pmap[center])
    theta = half
    eps = float(np.minimum(theta, math.pi / 2 - theta).min())
    boundary = np.abs(positions - pos[center]) > radius - 2.5

    g = IsoradialGraph(
        kind="multigrid",
        d=d,
        palette=angles,
        epsilon=eps,
        positions=positions,
        edges=edges,
        theta_bar=theta,
        alpha_bar=alpha_bar,
        origin=origin,
        boundary=boundary,
        dual_positions=dual_positions,
        diamond_edges=diamond_edges,
        diamond_type=diamond_type,
        diamond_sign=diamond_sign,
        meta={"radius": float(radius), "offsets": gamma.tolist()},
    )
    _check_unit_rhombi(g)
    return g


def _check_unit_rhombi(g: IsoradialGraph):
    """All diamond edges must be unit and match their palette direction."""
    step = g.dual_positions[g.diamond_edges[:, 1]] - g.positions[g.diamond_edges[:, 0]]
    expect = g.diamond_sign * np.exp(1j * g.palette[g.diamond_type])
    err = np.abs(step - expect)
    if err.max() > 1e-6:
        bad = int(np.argmax(err))
        raise StructuralError(
            f"diamond edge {bad} deviates from its palette direction by {err.max():.2e}")


# ---------------------------------------------------------------------------
# surface lift

def lift_coordinates(g: IsoradialGraph) -> SurfaceLift:
    """Lift the diamond graph to Z^d by signed counting of edge types.

    Breadth-first traversal from the origin assigns coordinates along tree
    edges; afterwards every diamond edge (tree or not) is checked to step
    by exactly one signed unit vector, which certifies path-independence.

    Raises:
        StructuralError: if any cycle has nonzero holonomy, or the diamond
            graph is disconnected.
    """
    nv, ndual = g.n_vertices, g.n_duals
    ntot = nv + ndual
    order, pred = breadth_first_order(g.diamond_adjacency, g.origin, directed=False,
                                      return_predecessors=True)
    if len(order) != ntot:
        raise StructuralError(
            f"diamond graph is disconnected: reached {len(order)} of {ntot} vertices")

    # directed step table (u -> v) -> (type, signed step), resolved by search
    pe = g.diamond_edges[:, 0].astype(np.int64)
    de = g.diamond_edges[:, 1].astype(np.int64) + nv
    src = np.concatenate([pe, de])
    dst = np.concatenate([de, pe])
    typ = np.concatenate([g.diamond_type, g.diamond_type]).astype(np.int64)
    stp = np.concatenate([g.diamond_sign, -g.diamond_sign]).astype(np.int64)
    key = src * ntot + dst
    ks = np.argsort(key, kind="stable")
    key_sorted = key[ks]

    nodes = order[1:]
    parents = pred[nodes].astype(np.int64)
    want = parents * ntot + nodes
    loc = np.searchsorted(key_sorted, want)
    if np.any(key_sorted[loc] != want):
        raise StructuralError("BFS tree edge missing from diamond edge table")
    sel = ks[loc]
    step_type = typ[sel]
    step_sign = stp[sel]

    coords = np.zeros((ntot, g.d), dtype=np.int32)
    for i, node in enumerate(nodes):
        row = coords[parents[i]].copy()
        row[step_type[i]] += step_sign[i]
        coords[node] = row

    diffs = coords[de] - coords[pe]
    expect_norm = np.abs(diffs).sum(axis=1)
    along = diffs[np.arange(len(pe)), g.diamond_type.astype(np.int64)]
    bad = (expect_norm != 1) | (along != g.diamond_sign)
    if bad.any():
        raise StructuralError(
            f"nonzero holonomy: {int(bad.sum())} diamond edges violate the unit-step rule")
    return SurfaceLift(coords=coords, nv=nv)


def interior_mask(g: IsoradialGraph, margin: int) -> np.ndarray:
    """Primal vertices at graph distance > margin from the patch boundary."""
    reach = g.boundary.copy()
    adj = g.adjacency.astype(bool)
    for _ in range(int(margin)):
        reach = reach | ((adj @ reach.astype(np.int8)) > 0)
    return ~reach


# ---------------------------------------------------------------------------
# geometric diagnostics

def _support_arcs(angles):
    """Minimal covering arc per row of forced support angles (circular)."""
    # angles array (n, d) with NaN in non-support slots
    filled = np.where(np.isnan(angles), 0.0, angles) % (2 * math.pi)
    a = np.sort(np.where(np.isnan(angles), np.inf, filled), axis=1)
    counts = np.isfinite(angles).sum(axis=1)
    arcs = np.zeros(len(a))
    for i in range(len(a)):
        c = counts[i]
        if c <= 1:
            arcs[i] = 0.0
            continue
        row = a[i, :c]
        gaps = np.diff(np.concatenate([row, [row[0] + 2 * math.pi]]))
        arcs[i] = 2 * math.pi - gaps.max()
    return arcs


def bilipschitz_constants(g: IsoradialGraph, lift: SurfaceLift):
    """Certified bi-Lipschitz constants of the projection on this patch.

    For each vertex the support angles of n(y) (flipped so the counts are
    nonnegative) are rotated into a centered arc; delta_y is the cosine of
    the arc half-width and the certificate is delta = min_y delta_y.  The
    empirical sandwich delta*|n(y)|_1 <= |pi(n(y))| <= |n(y)|_1 is then
    verified on every vertex.

    Returns:
        (delta, 1.0): the certified lower and upper Lipschitz factors.

    Raises:
        StructuralError: if some vertex violates the sandwich (builder bug).
    """
    n = lift.n_primal.astype(float)
    norm1 = np.abs(n).sum(axis=1)
    plane = np.abs(project(n, g))
    nz = norm1 > 0

    flipped = g.palette[None, :] + np.where(n < 0, math.pi, 0.0)
    flipped = np.where(n != 0, flipped, np.nan)
    arcs = _support_arcs(flipped)
    half = arcs / 2.0
    delta_v = np.where(half < math.pi / 2, np.cos(half), 0.0)
    delta = float(delta_v[nz].min()) if nz.any() else 1.0

    upper_bad = plane > norm1 * (1 + GEOM_TOL) + GEOM_TOL
    lower_bad = nz & (plane < delta_v * norm1 * (1 - GEOM_TOL) - GEOM_TOL)
    if upper_bad.any() or lower_bad.any():
        offender = int(np.flatnonzero(upper_bad | lower_bad)[0])
        raise StructuralError(
            f"bi-Lipschitz sandwich violated at vertex {offender}: "
            f"|pi(n)|={plane[offender]:.6g}, |n|_1={norm1[offender]:.6g}")
    return delta, 1.0


def admissible_directions_estimate(g: IsoradialGraph, lift: SurfaceLift,
                                   annulus, dedup_tol: float = 1e-3) -> np.ndarray:
    """Reduced coordinates of vertices with |n(y)|_1 inside the annulus.

    Deduplicated on a grid of pitch dedup_tol; at finite scale this
    approximates the directions realized at infinity on the surface.
    """
    r1, r2 = annulus
    norm1 = lift.norm1_primal
    sel = np.flatnonzero((norm1 >= r1) & (norm1 <= r2))
    if len(sel) == 0:
        raise ValueError(f"no vertices with |n|_1 in [{r1}, {r2}]")
    reduced = lift.reduced(sel)
    keys = np.round(reduced / dedup_tol).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return reduced[np.sort(first)]


@dataclass
class FlatnessReport:
    """Per-direction-bin spread of reduced coordinates across annuli."""

    bin_angles: np.ndarray
    spreads: np.ndarray
    n_map: np.ndarray       # (bins, d) estimated v-hat -> n(v-hat), NaN if unseen
    counts: np.ndarray      # (bins, n_annuli)

    @property
    def max_spread(self) -> float:
        seen = ~np.isnan(self.spreads)
        return float(self.spreads[seen].max()) if seen.any() else math.nan


def check_asymptotic_flatness(g: IsoradialGraph, lift: SurfaceLift,
                              direction_bins: int, annuli) -> FlatnessReport:
    """Finite-scale flatness diagnostic.

    Bins vertices by plane direction and compares the mean reduced lift
    coordinates across the given annuli; a flat graph shows spreads
    decaying with the annulus radius.  Diagnostic only: nothing is
    asserted here.
    """
    if len(annuli) < 2:
        raise ValueError("need at least 2 annuli to measure a spread")
    bins = int(direction_bins)
    pos = g.positions - g.positions[g.origin]
    angle = np.angle(pos) % (2 * math.pi)
    which = np.minimum((angle / (2 * math.pi) * bins).astype(int), bins - 1)
    norm1 = lift.norm1_primal

    means = np.full((len(annuli), bins, g.d), np.nan)
    counts = np.zeros((bins, len(annuli)), dtype=int)
    for a, (r1, r2) in enumerate(annuli):
        sel = np.flatnonzero((norm1 >= r1) & (norm1 <= r2))
        if len(sel) == 0:
            continue
        red = lift.reduced(sel)
        for b in range(bins):
            hit = which[sel] == b
            counts[b, a] = int(hit.sum())
            if counts[b, a]:
                mean = red[hit].mean(axis=0)
                norm = np.abs(mean).sum()
                if norm > 0:
                    means[a, b] = mean / norm

    spreads = np.full(bins, np.nan)
    for b in range(bins):
        rows = means[:, b][~np.isnan(means[:, b, 0])]
        if len(rows) >= 2:
            diffs = np.abs(rows[:, None, :] - rows[None, :, :]).sum(axis=2)
            spreads[b] = diffs.max()
    outer = means[-1]
    report = FlatnessReport(
        bin_angles=(np.arange(bins) + 0.5) * 2 * math.pi / bins,
        spreads=spreads,
        n_map=outer,
        counts=counts,
    )
    log.info("flatness: %d bins, max spread %.4g", bins, report.max_spread)
    return report


# ---------------------------------------------------------------------------
# structural validation (used by tests and the verify command)

def validate_geometry(g: IsoradialGraph, sample: int | None = None) -> None:
    """Check the rhombus structure edge by edge.

    For every primal edge the two incident duals must sit at the Fig.-2
    frame angles alpha_bar and alpha_bar + 2*theta_bar from the first
    endpoint, at unit distance.  Raises StructuralError on violation.
    """
    nv = g.n_vertices
    by_primal = [[] for _ in range(nv)]
    for (p, q) in g.diamond_edges:
        by_primal[p].append(q)
    rng = np.random.default_rng(0)
    eids = np.arange(g.n_edges)
    if sample is not None and sample < g.n_edges:
        eids = rng.choice(eids, size=sample, replace=False)
    for e in eids:
        u, v = g.edges[e]
        shared = set(by_primal[u]) & set(by_primal[v])
        if not 1 <= len(shared) <= 2:
            raise StructuralError(f"edge {e} has {len(shared)} incident duals")
        want = (g.alpha_bar[e], g.alpha_bar[e] + 2 * g.theta_bar[e])
        for f in shared:
            vec = g.dual_positions[f] - g.positions[u]
            if abs(abs(vec) - 1.0) > 1e-6:
                raise StructuralError(f"dual {f} of edge {e} is not at unit distance")
            ang = np.angle(vec)
            if min(abs(math.remainder(ang - w, 2 * math.pi)) for w in want) > 1e-6:
                raise StructuralError(
                    f"dual {f} of edge {e} is not on the rhombus frame")
    if not (g.theta_bar >= g.epsilon - 1e-12).all() or \
       not (g.theta_bar <= math.pi / 2 - g.epsilon + 1e-12).all():
        raise StructuralError("an edge violates the angle bound")
