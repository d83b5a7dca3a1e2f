"""Leaky abelian sandpile automaton on a weighted isoradial patch.

A site x is stable while its sand amount is below D(x); toppling removes
D(x) from x, sends rho(xy) to each neighbor y and destroys m^2(x).  The
odometer records the total amount emitted per site (topple count times
D(x)); the shape of the final configuration is the set of sites that
toppled at least once.  The final state and odometer do not depend on the
toppling order, which licenses every engine here:

* a queue engine (FIFO/LIFO/random order, single- or batched-topple) used
  as the sequential reference, and
* a sweep engine toppling independent sets per round with vectorized
  scatter, used for large runs and by stabilize_parallel.

Termination for k > 0 is guaranteed because each topple destroys at least
min_x m^2(x) > 0 of a finite total; that bound doubles as an enforced
iteration guard.
"""

from __future__ import annotations

import logging
import math
import random
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation, NumericalError, RegionTooSmallError
from .green import GreenField, asymptotic_params
from .isograph import IsoradialGraph, SurfaceLift
from .limitshape import direction_profile
from .weights import ModelBounds, WeightedGraph

log = logging.getLogger(__name__)


@dataclass
class SandpileState:
    """Final configuration of one stabilization run."""

    amounts: np.ndarray
    odometer: np.ndarray
    topples: np.ndarray
    N: float
    x0: int

    def mass_destroyed(self, w: WeightedGraph) -> float:
        return float(self.topples @ w.mass2)


def shape(state: SandpileState) -> np.ndarray:
    """Vertices in the shape of the final configuration: odometer > 0."""
    return np.flatnonzero(state.odometer > 0)


def _check_state(w: WeightedGraph, state: SandpileState, check_margin: bool):
    if np.any(state.amounts >= w.diag):
        raise InvariantViolation("stabilize returned an unstable configuration")
    balance = abs(state.amounts.sum() - (state.N - state.mass_destroyed(w)))
    if balance > 1e-9 * max(state.N, 1.0):
        raise InvariantViolation(f"mass balance off by {balance:.3e}")
    if check_margin:
        hot = np.zeros(w.n_vertices, dtype=bool)
        hot[shape(state)] = True
        ring = w.base.boundary | ((w.base.adjacency.astype(bool)
                                   @ w.base.boundary.astype(np.int8)) > 0)
        if (hot & ring).any():
            raise RegionTooSmallError(
                "sandpile shape reached the patch margin; enlarge the patch")


def _topple_cap(w: WeightedGraph, N: float) -> int:
    m2_min = float(w.mass2.min())
    if m2_min <= 0:
        raise ValueError("stabilization requires k > 0 (strictly positive masses)")
    return int(1.05 * N / m2_min) + w.n_vertices + 16


def _stabilize_queue(w: WeightedGraph, N: float, x0: int, policy: str,
                     order: str, seed) -> SandpileState:
    nv = w.n_vertices
    adj = w.adjacency
    indptr = adj.indptr.tolist()
    indices = adj.indices.tolist()
    rho = adj.data.tolist()
    D = w.diag.tolist()
    cap = _topple_cap(w, N)
    single = policy == "single"

    s = [0.0] * nv
    s[x0] = float(N)
    topples = [0] * nv
    inq = bytearray(nv)
    total = 0

    if order == "random":
        rng = random.Random(seed)
        pool: list[int] = []
        if s[x0] >= D[x0]:
            pool.append(x0)
            inq[x0] = 1
        while pool:
            i = rng.randrange(len(pool))
            pool[i], pool[-1] = pool[-1], pool[i]
            x = pool.pop()
            inq[x] = 0
            sx, dx = s[x], D[x]
            if sx < dx:
                continue
            q = 1 if single else int(sx // dx)
            s[x] = sx - q * dx
            topples[x] += q
            total += q
            if total > cap:
                raise NumericalError("topple count exceeded the termination bound")
            for ii in range(indptr[x], indptr[x + 1]):
                nb = indices[ii]
                s[nb] += q * rho[ii]
                if s[nb] >= D[nb] and not inq[nb]:
                    inq[nb] = 1
                    pool.append(nb)
            if s[x] >= dx and not inq[x]:
                inq[x] = 1
                pool.append(x)
    else:
        popleft = order == "fifo"
        dq: deque[int] = deque()
        if s[x0] >= D[x0]:
            dq.append(x0)
            inq[x0] = 1
        while dq:
            x = dq.popleft() if popleft else dq.pop()
            inq[x] = 0
            sx, dx = s[x], D[x]
            if sx < dx:
                continue
            q = 1 if single else int(sx // dx)
            s[x] = sx - q * dx
            topples[x] += q
            total += q
            if total > cap:
                raise NumericalError("topple count exceeded the termination bound")
            for ii in range(indptr[x], indptr[x + 1]):
                nb = indices[ii]
                s[nb] += q * rho[ii]
                if s[nb] >= D[nb] and not inq[nb]:
                    inq[nb] = 1
                    dq.append(nb)
            if s[x] >= dx and not inq[x]:
                inq[x] = 1
                dq.append(x)

    topples = np.array(topples, dtype=np.int64)
    return SandpileState(amounts=np.array(s), odometer=topples * w.diag,
                         topples=topples, N=float(N), x0=x0)


def _greedy_coloring(g: IsoradialGraph) -> list[np.ndarray]:
    """Greedy proper coloring of the primal graph, cached on the instance."""
    cached = g.meta.get("_color_classes")
    if cached is not None:
        return cached
    adj = g.adjacency
    indptr, indices = adj.indptr, adj.indices
    color = np.full(g.n_vertices, -1, dtype=np.int16)
    for v in range(g.n_vertices):
        used = set(color[indices[indptr[v]:indptr[v + 1]]].tolist())
        c = 0
        while c in used:
            c += 1
        color[v] = c
    classes = [np.flatnonzero(color == c) for c in range(color.max() + 1)]
    g.meta["_color_classes"] = classes
    return classes


def _stabilize_sweeps(w: WeightedGraph, N: float, x0: int,
                      workers: int = 1) -> SandpileState:
    nv = w.n_vertices
    D = w.diag
    A_csc = w.adjacency.tocsc()
    classes = _greedy_coloring(w.base)
    cap = _topple_cap(w, N)

    s = np.zeros(nv)
    s[x0] = float(N)
    topples = np.zeros(nv, dtype=np.int64)
    total = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while True:
            any_active = False
            for cls in classes:
                act = cls[s[cls] >= D[cls]]
                if act.size == 0:
                    continue
                any_active = True
                q = np.floor_divide(s[act], D[act])
                s[act] -= q * D[act]
                topples[act] += q.astype(np.int64)
                total += int(q.sum())
                if total > cap:
                    raise NumericalError("topple count exceeded the termination bound")
                if pool is None or act.size < 4 * workers:
                    s += A_csc[:, act] @ q
                else:
                    chunks = np.array_split(np.arange(act.size), workers)
                    futs = [pool.submit(lambda ix: A_csc[:, act[ix]] @ q[ix], ch)
                            for ch in chunks if ch.size]
                    for f in futs:  # fixed order keeps the sum deterministic
                        s += f.result()
            if not any_active:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return SandpileState(amounts=s, odometer=topples * D, topples=topples,
                         N=float(N), x0=x0)


def stabilize(w: WeightedGraph, N: float, x0: int | None = None,
              policy: str = "batched", order: str = "fifo", seed=None,
              engine: str = "auto", check_margin: bool = True) -> SandpileState:
    """Stabilize N grains dropped at x0; returns the final state.

    policy "single" topples a site exactly once per queue pop (the
    reference rule); "batched" collapses floor(s/D) topples per pop, which
    is order-equivalent by abelianness and much faster.  order selects the
    queue discipline (fifo/lifo/random with `seed`).  engine "auto" picks
    the vectorized sweep engine on large patches (fifo/batched only).

    Raises:
        RegionTooSmallError: if the shape touches the patch margin.
        ValueError: for k = 0 (no termination guarantee).
    """
    if N < 0:
        raise ValueError("grain count must be nonnegative")
    x0 = w.base.origin if x0 is None else x0
    if engine == "auto":
        engine = ("sweeps" if w.n_vertices > 200_000 and policy == "batched"
                  and order == "fifo" else "queue")
    t0 = time.perf_counter()
    if engine == "sweeps":
        if policy != "batched" or order != "fifo":
            raise ValueError("the sweep engine only implements batched round sweeps")
        state = _stabilize_sweeps(w, N, x0)
    else:
        state = _stabilize_queue(w, N, x0, policy, order, seed)
    log.info("stabilize(N=%g, %s/%s/%s): %d topples over %d sites in %.2fs",
             N, engine, policy, order, int(state.topples.sum()),
             int((state.topples > 0).sum()), time.perf_counter() - t0)
    _check_state(w, state, check_margin)
    return state


def stabilize_parallel(w: WeightedGraph, N: float, x0: int | None = None,
                       workers: int = 1, check_margin: bool = True) -> SandpileState:
    """Round-based parallel stabilization over independent vertex classes.

    Each round topples the unstable sites of one color class at a time
    (an independent set, so the batched topples commute); the scatter of
    emitted sand is split across `workers` threads and summed in fixed
    chunk order.  By abelianness the result matches `stabilize` within
    float roundoff; the speedup is logged, not asserted.
    """
    x0 = w.base.origin if x0 is None else x0
    t0 = time.perf_counter()
    state = _stabilize_sweeps(w, N, x0, workers=max(1, workers))
    log.info("stabilize_parallel(workers=%d): %.2fs", workers, time.perf_counter() - t0)
    _check_state(w, state, check_margin)
    return state


def verify_odometer_identity(w: WeightedGraph, state: SandpileState) -> float:
    """Max-abs residual of T u = f - s0 over the patch.

    Exact on the patch up to float accumulation; callers compare against
    1e-8 * N.
    """
    from .weights import operator_T_apply

    rhs = state.amounts.copy()
    rhs[state.x0] -= state.N
    return float(np.abs(operator_T_apply(w, state.odometer) - rhs).max())


@dataclass
class ThresholdReport:
    """Outcome of the three potential-threshold checks.

    Check 1: 0 >= u(x)/N - U(x0,x) >= -alpha/N at every region vertex.
    Check 2: N*U(x0,x) > alpha implies x is in the shape.
    Check 3: N*U(x0,x) < beta implies x is not in the shape.
    All three follow from the patch-exact operator identities, so the
    violation lists should be empty up to solver roundoff.
    """

    alpha: float
    beta: float
    n_checked: int
    violations_sandwich: np.ndarray
    violations_inner: np.ndarray
    violations_outer: np.ndarray
    sandwich_margin: float

    @property
    def passed(self) -> bool:
        return (len(self.violations_sandwich) == 0
                and len(self.violations_inner) == 0
                and len(self.violations_outer) == 0)


def verify_threshold(w: WeightedGraph, state: SandpileState, green: GreenField,
                     bounds: ModelBounds, atol: float = 1e-8) -> ThresholdReport:
    """Check the sandwich and the two potential-level shape thresholds.

    The thresholds live on the potential U = Gr * D: inner alpha = c'*a
    (every x with N*U above it must have toppled), outer beta = c (every
    toppled x has N*U at least c, since one topple emits at least c).
    atol absorbs solver and accumulation roundoff only.
    """
    if bounds.degenerate:
        raise ValueError("threshold checks require k > 0")
    region = green.region
    N = state.N
    u = state.odometer[region]
    U = green.U[region]
    hot = state.topples[region] > 0
    slack = atol * max(1.0, float(U.max()))

    diff = u / N - U
    bad1 = (diff > slack) | (diff < -bounds.alpha / N - slack)
    bad2 = (U > bounds.alpha / N * (1 + 1e-12) + slack) & ~hot
    bad3 = (U < bounds.beta / N * (1 - 1e-12) - slack) & hot
    report = ThresholdReport(
        alpha=bounds.alpha,
        beta=bounds.beta,
        n_checked=len(region),
        violations_sandwich=region[bad1],
        violations_inner=region[bad2],
        violations_outer=region[bad3],
        sandwich_margin=float(diff.min() + bounds.alpha / N),
    )
    if not report.passed:
        log.warning("threshold violations: %d sandwich, %d inner, %d outer",
                    len(report.violations_sandwich), len(report.violations_inner),
                    len(report.violations_outer))
    return report


@dataclass
class RadiiReport:
    """Extremal shape radii per plane-direction bin."""

    angles: np.ndarray
    counts: np.ndarray
    r_lift_max: np.ndarray
    r_lift_min: np.ndarray
    r_plane_max: np.ndarray
    r_plane_min: np.ndarray
    directions: np.ndarray   # mean reduced lift coordinates per bin


def boundary_radii(state: SandpileState, g: IsoradialGraph, lift: SurfaceLift,
                   bins: int = 16) -> RadiiReport:
    """Bin the shape by plane direction and report extremal radii.

    Lift radii are l1 norms of n(y), plane radii moduli of the embedding
    relative to the origin; empty bins carry NaN.
    """
    hot = shape(state)
    angles = (np.arange(bins) + 0.5) * 2 * math.pi / bins
    counts = np.zeros(bins, dtype=int)
    out = {name: np.full(bins, np.nan) for name in
           ("lift_max", "lift_min", "plane_max", "plane_min")}
    dirs = np.full((bins, g.d), np.nan)
    if len(hot):
        rel = g.positions[hot] - g.positions[state.x0]
        ang = np.angle(rel) % (2 * math.pi)
        which = np.minimum((ang / (2 * math.pi) * bins).astype(int), bins - 1)
        n1 = lift.norm1_primal[hot].astype(float)
        pr = np.abs(rel)
        red = lift.reduced(hot)
        for b in range(bins):
            sel = which == b
            counts[b] = int(sel.sum())
            if counts[b]:
                out["lift_max"][b] = n1[sel].max()
                out["lift_min"][b] = n1[sel].min()
                out["plane_max"][b] = pr[sel].max()
                out["plane_min"][b] = pr[sel].min()
                far = sel & (n1 >= 0.5 * n1[sel].max())
                mean = red[far].mean(axis=0)
                dirs[b] = mean / np.abs(mean).sum()
    return RadiiReport(angles=angles, counts=counts,
                       r_lift_max=out["lift_max"], r_lift_min=out["lift_min"],
                       r_plane_max=out["plane_max"], r_plane_min=out["plane_min"],
                       directions=dirs)


def outer_radius_estimate(g, lift, w: WeightedGraph, N: float, bins: int = 16,
                          level: float | None = None):
    """Predicted extent of the shape of N grains from the potential level.

    The shape boundary sits where N * U(x0, x) falls to a level of order
    `a` (the potential column-sum bound); the default sizing level
    max(c, a/5) is safely below the observed edge values (0.6 a .. 1.3 a)
    while staying far above the proven outer bound c.  Inverting the
    directional asymptotics of U at that level gives, per sampled
    direction, a radius estimate.  Returns (max l1 radius, max plane
    radius) with no safety margin applied.
    """
    from .isograph import interior_mask

    p = w.params
    core = interior_mask(g, 2)
    if not core.any():
        core = np.ones(g.n_vertices, dtype=bool)
    # sizing wants interior-representative constants; truncated boundary
    # vertices would make c artificially small and blow up a = (c'/c)/delta
    c = float(w.diag[core].min())
    c_prime = float(w.diag[core].max())
    delta = float((w.mass2[core] / w.diag[core]).min())
    if level is None:
        a_geom = (c_prime / c) / delta
        level = max(c, a_geom / 5.0)
    d_bar = float(w.diag[core].mean())
    norm1 = lift.norm1_primal
    hi = norm1.max()
    sel = np.flatnonzero(norm1 >= 0.4 * hi)
    pos = g.positions - g.positions[g.origin]
    ang = np.angle(pos[sel]) % (2 * math.pi)
    which = np.minimum((ang / (2 * math.pi) * bins).astype(int), bins - 1)
    red = lift.reduced(sel)
    unit = np.exp(1j * g.palette)

    best_l1, best_plane = 0.0, 0.0
    for b in range(bins):
        hit = which == b
        if not hit.any():
            continue
        mean = red[hit].mean(axis=0)
        s = mean / np.abs(mean).sum()
        prof = direction_profile(s, g.palette, p)
        rate = 1.0 / prof.radius
        chi2 = asymptotic_params(prof, p).chi2_u0
        pref = p.k_prime / (2.0 * math.sqrt(2.0 * math.pi * chi2))
        target = math.log(max(N * d_bar * pref / level, 1.5))
        r = max(target / rate, 1.0)
        for _ in range(30):  # fixed point of r*rate + 0.5*log(r) = target
            r = max((target - 0.5 * math.log(max(r, 1.0))) / rate, 1.0)
        best_l1 = max(best_l1, r)
        best_plane = max(best_plane, r * abs(complex(s @ unit)))
    return best_l1, best_plane
