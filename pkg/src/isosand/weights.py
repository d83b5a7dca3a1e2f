"""Elliptic conductances and masses on an isoradial patch.

The conductance of an edge with rhombus half-angle theta_bar is
sc(theta | k) at the elliptic angle theta = (2K/pi) theta_bar; the squared
mass of a vertex sums A(theta|k) - sc(theta|k) over its incident edges.
At k = 0 the conductances reduce to tan(theta_bar) and every mass
vanishes (critical weights); for k > 0 all masses are strictly positive
and the random walk killed at rate m^2(x)/D(x) is uniformly transient.

Truncation policy: the finite patch is itself the model graph, so the
diagonal weight D(x) sums only over edges that exist in the patch.  All
operator identities then hold exactly on the patch; comparisons against
infinite-volume asymptotics are restricted to interior cores by callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .elliptic import ElliptParams, func_a, jacobi_ratio
from .isograph import IsoradialGraph


def conductance(theta_bar: float, p: ElliptParams) -> float:
    """Edge conductance sc((2K/pi) * theta_bar | k)."""
    return jacobi_ratio("sc", p.elliptic_angle(theta_bar), p)


def mass_term(theta_bar: float, p: ElliptParams) -> float:
    """Per-edge mass contribution (A - sc)((2K/pi) * theta_bar | k)."""
    if p.k == 0.0:
        return 0.0
    th = p.elliptic_angle(theta_bar)
    return func_a(th, p) - jacobi_ratio("sc", th, p)


def vertex_mass_squared(incident_theta_bars, p: ElliptParams) -> float:
    """Squared mass of a vertex from its incident rhombus half-angles."""
    return float(sum(mass_term(t, p) for t in incident_theta_bars))


@dataclass
class WeightedGraph:
    """An isoradial patch equipped with conductances and masses.

    rho is indexed like base.edges; mass2 and diag like base vertices,
    with diag = sum of incident rho + mass2.  Immutable once built; the
    apply operations are read-only and thread-safe.
    """

    base: IsoradialGraph
    params: ElliptParams
    rho: np.ndarray
    mass2: np.ndarray
    diag: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.base.n_vertices

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric conductance matrix A with A[x, y] = rho(xy)."""
        u, v = self.base.edges[:, 0], self.base.edges[:, 1]
        w = self.rho
        m = sp.csr_matrix(
            (np.concatenate([w, w]), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(self.n_vertices, self.n_vertices),
        )
        m.sum_duplicates()
        return m

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """Massive Laplacian D - A (symmetric, positive definite for k > 0)."""
        return (sp.diags(self.diag) - self.adjacency).tocsr()


def attach_weights(g: IsoradialGraph, p: ElliptParams) -> WeightedGraph:
    """Equip a patch with the elliptic weights for the modulus bundle p.

    Evaluations are cached per distinct half-angle, so large patches with
    a small angle palette cost only a handful of elliptic calls.
    """
    uniq, inv = np.unique(g.theta_bar, return_inverse=True)
    rho_u = np.array([conductance(t, p) for t in uniq])
    mass_u = np.array([mass_term(t, p) for t in uniq])
    rho = rho_u[inv]
    edge_mass = mass_u[inv]

    nv = g.n_vertices
    mass2 = np.zeros(nv)
    np.add.at(mass2, g.edges[:, 0], edge_mass)
    np.add.at(mass2, g.edges[:, 1], edge_mass)
    rho_sum = np.zeros(nv)
    np.add.at(rho_sum, g.edges[:, 0], rho)
    np.add.at(rho_sum, g.edges[:, 1], rho)
    return WeightedGraph(base=g, params=p, rho=rho, mass2=mass2, diag=rho_sum + mass2)


def laplacian_apply(w: WeightedGraph, f: np.ndarray) -> np.ndarray:
    """(Delta^m f)(x) = sum_y rho(xy)(f(x) - f(y)) + m^2(x) f(x)."""
    return w.diag * f - w.adjacency @ f


def operator_T_apply(w: WeightedGraph, f: np.ndarray) -> np.ndarray:
    """(T f)(x) = sum_y rho(xy)/D(y) f(y) - f(x); equals -Delta^m(D^{-1} f)."""
    return w.adjacency @ (f / w.diag) - f


def transition_kernel(w: WeightedGraph, x: int):
    """Jump probabilities from x plus the kill probability m^2(x)/D(x)."""
    adj = w.adjacency
    sl = slice(adj.indptr[x], adj.indptr[x + 1])
    nbrs = adj.indices[sl]
    probs = adj.data[sl] / w.diag[x]
    kill = w.mass2[x] / w.diag[x]
    return list(zip(nbrs.tolist(), probs.tolist())), float(kill)


@dataclass(frozen=True)
class ModelBounds:
    """Patch-level constants entering the threshold analysis.

    c and c_prime are the exact min/max of D over the patch, delta the
    exact min kill probability, and `a` a bound on the column sums of the
    potential: the measured patch value and the geometric-series bound
    (c'/c)/delta are both computed and the smaller is kept.  alpha = c'*a
    and beta = c are the inner/outer thresholds.  degenerate marks k = 0,
    where delta = 0 and the threshold theory does not apply.
    """

    epsilon: float
    c: float
    c_prime: float
    delta: float
    a: float
    a_measured: float | None
    a_geometric: float
    alpha: float
    beta: float
    degenerate: bool


def compute_model_bounds(w: WeightedGraph, potential_row_sums=None) -> ModelBounds:
    """Measure the threshold constants on the patch.

    Args:
        w: weighted patch.
        potential_row_sums: optional array of sum_y U(y, x) over patch
            vertices (from the green module); if given, the measured
            maximum sharpens the geometric-series bound.
    """
    c = float(w.diag.min())
    c_prime = float(w.diag.max())
    kill = w.mass2 / w.diag
    delta = float(kill.min())
    degenerate = delta <= 0
    if degenerate:
        a_geom = np.inf
    else:
        a_geom = (c_prime / c) / delta
    a_meas = float(np.max(potential_row_sums)) if potential_row_sums is not None else None
    a = min(x for x in (a_meas, a_geom) if x is not None)
    return ModelBounds(
        epsilon=w.base.epsilon,
        c=c,
        c_prime=c_prime,
        delta=delta,
        a=a,
        a_measured=a_meas,
        a_geometric=a_geom,
        alpha=c_prime * a,
        beta=c,
        degenerate=degenerate,
    )
