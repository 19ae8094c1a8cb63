"""First-passage approximation of the LQG metric on the weighted 4-neighbor grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .field import FieldSample
from .lattice import GridSpec
from .measure import LiouvilleMeasure, regularize

GAMMA_PURE = math.sqrt(8.0 / 3.0)
#: ξ = γ/d_γ is known in closed form only at γ = √(8/3), where d_γ = 4.
KNOWN_XI = {GAMMA_PURE: GAMMA_PURE / 4.0}


def known_xi(gamma: float) -> float | None:
    """ξ for ``gamma`` when it is known exactly, else ``None``."""
    for g, xi in KNOWN_XI.items():
        if abs(gamma - g) <= 1e-12:
            return xi
    return None


def resolve_xi(gamma: float, xi: float | None) -> float:
    """Explicit ``xi`` if given, otherwise the exact value for ``gamma`` (or an error)."""
    if xi is None:
        xi = known_xi(gamma)
        if xi is None:
            raise ValueError(f"xi is not known for gamma={gamma}; pass it explicitly")
    if not xi >= 0:
        raise ValueError("xi must be nonnegative")
    return float(xi)


@dataclass(frozen=True, eq=False)
class DistanceField:
    d: np.ndarray
    xi: float
    grid: GridSpec
    field_seed: int | None = None
    source: tuple[int, int] | None = None


def edge_weights(field: FieldSample, xi: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights of the edges (i,j)-(i+1,j) and (i,j)-(i,j+1)."""
    h = regularize(field.values)
    e = np.exp(xi * h / 2.0)
    delta = field.grid.spacing
    wx = delta * e[:-1, :] * e[1:, :]
    wy = delta * e[:, :-1] * e[:, 1:]
    return wx, wy


def weighted_graph(field: FieldSample, xi: float) -> sp.csr_matrix:
    n = field.grid.n
    wx, wy = edge_weights(field, xi)
    idx = np.arange(n * n).reshape(n, n)
    rows = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    cols = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    w = np.concatenate([wx.ravel(), wy.ravel()])
    g = sp.coo_matrix((w, (rows, cols)), shape=(n * n, n * n)).tocsr()
    return g + g.T


def distance_field(field: FieldSample, xi: float, source=None) -> DistanceField:
    """Dijkstra from ``source`` (default: the origin cell).

    Edge ``c ~ c'`` has length ``spacing * exp(ξ (h_ε(c) + h_ε(c')) / 2)``, with h_ε the
    same circle average that the measure uses.  It is stored as a product of two
    half-edge factors, so a constant shift of the field scales every weight by the
    same factor.
    """
    if not xi >= 0:
        raise ValueError("xi must be nonnegative")
    grid = field.grid
    src = grid.origin_cell if source is None else tuple(source)
    g = weighted_graph(field, xi)
    d = dijkstra(g, directed=False, indices=src[0] * grid.n + src[1])
    return DistanceField(d.reshape(grid.n, grid.n), float(xi), grid, field.seed, src)


def metric_ball(dist: DistanceField, u: float) -> np.ndarray:
    """Open ball ``{c : d(c) < u}``; empty for ``u = 0``."""
    if not u >= 0:
        raise ValueError("u must be nonnegative")
    return dist.d < u


def metric_ball_of_mass(dist: DistanceField, measure: LiouvilleMeasure, t: float) -> tuple[np.ndarray, float]:
    """Metric ball whose mass is closest to ``t``, and a radius ``u`` realizing it.

    The attainable masses are the prefix sums of the cells ordered by distance,
    taken only at the ends of runs of equal distance.  We scan them exactly
    rather than bisecting in ``u``; ties go to the smaller ball.
    """
    if measure.grid != dist.grid:
        raise ValueError("distance field and measure live on different grids")
    d = dist.d.ravel()
    m = measure.masses.ravel()
    finite = np.isfinite(d)
    reach = float(m[finite].sum())
    if t > reach:
        raise ValueError(f"t={t} exceeds the reachable mass {reach}")
    order = np.argsort(d, kind="stable")
    order = order[finite[order]]
    ds = d[order]
    csum = np.cumsum(m[order])
    # prefix of length k is a ball iff k = 0, k = len, or ds[k-1] < ds[k]
    ends = np.flatnonzero(np.diff(ds) > 0) + 1
    ends = np.concatenate([[0], ends, [ds.size]])
    masses = np.concatenate([[0.0], csum])[ends]
    k = ends[int(np.argmin(np.abs(masses - t)))]
    u = float(ds[k]) if k < ds.size else float(np.nextafter(ds[-1], np.inf))
    mask = np.zeros(d.size, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(dist.d.shape), u
