"""Odometer and cluster of the discrete obstacle problem.

Two independent solvers compute the same odometer ``v ≥ 0``:

* :func:`solve_divisible_sandpile` topples excess mass until every cell holds at
  most its capacity ``m(c)``;
* :func:`solve_lcp` runs projected Gauss-Seidel on the complementarity system.

Both use the unnormalized Laplacian, so the retained mass is
``s = t·1_origin + Δv`` and a topple of excess ``e`` raises ``v`` by ``e/4``.

Stopping rule.  For a domain inside a disk of ``R`` cells about the origin cell,
``max_x Σ_y G(x, y) ≤ (R + 1)² / 4``.  If every cell holds at most ``η`` above its
capacity, and every cell with ``v > 0`` at most ``η`` below it, then
``|v - v*| ≤ η (R + 1)² / 4``.  The solvers stop once that bound is below ``tol``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .lattice import DomainMask, GridSpec, discrete_laplacian
from .measure import LiouvilleMeasure

log = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-8
DEFAULT_MAX_SWEEPS = 5_000_000
SWEEP_ORDERS = ("row", "reverse", "random")


class SolverBudgetExceeded(RuntimeError):
    """A solver hit its sweep budget before meeting its stopping rule."""


class ClusterError(RuntimeError):
    """The extracted cluster violates a structural invariant."""


class GridExhausted(RuntimeError):
    """``grow_family`` could not enlarge the domain any further."""

    def __init__(self, failing_t: float, clusters: list):
        super().__init__(f"grid exhausted: cluster for t={failing_t} still touches the largest admissible domain")
        self.failing_t = failing_t
        self.clusters = clusters


@dataclass(eq=False)
class Odometer:
    v: np.ndarray
    t: float
    domain: DomainMask
    tol: float
    method: str
    sweeps: int = 0
    converged: bool = True
    leaked: float = 0.0

    def retained(self) -> np.ndarray:
        """Mass left in each cell, ``t·1_origin + Δv`` (zero off the domain)."""
        grid = self.domain.grid
        s = discrete_laplacian(self.v, grid, self.domain)
        s[grid.origin_cell] += self.t
        return np.where(self.domain.mask, s, 0.0)


@dataclass(eq=False)
class Cluster:
    mask: np.ndarray
    t: float
    touched_boundary: bool
    domain_radius: float | None
    odometer: Odometer | None = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# numba kernels (arrays padded by one cell; the padding is never in the domain)

@numba.njit(cache=True)
def _sandpile_kernel(v, s, m, dom, box, order, seed, eta, max_sweeps):
    if order == 2:
        np.random.seed(seed)
    leaked = 0.0
    emax = 0.0
    n2 = v.shape[0]
    perm = np.empty(0, dtype=np.int64)
    for sweep in range(max_sweeps):
        i0, i1, j0, j1 = box[0], box[1], box[2], box[3]
        nj = j1 - j0 + 1
        total = (i1 - i0 + 1) * nj
        # a fresh random order whenever the active box grows
        if order == 2 and perm.size != total:
            perm = np.random.permutation(total)
        emax = 0.0
        for k in range(total):
            if order == 0:
                idx = k
            elif order == 1:
                idx = total - 1 - k
            else:
                idx = perm[k]
            i = i0 + idx // nj
            j = j0 + idx % nj
            if not dom[i, j]:
                continue
            e = s[i, j] - m[i, j]
            if e <= 0.0:
                continue
            q = 0.25 * e
            v[i, j] += q
            s[i, j] = m[i, j]
            if dom[i - 1, j]:
                s[i - 1, j] += q
            else:
                leaked += q
            if dom[i + 1, j]:
                s[i + 1, j] += q
            else:
                leaked += q
            if dom[i, j - 1]:
                s[i, j - 1] += q
            else:
                leaked += q
            if dom[i, j + 1]:
                s[i, j + 1] += q
            else:
                leaked += q
            if e > emax:
                emax = e
            if i - 1 < box[0] and i - 1 >= 1:
                box[0] = i - 1
            if i + 1 > box[1] and i + 1 <= n2 - 2:
                box[1] = i + 1
            if j - 1 < box[2] and j - 1 >= 1:
                box[2] = j - 1
            if j + 1 > box[3] and j + 1 <= n2 - 2:
                box[3] = j + 1
        if emax <= eta:
            return sweep + 1, True, leaked, emax
    return max_sweeps, False, leaked, emax


@numba.njit(cache=True)
def _residual(v, m, dom, box, oi, oj, t):
    """max over the box of the over-capacity excess and of the deficit at cells with v > 0."""
    r = 0.0
    for i in range(box[0], box[1] + 1):
        for j in range(box[2], box[3] + 1):
            if not dom[i, j]:
                continue
            s = v[i - 1, j] + v[i + 1, j] + v[i, j - 1] + v[i, j + 1] - 4.0 * v[i, j]
            if i == oi and j == oj:
                s += t
            e = s - m[i, j]
            if e > r:
                r = e
            elif v[i, j] > 0.0 and -e > r:
                r = -e
    return r


@numba.njit(cache=True)
def _pgs_kernel(v, m, dom, box, oi, oj, t, omega, rthresh, max_sweeps):
    n2 = v.shape[0]
    dmax = 0.0
    for sweep in range(max_sweeps):
        i0, i1, j0, j1 = box[0], box[1], box[2], box[3]
        dmax = 0.0
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                if not dom[i, j]:
                    continue
                nb = v[i - 1, j] + v[i + 1, j] + v[i, j - 1] + v[i, j + 1]
                if i == oi and j == oj:
                    nb += t
                nv = 0.25 * (nb - m[i, j])
                if omega != 1.0:
                    nv = v[i, j] + omega * (nv - v[i, j])
                if nv < 0.0:
                    nv = 0.0
                d = abs(nv - v[i, j])
                if d > dmax:
                    dmax = d
                v[i, j] = nv
                if nv > 0.0:
                    if i - 1 < box[0] and i - 1 >= 1:
                        box[0] = i - 1
                    if i + 1 > box[1] and i + 1 <= n2 - 2:
                        box[1] = i + 1
                    if j - 1 < box[2] and j - 1 >= 1:
                        box[2] = j - 1
                    if j + 1 > box[3] and j + 1 <= n2 - 2:
                        box[3] = j + 1
        # For omega = 1 the leftover excess is at most 4·dmax, so the residual
        # only needs evaluating once that cheap bound is met.
        if 4.0 * dmax <= rthresh or (omega != 1.0 and sweep % 16 == 15):
            if _residual(v, m, dom, box, oi, oj, t) <= rthresh:
                return sweep + 1, True, dmax
    return max_sweeps, False, dmax


# ---------------------------------------------------------------------------

def _check_inputs(measure: LiouvilleMeasure, t: float, domain: DomainMask, tol: float | None):
    if domain.grid != measure.grid:
        raise ValueError("domain and measure live on different grids")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if tol is not None and not tol > 0:
        raise ValueError("tol must be positive")
    if not domain.mask[measure.grid.origin_cell]:
        raise ValueError("origin cell is not in the domain")


def _padded(grid: GridSpec, domain: DomainMask, measure: LiouvilleMeasure, v0):
    n = grid.n
    v = np.zeros((n + 2, n + 2))
    if v0 is not None:
        v[1:-1, 1:-1] = np.where(domain.mask, v0, 0.0)
    m = np.ones((n + 2, n + 2))
    m[1:-1, 1:-1] = measure.masses
    dom = np.zeros((n + 2, n + 2), dtype=np.bool_)
    dom[1:-1, 1:-1] = domain.mask
    return v, m, dom


def _initial_box(v: np.ndarray, origin) -> np.ndarray:
    n2 = v.shape[0]
    oi, oj = origin[0] + 1, origin[1] + 1
    ii, jj = np.nonzero(v > 0)
    i0, i1 = min(ii.min(initial=oi), oi), max(ii.max(initial=oi), oi)
    j0, j1 = min(jj.min(initial=oj), oj), max(jj.max(initial=oj), oj)
    return np.array([max(i0 - 1, 1), min(i1 + 1, n2 - 2), max(j0 - 1, 1), min(j1 + 1, n2 - 2)], dtype=np.int64)


def _error_factor(domain: DomainMask) -> float:
    """Upper bound on max_x Σ_y G(x, y) for the domain."""
    return (domain.enclosing_radius_cells() + 1.0) ** 2 / 4.0


def solve_divisible_sandpile(measure: LiouvilleMeasure, t: float, domain: DomainMask,
                             tol: float | None = None, *, order: str = "row", seed: int = 0,
                             warm_start: np.ndarray | None = None,
                             max_sweeps: int = DEFAULT_MAX_SWEEPS) -> Odometer:
    """Divisible sandpile: topple every over-full cell until the excess is negligible.

    Mass sent off the domain is destroyed.  ``order`` selects the sweep order
    (``"row"``, ``"reverse"`` or ``"random"``); the limit does not depend on it.
    The random order is a seeded permutation of the active box, redrawn each
    time the box grows.
    ``warm_start`` may be any odometer known to lie below the answer (e.g. the
    odometer for a smaller ``t`` or a smaller domain).
    """
    _check_inputs(measure, t, domain, tol)
    tol = DEFAULT_REL_TOL * t if tol is None else tol
    if order not in SWEEP_ORDERS:
        raise ValueError(f"order must be one of {SWEEP_ORDERS}")
    grid = measure.grid
    v, m, dom = _padded(grid, domain, measure, warm_start)
    s = np.zeros_like(v)
    s[1:-1, 1:-1] = discrete_laplacian(v[1:-1, 1:-1], grid, domain)
    s[1:-1, 1:-1][grid.origin_cell] += t
    s[~dom] = 0.0
    eta = tol / _error_factor(domain)
    box = _initial_box(v, grid.origin_cell)
    sweeps, ok, _, emax = _sandpile_kernel(v, s, m, dom, box, SWEEP_ORDERS.index(order),
                                           int(seed) % 2**32, eta, int(max_sweeps))
    odo = Odometer(v[1:-1, 1:-1].copy(), float(t), domain, float(tol), "sandpile", int(sweeps), bool(ok))
    odo.leaked = float(t - odo.retained().sum())
    if not ok:
        raise SolverBudgetExceeded(
            f"sandpile did not settle within {max_sweeps} sweeps (max excess {emax:.3e} > {eta:.3e})")
    return odo


def solve_lcp(measure: LiouvilleMeasure, t: float, domain: DomainMask, tol: float | None = None,
              *, warm_start: np.ndarray | None = None, omega: float = 1.0,
              max_sweeps: int = DEFAULT_MAX_SWEEPS, strict: bool = True) -> Odometer:
    """Projected Gauss-Seidel, row-major, from ``v = 0`` (or ``warm_start``).

    Each update sets ``v(c) = max(0, (Σ_{c'~c} v(c') + t·1_origin(c) - m(c)) / 4)``.
    ``omega > 1`` over-relaxes the update (projected SOR); the fixed point is the
    same but iterates are no longer monotone.  Convergence is certified by the
    residual, which bounds the odometer error for any iterate.

    With ``strict=False`` an exhausted sweep budget returns the partial iterate
    with ``converged = False`` instead of raising.
    """
    if not 0 < omega < 2:
        raise ValueError("omega must lie in (0, 2)")
    _check_inputs(measure, t, domain, tol)
    tol = DEFAULT_REL_TOL * max(t, 1e-300) if tol is None else tol
    grid = measure.grid
    v, m, dom = _padded(grid, domain, measure, warm_start)
    if t == 0:
        return Odometer(np.zeros((grid.n, grid.n)), 0.0, domain, tol, "lcp", 0, True)
    rthresh = tol / _error_factor(domain)
    box = _initial_box(v, grid.origin_cell)
    oi, oj = grid.origin_cell
    sweeps, ok, dmax = _pgs_kernel(v, m, dom, box, oi + 1, oj + 1, float(t), float(omega),
                                   rthresh, int(max_sweeps))
    odo = Odometer(v[1:-1, 1:-1].copy(), float(t), domain, float(tol), "lcp", int(sweeps), bool(ok))
    odo.leaked = float(t - odo.retained().sum())
    if not ok and strict:
        raise SolverBudgetExceeded(
            f"projected Gauss-Seidel did not converge within {max_sweeps} sweeps (last update {dmax:.3e})")
    return odo


def solve(measure, t, domain, tol=None, method="lcp", **kw) -> Odometer:
    if method == "lcp":
        return solve_lcp(measure, t, domain, tol, **kw)
    if method == "sandpile":
        return solve_divisible_sandpile(measure, t, domain, tol, **kw)
    raise ValueError(f"unknown method {method!r}")


def extract_cluster(odometer: Odometer, measure: LiouvilleMeasure) -> Cluster:
    """Cells that toppled or are filled to capacity, plus the origin cell.

    A cell counts as filled when its retained mass is positive and within
    ``10·tol`` of its capacity.  The result must be 4-connected; a
    disconnected mask means the solver did not converge and is an error.
    """
    dom = odometer.domain
    grid = dom.grid
    tx = 10.0 * odometer.tol
    s = odometer.retained()
    mask = (odometer.v > tx) | ((s > 0) & (s >= measure.masses - tx))
    mask &= dom.mask
    mask[grid.origin_cell] = True
    _, ncomp = ndimage.label(mask)
    if ncomp != 1:
        raise ClusterError(f"cluster mask has {ncomp} 4-connected components")
    return Cluster(mask, odometer.t, dom.touches(mask), dom.radius, odometer)


def cluster_mass(measure: LiouvilleMeasure, cluster: Cluster) -> float:
    return float(measure.masses[cluster.mask].sum())


def _near_edge(cluster: Cluster, domain: DomainMask, cells: int) -> bool:
    if domain.radius is None:
        return cluster.touched_boundary
    grid = domain.grid
    r = grid.radius_from(domain.center)[cluster.mask].max()
    return cluster.touched_boundary or r >= domain.radius - cells * grid.spacing


def grow_family(measure: LiouvilleMeasure, t_list, initial_radius: float, *, method: str = "lcp",
                rel_tol: float = DEFAULT_REL_TOL, margin_cells: int = 4,
                max_radius: float | None = None, **solver_kw) -> list[Cluster]:
    """Clusters for increasing ``t``, enlarging the disk domain whenever one gets close to it.

    The domain radius doubles (capped at ``0.9·half_width``) while the cluster
    touches the domain or comes within ``margin_cells`` of its edge.  Odometers
    are warm-started from the previous solve.  If the cap is reached and the
    cluster still touches, :class:`GridExhausted` carries the clusters found so far.
    Extra keyword arguments go to the solver (e.g. ``omega`` for ``"lcp"``).
    """
    t_list = [float(t) for t in t_list]
    if any(t <= 0 for t in t_list) or any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise ValueError("t_list must be positive and strictly increasing")
    grid = measure.grid
    cap = 0.9 * grid.half_width if max_radius is None else max_radius
    radius = min(initial_radius, cap)
    domain = DomainMask.disk(grid, radius)
    v = None
    out: list[Cluster] = []
    for t in t_list:
        while True:
            odo = solve(measure, t, domain, rel_tol * t, method=method, warm_start=v, **solver_kw)
            v = odo.v
            cl = extract_cluster(odo, measure)
            if not _near_edge(cl, domain, margin_cells):
                break
            if radius >= cap:
                if cl.touched_boundary:
                    raise GridExhausted(t, out)
                break
            radius = min(2 * radius, cap)
            log.info("t=%g: growing domain to radius %g", t, radius)
            domain = DomainMask.disk(grid, radius)
        out.append(cl)
    return out
