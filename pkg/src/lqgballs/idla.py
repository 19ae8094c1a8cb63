"""Capacity IDLA driven by the Liouville measure (experimental).

Each walker carries mass ``q = t / n_walkers``, starts at the origin cell and
performs simple random walk.  At every visited cell it deposits as much as the
unfilled capacity ``m(c) - filled(c)`` allows; it stops when empty or when it
steps off the domain, in which case the remainder is counted as leaked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .field import rng_stream
from .lattice import DomainMask
from .measure import LiouvilleMeasure
from .obstacle import Cluster

THRESHOLDS = (0.25, 0.5, 0.75)


@dataclass(eq=False)
class IdlaState:
    filled: np.ndarray
    walkers_done: int
    quantum: float
    seed: int
    leaked: float
    steps: int
    t: float
    domain: DomainMask

    def occupied(self, capacity: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        """Cells filled to at least ``threshold`` of their capacity."""
        return self.filled >= threshold * capacity


@numba.njit(cache=True)
def _walk(filled, m, dom, oi, oj, q, n_walkers, seed):
    np.random.seed(seed)
    leaked = 0.0
    steps = 0
    for _ in range(n_walkers):
        i, j = oi, oj
        rem = q
        while True:
            room = m[i, j] - filled[i, j]
            if room > 0.0:
                if room >= rem:
                    filled[i, j] += rem
                    rem = 0.0
                    break
                filled[i, j] = m[i, j]
                rem -= room
            k = np.random.randint(4)
            if k == 0:
                i += 1
            elif k == 1:
                i -= 1
            elif k == 2:
                j += 1
            else:
                j -= 1
            steps += 1
            if not dom[i, j]:
                leaked += rem
                break
    return leaked, steps


def run_idla(measure: LiouvilleMeasure, t: float, n_walkers: int, domain: DomainMask, seed: int) -> IdlaState:
    """Release ``n_walkers`` walkers of mass ``t / n_walkers`` one after another."""
    if n_walkers < 1:
        raise ValueError("n_walkers must be at least 1")
    if not t > 0:
        raise ValueError("t must be positive")
    if domain.grid != measure.grid:
        raise ValueError("domain and measure live on different grids")
    grid = measure.grid
    if not domain.mask[grid.origin_cell]:
        raise ValueError("origin cell is not in the domain")
    n = grid.n
    filled = np.zeros((n + 2, n + 2))
    m = np.ones((n + 2, n + 2))
    m[1:-1, 1:-1] = measure.masses
    dom = np.zeros((n + 2, n + 2), dtype=np.bool_)
    dom[1:-1, 1:-1] = domain.mask
    q = t / n_walkers
    walker_seed = int(rng_stream(seed, "walkers").integers(2**32 - 1))
    oi, oj = grid.origin_cell
    leaked, steps = _walk(filled, m, dom, oi + 1, oj + 1, q, int(n_walkers), walker_seed)
    return IdlaState(filled[1:-1, 1:-1].copy(), int(n_walkers), q, int(seed), float(leaked),
                     int(steps), float(t), domain)


def mask_agreement(a: np.ndarray, b: np.ndarray, masses: np.ndarray) -> tuple[float, float]:
    """Jaccard index of two masks and the mass of their symmetric difference."""
    union = a | b
    if not union.any():
        return 1.0, 0.0
    jac = (a & b).sum() / union.sum()
    return float(jac), float(masses[a ^ b].sum())


@dataclass
class IdlaComparison:
    jaccard: float
    symdiff_mass: float
    threshold: float
    by_threshold: dict

    def to_dict(self) -> dict:
        return {"jaccard": self.jaccard, "symdiff_mass": self.symdiff_mass,
                "threshold": self.threshold,
                "by_threshold": {str(k): v for k, v in self.by_threshold.items()}}


def compare_idla_harmonic(state: IdlaState, cluster: Cluster, measure: LiouvilleMeasure,
                          threshold: float = 0.5) -> IdlaComparison:
    """Jaccard and symmetric-difference mass of the occupied set against a cluster.

    The same numbers at the other thresholds in :data:`THRESHOLDS` are reported
    to show how much the choice of ``m/2`` matters.
    """
    if state.filled.shape != cluster.mask.shape or state.domain.grid != measure.grid:
        raise ValueError("IDLA state, cluster and measure must share a grid")
    jac, sd = mask_agreement(state.occupied(measure.masses, threshold), cluster.mask, measure.masses)
    sens = {}
    for th in THRESHOLDS:
        j2, s2 = mask_agreement(state.occupied(measure.masses, th), cluster.mask, measure.masses)
        sens[th] = {"jaccard": j2, "symdiff_mass": s2}
    return IdlaComparison(jac, sd, threshold, sens)
