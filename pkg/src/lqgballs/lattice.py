"""Square-grid geometry, the 4-neighbor graph Laplacian and discrete Green's functions.

Conventions used throughout the package:

* ``values[i, j]`` lives at the cell center ``((i - n/2) * spacing, (j - n/2) * spacing)``,
  so the origin cell ``(n/2, n/2)`` is centered exactly at 0.  The grid therefore
  covers ``[-L - spacing/2, L - spacing/2]`` in each coordinate, ``L = n * spacing / 2``.
* The Laplacian is the unnormalized graph Laplacian
  ``(Δu)(c) = Σ_{c'~c} (u(c') - u(c))`` with ``u = 0`` off the domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import pyamg
import scipy.sparse as sp

ORIGIN_CONVENTION = "cell (i, j) centered at ((i - n/2)*spacing, (j - n/2)*spacing); origin cell (n/2, n/2)"


@dataclass(frozen=True)
class GridSpec:
    n: int
    spacing: float

    def __post_init__(self):
        if self.n < 16 or self.n % 2:
            raise ValueError(f"n must be even and ≥ 16 (got {self.n})")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")

    @property
    def half_width(self) -> float:
        return self.n * self.spacing / 2

    @property
    def origin_cell(self) -> tuple[int, int]:
        return (self.n // 2, self.n // 2)

    @property
    def coords(self) -> np.ndarray:
        """1-D array of cell-center coordinates along either axis."""
        return (np.arange(self.n) - self.n // 2) * self.spacing

    @property
    def extent(self) -> tuple[float, float]:
        """Physical interval covered by the cells along each axis."""
        return (-self.half_width - self.spacing / 2, self.half_width - self.spacing / 2)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.coords
        return np.meshgrid(x, x, indexing="ij")

    def radius_from(self, center=(0.0, 0.0)) -> np.ndarray:
        X, Y = self.centers()
        return np.hypot(X - center[0], Y - center[1])

    def cell_of(self, point) -> tuple[int, int]:
        """Index of the cell whose center is nearest to ``point``."""
        i = int(np.floor(point[0] / self.spacing + 0.5)) + self.n // 2
        j = int(np.floor(point[1] / self.spacing + 0.5)) + self.n // 2
        return i, j

    def contains_disk(self, center, radius: float) -> bool:
        lo, hi = self.extent
        return (center[0] - radius >= lo and center[0] + radius <= hi
                and center[1] - radius >= lo and center[1] + radius <= hi)


def build_grid(n: int, half_width: float) -> GridSpec:
    if not isinstance(n, (int, np.integer)) or n < 16 or n % 2:
        raise ValueError(f"n must be even and ≥ 16 (got {n})")
    if not half_width > 0:
        raise ValueError("half_width must be positive")
    return GridSpec(int(n), 2.0 * half_width / n)


@dataclass(eq=False)
class DomainMask:
    """Set of cells on which a Dirichlet problem is posed.

    ``radius`` is the physical disk radius for disk domains and ``None`` for
    hand-built fixtures.
    """

    grid: GridSpec
    mask: np.ndarray
    radius: float | None = None
    center: tuple[float, float] = (0.0, 0.0)
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def disk(cls, grid: GridSpec, radius: float, center=(0.0, 0.0)) -> "DomainMask":
        if not radius > 0:
            raise ValueError("radius must be positive")
        mask = grid.radius_from(center) < radius
        return cls(grid, mask, float(radius), (float(center[0]), float(center[1])))

    @cached_property
    def cells(self) -> np.ndarray:
        """Flat (row-major) indices of domain cells."""
        return np.flatnonzero(self.mask.ravel())

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def enclosing_radius_cells(self, cell=None) -> float:
        """Radius, in cells, of a disk about ``cell`` containing every domain cell."""
        ci, cj = self.grid.origin_cell if cell is None else cell
        ii, jj = np.nonzero(self.mask)
        if ii.size == 0:
            return 0.0
        return float(np.sqrt(((ii - ci) ** 2 + (jj - cj) ** 2).max()))

    def touches(self, mask: np.ndarray) -> bool:
        """True if some cell of ``mask`` is 4-adjacent to a non-domain cell."""
        outside = np.pad(~self.mask, 1, constant_values=True)
        near = (outside[:-2, 1:-1] | outside[2:, 1:-1] | outside[1:-1, :-2] | outside[1:-1, 2:])
        return bool((mask & near).any())

    def same_as(self, other: "DomainMask") -> bool:
        return self.grid == other.grid and np.array_equal(self.mask, other.mask)


def _shift_sum(u: np.ndarray) -> np.ndarray:
    """Σ over the four neighbors with zero padding outside the array."""
    out = np.zeros_like(u)
    out[1:, :] += u[:-1, :]
    out[:-1, :] += u[1:, :]
    out[:, 1:] += u[:, :-1]
    out[:, :-1] += u[:, 1:]
    return out


def discrete_laplacian(values: np.ndarray, grid: GridSpec, domain: DomainMask | None = None) -> np.ndarray:
    """Unnormalized 4-neighbor Laplacian with absorbing boundary.

    Cells off ``domain`` are treated as zero when they appear as neighbors; the
    result is reported on every cell.
    """
    u = np.asarray(values, dtype=float)
    if u.shape != (grid.n, grid.n):
        raise ValueError(f"shape {u.shape} does not match grid {grid.n}x{grid.n}")
    if domain is not None:
        u = np.where(domain.mask, u, 0.0)
    return _shift_sum(u) - 4.0 * u


def laplacian_matrix(domain: DomainMask) -> sp.csr_matrix:
    """-Δ restricted to domain cells, in the order of ``domain.cells`` (SPD M-matrix)."""
    if "A" in domain._cache:
        return domain._cache["A"]
    n = domain.grid.n
    cells = domain.cells
    if cells.size == 0:
        raise ValueError("empty domain: the Dirichlet problem is singular")
    index = -np.ones(n * n, dtype=np.int64)
    index[cells] = np.arange(cells.size)
    ii, jj = np.divmod(cells, n)
    rows = [np.arange(cells.size)]
    cols = [np.arange(cells.size)]
    vals = [np.full(cells.size, 4.0)]
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        ni, nj = ii + di, jj + dj
        ok = (ni >= 0) & (ni < n) & (nj >= 0) & (nj < n)
        nb = np.full(cells.size, -1, dtype=np.int64)
        nb[ok] = index[ni[ok] * n + nj[ok]]
        ok = nb >= 0
        rows.append(np.arange(cells.size)[ok])
        cols.append(nb[ok])
        vals.append(np.full(ok.sum(), -1.0))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(cells.size, cells.size))
    domain._cache["A"] = A
    return A


def poisson_solve(domain: DomainMask, rhs: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
    """Solve ``-Δu = rhs`` on ``domain`` with ``u = 0`` elsewhere.

    AMG-preconditioned conjugate gradients; iterates until the max-norm residual
    is at most ``rtol * max|rhs|``, or at most the rounding floor
    ``1e-14 * 8 * max|u|`` when that is larger (broad right-hand sides on big
    domains).  The AMG hierarchy is cached on the domain.
    """
    n = domain.grid.n
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (n, n):
        raise ValueError("rhs shape does not match grid")
    A = laplacian_matrix(domain)
    b = rhs.ravel()[domain.cells]
    scale = np.abs(b).max()
    out = np.zeros(n * n)
    if scale == 0:
        return out.reshape(n, n)
    ml = domain._cache.get("amg")
    if ml is None:
        ml = pyamg.smoothed_aggregation_solver(A, symmetry="symmetric", max_coarse=200)
        domain._cache["amg"] = ml
    x = np.zeros_like(b)
    target = rtol * scale
    for _ in range(20):
        x = ml.solve(b, x0=x, tol=rtol * 1e-2, accel="cg", maxiter=500)
        res = np.abs(b - A @ x).max()
        if res <= max(target, 8e-14 * np.abs(x).max()):
            break
    else:
        raise RuntimeError(f"Poisson solve stalled at residual {res:.3e} (target {target:.3e})")
    out[domain.cells] = x
    return out.reshape(n, n)


def discrete_green(grid: GridSpec, domain: DomainMask, source, rtol: float = 1e-13) -> np.ndarray:
    """Green's function with ``Δ G = -1_source`` on ``domain`` and ``G = 0`` elsewhere.

    ``source`` is a cell index ``(i, j)``.  The max-norm residual is at most
    ``rtol`` (the right-hand side has unit size).
    """
    i, j = source
    if not (0 <= i < grid.n and 0 <= j < grid.n) or not domain.mask[i, j]:
        raise ValueError(f"source {source} is not inside the domain")
    rhs = np.zeros((grid.n, grid.n))
    rhs[i, j] = 1.0
    return poisson_solve(domain, rhs, rtol=rtol)


def circle_cells(grid: GridSpec, center, radius: float) -> list[tuple[int, int]]:
    """Cells whose center lies within spacing/2 of the circle ``|z - center| = radius``.

    Returned in row-major order.  The circle (thickened by half a cell) must lie
    inside the grid.
    """
    h = grid.spacing
    if radius < h:
        raise ValueError(f"circle under-resolved: radius {radius} < spacing {h}")
    if not grid.contains_disk(center, radius + h / 2):
        raise ValueError(f"circle of radius {radius} about {tuple(center)} leaves the grid")
    lo_i, lo_j = grid.cell_of((center[0] - radius - h, center[1] - radius - h))
    hi_i, hi_j = grid.cell_of((center[0] + radius + h, center[1] + radius + h))
    lo_i, lo_j = max(lo_i, 0), max(lo_j, 0)
    hi_i, hi_j = min(hi_i, grid.n - 1), min(hi_j, grid.n - 1)
    x = grid.coords
    ii, jj = np.meshgrid(np.arange(lo_i, hi_i + 1), np.arange(lo_j, hi_j + 1), indexing="ij")
    d = np.hypot(x[ii] - center[0], x[jj] - center[1])
    sel = np.abs(d - radius) <= h / 2
    return list(zip(ii[sel].tolist(), jj[sel].tolist()))


def inner_boundary(mask: np.ndarray) -> np.ndarray:
    """Cells of ``mask`` that have at least one 4-neighbor outside ``mask``."""
    padded = np.pad(mask, 1, constant_values=False)
    inner = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return mask & ~inner
