"""Discrete Gaussian free field samples normalized to zero unit-circle average."""

from __future__ import annotations

import hashlib
import math
import zlib
from dataclasses import dataclass, replace

import numpy as np
import scipy.fft

from .lattice import GridSpec, circle_cells


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Counter-based (Philox) generator for the substream ``name`` of ``seed``.

    Every random consumer in the package draws from its own named substream so
    that the field, walkers and subsampling can be re-run independently.
    """
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=(zlib.crc32(name.encode()),))
    return np.random.Generator(np.random.Philox(ss))


def _shell_order(n: int) -> np.ndarray:
    """Position of mode (a, b) in the shell enumeration by max(a, b).

    The first ``k*k`` entries of the enumeration are exactly the modes with
    ``a, b < k``, so the Gaussian attached to a mode does not depend on ``n``.
    """
    a, b = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    s = np.maximum(a, b)
    within = np.where(a == s, b, s + 1 + a)
    return s * s + within


def gff_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues of -Δ_grid on an n×n box with zero boundary, indexed by sine mode."""
    lam1 = 2.0 - 2.0 * np.cos(np.pi * np.arange(1, n + 1) / (n + 1))
    return lam1[:, None] + lam1[None, :]


@dataclass(frozen=True, eq=False)
class FieldSample:
    values: np.ndarray
    grid: GridSpec
    seed: int | None = None
    alpha0: float = 0.0
    gamma_ref: float | None = None
    normalized: bool = True

    def __post_init__(self):
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def shifted(self, f) -> "FieldSample":
        """Field plus a constant or per-cell function ``f``."""
        return replace(self, values=self.values + f)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        h.update(repr((self.grid.n, self.grid.spacing, self.alpha0)).encode())
        return h.hexdigest()


def _box_field(grid: GridSpec, seed: int) -> np.ndarray:
    n = grid.n
    noise = rng_stream(seed, "field").standard_normal(n * n)[_shell_order(n)]
    coeffs = noise / np.sqrt(gff_eigenvalues(n))
    # 2π·G_grid ≈ log(1/|z-w|): rescale so the covariance matches the whole-plane kernel.
    return math.sqrt(2 * math.pi) * scipy.fft.dstn(coeffs, type=1, norm="ortho")


def circle_mean(values: np.ndarray, grid: GridSpec, center, radius: float) -> float:
    cells = circle_cells(grid, center, radius)
    ii, jj = np.array(cells).T
    return float(values[ii, jj].mean())


def sample_gff(grid: GridSpec, seed: int) -> FieldSample:
    """Zero-boundary box GFF by sine-mode synthesis, minus its unit-circle average.

    The box half-width should be at least three times the largest domain radius
    used downstream; the unit circle must fit inside the grid.
    """
    raw = _box_field(grid, seed)
    values = raw - circle_mean(raw, grid, (0.0, 0.0), 1.0)
    return FieldSample(values, grid, seed=int(seed))


def circle_average(field: FieldSample, center, radius: float) -> float:
    return circle_mean(field.values, field.grid, center, radius)


def q_bound(gamma: float) -> float:
    """Q = 2/γ + γ/2 (infinite at γ = 0)."""
    return math.inf if gamma == 0 else 2.0 / gamma + gamma / 2.0


def add_log_singularity(field: FieldSample, alpha0: float, gamma: float) -> FieldSample:
    """Return ``h - alpha0 * log|z|`` with the origin cell cut off at spacing/2."""
    Q = q_bound(gamma)
    total = field.alpha0 + alpha0
    if not total < Q:
        raise ValueError(f"alpha0 = {total} must be < Q = 2/gamma + gamma/2 = {Q}")
    if alpha0 == 0:
        return replace(field, gamma_ref=gamma)
    r = np.maximum(field.grid.radius_from(), field.grid.spacing / 2)
    return replace(field, values=field.values - alpha0 * np.log(r),
                   alpha0=total, gamma_ref=gamma)
