"""Reference computations that share no code with the package solvers.

Everything here is written directly against numpy/scipy so that agreement with
the package is evidence, not tautology.
"""

from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import nnls


def dirichlet_matrix(dom: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense -Δ on the cells of ``dom`` (zero outside) and the flat cell indices."""
    n0, n1 = dom.shape
    cells = np.flatnonzero(dom.ravel())
    pos = {c: k for k, c in enumerate(cells)}
    A = np.zeros((cells.size, cells.size))
    for k, c in enumerate(cells):
        i, j = divmod(c, n1)
        A[k, k] = 4.0
        for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if 0 <= a < n0 and 0 <= b < n1 and (a * n1 + b) in pos:
                A[k, pos[a * n1 + b]] = -1.0
    return A, cells


def _lcp_data(masses, dom, t, origin):
    A, cells = dirichlet_matrix(dom)
    q = masses.ravel()[cells].astype(float).copy()
    q[list(cells).index(origin[0] * dom.shape[1] + origin[1])] -= t
    return A, q, cells


def lcp_nnls(masses: np.ndarray, dom: np.ndarray, t: float, origin) -> np.ndarray:
    """Odometer as the minimizer of ½vᵀAv + qᵀv over v ≥ 0 (A = -Δ, q = m - t·δ_origin).

    With A = LLᵀ this is the nonnegative least-squares problem
    min ‖Lᵀv + L⁻¹q‖, solved by Lawson-Hanson active sets.
    """
    A, q, cells = _lcp_data(masses, dom, t, origin)
    L = np.linalg.cholesky(A)
    b = -scipy.linalg.solve_triangular(L, q, lower=True)
    v, _ = nnls(L.T, b, maxiter=50 * len(q))
    out = np.zeros(dom.size)
    out[cells] = v
    return out.reshape(dom.shape)


def lcp_enumerate(masses: np.ndarray, dom: np.ndarray, t: float, origin) -> np.ndarray:
    """Odometer by trying every active set S = {v > 0} (only for tiny domains).

    For each S solve A_SS v_S = -q_S and keep the unique S with v_S ≥ 0 and
    (Av + q) ≥ 0 off S.
    """
    A, q, cells = _lcp_data(masses, dom, t, origin)
    k = len(q)
    if k > 16:
        raise ValueError("enumeration is limited to 16 cells")
    found = []
    for size in range(k + 1):
        for S in itertools.combinations(range(k), size):
            v = np.zeros(k)
            if S:
                idx = list(S)
                v[idx] = np.linalg.solve(A[np.ix_(idx, idx)], -q[idx])
                if (v[idx] < -1e-12).any():
                    continue
            w = A @ v + q
            if (w < -1e-12).any():
                continue
            found.append(v)
    if not found:
        raise RuntimeError("no complementary solution found")
    v = found[0]
    for other in found[1:]:
        if np.abs(other - v).max() > 1e-9:
            raise RuntimeError("LCP solution is not unique")
    out = np.zeros(dom.size)
    out[cells] = v
    return out.reshape(dom.shape)


def exact_box_covariance(n: int, spacing: float, points, circle) -> np.ndarray:
    """Covariance of the normalized box field at ``points`` (cell indices).

    The raw field has covariance 2π(-Δ_box)⁻¹; subtracting the mean over the
    ``circle`` cells gives K(a,b) - K̄(a) - K̄(b) + K̄̄.
    """
    N = n * n
    main = 4.0 * np.ones(N)
    I = sp.identity(n, format="csr")
    T = sp.diags([-np.ones(n - 1), -np.ones(n - 1)], [-1, 1], format="csr")
    A = (sp.kron(I, T) + sp.kron(T, I) + sp.diags(main)).tocsc()
    lu = spla.splu(A)
    flat = lambda c: c[0] * n + c[1]  # noqa: E731
    pts = [flat(p) for p in points]
    circ = [flat(c) for c in circle]
    cols = {}
    for c in set(pts) | set(circ):
        e = np.zeros(N)
        e[c] = 1.0
        cols[c] = 2 * np.pi * lu.solve(e)
    Kbar_pt = {p: np.mean([cols[c][p] for c in circ]) for p in pts}
    Kbarbar = np.mean([[cols[c][d] for d in circ] for c in circ])
    out = np.zeros((len(pts), len(pts)))
    for a, pa in enumerate(pts):
        for b, pb in enumerate(pts):
            out[a, b] = cols[pb][pa] - Kbar_pt[pa] - Kbar_pt[pb] + Kbarbar
    return out


def disk_overlap_areas(coords: np.ndarray, spacing: float, radius: float, sub: int = 16) -> np.ndarray:
    """Area of each cell ∩ {|z| < radius}, by sub×sub midpoint sampling."""
    n = coords.size
    off = (np.arange(sub) + 0.5) / sub - 0.5
    out = np.zeros((n, n))
    near = np.abs(coords) <= radius + spacing
    idx = np.flatnonzero(near)
    for i in idx:
        xs = coords[i] + off * spacing
        for j in idx:
            ys = coords[j] + off * spacing
            inside = (xs[:, None] ** 2 + ys[None, :] ** 2) < radius ** 2
            out[i, j] = inside.mean() * spacing ** 2
    return out


def lattice_disk_count(radius_cells: float) -> int:
    """Number of integer points with |p| < radius_cells."""
    r = int(np.ceil(radius_cells))
    a = np.arange(-r, r + 1)
    return int((a[:, None] ** 2 + a[None, :] ** 2 < radius_cells ** 2).sum())
