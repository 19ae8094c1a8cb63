"""File formats: flat binary grids, PNG masks, CSV tables and content hashes.

Binary grid layout (all little-endian)::

    bytes 0-3    magic b"LQGG"
    bytes 4-7    n (uint32)
    bytes 8-15   spacing (float64)
    then n*n float64 values, row-major (index [i, j], i slowest)
"""

from __future__ import annotations

import csv
import hashlib
import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"LQGG"
HEADER = struct.Struct("<4sId")


def write_grid(path, values: np.ndarray, spacing: float) -> Path:
    values = np.asarray(values, dtype="<f8")
    n = values.shape[0]
    if values.shape != (n, n):
        raise ValueError("grid values must be square")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, n, float(spacing)))
        fh.write(np.ascontiguousarray(values).tobytes())
    return path


def read_grid(path) -> tuple[np.ndarray, float]:
    data = Path(path).read_bytes()
    magic, n, spacing = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a binary grid file (magic {magic!r})")
    body = data[HEADER.size:]
    if len(body) != 8 * n * n:
        raise ValueError(f"{path}: expected {8 * n * n} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(n, n).copy(), spacing


def _to_image(arr: np.ndarray) -> np.ndarray:
    # Array index [i, j] is (x, y); images are (row = -y, col = x).
    return np.ascontiguousarray(np.flipud(arr.T))


def write_mask_png(path, mask: np.ndarray) -> Path:
    img = Image.fromarray(_to_image(np.asarray(mask, dtype=bool)))
    img.save(path, format="PNG", optimize=False)
    return Path(path)


def write_label_png(path, labels: np.ndarray, palette: list[tuple[int, int, int]]) -> Path:
    """Indexed-color PNG; ``labels`` holds palette indices (0 = background)."""
    img = Image.fromarray(_to_image(np.asarray(labels, dtype=np.uint8)), mode="P")
    flat = [c for rgb in palette for c in rgb]
    img.putpalette(flat + [0] * (768 - len(flat)))
    img.save(path, format="PNG", optimize=False)
    return Path(path)


def nested_palette(k: int) -> list[tuple[int, int, int]]:
    """White background plus ``k`` distinct colors running from blue to red."""
    out = [(255, 255, 255)]
    for idx in range(k):
        s = idx / max(k - 1, 1)
        out.append((int(40 + 200 * s), int(60 + 120 * (1 - s)), int(160 - 120 * s)))
    return out


def write_mask_rle(path, mask: np.ndarray) -> Path:
    """Run-length CSV: one row per run of True cells along the j axis."""
    mask = np.asarray(mask, dtype=bool)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j_start", "length"])
        for i in range(mask.shape[0]):
            row = np.concatenate([[False], mask[i], [False]])
            edges = np.flatnonzero(row[1:] != row[:-1])
            for a, b in zip(edges[::2], edges[1::2]):
                w.writerow([i, int(a), int(b - a)])
    return Path(path)


def read_mask_rle(path, n: int) -> np.ndarray:
    mask = np.zeros((n, n), dtype=bool)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            i, a, k = int(row["i"]), int(row["j_start"]), int(row["length"])
            mask[i, a:a + k] = True
    return mask


def write_cell_csv(path, grid, columns: dict[str, np.ndarray], where: np.ndarray | None = None) -> Path:
    """CSV with columns i, j, x, y followed by ``columns``, restricted to ``where``."""
    n = grid.n
    sel = np.ones((n, n), dtype=bool) if where is None else np.asarray(where, dtype=bool)
    ii, jj = np.nonzero(sel)
    x = grid.coords
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", *columns])
        cols = [np.asarray(c)[ii, jj] for c in columns.values()]
        for k in range(ii.size):
            w.writerow([int(ii[k]), int(jj[k]), repr(float(x[ii[k]])), repr(float(x[jj[k]])),
                        *(repr(float(c[k])) for c in cols)])
    return Path(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
