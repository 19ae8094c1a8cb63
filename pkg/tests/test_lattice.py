import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lqgballs.lattice import (DomainMask, GridSpec, build_grid, circle_cells, discrete_green,
                              discrete_laplacian, inner_boundary, laplacian_matrix)


def test_build_grid_spacing():
    assert build_grid(16, 1.0).spacing == 0.125
    assert build_grid(256, 1.5).spacing == pytest.approx(0.01171875, abs=1e-15)
    g = build_grid(256, 1.5)
    assert g.half_width == 1.5


@pytest.mark.parametrize("n", [15, 14, 7, 17])
def test_build_grid_rejects_bad_n(n):
    with pytest.raises(ValueError, match="n must be even and ≥ 16"):
        build_grid(n, 1.0)


def test_origin_cell_is_centered_at_zero():
    g = build_grid(64, 2.0)
    i, j = g.origin_cell
    assert g.coords[i] == 0.0 and g.coords[j] == 0.0
    assert g.cell_of((0.0, 0.0)) == g.origin_cell
    assert g.cell_of((0.49 * g.spacing, -0.49 * g.spacing)) == g.origin_cell


def test_laplacian_stencil_spike():
    g = build_grid(16, 1.0)
    u = np.zeros((16, 16))
    o = g.origin_cell
    u[o] = 1.0
    L = discrete_laplacian(u, g)
    assert L[o] == -4.0
    for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        assert L[o[0] + d[0], o[1] + d[1]] == 1.0
    assert np.abs(L).sum() == 8.0


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5))
def test_laplacian_kills_affine_fields_in_interior(a, b, c):
    g = build_grid(32, 1.0)
    X, Y = g.centers()
    L = discrete_laplacian(a * X + b * Y + c, g)
    assert np.abs(L[1:-1, 1:-1]).max() <= 1e-12 * (1 + abs(a) + abs(b) + abs(c))


def test_laplacian_respects_domain():
    g = build_grid(16, 1.0)
    dom = DomainMask.disk(g, 0.5)
    u = np.ones((16, 16))
    L = discrete_laplacian(u, g, dom)
    edge = inner_boundary(dom.mask)
    assert (L[dom.mask & ~edge] == 0).all()
    assert (L[edge] < 0).all()


def test_shape_mismatch():
    with pytest.raises(ValueError):
        discrete_laplacian(np.zeros((8, 8)), build_grid(16, 1.0))


def test_disk_domain_contract():
    g = build_grid(64, 1.0)
    dom = DomainMask.disk(g, 0.7)
    assert np.array_equal(dom.mask, g.radius_from() < 0.7)
    assert dom.mask[g.origin_cell]
    from scipy import ndimage
    assert ndimage.label(dom.mask)[1] == 1


def test_green_basic_properties():
    g = build_grid(64, 1.0)
    dom = DomainMask.disk(g, 0.9)
    o = g.origin_cell
    G = discrete_green(g, dom, o)
    assert G[o] > 0
    assert (G[dom.mask] >= 0).all()
    assert (G[~dom.mask] == 0).all()
    res = discrete_laplacian(G, g, dom)
    res[o] += 1.0
    assert np.abs(res[dom.mask]).max() <= 1e-10


def test_green_symmetry():
    g = build_grid(64, 1.0)
    dom = DomainMask.disk(g, 0.9)
    rng = np.random.default_rng(3)
    cells = np.flatnonzero(dom.mask.ravel())
    for _ in range(5):
        x, y = (divmod(int(c), 64) for c in rng.choice(cells, 2, replace=False))
        assert discrete_green(g, dom, x)[y] == pytest.approx(discrete_green(g, dom, y)[x], abs=1e-9)


def test_green_matches_continuum_log():
    # 2π G_grid(0, x) ≈ log(R/|x|) for spacing ≤ |x| ≤ R/2, within 5%
    g = build_grid(512, 1.0)
    dom = DomainMask.disk(g, 1.0)
    G = 2 * math.pi * discrete_green(g, dom, g.origin_cell)
    r = g.radius_from()
    band = (r >= 2 * g.spacing) & (r <= 0.5)
    rel = np.abs(G[band] - np.log(1.0 / r[band])) / np.log(1.0 / r[band])
    assert rel.max() <= 0.05


def test_green_rejects_outside_source():
    g = build_grid(32, 1.0)
    dom = DomainMask.disk(g, 0.5)
    with pytest.raises(ValueError):
        discrete_green(g, dom, (0, 0))


def test_empty_domain_is_singular():
    g = build_grid(16, 1.0)
    with pytest.raises(ValueError, match="empty domain"):
        laplacian_matrix(DomainMask(g, np.zeros((16, 16), dtype=bool)))


def test_circle_cells_perimeter_count():
    g = build_grid(64, 1.0)
    cells = circle_cells(g, (0.0, 0.0), 10 * g.spacing)
    assert 0.8 * 2 * math.pi * 10 <= len(cells) <= 1.2 * 2 * math.pi * 10
    assert cells == sorted(cells)


def test_circle_cells_errors():
    g = build_grid(64, 1.0)
    with pytest.raises(ValueError, match="circle under-resolved"):
        circle_cells(g, (0.0, 0.0), 0.5 * g.spacing)
    with pytest.raises(ValueError):
        circle_cells(g, (5.0, 0.0), 0.3)


@settings(max_examples=40, deadline=None)
@given(k=st.integers(2, 20), frac=st.floats(0.05, 0.45))
def test_circle_cells_stable_under_ulp(k, frac):
    # radii away from half-integer multiples of the spacing
    g = build_grid(64, 1.0)
    r = (k + frac) * g.spacing
    base = circle_cells(g, (0.0, 0.0), r)
    assert circle_cells(g, (0.0, 0.0), np.nextafter(r, np.inf)) == base
    assert circle_cells(g, (0.0, 0.0), np.nextafter(r, 0)) == base


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec(16, 0.0)
