import json
import math

import numpy as np
import pytest

from lqgballs.field import sample_gff
from lqgballs.lattice import DomainMask, build_grid, poisson_solve
from lqgballs.measure import LiouvilleMeasure, build_measure, lebesgue
from lqgballs.obstacle import Cluster, extract_cluster, grow_family, solve_lcp
from lqgballs.verify import (DiagnosticReport, annulus_functionals, boundary_mass_fraction,
                             cluster_diameter, conservation_check, continuity_proxy, crossing_count,
                             dyadic_radii, functional_m, functional_sg, gff_measure_factory,
                             harmonic_comparison_ratios, harmonic_test_suite, mean_value_residual,
                             scale_invariance_test)

from oracles import dirichlet_matrix, lattice_disk_count


@pytest.fixture(scope="module")
def flat():
    grid = build_grid(256, 1.0)
    mu = lebesgue(grid)
    cl = extract_cluster(solve_lcp(mu, 0.2, DomainMask.disk(grid, 0.9), omega=1.9), mu)
    return grid, mu, cl


def disk_cluster(grid, radius, t=1.0, touched=False):
    return Cluster(grid.radius_from() < radius, t, touched, None)


def test_report_json():
    rep = DiagnosticReport("x", tolerance=0.1)
    rep.add("a", 1)
    rep.passed = True
    d = json.loads(rep.to_json())
    assert d == {"name": "x", "values": [["a", 1.0]], "pass": True, "tolerance": 0.1, "provenance": None}
    assert rep.value("a") == 1.0
    with pytest.raises(KeyError):
        rep.value("b")


def test_mean_value_of_constant_is_exact(flat):
    grid, mu, cl = flat
    assert mean_value_residual(cl, mu, np.ones((grid.n, grid.n)), 1.0) <= 1e-15


def test_mean_value_rejects_touching(flat):
    grid, mu, _ = flat
    with pytest.raises(ValueError, match="touch"):
        mean_value_residual(disk_cluster(grid, 0.3, touched=True), mu, np.ones((grid.n, grid.n)), 1.0)


def test_harmonic_suite_on_flat_cluster(flat):
    grid, mu, cl = flat
    rep = harmonic_test_suite(cl, mu, n_green_points=4, n_subharmonic=3)
    assert rep.passed
    assert rep.value("max_residual") <= 0.03
    assert rep.value("min_subharmonic_gap") >= -1e-3


def test_green_gap_is_nonnegative_with_retained_mass():
    # sum s f - t f(0) = sum v Lap f = v(p) for f = -G(., p): the gap
    # is only negative when the partially filled rim is dropped
    grid = build_grid(128, 1.5)
    mu = build_measure(sample_gff(grid, 4), 1.0)
    dom = DomainMask.disk(grid, 1.2)
    od = solve_lcp(mu, 0.05, dom, omega=1.9, tol=1e-11)
    s, o = od.retained(), grid.origin_cell
    for p in [o] + [tuple(c) for c in np.argwhere((od.v > 0) & (od.v < od.v.max() / 50))[:5]]:
        rhs = np.zeros((grid.n, grid.n))
        rhs[p] = 1.0
        f = -poisson_solve(dom, rhs, rtol=1e-12)
        gap = float((s * f).sum() - od.t * f[o])
        assert gap == pytest.approx(od.v[p], rel=1e-6, abs=1e-10)


def test_harmonic_suite_rejects_off_center_set(flat):
    grid, mu, _ = flat
    shifted = Cluster(grid.radius_from((0.1, 0.0)) < 0.25, 0.2, False, None)
    rep = harmonic_test_suite(shifted, mu, n_green_points=4, n_subharmonic=2)
    assert not rep.passed
    assert rep.value("residual[Re z^1]") > 0.05


def test_conservation_cases(flat):
    grid, mu, _ = flat
    # a cluster of radius ~100 cells: the partially filled rim holds under 2% of t
    cl = extract_cluster(solve_lcp(mu, 0.5, DomainMask.disk(grid, 0.9), omega=1.9), mu)
    rep = conservation_check(cl, mu, 0.5)
    assert rep.passed and 0.98 <= rep.value("ratio") <= 1 + 1e-9
    one = Cluster(np.zeros((grid.n, grid.n), dtype=bool), 1e-9, False, None)
    one.mask[grid.origin_cell] = True
    assert conservation_check(one, mu, 1e-9).passed is None
    small = disk_cluster(grid, 0.2, touched=True)
    m = mu.masses[small.mask].sum()
    assert conservation_check(small, mu, 2 * m).passed     # ratio 0.5 is fine when touching
    assert not conservation_check(disk_cluster(grid, 0.2), mu, 2 * m).passed
    assert not conservation_check(small, mu, 0.5 * m).passed


def test_boundary_fraction():
    grid = build_grid(64, 1.0)
    mu = lebesgue(grid)
    sq = np.zeros((64, 64), dtype=bool)
    sq[10:20, 10:20] = True
    assert boundary_mass_fraction(Cluster(sq, 1.0, False, None), mu) == pytest.approx(36 / 100)
    grid = build_grid(512, 1.0)
    r = 0.5
    frac = boundary_mass_fraction(disk_cluster(grid, r), lebesgue(grid))
    # a lattice circle has max(|cos θ|, |sin θ|) boundary cells per unit length, 2√2/π on average
    assert frac == pytest.approx(4 * math.sqrt(2) * grid.spacing / (math.pi * r), rel=0.05)


def test_crossing_count():
    grid = build_grid(128, 1.0)
    rho = 0.2
    empty = Cluster(np.zeros((128, 128), dtype=bool), 1.0, False, None)
    assert crossing_count(empty, grid, (0.0, 0.0), rho) == 0
    assert crossing_count(disk_cluster(grid, 0.6), grid, (0.0, 0.0), rho) == 1
    # two separate horizontal arms crossing the annulus
    arms = np.zeros((128, 128), dtype=bool)
    o = grid.origin_cell
    arms[o[0] + 5:, o[1] - 1:o[1] + 2] = True
    arms[:o[0] - 4, o[1] - 1:o[1] + 2] = True
    assert crossing_count(Cluster(arms, 1.0, False, None), grid, (0.0, 0.0), rho) == 2
    inner_only = disk_cluster(grid, 0.3)
    assert crossing_count(inner_only, grid, (0.0, 0.0), rho) == 0


def test_dyadic_radii():
    assert dyadic_radii(1 / 128, 0.375) == [0.09375, 0.046875]
    assert dyadic_radii(1 / 128, 0.25) == [0.0625, 0.03125]


def test_functional_m_gamma0():
    grid = build_grid(256, 1.0)
    mu = lebesgue(grid)
    rho = 0.375      # dyadic radii 12 and 6 cells
    got = functional_m(mu, (0.0, 0.0), rho)
    expect = min(lattice_disk_count(r / grid.spacing) * grid.spacing ** 2 * (rho / r) ** 2
                 for r in (0.09375, 0.046875))
    assert got == pytest.approx(expect, rel=1e-12)
    # the smallest dyadic radius is always 4-8 cells, where lattice disks undercount by a few percent
    assert got == pytest.approx(math.pi * rho ** 2, rel=0.05)


def test_functional_sg_gamma0_closed_form():
    grid = build_grid(256, 1.0)
    mu = lebesgue(grid)
    rho = 0.375
    r_in, r_out = rho / 4, 2 * rho
    # -Δu = 1 on the annulus, u = 0 on |x| = r_out: max at r_in
    u = (r_out ** 2 - r_in ** 2) / 4 + r_in ** 2 / 2 * math.log(r_in / r_out)
    M, SG = annulus_functionals(mu, (0.0, 0.0), rho)
    assert SG == pytest.approx(2 * math.pi * u, rel=0.03)
    assert SG > 0


def test_functional_sg_against_dense_solve():
    grid = build_grid(64, 1.5)
    mu = build_measure(sample_gff(grid, 3), 1.0)
    c = (grid.coords[35], grid.coords[30])
    r_in, r_out = 4 * grid.spacing, 12 * grid.spacing
    dom = grid.radius_from(c) < r_out
    A, cells = dirichlet_matrix(dom)
    d = grid.radius_from(c).ravel()[cells]
    ann = (d >= r_in) & (d < r_out)
    u = np.linalg.solve(A, np.where(ann, mu.masses.ravel()[cells], 0.0))
    ref = 2 * math.pi * u[ann].max()
    assert functional_sg(mu, c, r_in, r_out) == pytest.approx(ref, rel=1e-9)


def test_annulus_under_resolved():
    grid = build_grid(64, 1.0)
    with pytest.raises(ValueError, match="under-resolved"):
        annulus_functionals(lebesgue(grid), (0.0, 0.0), 8 * grid.spacing)


def test_harmonic_comparison_ratios(flat):
    grid, mu, cl = flat
    R = math.sqrt(0.2 / math.pi)
    r = 0.04
    centers = [(0.0, 0.0), (R, 0.0), (0.0, -R)]
    out = harmonic_comparison_ratios(cl, mu, r, centers)
    # the center's A_{4r,5r} lies inside the cluster, so it is skipped
    assert len(out) == 2
    assert all(x > 0 for x in out)


def test_cluster_diameter():
    grid = build_grid(64, 1.0)
    m = np.zeros((64, 64), dtype=bool)
    assert cluster_diameter(m, grid) == 0.0
    m[10, 10:20] = True     # collinear
    assert cluster_diameter(m, grid) == pytest.approx(9 * grid.spacing)
    m[15, 10] = True
    assert cluster_diameter(m, grid) == pytest.approx(math.hypot(5, 9) * grid.spacing)


def test_scale_invariance_gamma0_is_exact():
    # at γ = 0 the scaled problem is the same lattice problem, so areas agree exactly
    fac = gff_measure_factory(64, 1.5, 0.0)
    rep = scale_invariance_test(fac, 0.2, 2.0, 50, 0.0)
    assert rep.passed
    assert rep.value("p_area") == 1.0
    assert rep.value("median_area_unit") == rep.value("median_area_scaled")


def test_scale_invariance_needs_seeds():
    with pytest.raises(ValueError, match="insufficient seeds"):
        scale_invariance_test(gff_measure_factory(64, 1.5, 1.0), 0.1, 0.5, 10, 1.0)


def test_continuity_proxy():
    grid = build_grid(128, 1.0)
    mu = lebesgue(grid)
    fam = grow_family(mu, [0.05, 0.1, 0.15, 0.2], 0.5, omega=1.9)
    rep = continuity_proxy(fam, mu)
    assert rep.passed
    assert 0.5 <= rep.value("max_ratio") <= 2.0
    assert not continuity_proxy(fam, mu, bound=0.1).passed


def test_measure_mismatch_detected():
    grid = build_grid(64, 1.0)
    mu = LiouvilleMeasure(np.full((64, 64), 1e-3), 1.0, 0.1, grid)
    rep = conservation_check(disk_cluster(grid, 0.3), mu, 1.0)
    assert rep.value("ratio") == pytest.approx(mu.masses[grid.radius_from() < 0.3].sum())
