"""Simulation and verification of Liouville quantum gravity harmonic balls."""

__version__ = "0.1.0"

from .field import FieldSample, add_log_singularity, circle_average, sample_gff
from .lattice import DomainMask, GridSpec, build_grid, circle_cells, discrete_green, discrete_laplacian
from .measure import LiouvilleMeasure, annulus_mass, ball_mass, build_measure
from .obstacle import (Cluster, GridExhausted, Odometer, cluster_mass, extract_cluster, grow_family,
                       solve_divisible_sandpile, solve_lcp)

__all__ = [
    "FieldSample", "add_log_singularity", "circle_average", "sample_gff",
    "DomainMask", "GridSpec", "build_grid", "circle_cells", "discrete_green", "discrete_laplacian",
    "LiouvilleMeasure", "annulus_mass", "ball_mass", "build_measure",
    "Cluster", "GridExhausted", "Odometer", "cluster_mass", "extract_cluster", "grow_family",
    "solve_divisible_sandpile", "solve_lcp",
]
