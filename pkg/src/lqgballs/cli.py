"""Command-line front end.

Each subcommand reads an optional JSON/YAML config, lets flags override it,
runs one seeded pipeline and writes its outputs plus ``manifest.json`` into the
output directory.

Exit codes: 0 ok, 1 a diagnostic failed, 2 bad configuration, 3 grid or
sweep budget exhausted.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as lio
from .field import add_log_singularity, q_bound, sample_gff
from .idla import compare_idla_harmonic, run_idla
from .lattice import ORIGIN_CONVENTION, DomainMask, build_grid
from .measure import build_measure
from .metric import distance_field, metric_ball_of_mass, resolve_xi
from .obstacle import GridExhausted, SolverBudgetExceeded, grow_family
from .verify import (DiagnosticReport, boundary_mass_fraction, conservation_check, continuity_proxy,
                     harmonic_test_suite)

log = logging.getLogger("lqgballs")

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3
SUITE_CHECKS = ("conservation", "mean_value", "boundary_fraction", "continuity")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    gamma: float = 1.0
    alpha0: float = 0.0
    xi: float | None = None
    n: int = 512
    half_width: float = 1.5
    t_list: list = field(default_factory=lambda: [0.05])
    seed: int = 0
    tol: float = 1e-8
    outputs: str = "out"
    initial_radius: float = 0.5
    method: str = "lcp"
    omega: float = 1.9
    n_walkers: int = 10_000
    suite: list = field(default_factory=lambda: list(SUITE_CHECKS))
    mask_file: str | None = None
    paired: bool = False

    def validate(self) -> "RunConfig":
        if not 0 <= self.gamma < 2:
            raise ConfigError(f"gamma must lie in [0, 2) (got {self.gamma})")
        if self.gamma > 0 and not self.alpha0 < q_bound(self.gamma):
            raise ConfigError(f"alpha0 = {self.alpha0} must be < Q = 2/gamma + gamma/2 = {q_bound(self.gamma)}")
        if not isinstance(self.n, int) or self.n < 16 or self.n % 2:
            raise ConfigError(f"n must be even and ≥ 16 (got {self.n})")
        if not self.half_width > 0:
            raise ConfigError("half_width must be positive")
        grid = build_grid(self.n, self.half_width)
        if not grid.contains_disk((0.0, 0.0), 1.0 + grid.spacing / 2):
            raise ConfigError(f"half_width {self.half_width} is too small: the field is normalized "
                              "on the unit circle, which must fit on the grid")
        ts = [float(t) for t in self.t_list]
        if not ts or any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError(f"t_list must be positive and strictly increasing (got {self.t_list})")
        self.t_list = ts
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.method not in ("lcp", "sandpile"):
            raise ConfigError(f"unknown method {self.method!r}")
        if not 0 < self.omega < 2:
            raise ConfigError("omega must lie in (0, 2)")
        if self.n_walkers < 1:
            raise ConfigError("n_walkers must be at least 1")
        if self.xi is not None and not self.xi >= 0:
            raise ConfigError("xi must be nonnegative")
        bad = [c for c in self.suite if c not in SUITE_CHECKS]
        if bad:
            raise ConfigError(f"unknown checks {bad}; choose from {list(SUITE_CHECKS)}")
        return self


def load_config(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return data


def make_config(args: argparse.Namespace) -> RunConfig:
    data = {}
    if args.config:
        try:
            data = load_config(args.config)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in names:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    return RunConfig(**data).validate()


# ---------------------------------------------------------------------------

class Run:
    """Output directory bookkeeping: files written, hashes and counters for the manifest."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg.outputs)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.extra: dict = {}
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def manifest(self) -> dict:
        import numba
        import pyamg
        import scipy
        man = {
            "command": self.command,
            "config": dataclasses.asdict(self.cfg),
            "artifacts": {name: lio.sha256_file(self.out / name) for name in sorted(self.files)},
            "wall_clock_s": round(time.perf_counter() - self.t0, 3),
            "threading": "single-threaded",
            "origin_convention": ORIGIN_CONVENTION,
            "versions": {"lqgballs": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "numba": numba.__version__, "pyamg": pyamg.__version__},
        }
        man.update(self.extra)
        return man

    def finish(self):
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)


def _field_and_measure(cfg: RunConfig, run: Run):
    grid = build_grid(cfg.n, cfg.half_width)
    f = sample_gff(grid, cfg.seed)
    if cfg.alpha0 != 0 and cfg.gamma > 0:
        f = add_log_singularity(f, cfg.alpha0, cfg.gamma)
    mu = build_measure(f, cfg.gamma)
    run.extra["field_digest"] = f.digest()
    return grid, f, mu


def _family(cfg: RunConfig, mu, run: Run):
    kw = {"omega": cfg.omega} if cfg.method == "lcp" else {}
    fam = grow_family(mu, cfg.t_list, cfg.initial_radius, method=cfg.method, rel_tol=cfg.tol, **kw)
    run.extra["clusters"] = [
        {"t": c.t, "cells": int(c.mask.sum()), "domain_radius": c.domain_radius,
         "sweeps": c.odometer.sweeps, "leaked": c.odometer.leaked,
         "touched_boundary": c.touched_boundary}
        for c in fam]
    return fam


def _nested_png(path, masks):
    labels = np.zeros(masks[0].shape, dtype=np.uint8)
    for k, m in reversed(list(enumerate(masks, start=1))):
        labels[m] = k
    lio.write_label_png(path, labels, lio.nested_palette(len(masks)))


def cmd_sample_field(cfg: RunConfig) -> int:
    run = Run(cfg, "sample-field")
    grid, f, _ = _field_and_measure(cfg, run)
    lio.write_grid(run.path("field.bin"), f.values, grid.spacing)
    run.finish()
    return EXIT_OK


def cmd_harmonic_ball(cfg: RunConfig) -> int:
    run = Run(cfg, "harmonic-ball")
    grid, f, mu = _field_and_measure(cfg, run)
    fam = _family(cfg, mu, run)
    _nested_png(run.path("clusters.png"), [c.mask for c in fam])
    for k, c in enumerate(fam):
        lio.write_mask_rle(run.path(f"mask_{k:02d}.csv"), c.mask)
    v = fam[-1].odometer.v
    lio.write_grid(run.path("odometer.bin"), v, grid.spacing)
    lio.write_cell_csv(run.path("odometer.csv"), grid, {"v": v, "mass": mu.masses}, where=v > 0)
    run.finish()
    return EXIT_OK


def cmd_metric_ball(cfg: RunConfig) -> int:
    try:
        xi = resolve_xi(cfg.gamma, cfg.xi)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run = Run(cfg, "metric-ball")
    grid, f, mu = _field_and_measure(cfg, run)
    dist = distance_field(f, xi)
    run.extra["xi"] = xi
    balls = []
    stats = []
    for t in cfg.t_list:
        mask, u = metric_ball_of_mass(dist, mu, t)
        balls.append(mask)
        stats.append({"t": t, "u": u, "mass": float(mu.masses[mask].sum()), "cells": int(mask.sum())})
    if cfg.paired:
        fam = _family(cfg, mu, run)
        for s, c, b in zip(stats, fam, balls):
            s["symdiff_mass_vs_harmonic"] = float(mu.masses[c.mask ^ b].sum())
    _nested_png(run.path("metric_balls.png"), balls)
    for k, b in enumerate(balls):
        lio.write_mask_rle(run.path(f"metric_mask_{k:02d}.csv"), b)
    lio.write_grid(run.path("distance.bin"), dist.d, grid.spacing)
    with open(run.path("stats.json"), "w") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
    run.finish()
    return EXIT_OK


def cmd_idla(cfg: RunConfig) -> int:
    run = Run(cfg, "idla")
    grid, f, mu = _field_and_measure(cfg, run)
    cluster = _family(cfg, mu, run)[-1]
    t = cfg.t_list[-1]
    domain = DomainMask.disk(grid, cluster.domain_radius)
    state = run_idla(mu, t, cfg.n_walkers, domain, cfg.seed)
    cmp = compare_idla_harmonic(state, cluster, mu)
    occ = state.occupied(mu.masses)
    labels = np.zeros((grid.n, grid.n), dtype=np.uint8)
    labels[occ & cluster.mask] = 1
    labels[occ & ~cluster.mask] = 2
    labels[~occ & cluster.mask] = 3
    lio.write_label_png(run.path("overlay.png"), labels,
                        [(255, 255, 255), (90, 90, 90), (200, 60, 40), (40, 90, 200)])
    lio.write_cell_csv(run.path("idla_filled.csv"), grid, {"filled": state.filled, "mass": mu.masses},
                       where=state.filled > 0)
    with open(run.path("stats.json"), "w") as fh:
        json.dump({"experimental": True, "t": t, **cmp.to_dict()}, fh, indent=2, sort_keys=True)
    run.extra.update({"n_walkers": state.walkers_done, "quantum": state.quantum,
                      "idla_leaked": state.leaked, "walk_steps": state.steps})
    run.finish()
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    run = Run(cfg, "verify")
    reports: list[DiagnosticReport] = []
    if cfg.suite:
        grid, f, mu = _field_and_measure(cfg, run)
        fam = _family(cfg, mu, run)
        if cfg.mask_file:
            tampered = lio.read_mask_rle(cfg.mask_file, grid.n)
            fam[-1] = dataclasses.replace(fam[-1], mask=tampered)
            run.extra["mask_file"] = str(cfg.mask_file)
        for c in fam:
            if "conservation" in cfg.suite:
                rep = conservation_check(c, mu, c.t)
                rep.provenance = {"t": c.t}
                reports.append(rep)
            if "boundary_fraction" in cfg.suite:
                rep = DiagnosticReport("boundary_mass_fraction", provenance={"t": c.t})
                rep.add("fraction", boundary_mass_fraction(c, mu))
                reports.append(rep)
        if "mean_value" in cfg.suite:
            c = fam[-1]
            if c.touched_boundary:
                rep = DiagnosticReport("harmonic_test_suite", passed=False,
                                       provenance={"t": c.t, "error": "cluster touches its domain"})
            else:
                rep = harmonic_test_suite(c, mu, 3, 0, seed=cfg.seed)
                rep.provenance = {"t": c.t}
            reports.append(rep)
        if "continuity" in cfg.suite and len(fam) > 1:
            reports.append(continuity_proxy(fam, mu))
    with open(run.path("report.json"), "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)
    failed = [r.name for r in reports if r.passed is False]
    run.extra["failed_checks"] = failed
    run.finish()
    return EXIT_DIAGNOSTIC if failed else EXIT_OK


COMMANDS = {
    "sample-field": cmd_sample_field,
    "harmonic-ball": cmd_harmonic_ball,
    "metric-ball": cmd_metric_ball,
    "idla": cmd_idla,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or YAML file with RunConfig fields")
    common.add_argument("--gamma", type=float)
    common.add_argument("--alpha0", type=float)
    common.add_argument("--xi", type=float)
    common.add_argument("--n", type=int)
    common.add_argument("--half-width", dest="half_width", type=float)
    common.add_argument("--t", dest="t_list", type=float, nargs="+", metavar="T")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float, help="solver tolerance relative to t")
    common.add_argument("--out", dest="outputs")
    common.add_argument("--initial-radius", dest="initial_radius", type=float)
    common.add_argument("--method", choices=["lcp", "sandpile"])
    common.add_argument("--omega", type=float, help="over-relaxation for the lcp solver")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lqgballs", description="LQG harmonic balls: simulation and checks")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sample-field", parents=[common], help="sample and export a normalized GFF")
    sub.add_parser("harmonic-ball", parents=[common], help="nested harmonic balls for t_list")
    mb = sub.add_parser("metric-ball", parents=[common], help="equal-mass LQG metric balls")
    mb.add_argument("--paired", action="store_const", const=True,
                    help="also solve the harmonic balls on the same field and compare")
    ia = sub.add_parser("idla", parents=[common], help="capacity IDLA against the harmonic ball (experimental)")
    ia.add_argument("--walkers", dest="n_walkers", type=int)
    vf = sub.add_parser("verify", parents=[common], help="run diagnostic checks")
    vf.add_argument("--suite", nargs="*", choices=SUITE_CHECKS)
    vf.add_argument("--mask-file", dest="mask_file",
                    help="run-length CSV replacing the largest cluster's mask")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridExhausted, SolverBudgetExceeded, MemoryError) as exc:
        print(f"resource exhausted: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
