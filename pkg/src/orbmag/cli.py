"""Command-line driver: atomic | bands | thermo | sweep | kernel-check.

Each subcommand reads one YAML experiment definition, computes everything
in memory, and only then writes its reports, so a failing run leaves no
partial outputs.  Exit codes: 0 success, 2 config error, 3 solver failure,
4 physics guard tripped (degeneracy / bound-state count / insulating).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .bloch import band_edges_and_gaps, band_structure, bands_to_csv, cell_grid
from .cache import cache_spectral
from .config import RunConfig, load_config
from .errors import BracketFailure, ConfigError, ContourTooClose, \
    ConvergenceFailure, DegeneracyDetected, InsufficientBoundStates, \
    LevelTrackingLost, NotInsulating, NotOrthogonal, TailTooLarge
from .levels import level_corrections, levels_to_json_payload
from .eigensolve import default_contour, lowest_eigenpairs
from .model import LatticeConfig, make_grid, sample_periodic_potential, \
    sample_potential
from .operators import DENSE_LIMIT, hamiltonian_single_atom, observables
from .sweep import SweepConfig, fit_exponential_remainder, rows_to_csv, \
    run_sweep, summary_to_json
from .susceptibility import contour_kernel_values, susceptibility_report
from .thermo import ThermoResult, density, fermi_energy, \
    finite_volume_pressure, finite_volume_susceptibility

log = logging.getLogger("orbmag")

GUARD_ERRORS = (DegeneracyDetected, NotInsulating, InsufficientBoundStates)
SOLVER_ERRORS = (ConvergenceFailure, BracketFailure, TailTooLarge,
                 LevelTrackingLost, NotOrthogonal)
CONFIG_ERRORS = (ConfigError, ContourTooClose)


def _atomic_spectral(cfg: RunConfig, count: int):
    """Shared cached eigensolve for the single-well reference problem."""
    grid = cfg.grid()
    pot = cfg.potential()
    opts = cfg.solver_options()
    key = {
        "grid": [grid.dim, grid.half_width, grid.points, grid.bc],
        "potential": [pot.kind, pot.depth, pot.radius, list(pot.center),
                      list(pot.aspect)],
        "solver": [opts.tol, opts.max_iter, opts.seed, opts.degeneracy_gap],
        "count": count,
    }

    def compute():
        H = hamiltonian_single_atom(grid, sample_potential(pot, grid))
        return lowest_eigenpairs(H, count, opts)

    return cache_spectral(key, compute)


def _write_outputs(outdir: Path, files: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (outdir / name).write_text(text)


def cmd_atomic(cfg: RunConfig, outdir: Path, serial: bool) -> int:
    grid = cfg.grid()
    pot = cfg.potential()
    n0 = int(cfg.get("lattice", "n0"))
    lat = LatticeConfig(R=float(cfg.get("lattice", "R")),
                        copies=int(cfg.get("lattice", "copies")))
    lat.validate_against(pot)
    count = max(n0 + 2, 4)
    spectral = _atomic_spectral(cfg, count)
    field = sample_potential(pot, grid)
    H = hamiltonian_single_atom(grid, field)
    report = susceptibility_report(
        grid, field, n0, cfg.params(), cfg.solver_options(), cfg.probe(),
        cell_volume=lat.R**grid.dim, spectral=spectral, H=H)
    report.validate()
    obs = observables(grid)
    corrections = [level_corrections(spectral, j, H, obs, cfg.solver_options())
                   for j in range(n0)]
    files = {}
    if "json" in cfg.formats():
        files["report.json"] = report.to_json()
        files["levels.json"] = json.dumps({
            "note": "orbital moments only; spin is not included",
            "levels": levels_to_json_payload(corrections),
        }, indent=2, sort_keys=True)
    if "csv" in cfg.formats():
        files["report.csv"] = report.to_csv()
    _write_outputs(outdir, files)
    print(f"atomic: n0={n0} chi_total={report.chi_total:.10e} "
          f"identity_residual={abs(report.chi_total - report.chi_curvature):.3e}")
    return 0


def _band_pipeline(cfg: RunConfig):
    pot = cfg.potential()
    lat = LatticeConfig(R=float(cfg.get("lattice", "R")),
                        copies=int(cfg.get("lattice", "copies")))
    lat.validate_against(pot)
    grid = cfg.grid()
    n_bands = int(cfg.get("thermo", "n_bands"))
    n_k = int(cfg.get("thermo", "n_k"))
    spectral = _atomic_spectral(cfg, max(n_bands + 2, 4))
    cgrid = cell_grid(lat.R, grid.spacing, grid.dim)
    bs = band_structure(lat, pot, n_bands, n_k, cgrid, cfg.solver_options())
    gaps = band_edges_and_gaps(bs, spectral)
    return pot, lat, grid, bs, gaps, spectral


def cmd_bands(cfg: RunConfig, outdir: Path, serial: bool) -> int:
    pot, lat, grid, bs, gaps, spectral = _band_pipeline(cfg)
    payload = {
        "R": lat.R,
        "band_edges": gaps.band_edges,
        "gaps": gaps.gaps,
        "localization": gaps.localization,
        "atomic_levels": spectral.eigenvalues[:spectral.count_negative].tolist(),
        "time_reversal_defect": bs.time_reversal_defect(),
    }
    files = {}
    if "csv" in cfg.formats():
        files["bands.csv"] = bands_to_csv(bs)
    if "json" in cfg.formats():
        files["gaps.json"] = json.dumps(payload, indent=2, sort_keys=True)
    _write_outputs(outdir, files)
    print(f"bands: R={lat.R} n_bands={bs.n_bands} gaps={len(gaps.gaps)} "
          f"loc_max={max(gaps.localization, default=0.0):.3e}")
    return 0


def cmd_thermo(cfg: RunConfig, outdir: Path, serial: bool) -> int:
    pot, lat, grid, bs, gaps, spectral = _band_pipeline(cfg)
    n0 = int(cfg.get("lattice", "n0"))
    betas = tuple(float(b) for b in cfg.get("thermo", "beta_schedule"))
    rho0 = n0 / bs.cell_volume
    fermi = fermi_energy(bs, rho0, betas)
    multiple = int(cfg.get("thermo", "box_multiple"))
    L = multiple * lat.R
    box = make_grid(grid.dim, L / 2.0, int(round(L / grid.spacing)))
    offset = (lat.R / 2.0,) * grid.dim if multiple % 2 == 0 else ()
    field = sample_periodic_potential(pot, lat, box, offset=offset)
    n_box_levels = int(cfg.get("thermo", "n_box_levels"))
    chi_fv, evenness = finite_volume_susceptibility(
        box, field, max(betas), fermi.value, cfg.probe(), n_box_levels,
        cfg.params(), cfg.solver_options())
    pressure = finite_volume_pressure(box, field, max(betas), fermi.value,
                                      0.0, n_box_levels, cfg.solver_options())
    sweep_lines = ["beta,mu,density,fermi_estimate"]
    for beta in sorted(betas):
        mu = fermi.mu_by_beta[beta]
        sweep_lines.append(f"{beta!r},{mu!r},{density(bs, beta, mu)!r},"
                           f"{fermi.value!r}")
    result = ThermoResult(density=rho0,
                          mu_solution=fermi.mu_by_beta[max(betas)],
                          fermi_energy=fermi.value,
                          gap_midpoint=fermi.gap_midpoint,
                          pressure=pressure,
                          susceptibility_fv=chi_fv)
    payload = asdict(result)
    payload.update({
        "midpoint_deviation": fermi.deviation,
        "susceptibility_fv_scaled": chi_fv * bs.cell_volume,
        "pressure_evenness_residual": evenness,
        "box_side": L,
    })
    files = {}
    if "json" in cfg.formats():
        files["thermo.json"] = json.dumps(payload, indent=2, sort_keys=True)
    if "csv" in cfg.formats():
        files["thermo_sweep.csv"] = "\n".join(sweep_lines) + "\n"
    _write_outputs(outdir, files)
    print(f"thermo: fermi={fermi.value:.10e} midpoint_dev={fermi.deviation:.3e} "
          f"chi_fv_scaled={chi_fv * bs.cell_volume:.10e}")
    return 0


def cmd_sweep(cfg: RunConfig, outdir: Path, serial: bool) -> int:
    pot = cfg.potential()
    grid = cfg.grid()
    sweep_sec = cfg.section("sweep")
    config = SweepConfig(
        R_values=tuple(float(r) for r in sweep_sec["R_values"]),
        n0=int(cfg.get("lattice", "n0")),
        potential=pot,
        spacing=grid.spacing,
        atomic_half_width=float(sweep_sec["atomic_half_width"]),
        n_bands=int(cfg.get("thermo", "n_bands")),
        n_k=int(cfg.get("thermo", "n_k")),
        beta_schedule=tuple(float(b) for b in cfg.get("thermo", "beta_schedule")),
        box_multiple=int(cfg.get("thermo", "box_multiple")),
        n_box_levels=int(cfg.get("thermo", "n_box_levels")),
        dim=grid.dim,
        probe=cfg.probe(),
        opts=cfg.solver_options(),
        params=cfg.params(),
    )
    rows, ref = run_sweep(config)
    fit = fit_exponential_remainder(rows, [float(a) for a in sweep_sec["alpha_grid"]])
    files = {}
    if "csv" in cfg.formats():
        files["sweep.csv"] = rows_to_csv(rows)
    if "json" in cfg.formats():
        files["sweep_summary.json"] = summary_to_json(rows, fit)
    _write_outputs(outdir, files)
    print(f"sweep: {len(rows)} R-points chi_atomic={ref.chi_atomic:.10e} "
          f"fit c={fit.c:.4f} alpha={fit.alpha:.2f} r2={fit.r_squared:.4f}")
    return 0


def cmd_kernel_check(cfg: RunConfig, outdir: Path, serial: bool) -> int:
    grid = cfg.grid()
    if grid.size > DENSE_LIMIT:
        raise ConfigError(f"kernel-check needs a dense-materializable grid "
                          f"(<= {DENSE_LIMIT} nodes), got {grid.size}")
    pot = cfg.potential()
    n0 = int(cfg.get("lattice", "n0"))
    field = sample_potential(pot, grid)
    H = hamiltonian_single_atom(grid, field)
    spectral = _atomic_spectral(cfg, max(n0 + 2, 4))
    contour = default_contour(spectral, n0, nodes=int(cfg.get("contour", "nodes")))
    vals = contour_kernel_values(H, grid, contour, cfg.params(),
                                 spectral=spectral, opts=cfg.solver_options())
    report = susceptibility_report(grid, field, n0, cfg.params(),
                                   cfg.solver_options(), cfg.probe(),
                                   spectral=spectral, H=H)
    payload = {
        "chi_kernel": vals["xi"],
        "null_trace": vals["one"],
        "chi_spectral": report.chi_total,
        "difference": vals["xi"] - report.chi_total,
        "contour_nodes": contour.nodes,
    }
    _write_outputs(outdir, {"kernel.json": json.dumps(payload, indent=2,
                                                      sort_keys=True)})
    print(f"kernel-check: chi_kernel={vals['xi']:.10e} "
          f"chi_spectral={report.chi_total:.10e} null={vals['one']:.3e}")
    return 0


COMMANDS = {
    "atomic": cmd_atomic,
    "bands": cmd_bands,
    "thermo": cmd_thermo,
    "sweep": cmd_sweep,
    "kernel-check": cmd_kernel_check,
}


def run_cli(argv) -> int:
    parser = argparse.ArgumentParser(
        prog="orbmag",
        description="Numerical laboratory for atomic orbital magnetism")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--serial", action="store_true",
                       help="force single-threaded execution")
        p.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.command)
        outdir = Path(args.out) if args.out else cfg.output_dir()
        if args.serial:
            # pin the BLAS pools so reductions run in a fixed order
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=1):
                return COMMANDS[args.command](cfg, outdir, True)
        return COMMANDS[args.command](cfg, outdir, False)
    except CONFIG_ERRORS as exc:
        log.error("config error: %s", exc)
        return 2
    except SOLVER_ERRORS as exc:
        log.error("solver failure: %s", exc)
        return 3
    except GUARD_ERRORS as exc:
        log.error("physics guard tripped (bound-state count / non-degeneracy "
                  "/ insulating filling): %s", exc)
        return 4


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
