"""Run configuration: strict YAML schema with per-subcommand requirements.

Runs are experiment definitions, so everything except paths lives in the
config document.  Unknown sections or keys are rejected outright; a typo
silently falling back to a default would invalidate a long run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .eigensolve import SolveOptions
from .model import Grid, PhysicalParams, SingleSitePotential, make_grid
from .susceptibility import BFieldProbe

_REQUIRED = object()

SCHEMA = {
    "physical": {"kappa": 1.0},
    "grid": {"dim": 2, "half_width": _REQUIRED, "points": _REQUIRED},
    "potential": {"kind": "bump", "depth": _REQUIRED, "radius": _REQUIRED,
                  "aspect": (), "center": ()},
    "lattice": {"R": _REQUIRED, "n0": 1, "copies": 1},
    "solver": {"tol": 1e-10, "max_iter": 50000, "seed": 7,
               "degeneracy_gap": 0.0},
    "contour": {"shape": "circle", "nodes": 64},
    "bprobe": {"h_b": 1e-2, "levels": 1},
    "thermo": {"beta_schedule": (400.0, 800.0, 1600.0, 3200.0),
               "box_multiple": 2, "n_bands": 3, "n_k": 8, "n_box_levels": 24},
    "sweep": {"R_values": _REQUIRED, "alpha_grid": tuple(0.1 * i for i in range(2, 13)),
              "atomic_half_width": 8.0},
    "output": {"dir": "out", "formats": ("json", "csv")},
}

REQUIRED_SECTIONS = {
    "atomic": ("grid", "potential", "lattice"),
    "bands": ("grid", "potential", "lattice"),
    "thermo": ("grid", "potential", "lattice", "thermo"),
    "sweep": ("grid", "potential", "lattice", "sweep", "thermo"),
    "kernel-check": ("grid", "potential", "lattice"),
}


@dataclass
class RunConfig:
    sections: dict = field(default_factory=dict)

    def get(self, section: str, key: str):
        sec = self.sections[section]
        if sec is None:
            raise ConfigError(f"section [{section}] was not provided")
        return sec[key]

    def section(self, name: str) -> dict:
        sec = self.sections[name]
        if sec is None:
            raise ConfigError(f"section [{name}] was not provided")
        return sec

    def grid(self) -> Grid:
        sec = self.section("grid")
        return make_grid(sec["dim"], sec["half_width"], sec["points"])

    def potential(self) -> SingleSitePotential:
        sec = self.section("potential")
        return SingleSitePotential(kind=sec["kind"], depth=float(sec["depth"]),
                                   radius=float(sec["radius"]),
                                   center=tuple(sec["center"]),
                                   aspect=tuple(sec["aspect"]))

    def params(self) -> PhysicalParams:
        return PhysicalParams(kappa=float(self.sections["physical"]["kappa"]))

    def solver_options(self) -> SolveOptions:
        sec = self.sections["solver"]
        return SolveOptions(tol=float(sec["tol"]), max_iter=int(sec["max_iter"]),
                            seed=int(sec["seed"]),
                            degeneracy_gap=float(sec["degeneracy_gap"]))

    def probe(self) -> BFieldProbe:
        sec = self.sections["bprobe"]
        return BFieldProbe(h_b=float(sec["h_b"]),
                           richardson_levels=int(sec["levels"]))

    def output_dir(self) -> Path:
        return Path(self.sections["output"]["dir"])

    def formats(self) -> tuple:
        return tuple(self.sections["output"]["formats"])


def _merge_section(name: str, provided: dict) -> dict:
    schema = SCHEMA[name]
    unknown = set(provided) - set(schema)
    if unknown:
        raise ConfigError(f"unknown keys in section [{name}]: {sorted(unknown)}")
    merged = {}
    for key, default in schema.items():
        if key in provided:
            merged[key] = provided[key]
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r} in section [{name}]")
        else:
            merged[key] = default
    return merged


def parse_config(text: str, subcommand: str) -> RunConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping of sections")
    unknown = set(doc) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    for section in REQUIRED_SECTIONS.get(subcommand, ()):
        if section not in doc:
            raise ConfigError(
                f"subcommand {subcommand!r} requires section [{section}]")
    sections = {}
    for name in SCHEMA:
        provided = doc.get(name)
        if provided is None:
            has_required = any(v is _REQUIRED for v in SCHEMA[name].values())
            if has_required:
                # absent optional section with mandatory keys: leave unset
                sections[name] = None
                continue
            provided = {}
        if not isinstance(provided, dict):
            raise ConfigError(f"section [{name}] must be a mapping")
        sections[name] = _merge_section(name, provided)
    cfg = RunConfig(sections=sections)
    # construct eagerly so invariant violations surface as config errors
    try:
        if sections.get("grid") is not None:
            cfg.grid()
        if sections.get("potential") is not None:
            cfg.potential()
        cfg.params()
        cfg.solver_options()
        cfg.probe()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path, subcommand: str) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    return parse_config(p.read_text(), subcommand)
