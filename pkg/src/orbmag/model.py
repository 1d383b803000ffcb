"""Grids, physical parameters, compactly supported wells, and the gauge field.

Units: hbar = mass = 1 throughout; the squared charge-to-light-speed ratio
enters every susceptibility only through the single prefactor ``kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ConfigError

DIRICHLET = "dirichlet"
PERIODIC = "periodic"


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionless prefactor (q/c)^2; mass and hbar are fixed at 1."""

    kappa: float = 1.0

    def __post_init__(self):
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on (-half_width, half_width)^dim.

    Cell-centered nodes keep every discrete moment symmetric about the
    gauge center; no node coincides with the origin.
    """

    dim: int
    half_width: float
    points: int
    bc: str = DIRICHLET
    bloch_k: tuple = ()

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.points < 8:
            raise ConfigError(f"points must be >= 8, got {self.points}")
        if self.half_width <= 0:
            raise ConfigError(f"half_width must be positive, got {self.half_width}")
        if self.bc not in (DIRICHLET, PERIODIC):
            raise ConfigError(f"unknown boundary condition {self.bc!r}")
        if self.bc == PERIODIC and len(self.bloch_k) not in (0, self.dim):
            raise ConfigError("bloch_k must have one component per axis")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.points

    @property
    def shape(self) -> tuple:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    def axis_coords(self) -> np.ndarray:
        h = self.spacing
        return -self.half_width + h * (np.arange(self.points) + 0.5)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (size, dim), C-ordered over axes."""
        axes = np.meshgrid(*([self.axis_coords()] * self.dim), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=1)


def make_grid(dim, half_width, points, bc=DIRICHLET, bloch_k=()) -> Grid:
    return Grid(dim=dim, half_width=float(half_width), points=int(points),
                bc=bc, bloch_k=tuple(bloch_k))


@dataclass(frozen=True)
class SingleSitePotential:
    """Attractive well, C^1 and identically zero outside an ellipsoid.

    The support is { x : sum_c ((x_c - center_c) / (radius * aspect_c))^2 < 1 };
    with the default aspect the support is the ball of the given radius.
    Unequal aspect ratios break rotational symmetry, which is how simple
    (non-degenerate) excited levels are obtained on demand.
    """

    kind: str
    depth: float
    radius: float
    center: tuple = ()
    aspect: tuple = ()

    def __post_init__(self):
        if self.kind not in ("bump", "well"):
            raise ConfigError(f"unknown potential kind {self.kind!r}")
        if self.depth <= 0:
            raise ConfigError("depth must be positive")
        if self.radius <= 0:
            raise ConfigError("radius must be positive")
        if any(a <= 0 for a in self.aspect):
            raise ConfigError("aspect factors must be positive")

    @property
    def support_radius(self) -> float:
        """Radius of the smallest origin-centered ball containing the support."""
        amax = max(self.aspect) if self.aspect else 1.0
        return self.radius * amax

    def _scaled_r2(self, points: np.ndarray) -> np.ndarray:
        dim = points.shape[1]
        center = np.asarray(self.center if self.center else (0.0,) * dim)
        aspect = np.asarray(self.aspect if self.aspect else (1.0,) * dim)
        y = (points - center) / (self.radius * aspect)
        return np.einsum("ij,ij->i", y, y)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Potential values at the given points, shape (m, dim) -> (m,)."""
        s2 = self._scaled_r2(np.atleast_2d(points))
        inside = s2 < 1.0
        out = np.zeros_like(s2)
        if self.kind == "bump":
            # exp(1 - 1/(1-s^2)) is C-infinity with exact compact support
            safe = np.where(inside, s2, 0.0)
            out[inside] = -self.depth * np.exp(1.0 - 1.0 / (1.0 - safe[inside]))
        else:
            # (1-s^2)^2 well: C^1 at the support boundary
            out[inside] = -self.depth * (1.0 - s2[inside]) ** 2
        return out


def bump_potential(depth, radius, center=(), aspect=()) -> SingleSitePotential:
    return SingleSitePotential(kind="bump", depth=float(depth),
                               radius=float(radius), center=tuple(center),
                               aspect=tuple(aspect))


def well_potential(depth, radius, center=(), aspect=()) -> SingleSitePotential:
    return SingleSitePotential(kind="well", depth=float(depth),
                               radius=float(radius), center=tuple(center),
                               aspect=tuple(aspect))


@dataclass(frozen=True)
class LatticeConfig:
    """Square/cubic lattice of period R holding one well per cell.

    Disjoint supports of neighboring wells (R > 2 * support radius) define
    the tight-binding regime this package operates in.
    """

    R: float
    copies: int = 1

    def __post_init__(self):
        if self.R <= 0:
            raise ConfigError("lattice constant R must be positive")
        if self.copies < 1:
            raise ConfigError("copies must be >= 1")

    def validate_against(self, potential: SingleSitePotential):
        if self.R <= 2.0 * potential.support_radius:
            raise ConfigError(
                f"lattice constant R={self.R} must exceed twice the well "
                f"support radius {potential.support_radius} (disjoint supports)")


@dataclass(frozen=True)
class ScalarField:
    """One real value per grid node."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.values.shape != (self.grid.size,):
            raise ConfigError(
                f"field has {self.values.shape} values for a grid of size "
                f"{self.grid.size}")


def sample_potential(potential: SingleSitePotential, grid: Grid) -> ScalarField:
    """Single isolated well sampled on the grid."""
    return ScalarField(grid, potential.evaluate(grid.coords()))


def sample_periodic_potential(potential: SingleSitePotential,
                              lattice: LatticeConfig, grid: Grid,
                              offset: tuple = ()) -> ScalarField:
    """Lattice-periodic potential sampled exactly on the grid window.

    Sums u(x - R*v - offset) over all integer vectors v whose well support
    intersects the window; compact support makes the truncation exact.  The
    image range is widened beyond ``lattice.copies`` when the window needs it.
    """
    lattice.validate_against(potential)
    x = grid.coords()
    off = np.asarray(offset if offset else (0.0,) * grid.dim)
    reach = grid.half_width + potential.support_radius + float(np.max(np.abs(off)))
    needed = math.ceil(reach / lattice.R)
    ncop = max(lattice.copies, needed)
    values = np.zeros(grid.size)
    for v in product(range(-ncop, ncop + 1), repeat=grid.dim):
        shift = lattice.R * np.asarray(v, dtype=float) + off
        # skip images whose support cannot touch the window
        if np.any(np.abs(shift) - potential.support_radius > grid.half_width):
            continue
        values += potential.evaluate(x - shift)
    return ScalarField(grid, values)


def vector_potential_field(grid: Grid) -> np.ndarray:
    """Symmetric-gauge vector potential a(x) = (1/2)(-x2, x1[, 0]) per node."""
    x = grid.coords()
    a = np.zeros_like(x)
    a[:, 0] = -0.5 * x[:, 1]
    a[:, 1] = 0.5 * x[:, 0]
    return a
