"""Grand-canonical statistical mechanics over bands and Dirichlet boxes.

Everything here is written to survive beta values far past the point where
naive Fermi factors flush to zero: occupation tails are accumulated in a
compensated form so the chemical-potential inversion stays pinned by the
exponentially small band tails instead of drowning in absorption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BracketFailure, NotInsulating, TailTooLarge
from .eigensolve import SolveOptions, lowest_eigenpairs
from .bloch import BandStructure
from .model import Grid, PhysicalParams, ScalarField
from .operators import hamiltonian_magnetic, hamiltonian_magnetic_peierls
from .susceptibility import BFieldProbe, richardson_second_derivative


def fermi_dirac(beta: float, mu: float, energy):
    """Occupation factor 1 / (1 + exp(beta (E - mu))), overflow-safe."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    x = beta * (mu - np.asarray(energy, dtype=float))
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return out if out.ndim else float(out)


def _hole_factor(beta: float, mu: float, energy):
    """1 - f in a form that never loses the exponentially small tail."""
    return fermi_dirac(beta, -mu, -np.asarray(energy, dtype=float))


def density(bs: BandStructure, beta: float, mu: float,
            tail_rtol: float = 1e-10) -> float:
    """Bulk density: k-averaged Fermi factors over all computed bands.

    The top computed band must itself be negligible at (beta, mu); its
    contribution bounds the omitted tail because the bands above it are
    higher still (tail majorized by a geometric factor of order one).
    """
    occ = fermi_dirac(beta, mu, bs.bands)
    total = float(np.mean(np.sum(occ, axis=1)))
    top = float(np.mean(occ[:, -1]))
    if top > tail_rtol * max(total, 1.0 / bs.n_bands):
        raise TailTooLarge(
            f"highest computed band still holds {top:.3e} per cell at "
            f"beta={beta}, mu={mu}; add bands")
    return total / bs.cell_volume


def density_excess(bs: BandStructure, beta: float, mu: float, n0: int) -> float:
    """density(mu) - n0/|cell| accumulated without absorption.

    Occupied bands contribute f - 1 = -(hole factor), upper bands
    contribute f; both stay meaningful at beta values where the plain
    difference would round to zero.
    """
    holes = _hole_factor(beta, mu, bs.bands[:, :n0])
    elec = fermi_dirac(beta, mu, bs.bands[:, n0:])
    excess = float(np.mean(np.sum(elec, axis=1) - np.sum(holes, axis=1)))
    return excess / bs.cell_volume


def invert_chemical_potential(bs: BandStructure, beta: float, rho0: float,
                              residual_rtol: float = 1e-10,
                              max_iter: int = 400) -> float:
    """Bisection on the strictly increasing map mu -> density.

    When rho0 is an integer filling the compensated residual is used, so
    the root stays resolved even when both Fermi tails underflow; a flat
    stretch of exact zeros is then resolved to its midpoint, which is the
    correct zero-temperature limit point.
    """
    if rho0 <= 0:
        raise BracketFailure("target density must be positive")
    n_cell = rho0 * bs.cell_volume
    n0 = int(round(n_cell))
    integerlike = abs(n_cell - n0) < 1e-9 and 1 <= n0 < bs.n_bands

    if integerlike:
        def residual(mu):
            return density_excess(bs, beta, mu, n0)
    else:
        def residual(mu):
            return density(bs, beta, mu) - rho0

    lo = float(bs.bands.min()) - 1.0
    hi = float(bs.bands.max()) + 1.0
    for _ in range(60):
        if residual(lo) < 0:
            break
        lo -= 2.0
    else:
        raise BracketFailure("could not bracket the density from below")
    for _ in range(60):
        if residual(hi) > 0:
            break
        hi += 2.0
    else:
        raise BracketFailure("could not bracket the density from above")

    zero_lo = zero_hi = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        r = residual(mid)
        if r > 0:
            hi = mid
        elif r < 0:
            lo = mid
        else:
            zero_lo = zero_hi = mid
            break
        if hi - lo < 1e-14 * max(1.0, abs(mid)):
            break
    if zero_lo is not None:
        # exact-zero plateau: bisect each edge, return the plateau center
        a, b = lo, zero_lo
        for _ in range(max_iter):
            m = 0.5 * (a + b)
            if residual(m) < 0:
                a = m
            else:
                b = m
            if b - a < 1e-14 * max(1.0, abs(m)):
                break
        c, d = zero_hi, hi
        for _ in range(max_iter):
            m = 0.5 * (c + d)
            if residual(m) > 0:
                d = m
            else:
                c = m
            if d - c < 1e-14 * max(1.0, abs(m)):
                break
        return 0.5 * (b + c)
    mu = 0.5 * (lo + hi)
    res = residual(mu)
    if abs(res) > residual_rtol * rho0 and abs(hi - lo) > 1e-12 * max(1.0, abs(mu)):
        raise BracketFailure(f"bisection stalled with residual {res:.3e}")
    return mu


@dataclass(frozen=True)
class ThermoQuery:
    """Grand-canonical query: exactly one of mu / rho0 must be set."""

    beta: float
    mu: float = None
    rho0: float = None
    n0: int = 0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if (self.mu is None) == (self.rho0 is None):
            raise ValueError("exactly one of mu and rho0 must be set")


@dataclass
class ThermoResult:
    density: float
    mu_solution: float
    fermi_energy: float
    gap_midpoint: float
    pressure: float
    susceptibility_fv: float


@dataclass
class FermiEnergyResult:
    value: float
    gap_midpoint: float
    deviation: float
    mu_by_beta: dict = field(default_factory=dict)
    n0: int = 0


def fermi_energy(bs: BandStructure, rho0: float, beta_schedule,
                 require_negative: bool = True) -> FermiEnergyResult:
    """Zero-temperature chemical potential by extrapolation along beta.

    The filling must be insulating: an integer number of bands below a
    positive sampled gap.  Aitken's delta-squared step removes the leading
    1/beta drift of mu toward the gap midpoint.
    """
    n_cell = rho0 * bs.cell_volume
    n0 = int(round(n_cell))
    if abs(n_cell - n0) > 1e-9 or n0 < 1:
        raise NotInsulating(f"filling {n_cell} per cell is not an integer")
    if n0 >= bs.n_bands:
        raise NotInsulating("need at least one computed band above the filling")
    top = float(bs.bands[:, n0 - 1].max())
    bot = float(bs.bands[:, n0].min())
    if bot <= top:
        raise NotInsulating(
            f"bands {n0} and {n0 + 1} overlap ([{top}, {bot}]): metallic filling")
    midpoint = 0.5 * (top + bot)
    if require_negative and midpoint >= 0:
        raise NotInsulating("gap midpoint is not negative; outside the "
                            "bound-state regime the asymptotics target")
    betas = sorted(beta_schedule)
    if len(betas) < 3:
        raise ValueError("beta schedule needs at least 3 points for Aitken")
    mus = {b: invert_chemical_potential(bs, b, rho0) for b in betas}
    xs = [mus[b] for b in betas]
    a, b_, c = xs[-3], xs[-2], xs[-1]
    denom = (c - b_) - (b_ - a)
    extrap = c if abs(denom) < 1e-300 else c - (c - b_) ** 2 / denom
    return FermiEnergyResult(value=float(extrap), gap_midpoint=midpoint,
                             deviation=abs(extrap - midpoint),
                             mu_by_beta=mus, n0=n0)


def _box_tail_bound(grid: Grid, v_min: float, beta: float, mu: float,
                    lam_max: float) -> float:
    """Upper bound on the omitted ln(1+z e^{-beta lambda}) series tail.

    Uses ln(1+x) <= x and the free Dirichlet Weyl counting majorant for
    H >= -Lap/2 + v_min on the box.
    """
    vol = (2.0 * grid.half_width) ** grid.dim
    e0 = lam_max - v_min
    if grid.dim == 2:
        # N(E) <= vol * (E - v_min) / (2 pi)
        integral = vol / (2.0 * np.pi) * np.exp(-beta * lam_max) / beta
    else:
        # N'(E) = vol * sqrt(2(E - v_min)) / (2 pi^2)
        integral = vol / (2.0 * np.pi**2) * np.exp(-beta * lam_max) \
            * (math.sqrt(2.0 * max(e0, 0.0)) / beta
               + math.sqrt(np.pi / 2.0) / beta**1.5)
    return float(np.exp(beta * mu) * integral)


def finite_volume_pressure(box_grid: Grid, potential_field: ScalarField,
                           beta: float, mu: float, b: float, n_levels: int,
                           opts: SolveOptions = SolveOptions(),
                           tail_rtol: float = 1e-10,
                           spectral=None, gauge: str = "peierls") -> float:
    """Grand-canonical pressure of the Dirichlet box from its low spectrum.

    P = (1/(beta |box|)) sum_j ln(1 + e^{beta(mu - lambda_j(b))}), summed
    over the computed levels with a certified Weyl tail bound on the rest.
    The default Peierls gauge keeps off-center wells free of the spurious
    curvature the direct expansion would give them.
    """
    if spectral is None:
        assemble = hamiltonian_magnetic_peierls if gauge == "peierls" \
            else hamiltonian_magnetic
        spectral = lowest_eigenpairs(assemble(box_grid, potential_field, b),
                                     n_levels, opts)
    lam = spectral.eigenvalues
    vol = (2.0 * box_grid.half_width) ** box_grid.dim
    terms = np.logaddexp(0.0, beta * (mu - lam))
    pressure = float(np.sum(terms)) / (beta * vol)
    tail = _box_tail_bound(box_grid, float(np.min(potential_field.values)),
                           beta, mu, float(lam[-1])) / (beta * vol)
    if tail > tail_rtol * max(abs(pressure), 1e-300):
        raise TailTooLarge(
            f"series tail bound {tail:.3e} exceeds budget for pressure "
            f"{pressure:.3e}; raise n_levels")
    return pressure


def finite_volume_susceptibility(box_grid: Grid, potential_field: ScalarField,
                                 beta: float, mu: float,
                                 probe: BFieldProbe = BFieldProbe(),
                                 n_levels: int = 16,
                                 params: PhysicalParams = PhysicalParams(),
                                 opts: SolveOptions = SolveOptions(),
                                 gauge: str = "peierls") -> tuple:
    """kappa * d^2 P / db^2 at b=0 by Richardson-combined differences.

    Returns (value, evenness_residual); the pressure is even in b, so the
    evenness residual measures solver noise entering the differences.
    """
    steps = probe.steps()
    pressures = {}
    for b in steps:
        pressures[b] = finite_volume_pressure(box_grid, potential_field, beta,
                                              mu, b, n_levels, opts,
                                              gauge=gauge)
    evenness = max(abs(pressures[s] - pressures[-s]) for s in steps if s > 0)
    d2 = richardson_second_derivative(pressures, steps)
    return params.kappa * d2, evenness


def vanvleck_finite_T(levels, beta: float) -> float:
    """Finite-temperature zero-field susceptibility from level data.

    ``levels`` is a sequence of (E, E1, E2) tuples sorted by E; Boltzmann
    weights are shifted by the ground energy for overflow safety.
    """
    if len(levels) == 0:
        raise ValueError("need at least one level")
    arr = np.asarray([[float(e), float(e1), float(e2)] for e, e1, e2 in levels])
    e0 = arr[0, 0]
    w = np.exp(-beta * (arr[:, 0] - e0))
    vals = beta * arr[:, 1] ** 2 - 2.0 * arr[:, 2]
    return float(np.sum(vals * w) / np.sum(w))


@dataclass(frozen=True)
class ClassicalReferences:
    langevin: float
    pauli: float
    curie: float
    helmholtz_route: object = field(compare=False)


def classical_references(n: int, r2_mean: float, N: int, M: float,
                         beta: float, r2_per_electron,
                         params: PhysicalParams = PhysicalParams()) -> ClassicalReferences:
    """Century-old reference formulas in the package's kappa convention.

    langevin = -n kappa <r^2>/4, pauli = -N kappa sum r_i^2 / 6 (the 2/3
    factor from random orientations), curie = N beta M^2 / 3.  The returned
    ``helmholtz_route(E_samples)`` evaluates -d^2 F / dB^2 at B=0 by central
    differences on user-supplied {B: [E_j(B)]} samples.
    """
    if n < 0 or N < 0 or r2_mean < 0 or beta <= 0:
        raise ValueError("inputs must be nonnegative (beta positive)")
    kap = params.kappa
    langevin = -n * kap * r2_mean / 4.0
    pauli = -N * kap * float(np.sum(r2_per_electron)) / 6.0
    curie = N * beta * M**2 / 3.0

    def helmholtz_route(e_samples: dict) -> float:
        bs = sorted(e_samples)
        if len(bs) < 3 or abs(bs[0] + bs[-1]) > 1e-12:
            raise ValueError("need symmetric B samples including both signs")
        def free_energy(b):
            e = np.asarray(e_samples[b], dtype=float)
            shift = e.min()
            return N * shift - np.log(np.sum(np.exp(-N * beta * (e - shift)))) / beta
        h = bs[-1]
        f0 = free_energy(0.0) if 0.0 in e_samples else None
        if f0 is None:
            raise ValueError("samples must include B = 0")
        return -(free_energy(h) - 2.0 * f0 + free_energy(-h)) / h**2

    return ClassicalReferences(langevin=langevin, pauli=pauli, curie=curie,
                               helmholtz_route=helmholtz_route)
