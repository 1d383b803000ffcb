"""Perturbative level corrections and the Boltzmann-moment pipeline.

This closes the loop between the textbook presentation (thermal averages
over field-expanded levels) and the reduced-resolvent objects the rest of
the package computes: minus twice the ground-level second-order coefficient
reproduces the rigorous zero-temperature susceptibility per unit kappa.
Spin is excluded throughout; only the orbital moment enters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigensolve import SolveOptions, SpectralData, deflated_solve
from .operators import HermitianOperator, ObservableSet


@dataclass(frozen=True)
class LevelData:
    """Field expansion E(b) = E + b E1 + b^2 E2 + ... of one level."""

    E: float
    E1: float
    E2: float
    label: str = ""


def level_corrections(spectral: SpectralData, level_j: int,
                      H: HermitianOperator, obs: ObservableSet,
                      opts: SolveOptions = SolveOptions()) -> LevelData:
    """First and second order field coefficients of a simple level.

    E1 is the orbital moment <phi, L3 phi>/2, identically zero for a simple
    real eigenstate.  E2 is the transverse moment term <phi,(X1^2+X2^2)phi>/8
    minus the reduced-resolvent quadratic form in L3 phi / 2; couplings to
    levels below enter with negative denominators, exactly as the sum over
    states would have them.
    """
    spectral.require_simple([level_j])
    lam = spectral.eigenvalues[level_j]
    phi = spectral.vector(level_j)
    l3phi = obs.L3.matrix @ phi
    e1 = 0.5 * np.vdot(phi, l3phi)
    rhs = l3phi - phi * np.vdot(phi, l3phi)
    psi = deflated_solve(H, lam, phi, rhs, opts)
    e2 = 0.125 * float(np.real(np.vdot(phi, obs.Xperp2.matrix @ phi))) \
        - 0.25 * float(np.real(np.vdot(l3phi, psi)))
    return LevelData(E=float(lam), E1=float(np.real(e1)), E2=e2,
                     label=f"level-{level_j + 1}")


def boltzmann_moment(level_sampler, beta: float, b: float,
                     db: float = 1e-3) -> float:
    """Thermal-equilibrium average induced moment -<dE/dB> at field b.

    ``level_sampler(b)`` returns the level energies at field b; the field
    derivative is taken by central differences on the sampled levels, which
    must keep a consistent ordering over the probe interval.
    """
    e_mid = np.asarray(level_sampler(b), dtype=float)
    if e_mid.size == 0:
        raise ValueError("level sampler returned no levels")
    e_up = np.asarray(level_sampler(b + db), dtype=float)
    e_dn = np.asarray(level_sampler(b - db), dtype=float)
    de = (e_up - e_dn) / (2.0 * db)
    w = np.exp(-beta * (e_mid - e_mid.min()))
    return float(-np.sum(de * w) / np.sum(w))


def levels_to_json_payload(levels) -> list:
    return [{"label": lv.label, "E": lv.E, "E1": lv.E1, "E2": lv.E2}
            for lv in levels]
