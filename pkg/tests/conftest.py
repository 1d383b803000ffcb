"""Shared fixtures: wells and spectra reused across the suite.

The anisotropic default well binds exactly two simple states on the fine
grids (the ground state and one transverse excitation); the aspect ratio
is what keeps the excited pair non-degenerate on the square grid.
"""

import pytest

from orbmag.eigensolve import SolveOptions, dense_spectrum, lowest_eigenpairs
from orbmag.model import bump_potential, make_grid, sample_potential
from orbmag.operators import hamiltonian_single_atom, observables

DEEP_WELL = dict(depth=4.2, radius=1.5, aspect=(1.3, 0.75))
SHALLOW_WELL = dict(depth=4.2, radius=1.35, aspect=(1.3, 0.72))


@pytest.fixture(scope="session")
def opts():
    return SolveOptions()


@pytest.fixture(scope="session")
def deep_well():
    return bump_potential(**DEEP_WELL)


@pytest.fixture(scope="session")
def shallow_well():
    return bump_potential(**SHALLOW_WELL)


@pytest.fixture(scope="session")
def grid48():
    return make_grid(2, 10.0, 48)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(2, 10.0, 32)


@pytest.fixture(scope="session")
def field48(deep_well, grid48):
    return sample_potential(deep_well, grid48)


@pytest.fixture(scope="session")
def field32(deep_well, grid32):
    return sample_potential(deep_well, grid32)


@pytest.fixture(scope="session")
def H48(grid48, field48):
    return hamiltonian_single_atom(grid48, field48)


@pytest.fixture(scope="session")
def H32(grid32, field32):
    return hamiltonian_single_atom(grid32, field32)


@pytest.fixture(scope="session")
def spectral48(H48, opts):
    return lowest_eigenpairs(H48, 6, opts)


@pytest.fixture(scope="session")
def dense32(H32, opts):
    return dense_spectrum(H32, opts)


@pytest.fixture(scope="session")
def obs48(grid48):
    return observables(grid48)


@pytest.fixture(scope="session")
def obs32(grid32):
    return observables(grid32)


@pytest.fixture(scope="session")
def harmonic_case():
    """2D harmonic trap omega0=1, shifted down so the low levels are bound.

    The constant shift leaves eigenvectors, level differences, moments and
    curvatures untouched, so every closed-form oracle applies verbatim
    while the bound-state guards stay meaningful.
    """
    grid = make_grid(2, 8.0, 64)
    x = grid.coords()
    values = 0.5 * (x[:, 0] ** 2 + x[:, 1] ** 2) - 3.0
    from orbmag.model import ScalarField
    return grid, ScalarField(grid, values)
