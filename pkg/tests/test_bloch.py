import numpy as np
import pytest

from orbmag.errors import ConfigError
from orbmag.bloch import band_edges_and_gaps, band_structure, \
    band_structure_refined, bands_to_csv, brillouin_samples, cell_grid, \
    ids_from_bands
from orbmag.eigensolve import lowest_eigenpairs
from orbmag.model import LatticeConfig, make_grid, sample_potential
from orbmag.operators import hamiltonian_single_atom

SPACING = 0.25


@pytest.fixture(scope="module")
def atomic_spectral(shallow_well, opts):
    grid = make_grid(2, 8.0, 64)
    H = hamiltonian_single_atom(grid, sample_potential(shallow_well, grid))
    return lowest_eigenpairs(H, 5, opts)


@pytest.fixture(scope="module")
def bands_R6(shallow_well, opts):
    lat = LatticeConfig(R=6.0)
    return band_structure(lat, shallow_well, 3, 8, cell_grid(6.0, SPACING, 2),
                          opts)


def test_cell_grid_requires_commensurate_spacing():
    with pytest.raises(ConfigError):
        cell_grid(6.1, 0.25, 2)
    g = cell_grid(6.0, 0.25, 2)
    assert g.points == 24 and g.bc == "periodic"


def test_brillouin_grid_half_open():
    ks = brillouin_samples(6.0, 2, 8)
    assert len(ks) == 64
    edge = np.pi / 6.0
    assert np.any(np.isclose(ks, -edge))     # lower edge included
    assert not np.any(np.isclose(ks, edge))  # upper edge excluded
    with pytest.raises(ConfigError):
        brillouin_samples(6.0, 2, 2)


def test_bands_sorted_and_time_reversal(bands_R6, opts):
    assert np.all(np.diff(bands_R6.bands, axis=1) >= 0.0)
    assert bands_R6.time_reversal_defect() <= 10.0 * opts.tol


def test_band_collapse_over_lattice_constant(shallow_well, opts):
    widths = []
    for R in (5.0, 6.0, 7.0):
        bs = band_structure(LatticeConfig(R=R), shallow_well, 2, 4,
                            cell_grid(R, SPACING, 2), opts)
        lo, hi = bs.band_edges()[0]
        widths.append(hi - lo)
    assert widths[0] > widths[1] > widths[2]


def test_bands_isolated_and_levels_inside(bands_R6, atomic_spectral):
    report = band_edges_and_gaps(bands_R6, atomic_spectral)
    tau = atomic_spectral.count_negative
    assert tau == 2
    edges = report.band_edges
    for l in range(tau):
        # pairwise disjoint and disjoint from the band above the bound set
        assert edges[l][1] < edges[l + 1][0]
        lam = atomic_spectral.eigenvalues[l]
        assert edges[l][0] < lam < edges[l][1]
    assert len(report.localization) == tau


def test_localization_rate_matches_decay_constant(shallow_well,
                                                  atomic_spectral, opts):
    # GOP-form fit log(dev * R) = a - c R; in these units (mass 1,
    # kinetic term -Lap/2) a bound level at -|lambda| tunnels with
    # c = sqrt(2 |lambda|)
    rs = np.array([5.0, 6.0, 7.0, 8.0])
    devs = {0: [], 1: []}
    for R in rs:
        bs = band_structure(LatticeConfig(R=R), shallow_well, 3, 8,
                            cell_grid(R, SPACING, 2), opts)
        rep = band_edges_and_gaps(bs, atomic_spectral)
        for l in (0, 1):
            devs[l].append(rep.localization[l])
    for l in (0, 1):
        y = np.log(np.asarray(devs[l]) * rs)
        slope = np.polyfit(rs, y, 1)[0]
        kappa = np.sqrt(2.0 * abs(atomic_spectral.eigenvalues[l]))
        assert abs(slope + kappa) <= 0.2 * kappa
        # fit quality: the collapse is genuinely exponential
        resid = y - np.polyval(np.polyfit(rs, y, 1), rs)
        assert np.max(np.abs(resid)) < 0.2


def test_ids_staircase(bands_R6):
    below = ids_from_bands(bands_R6, -3.0)
    assert below == 0.0
    gap_value = ids_from_bands(bands_R6, -1.0)  # inside the gap above band 1
    assert gap_value == pytest.approx(1.0 / 36.0, abs=0)
    # monotone nondecreasing staircase
    es = np.linspace(-2.5, 0.5, 40)
    vals = [ids_from_bands(bands_R6, e) for e in es]
    assert np.all(np.diff(vals) >= 0.0)
    # constant across the detected gap
    rep = band_edges_and_gaps(bands_R6)
    idx, top, bot = rep.gaps[0]
    assert ids_from_bands(bands_R6, top + 1e-9) == \
        ids_from_bands(bands_R6, bot - 1e-9)


def test_band_structure_refined_terminates(shallow_well, opts):
    bs = band_structure_refined(LatticeConfig(R=5.0), shallow_well, 2,
                                cell_grid(5.0, SPACING, 2), opts,
                                n_k_start=4, n_k_max=16)
    assert bs.k_samples.shape[0] in (16, 64, 256)


def test_bands_csv_layout(bands_R6):
    lines = bands_to_csv(bands_R6).splitlines()
    assert lines[0] == "l,k1,k2,E"
    assert len(lines) == 1 + bands_R6.n_bands * len(bands_R6.k_samples)
