import numpy as np
import pytest

from orbmag.errors import BracketFailure, NotInsulating, TailTooLarge
from orbmag.bloch import band_structure, cell_grid, ids_from_bands
from orbmag.eigensolve import dense_spectrum
from orbmag.model import LatticeConfig, PhysicalParams, ScalarField, \
    make_grid, sample_potential
from orbmag.operators import hamiltonian_magnetic_peierls, \
    hamiltonian_single_atom
from orbmag.susceptibility import BFieldProbe, richardson_second_derivative
from orbmag.thermo import ThermoQuery, classical_references, density, \
    density_excess, fermi_dirac, fermi_energy, finite_volume_pressure, \
    finite_volume_susceptibility, invert_chemical_potential, vanvleck_finite_T


@pytest.fixture(scope="module")
def bands_R6(shallow_well, opts):
    return band_structure(LatticeConfig(R=6.0), shallow_well, 3, 8,
                          cell_grid(6.0, 0.25, 2), opts)


def test_fermi_dirac_values():
    assert fermi_dirac(10.0, 0.3, 0.3) == pytest.approx(0.5, abs=0)
    assert fermi_dirac(1.0, np.log(3.0), 0.0) == pytest.approx(0.75, rel=1e-12)
    # tail bound: f(E) <= exp(-beta (E - mu)) for E above mu
    for beta, de in ((50.0, 1.0), (2000.0, 0.5)):
        assert fermi_dirac(beta, 0.0, de) <= np.exp(-beta * de)
    arr = fermi_dirac(5.0, 0.0, np.array([-1.0, 0.0, 1.0]))
    assert arr.shape == (3,) and arr[0] > arr[1] > arr[2]


def test_density_strictly_increasing(bands_R6):
    mus = np.linspace(-2.0, -0.5, 5)
    vals = [density(bands_R6, 50.0, m) for m in mus]
    assert np.all(np.diff(vals) > 0.0)


def test_density_empty_below_spectrum(bands_R6):
    assert density(bands_R6, 50.0, -6.0) < 1e-12


def test_density_zero_temperature_gap_value(bands_R6):
    # mu in the gap above band 1 at effectively zero temperature
    val = density(bands_R6, 2e4, -1.0)
    assert val == pytest.approx(1.0 / 36.0, rel=1e-12)
    # and the IDS/density link at the same energy
    assert val == pytest.approx(ids_from_bands(bands_R6, -1.0), rel=1e-12)


def test_density_tail_guard(bands_R6):
    with pytest.raises(TailTooLarge):
        density(bands_R6, 2.0, 1.5)  # top computed band visibly occupied


def test_density_excess_stable_at_huge_beta(bands_R6):
    # the compensated residual keeps resolving when plain differences
    # would round to zero
    mid = -1.0
    val = density_excess(bands_R6, 5e4, mid, 1)
    assert np.isfinite(val)
    lo = density_excess(bands_R6, 5e4, bands_R6.bands[:, 0].max() + 1e-3, 1)
    hi = density_excess(bands_R6, 5e4, bands_R6.bands[:, 1].min() - 1e-3, 1)
    assert lo < 0.0 < hi


def test_invert_chemical_potential_contracts_to_midpoint(bands_R6):
    rho0 = 1.0 / 36.0
    top = bands_R6.bands[:, 0].max()
    bot = bands_R6.bands[:, 1].min()
    mid = 0.5 * (top + bot)
    # in the settled regime each doubling at least halves the distance
    ds = []
    for beta in (2e4, 4e4, 8e4):
        mu = invert_chemical_potential(bands_R6, beta, rho0)
        assert top < mu < bot
        ds.append(abs(mu - mid))
    assert ds[1] <= 0.5 * ds[0] * (1.0 + 1e-6)
    assert ds[2] <= 0.5 * ds[1] * (1.0 + 1e-6)


def test_invert_rejects_unreachable_density(bands_R6):
    with pytest.raises(BracketFailure):
        invert_chemical_potential(bands_R6, 10.0, -1.0)


def test_fermi_energy_midpoint(bands_R6):
    res = fermi_energy(bands_R6, 1.0 / 36.0, (1e5, 2e5, 4e5, 8e5))
    lam1 = abs(bands_R6.bands[:, 0].min())
    assert res.deviation <= 1e-6 * lam1
    assert res.value < 0.0 and res.gap_midpoint < 0.0


def test_fermi_energy_guards(bands_R6):
    with pytest.raises(NotInsulating):
        fermi_energy(bands_R6, 1.5 / 36.0, (100.0, 200.0, 400.0))  # mid-band
    with pytest.raises(NotInsulating):
        fermi_energy(bands_R6, 3.0 / 36.0, (100.0, 200.0, 400.0))  # no band above


def test_thermo_query_invariant():
    ThermoQuery(beta=1.0, mu=-0.5)
    with pytest.raises(ValueError):
        ThermoQuery(beta=1.0)
    with pytest.raises(ValueError):
        ThermoQuery(beta=1.0, mu=-0.5, rho0=0.1)
    with pytest.raises(ValueError):
        ThermoQuery(beta=-1.0, mu=-0.5)


@pytest.fixture(scope="module")
def small_box(shallow_well):
    grid = make_grid(2, 5.0, 20)
    return grid, sample_potential(shallow_well, grid)


def test_pressure_linear_in_fugacity(small_box, opts):
    grid, field = small_box
    beta = 8.0
    # far below the spectrum: P ~ z = exp(beta mu), so P(mu+d)/P(mu) = e^{beta d}
    p1 = finite_volume_pressure(grid, field, beta, -4.0, 0.0, 12, opts,
                                tail_rtol=1e-8)
    p2 = finite_volume_pressure(grid, field, beta, -4.0 + 0.1, 0.0, 12, opts,
                                tail_rtol=1e-8)
    assert p2 / p1 == pytest.approx(np.exp(beta * 0.1), rel=1e-3)
    assert p2 > p1  # monotone in the fugacity


def test_pressure_matches_dense_oracle(small_box, opts):
    grid, field = small_box
    beta, mu = 6.0, -1.2
    H = hamiltonian_single_atom(grid, field)
    ds = dense_spectrum(H, opts)
    vol = (2.0 * grid.half_width) ** 2
    oracle = float(np.sum(np.logaddexp(0.0, beta * (mu - ds.eigenvalues)))) \
        / (beta * vol)
    val = finite_volume_pressure(grid, field, beta, mu, 0.0, 40, opts,
                                 tail_rtol=1e-6)
    assert val == pytest.approx(oracle, abs=1e-10 + 1e-6 * oracle)


def test_pressure_tail_guard(small_box, opts):
    grid, field = small_box
    with pytest.raises(TailTooLarge):
        finite_volume_pressure(grid, field, 4.0, 1.0, 0.0, 10, opts)


def test_pressure_even_in_field(small_box, opts):
    grid, field = small_box
    beta, mu = 50.0, -1.0
    up = finite_volume_pressure(grid, field, beta, mu, 0.04, 14, opts)
    dn = finite_volume_pressure(grid, field, beta, mu, -0.04, 14, opts)
    assert abs(up - dn) <= 1e-9


def test_free_gas_is_diamagnetic(opts):
    # Landau sign: chi < 0 for the free box at moderate temperature, with
    # the full dense spectrum at every probe field as the oracle
    grid = make_grid(2, 5.0, 16)
    field = ScalarField(grid, np.zeros(grid.size))
    beta, mu = 6.0, 0.4
    probe = BFieldProbe(h_b=0.02)
    pressures = {}
    for b in probe.steps():
        H = hamiltonian_magnetic_peierls(grid, field, b)
        ds = dense_spectrum(H, opts)
        vol = (2.0 * grid.half_width) ** 2
        pressures[b] = float(np.sum(np.logaddexp(
            0.0, beta * (mu - ds.eigenvalues)))) / (beta * vol)
    chi = richardson_second_derivative(pressures, probe.steps())
    assert chi < 0.0


def test_finite_volume_susceptibility_evenness(small_box, opts):
    grid, field = small_box
    chi, evenness = finite_volume_susceptibility(
        grid, field, 200.0, -1.0, BFieldProbe(h_b=0.01), 12,
        PhysicalParams(), opts)
    assert evenness <= 1e-9
    assert np.isfinite(chi)


def test_vanvleck_finite_t_cases():
    # single level with zero moment: -2 E2
    assert vanvleck_finite_T([(0.0, 0.0, 0.3)], 7.0) == pytest.approx(-0.6)
    # large beta with a nondegenerate ground level: ground-only formula
    levels = [(0.0, 0.2, 0.1), (0.8, -0.4, 0.05)]
    beta = 60.0
    val = vanvleck_finite_T(levels, beta)
    ground_only = beta * 0.2**2 - 2 * 0.1
    assert val == pytest.approx(ground_only, rel=1e-3)
    # equal moments, no second-order terms: Curie-type beta M^2 exactly
    equal = [(0.0, 0.5, 0.0), (0.3, 0.5, 0.0), (0.9, 0.5, 0.0)]
    for beta in (0.7, 2.0):
        assert vanvleck_finite_T(equal, beta) == pytest.approx(beta * 0.25,
                                                               rel=1e-12)
    with pytest.raises(ValueError):
        vanvleck_finite_T([], 1.0)


def test_vanvleck_finite_t_affine_in_beta_for_degenerate_levels():
    # all E_j equal: chi(beta) = beta <E1^2> - 2 <E2> is affine in beta
    levels = [(0.5, 0.3, 0.02), (0.5, -0.7, 0.01), (0.5, 0.1, 0.04)]
    e1sq = np.mean([lv[1] ** 2 for lv in levels])
    b1, b2 = 1.3, 4.1
    v1 = vanvleck_finite_T(levels, b1)
    v2 = vanvleck_finite_T(levels, b2)
    slope = (v2 - v1) / (b2 - b1)
    assert slope == pytest.approx(e1sq, rel=1e-12)


def test_classical_reference_values():
    refs = classical_references(1, 1.0, 1, 0.0, 1.0, [1.0])
    assert refs.pauli / refs.langevin == pytest.approx(2.0 / 3.0, rel=1e-12)
    assert refs.curie == 0.0
    refs_m = classical_references(1, 1.0, 2, 0.5, 3.0, [1.0])
    assert refs_m.curie == pytest.approx(2 * 3.0 * 0.25 / 3.0, rel=1e-12)
    # single quadratic level E(B) = E0 + c B^2 gives -2 c N at any beta
    c = 0.35
    n_ions = 3
    refs_h = classical_references(1, 1.0, n_ions, 0.0, 2.0, [1.0])
    samples = {b: [1.0 + c * b * b] for b in (-0.05, 0.0, 0.05)}
    assert refs_h.helmholtz_route(samples) == pytest.approx(
        -2.0 * c * n_ions, rel=1e-6)


def test_pressure_fugacity_derivative_matches_density(small_box, opts):
    # beta z dP/dz = dP/dmu reproduces the Fermi-factor density sum
    grid, field = small_box
    beta, mu = 8.0, -1.0
    H = hamiltonian_single_atom(grid, field)
    ds = dense_spectrum(H, opts)
    dmu = 1e-5
    up = finite_volume_pressure(grid, field, beta, mu + dmu, 0.0, 40, opts,
                                tail_rtol=1e-6)
    dn = finite_volume_pressure(grid, field, beta, mu - dmu, 0.0, 40, opts,
                                tail_rtol=1e-6)
    vol = (2.0 * grid.half_width) ** 2
    density_direct = float(np.sum(fermi_dirac(beta, mu, ds.eigenvalues[:40]))) / vol
    assert (up - dn) / (2.0 * dmu) == pytest.approx(density_direct, rel=1e-6)
