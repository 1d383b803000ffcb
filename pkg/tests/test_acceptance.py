"""Acceptance suite: one test per criterion, printing a pass/fail line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines live; a
summary is also written to acceptance_summary.txt in the working directory.
Heavy artifacts (the fine-grid well, the kernel refinement pair, the
lattice-constant sweep) are computed once and shared across criteria.
"""

import numpy as np
import pytest

from orbmag.cli import run_cli
from orbmag.bloch import band_edges_and_gaps, band_structure, cell_grid
from orbmag.cache import cache_spectral
from orbmag.eigensolve import SolveOptions, default_contour, dense_spectrum, \
    lowest_eigenpairs
from orbmag.levels import level_corrections
from orbmag.model import LatticeConfig, PhysicalParams, make_grid, \
    sample_potential
from orbmag.operators import hamiltonian_single_atom, observables
from orbmag.susceptibility import BFieldProbe, contour_kernel_values, \
    eigenvalue_curvature, riesz_trace, susceptibility_report, vanvleck_term
from orbmag.sweep import SweepConfig, estimate_noise_floor, \
    fit_exponential_remainder, run_sweep
from orbmag.thermo import fermi_energy, vanvleck_finite_T

PARAMS = PhysicalParams()
OPTS = SolveOptions()
_LINES = []


def record(num, name, ok, details):
    line = f"ACCEPTANCE {num} [{name}]: {'PASS' if ok else 'FAIL'} — {details}"
    _LINES.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session", autouse=True)
def summary_writer():
    yield
    if _LINES:
        with open("acceptance_summary.txt", "w") as fh:
            fh.write("\n".join(_LINES) + "\n")


# ----- shared heavy artifacts -------------------------------------------

@pytest.fixture(scope="module")
def fine_case(deep_well):
    grid = make_grid(2, 10.0, 128)
    field = sample_potential(deep_well, grid)
    H = hamiltonian_single_atom(grid, field)
    spectral = lowest_eigenpairs(H, 4, OPTS)
    assert spectral.count_negative == 2
    return grid, field, H, spectral


@pytest.fixture(scope="module")
def fine_reports(fine_case):
    grid, field, H, spectral = fine_case
    tau = spectral.count_negative
    reports = {}
    for n0 in (1, tau):
        reports[n0] = susceptibility_report(grid, field, n0, PARAMS, OPTS,
                                            BFieldProbe(), spectral=spectral,
                                            H=H)
    return reports


@pytest.fixture(scope="module")
def kernel_pair(deep_well):
    """Kernel-route and spectral-route values at the 32^2 / 48^2 pair."""
    out = {}
    for pts in (32, 48):
        grid = make_grid(2, 10.0, pts)
        field = sample_potential(deep_well, grid)
        H = hamiltonian_single_atom(grid, field)
        spectral = lowest_eigenpairs(H, 4, OPTS)
        rep = susceptibility_report(grid, field, 2, PARAMS, OPTS,
                                    BFieldProbe(), spectral=spectral, H=H)
        contour = default_contour(spectral, 2, nodes=32)
        vals = contour_kernel_values(H, grid, contour, PARAMS,
                                     spectral=spectral, opts=OPTS)
        out[pts] = {"chi_kernel": vals["xi"], "null": vals["one"],
                    "chi_spectral": rep.chi_total}
    return out


@pytest.fixture(scope="module")
def tb_sweep(shallow_well):
    config = SweepConfig(
        R_values=(5.0, 6.0, 7.0, 8.0), n0=1, potential=shallow_well,
        spacing=0.25, atomic_half_width=8.0, n_bands=3, n_k=8,
        beta_schedule=(1e5, 2e5, 4e5, 8e5), box_multiple=2, n_box_levels=20,
        opts=OPTS, params=PARAMS)
    rows, ref = run_sweep(config)
    floor = estimate_noise_floor(config, coarse_row=rows[0])
    return config, rows, ref, floor


@pytest.fixture(scope="module")
def tb_bands(shallow_well):
    grid = make_grid(2, 8.0, 64)
    atomic = lowest_eigenpairs(
        hamiltonian_single_atom(grid, sample_potential(shallow_well, grid)),
        5, OPTS)
    per_R = {}
    for R in (5.0, 6.0, 7.0, 8.0):
        bs = band_structure(LatticeConfig(R=R), shallow_well, 3, 8,
                            cell_grid(R, 0.25, 2), OPTS)
        per_R[R] = (bs, band_edges_and_gaps(bs, atomic))
    return atomic, per_R


# ----- criteria ----------------------------------------------------------

def test_criterion_1_theorem_identity(fine_reports):
    worst = 0.0
    for n0, rep in fine_reports.items():
        rep.validate(identity_rtol=1e-3)
        rel = abs(rep.chi_total - rep.chi_curvature) / abs(rep.chi_total)
        worst = max(worst, rel)
    record(1, "theorem identity", worst <= 1e-3,
           f"max relative identity residual {worst:.3e} <= 1e-3 "
           f"for n0 in {sorted(fine_reports)} on the 128^2 well")


def test_criterion_2_fock_darwin(harmonic_case):
    grid, field = harmonic_case
    H = hamiltonian_single_atom(grid, field)
    sd = lowest_eigenpairs(H, 2, OPTS)
    obs = observables(grid)
    curv = eigenvalue_curvature(grid, field, 0, BFieldProbe(), OPTS).value
    from orbmag.susceptibility import larmor_term
    lar = larmor_term(sd, 1, obs, PARAMS)
    vv, _ = vanvleck_term(sd, 1, H, obs, PARAMS, OPTS)
    ok = (abs(curv - 0.25) <= 0.01 * 0.25
          and abs(lar - (-PARAMS.kappa / 4.0)) <= 0.01 * 0.25
          and abs(vv) <= 1e-3)
    record(2, "Fock-Darwin oracle", ok,
           f"curvature {curv:.6f} (target 0.25 +-1%), larmor {lar:.6f} "
           f"(target -0.25 +-1%), |vanvleck| {abs(vv):.2e} <= 1e-3")


def test_criterion_3_vanvleck_split(fine_reports, deep_well):
    rep = fine_reports[2]  # n0 = tau
    exact_zero = rep.chi_vv_discrete == 0.0
    addup = abs(rep.chi_vv_discrete + rep.chi_vv_continuum
                - rep.chi_vanvleck) <= 1e-8
    # dense sum-over-states oracle at 32^2 on the same matrix
    grid = make_grid(2, 10.0, 32)
    field = sample_potential(deep_well, grid)
    H = hamiltonian_single_atom(grid, field)
    ds = dense_spectrum(H, OPTS)
    obs = observables(grid)
    val, _ = vanvleck_term(ds, 2, H, obs, PARAMS, OPTS)
    oracle = 0.0
    for l in range(2):
        l3phi = obs.L3.matrix @ ds.vector(l)
        amps = np.abs(ds.eigenvectors.conj().T @ l3phi) ** 2
        denom = ds.eigenvalues - ds.eigenvalues[l]
        keep = np.arange(ds.count) != l
        oracle += 0.5 * PARAMS.kappa * np.sum(amps[keep] / denom[keep])
    dense_ok = abs(val - oracle) <= 1e-6
    record(3, "Van Vleck split", exact_zero and addup and dense_ok,
           f"discrete part {rep.chi_vv_discrete} (exact 0 at n0=tau), "
           f"split defect {abs(rep.chi_vv_discrete + rep.chi_vv_continuum - rep.chi_vanvleck):.1e} <= 1e-8, "
           f"dense oracle gap {abs(val - oracle):.2e} <= 1e-6")


def test_criterion_4_riesz_contour_suite(kernel_pair, deep_well):
    grid = make_grid(2, 10.0, 32)
    field = sample_potential(deep_well, grid)
    H = hamiltonian_single_atom(grid, field)
    ds = dense_spectrum(H, OPTS)
    eigs = ds.eigenvalues
    contour = default_contour(ds, 2, nodes=64)
    rank = riesz_trace(H, contour, w=0, theta=1.0, opts=OPTS, spectral=ds,
                       spectrum_full=eigs)
    rank_ok = abs(rank - round(rank.real)) <= 1e-6 and round(rank.real) == 2
    weighted = riesz_trace(H, contour, w=1, theta=0.0, opts=OPTS,
                           spectrum_full=eigs)
    weighted_ok = abs(weighted - (-np.sum(eigs[:2]))) <= 1e-8
    null32, null48 = kernel_pair[32]["null"], kernel_pair[48]["null"]
    envelope = abs(null32 - null48)  # refinement estimate of the 48^2 error
    null_ok = abs(null48) <= envelope and abs(null32) / abs(null48) >= 2.0
    diff32 = abs(kernel_pair[32]["chi_kernel"] - kernel_pair[32]["chi_spectral"])
    diff48 = abs(kernel_pair[48]["chi_kernel"] - kernel_pair[48]["chi_spectral"])
    kernel_ok = diff48 < diff32
    record(4, "Riesz/contour suite",
           rank_ok and weighted_ok and null_ok and kernel_ok,
           f"rank defect {abs(rank - 2):.1e} <= 1e-6; weighted-trace gap "
           f"{abs(weighted - (-np.sum(eigs[:2]))):.1e} <= 1e-8; null trace "
           f"{abs(null48):.3e} <= envelope {envelope:.3e} with shrink "
           f"{abs(null32)/abs(null48):.2f}x >= 2; kernel-vs-spectral error "
           f"{diff32:.3e} -> {diff48:.3e}")


def test_criterion_5_band_localization(tb_bands):
    atomic, per_R = tb_bands
    tau = atomic.count_negative
    rs = np.array(sorted(per_R))
    isolated = True
    inside = True
    for R, (bs, rep) in per_R.items():
        edges = rep.band_edges
        for l in range(tau):
            isolated &= edges[l][1] < edges[l + 1][0]
            lam = atomic.eigenvalues[l]
            inside &= edges[l][0] < lam < edges[l][1]
    slopes = {}
    for l in range(tau):
        devs = np.array([per_R[R][1].localization[l] for R in rs])
        slopes[l] = np.polyfit(rs, np.log(devs * rs), 1)[0]
    # decay-rate oracle in these units (kinetic term -Lap/2): a level at
    # -|lambda| tunnels at rate sqrt(2 |lambda|)
    rate_ok = all(
        abs(slopes[l] + np.sqrt(2.0 * abs(atomic.eigenvalues[l])))
        <= 0.2 * np.sqrt(2.0 * abs(atomic.eigenvalues[l]))
        for l in range(tau))
    detail = ", ".join(
        f"band {l+1}: slope {slopes[l]:.3f} vs -sqrt(2|lambda|) "
        f"{-np.sqrt(2.0*abs(atomic.eigenvalues[l])):.3f}" for l in range(tau))
    record(5, "tight-binding localization",
           isolated and inside and rate_ok,
           f"bands 1..{tau} isolated and bracket the atomic levels over "
           f"R={list(rs)}; {detail} (each within 20%)")


@pytest.mark.xfail(strict=True, reason=(
    "stated rate -sqrt(|lambda_l|) misses the mass-1/2 factor: with the "
    "kinetic term -Lap/2 a level at -|lambda| decays at sqrt(2|lambda|), "
    "which the measured slopes confirm; the literal 20% window around "
    "-sqrt(|lambda_l|) is therefore unattainable"))
def test_criterion_5_literal_rate(tb_bands):
    atomic, per_R = tb_bands
    rs = np.array(sorted(per_R))
    for l in range(atomic.count_negative):
        devs = np.array([per_R[R][1].localization[l] for R in rs])
        slope = np.polyfit(rs, np.log(devs * rs), 1)[0]
        target = -np.sqrt(abs(atomic.eigenvalues[l]))
        assert abs(slope - target) <= 0.2 * abs(target)


def test_criterion_6_fermi_energy(tb_bands, tb_sweep):
    atomic, per_R = tb_bands
    bs, _ = per_R[6.0]
    res = fermi_energy(bs, 1.0 / 36.0, (1e5, 2e5, 4e5, 8e5))
    lam1 = abs(atomic.eigenvalues[0])
    landing_ok = res.deviation <= 1e-6 * lam1
    negative_ok = res.gap_midpoint < 0.0 and res.value < 0.0
    _, rows, _, _ = tb_sweep
    frems = [row.fermi_remainder for row in rows]
    trend_ok = all(b <= a for a, b in zip(frems, frems[1:]))
    record(6, "Fermi energy", landing_ok and negative_ok and trend_ok,
           f"extrapolation lands {res.deviation:.2e} from the gap midpoint "
           f"(budget {1e-6*lam1:.2e}); midpoint {res.gap_midpoint:.4f} < 0; "
           f"|E_R - E_P| non-increasing over R: {['%.2e' % f for f in frems]}")


def test_criterion_7_bulk_trend(tb_sweep):
    config, rows, ref, floor = tb_sweep
    rems = [abs(row.remainder) for row in rows]
    above = [r for r in rems if r > floor]
    monotone_ok = all(b < a for a, b in zip(above, above[1:]))
    fit = fit_exponential_remainder(rows, np.arange(0.2, 1.25, 0.05),
                                    noise_floor=floor)
    fit_ok = fit.c > 0.0 and fit.r_squared >= 0.9
    record(7, "bulk susceptibility trend",
           monotone_ok and fit_ok and len(above) >= 3,
           f"|remainder| {['%.2e' % r for r in rems]} decreasing above the "
           f"declared floor {floor:.2e}; fit c={fit.c:.3f} > 0 with "
           f"R^2={fit.r_squared:.4f} >= 0.9 at alpha={fit.alpha:.2f}")


def test_criterion_8_historical_bridge(fine_case, fine_reports):
    grid, field, H, spectral = fine_case
    obs = observables(grid)
    tau = spectral.count_negative
    levels = [level_corrections(spectral, j, H, obs, OPTS)
              for j in range(tau)]
    gap = levels[1].E - levels[0].E
    beta = 1e3 / gap
    chi_beta = vanvleck_finite_T([(lv.E, lv.E1, lv.E2) for lv in levels], beta)
    ground = beta * levels[0].E1 ** 2 - 2.0 * levels[0].E2
    limit_ok = abs(chi_beta - ground) <= 0.01 * abs(ground)
    bridge = -2.0 * PARAMS.kappa * levels[0].E2
    rep1 = fine_reports[1]
    bridge_ok = abs(bridge - rep1.chi_total) <= 1e-8
    record(8, "historical bridge", limit_ok and bridge_ok,
           f"finite-T value at beta=1e3/gap within "
           f"{abs(chi_beta-ground)/abs(ground):.2e} of the ground-level "
           f"formula (<=1%); -2 kappa E2 - chi_total = "
           f"{bridge - rep1.chi_total:.2e} (<=1e-8)")


def test_criterion_9_infrastructure(tmp_path, monkeypatch, deep_well):
    monkeypatch.setenv("ORBMAG_CACHE_DIR", str(tmp_path / "cache"))
    cfg = f"""
grid: {{half_width: 10.0, points: 32}}
potential: {{depth: 4.2, radius: 1.5, aspect: [1.3, 0.75]}}
lattice: {{R: 6.0, n0: 1}}
output: {{dir: {tmp_path / 'o1'}}}
"""
    cfgfile = tmp_path / "run.yaml"
    cfgfile.write_text(cfg)
    rc1 = run_cli(["atomic", "--config", str(cfgfile), "--serial"])
    rc2 = run_cli(["atomic", "--config", str(cfgfile), "--serial",
                   "--out", str(tmp_path / "o2")])
    identical = all(
        (tmp_path / "o1" / n).read_bytes() == (tmp_path / "o2" / n).read_bytes()
        for n in ("report.json", "report.csv"))
    calls = {"n": 0}
    grid = make_grid(2, 10.0, 32)
    H = hamiltonian_single_atom(grid, sample_potential(deep_well, grid))

    def compute():
        calls["n"] += 1
        return lowest_eigenpairs(H, 3, OPTS)

    cache_spectral({"k": 1}, compute, directory=tmp_path / "c2")
    cache_spectral({"k": 1}, compute, directory=tmp_path / "c2")
    cache_spectral({"k": 2}, compute, directory=tmp_path / "c2")
    cache_ok = calls["n"] == 2
    record(9, "infrastructure", rc1 == 0 and rc2 == 0 and identical and cache_ok,
           f"serial reruns byte-identical={identical}; cache hit/miss "
           f"recompute count {calls['n']} (expected 2); module invariant "
           f"suites are the remainder of this pytest run")
