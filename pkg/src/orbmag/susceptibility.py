"""Zero-field atomic susceptibility: Larmor and complete Van Vleck parts.

Three independent routes to the same number are provided and cross-checked:
per-level quadratic forms (Larmor moment + reduced-resolvent Van Vleck),
finite-field eigenvalue curvature, and a contour integral of the dense
resolvent kernel.  Agreement between them is the package's main correctness
argument, so none of the routes shares intermediate results with another.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientBoundStates, LevelTrackingLost
from .eigensolve import ContourSpec, SolveOptions, SpectralData, \
    deflated_solve, lowest_eigenpairs, resolvent_apply
from .model import Grid, PhysicalParams, ScalarField
from .operators import HermitianOperator, ObservableSet, hamiltonian_magnetic, \
    hamiltonian_magnetic_peierls
from . import operators as _ops

GAUGE_ASSEMBLY = {"expansion": hamiltonian_magnetic,
                  "peierls": hamiltonian_magnetic_peierls}


@dataclass(frozen=True)
class BFieldProbe:
    """Symmetric field steps for curvature by central differences.

    Steps are +-h_b * 2^j for j = 0..richardson_levels; h_b below 1e-4
    would amplify solver noise in the divided differences faster than it
    reduces truncation, so the constructor refuses it.
    """

    h_b: float = 1e-2
    richardson_levels: int = 1

    def __post_init__(self):
        if self.h_b < 1e-4:
            raise ValueError("h_b below the 1e-4 conditioning floor")
        if self.richardson_levels < 0:
            raise ValueError("richardson_levels must be >= 0")

    def steps(self) -> list:
        pos = [self.h_b * 2**j for j in range(self.richardson_levels + 1)]
        return sorted({-s for s in pos} | {0.0} | set(pos))


def _check_levels(spectral: SpectralData, n0: int):
    if n0 < 0:
        raise ValueError("n0 must be nonnegative")
    if n0 > spectral.count_negative:
        raise InsufficientBoundStates(
            f"requested n0={n0} occupied levels but only "
            f"{spectral.count_negative} bound states are present")
    spectral.require_simple(range(n0))


def larmor_term(spectral: SpectralData, n0: int, obs: ObservableSet,
                params: PhysicalParams) -> float:
    """-kappa/4 * sum_{l<=n0} <phi_l, (X1^2+X2^2) phi_l>, un-normalized.

    The caller divides by the cell volume when a per-volume number is wanted.
    """
    _check_levels(spectral, n0)
    total = 0.0
    for l in range(n0):
        phi = spectral.vector(l)
        total += float(np.real(np.vdot(phi, obs.Xperp2.matrix @ phi)))
    return -0.25 * params.kappa * total


def larmor_per_level(spectral: SpectralData, n0: int, obs: ObservableSet,
                     params: PhysicalParams) -> list:
    _check_levels(spectral, n0)
    out = []
    for l in range(n0):
        phi = spectral.vector(l)
        r2 = float(np.real(np.vdot(phi, obs.Xperp2.matrix @ phi)))
        out.append(-0.25 * params.kappa * r2)
    return out


def vanvleck_term(spectral: SpectralData, n0: int, H: HermitianOperator,
                  obs: ObservableSet, params: PhysicalParams,
                  opts: SolveOptions = SolveOptions()) -> tuple:
    """kappa/2 * sum_l <L3 phi_l, (P (H - lambda_l) P)^{-1} L3 phi_l>.

    Returns (value, per-level list).  Each summand is reported; for the
    ground state, and generally whenever no occupied level couples to a
    lower one through L3, every summand is nonnegative.
    """
    _check_levels(spectral, n0)
    per_level = []
    for l in range(n0):
        lam = spectral.eigenvalues[l]
        phi = spectral.vector(l)
        l3phi = obs.L3.matrix @ phi
        rhs = l3phi - phi * np.vdot(phi, l3phi)
        psi = deflated_solve(H, lam, phi, rhs, opts)
        per_level.append(0.5 * params.kappa * float(np.real(np.vdot(l3phi, psi))))
    return float(np.sum(per_level)) if per_level else 0.0, per_level


def vanvleck_discrete_per_level(spectral: SpectralData, n0: int, tau: int,
                                obs: ObservableSet,
                                params: PhysicalParams) -> list:
    """Bound-bound couplings above the occupied set, per occupied level."""
    _check_levels(spectral, n0)
    if tau > spectral.count:
        raise ValueError("tau exceeds the number of computed eigenpairs")
    out = []
    for l in range(n0):
        lam_l = spectral.eigenvalues[l]
        l3phi = obs.L3.matrix @ spectral.vector(l)
        s = 0.0
        for m in range(n0, tau):
            amp = np.vdot(spectral.vector(m), l3phi)
            s += abs(amp) ** 2 / (spectral.eigenvalues[m] - lam_l)
        out.append(0.5 * params.kappa * s)
    return out


def vanvleck_split(spectral: SpectralData, n0: int, tau: int,
                   obs: ObservableSet, params: PhysicalParams,
                   vanvleck_total: float) -> tuple:
    """(discrete, continuum) parts; continuum is total minus discrete.

    On a finite grid the non-bound states stand in for the generalized
    eigenfunctions, so the continuum part is defined by subtraction; the
    discrete part vanishes identically when n0 = tau.
    """
    disc = float(np.sum(vanvleck_discrete_per_level(spectral, n0, tau, obs,
                                                    params))) if n0 else 0.0
    return disc, vanvleck_total - disc


@dataclass
class CurvatureResult:
    value: float
    evenness_residual: float
    eigenvalues_by_b: dict = field(default_factory=dict)


def richardson_second_derivative(lams: dict, steps: list) -> float:
    hs = sorted({s for s in steps if s > 0})
    table = [(lams[h] - 2.0 * lams[0.0] + lams[-h]) / h**2 for h in hs]
    # successive elimination of the h^2, h^4, ... truncation terms
    k = 1
    while len(table) > 1:
        fac = 4.0**k
        table = [(fac * table[i] - table[i + 1]) / (fac - 1.0)
                 for i in range(len(table) - 1)]
        k += 1
    return table[0]


def eigenvalue_curvatures(grid: Grid, potential_field: ScalarField,
                          levels, probe: BFieldProbe = BFieldProbe(),
                          opts: SolveOptions = SolveOptions(),
                          min_overlap: float = 0.9,
                          gauge: str = "expansion") -> dict:
    """d^2 lambda_l / db^2 at b=0 for several levels in one field sweep.

    Levels are tracked from b=0 outward by eigenvector overlap; sorted-order
    relabeling across a crossing raises LevelTrackingLost.  ``gauge`` picks
    the operator family: the direct expansion (polynomial in b) for wells at
    the gauge center, or Peierls phases when lattice gauge covariance
    matters (off-center wells).
    """
    assemble = GAUGE_ASSEMBLY[gauge]
    levels = sorted(levels)
    count = levels[-1] + 3
    steps = probe.steps()
    base = lowest_eigenpairs(assemble(grid, potential_field, 0.0),
                             count, opts)
    base.require_simple(levels)
    tracked = {l: {0.0: base.eigenvalues[l]} for l in levels}
    for direction in (1.0, -1.0):
        ref = {l: base.vector(l) for l in levels}
        for b in sorted(s for s in steps if s > 0):
            sd = lowest_eigenpairs(
                assemble(grid, potential_field, direction * b), count, opts)
            for l in levels:
                ov = np.abs(sd.eigenvectors.conj().T @ ref[l])
                j = int(np.argmax(ov))
                if ov[j] < min_overlap:
                    raise LevelTrackingLost(
                        f"level {l} overlap {ov[j]:.3f} < {min_overlap} "
                        f"at b={direction * b}")
                tracked[l][direction * b] = sd.eigenvalues[j]
                ref[l] = sd.vector(j)
    out = {}
    for l in levels:
        lams = tracked[l]
        evenness = max(abs(lams[h] - lams[-h]) for h in steps if h > 0)
        out[l] = CurvatureResult(
            value=richardson_second_derivative(lams, steps),
            evenness_residual=evenness,
            eigenvalues_by_b=dict(sorted(lams.items())))
    return out


def eigenvalue_curvature(grid: Grid, potential_field: ScalarField, level_l: int,
                         probe: BFieldProbe = BFieldProbe(),
                         opts: SolveOptions = SolveOptions(),
                         gauge: str = "expansion") -> CurvatureResult:
    return eigenvalue_curvatures(grid, potential_field, [level_l], probe,
                                 opts, gauge=gauge)[level_l]


def feshbach_second_order(spectral: SpectralData, level_l: int,
                          H: HermitianOperator, obs: ObservableSet,
                          opts: SolveOptions = SolveOptions()) -> float:
    """Second b-derivative of lambda_l from the block-decomposition formula.

    -2 <W1 phi, (P (H - lambda) P)^{-1} W1 phi> + <phi, a^2 phi>, where
    W1 = a.(-i grad) = L3/2 in the symmetric gauge and a^2 = (x1^2+x2^2)/4.
    """
    spectral.require_simple([level_l])
    lam = spectral.eigenvalues[level_l]
    phi = spectral.vector(level_l)
    w1phi = 0.5 * (obs.L3.matrix @ phi)
    rhs = w1phi - phi * np.vdot(phi, w1phi)
    psi = deflated_solve(H, lam, phi, rhs, opts)
    quad = 0.25 * float(np.real(np.vdot(phi, obs.Xperp2.matrix @ phi)))
    return -2.0 * float(np.real(np.vdot(w1phi, psi))) + quad


@dataclass
class SusceptibilityReport:
    """Larmor / Van Vleck decomposition with the curvature cross-check."""

    n0: int
    chi_larmor: float
    chi_vanvleck: float
    chi_vv_discrete: float
    chi_vv_continuum: float
    chi_total: float
    chi_curvature: float
    per_level: list
    cell_volume: float = 0.0
    evenness_residual: float = 0.0

    def validate(self, identity_rtol: float = 1e-3, sum_tol: float = 1e-8,
                 sign_tol: float = 1e-8):
        if self.n0 >= 1 and not self.chi_larmor < 0:
            raise AssertionError("Larmor term must be strictly diamagnetic")
        if self.chi_vanvleck < -sign_tol:
            raise AssertionError("total Van Vleck term must be paramagnetic")
        if abs(self.chi_larmor + self.chi_vanvleck - self.chi_total) > sum_tol:
            raise AssertionError("total must equal Larmor + Van Vleck")
        split = self.chi_vv_discrete + self.chi_vv_continuum
        if abs(split - self.chi_vanvleck) > sum_tol:
            raise AssertionError("Van Vleck split must add up to the total")
        denom = max(abs(self.chi_total), 1e-30)
        if abs(self.chi_total - self.chi_curvature) / denom > identity_rtol:
            raise AssertionError(
                f"curvature identity violated: {self.chi_total} vs "
                f"{self.chi_curvature}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["l", "lambda_l", "larmor_l", "vv_l", "vv_discrete_l",
                         "curvature_l"])
        for row in self.per_level:
            writer.writerow([row["l"], repr(row["lambda_l"]),
                             repr(row["larmor_l"]), repr(row["vv_l"]),
                             repr(row["vv_discrete_l"]),
                             repr(row["curvature_l"])])
        return buf.getvalue()


def susceptibility_report(grid: Grid, potential_field: ScalarField, n0: int,
                          params: PhysicalParams = PhysicalParams(),
                          opts: SolveOptions = SolveOptions(),
                          probe: BFieldProbe = BFieldProbe(),
                          cell_volume: float = 0.0,
                          spectral: SpectralData = None,
                          H: HermitianOperator = None) -> SusceptibilityReport:
    """Evaluate every route for the n0 lowest levels of the given well."""
    if H is None:
        H = _ops.hamiltonian_single_atom(grid, potential_field)
    if spectral is None:
        spectral = lowest_eigenpairs(H, max(n0 + 2, 4), opts)
    _check_levels(spectral, n0)
    tau = spectral.count_negative
    obs = _ops.observables(grid)
    lar_levels = larmor_per_level(spectral, n0, obs, params)
    vv_total, vv_levels = vanvleck_term(spectral, n0, H, obs, params, opts)
    vv_disc_levels = vanvleck_discrete_per_level(spectral, n0, tau, obs, params)
    chi_lar = float(np.sum(lar_levels)) if lar_levels else 0.0
    chi_vv_d, chi_vv_ac = vanvleck_split(spectral, n0, tau, obs, params, vv_total)
    curv = eigenvalue_curvatures(grid, potential_field, range(n0), probe, opts) \
        if n0 else {}
    per_level = [{
        "l": l + 1,
        "lambda_l": float(spectral.eigenvalues[l]),
        "larmor_l": lar_levels[l],
        "vv_l": vv_levels[l],
        "vv_discrete_l": vv_disc_levels[l],
        "curvature_l": curv[l].value,
    } for l in range(n0)]
    chi_curv = -params.kappa * float(np.sum([c.value for c in curv.values()]))
    return SusceptibilityReport(
        n0=n0,
        chi_larmor=chi_lar,
        chi_vanvleck=vv_total,
        chi_vv_discrete=chi_vv_d,
        chi_vv_continuum=chi_vv_ac,
        chi_total=chi_lar + vv_total,
        chi_curvature=chi_curv,
        per_level=per_level,
        cell_volume=cell_volume,
        evenness_residual=max((c.evenness_residual for c in curv.values()),
                              default=0.0),
    )


def _weight(theta: complex, w: int, xi: np.ndarray) -> np.ndarray:
    """Contour weight family: theta - xi for w=1, constant theta for w=0."""
    if w not in (0, 1):
        raise ValueError("weight index w must be 0 or 1")
    return theta - xi if w == 1 else np.full_like(xi, theta)


def riesz_trace(H: HermitianOperator, contour: ContourSpec, w: int = 0,
                theta: complex = 1.0, opts: SolveOptions = SolveOptions(),
                spectral: SpectralData = None,
                spectrum_full: np.ndarray = None,
                method: str = "dense", probes: int = 32) -> complex:
    """(i/2pi) * contour integral of g_{theta,w}(xi) Tr (H - xi)^{-1}.

    With w=0, theta=1 this is the rank of the enclosed Riesz projection;
    with w=1, theta=0 it is minus the sum of the enclosed eigenvalues.
    The per-node trace is exact (from the full dense spectrum) or a
    Hutchinson estimate with `probes` random vectors for large operators.
    """
    if spectral is not None:
        contour.validate_against(spectral.eigenvalues, opts)
    xi, dxi = contour.quadrature()
    g = _weight(complex(theta), w, xi)
    if method == "dense":
        if spectrum_full is None:
            spectrum_full = np.linalg.eigvalsh(H.dense())
        traces = np.array([np.sum(1.0 / (spectrum_full - x)) for x in xi])
    elif method == "stochastic":
        rng = np.random.default_rng(opts.seed)
        zs = rng.choice([-1.0, 1.0], size=(probes, H.dimension))
        traces = np.zeros(len(xi), dtype=complex)
        for i, x in enumerate(xi):
            acc = 0.0
            for z in zs:
                acc += np.vdot(z, resolvent_apply(H, complex(x), z + 0j, opts))
            traces[i] = acc / probes
    else:
        raise ValueError(f"unknown trace method {method!r}")
    return 1j / (2.0 * np.pi) * np.sum(dxi * g * traces)


def contour_kernel_values(H: HermitianOperator, grid: Grid,
                          contour: ContourSpec,
                          params: PhysicalParams = PhysicalParams(),
                          spectral: SpectralData = None,
                          opts: SolveOptions = SolveOptions()) -> dict:
    """Contour integrals of the dense gauge-kernel trace, both weights.

    Evaluates -kappa (i/pi) * integral of g(xi) Tr{(H-xi)^{-1}
    [T1(xi) T1(xi) - T2(xi)]} dxi for g(xi) = xi ("xi") and g = 1 ("one")
    in a single resolvent sweep.  T1[i,j] = a(x_i - x_j).(i grad G)(x_i,x_j)
    with the gradient on the first index; T2[i,j] = a^2(x_i - x_j) G[i,j]/2.
    The "one" weight must integrate to zero up to discretization error (the
    rank of the Riesz projection does not depend on the field).

    For a real operator and a contour symmetric about the real axis, only
    the upper half of the nodes is visited (conjugate symmetry).
    """
    if spectral is not None:
        contour.validate_against(spectral.eigenvalues, opts)
    dense = H.dense()
    x = grid.coords()
    # antisymmetric coefficient matrices a_c(x_i - x_j)
    a1 = -0.5 * (x[:, 1][:, None] - x[:, 1][None, :])
    a2 = 0.5 * (x[:, 0][:, None] - x[:, 0][None, :])
    a_sq = a1 * a1 + a2 * a2
    grads = [g.matrix for g in _ops.observables(grid).gradients]
    xi, dxi = contour.quadrature()
    symmetric = (not H.is_complex and contour.shape == "circle"
                 and abs(complex(contour.center).imag) < 1e-15)
    if symmetric:
        keep = xi.imag > 0
        xi, dxi = xi[keep], dxi[keep]
    n = dense.shape[0]
    ident = np.eye(n)
    totals = {"xi": 0.0 + 0.0j, "one": 0.0 + 0.0j}
    for x_node, w_node in zip(xi, dxi):
        g_res = np.linalg.solve(dense - x_node * ident,
                                np.eye(n, dtype=complex))
        t1 = a1 * (1j * (grads[0] @ g_res)) + a2 * (1j * (grads[1] @ g_res))
        t2 = 0.5 * a_sq * g_res
        tr = np.einsum("ij,ji->", g_res, t1 @ t1) - np.sum(g_res.T * t2)
        for key, fac in (("xi", x_node), ("one", 1.0)):
            term = w_node * fac * tr
            # conjugate node contributes the conjugate with opposite weight
            totals[key] += (term - np.conj(term)) if symmetric else term
    return {key: float(np.real(-params.kappa * (1j / np.pi) * val))
            for key, val in totals.items()}


def contour_kernel_susceptibility(H: HermitianOperator, grid: Grid,
                                  contour: ContourSpec,
                                  params: PhysicalParams = PhysicalParams(),
                                  weight: str = "xi",
                                  spectral: SpectralData = None,
                                  opts: SolveOptions = SolveOptions()) -> float:
    """Single-weight convenience wrapper around contour_kernel_values."""
    if weight not in ("xi", "one"):
        raise ValueError(f"unknown weight {weight!r}")
    return contour_kernel_values(H, grid, contour, params, spectral, opts)[weight]
