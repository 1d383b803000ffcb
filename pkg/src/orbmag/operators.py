"""Discrete Hermitian operators: single-atom, magnetic, Dirichlet box, Bloch.

Second-order central stencils everywhere.  One-sided stencils would break
the antisymmetry of the discrete gradient, hence Hermiticity, and are not
offered.  With the symmetric gauge each component a_c(x) is constant along
axis c, so a . grad commutes component-wise with the centered differences
exactly and i*b*a.grad is Hermitian on the grid without symmetrization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionTooLarge
from .model import DIRICHLET, PERIODIC, Grid, LatticeConfig, ScalarField, \
    SingleSitePotential, sample_periodic_potential, vector_potential_field

DENSE_LIMIT = 4096


@dataclass
class HermitianOperator:
    """Sparse Hermitian matrix with an application contract.

    ``matrix`` is CSR; ``apply`` is plain matrix-vector product.  Dense
    materialization is permitted only up to ``DENSE_LIMIT`` nodes so the
    brute-force oracle paths stay desk-scale.
    """

    matrix: sp.csr_matrix = field(repr=False)
    grid: Grid = None
    label: str = ""

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.matrix)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def dense(self, limit: int = DENSE_LIMIT) -> np.ndarray:
        if self.dimension > limit:
            raise DimensionTooLarge(
                f"{self.dimension} nodes exceed the dense limit {limit}")
        return self.matrix.toarray()

    def hermiticity_defect(self, pairs: int = 32, seed: int = 0) -> float:
        """max |<v,Hw> - conj(<w,Hv>)| / (|v||w|) over random pairs."""
        rng = np.random.default_rng(seed)
        n = self.dimension
        worst = 0.0
        for _ in range(pairs):
            v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            lhs = np.vdot(v, self.matrix @ w)
            rhs = np.conj(np.vdot(w, self.matrix @ v))
            worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(v) * np.linalg.norm(w)))
        return worst


def _diff_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    """Centered first difference; Dirichlet uses zero ghost values."""
    d = np.full(n - 1, 1.0 / (2.0 * h))
    mat = sp.diags([d, -d], [1, -1], shape=(n, n), format="lil")
    if periodic:
        mat[0, n - 1] = -1.0 / (2.0 * h)
        mat[n - 1, 0] = 1.0 / (2.0 * h)
    return sp.csr_matrix(mat)


def _lap_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    """Second difference; Dirichlet walls use mirror-image ghosts.

    On the cell-centered grid the wall sits midway between the last node
    and its ghost, so the antisymmetric ghost keeps the wall exactly at
    the domain edge and the box eigenvalues second-order accurate.
    """
    main = np.full(n, -2.0 / h**2)
    off = np.full(n - 1, 1.0 / h**2)
    mat = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if periodic:
        mat[0, n - 1] = 1.0 / h**2
        mat[n - 1, 0] = 1.0 / h**2
    else:
        mat[0, 0] = -3.0 / h**2
        mat[n - 1, n - 1] = -3.0 / h**2
    return sp.csr_matrix(mat)


def _kron_axis(op1d: sp.spmatrix, axis: int, dim: int, n: int) -> sp.csr_matrix:
    factors = [sp.identity(n, format="csr")] * dim
    factors[axis] = op1d
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return out


def gradient_matrices(grid: Grid) -> list:
    """Centered-difference matrices, one per axis, on the flattened grid."""
    per = grid.bc == PERIODIC
    d1 = _diff_1d(grid.points, grid.spacing, per)
    return [_kron_axis(d1, c, grid.dim, grid.points) for c in range(grid.dim)]


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    per = grid.bc == PERIODIC
    l1 = _lap_1d(grid.points, grid.spacing, per)
    out = None
    for c in range(grid.dim):
        term = _kron_axis(l1, c, grid.dim, grid.points)
        out = term if out is None else out + term
    return out


def _check_field(grid: Grid, potential_field: ScalarField):
    if potential_field.grid != grid:
        raise ConfigError("potential field was sampled on a different grid")


def hamiltonian_single_atom(grid: Grid, potential_field: ScalarField) -> HermitianOperator:
    """H = -(1/2) Lap + V, real symmetric, Dirichlet box."""
    if grid.bc != DIRICHLET:
        raise ConfigError("single-atom Hamiltonian requires a Dirichlet grid")
    _check_field(grid, potential_field)
    mat = -0.5 * laplacian_matrix(grid) + sp.diags(potential_field.values)
    return HermitianOperator(sp.csr_matrix(mat), grid, "H")


def _shifted_gauge(grid: Grid, gauge_center) -> np.ndarray:
    """a(x - x0) = a(x) - a(x0); the shift is a constant vector."""
    a = vector_potential_field(grid)
    if gauge_center:
        x0 = np.asarray(gauge_center, dtype=float)
        a[:, 0] += 0.5 * x0[1]
        a[:, 1] -= 0.5 * x0[0]
    return a


def hamiltonian_magnetic(grid: Grid, potential_field: ScalarField,
                         b: float, gauge_center: tuple = ()) -> HermitianOperator:
    """H(b) = (1/2)(-i grad - b a)^2 + V in the symmetric gauge.

    Expanded as -(1/2) Lap + i b a.grad + (b^2/2) a^2 + V; polynomial in b,
    so finite-difference curvature in b is smooth.  Discrete gauge-center
    covariance is only O(h^2): states localized a distance d from the
    gauge center acquire a spurious O((b h d)^2) energy, so keep the well
    of interest at the center (or switch to the Peierls assembly).
    """
    if grid.bc != DIRICHLET:
        raise ConfigError("magnetic Hamiltonian requires a Dirichlet grid")
    _check_field(grid, potential_field)
    if b == 0.0:
        return hamiltonian_single_atom(grid, potential_field)
    a = _shifted_gauge(grid, gauge_center)
    grads = gradient_matrices(grid)
    cross = None
    for c in range(grid.dim):
        term = sp.diags(a[:, c]) @ grads[c]
        cross = term if cross is None else cross + term
    a2 = np.einsum("ij,ij->i", a, a)
    mat = (-0.5 * laplacian_matrix(grid)).astype(complex) \
        + 1j * b * cross \
        + sp.diags(0.5 * b * b * a2 + potential_field.values)
    return HermitianOperator(sp.csr_matrix(mat), grid, f"H(b={b})")


def hamiltonian_magnetic_peierls(grid: Grid, potential_field: ScalarField,
                                 b: float,
                                 gauge_center: tuple = ()) -> HermitianOperator:
    """Magnetic Dirichlet Hamiltonian with Peierls link phases.

    Each hop x -> x + h e_c carries exp(-i b int a.dl) with the line
    integral taken along the link (exact for the linear symmetric gauge).
    Unlike the direct expansion, this discretization is exactly gauge
    covariant on the lattice: the spectrum of a well does not depend on
    its distance from the gauge center.  That property is what makes
    multi-well boxes comparable to the single-well reference at finite
    spacing; the direct expansion acquires a spurious O(h^2 d^2) curvature
    for a well displaced by d.
    """
    if grid.bc != DIRICHLET:
        raise ConfigError("Peierls Hamiltonian requires a Dirichlet grid")
    _check_field(grid, potential_field)
    n, h, dim = grid.points, grid.spacing, grid.dim
    size = grid.size
    x = grid.coords()
    # b-independent diagonal of -(1/2) Lap (mirror ghosts) plus the potential
    diag = np.full(size, dim / h**2)
    idx = np.indices(grid.shape).reshape(dim, size)
    for c in range(dim):
        at_wall = (idx[c] == 0) | (idx[c] == n - 1)
        diag[at_wall] += 0.5 / h**2
    mat = sp.diags(diag + potential_field.values).astype(complex).tolil()
    hop = -0.5 / h**2
    strides = [n ** (dim - 1 - c) for c in range(dim)]
    x0 = np.asarray(gauge_center, dtype=float) if gauge_center \
        else np.zeros(dim)
    for c in range(dim):
        has_fwd = idx[c] < n - 1
        rows = np.flatnonzero(has_fwd)
        cols = rows + strides[c]
        # a_c is constant along axis c, so the link-midpoint value equals
        # the node value and the line integral is exact
        if c == 0:
            a_mid = -0.5 * (x[rows, 1] - x0[1])   # a_1 = -x2/2
        elif c == 1:
            a_mid = 0.5 * (x[rows, 0] - x0[0])    # a_2 = x1/2
        else:
            a_mid = np.zeros(len(rows))           # a_3 = 0
        phase = np.exp(-1j * b * h * a_mid)
        fwd = sp.csr_matrix((hop * phase, (rows, cols)), shape=(size, size))
        mat = mat + fwd + fwd.conj().T
    return HermitianOperator(sp.csr_matrix(mat), grid, f"H_peierls(b={b})")


def fold_to_brillouin(k, R: float) -> tuple:
    """Fold a wavevector into (2*pi/R) * [-1/2, 1/2) per axis."""
    g = 2.0 * np.pi / R
    k = np.asarray(k, dtype=float)
    folded = (k + g / 2.0) % g - g / 2.0
    return tuple(folded)


def _lap_1d_bloch(n: int, h: float, phase: complex) -> sp.csr_matrix:
    """Second difference with quasi-periodic wrap links.

    The wrap entries carry exp(+-i k R); the fiber then matches the exact
    k-restriction of the infinite discrete lattice operator.  Entering k
    through the continuum symbol instead would add a spurious O(h^2 k^2)
    dispersion large enough to bury the tight-binding band collapse.
    """
    main = np.full(n, -2.0 / h**2)
    off = np.full(n - 1, 1.0 / h**2)
    mat = sp.diags([off, main, off], [-1, 0, 1], format="lil").astype(complex)
    mat[n - 1, 0] = phase / h**2
    mat[0, n - 1] = np.conj(phase) / h**2
    return sp.csr_matrix(mat)


def bloch_hamiltonian(lattice: LatticeConfig, potential: SingleSitePotential,
                      k, grid: Grid) -> HermitianOperator:
    """Fiber Hamiltonian of (1/2)(-i grad + k)^2 + V_R over one cell.

    Realized with Bloch-phase boundary conditions: the restriction of the
    discrete whole-space operator to quasi-periodic vectors, so E(k) is a
    genuine band of the discrete lattice model (exactly periodic in k,
    exactly even under time reversal, exponentially narrow for bound bands).
    """
    if grid.bc != PERIODIC:
        raise ConfigError("Bloch Hamiltonian requires a periodic grid")
    if abs(2.0 * grid.half_width - lattice.R) > 1e-12 * lattice.R:
        raise ConfigError("periodic cell must span exactly one lattice period")
    kf = fold_to_brillouin(k, lattice.R)
    if not np.allclose(kf, np.asarray(k, dtype=float), atol=1e-12):
        warnings.warn("wavevector outside the first Brillouin zone; folded back",
                      stacklevel=2)
    field_vr = sample_periodic_potential(potential, lattice, grid)
    n, h, dim = grid.points, grid.spacing, grid.dim
    out = None
    for c in range(dim):
        lap1 = _lap_1d_bloch(n, h, np.exp(1j * kf[c] * lattice.R))
        term = _kron_axis(lap1, c, dim, n)
        out = term if out is None else out + term
    mat = -0.5 * out + sp.diags(field_vr.values).astype(complex)
    return HermitianOperator(sp.csr_matrix(mat), grid, f"h(k={kf})")


@dataclass
class ObservableSet:
    """L3, the transverse position moment, and the gradient components."""

    L3: HermitianOperator
    Xperp2: HermitianOperator
    gradients: list

    def angular_apply(self, v: np.ndarray) -> np.ndarray:
        return self.L3.matrix @ v


def observables(grid: Grid) -> ObservableSet:
    """L3 = -i (x1 D2 - x2 D1) and X1^2 + X2^2 (diagonal, nonnegative)."""
    if grid.bc != DIRICHLET:
        raise ConfigError("observables are defined on the Dirichlet grid")
    x = grid.coords()
    grads = gradient_matrices(grid)
    l3 = -1j * (sp.diags(x[:, 0]) @ grads[1] - sp.diags(x[:, 1]) @ grads[0])
    xp2 = sp.diags(x[:, 0] ** 2 + x[:, 1] ** 2)
    return ObservableSet(
        L3=HermitianOperator(sp.csr_matrix(l3), grid, "L3"),
        Xperp2=HermitianOperator(sp.csr_matrix(xp2), grid, "Xperp2"),
        gradients=[HermitianOperator(g, grid, f"D{c+1}") for c, g in enumerate(grads)],
    )
