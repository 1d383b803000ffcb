"""Low-end eigenpairs, deflated solves, and resolvent applications.

The Lanczos work is delegated to ARPACK (full reorthogonalization of the
Krylov basis, deterministic for a fixed starting vector); every result is
re-verified against the residual and orthonormality contracts before it is
returned.  Indefinite solves use MINRES; a complex shift on a real operator
is handled through an equivalent symmetric real system of doubled size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ContourTooClose, ConvergenceFailure, DegeneracyDetected, \
    NotOrthogonal
from .operators import HermitianOperator

ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class SolveOptions:
    """Tolerances and seeds shared by the iterative solvers."""

    tol: float = 1e-10
    max_iter: int = 50000
    seed: int = 7
    degeneracy_gap: float = 0.0  # 0 means the default 1e-6 * |lambda_1|

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.degeneracy_gap < 0:
            raise ValueError("degeneracy_gap must be nonnegative")

    def effective_degeneracy_gap(self, lambda1: float) -> float:
        if self.degeneracy_gap > 0:
            return self.degeneracy_gap
        return 1e-6 * max(abs(lambda1), 1e-6)


@dataclass
class SpectralData:
    """Sorted low-end eigenpairs with verified residuals."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    residuals: np.ndarray
    count_negative: int
    degenerate_pairs: list = field(default_factory=list)

    def __post_init__(self):
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be sorted ascending")

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def vector(self, l: int) -> np.ndarray:
        return self.eigenvectors[:, l]

    def orthonormality_defect(self) -> float:
        gram = self.eigenvectors.conj().T @ self.eigenvectors
        return float(np.max(np.abs(gram - np.eye(self.count))))

    def require_simple(self, levels) -> None:
        flagged = {i for pair in self.degenerate_pairs for i in pair}
        bad = sorted(set(levels) & flagged)
        if bad:
            raise DegeneracyDetected(
                f"levels {bad} sit in a near-degenerate cluster; the "
                "per-level formulas require simple eigenvalues")


def _start_vector(n: int, seed: int, complex_: bool) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    if complex_:
        v = v + 1j * rng.standard_normal(n)
    return v


def _finalize(H: HermitianOperator, vals: np.ndarray, vecs: np.ndarray,
              opts: SolveOptions) -> SpectralData:
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]
    resid = np.array([np.linalg.norm(H.matrix @ vecs[:, i] - vals[i] * vecs[:, i])
                      for i in range(len(vals))])
    bad = resid > opts.tol * np.maximum(1.0, np.abs(vals))
    if np.any(bad):
        raise ConvergenceFailure(
            f"eigenpair residuals {resid[bad]} exceed tolerance {opts.tol}")
    edge_margin = 10.0 * opts.tol
    count_negative = int(np.sum(vals < -edge_margin))
    gap_floor = opts.effective_degeneracy_gap(vals[0])
    pairs = [(i, i + 1) for i in range(len(vals) - 1)
             if vals[i + 1] - vals[i] < gap_floor]
    return SpectralData(eigenvalues=vals, eigenvectors=vecs, residuals=resid,
                        count_negative=count_negative, degenerate_pairs=pairs)


def lowest_eigenpairs(H: HermitianOperator, count: int,
                      opts: SolveOptions = SolveOptions()) -> SpectralData:
    """The `count` smallest eigenpairs of a sparse Hermitian operator."""
    if count < 1:
        raise ValueError("count must be >= 1")
    n = H.dimension
    if count >= n:
        raise ValueError(f"count={count} must be well below dimension {n}")
    v0 = _start_vector(n, opts.seed, H.is_complex)
    ncv = min(n - 1, max(4 * count + 20, 40))
    try:
        vals, vecs = spla.eigsh(H.matrix, k=count, which="SA", v0=v0,
                                ncv=ncv, maxiter=opts.max_iter, tol=0)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(f"ARPACK did not converge: {exc}") from exc
    return _finalize(H, vals, vecs, opts)


def dense_spectrum(H: HermitianOperator,
                   opts: SolveOptions = SolveOptions()) -> SpectralData:
    """Full eigendecomposition (oracle path, small operators only)."""
    mat = H.dense()
    vals, vecs = np.linalg.eigh(mat)
    return _finalize(H, vals, vecs, opts)


def _project_out(phi: np.ndarray, v: np.ndarray) -> np.ndarray:
    return v - phi * np.vdot(phi, v)


def _minres(opmat, rhs: np.ndarray, opts: SolveOptions,
            refinements: int = 3) -> np.ndarray:
    """MINRES with true-residual iterative refinement.

    The recurrence's internal residual estimate drifts below the true
    residual on large ill-scaled systems; re-solving against the actual
    residual recovers the lost digits cheaply.
    """
    nrm = np.linalg.norm(rhs)
    if nrm == 0.0:
        return np.zeros_like(rhs)
    def apply_op(v):
        return opmat @ v

    x, info = spla.minres(opmat, rhs, rtol=min(opts.tol, 1e-13),
                          maxiter=opts.max_iter)
    if info != 0:
        raise ConvergenceFailure(f"MINRES stopped with info={info}")
    for _ in range(refinements):
        r = rhs - apply_op(x)
        if np.linalg.norm(r) <= 0.5 * opts.tol * max(1.0, nrm):
            break
        dx, info = spla.minres(opmat, r, rtol=1e-8, maxiter=opts.max_iter)
        if info != 0 or np.linalg.norm(r - apply_op(dx)) >= np.linalg.norm(r):
            break
        x = x + dx
    return x


def deflated_solve(H: HermitianOperator, lambda_l: float, phi: np.ndarray,
                   rhs: np.ndarray, opts: SolveOptions = SolveOptions()) -> np.ndarray:
    """Solve P (H - lambda_l) P psi = rhs on the complement of phi.

    P projects onto the orthogonal complement of the (simple) eigenvector
    phi; the iterate is re-projected at every operator application so
    rounding cannot leak back into the deflated direction.
    """
    phi = phi / np.linalg.norm(phi)
    nrm = np.linalg.norm(rhs)
    if nrm > 0 and abs(np.vdot(phi, rhs)) > ORTHO_TOL * nrm:
        raise NotOrthogonal("rhs has a component along the deflated eigenvector")
    if nrm == 0.0:
        return np.zeros_like(rhs, dtype=H.matrix.dtype)
    n = H.dimension
    shifted = H.matrix - lambda_l * sp.identity(n, dtype=H.matrix.dtype, format="csr")

    if not H.is_complex:
        phir = np.ascontiguousarray(phi.real) if np.iscomplexobj(phi) else phi

        def matvec(v):
            return _project_out(phir, shifted @ _project_out(phir, v))

        op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
        parts = []
        for comp in (np.real(rhs), np.imag(rhs)) if np.iscomplexobj(rhs) else (rhs,):
            if np.linalg.norm(comp) == 0.0:
                parts.append(np.zeros(n))
            else:
                parts.append(_minres(op, _project_out(phir, comp), opts))
        psi = parts[0] if len(parts) == 1 else parts[0] + 1j * parts[1]
    else:
        def matvec(v):
            return _project_out(phi, shifted @ _project_out(phi, v))

        op = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
        psi, info = spla.lgmres(op, _project_out(phi, rhs),
                                rtol=min(opts.tol, 1e-13), atol=0.0,
                                maxiter=opts.max_iter)
        if info != 0:
            raise ConvergenceFailure(f"LGMRES stopped with info={info}")

    psi = _project_out(phi, psi)
    resid = np.linalg.norm(_project_out(phi, shifted @ psi) - rhs)
    if resid > opts.tol * max(1.0, nrm):
        raise ConvergenceFailure(
            f"deflated solve residual {resid:.3e} above tolerance")
    return psi


def resolvent_apply(H: HermitianOperator, xi: complex, rhs: np.ndarray,
                    opts: SolveOptions = SolveOptions(),
                    spectrum: np.ndarray = None,
                    margin: float = None) -> np.ndarray:
    """Solve (H - xi) psi = rhs for a (possibly complex) shift xi."""
    if spectrum is not None:
        floor = margin if margin is not None else 10.0 * opts.tol
        dist = float(np.min(np.abs(np.asarray(spectrum) - xi)))
        if dist < floor:
            raise ContourTooClose(
                f"shift {xi} is within {dist:.3e} of the spectrum estimate")
    n = H.dimension
    nrm = np.linalg.norm(rhs)
    if nrm == 0.0:
        return np.zeros(n, dtype=complex)

    if not H.is_complex and xi.imag == 0.0:
        shifted = H.matrix - xi.real * sp.identity(n, format="csr")
        parts = [(_minres(shifted, comp, opts) if np.linalg.norm(comp) else np.zeros(n))
                 for comp in (np.real(rhs), np.imag(rhs))]
        psi = parts[0] + 1j * parts[1]
    elif not H.is_complex:
        # (H - xi) on C^n  <->  symmetric real system on R^(2n):
        #   [A  bI] [u]   [p ]              A = H - Re(xi),  b = Im(xi)
        #   [bI -A] [v] = [-q]              rhs = p + iq, psi = u + iv
        a_mat = H.matrix - xi.real * sp.identity(n, format="csr")
        b_im = xi.imag

        def matvec(w):
            u, v = w[:n], w[n:]
            return np.concatenate([a_mat @ u + b_im * v, b_im * u - a_mat @ v])

        op = spla.LinearOperator((2 * n, 2 * n), matvec=matvec, dtype=float)
        w = _minres(op, np.concatenate([np.real(rhs), -np.imag(rhs)]), opts)
        psi = w[:n] + 1j * w[n:]
    else:
        shifted = H.matrix - xi * sp.identity(n, dtype=complex, format="csr")
        psi, info = spla.lgmres(shifted, rhs.astype(complex),
                                rtol=min(opts.tol, 1e-13), atol=0.0,
                                maxiter=opts.max_iter)
        if info != 0 and H.dimension <= 4096:
            psi = np.linalg.solve(shifted.toarray(), rhs.astype(complex))
        elif info != 0:
            raise ConvergenceFailure(f"LGMRES stopped with info={info}")

    resid = np.linalg.norm(H.matrix @ psi - xi * psi - rhs)
    if resid > max(10.0 * opts.tol, opts.tol * nrm):
        raise ConvergenceFailure(
            f"resolvent residual {resid:.3e} above tolerance at shift {xi}")
    return psi


@dataclass(frozen=True)
class ContourSpec:
    """Closed quadrature contour in the complex plane.

    Circle: ``center`` and ``radius``.  Rectangle: ``corners`` as
    (re_lo, re_hi, im_lo, im_hi).  ``nodes`` is the total quadrature count.
    """

    shape: str = "circle"
    center: complex = 0.0
    radius: float = 1.0
    corners: tuple = ()
    nodes: int = 64
    enclosed_hint: int = -1

    def __post_init__(self):
        if self.shape not in ("circle", "rectangle"):
            raise ValueError(f"unknown contour shape {self.shape!r}")
        if self.shape == "circle" and self.radius <= 0:
            raise ValueError("circle radius must be positive")
        if self.shape == "rectangle" and len(self.corners) != 4:
            raise ValueError("rectangle needs (re_lo, re_hi, im_lo, im_hi)")
        if self.nodes < 4:
            raise ValueError("need at least 4 quadrature nodes")

    def quadrature(self) -> tuple:
        """Nodes xi_j and complex weights dxi_j with sum(w) = 0 (closed path)."""
        if self.shape == "circle":
            theta = 2.0 * np.pi * (np.arange(self.nodes) + 0.5) / self.nodes
            xi = self.center + self.radius * np.exp(1j * theta)
            w = 1j * self.radius * np.exp(1j * theta) * (2.0 * np.pi / self.nodes)
            return xi, w
        re_lo, re_hi, im_lo, im_hi = self.corners
        sides = [(complex(re_lo, im_lo), complex(re_hi, im_lo)),
                 (complex(re_hi, im_lo), complex(re_hi, im_hi)),
                 (complex(re_hi, im_hi), complex(re_lo, im_hi)),
                 (complex(re_lo, im_hi), complex(re_lo, im_lo))]
        lengths = np.array([abs(b - a) for a, b in sides])
        counts = np.maximum(1, np.round(self.nodes * lengths / lengths.sum())).astype(int)
        xi, w = [], []
        for (a, b), m in zip(sides, counts):
            t = (np.arange(m) + 0.5) / m
            xi.append(a + (b - a) * t)
            w.append(np.full(m, (b - a) / m))
        return np.concatenate(xi), np.concatenate(w)

    def encloses(self, z: complex) -> bool:
        if self.shape == "circle":
            return abs(z - self.center) < self.radius
        re_lo, re_hi, im_lo, im_hi = self.corners
        return re_lo < z.real < re_hi and im_lo < z.imag < im_hi

    def distance_to_path(self, z: complex) -> float:
        if self.shape == "circle":
            return abs(abs(z - self.center) - self.radius)
        re_lo, re_hi, im_lo, im_hi = self.corners
        dx = max(re_lo - z.real, 0.0, z.real - re_hi)
        dy = max(im_lo - z.imag, 0.0, z.imag - im_hi)
        if dx > 0 or dy > 0:
            return float(np.hypot(dx, dy))
        # inside: distance to the nearest edge
        return float(min(z.real - re_lo, re_hi - z.real,
                         z.imag - im_lo, im_hi - z.imag))

    def validate_against(self, eigenvalues: np.ndarray,
                         opts: SolveOptions = SolveOptions()) -> int:
        """Check spectrum clearance and return the enclosed count."""
        margin = 10.0 * opts.tol
        enclosed = 0
        for lam in np.atleast_1d(eigenvalues):
            if self.distance_to_path(complex(lam)) < margin:
                raise ContourTooClose(
                    f"eigenvalue {lam} within {margin:.1e} of the contour")
            enclosed += bool(self.encloses(complex(lam)))
        if self.enclosed_hint >= 0 and enclosed != self.enclosed_hint:
            raise ContourTooClose(
                f"contour encloses {enclosed} eigenvalues of the estimate, "
                f"expected {self.enclosed_hint}")
        return enclosed


def default_contour(spectral: SpectralData, n0: int, nodes: int = 64) -> ContourSpec:
    """Circle around the n0 lowest eigenvalues, reaching the gap midpoint.

    The right edge sits halfway between lambda_n0 and the next level (the
    grid's continuum edge stands in when n0 exhausts the computed set).
    """
    lam = spectral.eigenvalues
    if n0 < 1 or n0 > len(lam):
        raise ValueError(f"n0={n0} outside the computed spectrum range")
    lo, hi = lam[0], lam[n0 - 1]
    nxt = lam[n0] if len(lam) > n0 else 0.0
    center = 0.5 * (lo + hi)
    radius = 0.5 * (hi - lo) + 0.5 * (nxt - hi)
    return ContourSpec(shape="circle", center=complex(center), radius=radius,
                       nodes=nodes, enclosed_hint=n0)
