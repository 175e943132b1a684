"""
Randomized low-rank approximation of operators: Gaussian sampling,
randomized SVD (matrix, idealized, discretized, covariance-sketched) and
Nystrom approximation (idealized and discretized).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSpec, kernel_dim
from .operator import (DEFAULT_TOL, DiscreteOperator, ReferenceSVD, adaptive_sketch, apply_kernel,
                       choose_m, discretize, reference_svd)
from .quasimat import DiagOp, QuasiMatrix, orth_coeffs
from .rng import GaussianStream, NestedGaussianMatrix, gaussian_matrix

NYSTROM_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class LowRankApprox:
    """Factored approximation left @ right^T with provenance."""

    left: QuasiMatrix | np.ndarray
    right: QuasiMatrix | np.ndarray
    method: str
    k: int
    p: int
    seed: int | None = None
    info: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return _coeffs(self.left).shape[1]

    def to_matrix(self) -> np.ndarray:
        return _coeffs(self.left) @ _coeffs(self.right).T


def _coeffs(F):
    return F.coeffs if isinstance(F, QuasiMatrix) else np.asarray(F)


def _check_kp(k, p):
    if k < 1 or p < 0:
        raise ValueError(f"need k >= 1 and p >= 0, got k={k}, p={p}")


class GaussianSampler:
    """Draws standard Gaussian matrices and Karhunen-Loeve samples from one stream."""

    def __init__(self, seed: int, *names):
        self.seed = seed
        self._stream = GaussianStream(seed, "sampler", *names)

    def isotropic(self, rows: int, cols: int) -> np.ndarray:
        return self._stream.matrix(rows, cols)

    def kl(self, ref: ReferenceSVD, r: int, power: float = 1.0):
        """r samples sum_i w_ij sigma_i^power u_i; returns (Y, w)."""
        omega = self._stream.matrix(ref.rank, r)
        return _kl_columns(ref, omega, power), omega


def _kl_columns(ref, omega, power):
    weights = ref.sigma.values ** power
    return QuasiMatrix(ref.row_basis, ref.U.coeffs @ (weights[:, None] * omega))


def sample_kl(ref: ReferenceSVD, r: int, seed: int = 0, power: float = 1.0, omega=None):
    """Karhunen-Loeve samples y_j = sum_i w_ij sigma_i^power u_i, truncated at the reference rank.

    power=1 samples N(0, A A^*); power=0.5 samples N(0, T) for an SPSD T.
    Returns (Y, w) with the (rank x r) coefficient matrix w.
    """
    if ref.rank == 0:
        raise ValueError("empty reference SVD")
    if r < 1:
        raise ValueError("r must be >= 1")
    if omega is None:
        omega = gaussian_matrix(ref.rank, r, seed, "kl")
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (ref.rank, r):
        raise ValueError(f"omega must have shape {(ref.rank, r)}")
    return _kl_columns(ref, omega, power), omega


def kl_weights(ref: ReferenceSVD, test_matrix) -> np.ndarray:
    """Weights V^T Omega' expressing A Omega' as a Karhunen-Loeve sample.

    `test_matrix` is Gaussian over the full co-range basis, so the weights
    are again i.i.d. N(0, 1); sharing it couples idealized and discrete runs.
    """
    test_matrix = np.asarray(test_matrix, dtype=float)
    if test_matrix.shape[0] != ref.col_basis.size:
        raise ValueError(f"test matrix needs {ref.col_basis.size} rows")
    return ref.V.coeffs.T @ test_matrix


def randomized_svd(A, k: int, p: int, seed: int = 0, omega=None) -> LowRankApprox:
    """Q (A^T Q)^T with Q an orthonormal basis of range(A Omega), Omega Gaussian n x (k+p)."""
    A = np.asarray(A, dtype=float)
    _check_kp(k, p)
    if k + p > min(A.shape):
        raise ValueError(f"k + p = {k + p} exceeds min(A.shape) = {min(A.shape)}")
    if omega is None:
        omega = gaussian_matrix(A.shape[1], k + p, seed, "omega")
    Q = orth_coeffs(A @ omega)
    return LowRankApprox(Q, A.T @ Q, "rsvd", k, p, seed, {"omega": omega})


def idealized_rsvd(ref: ReferenceSVD, k: int, p: int, seed: int = 0, omega=None) -> LowRankApprox:
    """Randomized SVD with sketch columns drawn from N(0, A A^*) through the reference SVD."""
    _check_kp(k, p)
    if ref.numerical_rank() < k + p + 2:
        warnings.warn(f"reference rank {ref.numerical_rank()} < k + p + 2 = {k + p + 2}", stacklevel=2)
    Y, omega = sample_kl(ref, k + p, seed, omega=omega)
    Q = orth_coeffs(Y.coeffs)
    # A^* Q = V diag(sigma) U^T Q
    right = ref.V.coeffs @ (ref.sigma.values[:, None] * (ref.U.coeffs.T @ Q))
    return LowRankApprox(QuasiMatrix(ref.row_basis, Q), QuasiMatrix(ref.col_basis, right),
                         "idealized", k, p, seed, {"omega": omega})


def _basis(kernel, size):
    return BasisSpec("legendre-1d" if kernel_dim(kernel) == 1 else "tensor-legendre-2d", size)


def discrete_rsvd(kernel, k: int, p: int, *, n: int | None = None, m: int | None = None,
                  eps: float = DEFAULT_TOL, seed: int = 0, op: DiscreteOperator | None = None) -> LowRankApprox:
    """Randomized SVD of the compression A_{m,n}, lifted to Z_m Q Q^T A_{m,n} W_n^*.

    Modes: `op` given (use its matrix), `n` given (fixed co-range size; m
    chosen by the coefficient criterion unless given), or neither (adaptive
    choice of m and n, reusing the final sketch).  The Gaussian test matrix
    is the nested stream (seed, "omega") in every mode.
    """
    _check_kp(k, p)
    r = k + p
    info = {}
    if op is not None:
        omega = NestedGaussianMatrix(r, seed, "omega").rows(op.col_basis.size)
        S = op.A @ omega
    elif n is None:
        res = adaptive_sketch(kernel, k, p, eps, seed)
        omega, S = res.omega, res.sketch.coeffs
        info.update(level=res.level, history=res.history)
        m, n = res.m, res.n
    else:
        omega = NestedGaussianMatrix(r, seed, "omega").rows(n)
        if m is None and kernel_dim(kernel) == 1:
            m, S = choose_m(kernel, n, omega, eps)
        else:
            if m is None:
                m = reference_svd(kernel).row_basis.size
            op = discretize(kernel, m, n)
            S = op.A @ omega
    Q = orth_coeffs(S)
    if op is not None:
        rows, cols = op.row_basis, op.col_basis
        right = op.A.T @ Q
    else:
        rows, cols = BasisSpec.legendre(m), BasisSpec.legendre(n)
        right = apply_kernel(kernel, QuasiMatrix(rows, Q), cols, adjoint=True).coeffs
    info.update(m=rows.size, n=cols.size, omega=omega)
    return LowRankApprox(QuasiMatrix(rows, Q), QuasiMatrix(cols, right), "discrete", k, p, seed, info)


def _check_spsd(ref: ReferenceSVD):
    if ref.row_basis != ref.col_basis:
        raise ValueError("covariance reference is not square")
    align = np.sum(ref.U.coeffs * ref.V.coeffs, axis=0)
    if np.any(align < 0.5):
        raise ValueError("covariance reference is not symmetric positive semidefinite")


def synthetic_covariance(eigenvalues, basis: BasisSpec) -> ReferenceSVD:
    """Covariance W_n diag(eigenvalues) W_n^* with eigenvectors the first n basis functions."""
    lam = np.asarray(eigenvalues, dtype=float)
    if basis.size < lam.size:
        raise ValueError("basis too small for the eigenvalue list")
    if np.any(lam < 0):
        raise ValueError("eigenvalues must be nonnegative")
    order = np.argsort(-lam, kind="stable")
    idx = np.arange(lam.size)
    matrix = np.zeros((basis.size, basis.size))
    matrix[idx, idx] = lam
    E = np.zeros((basis.size, lam.size))
    E[order, idx] = 1.0
    return ReferenceSVD(QuasiMatrix(basis, E), DiagOp(lam[order]), QuasiMatrix(basis, E),
                        (basis.size, basis.size), 0.0, matrix, None)


def _align_rows(coeffs, src: BasisSpec, dst: BasisSpec):
    # write functions over src in basis dst, dropping components outside dst
    if src == dst:
        return coeffs
    out = np.zeros((dst.size, coeffs.shape[1]))
    if src.per_dim <= dst.per_dim:
        out[src.positions_in(dst)] = coeffs
    else:
        out[:] = coeffs[dst.positions_in(src)]
    return out


def covariance_rsvd(kernel, cov: ReferenceSVD, k: int, p: int, seed: int = 0,
                    op: DiscreteOperator | None = None) -> LowRankApprox:
    """Randomized SVD sketched with Gaussian-process inputs psi_j ~ N(0, K).

    Q is an orthonormal basis of range(A Psi); returns Q (A^* Q)^T.
    """
    _check_kp(k, p)
    _check_spsd(cov)
    if op is None:
        ref = reference_svd(kernel)
        op = DiscreteOperator(ref.matrix, ref.row_basis, ref.col_basis, kernel)
    Psi, omega = sample_kl(cov, k + p, seed, power=0.5)
    AP = op.A @ _align_rows(Psi.coeffs, cov.row_basis, op.col_basis)
    Q = orth_coeffs(AP)
    return LowRankApprox(QuasiMatrix(op.row_basis, Q), QuasiMatrix(op.col_basis, op.A.T @ Q),
                         "covariance", k, p, seed, {"omega": omega})


def _nystrom_factor(B, core, rtol):
    # B core^+ B^T = F F^T with the core's small eigenvalues cut at rtol * max
    core = 0.5 * (core + core.T)
    lam, V = np.linalg.eigh(core)
    keep = lam > rtol * lam.max() if lam.size and lam.max() > 0 else np.zeros(lam.size, bool)
    return (B @ V[:, keep]) / np.sqrt(lam[keep])


def nystrom_discrete(kernel, n: int, k: int, p: int, seed: int = 0, op: DiscreteOperator | None = None,
                     rtol: float = NYSTROM_RTOL) -> LowRankApprox:
    """T W_n Omega (Omega^T W_n^* T W_n Omega)^+ (T W_n Omega)^T for an SPSD kernel.

    Columns of T W_n Omega are expanded to full resolution (the reference row
    basis) unless `op` (rows at full resolution, n columns) is supplied.
    If k + p > n the approximation has rank at most n.
    """
    _check_kp(k, p)
    if op is None:
        op = discretize(kernel, reference_svd(kernel).row_basis.size, n)
    n = op.col_basis.size
    T_nn = op.A[op.col_basis.positions_in(op.row_basis)]
    scale = np.linalg.norm(T_nn)
    if np.linalg.norm(T_nn - T_nn.T) > 1e-10 * scale:
        raise ValueError("kernel compression is not symmetric")
    omega = NestedGaussianMatrix(k + p, seed, "omega").rows(n)
    B = op.A @ omega
    F = _nystrom_factor(B, omega.T @ T_nn @ omega, rtol)
    Fq = QuasiMatrix(op.row_basis, F)
    return LowRankApprox(Fq, Fq, "nystrom-discrete", k, p, seed, {"omega": omega, "n": n})


def nystrom_idealized(ref: ReferenceSVD, k: int, p: int, seed: int = 0, omega=None) -> LowRankApprox:
    """T^{1/2} Q (T^{1/2} Q)^T with Q an orthonormal basis of k+p samples from N(0, T)."""
    _check_kp(k, p)
    _check_spsd(ref)
    Y, omega = sample_kl(ref, k + p, seed, power=0.5, omega=omega)
    Q = orth_coeffs(Y.coeffs)
    root = np.sqrt(ref.sigma.values)
    F = ref.U.coeffs @ (root[:, None] * (ref.U.coeffs.T @ Q))
    Fq = QuasiMatrix(ref.row_basis, F)
    return LowRankApprox(Fq, Fq, "nystrom-idealized", k, p, seed, {"omega": omega, "Q": Q})


def _lift(F, basis):
    if isinstance(F, QuasiMatrix):
        return _align_rows(F.coeffs, F.basis, basis) if F.basis != basis else F.coeffs
    return np.asarray(F)


def _padded_reference(ref, row_basis, col_basis):
    if row_basis == ref.row_basis and col_basis == ref.col_basis:
        return ref.matrix
    out = np.zeros((row_basis.size, col_basis.size))
    out[np.ix_(ref.row_basis.positions_in(row_basis), ref.col_basis.positions_in(col_basis))] = ref.matrix
    return out


def _larger(a: BasisSpec, b):
    if not isinstance(b, QuasiMatrix):
        return a
    return b.basis if b.basis.per_dim > a.per_dim else a


def hs_error(ref: ReferenceSVD, approx: LowRankApprox, relative: bool = False) -> float:
    """||A - left right^T||_HS measured against the reference coefficients."""
    rows = _larger(ref.row_basis, approx.left)
    cols = _larger(ref.col_basis, approx.right)
    A = _padded_reference(ref, rows, cols)
    err = float(np.linalg.norm(A - _lift(approx.left, rows) @ _lift(approx.right, cols).T))
    return err / np.linalg.norm(ref.matrix) if relative else err


def optimal_hs_error(ref: ReferenceSVD, k: int, relative: bool = False) -> float:
    err = np.sqrt(ref.sigma.tail_sq(k))
    return float(err / ref.hs_norm) if relative else float(err)


def trace_error(ref: ReferenceSVD, approx: LowRankApprox, relative: bool = False,
                check_psd: bool = False) -> float:
    """Trace-norm error of an approximation to an SPSD operator.

    Uses Tr(T) - Tr(T_hat), valid when the error is PSD; with check_psd the
    error's eigenvalues are inspected and their absolute sum is used if it is
    not.
    """
    basis = ref.row_basis
    L, R = _lift(approx.left, basis), _lift(approx.right, basis)
    err = ref.trace - float(np.sum(L * R))
    if check_psd:
        D = ref.matrix - L @ R.T
        lam = np.linalg.eigvalsh(0.5 * (D + D.T))
        if lam.min() < -1e-10 * ref.sigma.values[0]:
            err = float(np.sum(np.abs(lam)))
    return err / ref.trace if relative else err


def optimal_trace_error(ref: ReferenceSVD, k: int, relative: bool = False) -> float:
    err = ref.sigma.tail(k)
    return err / ref.trace if relative else err
