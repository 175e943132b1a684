"""
Discretized integral operators, the high-resolution reference SVD, implicit
operator access and the adaptive choice of (m, n).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .basis import QUAD_PAD, BasisSpec, _kernel_values, expand_kernel, gauss_legendre, kernel_dim, legendre_vandermonde
from .quasimat import DiagOp, QuasiMatrix, dense_svd
from .rng import NestedGaussianMatrix

log = logging.getLogger(__name__)

MAX_COEFFS = 2**13
MAX_LEVEL = 13
DEFAULT_TOL = 1e-13
# singular triplets below this fraction of sigma_1 are folded into tail_bound
SVD_TRUNCATION = 1e-15


class ResolutionError(RuntimeError):
    """A doubling loop hit its cap; `diagnostics` holds the last state."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


def _basis_of(kernel, per_dim):
    return BasisSpec.legendre(per_dim) if kernel_dim(kernel) == 1 else BasisSpec.tensor(per_dim)


def _expand(kernel, rows: BasisSpec, cols: BasisSpec, n_nodes: int) -> np.ndarray:
    factors = getattr(kernel, "factors", None)
    if rows.dim == 2 and factors:
        f1, f2 = factors
        r1, c1 = BasisSpec.legendre(rows.per_dim), BasisSpec.legendre(cols.per_dim)
        return np.kron(expand_kernel(f1, r1, c1, n_nodes), expand_kernel(f2, r1, c1, n_nodes))
    return expand_kernel(kernel, rows, cols, n_nodes)


def _outside_block(matrix, row_basis, col_basis, rows_in, cols_in):
    mask = np.ones(matrix.shape, dtype=bool)
    mask[np.ix_(rows_in.positions_in(row_basis), cols_in.positions_in(col_basis))] = False
    return float(np.linalg.norm(matrix[mask]))


@dataclass(frozen=True)
class Resolution:
    basis: BasisSpec
    matrix: np.ndarray
    tail: float
    history: list


@lru_cache(maxsize=16)
def resolve_kernel(kernel, tol: float = DEFAULT_TOL) -> Resolution:
    """Double the per-dimension degree until the newly added coefficients carry
    relative Frobenius mass below `tol`.

    Stops early on a roundoff plateau (mass below 1e-10 that no longer halves).
    """
    s = 8
    prev = np.inf
    history = []
    while True:
        basis = _basis_of(kernel, s)
        if basis.size > MAX_COEFFS:
            raise ResolutionError(
                f"kernel {getattr(kernel, 'name', kernel)!r} not resolved within {MAX_COEFFS} coefficients",
                last_tail=prev, history=history)
        C = _expand(kernel, basis, basis, s + QUAD_PAD)
        total = np.linalg.norm(C)
        if total == 0.0:
            return Resolution(basis, C, 0.0, history)
        half = _basis_of(kernel, s // 2)
        tail = _outside_block(C, basis, basis, half, half) / total
        history.append((s, tail))
        log.debug("resolve %s: per_dim=%d tail=%.3e", getattr(kernel, "name", ""), s, tail)
        if tail <= tol or (tail < 1e-10 and tail > 0.5 * prev):
            return Resolution(basis, C, tail * total, history)
        prev = tail
        s *= 2


def quadrature_nodes(kernel, *bases) -> int:
    """Nodes per coordinate that resolve both the kernel and the bases."""
    R = resolve_kernel(kernel).basis.per_dim
    return max([R] + [b.per_dim for b in bases]) + QUAD_PAD


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Compression A = Z_m^* K W_n with its row basis Z_m and column basis W_n."""

    A: np.ndarray
    row_basis: BasisSpec
    col_basis: BasisSpec
    kernel: object = None

    @property
    def shape(self):
        return self.A.shape


def discretize(kernel, m: int, n: int) -> DiscreteOperator:
    """Compression of the kernel's operator onto the first m (rows) / n (columns) basis functions.

    For 2d kernels m and n are basis sizes and must be perfect squares.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    kind = "legendre-1d" if kernel_dim(kernel) == 1 else "tensor-legendre-2d"
    rows, cols = BasisSpec(kind, m), BasisSpec(kind, n)
    A = _expand(kernel, rows, cols, quadrature_nodes(kernel, rows, cols))
    return DiscreteOperator(A, rows, cols, kernel)


@dataclass(frozen=True, eq=False)
class ReferenceSVD:
    """Self-converged SVD standing in for the exact operator.

    `matrix` is the full coefficient matrix at the reference resolution;
    U, sigma, V keep the triplets above 1e-15 sigma_1.  `tail_bound`
    estimates the HS mass the reference misses.
    """

    U: QuasiMatrix
    sigma: DiagOp
    V: QuasiMatrix
    resolution: tuple
    tail_bound: float
    matrix: np.ndarray
    kernel: object = None

    @property
    def row_basis(self) -> BasisSpec:
        return self.U.basis

    @property
    def col_basis(self) -> BasisSpec:
        return self.V.basis

    @property
    def rank(self) -> int:
        return len(self.sigma)

    @property
    def hs_norm(self) -> float:
        return float(np.linalg.norm(self.sigma.values))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def numerical_rank(self, rtol: float = 1e-13) -> int:
        s = self.sigma.values
        return int(np.sum(s > rtol * s[0])) if s.size else 0

    def block_complement_norm(self, m: int, n: int) -> float:
        """||A - Z_m Z_m^* A W_n W_n^*||_HS from reference coefficients; sizes clamp at the reference."""
        rows, cols = self.row_basis, self.col_basis
        rb = rows if m >= rows.size else BasisSpec(rows.kind, m)
        cb = cols if n >= cols.size else BasisSpec(cols.kind, n)
        return _outside_block(self.matrix, rows, cols, rb, cb)


def _svd_from_matrix(C):
    U, s, V = dense_svd(C)
    s = s.values
    keep = s > SVD_TRUNCATION * s[0] if s.size and s[0] > 0 else np.zeros(s.size, bool)
    dropped = float(np.sqrt(np.sum(s[~keep] ** 2)))
    return U[:, keep], s[keep], V[:, keep], dropped


def _product_svd(kernel, s_per_dim, tol):
    # SVD of kron(C1, C2) from the factor SVDs, reordered by decreasing sigma
    f1, f2 = kernel.factors
    r1, r2 = resolve_kernel(f1, tol), resolve_kernel(f2, tol)
    s_per_dim = max(s_per_dim, r1.basis.per_dim, r2.basis.per_dim)
    b = BasisSpec.legendre(s_per_dim)
    C1 = expand_kernel(f1, b, b, s_per_dim + QUAD_PAD)
    C2 = expand_kernel(f2, b, b, s_per_dim + QUAD_PAD)
    U1, s1, V1, _ = _svd_from_matrix(C1)
    U2, s2, V2, _ = _svd_from_matrix(C2)
    sig = np.outer(s1, s2).ravel()
    order = np.argsort(-sig, kind="stable")
    keep = order[sig[order] > SVD_TRUNCATION * sig[order[0]]]
    i1, i2 = np.divmod(keep, s2.size)
    U = (U1[:, i1][:, None, :] * U2[:, i2][None, :, :]).reshape(s_per_dim**2, keep.size)
    V = (V1[:, i1][:, None, :] * V2[:, i2][None, :, :]).reshape(s_per_dim**2, keep.size)
    C = np.kron(C1, C2)
    total = np.linalg.norm(sig)
    dropped = np.sqrt(max(total**2 - np.sum(sig[keep] ** 2), 0.0))
    tail = max(r1.tail / np.linalg.norm(C1), r2.tail / np.linalg.norm(C2)) * total
    return BasisSpec.tensor(s_per_dim), C, U, sig[keep], V, float(np.hypot(tail, dropped))


@lru_cache(maxsize=16)
def reference_svd(kernel, tol: float = DEFAULT_TOL) -> ReferenceSVD:
    """Ground-truth SVD of the kernel's operator at self-converged resolution."""
    if kernel_dim(kernel) == 2 and getattr(kernel, "factors", None):
        basis, C, U, s, V, tail = _product_svd(kernel, 1, tol)
    else:
        res = resolve_kernel(kernel, tol)
        basis, C = res.basis, res.matrix
        U, s, V, dropped = _svd_from_matrix(C)
        tail = float(np.hypot(res.tail, dropped))
    return ReferenceSVD(QuasiMatrix(basis, U), DiagOp(s), QuasiMatrix(basis, V),
                        (basis.size, basis.size), tail, C, kernel)


def apply_operator(op: DiscreteOperator, F: QuasiMatrix, adjoint: bool = False) -> QuasiMatrix:
    """Coefficients of A F (or A^* G when adjoint) for the compressed operator."""
    src, dst = (op.row_basis, op.col_basis) if adjoint else (op.col_basis, op.row_basis)
    if F.basis != src:
        raise ValueError(f"basis mismatch: operator expects {src}, got {F.basis}")
    A = op.A.T if adjoint else op.A
    return QuasiMatrix(dst, A @ F.coeffs)


@lru_cache(maxsize=8)
def _kernel_grid(kernel, q):
    t = gauss_legendre(q).nodes
    return _kernel_values(kernel, t[:, None], t[None, :])


def apply_kernel(kernel, F: QuasiMatrix, row_basis: BasisSpec, adjoint: bool = False) -> QuasiMatrix:
    """Z^*(K F) (or Z^*(K^* F)) by quadrature of the kernel, without forming a compression.

    This is the implicit access model: only actions of the operator on
    functions are used.
    """
    if kernel_dim(kernel) != 1:
        raise NotImplementedError("implicit access is implemented for 1d kernels")
    q = quadrature_nodes(kernel, F.basis, row_basis)
    rule = gauss_legendre(q)
    K = _kernel_grid(kernel, q)
    if adjoint:
        K = K.T
    f = legendre_vandermonde(F.basis.size, rule.nodes).T @ F.coeffs
    g = K @ (rule.weights[:, None] * f)
    return QuasiMatrix(row_basis, (legendre_vandermonde(row_basis.size, rule.nodes) * rule.weights) @ g)


def _resolved(coeffs, eps):
    a = np.abs(coeffs)
    return bool(np.all(a.min(axis=0) <= eps * a.max(axis=0)))


def choose_m(kernel, n: int, omega: np.ndarray, eps: float = DEFAULT_TOL, m0: int | None = None):
    """Smallest m = m0 * 2^j for which every sketch column has a coefficient
    below eps times its largest one.

    Returns (m, sketch coefficients Z_m^* K W_n omega).
    """
    omega = np.asarray(omega, dtype=float)
    if omega.shape[0] != n:
        raise ValueError("omega must have n rows")
    F = QuasiMatrix(BasisSpec.legendre(n), omega)
    m = m0 or 2 * n
    while m <= MAX_COEFFS:
        S = apply_kernel(kernel, F, BasisSpec.legendre(m)).coeffs
        if _resolved(S, eps):
            return m, S
        m *= 2
    raise ResolutionError(f"sketch range not resolved with m <= {MAX_COEFFS}", n=n, last_m=m // 2)


@dataclass(frozen=True, eq=False)
class AdaptiveResult:
    m: int
    n: int
    sketch: QuasiMatrix
    omega: np.ndarray
    level: int
    history: list = field(default_factory=list)


def adaptive_sketch(kernel, k: int, p: int, eps: float = DEFAULT_TOL, seed: int = 0,
                    max_level: int = MAX_LEVEL) -> AdaptiveResult:
    """Inner-outer choice of (m, n) with n = 2^level and nested Gaussian test matrices.

    Stops once consecutive sketches differ by at most eps times the current
    sketch's HS norm; the final sketch is returned for reuse.
    """
    if k < 1 or p < 0 or not 0 < eps < 1:
        raise ValueError("need k >= 1, p >= 0 and 0 < eps < 1")
    omegas = NestedGaussianMatrix(k + p, seed, "omega")
    history = []
    prev = None
    for level in range(1, max_level + 1):
        n = 2**level
        omega = omegas.rows(n)
        m, S = choose_m(kernel, n, omega, eps)
        if prev is None:
            stat = np.inf
        else:
            P = np.zeros_like(S)
            P[: prev.shape[0]] = prev
            norm = np.linalg.norm(S)
            stat = np.linalg.norm(S - P) / norm if norm > 0 else 0.0
        history.append((n, m, stat))
        if stat <= eps:
            return AdaptiveResult(m, n, QuasiMatrix(BasisSpec.legendre(m), S), omega, level, history)
        prev = S
    raise ResolutionError(f"adaptive scheme did not stop by level {max_level}", history=history)


def discretization_error(kernel, op: DiscreteOperator, ref: ReferenceSVD) -> float:
    """||K - Z_m A_{m,n} W_n^*||_HS by Pythagoras over nested bases.

    ||A_ref||^2 - ||A_{m,n}||^2 is evaluated as the reference mass outside the
    m x n block, which avoids cancellation.
    """
    if op.row_basis.kind != ref.row_basis.kind:
        raise ValueError("bases are not nested")
    if op.row_basis.per_dim > ref.row_basis.per_dim or op.col_basis.per_dim > ref.col_basis.per_dim:
        raise ValueError("operator resolution exceeds the reference resolution")
    return _outside_block(ref.matrix, ref.row_basis, ref.col_basis, op.row_basis, op.col_basis)
