"""
Quasi-matrices stored as coefficient matrices over an orthonormal basis.

Because the basis is orthonormal, inner products of functions are dot
products of coefficient columns, and Hilbert-Schmidt norms of operators
between spanned subspaces are Frobenius norms of coefficient matrices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .basis import BasisSpec

ORTH_RTOL = 1e-13
PINV_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class QuasiMatrix:
    basis: BasisSpec
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, copy=True)
        if c.ndim == 1:
            c = c[:, None]
        if c.shape[0] != self.basis.size:
            raise ValueError(f"coefficient rows {c.shape[0]} != basis size {self.basis.size}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def ncols(self) -> int:
        return self.coeffs.shape[1]

    def column_norms(self) -> np.ndarray:
        return np.linalg.norm(self.coeffs, axis=0)

    def lifted(self, basis: BasisSpec) -> "QuasiMatrix":
        """Same functions written over a larger nested basis."""
        if basis == self.basis:
            return self
        out = np.zeros((basis.size, self.ncols))
        out[self.basis.positions_in(basis)] = self.coeffs
        return QuasiMatrix(basis, out)

    def __getitem__(self, cols) -> "QuasiMatrix":
        return QuasiMatrix(self.basis, self.coeffs[:, cols])


@dataclass(frozen=True)
class DiagOp:
    """Nonincreasing nonnegative diagonal, e.g. singular values."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if np.any(v < 0) or np.any(np.diff(v) > 0):
            raise ValueError("diagonal must be nonnegative and nonincreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def tail_sq(self, k: int) -> float:
        return float(np.sum(self.values[k:] ** 2))

    def tail(self, k: int) -> float:
        return float(np.sum(self.values[k:]))


def _check_same_basis(F, G):
    if F.basis != G.basis:
        raise ValueError(f"basis mismatch: {F.basis} vs {G.basis}")


def inner(F: QuasiMatrix, G: QuasiMatrix) -> np.ndarray:
    """Matrix of inner products <f_i, g_j>."""
    _check_same_basis(F, G)
    return F.coeffs.T @ G.coeffs


def orth_coeffs(Y: np.ndarray, rtol: float = ORTH_RTOL) -> np.ndarray:
    """Orthonormal basis for range(Y) by column-pivoted Householder QR.

    Pivoted columns whose residual norm falls below rtol times the largest
    column norm are treated as dependent and dropped.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.size == 0:
        return np.zeros((Y.shape[0], 0))
    Q, R, _ = la.qr(Y, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[0] == 0.0:
        return np.zeros((Y.shape[0], 0))
    rank = int(np.sum(d > rtol * d[0]))
    return Q[:, :rank]


def orthonormalize(Y: QuasiMatrix, rtol: float = ORTH_RTOL) -> QuasiMatrix:
    return QuasiMatrix(Y.basis, orth_coeffs(Y.coeffs, rtol))


def project(Q: QuasiMatrix, F: QuasiMatrix) -> QuasiMatrix:
    """Orthogonal projection Q Q^* F onto range(Q); Q must be orthonormal."""
    _check_same_basis(Q, F)
    return QuasiMatrix(F.basis, Q.coeffs @ (Q.coeffs.T @ F.coeffs))


def dense_svd(M):
    """Thin SVD M = U diag(s) V^T with a fixed sign convention.

    Each left singular vector has its first non-negligible entry positive;
    the matching right vector is flipped along with it.
    """
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    V = Vt.T
    if U.size:
        big = np.abs(U) > 1e-12 * np.max(np.abs(U), axis=0, keepdims=True)
        first = np.argmax(big, axis=0)
        signs = np.sign(U[first, np.arange(U.shape[1])])
        signs[signs == 0] = 1.0
        U = U * signs
        V = V * signs
    return U, DiagOp(s), V


def pseudoinverse(M, rel_cutoff: float = PINV_RTOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse, zeroing singular values below rel_cutoff * sigma_max."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return M.T.copy()
    U, s, V = dense_svd(M)
    s = s.values
    keep = s > rel_cutoff * s[0] if s.size and s[0] > 0 else np.zeros(s.size, bool)
    return (V[:, keep] / s[keep]) @ U[:, keep].T


def projector(Y: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto range(Y) in coefficient space."""
    Q = orth_coeffs(Y)
    return Q @ Q.T
