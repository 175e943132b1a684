"""
Orthonormal Legendre bases on [-1, 1] and [-1, 1]^2, Gauss-Legendre
quadrature and L2 expansion of functions and kernels.

A 1d basis of size n consists of the normalized Legendre polynomials
p_0, ..., p_{n-1} with p_k = sqrt((2k + 1) / 2) P_k.  A 2d basis of size
s**2 holds the products p_i(x_1) p_j(x_2), i, j < s, in row-major order
(index i * s + j).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

LEGENDRE_1D = "legendre-1d"
TENSOR_LEGENDRE_2D = "tensor-legendre-2d"

# extra quadrature nodes per dimension beyond the basis size
QUAD_PAD = 16


def _recurrence_beta(k):
    # x p_k = beta_{k+1} p_{k+1} + beta_k p_{k-1} for the orthonormal family
    return k / math.sqrt(4.0 * k * k - 1.0)


def legendre_vandermonde(size: int, x) -> np.ndarray:
    """Values p_k(x_j) of the first `size` normalized Legendre polynomials.

    Returns an array of shape (size, len(x)).
    """
    x = np.asarray(x, dtype=float).ravel()
    out = np.empty((size, x.size))
    if size == 0:
        return out
    out[0] = 1.0 / math.sqrt(2.0)
    if size > 1:
        out[1] = math.sqrt(1.5) * x
    for k in range(1, size - 1):
        b1 = _recurrence_beta(k + 1)
        b0 = _recurrence_beta(k)
        out[k + 1] = (x * out[k] - b0 * out[k - 1]) / b1
    return out


def legendre_orthonormal_eval(degree: int, x: float) -> float:
    """Evaluate sqrt((2 degree + 1) / 2) P_degree(x) by the three-term recurrence."""
    if degree < 0:
        raise ValueError(f"degree must be nonnegative, got {degree}")
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"x = {x} lies outside [-1, 1]")
    return float(legendre_vandermonde(degree + 1, [x])[degree, 0])


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def __len__(self):
        return self.nodes.size


def _legendre_pair(n, x):
    # P_n(x), P_{n-1}(x) for the classical (unnormalized) polynomials
    p0 = np.ones_like(x)
    p1 = x.copy()
    if n == 0:
        return p0, np.zeros_like(x)
    for k in range(1, n):
        p0, p1 = p1, ((2 * k + 1) * x * p1 - k * p0) / (k + 1)
    return p1, p0


@lru_cache(maxsize=64)
def _gauss_legendre_arrays(n):
    # Newton on the nonnegative roots, mirrored for exact symmetry
    half = (n + 1) // 2
    i = np.arange(1, half + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        pn, pm = _legendre_pair(n, x)
        dp = n * (x * pn - pm) / (x * x - 1.0)
        dx = pn / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    pn, pm = _legendre_pair(n, x)
    dp = n * (x * pn - pm) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    if n % 2:
        x[-1] = 0.0
        nodes = np.concatenate([-x, x[-2::-1]])
        weights = np.concatenate([w, w[-2::-1]])
    else:
        nodes = np.concatenate([-x, x[::-1]])
        weights = np.concatenate([w, w[::-1]])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(n_nodes: int) -> QuadratureRule:
    """Gauss-Legendre rule on [-1, 1] with `n_nodes` points, nodes ascending."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    nodes, weights = _gauss_legendre_arrays(int(n_nodes))
    return QuadratureRule(nodes, weights)


@dataclass(frozen=True)
class BasisSpec:
    """Orthonormal Legendre system: `legendre-1d` or `tensor-legendre-2d`."""

    kind: str
    size: int

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("basis size must be >= 1")
        if self.kind == TENSOR_LEGENDRE_2D:
            s = math.isqrt(self.size)
            if s * s != self.size:
                raise ValueError(f"2d basis size must be a perfect square, got {self.size}")
        elif self.kind != LEGENDRE_1D:
            raise ValueError(f"unknown basis kind {self.kind!r}")

    @classmethod
    def legendre(cls, size: int) -> "BasisSpec":
        return cls(LEGENDRE_1D, size)

    @classmethod
    def tensor(cls, per_dim: int) -> "BasisSpec":
        return cls(TENSOR_LEGENDRE_2D, per_dim * per_dim)

    @property
    def dim(self) -> int:
        return 1 if self.kind == LEGENDRE_1D else 2

    @property
    def per_dim(self) -> int:
        """Number of 1d polynomials per coordinate."""
        return self.size if self.dim == 1 else math.isqrt(self.size)

    def degrees(self) -> np.ndarray:
        """Polynomial degree(s) of each basis function, shape (size,) or (size, 2)."""
        if self.dim == 1:
            return np.arange(self.size)
        s = self.per_dim
        i, j = np.divmod(np.arange(self.size), s)
        return np.stack([i, j], axis=1)

    def resized(self, per_dim: int) -> "BasisSpec":
        return BasisSpec.legendre(per_dim) if self.dim == 1 else BasisSpec.tensor(per_dim)

    def positions_in(self, other: "BasisSpec") -> np.ndarray:
        """Indices of this basis' functions inside the larger basis `other`."""
        if other.kind != self.kind:
            raise ValueError("basis kinds differ")
        if other.per_dim < self.per_dim:
            raise ValueError(f"basis of size {self.size} is not contained in one of size {other.size}")
        if self.dim == 1:
            return np.arange(self.size)
        d = self.degrees()
        return d[:, 0] * other.per_dim + d[:, 1]

    def quadrature_points(self, n_nodes: int | None = None):
        """Tensor Gauss-Legendre points and weights; default size + 16 nodes per dimension."""
        q = gauss_legendre(n_nodes or self.per_dim + QUAD_PAD)
        if self.dim == 1:
            return q.nodes, q.weights
        x1, x2 = np.meshgrid(q.nodes, q.nodes, indexing="ij")
        pts = np.stack([x1.ravel(), x2.ravel()], axis=1)
        return pts, np.outer(q.weights, q.weights).ravel()

    def evaluate(self, x) -> np.ndarray:
        """Basis functions at points x: shape (size, npts); 2d points have shape (npts, 2)."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1:
            return legendre_vandermonde(self.size, x)
        x = x.reshape(-1, 2)
        v1 = legendre_vandermonde(self.per_dim, x[:, 0])
        v2 = legendre_vandermonde(self.per_dim, x[:, 1])
        return (v1[:, None, :] * v2[None, :, :]).reshape(self.size, -1)

    def gram(self, n_nodes: int | None = None) -> np.ndarray:
        pts, w = self.quadrature_points(n_nodes)
        v = self.evaluate(pts)
        return (v * w) @ v.T


def _as_values(f, pts, npts):
    vals = np.asarray(f(pts), dtype=float)
    if vals.size not in (1, npts):
        raise ValueError("function returned an array of unexpected shape")
    vals = np.broadcast_to(vals.reshape(-1), (npts,))
    if not np.all(np.isfinite(vals)):
        raise ValueError("function is not finite at a quadrature node")
    return vals


def expand_function(f: Callable, basis: BasisSpec, n_nodes: int | None = None) -> np.ndarray:
    """L2 coefficients <p_i, f> of f in `basis`.

    `f` is vectorized over points (1d: array of x, 2d: array of shape (npts, 2)).
    """
    pts, w = basis.quadrature_points(n_nodes)
    vals = _as_values(f, pts, len(w))
    return basis.evaluate(pts) @ (w * vals)


def reconstruct(coeffs, basis: BasisSpec, x) -> np.ndarray:
    """Evaluate sum_i coeffs[i] p_i at points x (coeffs may have trailing columns)."""
    return basis.evaluate(x).T @ np.asarray(coeffs)


def kernel_dim(kernel) -> int:
    return getattr(kernel, "dim", 1)


def _kernel_values(kernel, x, y):
    if kernel_dim(kernel) == 1:
        shape = np.broadcast_shapes(x.shape, y.shape)
    else:
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
    vals = np.broadcast_to(np.asarray(kernel(x, y), dtype=float), shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("kernel is not finite at a quadrature node")
    return vals


def expand_kernel(kernel, basis_rows: BasisSpec, basis_cols: BasisSpec,
                  n_nodes: int | None = None) -> np.ndarray:
    """Matrix [<p_i, K p_j>] of the integral operator with kernel K(x, y).

    The integral is evaluated with a tensor Gauss rule; by default
    max(per_dim) + 16 nodes per coordinate.
    """
    if basis_rows.dim != basis_cols.dim:
        raise ValueError("row and column bases live on different domains")
    q = n_nodes or max(basis_rows.per_dim, basis_cols.per_dim) + QUAD_PAD
    rule = gauss_legendre(q)
    wv_r = legendre_vandermonde(basis_rows.per_dim, rule.nodes) * rule.weights
    wv_c = legendre_vandermonde(basis_cols.per_dim, rule.nodes) * rule.weights
    t = rule.nodes
    if basis_rows.dim == 1:
        K = _kernel_values(kernel, t[:, None], t[None, :])
        return wv_r @ K @ wv_c.T
    # 2d: contract one x_1 slab at a time to bound memory
    sr, sc = basis_rows.per_dim, basis_cols.per_dim
    out = np.zeros((sr, sr, sc, sc))
    y = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)  # (q, q, 2)
    for a, xa in enumerate(t):
        x = np.stack(np.broadcast_arrays(np.full(q, xa), t), axis=-1)  # (q, 2)
        K = _kernel_values(kernel, x[:, None, None, :], y[None, :, :, :])  # (q, q, q)
        slab = np.einsum("xyz,jy,lz->xjl", K, wv_c, wv_c, optimize=True)
        slab = np.tensordot(wv_r, slab, axes=(1, 0))  # (sr, sc, sc)
        out += wv_r[:, a][:, None, None, None] * slab[None]
    return out.reshape(sr * sr, sc * sc)
