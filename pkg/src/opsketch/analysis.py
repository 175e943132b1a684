"""
Closed-form error bounds, Gaussian Wasserstein distances and empirical
checks (Pythagoras split, structural bound, projector perturbation,
coupled idealized/discrete sketches).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .operator import ReferenceSVD, discretize, reference_svd
from .quasimat import DiagOp, orth_coeffs, pseudoinverse
from .rng import derive_seed, gaussian_matrix


def _values(sigma) -> np.ndarray:
    return sigma.values if isinstance(sigma, DiagOp) else np.asarray(sigma, dtype=float).ravel()


def _next_sigma(s, k):
    return float(s[k]) if k < s.size else 0.0


def _check_expectation(k, p):
    if k < 1:
        raise ValueError(f"need k >= 1, got {k}")
    if p < 2:
        raise ValueError(f"need p >= 2, got {p}")


def _check_tail(k, p, t, u):
    if k < 2 or p < 4 or t < 1 or u < 1:
        raise ValueError(f"tail bounds need k >= 2, p >= 4, t, u >= 1; got k={k}, p={p}, t={t}, u={u}")


def expectation_bound_hs(sigma, k: int, p: int) -> float:
    """(1 + k/(p-1)) sum_{i>k} sigma_i^2, bounding the mean squared HS error."""
    _check_expectation(k, p)
    s = _values(sigma)
    return (1.0 + k / (p - 1)) * float(np.sum(s[k:] ** 2))


def tail_bound_eta(sigma, k: int, p: int, t: float, u: float) -> float:
    """Deviation term eta of the HS tail bound."""
    _check_tail(k, p, t, u)
    s = _values(sigma)
    return (t * math.sqrt(3.0 * k / (p + 1)) * math.sqrt(float(np.sum(s[k:] ** 2)))
            + u * t * math.e * math.sqrt(k + p) / (p + 1) * _next_sigma(s, k))


def failure_probability(p: int, t: float, u: float) -> float:
    """Probability that the tail bounds may fail: 2 t^-p + exp(-u^2 / 2)."""
    return 2.0 * t ** (-p) + math.exp(-0.5 * u * u)


def tail_bound_hs(sigma, k, p, t, u) -> float:
    """(sum_{i>k} sigma_i^2)^{1/2} + eta."""
    s = _values(sigma)
    return math.sqrt(float(np.sum(s[k:] ** 2))) + tail_bound_eta(s, k, p, t, u)


def expectation_bound_nystrom(sigma, k: int, p: int) -> float:
    """(1 + k/(p-1)) sum_{i>k} sigma_i, bounding the mean trace-norm error."""
    _check_expectation(k, p)
    s = _values(sigma)
    return (1.0 + k / (p - 1)) * float(np.sum(s[k:]))


def tail_bound_eta_hat(sigma, k: int, p: int, t: float, u: float) -> float:
    """eta for the square root of an SPSD operator: sigma_i replaced by sigma_i^{1/2}."""
    s = np.sqrt(np.maximum(_values(sigma), 0.0))
    return tail_bound_eta(s, k, p, t, u)


def tail_bound_nystrom(sigma, k, p, t, u) -> float:
    """((sum_{i>k} sigma_i)^{1/2} + eta_hat)^2, the HS tail bound for T^{1/2} squared."""
    s = _values(sigma)
    return (math.sqrt(float(np.sum(s[k:]))) + tail_bound_eta_hat(s, k, p, t, u)) ** 2


@dataclass(frozen=True)
class BoundReport:
    """Measured error next to its expectation and tail bounds.

    For kind "hs" the expectation bound refers to the squared HS error and
    the tail bound to the HS error; for kind "trace" both refer to the
    trace-norm error.  Bounds whose preconditions fail are reported as inf.
    """

    kind: str
    measured: float
    bound_expectation: float
    bound_tail: float
    k: int
    p: int
    t: float
    u: float
    disc_error: float
    tail_sums: dict = field(default_factory=dict)


def discrete_bounds(sigma, disc_error: float, k: int, p: int, t: float = 2.0, u: float = 2.0,
                    measured: float = float("nan"), kind: str = "hs") -> BoundReport:
    """Bounds for approximations built from a discretization.

    kind="hs": disc_error = ||A - A_{m,n}||_HS;
    kind="trace": disc_error = Tr(T) - Tr(W_n^* T W_n).
    """
    if kind not in ("hs", "trace"):
        raise ValueError(f"kind must be 'hs' or 'trace', got {kind!r}")
    if disc_error < 0:
        raise ValueError("disc_error must be nonnegative")
    s = _values(sigma)
    try:
        if kind == "hs":
            expect = disc_error**2 + expectation_bound_hs(s, k, p)
        else:
            expect = disc_error + expectation_bound_nystrom(s, k, p)
    except ValueError:
        expect = math.inf
    try:
        if kind == "hs":
            tail = disc_error + tail_bound_hs(s, k, p, t, u)
        else:
            tail = disc_error + tail_bound_nystrom(s, k, p, t, u)
    except ValueError:
        tail = math.inf
    sums = {"sq_tail": float(np.sum(s[k:] ** 2)), "tail": float(np.sum(s[k:])), "next": _next_sigma(s, k)}
    return BoundReport(kind, measured, expect, tail, k, p, t, u, disc_error, sums)


def _psd_sqrt(C):
    lam, V = np.linalg.eigh(0.5 * (C + C.T))
    # eigenvalues at rounding level are zeros; their square roots would not be
    floor = C.shape[0] * np.finfo(float).eps * max(lam.max(initial=0.0), 0.0)
    lam = np.where(lam > floor, lam, 0.0)
    return (V * np.sqrt(lam)) @ V.T


def _check_spsd(C, name):
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"{name} must be square")
    scale = max(np.abs(C).max(initial=0.0), 1e-300)
    if np.abs(C - C.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (C + C.T)).min(initial=0.0) < -1e-10 * scale:
        raise ValueError(f"{name} is not positive semidefinite")
    return C


def w2_gelbrich(C1, C2) -> float:
    """Wasserstein-2 distance between N(0, C1) and N(0, C2).

    W2^2 = Tr C1 + Tr C2 - 2 Tr((C2^{1/2} C1 C2^{1/2})^{1/2}), evaluated as the
    orthogonal Procrustes distance min_U ||C1^{1/2} - C2^{1/2} U||_F so that
    nearby covariances do not suffer from cancellation.
    """
    C1, C2 = _check_spsd(C1, "C1"), _check_spsd(C2, "C2")
    if C1.shape != C2.shape:
        raise ValueError("covariances differ in size")
    R1, R2 = _psd_sqrt(C1), _psd_sqrt(C2)
    P, _, Qt = np.linalg.svd(R2.T @ R1)
    return float(np.linalg.norm(R1 - R2 @ (P @ Qt)))


def w2_upper(op, n: int) -> float:
    """||A - A W_n W_n^*||_HS, bounding W2 between N(0, A A^*) and N(0, A W_n W_n^* A^*).

    `op` is a ReferenceSVD or a plain matrix whose columns are indexed by a
    nested co-range basis.
    """
    if isinstance(op, ReferenceSVD):
        return op.block_complement_norm(op.row_basis.size, n)
    A = np.asarray(op, dtype=float)
    return float(np.linalg.norm(A[:, n:]))


def pythagoras_terms(A_ref, m: int, n: int, Q):
    """The three terms of ||A - Z_m Q Q^T A_{m,n} W_n^*||^2 = ||A - A_{m,n}||^2 + ||(I - QQ^T) A_{m,n}||^2.

    A_ref holds the operator's coefficients in nested 1d bases (the
    compression is its leading m x n block); Q has m orthonormal rows.
    Returns (total, discretization, projection), all squared.
    """
    A_ref = np.asarray(A_ref, dtype=float)
    Amn = A_ref[:m, :n]
    approx = np.zeros_like(A_ref)
    approx[:m, :n] = Q @ (Q.T @ Amn)
    disc = A_ref.copy()
    disc[:m, :n] = 0.0
    total = float(np.sum((A_ref - approx) ** 2))
    return total, float(np.sum(disc**2)), float(np.sum((Amn - Q @ (Q.T @ Amn)) ** 2))


def structural_bound(ref: ReferenceSVD, omega: np.ndarray, k: int):
    """Right-hand side of the almost-sure bound for the idealized randomized SVD.

    With samples Y = U diag(sigma) omega, returns
    sum_{i>k} sigma_i^2 + ||(I - U_k U_k^*) Y omega_k^+||_HS^2, where omega_k
    holds the first k rows of omega.
    """
    s = ref.sigma.values
    omega = np.asarray(omega, dtype=float)
    if omega.shape[0] != s.size:
        raise ValueError("omega must have one row per reference singular value")
    # (I - U_k U_k^*) Y = U_perp diag(sigma_perp) omega_perp
    resid = (s[k:, None] * omega[k:]) @ pseudoinverse(omega[:k])
    return float(np.sum(s[k:] ** 2) + np.sum(resid**2))


def projector_perturbation(Y, Yhat):
    """(||P_Y - P_Yhat||_op, min(||Y^+||, ||Yhat^+||) ||Y - Yhat||_op) for equal-rank Y, Yhat."""
    Y, Yhat = np.asarray(Y, dtype=float), np.asarray(Yhat, dtype=float)
    if Y.shape != Yhat.shape:
        raise ValueError("Y and Yhat must have the same shape")
    Q1, Q2 = orth_coeffs(Y), orth_coeffs(Yhat)
    if Q1.shape[1] != Y.shape[1] or Q2.shape[1] != Y.shape[1]:
        raise ValueError("Y and Yhat must have full column rank")
    lhs = np.linalg.norm(Q1 @ Q1.T - Q2 @ Q2.T, 2)
    inv = min(1.0 / np.linalg.svd(Y, compute_uv=False)[-1], 1.0 / np.linalg.svd(Yhat, compute_uv=False)[-1])
    return float(lhs), float(inv * np.linalg.norm(Y - Yhat, 2))


@dataclass(frozen=True)
class CouplingRow:
    n: int
    m: int
    median: float
    mean: float
    disc_error: float
    ratio: float


def coupled_distances(ref: ReferenceSVD, op, r: int, omega_full: np.ndarray) -> float:
    """||A_hat - A_hat_{m,n}||_HS for one shared Gaussian matrix.

    omega_full (reference column size x r) drives both sketches: the
    idealized one sees A omega_full, the discrete one A_{m,n} omega_full[:n].
    """
    A = ref.matrix
    Q = orth_coeffs(A @ omega_full)
    ideal = Q @ (Q.T @ A)
    pos_r = op.row_basis.positions_in(ref.row_basis)
    pos_c = op.col_basis.positions_in(ref.col_basis)
    Qd = orth_coeffs(op.A @ omega_full[pos_c])
    disc = np.zeros_like(A)
    disc[np.ix_(pos_r, pos_c)] = Qd @ (Qd.T @ op.A)
    return float(np.linalg.norm(ideal - disc))


def coupling_distance(kernel, k: int, p: int, resolutions, seed: int = 0, trials: int = 50,
                      ref: ReferenceSVD | None = None) -> list:
    """Mean and median of ||A_hat - A_hat_{m,n}||_HS under the synchronous coupling.

    `resolutions` lists (m, n) pairs (or plain n, meaning m = reference
    size).  Trial j shares the Gaussian stream (seed, "coupling", j) between
    the idealized and discrete sketches.
    """
    ref = ref or reference_svd(kernel)
    r = k + p
    if ref.numerical_rank() < r + 2:
        raise ValueError(f"reference rank {ref.numerical_rank()} < k + p + 2 = {r + 2}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    N = ref.col_basis.size
    omegas = [gaussian_matrix(N, r, derive_seed(seed, "coupling", j)) for j in range(trials)]
    rows = []
    for res in resolutions:
        m, n = res if isinstance(res, tuple) else (ref.row_basis.size, res)
        op = discretize(kernel, m, n)
        d = np.array([coupled_distances(ref, op, r, om) for om in omegas])
        disc = ref.block_complement_norm(m, n)
        med = float(np.median(d))
        rows.append(CouplingRow(n, m, med, float(d.mean()), disc, med / disc if disc > 0 else math.inf))
    return rows
