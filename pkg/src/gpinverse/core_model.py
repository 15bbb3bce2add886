"""Gaussian-process building blocks.

Conventions used throughout the package:

* a j x k observation matrix is flattened observation-major, so element
  ``l = m1 * k + m2`` (0-based) holds component ``m2`` of observation ``m1``.
  This is plain C-order reshaping.
* the amplitude covariance of a flattened observation is
  ``kron(C, Sigma)`` with C (j x j) covarying observations and Sigma
  (k x k) covarying components.
* the mean basis is ``h(s) = (1, s_1, ..., s_d)`` so ``m = d + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from . import kernels
from .errors import (
    DimensionMismatch,
    DuplicateDesignPoint,
    InsufficientDegreesOfFreedom,
    SingularCovariance,
    SingularKernel,
)

LOG_2PI = float(np.log(2.0 * np.pi))

JITTER_START = 1e-10
JITTER_STOP = 1e-6


@dataclass(frozen=True)
class TrainingSet:
    """Design vectors and the n x jk matrix of flattened observations."""

    design: np.ndarray
    data: np.ndarray
    j: int
    k: int

    def __post_init__(self):
        design = np.ascontiguousarray(np.atleast_2d(np.asarray(self.design, dtype=float)))
        data = np.ascontiguousarray(np.atleast_2d(np.asarray(self.data, dtype=float)))
        if design.shape[0] != data.shape[0]:
            raise DimensionMismatch(
                f"design has {design.shape[0]} rows but data has {data.shape[0]}"
            )
        if data.shape[1] != self.j * self.k:
            raise DimensionMismatch(
                f"data has {data.shape[1]} columns, expected j*k = {self.j * self.k}"
            )
        if not (np.all(np.isfinite(design)) and np.all(np.isfinite(data))):
            raise ValueError("training set contains non-finite values")
        n, d = design.shape
        if n < d + 2:
            raise InsufficientDegreesOfFreedom(
                f"need n >= m + 1 = {d + 2} design points, got {n}"
            )
        if len(np.unique(design, axis=0)) != n:
            raise DuplicateDesignPoint("design vectors must be pairwise distinct")
        design.setflags(write=False)
        data.setflags(write=False)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def d(self) -> int:
        return self.design.shape[1]

    @property
    def m(self) -> int:
        return self.d + 1


def vectorize(obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 2:
        raise DimensionMismatch("observation matrix must be 2-D")
    return obs.reshape(-1).copy()


def devectorize(vec, j: int, k: int) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if vec.size != j * k:
        raise DimensionMismatch(f"vector of length {vec.size} is not {j}x{k}")
    return vec.reshape(j, k).copy()


def basis_vector(s) -> np.ndarray:
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return np.concatenate(([1.0], s))


def basis_matrix(points) -> np.ndarray:
    """Rows are ``basis_vector`` of each point (the H matrix)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.hstack([np.ones((points.shape[0], 1)), points])


def _as_b(q) -> np.ndarray:
    b = np.ascontiguousarray(np.atleast_1d(np.asarray(q, dtype=float)))
    if np.any(b <= 0):
        raise ValueError("smoothness parameters must be positive")
    return b


def kernel_value(s, t, q) -> float:
    """Square-exponential correlation exp(-(s-t)' Q (s-t)) with Q = diag(q)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    b = _as_b(q)
    if not (s.shape == t.shape == b.shape):
        raise DimensionMismatch("points and smoothness must share dimension d")
    diff = s - t
    return float(np.exp(-np.dot(b, diff * diff)))


def kernel_matrix(points, q) -> np.ndarray:
    points = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    b = _as_b(q)
    if points.shape[1] != b.size:
        raise DimensionMismatch("points and smoothness must share dimension d")
    return kernels.sq_exp_gram(points, b)


def cross_kernel_vector(design, s, q) -> np.ndarray:
    design = np.ascontiguousarray(np.atleast_2d(np.asarray(design, dtype=float)))
    s = np.ascontiguousarray(np.atleast_1d(np.asarray(s, dtype=float)))
    b = _as_b(q)
    if not (design.shape[1] == s.size == b.size):
        raise DimensionMismatch("points and smoothness must share dimension d")
    return kernels.sq_exp_cross(design, s, b)


def cholesky_jitter(mat: np.ndarray, *, exact_first=False, exc=SingularKernel):
    """Lower Cholesky factor of ``mat + lam * I``. Returns ``(L, lam)``.

    ``lam`` runs from 1e-10 to 1e-6 times the mean diagonal in decades,
    stopping at the first success. Always adding the smallest jitter keeps
    log-determinants continuous in the kernel parameters. With
    ``exact_first`` the unmodified matrix is tried before the ladder.
    """
    if exact_first:
        fac, info = lapack.dpotrf(mat, lower=1, clean=1, overwrite_a=0)
        if info == 0:
            return fac, 0.0
    scale = float(np.mean(np.diag(mat)))
    lam = JITTER_START * scale
    eye = np.eye(mat.shape[0])
    while lam <= JITTER_STOP * scale * (1 + 1e-9):
        fac, info = lapack.dpotrf(mat + lam * eye, lower=1, clean=1)
        if info == 0:
            return fac, lam
        lam *= 10.0
    raise exc(f"Cholesky failed for a {mat.shape[0]}x{mat.shape[0]} matrix after jitter")


def chol_logdet(fac: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(fac))))


def _chol_pd(mat, what):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatch(f"{what} must be square")
    fac, info = lapack.dpotrf(mat, lower=1, clean=1)
    if info != 0:
        raise SingularCovariance(f"{what} is not positive definite")
    return fac


def kron_covariance(row_cov, comp_cov) -> np.ndarray:
    """Full jk x jk covariance for observation-major flattening.

    Block (m1, m1') of size k x k is ``row_cov[m1, m1'] * comp_cov``.
    """
    _chol_pd(row_cov, "row covariance")
    _chol_pd(comp_cov, "component covariance")
    return np.kron(np.asarray(row_cov, dtype=float), np.asarray(comp_cov, dtype=float))


def matrix_normal_logpdf(X, M, A, Omega) -> float:
    """Log density of the p x q matrix-normal MN(M, A, Omega).

    Evaluated through the Cholesky factors of A and Omega; the pq x pq
    Kronecker covariance is never formed.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    p, q = X.shape
    if M.shape != (p, q) or np.shape(A) != (p, p) or np.shape(Omega) != (q, q):
        raise DimensionMismatch("incompatible matrix-normal dimensions")
    la = _chol_pd(A, "row covariance")
    lo = _chol_pd(Omega, "column covariance")
    z = solve_triangular(la, X - M, lower=True, check_finite=False)
    z = solve_triangular(lo, z.T, lower=True, check_finite=False)
    quad = float(np.sum(z * z))
    return -0.5 * (p * q * LOG_2PI + q * chol_logdet(la) + p * chol_logdet(lo) + quad)
