"""Marginalized posterior of (s_new, Q, Sigma) given training and test data.

The mean coefficients B and the observation covariance C are integrated
out analytically. What remains, up to an additive constant, is

    -(jk/2) log|A_aug| - (jk/2) log|H_aug' A_aug^-1 H_aug|
    - ((j(n+1-m) + k + 1)/2) log|Sigma| - ((n+1-m)k/2) log|S|

where S = sum_{t,u} (Sigma^-1)_{tu} M*_{tu} is the Sigma-weighted partial
trace of D_aug' M_aug D_aug. Only differences of the returned values are
meaningful.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lapack, qr, solve_triangular

from . import kernels
from .core_model import (
    TrainingSet,
    basis_matrix,
    basis_vector,
    chol_logdet,
    cholesky_jitter,
    cross_kernel_vector,
    kernel_matrix,
)
from .errors import (
    DimensionMismatch,
    DuplicateDesignPoint,
    InsufficientDegreesOfFreedom,
    RankDeficientBasis,
    SingularCovariance,
    SingularKernel,
    UnsupportedErrorModel,
)

NEG_INF = -math.inf
DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class ErrorModel:
    """Gaussian measurement error added to the jk-covariance.

    ``kind`` is one of ``"none"``, ``"scalar"`` (phi * I) or ``"kron"``
    (kron(sigma1, sigma2) with sigma1 j x j and sigma2 k x k).
    """

    kind: str = "none"
    phi: float = 0.0
    sigma1: np.ndarray | None = None
    sigma2: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "scalar", "kron"):
            raise ValueError(f"unknown error model kind {self.kind!r}")
        if self.kind == "scalar" and not self.phi >= 0:
            raise ValueError("scalar error variance must be >= 0")
        if self.kind == "kron":
            for name in ("sigma1", "sigma2"):
                mat = np.asarray(getattr(self, name), dtype=float)
                _, info = lapack.dpotrf(mat, lower=1)
                if mat.ndim != 2 or info != 0:
                    raise SingularCovariance(f"{name} must be positive definite")
                object.__setattr__(self, name, mat)

    @classmethod
    def scalar(cls, phi):
        return cls("scalar", phi=float(phi))

    @classmethod
    def kron(cls, sigma1, sigma2):
        return cls("kron", sigma1=sigma1, sigma2=sigma2)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "scalar":
            out["phi"] = self.phi
        elif self.kind == "kron":
            out["sigma1"] = self.sigma1.tolist()
            out["sigma2"] = self.sigma2.tolist()
        return out

    @classmethod
    def from_dict(cls, spec):
        if spec is None:
            return cls()
        kind = spec.get("kind", "none")
        if kind == "scalar":
            return cls.scalar(spec["phi"])
        if kind == "kron":
            return cls.kron(spec["sigma1"], spec["sigma2"])
        return cls()


@dataclass(frozen=True)
class CovarianceContext:
    """Covariance pieces a measurement-error model can act on.

    ``row_cov`` is None on the marginalized path, where only the
    component covariance Sigma survives.
    """

    sigma: np.ndarray
    row_cov: np.ndarray | None = None
    noise: np.ndarray | None = None

    def omega(self) -> np.ndarray:
        if self.row_cov is None:
            raise ValueError("row covariance was marginalized out")
        out = np.kron(self.row_cov, self.sigma)
        if self.noise is not None:
            out = out + self.noise
        return out


def apply_measurement_error(ctx: CovarianceContext, err: ErrorModel) -> CovarianceContext:
    if err.kind == "none" or (err.kind == "scalar" and err.phi == 0.0):
        return ctx
    k = ctx.sigma.shape[0]
    if ctx.row_cov is None:
        if err.kind == "kron":
            raise UnsupportedErrorModel(
                "Kronecker measurement error has no closed form once C is marginalized"
            )
        return replace(ctx, sigma=ctx.sigma + err.phi * np.eye(k))
    j = ctx.row_cov.shape[0]
    if err.kind == "scalar":
        extra = err.phi * np.eye(j * k)
    else:
        if err.sigma1.shape != (j, j) or err.sigma2.shape != (k, k):
            raise DimensionMismatch("error-model factors do not match (j, k)")
        extra = np.kron(err.sigma1, err.sigma2)
    noise = extra if ctx.noise is None else ctx.noise + extra
    return replace(ctx, noise=noise)


def state_dim(d: int, k: int) -> int:
    return 2 * d + k * (k + 1) // 2


@dataclass(frozen=True)
class PosteriorState:
    s_new: np.ndarray
    b: np.ndarray
    sigma: np.ndarray

    def pack(self) -> np.ndarray:
        k = self.sigma.shape[0]
        rows, cols = np.tril_indices(k)
        return np.concatenate(
            [np.ravel(self.s_new), np.ravel(self.b), np.asarray(self.sigma)[rows, cols]]
        ).astype(float)

    @classmethod
    def unpack(cls, phi, d: int, k: int) -> "PosteriorState":
        phi = np.asarray(phi, dtype=float)
        if phi.size != state_dim(d, k):
            raise DimensionMismatch(f"state length {phi.size} != {state_dim(d, k)}")
        sigma = np.zeros((k, k))
        rows, cols = np.tril_indices(k)
        sigma[rows, cols] = phi[2 * d:]
        sigma[cols, rows] = phi[2 * d:]
        return cls(phi[:d].copy(), phi[d:2 * d].copy(), sigma)


def coordinate_names(d: int, k: int) -> list[str]:
    names = [f"s{i + 1}" for i in range(d)] + [f"b{i + 1}" for i in range(d)]
    rows, cols = np.tril_indices(k)
    names += [f"sigma_{r + 1}{c + 1}" for r, c in zip(rows, cols)]
    return names


class InverseProblem:
    """Training data, test vector, prior box on s_new and error model.

    Instances are immutable after construction; the cached squared
    displacements between design points are read-only.
    """

    def __init__(self, training: TrainingSet, test, bounds, measurement_error=None):
        self.training = training
        test = np.asarray(test, dtype=float).ravel()
        j, k = training.j, training.k
        if test.size != j * k:
            raise DimensionMismatch(f"test vector has length {test.size}, expected {j * k}")
        if not np.all(np.isfinite(test)):
            raise ValueError("test vector contains non-finite values")
        bounds = np.asarray(bounds, dtype=float)
        if bounds.shape != (training.d, 2):
            raise DimensionMismatch(f"bounds must have shape ({training.d}, 2)")
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError("bounds must satisfy lower < upper")
        n, m = training.n, training.m
        dof = n + 1 - m
        if dof < 1 or dof * k < j:
            raise InsufficientDegreesOfFreedom(
                f"(n+1-m) = {dof} and (n+1-m)k = {dof * k} must be >= 1 and >= j = {j}"
            )
        err = measurement_error if measurement_error is not None else ErrorModel()
        if err.kind == "kron":
            raise UnsupportedErrorModel(
                "Kronecker measurement error is only supported by matrix_normal_logpdf"
            )
        self.test = test
        self.test.setflags(write=False)
        self.bounds = bounds
        self.bounds.setflags(write=False)
        self.measurement_error = err

        design = training.design
        diff = design[:, None, :] - design[None, :, :]
        self._sqdisp = np.ascontiguousarray(diff * diff)
        self._sqdisp.setflags(write=False)
        jk = j * k
        # [D_aug | H_aug] with the last basis row filled per state
        rhs = np.zeros((n + 1, jk + m))
        rhs[:n, :jk] = training.data
        rhs[n, :jk] = test
        rhs[:n, jk:] = basis_matrix(design)
        rhs[n, jk] = 1.0
        rhs.setflags(write=False)
        self._rhs = rhs
        self._width = bounds[:, 1] - bounds[:, 0]

    @property
    def dims(self):
        t = self.training
        return t.n, t.j, t.k, t.d

    @property
    def state_dim(self) -> int:
        return state_dim(self.training.d, self.training.k)

    @property
    def data_scale(self) -> float:
        """Mean per-column variance of the training data (>0)."""
        var = float(np.mean(np.var(self.training.data, axis=0, ddof=1)))
        return var if var > 0 else 1.0

    def _duplicate(self, s) -> bool:
        scaled = (self.training.design - s) / self._width
        return bool(np.min(np.max(np.abs(scaled), axis=1)) < DUPLICATE_TOL)

    def in_bounds(self, s) -> bool:
        return bool(np.all(s >= self.bounds[:, 0]) and np.all(s <= self.bounds[:, 1]))

    def log_posterior(self, phi) -> float:
        terms = self.log_posterior_terms(phi)
        return NEG_INF if terms is None else sum(terms)

    def log_posterior_terms(self, phi):
        """The four log-determinant contributions, or None off-support."""
        n, j, k, d = self.dims
        phi = np.asarray(phi, dtype=float)
        s = np.ascontiguousarray(phi[:d])
        b = np.ascontiguousarray(phi[d:2 * d])
        if not self.in_bounds(s) or np.any(b <= 0) or not np.all(np.isfinite(phi)):
            return None
        sigma = np.empty((k, k))
        rows, cols = np.tril_indices(k)
        sigma[rows, cols] = phi[2 * d:]
        sigma[cols, rows] = phi[2 * d:]
        if self.measurement_error.kind == "scalar":
            sigma = sigma + self.measurement_error.phi * np.eye(k)
        l_sigma, info = lapack.dpotrf(sigma, lower=1, clean=1)
        if info != 0:
            return None
        if self._duplicate(s):
            return None
        return self._terms(s, b, l_sigma)

    def _terms(self, s, b, l_sigma):
        n, j, k, d = self.dims
        m = d + 1
        jk = j * k
        amat = np.empty((n + 1, n + 1))
        kernels.gram_from_sqdisp(self._sqdisp, b, amat)
        cross = kernels.sq_exp_cross(self.training.design, s, b)
        amat[n, :n] = cross
        amat[:n, n] = cross
        amat[n, n] = 1.0
        try:
            l_a, _ = cholesky_jitter(amat)
        except SingularKernel:
            return None
        rhs = self._rhs.copy()
        rhs[n, jk + 1:] = s
        sol, info = lapack.dtrtrs(l_a, rhs, lower=1)
        w, u = sol[:, :jk], sol[:, jk:]
        qu, ru = np.linalg.qr(u)
        rdiag = np.abs(np.diag(ru))
        if np.min(rdiag) <= 1e-12 * np.max(rdiag):
            return None
        resid = w - qu @ (qu.T @ w)
        # S = sum_tu (Sigma^-1)_tu M*_tu, via resid reshaped (n+1, j, k) times L_sigma^-T
        y = lapack.dtrtrs(l_sigma, resid.reshape(-1, k).T, lower=1)[0]
        y = y.reshape(k, n + 1, j).transpose(2, 1, 0).reshape(j, -1)
        smat = y @ y.T
        l_s, info = lapack.dpotrf(smat, lower=1, clean=1)
        if info != 0 or np.min(np.diag(l_s)) <= 0:
            return None
        dof = n + 1 - m
        return (
            -0.5 * jk * chol_logdet(l_a),
            -0.5 * jk * 2.0 * float(np.sum(np.log(rdiag))),
            -0.5 * (j * dof + k + 1) * chol_logdet(l_sigma),
            -0.5 * dof * k * chol_logdet(l_s),
        )

    def conditional_target(self, b, sigma):
        """Log posterior of s_new alone with Q and Sigma held fixed."""
        tail = np.concatenate(
            [np.asarray(b, dtype=float), np.asarray(sigma, dtype=float)[np.tril_indices(self.training.k)]]
        )

        def target(s):
            return self.log_posterior(np.concatenate([np.asarray(s, dtype=float), tail]))

        return target


def log_posterior(problem: InverseProblem, state) -> float:
    phi = state.pack() if isinstance(state, PosteriorState) else state
    return problem.log_posterior(phi)


def build_augmented(problem: InverseProblem, s_new, q):
    s_new = np.asarray(s_new, dtype=float).ravel()
    if not problem.in_bounds(s_new):
        raise ValueError("s_new lies outside the prior bounds")
    if problem._duplicate(s_new):
        raise DuplicateDesignPoint("s_new coincides with a design vector")
    points = np.vstack([problem.training.design, s_new])
    h_aug = basis_matrix(points)
    a_aug = kernel_matrix(points, q)
    d_aug = np.vstack([problem.training.data, problem.test])
    return h_aug, a_aug, d_aug


def gls_projection(H, A) -> np.ndarray:
    """M = A^-1 - A^-1 H (H' A^-1 H)^-1 H' A^-1.

    Evaluated in the equivalent form Z (Z' A Z)^-1 Z' with Z an orthonormal
    basis of the null space of H', so M H vanishes to rounding in Z' H.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    A = np.asarray(A, dtype=float)
    p, m = H.shape
    q, r = qr(H, mode="full")
    rdiag = np.abs(np.diag(r[:m]))
    if m > p or np.min(rdiag) <= 1e-12 * max(np.max(rdiag), 1.0):
        raise RankDeficientBasis("H does not have full column rank")
    z = q[:, m:]
    if z.shape[1] == 0:
        return np.zeros((p, p))
    l_z, _ = cholesky_jitter(z.T @ A @ z)
    w = solve_triangular(l_z, z.T, lower=True, check_finite=False)
    out = w.T @ w
    return 0.5 * (out + out.T)


def chat_gls_aug(d_aug, m_aug, sigma, dims) -> np.ndarray:
    """(n+1-m) k C_hat_GLS,aug: the Sigma^-1-weighted partial trace of D' M D."""
    j, k = dims
    d_aug = np.asarray(d_aug, dtype=float)
    g = np.ascontiguousarray(d_aug.T @ np.asarray(m_aug, dtype=float) @ d_aug)
    g = 0.5 * (g + g.T)
    sigma = np.asarray(sigma, dtype=float)
    l_sigma, info = lapack.dpotrf(sigma, lower=1, clean=1)
    if info != 0:
        raise SingularCovariance("Sigma is not positive definite")
    sigma_inv = lapack.dpotri(l_sigma, lower=1)[0]
    sigma_inv = np.ascontiguousarray(np.tril(sigma_inv) + np.tril(sigma_inv, -1).T)
    return kernels.component_contract(g, sigma_inv, j, k)


__all__ = [
    "ErrorModel",
    "CovarianceContext",
    "apply_measurement_error",
    "PosteriorState",
    "InverseProblem",
    "state_dim",
    "coordinate_names",
    "log_posterior",
    "build_augmented",
    "gls_projection",
    "chat_gls_aug",
    "basis_vector",
    "cross_kernel_vector",
]
