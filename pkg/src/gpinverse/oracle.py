"""Slow, naive reference implementations used to check the main modules.

Nothing in here shares numerical code with ``core_model`` or
``posterior``: densities are built from explicit inverses, dense
Kronecker products and ``slogdet``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from .errors import AllMinusInfinity, QuadratureNonConvergence, SingularCovariance


def mvn_logpdf_via_vec(X, M, A, Omega) -> float:
    """Multivariate-normal density of the row-major flattening, cov = A (x) Omega."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    p, q = X.shape
    if p * q > 64:
        raise ValueError("dense oracle limited to pq <= 64")
    cov = np.kron(np.asarray(A, dtype=float), np.asarray(Omega, dtype=float))
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise SingularCovariance("Kronecker covariance is not positive definite")
    r = (X - M).reshape(-1)
    quad = float(r @ np.linalg.solve(cov, r))
    return -0.5 * (p * q * math.log(2 * math.pi) + logdet + quad)


def _naive_gram(points, b):
    p = len(points)
    out = np.empty((p, p))
    for i in range(p):
        for i2 in range(p):
            diff = points[i] - points[i2]
            out[i, i2] = math.exp(-float(np.sum(b * diff * diff)))
    return out


def dense_posterior_terms(problem, phi, jitter=1e-10):
    """The four log-determinant terms, computed with explicit inverses.

    ``jitter`` (relative to the unit diagonal) is added to the kernel
    matrix, mirroring the first rung of the main implementation.
    """
    n, j, k, d = problem.dims
    m = d + 1
    phi = np.asarray(phi, dtype=float)
    s, b = phi[:d], phi[d:2 * d]
    sigma = np.zeros((k, k))
    idx = 2 * d
    for r in range(k):
        for c in range(r + 1):
            sigma[r, c] = sigma[c, r] = phi[idx]
            idx += 1
    if problem.measurement_error.kind == "scalar":
        sigma = sigma + problem.measurement_error.phi * np.eye(k)
    points = np.vstack([problem.training.design, s])
    h = np.hstack([np.ones((n + 1, 1)), points])
    a = _naive_gram(points, b) + jitter * np.eye(n + 1)
    a_inv = np.linalg.inv(a)
    hah = h.T @ a_inv @ h
    mmat = a_inv - a_inv @ h @ np.linalg.inv(hah) @ h.T @ a_inv
    daug = np.vstack([problem.training.data, problem.test])
    g = daug.T @ mmat @ daug
    sigma_inv = np.linalg.inv(sigma)
    smat = np.zeros((j, j))
    for t in range(k):
        for u in range(k):
            block = g[t::k, u::k]
            smat += sigma_inv[t, u] * block
    dof = n + 1 - m
    return (
        -0.5 * j * k * np.linalg.slogdet(a)[1],
        -0.5 * j * k * np.linalg.slogdet(hah)[1],
        -0.5 * (j * dof + k + 1) * np.linalg.slogdet(sigma)[1],
        -0.5 * dof * k * np.linalg.slogdet(smat)[1],
    )


def grid_posterior(target, grid) -> np.ndarray:
    """Normalized posterior weights over a list of states.

    ``target`` is an InverseProblem or any callable returning a log density.
    """
    fn = target.log_posterior if hasattr(target, "log_posterior") else target
    logp = np.array([fn(np.asarray(g, dtype=float)) for g in grid], dtype=float)
    finite = np.isfinite(logp)
    if not finite.any():
        raise AllMinusInfinity("no grid point has finite posterior")
    w = np.zeros_like(logp)
    w[finite] = np.exp(logp[finite] - logp[finite].max())
    return w / w.sum()


# -- quadrature on the j = k = 1 case -----------------------------------------


def integrate_log_scale(log_f, center, half_width=40.0, epsrel=1e-10):
    """log of int_0^inf exp(log_f(c)) dc via the substitution c = exp(u).

    ``center`` is a rough location of the mass in u = log c.
    """
    def g(u):
        return math.exp(log_f(math.exp(u)) + u - shift)

    shift = log_f(math.exp(center)) + center
    val, err = integrate.quad(
        g, center - half_width, center + half_width, epsabs=0.0, epsrel=epsrel, limit=400,
        points=[center],
    )
    if not np.isfinite(val) or val <= 0 or err > 1e-6 * val:
        raise QuadratureNonConvergence(f"log-scale quadrature: value {val}, error {err}")
    return math.log(val) + shift


@dataclass
class _Counter:
    calls: int = 0


def quadrature_marginal_check(problem, phi, gl_nodes=64, counter=None) -> float:
    """Numerically integrate likelihood x prior over B (2 coeffs) and scalar C.

    Only for j = k = d = 1. The B integral uses a tensor Gauss-Legendre
    rule on a box of +-10 conditional standard deviations about the GLS
    estimate; the C integral is adaptive in log C. Returns the log of the
    integral, equal to the closed-form log posterior up to a constant.
    """
    n, j, k, d = problem.dims
    if (j, k, d) != (1, 1, 1) or n > 8:
        raise ValueError("quadrature oracle supports j = k = d = 1 and n <= 8")
    counter = counter if counter is not None else _Counter()
    s, b, sig = float(phi[0]), float(phi[1]), float(phi[2])
    pts = np.append(problem.training.design[:, 0], s)
    y = np.append(problem.training.data[:, 0], problem.test[0])
    p = pts.size
    a = np.exp(-b * (pts[:, None] - pts[None, :]) ** 2)
    a_inv = np.linalg.inv(a)
    logdet_a = np.linalg.slogdet(a)[1]
    h = np.column_stack([np.ones(p), pts])
    hah_inv = np.linalg.inv(h.T @ a_inv @ h)
    b_hat = hah_inv @ h.T @ a_inv @ y
    resid = y - h @ b_hat
    q_min = float(resid @ a_inv @ resid)
    nodes, weights = np.polynomial.legendre.leggauss(gl_nodes)

    def log_inner(c):
        sd = np.sqrt(sig * c * np.diag(hah_inv))
        b0 = b_hat[0] + 10 * sd[0] * nodes
        b1 = b_hat[1] + 10 * sd[1] * nodes
        r = y[None, None, :] - b0[:, None, None] - b1[None, :, None] * pts[None, None, :]
        quad = np.einsum("abi,ij,abj->ab", r, a_inv, r)
        counter.calls += quad.size
        var = sig * c
        loglik = -0.5 * (p * math.log(2 * math.pi) + logdet_a + p * math.log(var) + quad / var)
        # priors: flat on B, 1/C on C, 1/Sigma on Sigma
        logf = loglik - math.log(c) - math.log(sig)
        ref = float(logf.max())
        val = float(weights @ np.exp(logf - ref) @ weights) * 100.0 * sd[0] * sd[1]
        if not val > 0:
            raise QuadratureNonConvergence("B integral vanished")
        return math.log(val) + ref

    # mass in c sits near the residual quadratic form over sigma
    center = math.log(max(q_min / (sig * p), 1e-300))
    return integrate_log_scale(log_inner, center, half_width=12.0, epsrel=1e-10)


# -- synthetic data -------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Ground-truth generator: sums of sinusoids on a box, optional noise.

    Component l of the flattened observation is
    ``sum_i sin(2 pi freq_i w_l u_i + phase_{l,i})`` with ``u`` the point
    rescaled to the unit box and ``w_l`` in [1, 1.25) a per-component
    frequency stretch, so that no two components are linear combinations
    of the same few sinusoids.
    """

    s_true: np.ndarray
    n: int = 25
    j: int = 4
    k: int = 2
    d: int = 2
    box: np.ndarray | None = None
    design_rule: str = "grid"
    grid_shape: tuple | None = None
    freqs: tuple | None = None
    amplitude: float = 1.0
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.s_true = np.atleast_1d(np.asarray(self.s_true, dtype=float))
        if self.box is None:
            self.box = np.tile([0.0, 1.0], (self.d, 1))
        self.box = np.asarray(self.box, dtype=float)
        if self.freqs is None:
            self.freqs = (0.6,) * self.d


_GOLDEN = 0.6180339887498949


def _phases(jk, d):
    idx = np.arange(jk)[:, None] * _GOLDEN + np.arange(d)[None, :] * 0.3090169943749474
    return 2 * math.pi * (idx % 1.0)


def _stretch(jk):
    return 1.0 + 0.25 * ((np.arange(jk) * _GOLDEN * 0.5) % 1.0)


def synth_function(spec: SyntheticSpec, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = spec.box[:, 0], spec.box[:, 1]
    u = (points - lo) / (hi - lo)
    phases = _phases(spec.j * spec.k, spec.d)
    freqs = np.asarray(spec.freqs, dtype=float)[None, :] * _stretch(spec.j * spec.k)[:, None]
    arg = 2 * math.pi * freqs[None, :, :] * u[:, None, :] + phases[None, :, :]
    return spec.amplitude * np.sin(arg).sum(axis=2)


def design_points(spec: SyntheticSpec) -> np.ndarray:
    lo, hi = spec.box[:, 0], spec.box[:, 1]
    if spec.design_rule == "grid":
        shape = spec.grid_shape
        if shape is None:
            side = int(round(spec.n ** (1.0 / spec.d)))
            shape = (side,) * spec.d
        if int(np.prod(shape)) != spec.n:
            raise ValueError(f"grid shape {shape} does not give n = {spec.n}")
        axes = [np.linspace(lo[i], hi[i], shape[i]) for i in range(spec.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([g.ravel() for g in mesh])
    if spec.design_rule == "lhs":
        sampler = qmc.LatinHypercube(d=spec.d, seed=spec.seed)
        return qmc.scale(sampler.random(spec.n), lo, hi)
    raise ValueError(f"unknown design rule {spec.design_rule!r}")


def synth_generate(spec: SyntheticSpec):
    """Returns (TrainingSet, test vector, s_true)."""
    from .core_model import TrainingSet

    rng = np.random.default_rng(spec.seed)
    design = design_points(spec)
    data = synth_function(spec, design)
    test = synth_function(spec, spec.s_true)[0]
    if spec.noise_sd > 0:
        data = data + rng.normal(0.0, spec.noise_sd, size=data.shape)
        test = test + rng.normal(0.0, spec.noise_sd, size=test.shape)
    return TrainingSet(design, data, spec.j, spec.k), test, spec.s_true.copy()


def default_fixture(s_true=(0.37, 0.62), noise_sd=0.0, seed=0) -> SyntheticSpec:
    return SyntheticSpec(s_true=np.asarray(s_true), n=25, j=4, k=2, d=2,
                         noise_sd=noise_sd, seed=seed)
