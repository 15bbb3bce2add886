"""GP emulator: GLS fit, conditional mean and covariance, model criticism.

Given smoothness ``q`` plugged in, the conditional law of the flattened
observation at ``s`` is N(mu2(s), a2(s, s) * Omega) with

    mu2(s) = B_gls' h(s) + (D - H B_gls)' A^-1 a_D(s)
    a2(s1, s2) = a(s1, s2) - a_D(s1)' A^-1 a_D(s2)
                 + g(s1)' (H' A^-1 H)^-1 g(s2),  g(s) = h(s) - H' A^-1 a_D(s)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .core_model import (
    TrainingSet,
    basis_matrix,
    basis_vector,
    cholesky_jitter,
    cross_kernel_vector,
    kernel_matrix,
    kernel_value,
)
from .errors import GPInverseError, InsufficientDegreesOfFreedom, RankDeficientBasis
from .posterior import InverseProblem
from .summaries import hpd_region
from .tmcmc import TmcmcConfig, default_init, default_scales, run_chain

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmulatorFit:
    design: np.ndarray
    data: np.ndarray
    q: np.ndarray
    j: int
    k: int
    chol_a: np.ndarray      # lower Cholesky factor of A_D
    chol_hah: np.ndarray    # lower Cholesky factor of H' A^-1 H
    white_h: np.ndarray     # L^-1 H
    b_gls: np.ndarray       # m x jk
    alpha: np.ndarray       # A^-1 (D - H B_gls), n x jk
    omega_scaled: np.ndarray  # (n - m) Omega_gls = D' M D

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def m(self):
        return self.design.shape[1] + 1

    @property
    def omega_gls(self) -> np.ndarray:
        return self.omega_scaled / (self.n - self.m)


def fit(training: TrainingSet, q_plugin) -> EmulatorFit:
    q = np.asarray(q_plugin, dtype=float).ravel()
    design, data = training.design, training.data
    n, m = training.n, training.m
    if n - m < 1:
        raise InsufficientDegreesOfFreedom("need n > m for the GLS covariance estimate")
    amat = kernel_matrix(design, q)
    la, _ = cholesky_jitter(amat, exact_first=True)
    h = basis_matrix(design)
    wh = solve_triangular(la, h, lower=True, check_finite=False)
    wd = solve_triangular(la, data, lower=True, check_finite=False)
    hah = wh.T @ wh
    lh, _ = cholesky_jitter(hah, exact_first=True, exc=RankDeficientBasis)
    rhs = wh.T @ wd
    b_gls = solve_triangular(lh.T, solve_triangular(lh, rhs, lower=True), lower=False)
    resid_w = wd - wh @ b_gls
    alpha = solve_triangular(la.T, resid_w, lower=False, check_finite=False)
    omega_scaled = resid_w.T @ resid_w
    return EmulatorFit(
        design=design, data=data, q=q, j=training.j, k=training.k,
        chol_a=la, chol_hah=lh, white_h=wh, b_gls=b_gls, alpha=alpha,
        omega_scaled=0.5 * (omega_scaled + omega_scaled.T),
    )


def fit_augmented(problem: InverseProblem, s_tilde, q_plugin) -> EmulatorFit:
    """Fit on training data plus the test vector placed at ``s_tilde``."""
    t = problem.training
    aug = TrainingSet(
        np.vstack([t.design, np.asarray(s_tilde, dtype=float)]),
        np.vstack([t.data, problem.test]),
        t.j, t.k,
    )
    return fit(aug, q_plugin)


def predict_mean(em: EmulatorFit, s) -> np.ndarray:
    s = np.asarray(s, dtype=float).ravel()
    cross = cross_kernel_vector(em.design, s, em.q)
    return em.b_gls.T @ basis_vector(s) + em.alpha.T @ cross


def _whitened(em, s):
    s = np.asarray(s, dtype=float).ravel()
    w = solve_triangular(em.chol_a, cross_kernel_vector(em.design, s, em.q), lower=True)
    g = basis_vector(s) - em.white_h.T @ w
    z = solve_triangular(em.chol_hah, g, lower=True)
    return s, w, z


def predict_cov_scalar(em: EmulatorFit, s1, s2) -> float:
    """a2(s1, s2); the full predictive covariance is a2 * Omega."""
    s1, w1, z1 = _whitened(em, s1)
    s2, w2, z2 = _whitened(em, s2)
    a1 = kernel_value(s1, s2, em.q) - float(w1 @ w2)
    return a1 + float(z1 @ z2)


def conditional_cov_scalar(em: EmulatorFit, s1, s2) -> float:
    """a1(s1, s2): the GP conditional without the basis correction."""
    s1, w1, _ = _whitened(em, s1)
    s2, w2, _ = _whitened(em, s2)
    return kernel_value(s1, s2, em.q) - float(w1 @ w2)


def model_fit_report(em: EmulatorFit, v_test, points: dict) -> dict:
    """Predicted vs observed series per evaluation point and component.

    ``points`` maps a label to a parameter vector. Each entry of the
    result holds, per component, the j predicted/observed pairs and the RMSE.
    """
    v_test = np.asarray(v_test, dtype=float).ravel()
    j, k = em.j, em.k
    obs = v_test.reshape(j, k)
    report = {}
    for label, s in points.items():
        pred = predict_mean(em, s).reshape(j, k)
        comps = []
        for t in range(k):
            err = pred[:, t] - obs[:, t]
            comps.append({
                "component": t + 1,
                "predicted": pred[:, t].tolist(),
                "observed": obs[:, t].tolist(),
                "rmse": float(np.sqrt(np.mean(err * err))),
            })
        report[label] = {"point": np.asarray(s, dtype=float).tolist(), "components": comps}
    return report


def model_fit_rows(report: dict):
    """Flatten a model-fit report into CSV rows (label, component, observation, predicted, observed)."""
    rows = []
    for label, entry in report.items():
        for comp in entry["components"]:
            for r, (p, o) in enumerate(zip(comp["predicted"], comp["observed"])):
                rows.append((label, comp["component"], r + 1, p, o))
    return rows


def variance_decomposition(em: EmulatorFit, s_samples, sigma_diag_samples) -> dict:
    """Split of the predictive variance over a chain of parameter draws.

    Returns the per-component sample variance of mu2(S), the mean of
    a2(S, S) and the median diagonal of Sigma.
    """
    s_samples = np.atleast_2d(np.asarray(s_samples, dtype=float))
    mus = np.array([predict_mean(em, s) for s in s_samples]).reshape(len(s_samples), em.j, em.k)
    a2 = np.array([predict_cov_scalar(em, s, s) for s in s_samples])
    var_mu = mus.var(axis=0, ddof=1).mean(axis=0)
    return {
        "var_mu_per_component": var_mu.tolist(),
        "mean_a2": float(a2.mean()),
        "median_sigma_diag": float(np.median(np.asarray(sigma_diag_samples))),
    }


def _fold_seed(seed, i):
    return int(np.random.SeedSequence([int(seed), int(i)]).generate_state(1)[0])


def loo_cross_validate(training: TrainingSet, bounds, iterations=20_000, burn_in=5_000,
                       seed=0, level=0.95, scales=None, folds=None) -> dict:
    """Leave-one-out recovery of design vectors.

    Fold i drops (s_i, v_i) from the training set, treats v_i as test data,
    samples the posterior and checks whether s_i lies in the per-coordinate
    HPD region. Failed folds are recorded with their error category.
    """
    n, d = training.n, training.d
    if n < training.m + 2:
        raise InsufficientDegreesOfFreedom("leave-one-out needs n >= m + 2")
    bounds = np.asarray(bounds, dtype=float)
    widths = bounds[:, 1] - bounds[:, 0]
    indices = range(n) if folds is None else folds
    records = []
    for i in indices:
        keep = np.arange(n) != i
        rec = {"fold": int(i), "s_true": training.design[i].tolist()}
        try:
            sub = TrainingSet(training.design[keep], training.data[keep], training.j, training.k)
            problem = InverseProblem(sub, training.data[i], bounds)
            sc = default_scales(problem) if scales is None else np.asarray(scales, dtype=float)
            cfg = TmcmcConfig(sc, default_init(problem), iterations=iterations,
                              burn_in=burn_in, seed=_fold_seed(seed, i))
            chain = run_chain(problem, cfg)
            covered = []
            for c in range(d):
                region = hpd_region(chain.samples[:, c], level, widths[c], bounds[c])
                covered.append(region.contains(training.design[i, c]))
            rec.update(status="ok", covered=covered, acceptance_rate=chain.acceptance_rate)
        except GPInverseError as exc:
            log.warning("fold %d failed: %s", i, exc)
            rec.update(status="failed", error=exc.category, message=str(exc))
        records.append(rec)
    ok = [r for r in records if r["status"] == "ok"]
    coverage = [float(np.mean([r["covered"][c] for r in ok])) if ok else float("nan") for c in range(d)]
    return {
        "level": level,
        "iterations": iterations,
        "burn_in": burn_in,
        "seed": int(seed),
        "folds": records,
        "n_failed": len(records) - len(ok),
        "coverage": coverage,
    }
