"""Transformation-based MCMC with additive moves.

Every iteration draws a single ``eps > 0`` from the standard normal
truncated to the positive half line. Coordinate ``i`` moves forward
(``+ c_i * eps``) with probability ``pi_i`` and backward otherwise, so the
whole state is updated as one block. Additive moves have unit Jacobian,
which leaves only the move-direction probabilities in the acceptance ratio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import EmptyChain, InvalidInit

# random numbers are drawn in blocks of this many iterations
RNG_BLOCK = 4096


@dataclass
class TmcmcConfig:
    scales: np.ndarray
    init: np.ndarray
    move_probs: np.ndarray | None = None
    iterations: int = 20_000
    burn_in: int = 5_000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        self.scales = np.asarray(self.scales, dtype=float).ravel()
        self.init = np.asarray(self.init, dtype=float).ravel()
        if self.move_probs is None:
            self.move_probs = np.full(self.scales.size, 0.5)
        self.move_probs = np.asarray(self.move_probs, dtype=float).ravel()
        if self.scales.size != self.init.size or self.move_probs.size != self.init.size:
            raise ValueError("scales, move_probs and init must have equal length")
        if np.any(self.scales <= 0):
            raise ValueError("scales must be positive")
        if np.any(self.move_probs <= 0) or np.any(self.move_probs >= 1):
            raise ValueError("move probabilities must lie in (0, 1)")
        if self.iterations < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need iterations >= 1, burn_in >= 0, thin >= 1")


@dataclass
class Chain:
    samples: np.ndarray
    log_post: np.ndarray
    accept_count: int
    proposal_count: int
    iterations: np.ndarray = field(default=None)

    def __post_init__(self):
        if len(self.samples) != len(self.log_post):
            raise ValueError("samples and log_post lengths differ")
        if self.iterations is None:
            self.iterations = np.arange(len(self.samples))

    def __len__(self):
        return len(self.samples)

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.proposal_count if self.proposal_count else 0.0


def truncated_normal_positive(rng, size=None):
    # |N(0,1)| has exactly the law of N(0,1) conditioned on being positive
    return np.abs(rng.standard_normal(size))


def propose(state, scales, move_probs, rng, eps=None):
    """One additive block proposal. Returns (proposal, signs) with signs in {+1, -1}."""
    state = np.asarray(state, dtype=float)
    if eps is None:
        eps = float(truncated_normal_positive(rng))
    forward = rng.random(state.size) < move_probs
    signs = np.where(forward, 1.0, -1.0)
    return state + signs * scales * eps, signs


def move_log_ratio(signs, move_probs) -> float:
    """log of P(reverse directions) / P(forward directions)."""
    fwd = signs > 0
    lp = np.log(move_probs)
    lq = np.log1p(-move_probs)
    return float(np.sum(np.where(fwd, lq - lp, lp - lq)))


def acceptance_log_ratio(target_old, target_new, signs, move_probs) -> float:
    if target_new == -math.inf:
        return -math.inf
    return move_log_ratio(signs, move_probs) + target_new - target_old


def _target_fn(target):
    return target.log_posterior if hasattr(target, "log_posterior") else target


def run_chain(target, config: TmcmcConfig, progress=None) -> Chain:
    """Run burn-in plus ``iterations`` steps and keep every ``thin``-th state.

    ``target`` is an InverseProblem or any callable mapping a state vector
    to a log density (``-inf`` outside the support).
    """
    logp = _target_fn(target)
    rng = np.random.default_rng(config.seed)
    scales, probs = config.scales, config.move_probs
    dim = scales.size
    current = config.init.copy()
    current_lp = float(logp(current))
    if not math.isfinite(current_lp):
        raise InvalidInit("initial state has zero posterior density")
    lp_fwd = np.log(probs)
    lq_fwd = np.log1p(-probs)
    # log ratio contribution per coordinate for forward / backward moves
    contrib_fwd = lq_fwd - lp_fwd
    contrib_bwd = lp_fwd - lq_fwd

    total = config.burn_in + config.iterations
    n_keep = config.iterations // config.thin
    samples = np.empty((n_keep, dim))
    log_post = np.empty(n_keep)
    kept_iter = np.empty(n_keep, dtype=np.int64)
    accepted = 0
    proposals = 0
    kept = 0
    step = 0
    while step < total:
        block = min(RNG_BLOCK, total - step)
        eps = truncated_normal_positive(rng, block)
        dirs = rng.random((block, dim))
        log_u = np.log(rng.random(block))
        for i in range(block):
            forward = dirs[i] < probs
            proposal = current + np.where(forward, scales, -scales) * eps[i]
            new_lp = float(logp(proposal))
            proposals += 1
            if new_lp != -math.inf:
                ratio = float(np.sum(np.where(forward, contrib_fwd, contrib_bwd))) + new_lp - current_lp
                if log_u[i] < ratio:
                    current, current_lp = proposal, new_lp
                    accepted += 1
            post = step - config.burn_in
            if post >= 0 and (post + 1) % config.thin == 0 and kept < n_keep:
                samples[kept] = current
                log_post[kept] = current_lp
                kept_iter[kept] = post
                kept += 1
            step += 1
        if progress is not None:
            progress(step, total)
    return Chain(samples[:kept], log_post[:kept], accepted, proposals, kept_iter[:kept])


def _lag1(x):
    x = np.asarray(x, dtype=float)
    dx = x - x.mean()
    denom = float(dx @ dx)
    if denom == 0.0:
        return 1.0
    return float(dx[:-1] @ dx[1:]) / denom


def diagnostics(chain: Chain, names=None) -> dict:
    """Acceptance rate, per-coordinate mean/variance/lag-1 autocorrelation, MAP state.

    A constant trace has undefined autocorrelation; it is reported as 1.
    """
    if len(chain) == 0:
        raise EmptyChain("chain has no stored samples")
    dim = chain.samples.shape[1]
    names = names or [f"x{i + 1}" for i in range(dim)]
    coords = {}
    for i, name in enumerate(names):
        col = chain.samples[:, i]
        coords[name] = {
            "mean": float(col.mean()),
            "variance": float(col.var(ddof=1)) if len(col) > 1 else 0.0,
            "lag1_autocorr": _lag1(col),
        }
    best = int(np.argmax(chain.log_post))
    return {
        "acceptance_rate": chain.acceptance_rate,
        "accept_count": chain.accept_count,
        "proposal_count": chain.proposal_count,
        "coordinates": coords,
        "max_log_posterior": float(chain.log_post[best]),
        "max_state": chain.samples[best].tolist(),
    }


# -- defaults tied to an InverseProblem ----------------------------------------


def default_scales(problem) -> np.ndarray:
    """2% of the box width for s, 5% of 1/width^2 for b, 1% of the data scale for Sigma."""
    width = problem.bounds[:, 1] - problem.bounds[:, 0]
    k = problem.training.k
    n_sigma = k * (k + 1) // 2
    return np.concatenate([0.02 * width, 0.05 / width**2, np.full(n_sigma, 0.01 * problem.data_scale)])


def default_init(problem, max_points=512, refine=8, b_factors=(1.0, 4.0, 16.0)) -> np.ndarray:
    """Starting state from a scan of s over a few smoothness levels.

    s is scanned on a cell-centred grid over the box with at most
    ``max_points`` nodes, at b = f / width^2 for each f in ``b_factors``
    and Sigma = data scale times identity. The ``refine`` best (s, b) pairs
    are polished by Nelder-Mead in (s, log b). Sigma is left alone: the
    density has no interior mode in the overall Sigma scale. Starting in the
    dominant basin matters because posteriors in s can be far narrower than
    the scan spacing, and which basin dominates depends on b.
    """
    bounds = problem.bounds
    width = bounds[:, 1] - bounds[:, 0]
    d, k = problem.training.d, problem.training.k
    sigma = problem.data_scale * np.eye(k)
    sig_tail = sigma[np.tril_indices(k)]
    per_dim = max(2, int(math.floor(max_points ** (1.0 / d))))
    axes = [lo + (np.arange(per_dim) + 0.5) * w / per_dim for lo, w in zip(bounds[:, 0], width)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    cands, lps = [], []
    for f in b_factors:
        b0 = f / width**2
        for s0 in nodes:
            cands.append(np.concatenate([s0, np.log(b0)]))
            lps.append(problem.log_posterior(np.concatenate([s0, b0, sig_tail])))
    lps = np.array(lps)
    if not np.any(np.isfinite(lps)):
        raise InvalidInit("no scanned starting point has positive posterior density")

    lo_x = np.concatenate([bounds[:, 0], np.full(d, -np.inf)])
    hi_x = np.concatenate([bounds[:, 1], np.full(d, np.inf)])

    def neg(x):
        if np.any(x < lo_x) or np.any(x > hi_x):
            return 1e300
        v = problem.log_posterior(np.concatenate([x[:d], np.exp(x[d:]), sig_tail]))
        return -v if math.isfinite(v) else 1e300

    xatol = 1e-6 * float(width.min())
    best, best_val = None, math.inf
    for i in np.argsort(-lps, kind="stable")[:refine]:
        if not math.isfinite(lps[i]):
            break
        res = optimize.minimize(neg, cands[i], method="Nelder-Mead",
                                options={"xatol": xatol, "fatol": 1e-8, "maxiter": 200 * 2 * d})
        x, val = (res.x, res.fun) if res.fun < -lps[i] else (cands[i], -lps[i])
        if val < best_val:
            best, best_val = x, val
    # keep the start strictly inside the box
    s0 = np.clip(best[:d], bounds[:, 0] + 1e-9 * width, bounds[:, 1] - 1e-9 * width)
    return np.concatenate([s0, np.exp(best[d:]), sig_tail])
