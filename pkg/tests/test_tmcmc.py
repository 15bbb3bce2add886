import math

import numpy as np
import pytest
from scipy import stats

from gpinverse.errors import EmptyChain, InvalidInit
from gpinverse.tmcmc import (
    RNG_BLOCK,
    Chain,
    TmcmcConfig,
    acceptance_log_ratio,
    diagnostics,
    move_log_ratio,
    propose,
    run_chain,
    truncated_normal_positive,
)

from conftest import small_problem


def std_normal_2d(x):
    return -0.5 * float(x @ x)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(scales=[0.0, 1.0]),
        dict(move_probs=[0.0, 0.5]),
        dict(move_probs=[0.5, 1.0]),
        dict(iterations=0),
        dict(thin=0),
        dict(init=[0.0]),
    ])
    def test_invalid(self, kw):
        base = dict(scales=[1.0, 1.0], init=[0.0, 0.0])
        base.update(kw)
        with pytest.raises(ValueError):
            TmcmcConfig(**base)

    def test_default_probs(self):
        assert TmcmcConfig([1, 1, 1], [0, 0, 0]).move_probs.tolist() == [0.5] * 3


class TestPropose:
    def test_zero_eps(self, rng):
        x = np.array([1.0, 2.0])
        y, _ = propose(x, np.array([1.0, 1.0]), np.array([0.5, 0.5]), rng, eps=0.0)
        assert np.array_equal(x, y)

    def test_forced_forward(self, rng):
        y, signs = propose(np.array([3.0]), np.array([2.0]), np.array([1.0]), rng, eps=0.5)
        assert y.tolist() == [4.0] and signs.tolist() == [1.0]

    def test_sign_frequencies(self, rng):
        probs = np.array([0.2, 0.5, 0.9])
        n = 100_000
        counts = np.zeros(3)
        for _ in range(n):
            _, signs = propose(np.zeros(3), np.ones(3), probs, rng)
            counts += signs > 0
        band = 3 * np.sqrt(probs * (1 - probs) / n)
        assert np.all(np.abs(counts / n - probs) < band)

    def test_truncated_normal_positive(self, rng):
        x = truncated_normal_positive(rng, 50_000)
        assert np.all(x >= 0)
        # half-normal mean sqrt(2/pi)
        assert abs(x.mean() - math.sqrt(2 / math.pi)) < 0.01


class TestAcceptance:
    def test_half_equal_targets(self):
        signs = np.array([1.0, -1.0, 1.0])
        assert acceptance_log_ratio(1.3, 1.3, signs, np.full(3, 0.5)) == 0.0

    def test_minus_inf(self):
        assert acceptance_log_ratio(0.0, -math.inf, np.ones(2), np.full(2, 0.5)) == -math.inf

    def test_move_ratio(self):
        probs = np.array([0.3, 0.8])
        got = move_log_ratio(np.array([1.0, -1.0]), probs)
        want = math.log((0.7 * 0.8) / (0.3 * 0.2))
        assert got == pytest.approx(want, rel=1e-14)

    def test_detailed_balance_lattice(self):
        # K(x -> y) for one coordinate with forward probability pi:
        # density pi * 2 phi(|y - x| / c) / c when y > x, times min(1, ratio)
        pi, c = 0.3, 0.7
        probs = np.array([pi])
        lattice = np.linspace(-2, 3, 11)

        def logp(x):
            return -0.5 * (x - 0.4) ** 2 / 1.3 + 0.2 * math.sin(3 * x)

        def kernel(x, y):
            sign = 1.0 if y > x else -1.0
            move = pi if sign > 0 else 1 - pi
            dens = move * 2 * stats.norm.pdf(abs(y - x) / c) / c
            ratio = acceptance_log_ratio(logp(x), logp(y), np.array([sign]), probs)
            return dens * min(1.0, math.exp(ratio))

        for x in lattice:
            for y in lattice:
                if x == y:
                    continue
                lhs = math.exp(logp(x)) * kernel(x, y)
                rhs = math.exp(logp(y)) * kernel(y, x)
                assert abs(lhs - rhs) <= 1e-12 * max(lhs, rhs, 1e-300)


def reference_metropolis(logp, init, scales, iterations, seed):
    """Plain random-walk Metropolis consuming the same random stream."""
    rng = np.random.default_rng(seed)
    x = np.array(init, dtype=float)
    fx = logp(x)
    out = []
    step = 0
    while step < iterations:
        block = min(RNG_BLOCK, iterations - step)
        eps = np.abs(rng.standard_normal(block))
        dirs = rng.random((block, x.size))
        log_u = np.log(rng.random(block))
        for i in range(block):
            y = x.copy()
            for jx in range(x.size):
                y[jx] = x[jx] + scales[jx] * eps[i] if dirs[i, jx] < 0.5 else x[jx] - scales[jx] * eps[i]
            fy = logp(y)
            if log_u[i] < fy - fx:
                x, fx = y, fy
            out.append(x.copy())
            step += 1
    return np.array(out)


class TestRunChain:
    def test_single_iteration(self):
        ch = run_chain(std_normal_2d, TmcmcConfig([1, 1], [0, 0], iterations=1, burn_in=0))
        assert len(ch) == 1

    def test_invalid_init(self):
        with pytest.raises(InvalidInit):
            run_chain(lambda x: -math.inf, TmcmcConfig([1], [0]))

    def test_metropolis_regression(self):
        scales = np.array([0.8, 1.5, 0.3])
        cfg = TmcmcConfig(scales, [0.1, -0.2, 0.3], iterations=10_000, burn_in=0, seed=42)

        def logp(x):
            return -0.5 * float(x @ x) - 0.1 * float(x[0] ** 4)

        ch = run_chain(logp, cfg)
        ref = reference_metropolis(logp, cfg.init, scales, 10_000, 42)
        assert np.array_equal(ch.samples, ref)

    def test_deterministic(self):
        p = small_problem()
        init = np.array([0.5, 0.5, 1.0, 1.0, 1.0, 0.0, 1.0])
        cfg = TmcmcConfig(np.full(7, 0.05), init, iterations=500, burn_in=100, seed=3)
        a, b = run_chain(p, cfg), run_chain(p, cfg)
        assert np.array_equal(a.samples, b.samples) and np.array_equal(a.log_post, b.log_post)
        assert a.accept_count == b.accept_count

    def test_burn_in_and_thin(self):
        cfg = TmcmcConfig([1, 1], [0, 0], iterations=1000, burn_in=300, thin=10, seed=1)
        ch = run_chain(std_normal_2d, cfg)
        assert len(ch) == 100
        assert ch.iterations[0] == 9 and ch.iterations[-1] == 999
        assert ch.proposal_count == 1300
        assert 0 <= ch.accept_count <= ch.proposal_count

    def test_constraints_respected(self):
        p = small_problem()
        init = np.array([0.5, 0.5, 1.0, 1.0, 1.0, 0.0, 1.0])
        ch = run_chain(p, TmcmcConfig(np.array([0.2, 0.2, 0.5, 0.5, 0.5, 0.5, 0.5]), init,
                                      iterations=3000, burn_in=0, seed=5))
        assert ch.accept_count < ch.proposal_count
        for phi in ch.samples:
            assert np.all((phi[:2] >= 0) & (phi[:2] <= 1))
            assert np.all(phi[2:4] > 0)
            sig = np.array([[phi[4], phi[5]], [phi[5], phi[6]]])
            assert np.all(np.linalg.eigvalsh(sig) > 0)

    def test_normal_2d_moments(self):
        ch = run_chain(std_normal_2d, TmcmcConfig([1.2, 1.2], [0, 0], iterations=200_000, burn_in=2000, seed=7))
        x = ch.samples
        # batch-means standard error
        batches = x.reshape(200, -1, 2).mean(axis=1)
        se = batches.std(axis=0, ddof=1) / np.sqrt(200)
        assert np.all(np.abs(x.mean(axis=0)) < 3 * se)
        assert np.all(np.abs(x.var(axis=0) - 1) < 0.1)

    @pytest.mark.slow
    def test_ks_seven_dim(self):
        from criteria import seven_dim_ks

        pvals, _ = seven_dim_ks(thin=20)
        assert min(pvals) > 0.01


class TestDiagnostics:
    def test_all_rejected(self):
        def only_origin(x):
            return 0.0 if np.all(x == 0) else -math.inf

        ch = run_chain(only_origin, TmcmcConfig([1], [0], iterations=100, burn_in=0))
        rep = diagnostics(ch)
        assert rep["acceptance_rate"] == 0.0
        assert rep["coordinates"]["x1"]["lag1_autocorr"] == 1.0

    def test_iid_lag1(self, rng):
        x = rng.standard_normal((100_000, 1))
        rep = diagnostics(Chain(x, np.zeros(len(x)), 0, 0))
        assert abs(rep["coordinates"]["x1"]["lag1_autocorr"]) < 0.02

    def test_max_state(self):
        ch = Chain(np.array([[0.0], [2.0], [1.0]]), np.array([-1.0, 3.0, 0.0]), 2, 3)
        rep = diagnostics(ch, ["a"])
        assert rep["max_state"] == [2.0] and rep["max_log_posterior"] == 3.0
        assert rep["coordinates"]["a"]["mean"] == 1.0

    def test_empty(self):
        with pytest.raises(EmptyChain):
            diagnostics(Chain(np.empty((0, 2)), np.empty(0), 0, 0))
