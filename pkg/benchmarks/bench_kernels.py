"""Timing of the compiled kernels against the numpy fallback, and of one
log-posterior evaluation at the full problem size (n = 216, j = 50, k = 2).

    python3 benchmarks/bench_kernels.py
"""
import time

import numpy as np

from gpinverse import _kernels_py, kernels
from gpinverse.oracle import SyntheticSpec, synth_generate
from gpinverse.posterior import InverseProblem


def best_of(fn, repeat=5, number=20):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        times.append((time.perf_counter() - t0) / number)
    return min(times)


def kernel_table(n=217, d=2):
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, (n, d))
    b = np.array([3.0, 0.5])
    diff = pts[:, None, :] - pts[None, :, :]
    sq = np.ascontiguousarray(diff * diff)
    out = np.empty((n, n))
    s = rng.uniform(0, 1, d)
    backends = {"python": _kernels_py}
    try:
        from gpinverse import _kernels

        backends["cython"] = _kernels
    except ImportError:
        pass
    print(f"kernel timings, n = {n}, d = {d} (microseconds)")
    for name, mod in backends.items():
        row = {
            "gram": best_of(lambda: mod.sq_exp_gram(pts, b)),
            "gram_from_sqdisp": best_of(lambda: mod.gram_from_sqdisp(sq, b, out)),
            "cross": best_of(lambda: mod.sq_exp_cross(pts, s, b), number=200),
        }
        print(f"  {name:7s} " + "  ".join(f"{k} {v * 1e6:9.1f}" for k, v in row.items()))


def posterior_timing():
    spec = SyntheticSpec(s_true=np.array([2.0, 33.0]), n=216, j=50, k=2, d=2,
                         box=np.array([[1.7, 2.3], [0.0, 90.0]]), grid_shape=(12, 18),
                         noise_sd=0.05, seed=10)
    training, test, _ = synth_generate(spec)
    p = InverseProblem(training, test, spec.box)
    ds = p.data_scale
    phi = np.array([2.01, 31.0, 10.0, 1e-3, ds, 0.0, ds])
    per = best_of(lambda: p.log_posterior(phi), repeat=3, number=50)
    print(f"log posterior, n = 216, j = 50, k = 2 ({kernels.BACKEND} kernels): {per * 1e3:.2f} ms")
    print(f"  projected 1.1e6 iterations: {per * 1.1e6 / 3600:.2f} h")


if __name__ == "__main__":
    kernel_table()
    posterior_timing()
