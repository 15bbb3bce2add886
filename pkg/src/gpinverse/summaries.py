"""Posterior summaries from MCMC samples.

HPD regions and modes come from a histogram: bins follow the
Freedman-Diaconis rule with the width clamped to [w/512, w/32], where w is
the prior width of the coordinate (the sample range when no prior width
is given). Bins start at the smallest sample, or on the grid anchored at
the lower prior bound when a support is given. The HPD region is the
super-level set of bin counts with the highest threshold that still holds
the requested mass, so it may be a union of disjoint intervals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyChain, NonPositiveRadius, TooFewSamples

MIN_SAMPLES = 100

# Omega_b = v0 / (R / r_hat) with v0 = 220 km/s and R = 8 kpc
V0_KMS = 220.0
R_SUN_KPC = 8.0


@dataclass(frozen=True)
class HpdRegion:
    level: float
    intervals: tuple
    mass: float

    def contains(self, x) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)

    def map(self, fn) -> "HpdRegion":
        """Image under a strictly increasing map."""
        return HpdRegion(self.level, tuple((fn(lo), fn(hi)) for lo, hi in self.intervals), self.mass)

    def to_list(self):
        return [[float(lo), float(hi)] for lo, hi in self.intervals]


def marginal_summary(samples) -> dict:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptyChain("no samples")
    if x.size < 2:
        raise TooFewSamples("need at least 2 samples")
    lo, hi = np.quantile(x, [0.025, 0.975])
    return {
        "mean": float(x.mean()),
        "variance": float(x.var(ddof=1)),
        "ci95": [float(lo), float(hi)],
    }


def bin_width(x, prior_width=None) -> float:
    x = np.asarray(x, dtype=float)
    span = float(x.max() - x.min())
    width = prior_width if prior_width is not None else span
    q75, q25 = np.percentile(x, [75, 25])
    fd = 2.0 * (q75 - q25) * x.size ** (-1.0 / 3.0)
    if width <= 0:
        return 1.0  # constant samples
    return float(np.clip(fd, width / 512.0, width / 32.0))


def _histogram(samples, prior_width=None, support=None):
    """Counts and edges; with ``support = (lo, hi)`` the edges start at lo."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < MIN_SAMPLES:
        raise TooFewSamples(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if support is not None and prior_width is None:
        prior_width = float(support[1] - support[0])
    h = bin_width(x, prior_width)
    lo = float(x.min())
    if support is not None:
        # whole bins from the lower bound so mass piled on a bound is covered
        lo = float(support[0]) + h * math.floor((lo - float(support[0])) / h)
    nbins = max(1, int(math.floor((float(x.max()) - lo) / h)) + 1)
    edges = lo + h * np.arange(nbins + 1)
    idx = np.minimum(((x - lo) / h).astype(np.int64), nbins - 1)
    counts = np.bincount(idx, minlength=nbins)
    return counts, edges


def hpd_region(samples, level=0.95, prior_width=None, support=None) -> HpdRegion:
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    counts, edges = _histogram(samples, prior_width, support)
    total = counts.sum()
    # highest threshold t with mass{counts >= t} >= level
    levels = np.unique(counts)[::-1]
    chosen = None
    for t in levels:
        if counts[counts >= t].sum() >= level * total:
            chosen = t
            break
    keep = counts >= chosen
    intervals = []
    start = None
    for i, flag in enumerate(keep):
        if flag and start is None:
            start = i
        if not flag and start is not None:
            intervals.append((float(edges[start]), float(edges[i])))
            start = None
    if start is not None:
        intervals.append((float(edges[start]), float(edges[len(keep)])))
    return HpdRegion(level, tuple(intervals), float(counts[keep].sum() / total))


def posterior_mode(samples, prior_width=None, support=None) -> float:
    """Midpoint of the fullest histogram bin; ties go to the lowest bin."""
    counts, edges = _histogram(samples, prior_width, support)
    x = np.asarray(samples, dtype=float)
    if x.min() == x.max():
        return float(x[0])
    i = int(np.argmax(counts))
    return float(0.5 * (edges[i] + edges[i + 1]))


def bar_frequency(r_hat) -> float:
    """Bar pattern speed in km/s/kpc from a solar radius in corotation units."""
    if not r_hat > 0:
        raise NonPositiveRadius(f"radius must be positive, got {r_hat}")
    return V0_KMS * r_hat / R_SUN_KPC


def summarize_chain(chain, names, prior_widths=None, level=0.95, supports=None) -> dict:
    """Per-coordinate mean, variance, CI, mode and HPD region.

    ``supports`` optionally gives a (lo, hi) prior box per coordinate (or
    None) used to anchor the histogram bins.
    """
    out = {}
    for i, name in enumerate(names):
        col = chain.samples[:, i]
        pw = None if prior_widths is None else prior_widths[i]
        sup = None if supports is None else supports[i]
        row = marginal_summary(col)
        row["median"] = float(np.median(col))
        if col.size >= MIN_SAMPLES:
            row["mode"] = posterior_mode(col, pw, sup)
            row["hpd"] = hpd_region(col, level, pw, sup).to_list()
        out[name] = row
    return out
