"""Statistical kernel: dip test, Gini index, two-sample tests, BCa bootstrap."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from . import _dip

__all__ = [
    "DipResult",
    "TestResult",
    "BootstrapEstimate",
    "gini",
    "gini_rows",
    "dip_statistic",
    "dip_test",
    "ks_two_sample",
    "wilcoxon_rank_sum",
    "bootstrap_median_bca",
]


@dataclass(frozen=True)
class DipResult:
    D: float
    p_value: float
    n: int
    n_boot: int


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str  # "KS" or "Wilcoxon"

    __test__ = False  # keep pytest from collecting this class


@dataclass(frozen=True)
class BootstrapEstimate:
    point: float
    ci_low: float
    ci_high: float
    n_boot: int
    confidence: float = 0.95
    method: str = "BCa"
    degenerate: bool = False


def _as_1d(x, name="sample"):
    a = np.asarray(x, dtype=float).ravel()
    if np.isnan(a).any():
        raise ValueError(f"{name} contains NaN")
    return a


# -- Gini ---------------------------------------------------------------------

def gini(frequencies) -> float:
    """Gini index of a frequency vector.

    Evaluates ``sum_ij |x_i - x_j| / (2 n^2 mean(x))`` through the sorted
    identity ``sum_i (2i - n - 1) x_(i) / (n sum(x))``. No small-sample
    correction is applied, so a one-hot vector of length ``n`` scores
    ``(n - 1) / n`` rather than 1.
    """
    x = _as_1d(frequencies, "frequencies")
    if x.size == 0:
        raise ValueError("gini needs at least one value")
    if (x < 0).any():
        raise ValueError("frequencies must be nonnegative")
    total = x.sum()
    if total <= 0:
        raise ValueError("undefined mean: all frequencies are zero")
    n = x.size
    s = np.sort(x)
    weights = 2.0 * np.arange(1, n + 1) - n - 1
    return float(np.dot(weights, s) / (n * total))


def gini_rows(counts) -> np.ndarray:
    """Row-wise :func:`gini` for a 2-D array whose rows each have a positive sum."""
    x = np.asarray(counts, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array")
    n = x.shape[1]
    totals = x.sum(axis=1)
    if (totals <= 0).any():
        raise ValueError("undefined mean: a row sums to zero")
    s = np.sort(x, axis=1)
    weights = 2.0 * np.arange(1, n + 1) - n - 1
    return (s @ weights) / (n * totals)


# -- Hartigan's dip -------------------------------------------------------------

def dip_statistic(sample) -> float:
    """Hartigan's dip of the empirical distribution of ``sample``.

    Returns a value in ``[1/(2n), 1/4]``; all-equal samples score ``1/(2n)``.
    """
    x = np.sort(_as_1d(sample))
    n = x.size
    if n < 2:
        raise ValueError("dip needs at least 2 observations")
    return float(_dip.dip_times_2n(x) / (2 * n))


@lru_cache(maxsize=32)
def _null_dips(n: int, n_boot: int, seed: int, threads: int) -> np.ndarray:
    # one 32-bit stream seed per replicate, so chunking over threads cannot change results
    seeds = np.random.SeedSequence(seed).generate_state(n_boot, dtype=np.uint32).astype(np.int64)
    if threads <= 1 or n_boot < 2 * threads:
        dips = _dip.uniform_null_dips(seeds, n)
    else:
        chunks = np.array_split(seeds, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda s: _dip.uniform_null_dips(s, n), chunks))
        dips = np.concatenate(parts)
    dips /= 2 * n
    dips.flags.writeable = False
    return dips


def dip_test(sample, n_boot: int = 2000, seed: int = 0, threads: int = 1) -> DipResult:
    """Dip test of unimodality calibrated against simulated uniform samples.

    The p-value is the fraction of ``n_boot`` uniform(0, 1) samples of the
    same size whose dip is at least the observed one. The null
    distribution only depends on ``(n, n_boot, seed)`` and is cached.
    """
    x = _as_1d(sample)
    n = x.size
    if n < 4:
        raise ValueError("dip test needs at least 4 observations")
    if n_boot < 1:
        raise ValueError("n_boot must be positive, p-value is undefined otherwise")
    d = dip_statistic(x)
    null = _null_dips(n, int(n_boot), int(seed), max(1, int(threads)))
    # guard against last-ulp differences between identical ECDF shapes
    p = float(np.count_nonzero(null >= d * (1 - 1e-12)) / n_boot)
    return DipResult(D=d, p_value=p, n=n, n_boot=int(n_boot))


# -- two-sample tests -----------------------------------------------------------

def _kolmogorov_sf(lam: float, terms: int = 100) -> float:
    if lam <= 0:
        return 1.0
    k = np.arange(1, terms + 1)
    t = np.exp(-2.0 * k * k * lam * lam)
    if t[-1] > 1e-16 * t[0]:
        # alternating series has not settled; the tail mass is 1 to working precision
        return 1.0
    signs = np.where(k % 2 == 1, 1.0, -1.0)
    return float(min(1.0, max(0.0, 2.0 * np.dot(signs, t))))


def ks_two_sample(a, b) -> TestResult:
    """Two-sided two-sample Kolmogorov-Smirnov test.

    Uses the asymptotic Kolmogorov distribution evaluated at
    ``(sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) * D`` with ``ne = n m / (n + m)``.
    """
    a = np.sort(_as_1d(a, "a"))
    b = np.sort(_as_1d(b, "b"))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    ne = a.size * b.size / (a.size + b.size)
    sq = math.sqrt(ne)
    p = _kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
    return TestResult(statistic=d, p_value=p, method="KS")


def _midranks(x):
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = x.size
    # boundaries of tie groups in sorted order
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], n]
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks, ends - starts


def wilcoxon_rank_sum(a, b) -> TestResult:
    """Two-sided Wilcoxon rank-sum test, normal approximation.

    The statistic is the rank sum of ``a`` (midranks for ties). The
    variance is tie-corrected and a 0.5 continuity correction is applied.
    """
    a = _as_1d(a, "a")
    b = _as_1d(b, "b")
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    n1, n2 = a.size, b.size
    N = n1 + n2
    ranks, ties = _midranks(np.concatenate([a, b]))
    w = float(ranks[:n1].sum())
    mean = n1 * (N + 1) / 2.0
    tie_term = float(np.sum(ties.astype(float) ** 3 - ties)) / (N * (N - 1)) if N > 1 else 0.0
    var = n1 * n2 / 12.0 * ((N + 1) - tie_term)
    if var <= 0:
        return TestResult(statistic=w, p_value=1.0, method="Wilcoxon")
    z = max(abs(w - mean) - 0.5, 0.0) / math.sqrt(var)
    p = float(min(1.0, special.erfc(z / math.sqrt(2.0))))
    return TestResult(statistic=w, p_value=p, method="Wilcoxon")


# -- BCa bootstrap --------------------------------------------------------------

def _jackknife_medians(s):
    # leave-one-out medians of a sorted array without the O(n^2) copy
    n = s.size
    m = n - 1
    k = np.arange(n)

    def at_rank(r):
        return np.where(r < k, s[r], s[np.minimum(r + 1, n - 1)])

    if m % 2 == 1:
        return at_rank(np.full(n, (m - 1) // 2))
    return 0.5 * (at_rank(np.full(n, m // 2 - 1)) + at_rank(np.full(n, m // 2)))


def bootstrap_median_bca(sample, n_boot: int = 10000, confidence: float = 0.95,
                         seed: int = 0) -> BootstrapEstimate:
    """BCa bootstrap confidence interval for the median.

    Bias correction uses the share of bootstrap medians below the sample
    median, counting ties as one half; the acceleration comes from the
    jackknife skewness of leave-one-out medians.
    """
    x = _as_1d(sample)
    n = x.size
    if n < 2:
        raise ValueError("bootstrap needs at least 2 observations")
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    point = float(np.median(x))
    rng = np.random.default_rng(seed)
    meds = np.empty(n_boot)
    chunk = max(1, 2_000_000 // n)
    for start in range(0, n_boot, chunk):
        stop = min(n_boot, start + chunk)
        idx = rng.integers(0, n, size=(stop - start, n))
        meds[start:stop] = np.median(x[idx], axis=1)

    if np.all(meds == meds[0]):
        return BootstrapEstimate(point, point, point, n_boot, confidence, degenerate=True)

    below = np.count_nonzero(meds < point) + 0.5 * np.count_nonzero(meds == point)
    prop = min(max(below / n_boot, 0.5 / n_boot), 1 - 0.5 / n_boot)
    z0 = special.ndtri(prop)

    jack = _jackknife_medians(np.sort(x))
    dev = jack.mean() - jack
    spread = np.max(np.abs(dev))
    if spread > 0:
        dev = dev / spread  # scale-free, avoids underflow in denom ** 1.5
        accel = float(np.sum(dev ** 3) / (6.0 * np.sum(dev ** 2) ** 1.5))
    else:
        accel = 0.0

    alpha = (1 - confidence) / 2
    zq = special.ndtri(np.array([alpha, 1 - alpha]))
    adj = special.ndtr(z0 + (z0 + zq) / (1 - accel * (z0 + zq)))
    if np.isnan(adj).any():
        warnings.warn("BCa adjustment undefined; falling back to percentile interval")
        adj = np.array([alpha, 1 - alpha])
    lo, hi = np.quantile(meds, adj)
    return BootstrapEstimate(point, float(lo), float(hi), n_boot, confidence)
