"""Small shared helpers: seeding, log-domain statistics, intervals, hashing."""

from __future__ import annotations

import hashlib
import math

import numpy as np

from .errors import ContractError

# two-sided 95% normal quantile, used by every Wilson interval in the package
Z95 = 1.959963984540054


def rng_from(seed):
    """Return a Generator for ``seed`` (int or SeedSequence)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed, n):
    """Deterministically derive ``n`` child seed sequences from ``seed``."""
    return np.random.SeedSequence(seed).spawn(n)


def wilson_interval(successes, trials, z=Z95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ContractError("wilson_interval needs trials >= 1")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    # analytically the interval always contains p; round-off dust at the
    # extremes (0 or n successes) must not break that
    return max(0.0, min(center - half, p)), min(1.0, max(center + half, p))


def log_mean_exp(a, count=None):
    """Stable log of the arithmetic mean of exp(a).

    ``a`` may contain -inf entries (zero weights).  ``count`` overrides the
    divisor, defaulting to len(a).  Returns (log_mean, se_log, n_finite)
    where se_log is the delta-method standard error of the log mean.
    """
    a = np.asarray(a, dtype=np.float64)
    n = a.size if count is None else int(count)
    if n <= 0:
        raise ContractError("log_mean_exp needs a positive count")
    finite = a[np.isfinite(a)]
    if finite.size == 0:
        return -np.inf, np.nan, 0
    m = float(finite.max())
    w = np.exp(finite - m)
    s1 = float(w.sum())
    s2 = float(np.square(w).sum())
    log_mean = m + math.log(s1) - math.log(n)
    if n > 1:
        # sd(weights)/ (mean * sqrt(n)); the exp(m) scale cancels
        var = max(s2 - s1 * s1 / n, 0.0) / (n - 1)
        se_log = math.sqrt(var) * math.sqrt(n) / s1
    else:
        se_log = np.nan
    return log_mean, se_log, int(finite.size)


def bootstrap_log_mean_ci(a, rng, n_boot=200, level=0.95, count=None):
    """Percentile bootstrap CI for log_mean_exp(a); resamples whole entries."""
    a = np.asarray(a, dtype=np.float64)
    n = a.size if count is None else int(count)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, a.size, a.size)
        stats[b] = log_mean_exp(a[idx], count=n)[0]
    lo = float(np.quantile(stats, (1 - level) / 2))
    hi = float(np.quantile(stats, 1 - (1 - level) / 2))
    return lo, hi


def poisson_sf_exact(lam, k):
    """P(N >= k) for N ~ Poisson(lam), by forward series summation.

    Starts at the term j = k and accumulates until the remainder is
    negligible relative to the partial sum; stable for tails down to the
    underflow threshold.
    """
    if lam < 0:
        raise ContractError("poisson rate must be >= 0")
    k = int(k)
    if k <= 0:
        return 1.0
    # log of the first term e^{-lam} lam^k / k!
    if lam == 0.0:
        return 0.0
    log_term = -lam + k * math.log(lam) - math.lgamma(k + 1)
    if log_term < -745.0:  # below exp underflow; the sum is dominated by term ratios
        # sum the series in log space: total = term * (1 + r1 + r1 r2 + ...)
        ratio_sum = 1.0
        prod = 1.0
        j = k
        while True:
            prod *= lam / (j + 1)
            ratio_sum += prod
            j += 1
            if prod < 1e-18 * ratio_sum or j > k + 2000:
                break
        return math.exp(log_term + math.log(ratio_sum)) if log_term + math.log(ratio_sum) > -745 else 0.0
    term = math.exp(log_term)
    total = term
    j = k
    while True:
        term *= lam / (j + 1)
        total += term
        j += 1
        if term < 1e-18 * total or j > k + 100000:
            break
    return total


def poisson_tail_bound(lam, k):
    """Chernoff-style bound e^{-lam} (lam e)^k / k^k, valid for k > 2*lam + 1."""
    k = int(k)
    if k <= 0:
        raise ContractError("tail bound needs k >= 1")
    log_b = -lam + k * (1.0 + math.log(lam) - math.log(k))
    return math.exp(log_b)


def canonical_float(x):
    """Shortest round-trip decimal form, used in every text artifact."""
    return repr(float(x))


def config_digest(items):
    """Stable short hash of a mapping (sorted key=value lines)."""
    lines = "\n".join(f"{k}={items[k]}" for k in sorted(items))
    return hashlib.sha256(lines.encode("utf-8")).hexdigest()[:16]
