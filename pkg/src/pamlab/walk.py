"""Continuous-time random walks and Monte Carlo Feynman-Kac estimation.

Walks start at the origin and jump at rate 2*d*kappa to a uniform nearest
neighbour.  The Feynman-Kac estimator accumulates exp of the exact path
integral of the environment along each sampled path, queried at reversed
time t - s, and averages in the log domain.  Endpoint weighting follows
the localized initial condition (indicator of the origin) by default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ConfigError, ContractError, RangeError
from .util import bootstrap_log_mean_ci, log_mean_exp, rng_from

_KERN = kernels.get_kernels()


@dataclass(frozen=True)
class STBox:
    """Axis-aligned space-time box: integer site ranges x a time interval.

    ``space`` holds per-axis half-open integer ranges (lo, hi); the time
    face is [t0, t1).
    """

    space: tuple
    t0: float
    t1: float

    @property
    def d(self):
        return len(self.space)

    def contains_site(self, pos):
        return all(lo <= p < hi for (lo, hi), p in zip(self.space, pos))

    @property
    def n_sites(self):
        n = 1
        for lo, hi in self.space:
            n *= max(0, hi - lo)
        return n


@dataclass
class WalkPath:
    """One sampled trajectory: jump times plus direction codes axis*2+(step>0)."""

    kappa: float
    t: float
    d: int
    jump_times: np.ndarray
    dirs: np.ndarray

    @property
    def n_jumps(self):
        return self.jump_times.size

    def positions(self):
        """(n_jumps+1, d) array of unwrapped positions, starting at 0."""
        disp = np.zeros((self.n_jumps, self.d), dtype=np.int64)
        axis = self.dirs >> 1
        sign = np.where((self.dirs & 1) == 1, 1, -1)
        disp[np.arange(self.n_jumps), axis] = sign
        return np.vstack([np.zeros((1, self.d), dtype=np.int64), np.cumsum(disp, axis=0)])


def sample_walk(kappa, t, d, seed):
    """Draw one rate-2dk walk on Z^d over [0, t]."""
    if kappa < 0 or t <= 0 or d < 1:
        raise ConfigError("sample_walk needs kappa >= 0, t > 0, d >= 1")
    rng = rng_from(seed)
    n = int(rng.poisson(2 * d * kappa * t))
    jt = np.sort(rng.random(n) * t)
    dirs = rng.integers(0, 2 * d, n, dtype=np.int8)
    return WalkPath(kappa=float(kappa), t=float(t), d=d, jump_times=jt, dirs=dirs)


def _flat_single(path):
    rep_off = np.array([0, path.n_jumps], dtype=np.int64)
    return path.jump_times, path.dirs, rep_off


def path_integral(path, traj, reverse=True, allow_wrap=False):
    """Exact integral of the environment along the path.

    With ``reverse`` the field is read at time t - s (the Feynman-Kac
    orientation); otherwise at s.  The walk must stay inside the
    trajectory box unless ``allow_wrap`` accepts periodic wrapping.
    """
    if path.d != traj.d:
        raise ContractError("path and trajectory dimensions differ")
    if path.t > traj.T + 1e-12:
        raise RangeError(f"path horizon {path.t} exceeds trajectory horizon {traj.T}")
    jt, dirs, rep_off = _flat_single(path)
    vals, _end, mx = _KERN["fk_path_integrals"](traj.flat(), jt, dirs, rep_off,
                                                path.t, reverse)
    if not allow_wrap and int(mx[0]) > traj.L:
        raise RangeError(
            f"path reaches sup-norm distance {int(mx[0])} but the trajectory box "
            f"has radius {traj.L}; enlarge L")
    return float(vals[0])


def local_time(path, boxes, reverse=False):
    """Time the path spends in each space-time box (array, one per box).

    With ``reverse`` the occupation is measured in the reversed-time frame:
    the box clock runs as t - s while the path clock runs as s.
    """
    single = isinstance(boxes, STBox)
    if single:
        boxes = [boxes]
    pos = path.positions()
    jt = np.concatenate([[0.0], path.jump_times, [path.t]])
    out = np.zeros(len(boxes))
    for bi, box in enumerate(boxes):
        if box.d != path.d:
            raise ContractError("box dimension does not match the path")
        acc = 0.0
        for i in range(pos.shape[0]):
            u0, u1 = jt[i], jt[i + 1]
            if u1 <= u0:
                continue
            if not box.contains_site(pos[i]):
                continue
            if reverse:
                a = max(u0, path.t - box.t1)
                b = min(u1, path.t - box.t0)
            else:
                a = max(u0, box.t0)
                b = min(u1, box.t1)
            if b > a:
                acc += b - a
        out[bi] = acc
    return float(out[0]) if single else out


# -- block-crossing counts --------------------------------------------


@dataclass
class CrossingCounts:
    """Slab-by-slab block entry counts and their total."""

    k_star: int
    per_slab: np.ndarray
    mode: str


def count_block_crossings(path, A, alpha=1.0, R=1, mode="reentry"):
    """Count level-R block columns entered per time slab.

    Spatial cells are the width 2*alpha*A^R tiles [2q*s, (2q+2)*s); time
    slabs have length A^R.  In ``reentry`` mode each entry into a cell
    different from the current one counts again; in ``distinct`` mode each
    cell counts once per slab.  The slab's initial cell always counts.
    """
    if mode not in ("reentry", "distinct"):
        raise ConfigError(f"unknown crossing mode {mode!r}")
    if A <= 1 or alpha <= 0:
        raise ConfigError("need A > 1 and alpha > 0")
    s = alpha * float(A) ** R
    slab = float(A) ** R
    pos = path.positions()
    cells = np.floor(pos / (2.0 * s)).astype(np.int64)
    jt = path.jump_times
    n_slabs = max(1, int(math.ceil(path.t / slab - 1e-12)))
    per_slab = np.zeros(n_slabs, dtype=np.int64)
    for i in range(n_slabs):
        lo_t, hi_t = i * slab, min((i + 1) * slab, path.t)
        # segment active at the slab start, plus jumps strictly inside
        j0 = int(np.searchsorted(jt, lo_t, side="right"))
        j1 = int(np.searchsorted(jt, hi_t, side="left"))
        seq = cells[j0:j1 + 1]
        if mode == "reentry":
            changes = int(np.any(np.diff(seq, axis=0) != 0, axis=1).sum())
            per_slab[i] = 1 + changes
        else:
            per_slab[i] = len({tuple(c) for c in seq})
    return CrossingCounts(k_star=int(per_slab.sum()), per_slab=per_slab, mode=mode)


def kappa_block_bound_check(path, A, mode="distinct"):
    """Per-path check: kappa-scaled block crossings vs 2t/A + 3 k*/sqrt(kappa).

    The scaled blocks use aspect sqrt(kappa).  In distinct mode the bound
    is a theorem for every nearest-neighbour path; re-entry mode is only
    guaranteed when sqrt(kappa) is an integer (cell boundaries align), so
    callers restrict it accordingly.  Assumes t is a multiple of A.
    """
    if path.kappa < 1:
        raise ContractError("scaled-block comparison needs kappa >= 1")
    base = count_block_crossings(path, A, alpha=1.0, mode=mode)
    scaled = count_block_crossings(path, A, alpha=math.sqrt(path.kappa), mode=mode)
    bound = 2.0 * path.t / A + 3.0 * base.k_star / math.sqrt(path.kappa)
    return {
        "k_star": base.k_star,
        "k_star_scaled": scaled.k_star,
        "bound": bound,
        "holds": scaled.k_star <= bound + 1e-9,
        "mode": mode,
    }


# -- Feynman-Kac Monte Carlo ------------------------------------------


@dataclass
class FkEstimate:
    """Monte Carlo estimate of the Feynman-Kac average u(0, t)."""

    value: float
    ci: tuple
    log_mean: float
    se_log: float
    t: float
    kappa: float
    replicas: int
    n_kept: int
    u0: str
    degenerate: bool
    seed: int


def _sorted_uniform_times(rng, counts, rep_off, total, t):
    """Per-replica sorted uniform jump times, drawn without sorting.

    Given the jump counts, the order statistics of n uniforms on [0, t]
    are the first n partial sums of n+1 exponential spacings divided by
    their total; this is a flat vectorized pass over all replicas.
    """
    n = counts.size
    e = rng.standard_exponential(total + n)
    cum = np.cumsum(e)
    # replica r owns slots [rep_off[r]+r, rep_off[r+1]+r], the last being
    # the extra spacing that never becomes a jump time
    starts = rep_off[:-1] + np.arange(n)
    ends = rep_off[1:] + np.arange(n)
    base = np.where(starts > 0, cum[starts - 1], 0.0)
    totals = cum[ends] - base
    keep = np.ones(total + n, dtype=bool)
    keep[ends] = False
    rep_idx = np.repeat(np.arange(n), counts)
    return t * (cum[keep] - base[rep_idx]) / totals[rep_idx]


def fk_estimate_u(traj, kappa, t, replicas, seed, u0="delta0", allow_wrap=False,
                  n_boot=200, target_chunk_jumps=16_000_000):
    """Estimate u(0, t) by averaging exp(path integral) over sampled walks.

    ``u0`` selects the endpoint weight: ``delta0`` keeps only paths ending
    at the origin (localized initial condition), ``ones`` keeps all
    (flat initial condition).  Averaging is done in the log domain with a
    delta-method standard error and a percentile bootstrap CI on log u.
    """
    if u0 not in ("delta0", "ones"):
        raise ConfigError(f"unknown initial-condition mode {u0!r}")
    if t > traj.T + 1e-12:
        raise RangeError(f"horizon {t} exceeds the trajectory horizon {traj.T}")
    if kappa < 0:
        raise ConfigError("kappa must be >= 0")
    d = traj.d
    if kappa == 0.0:
        integral = traj.integral(np.zeros(d, dtype=np.int64), 0.0, t)
        val = math.exp(integral)
        return FkEstimate(value=val, ci=(val, val), log_mean=integral, se_log=0.0,
                          t=t, kappa=0.0, replicas=replicas, n_kept=replicas,
                          u0=u0, degenerate=False, seed=seed)
    rng = rng_from(seed)
    lam = 2.0 * d * kappa * t
    counts = rng.poisson(lam, replicas).astype(np.int64)
    per = max(1.0, lam)
    chunk = int(np.clip(target_chunk_jumps / per, 1, replicas))
    env = traj.flat()
    center = traj.site_index(np.zeros(d, dtype=np.int64))
    integrals = np.empty(replicas)
    keep = np.ones(replicas, dtype=bool)
    worst = 0
    i0 = 0
    while i0 < replicas:
        i1 = min(i0 + chunk, replicas)
        c = counts[i0:i1]
        rep_off = np.concatenate([[0], np.cumsum(c)]).astype(np.int64)
        total = int(rep_off[-1])
        jt = _sorted_uniform_times(rng, c, rep_off, total, t)
        dirs = rng.integers(0, 2 * d, total, dtype=np.int8)
        vals, end, mx = _KERN["fk_path_integrals"](env, jt, dirs, rep_off, t, True)
        worst = max(worst, int(mx.max()) if mx.size else 0)
        if not allow_wrap and worst > traj.L:
            raise RangeError(
                f"a path reached sup-norm distance {worst} > L={traj.L}; "
                "enlarge the trajectory box")
        integrals[i0:i1] = vals
        if u0 == "delta0":
            keep[i0:i1] = end == center
        i0 = i1
    a = np.where(keep, integrals, -np.inf)
    log_mean, se_log, n_kept = log_mean_exp(a, count=replicas)
    if n_kept == 0:
        return FkEstimate(value=0.0, ci=(0.0, 0.0), log_mean=-np.inf, se_log=np.nan,
                          t=t, kappa=kappa, replicas=replicas, n_kept=0,
                          u0=u0, degenerate=True, seed=seed)
    lo, hi = bootstrap_log_mean_ci(a, rng, n_boot=n_boot, count=replicas)
    value = math.exp(log_mean) if log_mean < 700 else math.inf
    ci = (math.exp(lo) if lo < 700 else math.inf,
          math.exp(hi) if hi < 700 else math.inf)
    return FkEstimate(value=value, ci=ci, log_mean=log_mean, se_log=se_log,
                      t=t, kappa=kappa, replicas=replicas, n_kept=int(n_kept),
                      u0=u0, degenerate=False, seed=seed)


# -- Lyapunov sweep ----------------------------------------------------


@dataclass
class LyapunovEstimate:
    """Finite-time quenched Lyapunov exponent estimate at one kappa."""

    kappa: float
    t: float
    replicas: int
    lambda_hat: float
    stderr: float
    env_seed: int
    walk_seed: int
    n_kept: int = 0


def sup_tail_bound(C, kappa, t):
    """Upper bound on P(sup_{s<=t} |X^kappa(s)| >= C sqrt(kappa t)), one dimension."""
    if C <= 0:
        return 2.0
    root = math.sqrt(kappa * t)
    return 2.0 * math.exp(-(C * C * root) / (2.0 * (C + 3.0 * root)))


def auto_torus_radius(kappas, t, d, replicas, budget=1e-6):
    """Smallest box radius keeping the total escape probability under budget.

    Splits the budget over replicas and coordinates and inverts the
    sup-norm tail bound; the radius grows only like sqrt(log(1/budget)).
    """
    finite = [k for k in kappas if k > 0]
    if not finite:
        return 1
    per = budget / max(1, replicas * d * len(finite))
    L = 1
    for kappa in finite:
        root = math.sqrt(kappa * t)
        C = 0.5
        while sup_tail_bound(C, kappa, t) * 1.0 > per and C < 200:
            C += 0.25
        L = max(L, int(math.ceil(C * root)) + 1)
    return L


def lyapunov_sweep(env_config, kappas, t, replicas, walk_seed, escape_budget=1e-6):
    """Estimate the quenched Lyapunov exponent at each kappa on one environment.

    One trajectory is drawn (quenched disorder, shared across kappas) on a
    torus auto-sized so that walks stay inside with probability
    1 - escape_budget; kappa = 0 is evaluated exactly without sampling.
    """
    from .environment import sample_env  # local import to keep module load light

    if t <= 0 or replicas < 1:
        raise ConfigError("need t > 0 and replicas >= 1")
    L_needed = auto_torus_radius(kappas, t, env_config.d, replicas, escape_budget)
    cfg = replace(env_config, L=max(env_config.L, L_needed), T=max(env_config.T, t))
    traj = sample_env(cfg)
    walk_children = np.random.SeedSequence(walk_seed).generate_state(len(kappas))
    out = []
    for kappa, child in zip(kappas, walk_children):
        if kappa == 0.0:
            integral = traj.integral(np.zeros(cfg.d, dtype=np.int64), 0.0, t)
            out.append(LyapunovEstimate(kappa=0.0, t=t, replicas=replicas,
                                        lambda_hat=integral / t, stderr=0.0,
                                        env_seed=cfg.seed, walk_seed=int(child),
                                        n_kept=replicas))
            continue
        est = fk_estimate_u(traj, kappa, t, replicas, int(child), u0="delta0")
        lam_hat = est.log_mean / t if not est.degenerate else -math.inf
        stderr = est.se_log / t if not est.degenerate else math.nan
        out.append(LyapunovEstimate(kappa=float(kappa), t=t, replicas=replicas,
                                    lambda_hat=lam_hat, stderr=stderr,
                                    env_seed=cfg.seed, walk_seed=int(child),
                                    n_kept=est.n_kept))
    return out, cfg


# -- maximal-inequality probe -----------------------------------------


def maximal_inequality_check(entries, n_paths, seed):
    """Empirical sup-norm tail of the one-dimensional walk vs its bound.

    ``entries`` is a list of (kappa, t, C) triples.  For each, n_paths
    rate-2kappa walks are sampled and the frequency of
    sup |X(s)| >= C sqrt(kappa t) is compared against the explicit bound;
    the check allows 3 binomial standard errors of slack.
    """
    rng = rng_from(seed)
    records = []
    for kappa, t, C in entries:
        lam = 2.0 * kappa * t
        counts = rng.poisson(lam, n_paths).astype(np.int64)
        rep_off = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        total = int(rep_off[-1])
        steps = (rng.integers(0, 2, total, dtype=np.int8) * 2 - 1).astype(np.int8)
        mx = _KERN["walk_running_max_abs"](steps.astype(np.int64), rep_off)
        thr = C * math.sqrt(kappa * t)
        hits = int((mx >= thr).sum())
        p_hat = hits / n_paths
        se = math.sqrt(max(p_hat * (1 - p_hat), 1e-12) / n_paths)
        bound = sup_tail_bound(C, kappa, t)
        records.append({
            "kappa": kappa, "t": t, "C": C, "n_paths": n_paths,
            "p_hat": p_hat, "se": se, "bound": bound,
            "holds": p_hat <= bound + 3 * se,
        })
    return records
