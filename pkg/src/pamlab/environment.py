"""Dynamic random environments on a torus, stored as per-site event lists.

An environment is a field xi(x, s) on the centered box [-L, L]^d (periodic
boundary) for s in [0, T], piecewise constant and right-continuous in time.
Supported kinds:

``spin-markov``
    Independent copies of a finite-state Markov chain at every site,
    started from the stationary law.
``zero-range``
    Zero-range particle system with jump rate g(k) = k^beta and symmetric
    nearest-neighbour routing, started from the stationary product measure
    with marginal p(k) proportional to rho^k / (k!)^beta; the field is the
    occupation number.
``random-walks``
    A Poisson(rho) cloud of independent rate-2d simple random walks; the
    field is gamma * occupation - shift.
``frozen``
    Time-constant values from an explicit site map (default 0).

Trajectories are exact: each site stores its event times (first one at 0),
values, and the running integral, so time integrals and windowed suprema
are evaluated without discretization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, NumericError, RangeError, ResourceError
from .util import rng_from, wilson_interval

_KINDS = ("spin-markov", "zero-range", "random-walks", "frozen")


@dataclass(frozen=True)
class EnvConfig:
    """Parameters of one environment draw."""

    kind: str
    d: int
    L: int
    T: float
    seed: int
    spin_states: tuple = (-1.0, 1.0)
    spin_rates: tuple = ((0.0, 1.0), (1.0, 0.0))
    zr_rho: float = 1.0
    zr_beta: float = 1.0
    rw_rho: float = 1.0
    rw_gamma: float = 1.0
    rw_shift: float = 0.0
    frozen_values: tuple = ()
    max_events: int = 50_000_000

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown environment kind {self.kind!r}")
        if self.d < 1:
            raise ConfigError("dimension must be >= 1")
        if self.L < 1:
            raise ConfigError("torus radius L must be >= 1")
        if not (self.T > 0):
            raise ConfigError("horizon T must be > 0")
        if self.kind == "spin-markov":
            k = len(self.spin_states)
            if k < 2 or len(self.spin_rates) != k:
                raise ConfigError("spin chain needs >=2 states and a square rate matrix")
            for i, row in enumerate(self.spin_rates):
                if len(row) != k:
                    raise ConfigError("spin rate matrix must be square")
                for j, q in enumerate(row):
                    if i != j and not (q > 0):
                        raise ConfigError("spin transition rates must be strictly positive")
        if self.kind == "zero-range":
            if not (self.zr_rho > 0):
                raise ConfigError("zero-range density rho must be > 0")
            if not (0 < self.zr_beta <= 1):
                raise ConfigError("zero-range exponent beta must lie in (0, 1]")
        if self.kind == "random-walks" and not (self.rw_rho > 0):
            raise ConfigError("walk-cloud density rho must be > 0")

    @property
    def side(self):
        return 2 * self.L + 1

    @property
    def n_sites(self):
        return self.side ** self.d

    def to_dict(self):
        out = {
            "kind": self.kind, "d": self.d, "L": self.L, "T": self.T, "seed": self.seed,
        }
        if self.kind == "spin-markov":
            out["spin_states"] = list(self.spin_states)
            out["spin_rates"] = [list(r) for r in self.spin_rates]
        elif self.kind == "zero-range":
            out["zr_rho"] = self.zr_rho
            out["zr_beta"] = self.zr_beta
        elif self.kind == "random-walks":
            out["rw_rho"] = self.rw_rho
            out["rw_gamma"] = self.rw_gamma
            out["rw_shift"] = self.rw_shift
        elif self.kind == "frozen":
            out["frozen_values"] = [[list(c), v] for c, v in self.frozen_values]
        return out

    @classmethod
    def from_dict(cls, data):
        kw = dict(data)
        if "spin_states" in kw:
            kw["spin_states"] = tuple(kw["spin_states"])
        if "spin_rates" in kw:
            kw["spin_rates"] = tuple(tuple(r) for r in kw["spin_rates"])
        if "frozen_values" in kw:
            kw["frozen_values"] = tuple((tuple(int(x) for x in c), float(v))
                                        for c, v in kw["frozen_values"])
        return cls(**kw)


class EnvTrajectory:
    """One realized environment: flat per-site event arrays plus geometry."""

    def __init__(self, config, offsets, times, values):
        self.config = config
        self.d = config.d
        self.L = config.L
        self.T = float(config.T)
        self.side = config.side
        self.n_sites = config.n_sites
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.times = np.asarray(times, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.offsets.size != self.n_sites + 1:
            raise ConfigError("offset table does not match the site count")
        self.cumint = self._running_integrals()
        self._ekeys = None
        self._strides = self.side ** np.arange(self.d - 1, -1, -1, dtype=np.int64)

    def _running_integrals(self):
        cum = np.zeros_like(self.times)
        for s in range(self.n_sites):
            lo, hi = self.offsets[s], self.offsets[s + 1]
            if hi - lo < 1 or self.times[lo] != 0.0:
                raise ConfigError("every site needs a first event at time 0")
            dt = np.diff(self.times[lo:hi])
            if dt.size and dt.min() <= 0:
                raise ConfigError("event times must be strictly increasing per site")
            cum[lo + 1:hi] = np.cumsum(self.values[lo:hi - 1] * dt)
        return cum

    # -- site geometry -------------------------------------------------

    def site_index(self, x):
        """Flat index of lattice point ``x``, reduced modulo the torus."""
        row = (np.asarray(x, dtype=np.int64) + self.L) % self.side
        return int(row @ self._strides)

    def site_coords(self, idx):
        """Inverse of site_index, as a tuple in [-L, L]^d."""
        out = []
        for s in self._strides:
            out.append(int(idx // s) - self.L)
            idx = idx % s
        return tuple(out)

    # -- pointwise queries ---------------------------------------------

    def _slice(self, x):
        i = self.site_index(x)
        return self.offsets[i], self.offsets[i + 1]

    def env_value(self, x, s):
        """Field value at site x and time s (right-continuous)."""
        if not (0.0 <= s <= self.T):
            raise RangeError(f"time {s} outside the horizon [0, {self.T}]")
        lo, hi = self._slice(x)
        j = lo + np.searchsorted(self.times[lo:hi], s, side="right") - 1
        return float(self.values[j])

    def sup_window(self, x, s, w):
        """sup of the field at x over the window [s, s+w)."""
        if w < 0:
            raise RangeError("window width must be >= 0")
        if not (0.0 <= s and s + w <= self.T):
            raise RangeError(f"window [{s}, {s + w}) escapes the horizon [0, {self.T}]")
        lo, hi = self._slice(x)
        a = lo + np.searchsorted(self.times[lo:hi], s, side="right") - 1
        b = lo + np.searchsorted(self.times[lo:hi], s + w, side="left")
        if b <= a:
            b = a + 1
        return float(self.values[a:b].max())

    def integral(self, x, a, b):
        """Exact time integral of the field at x over [a, b]."""
        if not (0.0 <= a <= b <= self.T):
            raise RangeError("integration interval escapes the horizon")
        lo, hi = self._slice(x)
        tl = self.times[lo:hi]

        def F(s):
            j = lo + np.searchsorted(tl, s, side="right") - 1
            return self.cumint[j] + self.values[j] * (s - self.times[j])

        return float(F(b) - F(a))

    def site_events(self, x):
        """(times, values) arrays of the event list at site x (views)."""
        lo, hi = self._slice(x)
        return self.times[lo:hi], self.values[lo:hi]

    def time_average(self, x, a, b):
        if b <= a:
            raise RangeError("time_average needs a < b")
        return self.integral(x, a, b) / (b - a)

    @property
    def n_events(self):
        return self.times.size

    def flat(self):
        """Arrays consumed by the kernels module."""
        if self._ekeys is None:
            ek = np.empty(self.times.size, dtype=[("s", "<i8"), ("t", "<f8")])
            ek["s"] = np.repeat(np.arange(self.n_sites), np.diff(self.offsets))
            ek["t"] = self.times
            self._ekeys = ek
        return (self.offsets, self.times, self.values, self.cumint,
                self._ekeys, self.side, self.L, self.d)


# -- sampling ----------------------------------------------------------


def spin_stationary(rates):
    """Stationary distribution of the finite-state chain with given rates."""
    q = np.asarray(rates, dtype=np.float64).copy()
    k = q.shape[0]
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    a = np.vstack([q.T, np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    if pi.min() < -1e-12:
        raise NumericError("stationary distribution came out negative; chain not irreducible?")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def zr_marginal(rho, beta, tol=1e-14, max_k=100_000):
    """(pmf array, mean) of the zero-range stationary marginal."""
    log_terms = [0.0]
    k = 0
    log_t = 0.0
    log_rho = math.log(rho)
    while True:
        k += 1
        log_t += log_rho - beta * math.log(k)
        log_terms.append(log_t)
        if k > 3 and log_t < max(log_terms) + math.log(tol) and log_t < log_terms[-2]:
            break
        if k >= max_k:
            raise NumericError("zero-range marginal series did not truncate")
    m = max(log_terms)
    terms = np.exp(np.array(log_terms) - m)
    pmf = terms / terms.sum()
    mean = float(np.arange(pmf.size) @ pmf)
    return pmf, mean


def _estimated_events(config):
    n, T = config.n_sites, config.T
    if config.kind == "spin-markov":
        q = np.asarray(config.spin_rates, dtype=float).copy()
        np.fill_diagonal(q, 0.0)
        return n * T * float(q.sum(axis=1).max()) + n
    if config.kind == "zero-range":
        pmf, _ = zr_marginal(config.zr_rho, config.zr_beta)
        mean_rate = float(np.arange(pmf.size) ** config.zr_beta @ pmf)
        return 2.0 * n * T * mean_rate + n
    if config.kind == "random-walks":
        return 2.0 * config.rw_rho * n * (2 * config.d * T + 1) + n
    return float(n)


def sample_env(config):
    """Draw one trajectory for ``config``; deterministic in config.seed."""
    est = _estimated_events(config)
    if est > config.max_events:
        raise ResourceError(
            f"estimated {est:.3g} events exceeds the budget {config.max_events}; "
            "shrink the box or horizon, or raise max_events")
    rng = rng_from(config.seed)
    if config.kind == "spin-markov":
        site_ev = _sample_spin(config, rng)
    elif config.kind == "zero-range":
        site_ev = _sample_zero_range(config, rng)
    elif config.kind == "random-walks":
        site_ev = _sample_random_walks(config, rng)
    else:
        site_ev = _sample_frozen(config)
    offsets = np.zeros(config.n_sites + 1, dtype=np.int64)
    for i, (ts, _vs) in enumerate(site_ev):
        offsets[i + 1] = offsets[i] + len(ts)
    times = np.concatenate([np.asarray(ts, dtype=float) for ts, _ in site_ev])
    values = np.concatenate([np.asarray(vs, dtype=float) for _, vs in site_ev])
    return EnvTrajectory(config, offsets, times, values)


def _sample_spin(config, rng):
    vals = np.asarray(config.spin_states, dtype=float)
    q = np.asarray(config.spin_rates, dtype=float).copy()
    np.fill_diagonal(q, 0.0)
    out_rate = q.sum(axis=1)
    qmax = float(out_rate.max())
    cum = np.cumsum(q, axis=1)
    pi = spin_stationary(config.spin_rates)
    T = config.T
    start = rng.choice(len(vals), size=config.n_sites, p=pi)
    site_ev = []
    for i in range(config.n_sites):
        s = int(start[i])
        ts, vs = [0.0], [vals[s]]
        t = 0.0
        # thinned chain at rate qmax; one uniform decides accept + target
        while t < T:
            n_est = int(qmax * (T - t) * 1.25) + 8
            gaps = rng.exponential(1.0 / qmax, n_est)
            us = rng.random(n_est)
            done = False
            for g, u in zip(gaps, us):
                t += g
                if t >= T:
                    done = True
                    break
                r = u * qmax
                if r < out_rate[s]:
                    s = int(np.searchsorted(cum[s], r, side="right"))
                    ts.append(t)
                    vs.append(vals[s])
            if done:
                break
        site_ev.append((ts, vs))
    return site_ev


class _Fenwick:
    """Binary indexed tree over nonnegative site rates."""

    def __init__(self, vals):
        self.n = len(vals)
        self.tree = np.zeros(self.n + 1)
        for i, v in enumerate(vals):
            self.update(i, v)

    def update(self, i, delta):
        i += 1
        while i <= self.n:
            self.tree[i] += delta
            i += i & (-i)

    def total(self):
        return self._prefix(self.n)

    def _prefix(self, i):
        s = 0.0
        while i > 0:
            s += self.tree[i]
            i -= i & (-i)
        return float(s)

    def find(self, u):
        """Smallest index i with prefix_sum(i+1) > u."""
        idx = 0
        bit = 1 << (self.n.bit_length())
        while bit:
            nxt = idx + bit
            if nxt <= self.n and self.tree[nxt] <= u:
                u -= self.tree[nxt]
                idx = nxt
            bit >>= 1
        return min(idx, self.n - 1)


def _neighbor_table(config):
    """(n_sites, 2d) table of wrapped neighbour flat indices."""
    side, d, L = config.side, config.d, config.L
    n = config.n_sites
    strides = side ** np.arange(d - 1, -1, -1, dtype=np.int64)
    idx = np.arange(n, dtype=np.int64)
    coords = np.empty((n, d), dtype=np.int64)
    rem = idx.copy()
    for j, s in enumerate(strides):
        coords[:, j] = rem // s
        rem = rem % s
    table = np.empty((n, 2 * d), dtype=np.int64)
    for a in range(d):
        for sgn, col in ((-1, 2 * a), (1, 2 * a + 1)):
            c = coords.copy()
            c[:, a] = (c[:, a] + sgn) % side
            table[:, col] = c @ strides
    return table


def _sample_zero_range(config, rng):
    pmf, _ = zr_marginal(config.zr_rho, config.zr_beta)
    cdf = np.cumsum(pmf)
    eta = np.searchsorted(cdf, rng.random(config.n_sites), side="right").astype(np.int64)
    beta = config.zr_beta
    T = config.T
    nbr = _neighbor_table(config)
    g = eta.astype(float) ** beta
    fen = _Fenwick(g)
    site_ev = [([0.0], [float(eta[i])]) for i in range(config.n_sites)]
    t = 0.0
    n_rec = 0
    updates = 0
    while True:
        tot = fen.total()
        if tot <= 0.0:
            break
        t += rng.exponential(1.0 / tot)
        if t >= T:
            break
        x = fen.find(rng.random() * tot)
        y = int(nbr[x, rng.integers(0, 2 * config.d)])
        gx_old, gy_old = eta[x] ** beta, eta[y] ** beta
        eta[x] -= 1
        eta[y] += 1
        fen.update(x, eta[x] ** beta - gx_old)
        fen.update(y, eta[y] ** beta - gy_old)
        site_ev[x][0].append(t)
        site_ev[x][1].append(float(eta[x]))
        site_ev[y][0].append(t)
        site_ev[y][1].append(float(eta[y]))
        n_rec += 2
        updates += 2
        if updates >= 1 << 15:
            fen = _Fenwick(eta.astype(float) ** beta)
            updates = 0
        if n_rec > 4 * config.max_events:
            raise ResourceError("zero-range event budget exhausted mid-run")
    return site_ev


def _sample_random_walks(config, rng):
    gamma, shift, T, d = config.rw_gamma, config.rw_shift, config.T, config.d
    counts = rng.poisson(config.rw_rho, config.n_sites)
    nbr = _neighbor_table(config)
    delta_t = [[] for _ in range(config.n_sites)]
    delta_v = [[] for _ in range(config.n_sites)]
    for home in range(config.n_sites):
        for _ in range(int(counts[home])):
            nj = int(rng.poisson(2 * d * T))
            if nj == 0:
                continue
            jt = np.sort(rng.random(nj) * T)
            dirs = rng.integers(0, 2 * d, nj)
            pos = home
            for tt, dd in zip(jt, dirs):
                nxt = int(nbr[pos, dd])
                delta_t[pos].append(tt)
                delta_v[pos].append(-1)
                delta_t[nxt].append(tt)
                delta_v[nxt].append(1)
                pos = nxt
    site_ev = []
    for i in range(config.n_sites):
        ts = np.asarray(delta_t[i])
        dv = np.asarray(delta_v[i], dtype=np.int64)
        order = np.argsort(ts, kind="stable")
        occ = counts[i] + np.cumsum(dv[order]) if ts.size else np.empty(0)
        times = [0.0] + list(ts[order])
        vals = [gamma * counts[i] - shift] + [gamma * o - shift for o in occ]
        site_ev.append((times, vals))
    return site_ev


def _sample_frozen(config):
    value_map = {tuple(c): v for c, v in config.frozen_values}
    side, L, d = config.side, config.L, config.d
    site_ev = []
    for i in range(config.n_sites):
        rem = i
        coords = []
        for s in (side ** np.arange(d - 1, -1, -1, dtype=np.int64)):
            coords.append(int(rem // s) - L)
            rem = rem % s
        site_ev.append(([0.0], [float(value_map.get(tuple(coords), 0.0))]))
    return site_ev


# -- model means -------------------------------------------------------


def env_mean(config):
    """Exact stationary mean of the field for ``config``."""
    if config.kind == "spin-markov":
        pi = spin_stationary(config.spin_rates)
        return float(np.asarray(config.spin_states, dtype=float) @ pi)
    if config.kind == "zero-range":
        _, mean = zr_marginal(config.zr_rho, config.zr_beta)
        return mean
    if config.kind == "random-walks":
        return config.rw_gamma * config.rw_rho - config.rw_shift
    value_map = {tuple(c): v for c, v in config.frozen_values}
    total = sum(value_map.values())
    return total / config.n_sites


# -- import / export ---------------------------------------------------

FORMAT_TAG = "pamlab-env 1"


def export_env(traj, path):
    """Write a trajectory as text: header plus one ``coords time value`` line per event."""
    cfg_json = json.dumps(traj.config.to_dict(), sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {FORMAT_TAG}\n")
        fh.write(f"# config {cfg_json}\n")
        fh.write(f"# events {traj.n_events}\n")
        for i in range(traj.n_sites):
            coords = ",".join(str(c) for c in traj.site_coords(i))
            lo, hi = traj.offsets[i], traj.offsets[i + 1]
            for j in range(lo, hi):
                fh.write(f"{coords} {float(traj.times[j])!r} {float(traj.values[j])!r}\n")


def import_env(path):
    """Inverse of export_env; validates the header and event ordering."""
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.readline().strip()
        if head != f"# {FORMAT_TAG}":
            raise ConfigError(f"not a {FORMAT_TAG} file: {path}")
        cfg_line = fh.readline().strip()
        if not cfg_line.startswith("# config "):
            raise ConfigError("missing config header line")
        config = EnvConfig.from_dict(json.loads(cfg_line[len("# config "):]))
        count_line = fh.readline().strip()
        if not count_line.startswith("# events "):
            raise ConfigError("missing events header line")
        n_events = int(count_line[len("# events "):])
        per_site = {}
        for line in fh:
            cs, ts, vs = line.split()
            coords = tuple(int(c) for c in cs.split(","))
            per_site.setdefault(coords, ([], []))
            per_site[coords][0].append(float(ts))
            per_site[coords][1].append(float(vs))
    offsets = np.zeros(config.n_sites + 1, dtype=np.int64)
    times, values = [], []
    probe = EnvTrajectory(config, *_empty_arrays(config))
    for i in range(config.n_sites):
        coords = probe.site_coords(i)
        ts, vs = per_site.get(coords, ([], []))
        offsets[i + 1] = offsets[i] + len(ts)
        times.extend(ts)
        values.extend(vs)
    if offsets[-1] != n_events:
        raise ConfigError("event count header does not match the body")
    return EnvTrajectory(config, offsets, np.asarray(times), np.asarray(values))


def _empty_arrays(config):
    n = config.n_sites
    offsets = np.arange(n + 1, dtype=np.int64)
    return offsets, np.zeros(n), np.zeros(n)


# -- growth-condition probe -------------------------------------------


def growth_tail_exponent(d):
    """Tail exponent required of box averages, (2d(2d+1)+1)(d+2)/d."""
    return (2 * d * (2 * d + 1) + 1) * (d + 2) / d


def verify_growth_condition(config, C, R, reps, seed=None):
    """Empirical P(sup over [0,1] of the B_R average >= C) vs |B_R|^{-alpha_tail}.

    Draws ``reps`` fresh environments (box radius >= R, horizon >= 1) and
    reports the tail frequency with a Wilson interval against the
    polynomial bound.  The verdict is advisory: the bound is an asymptotic
    constants-included statement, so a desk-scale run can only be
    consistent, inconclusive, or (strongly) violated.
    """
    d = config.d
    if config.T < 1.0:
        raise ConfigError("growth probe needs horizon T >= 1")
    box_sites = _box_sites(R, d)
    n_box = len(box_sites)
    alpha_tail = growth_tail_exponent(d)
    bound = float(n_box) ** (-alpha_tail)
    hits = 0
    sups = []
    base = config.seed if seed is None else seed
    child_seeds = np.random.SeedSequence(base).generate_state(reps)
    for child in child_seeds:
        cfg = replace(config, L=max(config.L, R), seed=int(child),
                      max_events=config.max_events)
        traj = sample_env(cfg)
        sup = _sup_box_average(traj, box_sites)
        sups.append(sup)
        if sup >= C:
            hits += 1
    lo, hi = wilson_interval(hits, reps)
    if hi <= bound:
        verdict = "consistent"
    elif lo > bound:
        verdict = "violated"
    else:
        verdict = "inconclusive"
    return {
        "C": C, "R": R, "reps": reps, "box_sites": n_box,
        "alpha_tail": alpha_tail, "bound": bound,
        "hits": hits, "p_hat": hits / reps, "wilson_lo": lo, "wilson_hi": hi,
        "sup_mean": float(np.mean(sups)), "verdict": verdict,
    }


def _box_sites(R, d):
    axes = [np.arange(-R, R + 1)] * d
    grid = np.meshgrid(*axes, indexing="ij")
    return [tuple(int(g.flat[i]) for g in grid) for i in range(grid[0].size)]


def _sup_box_average(traj, box_sites):
    """sup over s in [0, 1] of the spatial average of the field on the box."""
    n = len(box_sites)
    running = 0.0
    deltas_t, deltas_v = [], []
    for x in box_sites:
        ts, vs = traj.site_events(x)
        running += vs[0]
        inside = (ts > 0.0) & (ts <= 1.0)
        idx = np.nonzero(inside)[0]
        if idx.size:
            deltas_t.append(ts[idx])
            deltas_v.append(vs[idx] - vs[idx - 1])
    best = running
    if deltas_t:
        all_t = np.concatenate(deltas_t)
        all_v = np.concatenate(deltas_v)
        order = np.argsort(all_t, kind="stable")
        running_sum = running + np.cumsum(all_v[order])
        best = max(best, float(running_sum.max()))
    return best / n
