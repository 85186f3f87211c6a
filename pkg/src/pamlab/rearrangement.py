"""Symmetric-decreasing rearrangement on Z and comparison inequalities.

The integers are well-ordered spirally around the origin
(0, 1, -1, 2, -2, ...).  The rearrangement of a nonnegative finitely
supported function sorts its nonzero values in decreasing order along
that ranking; the rearrangement of a finite set is the initial segment of
the same ranking.  On top of these sit three checkable inequalities:
bilinear sums against non-increasing kernels, short chain sums, and the
domination of lattice local-time exponential moments by a one-dimensional
walk on rearranged projections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, RangeError
from .walk import STBox

REL_SLACK = 2.0 ** -40


def spiral_rank(sites):
    """Position of each integer in the spiral order 0, 1, -1, 2, -2, ..."""
    s = np.asarray(sites, dtype=np.int64)
    return np.where(s > 0, 2 * s - 1, -2 * s)


def spiral_site(ranks):
    """Inverse of spiral_rank: the integer occupying each rank."""
    r = np.asarray(ranks, dtype=np.int64)
    if np.any(r < 0):
        raise RangeError("ranks are nonnegative")
    return np.where(r % 2 == 1, (r + 1) // 2, -(r // 2))


def rearrange_set(sites):
    """Initial spiral segment with the same cardinality (sorted ascending)."""
    s = np.unique(np.asarray(sites, dtype=np.int64))
    return np.sort(spiral_site(np.arange(s.size)))


@dataclass(frozen=True)
class FiniteFunction:
    """Nonnegative function on Z with finite support, stored in spiral order."""

    sites: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sites, dtype=np.int64)
        v = np.asarray(self.values, dtype=float)
        if s.shape != v.shape or s.ndim != 1:
            raise ContractError("sites and values must be matching 1-d arrays")
        if np.unique(s).size != s.size:
            raise ConfigError("support sites must be distinct")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ConfigError("values must be finite and nonnegative")
        order = np.argsort(spiral_rank(s), kind="stable")
        object.__setattr__(self, "sites", s[order])
        object.__setattr__(self, "values", v[order])

    @property
    def support_size(self):
        return int((self.values > 0).sum())

    def rearranged(self):
        """Decreasing rearrangement: values sorted down the spiral ranks."""
        keep = self.values > 0
        v = np.sort(self.values[keep])[::-1]
        return FiniteFunction(spiral_site(np.arange(v.size)), v)

    def as_dict(self):
        return {int(x): float(v) for x, v in zip(self.sites, self.values)}

    def level_set(self, thr):
        """Sites where the function strictly exceeds ``thr``."""
        return np.sort(self.sites[self.values > thr])


def rearrange_fn(sites, values):
    """Functional form of the decreasing rearrangement (drops zeros)."""
    f = FiniteFunction(np.asarray(sites), np.asarray(values)).rearranged()
    return f.sites, f.values


def _kernel_at(K, dist):
    K = np.asarray(K, dtype=float)
    out = np.zeros(dist.shape)
    inside = dist < K.size
    out[inside] = K[dist[inside]]
    return out


def _validate_kernel(K):
    K = np.asarray(K, dtype=float)
    if K.ndim != 1 or K.size == 0:
        raise ContractError("kernel must be a nonempty 1-d array over distances")
    if np.any(K < 0) or not np.all(np.isfinite(K)):
        raise ConfigError("kernel values must be finite and nonnegative")
    if np.any(np.diff(K) > 0):
        raise ConfigError("kernel must be non-increasing in distance")
    return K


def riesz_pair_sum(f, K, g):
    """sum_{x,y} f(x) K(|x-y|) g(y), accumulated in spiral-rank order."""
    K = np.asarray(K, dtype=float)
    acc = 0.0
    for x, fx in zip(f.sites, f.values):
        if fx == 0.0:
            continue
        dist = np.abs(int(x) - g.sites)
        acc += fx * float(_kernel_at(K, dist) @ g.values)
    return acc


def riesz_check(f, g, K):
    """Bilinear-sum comparison against the rearranged pair.

    For nonnegative f, g and a non-increasing kernel the rearranged side
    dominates; equality within floating slack counts as holding.
    """
    K = _validate_kernel(K)
    lhs = riesz_pair_sum(f, K, g)
    rhs = riesz_pair_sum(f.rearranged(), K, g.rearranged())
    holds = lhs <= rhs * (1.0 + REL_SLACK) + 1e-300
    return {"lhs": lhs, "rhs": rhs, "holds": bool(holds)}


def chain_sum(funcs, kernels):
    """sum over x_1..x_n of f_1(x_1) K_1(|x_1-x_2|) ... f_n(x_n)."""
    if len(funcs) != len(kernels) + 1:
        raise ContractError("a chain of n functions needs n-1 kernels")
    vec = funcs[-1].values.copy()
    sites = funcs[-1].sites
    for f, K in zip(reversed(funcs[:-1]), reversed(kernels)):
        K = np.asarray(K, dtype=float)
        nxt = np.empty(f.sites.size)
        for i, x in enumerate(f.sites):
            dist = np.abs(int(x) - sites)
            nxt[i] = f.values[i] * float(_kernel_at(K, dist) @ vec)
        vec, sites = nxt, f.sites
    return float(vec.sum())


def multisum_check(funcs, kernels):
    """Chain-sum comparison (up to three functions) against rearrangements."""
    if not 1 <= len(funcs) <= 3:
        raise ConfigError("chain checks cover one to three functions")
    for K in kernels:
        _validate_kernel(K)
    lhs = chain_sum(funcs, kernels)
    rhs = chain_sum([f.rearranged() for f in funcs], kernels)
    holds = lhs <= rhs * (1.0 + REL_SLACK) + 1e-300
    return {"lhs": lhs, "rhs": rhs, "holds": bool(holds)}


# -- local-time exponential moments -----------------------------------


def project_block(box):
    """First-axis shadow of a space-time box, rearranged to a centred range.

    Returns a one-dimensional STBox over the initial spiral segment with
    the same width and the same time face.
    """
    lo, hi = box.space[0]
    if hi <= lo:
        return STBox(space=((0, 0),), t0=box.t0, t1=box.t1)
    seg = rearrange_set(np.arange(lo, hi))
    return STBox(space=((int(seg[0]), int(seg[-1]) + 1),), t0=box.t0, t1=box.t1)


def _blocks_potential_schedule(blocks, gammas, box, t):
    """Schedule for V(x, s) = sum_i gamma_i 1{(x, s) in B_i} on ``box``."""
    from .oracle import PotentialSchedule

    cuts = {0.0, float(t)}
    for b in blocks:
        for edge in (b.t0, b.t1):
            if 0.0 < edge < t:
                cuts.add(float(edge))
    bp = np.array(sorted(cuts))
    coords = box.all_coords()
    values = np.zeros((bp.size - 1, coords.shape[0]))
    for b, g in zip(blocks, gammas):
        in_space = np.ones(coords.shape[0], dtype=bool)
        for ax, (lo, hi) in enumerate(b.space):
            in_space &= (coords[:, ax] >= lo) & (coords[:, ax] < hi)
        for j in range(bp.size - 1):
            if b.t0 <= bp[j] and bp[j + 1] <= b.t1:
                values[j, in_space] += g
    return PotentialSchedule(bp, values)


def _dim_limits(d):
    return {1: 4000, 2: 250, 3: 31}.get(d, 15)


def localtime_mgf_check(blocks, gammas, kappa, t, rel_tol=1e-9):
    """Exponential-moment domination by the one-dimensional rearranged shadow.

    LHS: E_0[exp sum_i gamma_i l_t(B_i)] for the rate-2dk walk, evaluated
    exactly on an absorbing box (truncation can only lower it).  RHS: the
    same functional for the rate-2k one-dimensional walk with each block
    replaced by its rearranged first-axis shadow, evaluated on a periodic
    box (wrapping can only raise it).  Both truncations point in the safe
    direction, so LHS <= RHS * (1 + rel_tol) is a sound check.  For a
    single block the unrearranged shadow is also computed as the
    intermediate step and both half-inequalities are reported.
    """
    from .oracle import BoxDomain, fk_expectation

    if not blocks:
        raise ConfigError("need at least one block")
    d = blocks[0].d
    gammas = [float(g) for g in gammas]
    if len(gammas) != len(blocks):
        raise ContractError("one coefficient per block")
    if any(g < 0 for g in gammas):
        raise ConfigError("coefficients must be nonnegative")
    for b in blocks:
        if b.d != d:
            raise ContractError("blocks must share one dimension")
        if b.t0 < 0 or b.t1 > t:
            raise RangeError("block time faces must sit inside [0, t]")

    ext = 0
    for b in blocks:
        for lo, hi in b.space:
            ext = max(ext, abs(int(lo)), abs(int(hi) - 1))
    spread = int(math.ceil(3.0 * math.sqrt(max(kappa * t, 1.0))))
    L_lhs = min(ext + spread + 3, _dim_limits(d))
    box_lhs = BoxDomain(tuple((-L_lhs, L_lhs + 1) for _ in range(d)),
                        boundary="dirichlet")
    sched = _blocks_potential_schedule(blocks, gammas, box_lhs, t)
    origin = np.zeros(d, dtype=np.int64)
    lhs = fk_expectation(box_lhs, kappa, sched, start=origin, weight="ones",
                         reversed_time=False)

    shadows = [project_block(b) for b in blocks]
    ext1 = max(max(abs(s.space[0][0]), abs(s.space[0][1] - 1)) for s in shadows)
    L_rhs = min(ext1 + 2 * spread + 8, 40_000)
    box_rhs = BoxDomain(((-L_rhs, L_rhs + 1),), boundary="torus")
    sched_r = _blocks_potential_schedule(shadows, gammas, box_rhs, t)
    rhs = fk_expectation(box_rhs, kappa, sched_r, start=np.zeros(1, dtype=np.int64),
                         weight="ones", reversed_time=False)

    out = {"lhs": lhs, "rhs": rhs, "kappa": kappa, "t": t,
           "n_blocks": len(blocks), "holds": bool(lhs <= rhs * (1.0 + rel_tol))}
    if len(blocks) == 1:
        raw = STBox(space=((blocks[0].space[0][0], blocks[0].space[0][1]),),
                    t0=blocks[0].t0, t1=blocks[0].t1)
        mid_upper = fk_expectation(box_rhs, kappa,
                                   _blocks_potential_schedule([raw], gammas, box_rhs, t),
                                   start=np.zeros(1, dtype=np.int64),
                                   weight="ones", reversed_time=False)
        box_mid = BoxDomain(((-L_rhs, L_rhs + 1),), boundary="dirichlet")
        mid_lower = fk_expectation(box_mid, kappa,
                                   _blocks_potential_schedule([raw], gammas, box_mid, t),
                                   start=np.zeros(1, dtype=np.int64),
                                   weight="ones", reversed_time=False)
        out["mid"] = mid_upper
        out["projection_holds"] = bool(lhs <= mid_upper * (1.0 + rel_tol))
        out["rearrangement_holds"] = bool(mid_lower <= rhs * (1.0 + rel_tol))
        out["holds"] = out["holds"] and out["projection_holds"] \
            and out["rearrangement_holds"]
    return out


# -- randomized property corpus ---------------------------------------


def _random_function(rng, max_sites=40, span=60):
    """Random finite nonnegative function, zeros sprinkled in on purpose."""
    n = int(rng.integers(1, max_sites + 1))
    sites = rng.choice(np.arange(-span, span + 1), size=n, replace=False)
    values = rng.exponential(1.0, n)
    values[rng.random(n) < 0.2] = 0.0
    return FiniteFunction(sites, values)


def _random_kernel(rng):
    n = int(rng.integers(1, 30))
    if rng.random() < 0.5:
        vals = np.sort(rng.exponential(1.0, n))[::-1]
    else:
        vals = rng.uniform(0.5, 3.0) * np.exp(-rng.uniform(0.05, 1.0) * np.arange(n))
    if rng.random() < 0.15:
        vals = np.full(n, float(vals[0]))
    return vals


def _dominating_function(rng, f, span=80):
    """A random g with g >= f pointwise (extra mass and extra sites)."""
    extra = rng.choice(np.arange(-span, span + 1),
                       size=int(rng.integers(0, 8)), replace=False)
    gmap = f.as_dict()
    for s in extra:
        gmap.setdefault(int(s), 0.0)
    keys = np.array(sorted(gmap), dtype=np.int64)
    bump = rng.exponential(0.5, keys.size) * (rng.random(keys.size) < 0.7)
    vals = np.array([gmap[int(k)] for k in keys]) + bump
    return FiniteFunction(keys, vals)


def function_property_check(f, g, thresholds):
    """Exact checks: equimeasurability, spiral level sets, idempotence,
    and rankwise monotonicity of the rearrangement against g >= f."""
    fr = f.rearranged()
    ok = np.array_equal(np.sort(f.values[f.values > 0]), np.sort(fr.values))
    for a in thresholds:
        ok = ok and f.level_set(a).size == fr.level_set(a).size
        ls = fr.level_set(a)
        ok = ok and np.array_equal(ls, np.sort(spiral_site(np.arange(ls.size))))
    frr = fr.rearranged()
    ok = ok and np.array_equal(fr.sites, frr.sites)
    ok = ok and np.array_equal(fr.values, frr.values)
    gr = g.rearranged()
    m = fr.values.size
    ok = ok and gr.values.size >= m and bool(np.all(fr.values <= gr.values[:m]))
    return bool(ok)


def rearrangement_corpus(n_functions=10_000, n_riesz=10_000, n_multisum=1_000,
                         seed=0):
    """Run the randomized property suite; collects (ideally zero) violations."""
    rng = np.random.default_rng(seed)
    bad = []
    for i in range(n_functions):
        f = _random_function(rng)
        g = _dominating_function(rng, f)
        thr = (0.0, float(rng.exponential(1.0)))
        if not function_property_check(f, g, thr):
            bad.append({"check": "function", "index": i})
    for i in range(n_riesz):
        f = _random_function(rng, max_sites=25)
        g = _random_function(rng, max_sites=25)
        r = riesz_check(f, g, _random_kernel(rng))
        if not r["holds"]:
            bad.append({"check": "riesz", "index": i,
                        "lhs": r["lhs"], "rhs": r["rhs"]})
    for i in range(n_multisum):
        n = int(rng.integers(1, 4))
        funcs = [_random_function(rng, max_sites=20) for _ in range(n)]
        kernels = [_random_kernel(rng) for _ in range(n - 1)]
        r = multisum_check(funcs, kernels)
        if not r["holds"]:
            bad.append({"check": "multisum", "index": i,
                        "lhs": r["lhs"], "rhs": r["rhs"]})
    return {"n_functions": n_functions, "n_riesz": n_riesz,
            "n_multisum": n_multisum, "violations": bad,
            "holds": not bad}


def random_localtime_instance(rng, d, t=2.0, max_blocks=3):
    """Random block family plus rates for the local-time moment check."""
    n = int(rng.integers(1, max_blocks + 1))
    blocks, gammas = [], []
    for _ in range(n):
        space = []
        for _ax in range(d):
            lo = int(rng.integers(-6, 3))
            width = int(rng.integers(1, 6 if d == 1 else 4))
            space.append((lo, lo + width))
        a = float(rng.uniform(0.0, 0.7 * t))
        b = min(float(rng.uniform(a + 0.15, t)), t - 1e-9)
        blocks.append(STBox(space=tuple(space), t0=a, t1=b))
        gammas.append(float(rng.uniform(0.3, 1.2)))
    return blocks, gammas
