"""Small-lattice reference solver for the heat equation with potential.

Solves du/dt = kappa * (lattice Laplacian) u + V(x, t) u on a finite box
by exact matrix-exponential propagation over the intervals where V is
constant in time.  Serves as the ground truth that the Monte Carlo
estimator is checked against, and as the engine for expectation-side
identities used elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from .errors import ConfigError, ContractError, NumericError, RangeError, ResourceError

_MAX_SITES = 262_144

_BOUNDARIES = ("dirichlet", "neumann", "torus")


@dataclass(frozen=True)
class BoxDomain:
    """Finite axis-aligned box of lattice sites with a boundary convention.

    ``ranges`` are per-axis half-open integer intervals (lo, hi).  The
    boundary selects the Laplacian: absorbing (dirichlet), reflecting
    (neumann, no flow across faces) or periodic (torus).
    """

    ranges: tuple
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.boundary not in _BOUNDARIES:
            raise ConfigError(f"unknown boundary {self.boundary!r}")
        if not self.ranges:
            raise ConfigError("box needs at least one axis")
        for lo, hi in self.ranges:
            if hi <= lo:
                raise ConfigError("each axis range must satisfy lo < hi")
        if self.n_sites > _MAX_SITES:
            raise ResourceError(f"box has {self.n_sites} sites, over the "
                                f"{_MAX_SITES} dense-solve budget")

    @property
    def d(self):
        return len(self.ranges)

    @property
    def shape(self):
        return tuple(hi - lo for lo, hi in self.ranges)

    @property
    def n_sites(self):
        n = 1
        for s in self.shape:
            n *= s
        return n

    def index(self, coords):
        """Flat row-major index of an absolute site coordinate."""
        idx = 0
        for (lo, hi), c in zip(self.ranges, coords):
            c = int(c)
            if not lo <= c < hi:
                raise RangeError(f"site {tuple(coords)} outside the box")
            idx = idx * (hi - lo) + (c - lo)
        return idx

    def all_coords(self):
        """(n_sites, d) array of absolute coordinates in flat order."""
        axes = [np.arange(lo, hi) for lo, hi in self.ranges]
        grid = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grid], axis=1)

    def laplacian(self):
        """Sparse nearest-neighbour Laplacian with integer entries (CSR)."""
        shape = self.shape
        n = self.n_sites
        idx = np.arange(n).reshape(shape)
        rows, cols = [], []
        wrap_diag = np.zeros(n, dtype=np.int64)
        for j in range(self.d):
            if shape[j] >= 2:
                src = np.moveaxis(idx, j, 0)[:-1].ravel()
                dst = np.moveaxis(idx, j, 0)[1:].ravel()
                rows += [src, dst]
                cols += [dst, src]
            if self.boundary == "torus":
                if shape[j] >= 2:
                    first = np.moveaxis(idx, j, 0)[0].ravel()
                    last = np.moveaxis(idx, j, 0)[-1].ravel()
                    rows += [first, last]
                    cols += [last, first]
                else:
                    wrap_diag += 2  # both jump directions land on the same site
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            data = np.ones(rows.size, dtype=np.int64)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            data = np.zeros(0, dtype=np.int64)
        adj = sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
        adj.sum_duplicates()
        if self.boundary == "neumann":
            degree = np.asarray(adj.sum(axis=1)).ravel()
            diag = -degree
        else:
            diag = np.full(n, -2 * self.d, dtype=np.int64) + wrap_diag
        return (adj + sparse.diags(diag, format="csr", dtype=np.int64)).tocsr()


@dataclass
class PotentialSchedule:
    """Piecewise time-constant potential: values[j] holds on [bp[j], bp[j+1])."""

    breakpoints: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.breakpoints.ndim != 1 or self.breakpoints.size < 2:
            raise ConfigError("schedule needs at least two breakpoints")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ConfigError("breakpoints must be strictly increasing")
        if self.values.shape[0] != self.breakpoints.size - 1:
            raise ContractError("values rows must match breakpoint intervals")

    @property
    def n_intervals(self):
        return self.breakpoints.size - 1

    @property
    def t0(self):
        return float(self.breakpoints[0])

    @property
    def t1(self):
        return float(self.breakpoints[-1])

    @classmethod
    def constant(cls, values, t0, t1):
        values = np.asarray(values, dtype=float)
        return cls(np.array([t0, t1]), values.reshape(1, -1))

    @classmethod
    def from_trajectory(cls, traj, box, t0=0.0, t1=None):
        """Exact schedule of a sampled environment restricted to a box.

        Box coordinates are taken on the trajectory's torus (wrapped), so
        any absolute box is admissible.
        """
        if t1 is None:
            t1 = traj.T
        if t0 < 0 or t1 > traj.T + 1e-12 or t1 <= t0:
            raise RangeError("schedule window must sit inside [0, T]")
        coords = box.all_coords()
        cuts = [np.array([t0, t1])]
        per_site = []
        for c in coords:
            times, vals = traj.site_events(c)
            per_site.append((times, vals))
            inner = times[(times > t0) & (times < t1)]
            if inner.size:
                cuts.append(inner)
        bp = np.unique(np.concatenate(cuts))
        values = np.empty((bp.size - 1, coords.shape[0]))
        for i, (times, vals) in enumerate(per_site):
            j = np.searchsorted(times, bp[:-1], side="right") - 1
            values[:, i] = vals[j]
        return cls(bp, values, meta={"source": "trajectory", "t0": t0, "t1": t1})


def _propagators(box, kappa, schedule):
    lap = box.laplacian()
    if schedule.values.shape[1] != box.n_sites:
        raise ContractError("schedule site count does not match the box")
    dts = np.diff(schedule.breakpoints)
    for j, dt in enumerate(dts):
        H = (kappa * lap + sparse.diags(schedule.values[j])).tocsr()
        yield j, float(dt), H


def solve_pam(box, kappa, schedule, u0, clamp=True):
    """Propagate u0 from schedule start to end; returns u(., t1).

    Intervals are applied in time order with exact sparse matrix
    exponentials.  Nonnegative inputs stay nonnegative up to roundoff;
    with ``clamp`` small negative drift is zeroed and a genuinely negative
    result raises.
    """
    vec = np.asarray(u0, dtype=float)
    if vec.shape != (box.n_sites,):
        raise ContractError("u0 must be a flat vector over the box sites")
    for _j, dt, H in _propagators(box, kappa, schedule):
        vec = expm_multiply(H * dt, vec)
    if clamp:
        floor = -1e-9 * max(1.0, float(np.abs(vec).max()))
        if vec.min() < floor:
            raise NumericError(f"propagated field went negative: min {vec.min():.3e}")
        vec = np.maximum(vec, 0.0)
    return vec


def _weight_vector(box, weight, origin):
    if isinstance(weight, str):
        if weight == "ones":
            return np.ones(box.n_sites)
        if weight == "delta0":
            w = np.zeros(box.n_sites)
            w[box.index(origin)] = 1.0
            return w
        raise ConfigError(f"unknown weight {weight!r}")
    w = np.asarray(weight, dtype=float)
    if w.shape != (box.n_sites,):
        raise ContractError("weight must be a flat vector over the box sites")
    return w


def fk_expectation(box, kappa, schedule, start=None, weight="ones",
                   reversed_time=True):
    """Exact path-expectation E_x[exp(int V) w(X(t))] on a finite box.

    With ``reversed_time`` the potential is read at t - s along the path
    (the orientation the Monte Carlo estimator uses), which corresponds to
    applying the interval propagators in forward schedule order.  With
    forward time the order flips.  Returns the full vector over starting
    points, or the entry at ``start``.
    """
    d = box.d
    vec = _weight_vector(box, weight, np.zeros(d, dtype=np.int64))
    props = list(_propagators(box, kappa, schedule))
    order = props if reversed_time else reversed(props)
    for _j, dt, H in order:
        vec = expm_multiply(H * dt, vec)
    if start is None:
        return vec
    return float(vec[box.index(start)])


def mc_vs_oracle_report(n_instances, d, L, t, kappas, replicas, seed):
    """Calibration study: Monte Carlo u(0, t) against the exact solver.

    Each instance freezes a uniform[-1, 1] potential on the torus of
    radius L; the walk wraps on the same torus so both sides share
    identical semantics.  Records a z-score per (instance, kappa).
    """
    from .environment import EnvConfig, sample_env
    from .walk import fk_estimate_u

    rng = np.random.default_rng(seed)
    inst_seeds = np.random.SeedSequence(seed).generate_state(n_instances * 2)
    side = 2 * L + 1
    box = BoxDomain(tuple((-L, L + 1) for _ in range(d)), boundary="torus")
    records = []
    for i in range(n_instances):
        vals = rng.uniform(-1.0, 1.0, side ** d)
        coords = box.all_coords()
        frozen = tuple((tuple(int(x) for x in c), float(v))
                       for c, v in zip(coords, vals))
        cfg = EnvConfig(kind="frozen", d=d, L=L, T=t, seed=int(inst_seeds[2 * i]),
                        frozen_values=frozen)
        traj = sample_env(cfg)
        schedule = PotentialSchedule.from_trajectory(traj, box, 0.0, t)
        for ki, kappa in enumerate(kappas):
            u0 = _weight_vector(box, "delta0", np.zeros(d, dtype=np.int64))
            exact = float(solve_pam(box, kappa, schedule, u0)[box.index(np.zeros(d))])
            walk_seed = int(np.random.SeedSequence(
                [int(inst_seeds[2 * i + 1]), ki]).generate_state(1)[0])
            est = fk_estimate_u(traj, kappa, t, replicas, walk_seed,
                                u0="delta0", allow_wrap=True)
            se_val = est.se_log * est.value if not est.degenerate else np.nan
            z = (est.value - exact) / se_val if se_val and se_val > 0 else np.nan
            records.append({
                "instance": i, "kappa": float(kappa), "t": t,
                "u_exact": exact, "u_mc": est.value, "se": se_val,
                "z": float(z), "n_kept": est.n_kept,
            })
    return records
