import math

import numpy as np
import pytest
from scipy import special, stats

from pamlab import (
    ConfigError,
    ContractError,
    EnvConfig,
    RangeError,
    STBox,
    WalkPath,
    count_block_crossings,
    fk_estimate_u,
    kappa_block_bound_check,
    local_time,
    lyapunov_sweep,
    maximal_inequality_check,
    path_integral,
    sample_env,
    sample_walk,
    sup_tail_bound,
)
from pamlab.environment import EnvTrajectory
from pamlab.walk import _sorted_uniform_times, auto_torus_radius


def _frozen(d=1, L=2, T=2.0, values=()):
    cfg = EnvConfig(kind="frozen", d=d, L=L, T=T, seed=0, frozen_values=values)
    return sample_env(cfg)


def _varying_env():
    # three sites on Z/3: site 0 switches from 0 to 3 at time 0.5
    cfg = EnvConfig(kind="frozen", d=1, L=1, T=1.0, seed=0, frozen_values=())
    offsets = np.array([0, 1, 3, 4])
    times = np.array([0.0, 0.0, 0.5, 0.0])
    values = np.array([1.0, 0.0, 3.0, -2.0])
    return EnvTrajectory(cfg, offsets, times, values)


def test_sample_walk_validates_and_reproduces():
    with pytest.raises(ConfigError):
        sample_walk(-1.0, 1.0, 1, 0)
    with pytest.raises(ConfigError):
        sample_walk(1.0, 0.0, 1, 0)
    p1 = sample_walk(2.0, 3.0, 2, 42)
    p2 = sample_walk(2.0, 3.0, 2, 42)
    assert np.array_equal(p1.jump_times, p2.jump_times)
    assert np.array_equal(p1.dirs, p2.dirs)
    assert np.all(np.diff(p1.jump_times) >= 0)
    assert p1.jump_times.min() >= 0 and p1.jump_times.max() <= 3.0
    assert p1.dirs.min() >= 0 and p1.dirs.max() < 4


def test_positions_by_hand():
    path = WalkPath(kappa=1.0, t=1.0, d=2,
                    jump_times=np.array([0.1, 0.2, 0.3, 0.4]),
                    dirs=np.array([1, 3, 0, 3], dtype=np.int8))
    want = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 2]])
    assert np.array_equal(path.positions(), want)
    assert path.n_jumps == 4


def test_path_integral_static_by_hand():
    traj = _frozen(values=(((0,), 2.0), ((1,), 0.25)))
    path = WalkPath(kappa=1.0, t=1.0, d=1,
                    jump_times=np.array([0.3, 0.8]),
                    dirs=np.array([1, 0], dtype=np.int8))
    want = 2.0 * 0.3 + 0.25 * 0.5 + 2.0 * 0.2
    fwd = path_integral(path, traj, reverse=False)
    rev = path_integral(path, traj, reverse=True)
    assert np.isclose(fwd, want, rtol=1e-13)
    # a static field cannot distinguish the two time orientations
    assert fwd == rev


def test_path_integral_reversed_orientation():
    traj = _varying_env()
    path = WalkPath(kappa=1.0, t=1.0, d=1,
                    jump_times=np.array([0.2, 0.9]),
                    dirs=np.array([1, 0], dtype=np.int8))
    fwd = path_integral(path, traj, reverse=False, allow_wrap=True)
    rev = path_integral(path, traj, reverse=True, allow_wrap=True)
    assert np.isclose(fwd, -2.0 * 0.7 + 3.0 * 0.1, rtol=1e-12)
    assert np.isclose(rev, 3.0 * 0.2 - 2.0 * 0.7, rtol=1e-12)


def test_path_integral_guards():
    traj = _frozen(L=2)
    far = WalkPath(kappa=1.0, t=1.0, d=1,
                   jump_times=np.linspace(0.1, 0.5, 5),
                   dirs=np.ones(5, dtype=np.int8))
    with pytest.raises(RangeError):
        path_integral(far, traj)
    assert path_integral(far, traj, allow_wrap=True) == 0.0
    wrong_d = WalkPath(kappa=1.0, t=1.0, d=2, jump_times=np.empty(0),
                       dirs=np.empty(0, dtype=np.int8))
    with pytest.raises(ContractError):
        path_integral(wrong_d, traj)
    late = WalkPath(kappa=1.0, t=5.0, d=1, jump_times=np.empty(0),
                    dirs=np.empty(0, dtype=np.int8))
    with pytest.raises(RangeError):
        path_integral(late, traj)


def test_local_time_by_hand():
    path = WalkPath(kappa=1.0, t=1.0, d=1,
                    jump_times=np.array([0.25, 0.5, 0.75]),
                    dirs=np.array([1, 1, 0], dtype=np.int8))
    box = STBox(space=((1, 3),), t0=0.3, t1=0.9)
    assert np.isclose(local_time(path, box), 0.6, rtol=1e-13)
    assert np.isclose(local_time(path, box, reverse=True), 0.45, rtol=1e-13)
    both = local_time(path, [box, STBox(space=((0, 1),), t0=0.0, t1=1.0)])
    assert both.shape == (2,)
    assert np.isclose(both[1], 0.25, rtol=1e-13)
    with pytest.raises(ContractError):
        local_time(path, STBox(space=((0, 1), (0, 1)), t0=0.0, t1=1.0))


def test_local_time_covers_horizon(rng):
    path = sample_walk(2.0, 3.0, 2, 11)
    whole = STBox(space=((-10 ** 6, 10 ** 6), (-10 ** 6, 10 ** 6)), t0=0.0, t1=3.0)
    assert np.isclose(local_time(path, whole), 3.0, rtol=1e-13)
    assert np.isclose(local_time(path, whole, reverse=True), 3.0, rtol=1e-13)


def test_block_crossings_by_hand():
    path = WalkPath(kappa=1.0, t=4.0, d=1,
                    jump_times=np.array([0.5, 1.0, 1.5, 2.5]),
                    dirs=np.array([1, 1, 1, 1], dtype=np.int8))
    for mode in ("reentry", "distinct"):
        cc = count_block_crossings(path, A=2, alpha=1.0, R=1, mode=mode)
        assert cc.k_star == 3
        assert np.array_equal(cc.per_slab, [1, 2])
    still = WalkPath(kappa=1.0, t=4.0, d=1, jump_times=np.empty(0),
                     dirs=np.empty(0, dtype=np.int8))
    assert count_block_crossings(still, A=2).k_star == 2
    with pytest.raises(ConfigError):
        count_block_crossings(path, A=2, mode="bogus")
    with pytest.raises(ConfigError):
        count_block_crossings(path, A=1.0)


def test_kappa_block_bound_random_paths():
    for seed in range(10):
        path = sample_walk(4.0, 8.0, 1, seed)
        rec = kappa_block_bound_check(path, A=4, mode="distinct")
        assert rec["holds"], rec
    slow = sample_walk(0.5, 8.0, 1, 0)
    with pytest.raises(ContractError):
        kappa_block_bound_check(slow, A=4)


def test_sorted_uniform_times_layout():
    rng = np.random.default_rng(5)
    counts = np.array([3, 0, 5, 1, 0, 2], dtype=np.int64)
    rep_off = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    t = 2.5
    jt = _sorted_uniform_times(rng, counts, rep_off, int(rep_off[-1]), t)
    assert jt.size == counts.sum()
    assert jt.min() > 0 and jt.max() < t
    for r in range(counts.size):
        seg = jt[rep_off[r]:rep_off[r + 1]]
        assert np.all(np.diff(seg) >= 0)


def test_sorted_uniform_times_distribution():
    # pooled order statistics of uniforms are uniform
    rng = np.random.default_rng(10)
    counts = np.full(200, 40, dtype=np.int64)
    rep_off = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    jt = _sorted_uniform_times(rng, counts, rep_off, int(rep_off[-1]), 3.0)
    assert stats.kstest(jt / 3.0, "uniform").pvalue > 0.01


def test_fk_kappa_zero_is_exact():
    traj = _frozen(values=(((0,), 0.7),))
    est = fk_estimate_u(traj, 0.0, 2.0, 100, seed=0)
    assert est.log_mean == traj.integral([0], 0.0, 2.0)
    assert est.value == math.exp(est.log_mean)
    assert est.se_log == 0.0 and est.n_kept == 100 and not est.degenerate


def test_fk_return_probability_matches_bessel():
    # zero field: the delta0 estimator reduces to P(X(1) = 0)
    cfg = EnvConfig(kind="frozen", d=1, L=14, T=1.0, seed=1, frozen_values=())
    traj = sample_env(cfg)
    n = 40_000
    est = fk_estimate_u(traj, 1.0, 1.0, n, seed=7)
    p0 = math.exp(-2.0) * special.i0(2.0)
    se = math.sqrt(p0 * (1 - p0) / n)
    assert abs(est.value - p0) < 4 * se
    assert np.isclose(est.value, est.n_kept / n, rtol=1e-12)


def test_fk_estimate_determinism():
    traj = _frozen(L=8, values=(((0,), 0.5), ((1,), -0.25)))
    a = fk_estimate_u(traj, 0.7, 1.5, 2000, seed=123)
    b = fk_estimate_u(traj, 0.7, 1.5, 2000, seed=123)
    assert a.log_mean == b.log_mean and a.ci == b.ci and a.n_kept == b.n_kept
    c = fk_estimate_u(traj, 0.7, 1.5, 2000, seed=124)
    assert c.log_mean != a.log_mean
    with pytest.raises(ConfigError):
        fk_estimate_u(traj, 0.7, 1.5, 100, seed=0, u0="gauss")
    with pytest.raises(RangeError):
        fk_estimate_u(traj, 0.7, 99.0, 100, seed=0)


def test_sup_tail_bound_and_radius():
    assert sup_tail_bound(0.0, 1.0, 1.0) == 2.0
    cs = np.arange(0.5, 8.0, 0.5)
    vals = [sup_tail_bound(c, 2.0, 3.0) for c in cs]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert auto_torus_radius([0.0], 5.0, 1, 1000) == 1
    small = auto_torus_radius([1.0], 1.0, 1, 100)
    big = auto_torus_radius([4.0], 1.0, 1, 100)
    assert 1 <= small <= big


def test_lyapunov_sweep_rows():
    env_cfg = EnvConfig(kind="spin-markov", d=1, L=1, T=2.0, seed=9)
    rows, cfg = lyapunov_sweep(env_cfg, (0.0, 0.5), t=2.0, replicas=500, walk_seed=3)
    assert [r.kappa for r in rows] == [0.0, 0.5]
    traj = sample_env(cfg)
    assert rows[0].lambda_hat == traj.integral([0], 0.0, 2.0) / 2.0
    assert rows[0].stderr == 0.0
    assert rows[1].n_kept > 0 and math.isfinite(rows[1].lambda_hat)
    assert rows[1].stderr > 0
    assert cfg.L >= env_cfg.L and cfg.T >= 2.0


def test_maximal_inequality_probe():
    recs = maximal_inequality_check([(1.0, 1.0, 3.0), (2.0, 2.0, 4.0)],
                                    n_paths=2000, seed=1)
    assert len(recs) == 2
    for r in recs:
        assert 0.0 <= r["p_hat"] <= 1.0
        assert r["holds"]
    again = maximal_inequality_check([(1.0, 1.0, 3.0), (2.0, 2.0, 4.0)],
                                     n_paths=2000, seed=1)
    assert [r["p_hat"] for r in again] == [r["p_hat"] for r in recs]
