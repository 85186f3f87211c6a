import math

import numpy as np
import pytest

from pamlab import (
    ConfigError,
    ContractError,
    EnvConfig,
    NestedIntervals,
    RangeError,
    lattice_laplacian,
    neumann_gap,
    poisson_tail,
    sample_env,
    swept_top_eigenvalue,
    top_eigenvalue,
    verify_eigenvalue_bound,
    verify_fk_spectral_bound,
    verify_localtime_eigen_bound,
    verify_neumann_properties,
)
from pamlab.spectral import second_eigenvalue_dense


def test_lattice_laplacian_shapes():
    lap = lattice_laplacian((3, 4), "dirichlet")
    assert lap.shape == (12, 12)
    dense = lap.toarray()
    assert np.array_equal(dense, dense.T)
    assert np.all(dense.diagonal() == -4)
    neu = lattice_laplacian((3, 4), "neumann").toarray()
    assert not np.array_equal(dense, neu)


def test_dirichlet_chain_closed_form_dense_and_tridiagonal():
    for n in (9, 5000):  # n = 5000 exercises the tridiagonal branch
        lap = lattice_laplacian((n,), "dirichlet")
        want = -2.0 * (1.0 - math.cos(math.pi / (n + 1)))
        assert np.isclose(top_eigenvalue(lap), want, rtol=1e-9, atol=1e-12)


def test_lanczos_square_closed_form():
    n = 90  # 8100 sites forces the sparse path
    lap = lattice_laplacian((n, n), "dirichlet")
    want = -4.0 * (1.0 - math.cos(math.pi / (n + 1)))
    assert np.isclose(top_eigenvalue(lap), want, rtol=1e-8)


def test_single_site_operator():
    lap = lattice_laplacian((1,), "dirichlet")
    assert top_eigenvalue(lap) == -2.0


def test_neumann_gap_values():
    assert np.isclose(neumann_gap((3,)), 1.0, atol=1e-12)
    assert np.isclose(neumann_gap((2,)), 2.0, atol=1e-12)
    # product structure: the gap of a square equals the 1-d gap
    assert np.isclose(neumann_gap((3, 3)), 1.0, atol=1e-10)
    with pytest.raises(ConfigError):
        second_eigenvalue_dense(lattice_laplacian((70, 70)))


def test_swept_defect_eigenvalue():
    # single attractive site of strength c: lambda_1 = sqrt(c^2+4) - 2
    lam, radius, history = swept_top_eigenvalue(1.0, [[0]], [2.0], 1)
    assert np.isclose(lam, 2.0 * math.sqrt(2.0) - 2.0, rtol=1e-7)
    lams = [h[1] for h in history]
    assert all(a <= b + 1e-12 for a, b in zip(lams, lams[1:]))  # from below
    assert radius >= 2


def test_verify_neumann_properties_shapes():
    for shape in ((5,), (3, 3), (2, 2, 2)):
        out = verify_neumann_properties(shape, n_fields=40, n_partitions=5, seed=2)
        assert out["ok"], out
        assert out["n_sites"] == int(np.prod(shape))


def test_verify_eigenvalue_bound_small():
    recs = verify_eigenvalue_bound(n_instances=2, d=1, delta=0.05, seed=3)
    assert len(recs) == 2
    for rec in recs:
        assert rec["ok"], rec
        assert np.isclose(rec["kappa_suff"], 10.8, rtol=1e-12)
        assert rec["eta"] == pytest.approx(1.0)
        assert set(rec["lambda_at"]) == {"1.0", "1.5", "2.0"}
        assert all(v <= 4 * 0.05 + 1e-8 for v in rec["lambda_at"].values())
    with pytest.raises(ConfigError):
        verify_eigenvalue_bound(1, 1, 0.3, 0)


def test_verify_fk_spectral_bound_frozen_field():
    vals = tuple(((s,), 0.3) for s in (-1, 0, 1))
    cfg = EnvConfig(kind="frozen", d=1, L=4, T=1.0, seed=0, frozen_values=vals)
    traj = sample_env(cfg)
    out = verify_fk_spectral_bound(traj, kappa=2.0, t=1.0, m=2)
    assert out["holds"] and out["ordering_ok"]
    assert out["radius_Q"] == 1
    assert len(out["slices"]) == 2
    assert out["lhs_log"] <= out["rhs"] + 1e-9
    with pytest.raises(ConfigError):
        verify_fk_spectral_bound(traj, kappa=1.0, t=1.0, m=2)
    with pytest.raises(RangeError):
        verify_fk_spectral_bound(traj, kappa=8.0, t=1.0, m=2)
    with pytest.raises(RangeError):
        verify_fk_spectral_bound(traj, kappa=2.0, t=5.0, m=2)


def test_nested_intervals_complexity():
    nested = NestedIntervals(radii=(1, 2), betas=(1.0, 0.5))
    want = 3.0 * 1.5 ** 1.5 + 2.0 * 0.5 ** 1.5
    assert np.isclose(nested.complexity(), want, rtol=1e-12)
    xs = np.arange(-3, 4)
    assert np.allclose(nested.potential(xs),
                       [0.0, 0.5, 1.5, 1.5, 1.5, 0.5, 0.0])
    with pytest.raises(ConfigError):
        NestedIntervals(radii=(2, 1), betas=(1.0, 1.0))
    with pytest.raises(ConfigError):
        NestedIntervals(radii=(1,), betas=(0.0,))
    with pytest.raises(ContractError):
        NestedIntervals(radii=(1, 2), betas=(1.0,))


def test_localtime_eigen_bound_runs():
    nested = NestedIntervals(radii=(1,), betas=(0.8,))
    out = verify_localtime_eigen_bound(nested, kappa=2.0, ts=(2.0, 4.0),
                                       n_trials=300, seed=1)
    assert out["holds"] and out["decreasing"] and out["quotients_dominated"]
    assert out["best_quotient"] <= out["mu"] + 1e-9
    assert len(out["eps"]) == 2 and out["eps"][1] <= out["eps"][0] + 1e-10
    assert out["complexity"] == pytest.approx(3 * 0.8 ** 1.5)


def test_poisson_tail_exact_and_bound():
    out = poisson_tail(1.0, 4)
    assert np.isclose(out["exact"], 0.018988156876153808, rtol=1e-10)
    assert np.isclose(out["bound"], math.exp(-1.0) * (math.e / 4.0) ** 4, rtol=1e-12)
    assert out["ok"] and out["exact"] <= out["bound"]
    tighter = poisson_tail(1.0, 5)
    assert tighter["exact"] < out["exact"]
    with pytest.raises(RangeError):
        poisson_tail(1.0, 3)
