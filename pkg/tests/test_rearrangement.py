import math

import numpy as np
import pytest

from pamlab import (
    ConfigError,
    ContractError,
    FiniteFunction,
    RangeError,
    STBox,
    localtime_mgf_check,
    multisum_check,
    project_block,
    rearrange_fn,
    rearrangement_corpus,
    riesz_check,
)
from pamlab.rearrangement import (
    _dominating_function,
    _random_function,
    chain_sum,
    function_property_check,
    random_localtime_instance,
    rearrange_set,
    spiral_rank,
    spiral_site,
)


def test_spiral_order_round_trip():
    assert np.array_equal(spiral_rank([0, 1, -1, 2, -2]), [0, 1, 2, 3, 4])
    assert np.array_equal(spiral_site([0, 1, 2, 3, 4]), [0, 1, -1, 2, -2])
    sites = np.arange(-20, 21)
    assert np.array_equal(spiral_site(spiral_rank(sites)), sites)
    ranks = np.arange(41)
    assert np.array_equal(spiral_rank(spiral_site(ranks)), ranks)
    with pytest.raises(RangeError):
        spiral_site([-1])


def test_rearrange_set_initial_segment():
    assert np.array_equal(rearrange_set([5, 9, -3]), [-1, 0, 1])
    assert np.array_equal(rearrange_set([7]), [0])
    assert np.array_equal(rearrange_set([4, 4, 4]), [0])
    assert np.array_equal(rearrange_set(np.arange(3, 7)), [-1, 0, 1, 2])


def test_finite_function_storage_and_validation():
    f = FiniteFunction(np.array([2, 0, -1]), np.array([3.0, 1.0, 2.0]))
    assert np.array_equal(f.sites, [0, -1, 2])
    assert np.array_equal(f.values, [1.0, 2.0, 3.0])
    assert f.support_size == 3
    assert f.as_dict() == {0: 1.0, -1: 2.0, 2: 3.0}
    with pytest.raises(ContractError):
        FiniteFunction(np.array([0, 1]), np.array([1.0]))
    with pytest.raises(ConfigError):
        FiniteFunction(np.array([0, 0]), np.array([1.0, 1.0]))
    with pytest.raises(ConfigError):
        FiniteFunction(np.array([0]), np.array([-1.0]))
    with pytest.raises(ConfigError):
        FiniteFunction(np.array([0]), np.array([np.nan]))


def test_rearranged_by_hand():
    f = FiniteFunction(np.array([-3, 1, 4]), np.array([2.0, 5.0, 1.0]))
    fr = f.rearranged()
    assert np.array_equal(fr.sites, [0, 1, -1])
    assert np.array_equal(fr.values, [5.0, 2.0, 1.0])
    sites, values = rearrange_fn([0, 7], [0.0, 3.0])
    assert np.array_equal(sites, [0]) and np.array_equal(values, [3.0])


def test_level_sets_are_strict():
    f = FiniteFunction(np.array([4, 8]), np.array([1.0, 2.0]))
    assert np.array_equal(f.level_set(1.0), [8])
    assert np.array_equal(f.level_set(0.0), [4, 8])
    assert f.level_set(2.0).size == 0


def test_riesz_small_cases():
    point = FiniteFunction(np.array([5]), np.array([1.0]))
    same = riesz_check(point, point, np.array([1.0, 0.5]))
    assert same["lhs"] == same["rhs"] == 1.0 and same["holds"]
    f = FiniteFunction(np.array([0]), np.array([1.0]))
    g = FiniteFunction(np.array([1]), np.array([1.0]))
    shifted = riesz_check(f, g, np.array([1.0, 0.5]))
    assert shifted["lhs"] == 0.5 and shifted["rhs"] == 1.0 and shifted["holds"]


def test_riesz_kernel_validation():
    f = FiniteFunction(np.array([0]), np.array([1.0]))
    with pytest.raises(ConfigError):
        riesz_check(f, f, np.array([0.5, 1.0]))
    with pytest.raises(ConfigError):
        riesz_check(f, f, np.array([1.0, -0.5]))
    with pytest.raises(ContractError):
        riesz_check(f, f, np.empty(0))
    with pytest.raises(ContractError):
        riesz_check(f, f, np.ones((2, 2)))


def test_chain_sum_brute_force(rng):
    funcs = [_random_function(rng, max_sites=6, span=8) for _ in range(3)]
    k1 = np.array([2.0, 1.0, 0.25])
    k2 = np.array([1.5, 1.5])

    def at(K, r):
        return K[r] if r < K.size else 0.0

    brute = 0.0
    for x, fx in zip(funcs[0].sites, funcs[0].values):
        for y, gy in zip(funcs[1].sites, funcs[1].values):
            for z, hz in zip(funcs[2].sites, funcs[2].values):
                brute += fx * at(k1, abs(int(x) - int(y))) * gy \
                    * at(k2, abs(int(y) - int(z))) * hz
    assert np.isclose(chain_sum(funcs, [k1, k2]), brute, rtol=1e-12)
    with pytest.raises(ContractError):
        chain_sum(funcs, [k1])


def test_multisum_check_lengths():
    f = FiniteFunction(np.array([3, -4]), np.array([1.0, 2.0]))
    single = multisum_check([f], [])
    assert single["lhs"] == single["rhs"] == 3.0 and single["holds"]
    with pytest.raises(ConfigError):
        multisum_check([], [])
    with pytest.raises(ConfigError):
        multisum_check([f, f, f, f], [np.ones(1)] * 3)


def test_project_block_shadow():
    box = STBox(space=((3, 7), (0, 2)), t0=0.5, t1=1.5)
    shadow = project_block(box)
    assert shadow.space == ((-1, 3),)
    assert shadow.t0 == 0.5 and shadow.t1 == 1.5
    empty = project_block(STBox(space=((2, 2),), t0=0.0, t1=1.0))
    assert empty.n_sites == 0


def test_localtime_mgf_kappa_zero_exact():
    # a frozen walk accumulates exactly the block's time span at the origin
    block = STBox(space=((0, 2),), t0=0.2, t1=1.5)
    res = localtime_mgf_check([block], [0.8], kappa=0.0, t=2.0)
    assert np.isclose(res["lhs"], math.exp(0.8 * 1.3), rtol=1e-12)
    assert res["holds"] and res["projection_holds"] and res["rearrangement_holds"]
    assert res["n_blocks"] == 1


def test_localtime_mgf_two_blocks():
    blocks = [STBox(space=((-2, 1),), t0=0.0, t1=1.0),
              STBox(space=((1, 3),), t0=0.5, t1=2.0)]
    res = localtime_mgf_check(blocks, [0.5, 0.9], kappa=0.7, t=2.0)
    assert res["holds"]
    assert "mid" not in res
    assert res["lhs"] > 1.0  # nonnegative potential, some mass at the origin


def test_localtime_mgf_guards():
    block = STBox(space=((0, 2),), t0=0.0, t1=1.0)
    with pytest.raises(ConfigError):
        localtime_mgf_check([], [], kappa=1.0, t=1.0)
    with pytest.raises(ContractError):
        localtime_mgf_check([block], [0.5, 0.5], kappa=1.0, t=1.0)
    with pytest.raises(ConfigError):
        localtime_mgf_check([block], [-0.5], kappa=1.0, t=1.0)
    with pytest.raises(RangeError):
        localtime_mgf_check([block], [0.5], kappa=1.0, t=0.5)
    mixed = [block, STBox(space=((0, 1), (0, 1)), t0=0.0, t1=1.0)]
    with pytest.raises(ContractError):
        localtime_mgf_check(mixed, [0.5, 0.5], kappa=1.0, t=1.0)


def test_dominating_function_dominates(rng):
    for _ in range(50):
        f = _random_function(rng)
        g = _dominating_function(rng, f)
        gmap = g.as_dict()
        for x, v in f.as_dict().items():
            assert gmap[x] >= v
        assert function_property_check(f, g, (0.0, 0.5))


def test_random_localtime_instances(rng):
    for d in (1, 2):
        blocks, gammas = random_localtime_instance(rng, d)
        assert 1 <= len(blocks) <= 3 and len(gammas) == len(blocks)
        for b, g in zip(blocks, gammas):
            assert b.d == d
            assert 0.0 <= b.t0 < b.t1 < 2.0
            assert 0.3 <= g <= 1.2


def test_corpus_small_run():
    out = rearrangement_corpus(n_functions=200, n_riesz=200, n_multisum=50, seed=1)
    assert out["holds"] and out["violations"] == []
    assert out["n_functions"] == 200
