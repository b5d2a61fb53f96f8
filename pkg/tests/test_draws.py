from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from rpmixl.draws import (
    DrawConfig,
    generate_draw_block,
    halton_indices,
    halton_points,
    halton_value,
    inv_normal_cdf,
    normal_cdf,
)
from rpmixl.errors import DrawError


def radical_inverse_exact(base, index):
    # independent oracle: exact rational digit reversal
    out, scale = Fraction(0), Fraction(1, base)
    while index:
        index, d = divmod(index, base)
        out += d * scale
        scale /= base
    return out


@pytest.mark.parametrize("base, index, expected", [
    (2, 1, 0.5), (2, 2, 0.25), (2, 3, 0.75),
    (3, 1, 1 / 3), (3, 2, 2 / 3), (3, 3, 1 / 9),
])
def test_halton_values(base, index, expected):
    assert halton_value(base, index) == expected


def test_halton_matches_exact_fractions():
    for base in (2, 3, 5, 7, 11, 13):
        idx = np.arange(1, 3000)
        pts = halton_points(base, idx)
        for i in (1, 2, 17, 100, 999, 2999):
            assert pts[i - 1] == float(radical_inverse_exact(base, i))
            assert pts[i - 1] == halton_value(base, i)


def test_halton_mean_base2():
    total = sum(halton_value(2, i) for i in range(1, 1001))
    assert abs(total / 1000 - 0.5) < 0.005


def test_inv_normal_cdf_center_and_reference():
    assert inv_normal_cdf(0.5) == 0.0
    mpmath.mp.dps = 40
    oracle = mpmath.findroot(lambda z: mpmath.ncdf(z) - mpmath.mpf("0.975"), 1.96)
    assert abs(inv_normal_cdf(0.975) - float(oracle)) < 1e-12
    assert abs(inv_normal_cdf(0.975) - 1.959964) < 1e-5


def test_inv_normal_cdf_accuracy_and_monotone():
    p = np.sort(np.concatenate([np.random.default_rng(0).uniform(0, 1, 20000), np.logspace(-15, -1, 200)]))
    z = inv_normal_cdf(p)
    assert np.max(np.abs(stats.norm.cdf(z) - p)) <= 1e-9
    assert np.all(np.diff(z) >= 0)


def test_inv_normal_cdf_symmetry():
    p = np.random.default_rng(1).uniform(0, 1, 10000)
    np.testing.assert_allclose(inv_normal_cdf(p), -inv_normal_cdf(1 - p), rtol=0, atol=1e-12)


@given(st.floats(min_value=1e-300, max_value=1 - 1e-16))
def test_inv_normal_cdf_round_trip(p):
    z = inv_normal_cdf(p)
    assert abs(float(normal_cdf(z)) - p) <= 1e-9


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_inv_normal_cdf_domain(p):
    with pytest.raises(ValueError):
        inv_normal_cdf(p)


def test_block_assignment_example():
    block = generate_draw_block(2, 1, DrawConfig(n_draws=3, burn_in=0))
    expected = inv_normal_cdf(np.array([[0.5, 0.25, 0.75], [0.125, 0.625, 0.375]]))
    np.testing.assert_array_equal(block.values[:, :, 0], expected)
    assert block.shape == (2, 3, 1)


def test_block_deterministic():
    cfg = DrawConfig(n_draws=50, burn_in=10, shuffle_seed=4)
    a = generate_draw_block(30, 3, cfg)
    b = generate_draw_block(30, 3, cfg)
    assert a == b
    assert a.values.tobytes() == b.values.tobytes()


def test_shuffle_permutes_within_observation():
    plain = generate_draw_block(5, 2, DrawConfig(n_draws=20))
    shuffled = generate_draw_block(5, 2, DrawConfig(n_draws=20, shuffle_seed=9))
    assert not np.array_equal(plain.values, shuffled.values)
    np.testing.assert_array_equal(np.sort(plain.values, axis=1), np.sort(shuffled.values, axis=1))


def test_blocks_disjoint_in_halton_index():
    idx = halton_indices(40, DrawConfig(n_draws=25, burn_in=7))
    assert idx.min() == 8
    assert len(np.unique(idx)) == idx.size
    assert np.all(np.diff(idx.ravel()) == 1)


def test_grand_mean_near_zero():
    block = generate_draw_block(100, 3, DrawConfig(n_draws=500))
    means = block.values.mean(axis=(0, 1))
    assert np.all(np.abs(means) < 0.01)
    assert np.all(np.isfinite(block.values))


def test_pooled_ks_against_normal():
    block = generate_draw_block(100, 4, DrawConfig(n_draws=500))
    for d in range(4):
        res = stats.kstest(block.values[:, :, d].ravel(), "norm")
        assert res.statistic < 0.02


def test_prime_exhaustion_and_validation():
    with pytest.raises(DrawError):
        generate_draw_block(3, 3, DrawConfig(n_draws=2, primes=(2, 3)))
    with pytest.raises(DrawError):
        DrawConfig(primes=(2, 4))
    with pytest.raises(DrawError):
        DrawConfig(primes=(3, 3))
    with pytest.raises(DrawError):
        DrawConfig(n_draws=0)
    with pytest.raises(DrawError):
        DrawConfig(burn_in=-1)


def test_explicit_primes_used_in_order():
    block = generate_draw_block(1, 1, DrawConfig(n_draws=2, burn_in=0, primes=(5,)))
    np.testing.assert_array_equal(block.values[0, :, 0], inv_normal_cdf(np.array([0.2, 0.4])))


def test_config_round_trip():
    cfg = DrawConfig(n_draws=12, burn_in=3, primes=(3, 7), shuffle_seed=1)
    assert DrawConfig.from_dict(cfg.to_dict()) == cfg
