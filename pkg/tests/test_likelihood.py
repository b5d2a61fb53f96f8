import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpmixl import likelihood as lk
from rpmixl.dataset import Dataset
from rpmixl.draws import DrawBlock, DrawConfig, generate_draw_block
from rpmixl.likelihood import (
    LOG_FLOOR,
    MNLLikelihood,
    SimulatedLikelihood,
    choice_probabilities,
    loglik_gradient,
    mnl_loglik,
    realized_coefficients,
    simulated_loglik,
)
from rpmixl.model_spec import Role, parameter_layout, parse_model_spec

from conftest import random_dataset


def brute_force_mnl(theta, ds, spec):
    """Row-by-row softmax with plain floats; random coefficients at shifted means."""
    layout = parameter_layout(spec)
    total = 0.0
    for n in range(len(ds)):
        row = ds.row(n)
        util = [0.0] * len(spec.alternatives)
        for i, e in enumerate(spec.entries):
            x = 1.0 if e.is_constant else row[e.variable]
            if e.is_random:
                b = theta[layout.for_entry(i, Role.RANDOM_MEAN)[0].index]
                b += sum(theta[p.index] * row[p.shifter] for p in layout.for_entry(i, Role.MEAN_SHIFTER))
            else:
                b = theta[layout.for_entry(i, Role.FIXED_BETA)[0].index]
            util[spec.alternatives.index(e.alternative)] += b * x
        denom = sum(math.exp(u) for u in util)
        total += math.log(math.exp(util[int(ds.chosen[n])]) / denom)
    return total


def test_realized_fixed_entry_unchanged():
    spec = parse_model_spec("""
alternatives: [s, m, mm]
base: m
label_column: y
utilities:
  - {alt: mm, var: wet_pavement, kind: fixed}
  - {alt: mm, var: male, kind: random, het_mean: [motorcycle]}
""")
    layout = parameter_layout(spec)
    theta = np.zeros(len(layout))
    theta[layout.index_of("wet_pavement[mm]")] = 0.915
    theta[layout.index_of("male[mm]")] = 0.268
    theta[layout.index_of("male[mm]:motorcycle")] = 1.013
    theta[layout.index_of("sd(male[mm])")] = 1.946
    obs = {"wet_pavement": 1.0, "male": 1.0, "motorcycle": 1.0}
    for v in (-2.0, 0.0, 1.3):
        assert realized_coefficients(theta, layout, obs, [v])[0] == 0.915
    assert realized_coefficients(theta, layout, obs, [0.0])[1] == pytest.approx(1.281, abs=1e-12)


def test_realized_identity_case():
    spec = parse_model_spec("""
alternatives: [a, b]
base: a
label_column: y
utilities:
  - {alt: b, var: x, kind: random, het_var: [w]}
""")
    layout = parameter_layout(spec)
    theta = np.array([0.0, 1.0, 0.0])
    assert realized_coefficients(theta, layout, {"x": 1.0, "w": 1.0}, [1.5])[0] == 1.5
    theta[2] = math.log(2.0)
    assert realized_coefficients(theta, layout, {"x": 1.0, "w": 1.0}, [1.5])[0] == pytest.approx(3.0)
    assert realized_coefficients(theta, layout, {"x": 1.0, "w": 0.0}, [1.5])[0] == pytest.approx(1.5)


def test_softmax_examples():
    np.testing.assert_allclose(choice_probabilities([0, 0, 0]), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(choice_probabilities([math.log(2), 0, 0]), [0.5, 0.25, 0.25], atol=1e-15)
    rng = np.random.default_rng(2)
    for _ in range(100):
        u = rng.normal(size=3)
        np.testing.assert_allclose(choice_probabilities(u + 1000), choice_probabilities(u), atol=1e-12)


def test_softmax_no_overflow():
    p = choice_probabilities([1e5, 0.0, -1e5])
    assert np.all(np.isfinite(p)) and p[0] == 1.0


def test_uniform_loglik_at_zero(two_random_spec, two_random_data):
    layout = parameter_layout(two_random_spec)
    block = generate_draw_block(len(two_random_data), 2, DrawConfig(n_draws=7))
    theta = np.zeros(len(layout))
    expected = len(two_random_data) * math.log(1 / 3)
    assert simulated_loglik(theta, two_random_data, block, two_random_spec).loglik == pytest.approx(expected, abs=1e-12)
    assert mnl_loglik(theta, two_random_data, two_random_spec).loglik == pytest.approx(expected, abs=1e-12)


def test_mnl_two_alternatives_analytic():
    spec = parse_model_spec("""
alternatives: [base, other]
base: base
label_column: y
utilities:
  - {alt: other, var: constant, kind: fixed}
""")
    ds = Dataset((), (), np.zeros((1, 0)), np.array([0]), ("base", "other"), "y")
    value = mnl_loglik(np.array([math.log(3)]), ds, spec)
    assert value.loglik == pytest.approx(math.log(1 / 4), abs=1e-15)


def test_mnl_matches_brute_force(two_random_spec):
    layout = parameter_layout(two_random_spec)
    rng = np.random.default_rng(3)
    for seed in range(10):
        ds = random_dataset(["x1", "x2", "x3", "z1", "w1"], 25, 3, seed=seed)
        theta = rng.normal(0, 1, len(layout))
        assert mnl_loglik(theta, ds, two_random_spec).loglik == pytest.approx(brute_force_mnl(theta, ds, two_random_spec), abs=1e-10)


def test_two_draw_hand_oracle():
    spec = parse_model_spec("""
alternatives: [a, b, c]
base: a
label_column: y
utilities:
  - {alt: b, var: constant, kind: fixed}
  - {alt: c, var: x, kind: random, het_mean: [z]}
""")
    ds = Dataset(("x", "z"), (True, True), np.array([[1.0, 1.0]]), np.array([2]), ("a", "b", "c"), "y")
    theta = np.array([0.4, 0.3, 0.7, 0.5])  # constant[b], x[c], sd, x[c]:z
    v = np.array([[[0.8], [-1.1]]])
    block = DrawBlock(v, DrawConfig(n_draws=2))
    probs = []
    for draw in (0.8, -1.1):
        beta_c = 0.3 + 0.5 * 1.0 + 0.7 * draw
        num = math.exp(beta_c)
        probs.append(num / (1 + math.exp(0.4) + num))
    hand = math.log((probs[0] + probs[1]) / 2)
    value = simulated_loglik(theta, ds, block, spec)
    assert value.loglik == pytest.approx(hand, abs=1e-12)
    assert value.per_obs[0] == pytest.approx(hand, abs=1e-12)


def test_vectorized_matches_single_observation_route(two_random_spec, two_random_data):
    layout = parameter_layout(two_random_spec)
    block = generate_draw_block(len(two_random_data), 2, DrawConfig(n_draws=5))
    theta = np.random.default_rng(4).normal(0, 0.7, len(layout))
    value = simulated_loglik(theta, two_random_data, block, two_random_spec)
    alt_of = [two_random_spec.alternatives.index(e.alternative) for e in two_random_spec.entries]
    for n in range(len(two_random_data)):
        row = two_random_data.row(n)
        ps = []
        for r in range(5):
            beta = realized_coefficients(theta, layout, row, block.values[n, r])
            util = np.zeros(3)
            for e, b, a in zip(two_random_spec.entries, beta, alt_of):
                util[a] += b * (1.0 if e.is_constant else row[e.variable])
            ps.append(choice_probabilities(util)[two_random_data.chosen[n]])
        assert value.per_obs[n] == pytest.approx(math.log(np.mean(ps)), abs=1e-12)


def test_loglik_is_sum_of_per_obs(two_random_spec, two_random_data):
    layout = parameter_layout(two_random_spec)
    block = generate_draw_block(len(two_random_data), 2, DrawConfig(n_draws=9))
    theta = np.random.default_rng(5).normal(0, 1, len(layout))
    value = simulated_loglik(theta, two_random_data, block, two_random_spec)
    assert value.loglik == math.fsum(value.per_obs.tolist())
    assert value.loglik == pytest.approx(sum(value.per_obs.tolist()), abs=1e-12)
    assert np.all(value.per_obs <= 0)


def test_collapse_to_mnl(two_random_spec, two_random_data):
    layout = parameter_layout(two_random_spec)
    block = generate_draw_block(len(two_random_data), 2, DrawConfig(n_draws=31))
    theta = np.random.default_rng(6).normal(0, 1, len(layout))
    theta[layout.indices(Role.RANDOM_SCALE) + layout.indices(Role.VARIANCE_SHIFTER)] = 0.0
    sim = simulated_loglik(theta, two_random_data, block, two_random_spec).loglik
    assert abs(sim - mnl_loglik(theta, two_random_data, two_random_spec).loglik) <= 1e-12


def test_probability_floor():
    spec = parse_model_spec("""
alternatives: [a, b]
base: a
label_column: y
utilities:
  - {alt: b, var: constant, kind: fixed}
""")
    ds = Dataset((), (), np.zeros((3, 0)), np.array([0, 0, 1]), ("a", "b"), "y")
    block = generate_draw_block(3, 0, DrawConfig(n_draws=2))
    value = simulated_loglik(np.array([1000.0]), ds, block, spec)
    assert value.n_floored == 2
    assert value.per_obs[0] == LOG_FLOOR
    assert np.all(np.isfinite(value.per_obs))
    model = SimulatedLikelihood(spec, ds, block)
    _, g = model.value_and_gradient(np.array([1000.0]))
    assert np.all(np.isfinite(g))


def test_gradient_analytic_vs_numeric(two_random_spec, two_random_data):
    layout = parameter_layout(two_random_spec)
    block = generate_draw_block(len(two_random_data), 2, DrawConfig(n_draws=40))
    rng = np.random.default_rng(7)
    for _ in range(5):
        theta = rng.normal(0, 0.6, len(layout))
        a = loglik_gradient(theta, two_random_data, block, two_random_spec)
        n = loglik_gradient(theta, two_random_data, block, two_random_spec, method="numeric")
        np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-5)


def test_mnl_gradient_matches_numeric(two_random_spec, two_random_data):
    model = MNLLikelihood(two_random_spec, two_random_data)
    theta = np.random.default_rng(8).normal(0, 0.6, len(model.layout))
    _, g = model.value_and_gradient(theta)
    num = lk.numeric_gradient(lambda t: model.evaluate(t).loglik, theta)
    np.testing.assert_allclose(g, num, rtol=1e-5, atol=1e-6)


def test_dead_parameter_zero_gradient(two_random_spec):
    ds = random_dataset(["x1", "x2", "x3", "z1", "w1"], 40, 3, seed=9)
    values = np.array(ds.values)
    values[:, ds.columns.index("x3")] = 0.0
    ds = Dataset(ds.columns, ds.binary, values, ds.chosen, ds.alternatives, "y")
    layout = parameter_layout(two_random_spec)
    block = generate_draw_block(len(ds), 2, DrawConfig(n_draws=10))
    theta = np.random.default_rng(10).normal(0, 1, len(layout))
    for method in ("analytic", "numeric"):
        g = loglik_gradient(theta, ds, block, two_random_spec, method=method)
        assert abs(g[layout.index_of("x3[c]")]) < 1e-10


def test_thread_count_invariance(monkeypatch, two_random_spec):
    ds = random_dataset(["x1", "x2", "x3", "z1", "w1"], 300, 3, seed=12)
    block = generate_draw_block(len(ds), 2, DrawConfig(n_draws=50))
    theta = np.random.default_rng(13).normal(0, 0.8, len(parameter_layout(two_random_spec)))
    monkeypatch.setattr(lk, "_CHUNK_ELEMENTS", 1000)
    results = []
    for threads in ("1", "3", "8"):
        monkeypatch.setenv("RPMIXL_THREADS", threads)
        model = SimulatedLikelihood(two_random_spec, ds, block)
        assert len(model._chunks()) > 8
        value, S = model.scores(theta)
        results.append((value.loglik, value.per_obs.tobytes(), S.tobytes()))
    assert results[0] == results[1] == results[2]


def test_chunking_does_not_change_values(monkeypatch, two_random_spec):
    ds = random_dataset(["x1", "x2", "x3", "z1", "w1"], 120, 3, seed=14)
    block = generate_draw_block(len(ds), 2, DrawConfig(n_draws=30))
    theta = np.random.default_rng(15).normal(0, 0.8, len(parameter_layout(two_random_spec)))
    whole = SimulatedLikelihood(two_random_spec, ds, block).evaluate(theta)
    monkeypatch.setattr(lk, "_CHUNK_ELEMENTS", 200)
    pieces = SimulatedLikelihood(two_random_spec, ds, block).evaluate(theta)
    np.testing.assert_array_equal(whole.per_obs, pieces.per_obs)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 3.0))
def test_monotone_in_chosen_constant(seed, bump):
    spec = parse_model_spec("""
alternatives: [a, b, c]
base: a
label_column: y
utilities:
  - {alt: b, var: constant, kind: fixed}
  - {alt: c, var: constant, kind: fixed}
  - {alt: c, var: x1, kind: random, het_mean: [z1]}
  - {alt: b, var: x2, kind: random}
""")
    ds = random_dataset(["x1", "x2", "z1"], 8, 3, seed=seed)
    layout = parameter_layout(spec)
    block = generate_draw_block(len(ds), 2, DrawConfig(n_draws=15))
    theta = np.random.default_rng(seed).normal(0, 1, len(layout))
    base = simulated_loglik(theta, ds, block, spec).per_obs
    for alt, name in ((1, "constant[b]"), (2, "constant[c]")):
        up = theta.copy()
        up[layout.index_of(name)] += bump
        bumped = simulated_loglik(up, ds, block, spec).per_obs
        chose = ds.chosen == alt
        assert np.all(bumped[chose] >= base[chose] - 1e-15)


def test_block_shape_mismatch(two_random_spec, two_random_data):
    from rpmixl.errors import DrawError

    block = generate_draw_block(len(two_random_data) - 1, 2, DrawConfig(n_draws=3))
    with pytest.raises(DrawError):
        SimulatedLikelihood(two_random_spec, two_random_data, block)
