import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smvlc.cabm import build_plan
from smvlc.link import NoiseModel
from smvlc.precode import (PrecodingWeights, SignalSpace, SolverConfig, _optimize_points, _Problem,
                           constraint_residual, min_normalized_distance, optimize_precoding, signal_space,
                           soft_min)

FAST = SolverConfig(restarts=2)


def grid_max_min(c, varsigma, n=801):
    """Brute-force max-min distance for three points on the constraint plane."""
    S = float(np.sum(c))
    g = np.linspace(1e-4, S, n)
    U1, U2 = np.meshgrid(g, g)
    U3 = S - U1 - U2
    keep = U3 > 0
    u = np.stack([U1[keep], U2[keep], U3[keep]], axis=1)
    s = np.sqrt(1 + u * varsigma ** 2)
    d = np.full(len(u), np.inf)
    for k, l in itertools.permutations(range(3), 2):
        d = np.minimum(d, np.abs(u[:, k] - u[:, l]) / s[:, l])
    return float(d.max())


def brute_min_distance(values, varsigma, sigma):
    return min(abs(a - b) / (sigma * math.sqrt(1 + b * varsigma ** 2))
               for (i, a), (j, b) in itertools.permutations(enumerate(values), 2))


@pytest.mark.parametrize("vs", [0.0, 1.0, 3.0])
def test_three_point_solver_matches_grid_search(vs):
    c = np.array([1.0, 1.2, 3.0])
    w, outer, _ = _optimize_points(c, vs, 1.0, SolverConfig(restarts=4))
    got = min_normalized_distance(c * w, vs)
    assert got == pytest.approx(grid_max_min(c, vs), abs=1e-2)
    assert float(c @ w) == pytest.approx(c.sum(), rel=1e-12)
    assert outer == SolverConfig().max_outer


def test_min_normalized_distance_against_pairs():
    rng = np.random.default_rng(1)
    vals = rng.uniform(0, 3, 7)
    for vs in (0.0, 0.5, 4.0):
        assert min_normalized_distance(vals, vs, 0.3) == pytest.approx(brute_min_distance(vals, vs, 0.3),
                                                                       rel=1e-13)
    with pytest.raises(ValueError):
        min_normalized_distance([1.0], 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=30), st.floats(0.1, 1e4))
def test_soft_min_bounds(values, rho):
    d = np.array(values)
    sm = soft_min(d, rho)
    assert sm <= d.min() + 1e-9
    assert sm >= d.min() - math.log(d.size) / rho - 1e-9


def test_soft_min_sharpens():
    d = [0.3, 0.5, 2.0]
    vals = [soft_min(d, rho) for rho in (1, 10, 100, 1000)]
    assert np.all(np.diff(vals) > 0)
    assert vals[-1] == pytest.approx(0.3, abs=1e-3)
    with pytest.raises(ValueError):
        soft_min(d, 0.0)


@pytest.mark.parametrize("vs", [0.0, 2.0])
def test_objective_gradient_finite_difference(vs):
    rng = np.random.default_rng(4)
    c = rng.uniform(0.2, 2.0, 6)
    prob = _Problem(c, vs, 0.5, 1.0)
    w = rng.uniform(0.5, 1.5, 6)
    _, g = prob.value_grad(w, 20.0)
    h = 1e-6
    for k in range(6):
        e = np.zeros(6)
        e[k] = h
        fd = (prob.value(w + e, 20.0) - prob.value(w - e, 20.0)) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_solver_config():
    cfg = SolverConfig()
    assert cfg.max_outer == math.ceil(math.log2(1e5 / 10)) + 1 == 15
    with pytest.raises(ValueError):
        SolverConfig(rho_init=10.0, rho_stop=1.0)
    with pytest.raises(ValueError):
        SolverConfig(restarts=0)


@pytest.fixture(scope="module")
def small_case():
    gains = np.array([0.9, 0.55, 0.3])
    noise = NoiseModel(0.01, 0.25)
    plan = build_plan(gains, 3, 0.5)
    return plan, gains, noise, optimize_precoding(plan, gains, noise, FAST)


def test_optimize_precoding_properties(small_case):
    plan, gains, noise, w = small_case
    ident = min_normalized_distance(signal_space(None, gains, plan), noise.varsigma, noise.sigma)
    opt = min_normalized_distance(signal_space(w, gains, plan), noise.varsigma, noise.sigma)
    assert opt >= ident
    assert opt > 1.05 * ident
    assert w.objective == pytest.approx(opt)
    assert constraint_residual(w, gains, plan) < 1e-12
    assert w.outer_iterations <= FAST.max_outer
    assert all(x > 0 for x in w.w)


def test_optimize_precoding_is_deterministic(small_case):
    plan, gains, noise, w = small_case
    assert optimize_precoding(plan, gains, noise, FAST).w == w.w


def test_weights_json_roundtrip(small_case):
    w = small_case[3]
    back = PrecodingWeights.from_json(w.to_json())
    assert back.w == w.w and back.labels == w.labels
    assert back.outer_iterations == w.outer_iterations


def test_identity_weights_and_labels():
    plan = build_plan([0.4, 0.2, 0.7], 3)
    ident = PrecodingWeights.identity(plan)
    space = signal_space(ident, [0.4, 0.2, 0.7], plan)
    assert isinstance(space, SignalSpace)
    np.testing.assert_array_equal(space.values, plan.received([0.4, 0.2, 0.7]))
    assert ident.as_dict()[(1, 0)] == 1.0
    other = build_plan([0.4, 0.2, 0.7, 0.1, 0.3], 4)
    with pytest.raises(ValueError):
        signal_space(PrecodingWeights.identity(other), [0.4, 0.2, 0.7], plan)
    with pytest.raises(ValueError):
        PrecodingWeights(((1, 0),), (0.0,))


def test_zero_gain_points_keep_unit_weight():
    gains = np.array([0.0, 0.5, 0.9])
    plan = build_plan(gains, 3, adaptive=False)
    w = optimize_precoding(plan, gains, NoiseModel(0.01), FAST)
    rx = plan.received(gains)
    np.testing.assert_array_equal(w.as_array()[rx == 0], 1.0)
    assert constraint_residual(w, gains, plan) < 1e-12
