import time

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.spatial.distance import cdist

from smgo.lib.bench import make_function
from smgo.lib.bounds import init_gamma, lower_bounds, upper_bounds
from smgo.lib.core import Sample, SearchSpace, add_sample, enumerate_vertices
from smgo.lib.engine import (
    EngineConfig,
    ExplorationPool,
    Mode,
    SMGOEngine,
    exploitation_candidates,
    improvement_met,
    refresh_exploration_pool,
    run,
    select_exploitation,
    select_exploration,
)
from smgo.lib.errors import (
    BudgetExhausted,
    NonFiniteValue,
    PoolExhausted,
    ProtocolViolation,
    TooFewSamples,
)

from conftest import make_history

MU = 1.025


def worked_engine(alpha=0.001, budget=10):
    space = SearchSpace([0.0], [1.0])
    config = EngineConfig(alpha=alpha, mu=MU, budget=budget)
    return SMGOEngine(config, space, [Sample([0.0], 0.0), Sample([1.0], 2.0)])


def test_config_validation():
    with pytest.raises(ValidationError):
        EngineConfig(alpha=1.0)
    with pytest.raises(ValidationError):
        EngineConfig(mu=1.0)
    with pytest.raises(ValidationError):
        EngineConfig(budget=0)


def test_exploitation_candidate_worked(two_cones):
    cand = exploitation_candidates(two_cones, 2.0, MU)
    assert cand.shape == (1, 1)
    assert cand[0, 0] == pytest.approx(0.012195, abs=1e-6)


def test_exploitation_candidate_extremes(unit_line):
    flat = make_history(unit_line, [[0.0], [1.0]], [0.0, 0.0])
    assert exploitation_candidates(flat, 2.0, MU)[0, 0] == pytest.approx(0.5)
    steep = make_history(unit_line, [[0.0], [1.0]], [0.0, 2.05])
    assert exploitation_candidates(steep, 2.0, MU)[0, 0] == pytest.approx(0.0)


def test_exploitation_needs_two_samples(unit_line):
    with pytest.raises(TooFewSamples):
        exploitation_candidates(make_history(unit_line, [[0.3]], [1.0]), 1.0, MU)


def test_select_exploitation_worked(two_cones):
    x, z_lb = select_exploitation(exploitation_candidates(two_cones, 2.0, MU), two_cones, 2.0, MU)
    assert x[0] == pytest.approx(0.012195, abs=1e-6)
    assert z_lb == pytest.approx(-0.025, abs=1e-6)


def test_select_exploitation_tie_prefers_lexicographic_point():
    space = SearchSpace([-1.0, -1.0], [1.0, 1.0])
    history = make_history(space, [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]], [0.0, 0.0, 0.0], gamma=1.0)
    x, _ = select_exploitation(exploitation_candidates(history, 1.0, MU), history, 1.0, MU)
    assert x.tolist() == pytest.approx([0.0, 0.5])


def test_select_exploitation_skips_candidate_cut_by_middle_cone():
    space = SearchSpace([0.0], [1.0])
    history = make_history(space, [[0.0], [0.5], [1.0]], [0.0, 0.1, 1.0])
    gamma = 1.8
    mg = MU * gamma
    cand = exploitation_candidates(history, gamma, MU)
    lows = lower_bounds(cand, history.X, history.Z, mg)
    best_cone = -mg * np.abs(cand[:, 0])
    # the far candidate sits above the best sample's cone
    assert lows[1] > best_cone[1] + 1e-6
    x, z_lb = select_exploitation(cand, history, gamma, MU)
    assert x[0] == pytest.approx(cand[0, 0])
    assert z_lb == pytest.approx(best_cone[0])


@pytest.mark.parametrize(
    "z_lb, best_z, alpha, gamma, expected",
    [
        (-0.025, 0.0, 0.001, 2.0, True),
        (0.0, 0.0, 0.0, 2.0, True),
        (-0.001, 0.0, 0.01, 1.0, False),
    ],
)
def test_improvement_met(z_lb, best_z, alpha, gamma, expected):
    assert improvement_met(z_lb, best_z, alpha, gamma) is expected


def test_pool_counts_two_samples():
    space = SearchSpace([0.0], [1.0])
    history = make_history(space, [[0.2], [0.7]], [1.0, 2.0], gamma=2.0)
    pool = ExplorationPool(1, enumerate_vertices(space))
    pool.build(history, MU)
    assert len(pool.pairs) == 1
    assert len(pool.mirrors) == 4


def test_refresh_adds_pairs_and_mirrors():
    space = SearchSpace([0.0, 0.0], [1.0, 1.0])
    history = make_history(space, [[0.2, 0.2]], [1.0], gamma=1.0)
    pool = ExplorationPool(2, enumerate_vertices(space))
    pool.build(history, MU)
    assert len(pool) == 4
    mirror = pool.mirrors.locations[pool.mirrors.keys[:, 1] == 3]
    np.testing.assert_allclose(mirror, [[0.6, 0.6]])
    s = Sample([0.9, 0.1], 3.0)
    add_sample(history, s)
    refresh_exploration_pool(pool, history, s, space, 5.0, MU)
    assert len(pool.pairs) == 1
    assert len(pool.mirrors) == 8
    assert pool.gamma == 5.0
    assert pool.nearest_index.tolist() == [0, 0, 1, 1]


def test_refresh_rejects_sample_not_in_history():
    space = SearchSpace([0.0], [1.0])
    history = make_history(space, [[0.2]], [1.0], gamma=1.0)
    pool = ExplorationPool(1, enumerate_vertices(space))
    pool.build(history, MU)
    with pytest.raises(ProtocolViolation):
        refresh_exploration_pool(pool, history, Sample([0.6], 0.0), space, 1.0, MU)


def test_select_exploration_worked(two_cones):
    pool = ExplorationPool(1, enumerate_vertices(two_cones.space))
    pool.build(two_cones, MU)
    x, lam = select_exploration(pool, two_cones, 2.0, MU)
    assert x.tolist() == [0.5]
    assert lam == pytest.approx(0.05)


def test_select_exploration_tie_prefers_smaller_point():
    space = SearchSpace([0.0], [1.0])
    history = make_history(space, [[0.0], [0.5], [1.0]], [0.0, 0.0, 0.0], gamma=1.0)
    pool = ExplorationPool(1, enumerate_vertices(space))
    pool.build(history, MU)
    x, _ = select_exploration(pool, history, 1.0, MU)
    assert x.tolist() == [0.25]


class _FixedPool:
    def __init__(self, locations, lam):
        self.locations = np.asarray(locations, dtype=float)
        self.lam = np.asarray(lam, dtype=float)

    def __len__(self):
        return len(self.lam)

    def candidates(self, history, gamma, mu):
        return [(self.locations, self.lam)]


def test_select_exploration_skips_existing_sample(unit_line):
    history = make_history(unit_line, [[0.5]], [1.0], gamma=1.0)
    pool = _FixedPool([[0.5], [0.25], [0.75]], [1.0, 0.5, 0.2])
    x, lam = select_exploration(pool, history, 1.0, MU)
    assert x.tolist() == [0.25]
    assert lam == 0.5


def test_select_exploration_all_duplicates(unit_line):
    history = make_history(unit_line, [[0.5]], [1.0], gamma=1.0)
    with pytest.raises(PoolExhausted):
        select_exploration(_FixedPool([[0.5], [0.5]], [1.0, 0.5]), history, 1.0, MU)


def test_ask_worked_exploitation():
    engine = worked_engine()
    x = engine.ask()
    assert x[0] == pytest.approx(0.012195, abs=1e-6)
    report = engine.reports[-1]
    assert report.mode is Mode.THETA
    assert report.predicted_lower == pytest.approx(-0.025, abs=1e-6)


def test_ask_worked_exploration():
    engine = worked_engine(alpha=0.9)
    x = engine.ask()
    assert x.tolist() == [0.5]
    assert engine.reports[-1].mode is Mode.PSI
    assert engine.reports[-1].predicted_uncertainty == pytest.approx(0.05)


def test_single_initial_sample_explores_toward_far_corner():
    space = SearchSpace([0.0, 0.0], [1.0, 1.0])
    engine = SMGOEngine(EngineConfig(budget=5), space, [Sample([0.2, 0.2], 1.0)])
    assert engine.gamma == pytest.approx(1e-9)
    x = engine.ask()
    assert x.tolist() == pytest.approx([0.6, 0.6])
    assert engine.reports[-1].mode is Mode.PSI


def test_protocol_errors():
    engine = worked_engine(budget=3)
    with pytest.raises(ProtocolViolation):
        engine.tell(1.0)
    engine.ask()
    with pytest.raises(ProtocolViolation):
        engine.ask()
    engine.tell(1.0)
    with pytest.raises(BudgetExhausted):
        engine.ask()


def test_tell_nan_leaves_state_unchanged():
    engine = worked_engine()
    engine.ask()
    before = engine.snapshot()
    with pytest.raises(NonFiniteValue):
        engine.tell(float("nan"))
    assert engine.snapshot() == before
    assert engine.pending
    engine.tell(0.5)
    assert engine.n == 3
    assert not engine.pending


def test_tell_raises_gamma_on_steep_value():
    engine = worked_engine()
    x = engine.ask()
    engine.tell(5.0)
    assert engine.gamma == pytest.approx(5.0 / x[0])
    assert engine.history.n == 3


def test_run_with_budget_equal_to_initials():
    space = SearchSpace([0.0], [1.0])
    (x, z), reports = run(lambda x: float(x[0] ** 2), [[0.5], [0.2]], EngineConfig(budget=2), space)
    assert reports == []
    assert x.tolist() == [0.2] and z == pytest.approx(0.04)


def test_run_finds_kink_minimum():
    space = SearchSpace([0.0], [1.0])
    (x, z), reports = run(lambda x: abs(float(x[0]) - 0.3), [[0.7]], EngineConfig(budget=50), space)
    assert len(reports) == 49
    assert z <= 0.01
    assert {r.mode for r in reports} == {Mode.THETA, Mode.PSI}


def test_run_is_deterministic():
    f = make_function("styblinski-tang", 2)
    start = [[1.0, -2.0]]
    _, first = run(f, start, EngineConfig(budget=60, seed=3), f.bounds)
    _, second = run(f, start, EngineConfig(budget=60, seed=3), f.bounds)
    assert [r.mode for r in first] == [r.mode for r in second]
    np.testing.assert_array_equal([r.next_point for r in first], [r.next_point for r in second])


def test_asked_points_are_new_and_inside_box():
    f = make_function("deb1", 3)
    engine = SMGOEngine(EngineConfig(budget=80), f.bounds, [Sample(np.zeros(3), f(np.zeros(3)))])
    while engine.n < 80:
        x = engine.ask()
        assert f.bounds.contains(x)
        assert engine.history.nearest_distance(x) >= engine.history.eps_dup
        engine.tell(f(x))
    assert np.all(np.diff([r.best_z for r in engine.reports]) <= 0)


def _feasibility_instances(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        dim = int(rng.integers(1, 11))
        n = int(rng.integers(2, 201))
        space = SearchSpace.cube(-1.0, 1.0, dim)
        X = space.uniform(rng, n)
        Z = rng.normal(size=n) * rng.uniform(0.1, 10.0)
        samples = [Sample(x, z) for x, z in zip(X, Z)]
        history = make_history(space, X, Z, gamma=init_gamma(samples))
        yield history


def _assert_exploitation_feasible(history):
    gamma = history.gamma
    x, z_lb = select_exploitation(exploitation_candidates(history, gamma, MU), history, gamma, MU)
    xb = history.X[history.best_index]
    zb = history.Z[history.best_index]
    cone = zb - MU * gamma * np.linalg.norm(x - xb)
    assert z_lb <= cone + 1e-9 * max(1.0, abs(cone))


def test_exploitation_always_feasible():
    for history in _feasibility_instances(300, seed=17):
        _assert_exploitation_feasible(history)


@pytest.mark.slow
def test_exploitation_always_feasible_large():
    for history in _feasibility_instances(10_000, seed=99):
        _assert_exploitation_feasible(history)


def _check_caches(engine, created, eps=1e-9):
    h = engine.history
    mg = engine.config.mu * h.gamma
    for cache, gammas in zip((engine.pool.pairs, engine.pool.mirrors), created):
        if len(cache) == 0:
            continue
        exact_lo = lower_bounds(cache.locations, h.X, h.Z, mg)
        exact_up = upper_bounds(cache.locations, h.X, h.Z, mg)
        assert np.all(cache.lower <= exact_lo + eps * np.maximum(1.0, np.abs(exact_lo)))
        assert np.all(cache.upper >= exact_up - eps * np.maximum(1.0, np.abs(exact_up)))
        # entries created at the current gamma have seen every later sample through absorb
        fresh = np.asarray(gammas) == h.gamma
        np.testing.assert_allclose(cache.lower[fresh], exact_lo[fresh], rtol=eps, atol=eps)
        np.testing.assert_allclose(cache.upper[fresh], exact_up[fresh], rtol=eps, atol=eps)
    exploit = engine.exploit
    if exploit.anchor == (h.best_index, h.gamma) and len(exploit.bounds):
        exact = lower_bounds(exploit.bounds.locations, h.X, h.Z, mg)
        np.testing.assert_allclose(exploit.bounds.lower, exact, rtol=eps, atol=eps)


def _run_with_cache_checks(name, dim, budget, seed):
    f = make_function(name, dim)
    x0 = f.bounds.uniform(np.random.default_rng(seed))
    engine = SMGOEngine(EngineConfig(budget=budget, seed=seed), f.bounds, [Sample(x0, f(x0))])
    caches = (engine.pool.pairs, engine.pool.mirrors)
    created = [[engine.history.gamma] * len(cache) for cache in caches]
    while engine.n < budget:
        x = engine.ask()
        engine.tell(f(x))
        for cache, gammas in zip(caches, created):
            gammas.extend([engine.history.gamma] * (len(cache) - len(gammas)))
        _check_caches(engine, created)


@pytest.mark.parametrize("name, dim", [("deb1", 2), ("schwefel", 3), ("salomon", 2)])
def test_cached_bounds_bracket_exact_bounds(name, dim):
    _run_with_cache_checks(name, dim, budget=60, seed=5)


@pytest.mark.slow
def test_cached_bounds_bracket_exact_bounds_many_runs():
    names = ["deb1", "styblinski-tang", "schwefel", "salomon", "rosenbrock", "brown", "deb2"]
    for run_index in range(100):
        _run_with_cache_checks(names[run_index % len(names)], 2 + run_index % 3, budget=200, seed=run_index)


def _longest_idle_theta_streak(name, dim, budget, seed):
    f = make_function(name, dim)
    x0 = f.bounds.uniform(np.random.default_rng(seed))
    engine = SMGOEngine(EngineConfig(budget=budget, seed=seed), f.bounds, [Sample(x0, f(x0))])
    streak = longest = 0
    while engine.n < budget:
        x = engine.ask()
        mode = engine.reports[-1].mode
        _, z_before = engine.best
        z = f(x)
        engine.tell(z)
        if mode is Mode.THETA and z >= z_before:
            streak += 1
            longest = max(longest, streak)
        else:
            streak = 0
    return longest


@pytest.mark.parametrize(
    "name, dim", [("deb1", 5), ("styblinski-tang", 5), ("schwefel", 5), ("salomon", 3)]
)
def test_exploitation_does_not_stall(name, dim):
    assert _longest_idle_theta_streak(name, dim, budget=300, seed=2) < 10 * dim


@pytest.mark.slow
def test_iteration_cost_grows_at_most_quadratically():
    f = make_function("deb1", 5)
    x0 = f.bounds.uniform(np.random.default_rng(0))
    engine = SMGOEngine(EngineConfig(budget=500, seed=0), f.bounds, [Sample(x0, f(x0))])
    elapsed = []
    while engine.n < 500:
        start = time.perf_counter()
        x = engine.ask()
        engine.tell(f(x))
        elapsed.append(time.perf_counter() - start)
    elapsed = np.asarray(elapsed)
    early = elapsed[89:110].mean()
    late = elapsed[479:].mean()
    # (500 / 100) ** 2 = 25
    assert late / early < 25
    assert elapsed.sum() < 60.0


@pytest.mark.slow
@pytest.mark.parametrize(
    "name", ["rosenbrock", "styblinski-tang", "deb1", "deb2", "schwefel", "salomon", "brown"]
)
def test_dispersion_shrinks(name):
    f = make_function(name, 2)
    axes = [np.linspace(lo, hi, 100) for lo, hi in zip(f.bounds.lower, f.bounds.upper)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2)
    x0 = f.bounds.uniform(np.random.default_rng(1))
    engine = SMGOEngine(EngineConfig(budget=500, seed=1), f.bounds, [Sample(x0, f(x0))])
    dispersion = []
    while engine.n < 500:
        x = engine.ask()
        engine.tell(f(x))
        if engine.n % 50 == 0:
            gaps = cdist(grid, engine.history.X).min(axis=1)
            dispersion.append(float(gaps.max()))
    assert np.all(np.diff(dispersion) <= 1e-12)
    assert dispersion[-1] < 0.5 * dispersion[0]
