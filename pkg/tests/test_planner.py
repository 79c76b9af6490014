import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from litstar.planner import (FREE, PRUNED, VERTEX, ConstantSource, LITPlanner, PlannerConfig, TensorSource,
                             compute_K, plan, save_result)
from litstar.policy import PolicyTensor
from litstar.space import (InformedSet, is_edge_valid, make_empty, make_narrow_passage, make_rng)


def k_oracle(psi, eta, n, q):
    mpmath.mp.dps = 40
    v = mpmath.mpf(eta) * mpmath.e * mpmath.mpf(psi) * (1 + mpmath.mpf(1) / n) * mpmath.log(q)
    return int(min(max(int(mpmath.ceil(v)), 1), q - 1))


def test_compute_K_golden():
    assert compute_K(3.0, 1.1, 4, 100) == 52 == k_oracle(3.0, 1.1, 4, 100)
    assert compute_K(15.0, 1.1, 2, 3) == 2
    with pytest.raises(ValueError):
        compute_K(3.0, 1.1, 2, 1)


@settings(max_examples=200, deadline=None)
@given(st.floats(3.0, 15.0), st.integers(2, 10), st.integers(2, 100_000))
def test_compute_K_matches_oracle(psi, n, q):
    assert compute_K(psi, 1.1, n, q) == k_oracle(psi, 1.1, n, q)


def planner_with_states(env, count, seed, **cfg):
    p = LITPlanner(env, PlannerConfig(**cfg), make_rng(seed))
    rng = np.random.default_rng(seed)
    pts = rng.random((count, env.dim))
    p._add_states(pts, np.ones(count, bool))
    return p


def test_nearest_matches_brute_force():
    env = make_empty(3)
    for seed in range(10):
        p = planner_with_states(env, 200, seed)
        pts = p.ledger.points
        v = p.start_id
        for K in (1, 7, 40, 500):
            nbrs, dists = p.nearest(v, K)
            d = np.linalg.norm(pts - pts[v], axis=1)
            d[v] = np.inf
            expect = np.argsort(d, kind="stable")[:min(K, len(d) - 1)]
            assert nbrs.tolist() == expect.tolist()
            assert np.allclose(dists, d[expect])


def test_expand_fresh_vertex_queues_all_neighbours():
    env = make_empty(2)
    p = planner_with_states(env, 200, 3)
    pushed = p.expand(p.start_id, 12)
    nbrs, _ = p.nearest(p.start_id, 12)
    assert sorted(x for _, x in pushed) == sorted(nbrs.tolist())
    lower = p.g[p.start_id] + p.h[p.start_id]
    assert all(key >= lower - 1e-12 for key, *_ in p.edge_queue)
    assert p.center_k == p.start_id


def test_queries_on_fresh_tree():
    p = LITPlanner(make_empty(2), PlannerConfig(), make_rng(0))
    assert not p.solution_updated()
    assert p.should_expand()


def test_solution_updated_fires_once():
    p = LITPlanner(make_empty(2), PlannerConfig(time_budget=0.05), make_rng(0))
    p._sample(p.config.b_init)
    p._push_vertex(p.start_id)
    fired = 0
    while not p.solutions:
        p.step()
    fired += p.solution_updated()
    assert fired == 1 and not p.solution_updated()


def test_prune_rules():
    env = make_empty(2)
    p = planner_with_states(env, 300, 1)
    before = p.status.copy()
    p.prune()                                   # no solution yet
    assert np.array_equal(before, p.status)
    sols = LITPlanner(env, PlannerConfig(time_budget=0.1), make_rng(2))
    sols.run()
    sols.prune()
    size = sols.ledger.size
    inf = InformedSet(env.start, env.goals[0], sols.c_best)
    free = np.flatnonzero(sols.status[:size] == FREE)
    free = [i for i in free if i not in sols.goal_ids]
    assert np.all(inf.contains(sols.ledger.points[free]))
    assert all(sols.status[i] == VERTEX for i in sols.best_path_ids)


def test_prune_boundary_is_pruned():
    env = make_empty(2)
    p = LITPlanner(env, PlannerConfig(), make_rng(0))
    ids = p._add_states(np.array([[0.5, 0.3], [0.5, 0.5]]), np.ones(2, bool))
    p.c_best = float(p.lb[ids[0]])               # first state exactly on the boundary
    p.best_path_ids = [p.start_id]
    p.prune()
    assert p.status[ids[0]] == PRUNED and p.status[ids[1]] == FREE


def check_solutions(env, sols):
    costs = [s.cost for s in sols]
    assert all(a > b for a, b in zip(costs, costs[1:]))
    for s in sols:
        assert np.array_equal(s.path[0], env.start)
        assert any(np.array_equal(s.path[-1], g) for g in env.goals)
        for a, b in zip(s.path, s.path[1:]):
            assert is_edge_valid(env, a, b)
        assert s.cost == pytest.approx(np.sum(np.linalg.norm(np.diff(s.path, axis=0), axis=1)))


@pytest.mark.parametrize("seed", range(3))
def test_narrow_passage_paths_use_gap(seed):
    env = make_narrow_passage(2, gap_width=0.2)
    sols = plan(env, PlannerConfig(time_budget=0.3), make_rng(seed))
    assert sols
    check_solutions(env, sols)
    for s in sols:
        # the segment crossing the wall plane x0 = 0.5 passes through the gap
        crossings = 0
        for a, b in zip(s.path, s.path[1:]):
            if (a[0] - 0.5) * (b[0] - 0.5) <= 0 and a[0] != b[0]:
                t = (0.5 - a[0]) / (b[0] - a[0])
                assert abs(a[1] + t * (b[1] - a[1]) - 0.5) <= 0.1
                crossings += 1
        assert crossings >= 1


def test_empty_world_converges():
    env = make_empty(2)
    sols = plan(env, PlannerConfig(time_budget=1.0), make_rng(0))
    sl = np.linalg.norm(env.goals[0] - env.start)
    assert sols[-1].cost <= 1.001 * 1.01 * sl


def test_zero_and_tiny_budgets():
    env = make_narrow_passage(4, gap_width=0.1)
    assert plan(env, PlannerConfig(time_budget=0.0), make_rng(0)) == []
    assert plan(env, PlannerConfig(time_budget=1e-4), make_rng(0)) == []


def test_mode_equivalence_fixed_vs_constant_tensor():
    env = make_narrow_passage(3)
    cfg = PlannerConfig(max_iterations=4000, fixed_B=60, fixed_psi=4.0)
    fixed = LITPlanner(env, cfg, make_rng(5)).run()
    tb = PolicyTensor.constant("B", 60)
    tk = PolicyTensor.constant("K", 4.0)
    tens = LITPlanner(env, cfg, make_rng(5), TensorSource(tb), TensorSource(tk))
    other = tens.run()
    assert tens.decisions["K"] > 0
    assert [s.cost for s in fixed] == [s.cost for s in other]
    assert all(np.array_equal(a.path, b.path) for a, b in zip(fixed, other))


def test_determinism_same_seed():
    env = make_narrow_passage(4)
    a = plan(env, PlannerConfig(time_budget=0.2), make_rng(9))
    b = plan(env, PlannerConfig(time_budget=0.2), make_rng(9))
    assert [(s.cost, s.time) for s in a] == [(s.cost, s.time) for s in b]


def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(eta=0.5)
    with pytest.raises(ValueError):
        PlannerConfig(b_init=10)
    with pytest.raises(ValueError):
        PlannerConfig(mode="magic")


def test_observation_in_unit_cube_during_run():
    env = make_narrow_passage(3)
    seen = []

    class Spy(ConstantSource):
        needs_observation = True

        def __call__(self, obs, planner):
            seen.append(obs.as_array())
            return self.value

    LITPlanner(env, PlannerConfig(time_budget=0.1), make_rng(1), Spy(80), Spy(3.0)).run()
    seen = np.array(seen)
    assert len(seen) > 10 and np.all((seen >= 0) & (seen <= 1))


def test_result_json(tmp_path):
    env = make_empty(2)
    cfg = PlannerConfig(time_budget=0.05)
    sols = plan(env, cfg, make_rng(0))
    path = tmp_path / "r.json"
    save_result(path, sols, cfg, 0)
    doc = json.loads(path.read_text())
    assert doc["seed"] == 0 and len(doc["solutions"]) == len(sols)
    assert doc["config"]["eta"] == 1.1
    assert math.isclose(doc["solutions"][0]["cost"], sols[0].cost)
