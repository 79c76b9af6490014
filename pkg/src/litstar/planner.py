"""Anytime batch-informed tree search with adaptive batch size and neighbour count.

The search substrate is a BIT*-style lazy edge queue over a k-nearest random
geometric graph. Each outer iteration:

1. when the best solution improved, a new batch size B is chosen;
2. when the edge queue cannot beat the vertex queue (or is exhausted), the best
   vertex is expanded to its K nearest states, with K derived from a chosen
   factor psi;
3. otherwise the best edge is collision-checked and, if useful, committed;
4. when both queues are exhausted, the graph is pruned to the informed set and
   a new batch of B samples is drawn and classified into valid/invalid.

B and psi come from one of three parameter sources: fixed constants, baked
policy tensors, or live actor networks.
"""
import heapq
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .encoder import SampleLedger, observe
from .space import (InformedSet, edge_check, sample_informed_batch,
                    sample_uniform_batch, states_valid)

FREE, VERTEX, PRUNED, INVALID = 0, 1, 2, 3

# Work-clock charges in nanoseconds of single-core work, measured once on a
# desk machine with the numba kernels; see WorkClock.
TICKS = {
    "state_check": 120.0,     # per collision-checked state
    "distance": 20.0,         # per candidate in a nearest-neighbour scan
    "edge_pop": 8000.0,
    "expansion": 20000.0,
    "decision": 2000.0,
    "observe": 30000.0,
    "observe_point": 18.0,    # per (ledger point, ball centre) pair
    "edge_push": 1500.0,
    "vertex_push": 1500.0,
    "batch": 60000.0,
    "prune_point": 80.0,
}
DEFAULT_TICKS_PER_SECOND = 1.0e9


class WallClock:
    def __init__(self):
        self._t0 = time.perf_counter()

    def charge(self, kind, amount=1.0):
        pass

    def elapsed(self):
        return time.perf_counter() - self._t0


class WorkClock:
    """Deterministic clock advanced by counted planner operations.

    Charges are weighted per operation kind (``TICKS``) and converted to
    seconds with ``ticks_per_second``, so equal seeds give equal timings on any
    machine.
    """

    def __init__(self, ticks_per_second=DEFAULT_TICKS_PER_SECOND):
        self.ticks_per_second = ticks_per_second
        self.ticks = 0.0
        self.counts = dict.fromkeys(TICKS, 0.0)

    def charge(self, kind, amount=1.0):
        self.ticks += TICKS[kind] * amount
        self.counts[kind] += amount

    def elapsed(self):
        return self.ticks / self.ticks_per_second


@dataclass
class PlannerConfig:
    eta: float = 1.1
    rewire_factor: float = 1.001
    b_init: int = 100
    mode: str = "fixed"
    fixed_B: int = 100
    fixed_psi: float = 3.0
    time_budget: float = 0.5
    goal_bias: float = 0.05
    clock: str = "work"
    ticks_per_second: float = DEFAULT_TICKS_PER_SECOND
    max_iterations: int = None

    def __post_init__(self):
        if self.eta < 1:
            raise ValueError("eta must be >= 1")
        if not 20 <= self.b_init <= 200:
            raise ValueError("b_init must lie in [20, 200]")
        if self.mode not in ("fixed", "tensor", "online"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.fixed_B < 1 or self.fixed_psi <= 0:
            raise ValueError("fixed_B and fixed_psi must be positive")
        if self.clock not in ("work", "wall"):
            raise ValueError(f"unknown clock {self.clock!r}")

    def make_clock(self):
        if self.clock == "wall":
            return WallClock()
        return WorkClock(self.ticks_per_second)


@dataclass
class SolutionRecord:
    path: np.ndarray
    cost: float
    time: float
    n_update: int

    def to_dict(self):
        return {"cost": self.cost, "time": self.time, "n_update": self.n_update,
                "path": self.path.tolist()}


def compute_K(psi, eta, n, q):
    """Neighbour count ceil(eta * e * psi * (1 + 1/n) * ln q), clamped to [1, q - 1]."""
    if q < 2:
        raise ValueError("q must be >= 2")
    if not psi > 0:
        raise ValueError("psi must be positive")
    k = math.ceil(eta * math.e * psi * (1.0 + 1.0 / n) * math.log(q))
    return int(min(max(k, 1), q - 1))


class ConstantSource:
    """Parameter source returning one value regardless of the observation."""

    needs_observation = False

    def __init__(self, value):
        self.value = value

    def __call__(self, obs, planner):
        return self.value


class TensorSource:
    needs_observation = True

    def __init__(self, tensor):
        self.tensor = tensor

    def __call__(self, obs, planner):
        from .policy import lookup
        return lookup(self.tensor, obs)


class ActorSource:
    """Live actor evaluation (fuzzify, forward, defuzzify) without exploration."""

    needs_observation = True

    def __init__(self, actor, fuzzy_params, consequents):
        self.actor = actor
        self.fuzzy_params = fuzzy_params
        self.consequents = consequents

    def __call__(self, obs, planner):
        from .policy import policy_value
        return policy_value(self.actor, self.fuzzy_params, self.consequents, obs)


class LITPlanner:
    """One plan invocation. Construct, then call :meth:`run`."""

    def __init__(self, env, config, rng, b_source=None, k_source=None):
        self.env = env
        self.config = config
        self.rng = rng
        self.clock = config.make_clock()
        self.b_source = b_source if b_source is not None else ConstantSource(config.fixed_B)
        self.k_source = k_source if k_source is not None else ConstantSource(config.fixed_psi)
        n = env.dim
        self.ledger = SampleLedger(n)
        self.status = np.zeros(1024, dtype=np.int8)
        self.g = np.full(1024, np.inf)
        self.h = np.zeros(1024)
        self.lb = np.zeros(1024)
        self.parent = np.full(1024, -1, dtype=np.int64)
        self.edge_cost = np.zeros(1024)
        self.expanded_g = np.full(1024, np.inf)
        self.ever_expanded = np.zeros(1024, dtype=bool)
        self.born = np.zeros(1024, dtype=np.int64)
        self.children = {}
        self.invalid_edges = set()
        self.vertex_queue = []
        self.edge_queue = []
        self._seq = 0
        self.c_best = math.inf
        self.best_goal = -1
        self.best_path_ids = []
        self.solutions = []
        self.n_update = 0
        self._solution_flag = False
        self._pruned_at = math.inf
        self.batch_size = config.b_init
        self.psi = None
        self.K = None
        self.iterations = 0
        self.batches = 0
        self.expansions = 0
        self.decisions = {"B": 0, "K": 0}
        self._goal_arr = env.goal_array

        start_id = self._add_states(env.start[None, :], np.array([True]))[0]
        self.start_id = int(start_id)
        self.goal_ids = [int(i) for i in self._add_states(self._goal_arr, np.ones(len(env.goals), bool))]
        self.status[self.start_id] = VERTEX
        self.g[self.start_id] = 0.0
        self.center_k = self.start_id

    # ------------------------------------------------------------------ state
    def _grow(self, need):
        cap = self.status.shape[0]
        if need <= cap:
            return
        new = max(need, 2 * cap)

        def ext(arr, fill):
            out = np.full(new, fill, dtype=arr.dtype)
            out[:cap] = arr
            return out

        self.status = ext(self.status, FREE)
        self.g = ext(self.g, np.inf)
        self.h = ext(self.h, 0.0)
        self.lb = ext(self.lb, 0.0)
        self.parent = ext(self.parent, -1)
        self.edge_cost = ext(self.edge_cost, 0.0)
        self.expanded_g = ext(self.expanded_g, np.inf)
        self.ever_expanded = ext(self.ever_expanded, False)
        self.born = ext(self.born, 0)

    def _add_states(self, points, valid):
        ids = self.ledger.add(points, valid)
        self._grow(self.ledger.size)
        pts = self.ledger.points[ids]
        d_goal = np.sqrt(((pts[:, None, :] - self._goal_arr[None]) ** 2).sum(axis=2)).min(axis=1)
        self.h[ids] = d_goal
        self.lb[ids] = np.sqrt(((pts - self.env.start) ** 2).sum(axis=1)) + d_goal
        self.status[ids] = np.where(valid, FREE, INVALID)
        self.born[ids] = self.batches
        return ids

    def _dist(self, a, b):
        pa, pb = self.ledger.points[a], self.ledger.points[b]
        return float(np.sqrt(np.dot(pa - pb, pa - pb)))

    def _push_vertex(self, v):
        self._seq += 1
        heapq.heappush(self.vertex_queue, (self.g[v] + self.h[v], self._seq, v))

    def _push_edge(self, key, u, x):
        self._seq += 1
        heapq.heappush(self.edge_queue, (key, self._seq, u, x))

    def _best_vertex_key(self):
        q = self.vertex_queue
        while q:
            key, _, v = q[0]
            if (self.status[v] != VERTEX or self.g[v] >= self.expanded_g[v]
                    or key != self.g[v] + self.h[v]):
                heapq.heappop(q)
                continue
            return key
        return math.inf

    def _best_edge_key(self):
        return self.edge_queue[0][0] if self.edge_queue else math.inf

    # --------------------------------------------------------------- queries
    def solution_updated(self):
        """True once after each strict improvement of the best solution."""
        flag = self._solution_flag
        self._solution_flag = False
        return flag

    def should_expand(self):
        """The edge queue is empty, cannot beat c_best, or the best vertex beats it."""
        e_key = self._best_edge_key()
        if e_key >= self.c_best:
            return True
        return self._best_vertex_key() <= e_key

    def informed_set(self):
        goal = self.env.goals[0] if self.best_goal < 0 else self.ledger.point(self.best_goal)
        return InformedSet(self.env.start, goal, self.c_best)

    def path_states(self):
        return self.ledger.points[self.best_path_ids] if self.best_path_ids else np.empty((0, self.env.dim))

    def observation(self, head):
        self.clock.charge("observe")
        self.clock.charge("observe_point", len(self.ledger) * (len(self.best_path_ids) if head == "B" else 1))
        return observe(self.ledger, self.informed_set(), self.env, self.path_states(),
                       self.ledger.point(self.center_k), head=head, eta=self.config.eta)

    def reward_info(self):
        """Factors for the rewards: latest solution time, cost, update count, path length."""
        if not self.solutions:
            return {"t": None, "c": None, "n_update": 0, "path_len": 0}
        last = self.solutions[-1]
        prev_t = self.solutions[-2].time if len(self.solutions) > 1 else 0.0
        return {"t": max(last.time - prev_t, 1e-9), "c": last.cost,
                "n_update": last.n_update, "path_len": int(last.path.shape[0])}

    def _decide(self, head):
        source = self.b_source if head == "B" else self.k_source
        obs = self.observation(head) if source.needs_observation else None
        self.clock.charge("decision")
        self.decisions[head] += 1
        return source(obs, self)

    # ------------------------------------------------------------ operations
    def expand(self, v, K):
        """Queue edges from vertex v to its K nearest valid states.

        A vertex expanded in an earlier batch only connects to samples drawn
        in the current batch; edges it already considered are not requeued.
        """
        self.expansions += 1
        self.clock.charge("expansion")
        fresh = not self.ever_expanded[v]
        self.ever_expanded[v] = True
        self.expanded_g[v] = self.g[v]
        self.center_k = v
        nbrs, dists = self.nearest(v, K)
        if nbrs.size == 0:
            return []
        gv = self.g[v]
        keys = gv + dists + self.h[nbrs]
        nst = self.status[nbrs]
        to_sample = nst == FREE
        if fresh:
            to_vertex = ((nst == VERTEX) & (gv + dists < self.g[nbrs])
                         & (self.parent[nbrs] != v) & (nbrs != self.parent[v]))
        else:
            to_sample &= self.born[nbrs] == self.batches
            to_vertex = np.zeros_like(to_sample)
        ok = (to_sample | to_vertex) & (keys < self.c_best)
        pushed = []
        for x, key in zip(nbrs[ok].tolist(), keys[ok].tolist()):
            if (v, x) in self.invalid_edges:
                continue
            self._push_edge(key, v, x)
            pushed.append((v, x))
        self.clock.charge("edge_push", len(pushed))
        return pushed

    def nearest(self, v, K):
        """Ids and distances of the K valid states (samples or vertices) closest to v.

        Ordered by distance, ties broken by id.
        """
        size = self.ledger.size
        st = self.status[:size]
        cand = np.flatnonzero((st == FREE) | (st == VERTEX))
        cand = cand[cand != v]
        if cand.size == 0:
            return cand, np.empty(0)
        pts = np.ascontiguousarray(self.ledger.points[cand])
        d2 = kernels.sq_distances(pts, np.ascontiguousarray(self.ledger.point(v)))
        self.clock.charge("distance", cand.size)
        if K < cand.size:
            sel = np.argpartition(d2, K - 1)[:K]
            sel = sel[np.lexsort((cand[sel], d2[sel]))]
        else:
            sel = np.lexsort((cand, d2))
        return cand[sel], np.sqrt(d2[sel])

    def _set_parent(self, x, u, cost):
        old = int(self.parent[x])
        if old >= 0:
            self.children[old].discard(x)
        self.parent[x] = u
        self.edge_cost[x] = cost
        self.children.setdefault(u, set()).add(x)
        self.g[x] = self.g[u] + cost
        stack = list(self.children.get(x, ()))
        while stack:
            c = stack.pop()
            self.g[c] = self.g[self.parent[c]] + self.edge_cost[c]
            stack.extend(self.children.get(c, ()))

    def process_best_edge(self):
        key, _, u, x = heapq.heappop(self.edge_queue)
        self.clock.charge("edge_pop")
        if self.status[u] != VERTEX or self.status[x] not in (FREE, VERTEX):
            return
        d = self._dist(u, x)
        key = self.g[u] + d + self.h[x]
        if key >= self.c_best:
            self.edge_queue.clear()
            return
        if self.status[x] == VERTEX and self.g[u] + d >= self.g[x]:
            return
        ok, checked = edge_check(self.env, self.ledger.point(u), self.ledger.point(x))
        self.clock.charge("state_check", checked)
        if not ok:
            self.invalid_edges.add((u, x))
            self.invalid_edges.add((x, u))
            return
        was_free = self.status[x] == FREE
        self._set_parent(x, u, d)
        if was_free:
            self.status[x] = VERTEX
        self._push_vertex(x)
        self._update_solution()

    def _update_solution(self):
        best, best_goal = self.c_best, -1
        for gid in self.goal_ids:
            if self.status[gid] == VERTEX and self.g[gid] < best:
                best, best_goal = float(self.g[gid]), gid
        if best_goal < 0:
            return
        ids = [best_goal]
        while ids[-1] != self.start_id:
            ids.append(int(self.parent[ids[-1]]))
        ids.reverse()
        self.c_best = best
        self.best_goal = best_goal
        self.best_path_ids = ids
        self.n_update += 1
        self._solution_flag = True
        self.solutions.append(SolutionRecord(self.ledger.points[ids].copy(), best,
                                             self.clock.elapsed(), self.n_update))

    def prune(self):
        """Drop free samples and off-path vertices whose lower bound is >= c_best.

        Invalid ledger entries are kept. Removed vertices take their subtree
        with them; subtree states still inside the informed set become free
        samples again.
        """
        c = self.c_best
        if not math.isfinite(c):
            return
        size = self.ledger.size
        self.clock.charge("prune_point", size)
        st = self.status[:size]
        lb = self.lb[:size]
        on_path = np.zeros(size, dtype=bool)
        on_path[self.best_path_ids] = True
        keep_goal = np.zeros(size, dtype=bool)
        keep_goal[self.goal_ids] = True
        drop_free = np.flatnonzero((st == FREE) & (lb >= c) & ~keep_goal)
        self.status[drop_free] = PRUNED
        retired = [drop_free]
        roots = np.flatnonzero((st == VERTEX) & (lb >= c) & ~on_path)
        for r in roots.tolist():
            if self.status[r] != VERTEX:
                continue
            p = int(self.parent[r])
            if p >= 0:
                self.children[p].discard(r)
            stack = [r]
            while stack:
                v = stack.pop()
                stack.extend(self.children.pop(v, ()))
                self.parent[v] = -1
                self.g[v] = np.inf
                self.expanded_g[v] = np.inf
                if self.lb[v] >= c and v not in self.goal_ids:
                    self.status[v] = PRUNED
                    retired.append(np.array([v]))
                else:
                    self.status[v] = FREE
                    self.ever_expanded[v] = False
                    self.born[v] = self.batches + 1
        self.ledger.retire(np.concatenate(retired))
        self._pruned_at = c

    def new_batch(self):
        """Prune (if the solution improved) and draw a batch of B classified samples."""
        if self.c_best < self._pruned_at:
            self.prune()
        self.edge_queue.clear()
        self.vertex_queue.clear()
        self._sample(self.batch_size)
        for gid in self.goal_ids:
            if self.status[gid] == FREE:
                self.born[gid] = self.batches
        size = self.ledger.size
        self.expanded_g[:size] = np.inf
        for v in np.flatnonzero(self.status[:size] == VERTEX).tolist():
            if self.g[v] + self.h[v] < self.c_best:
                self._push_vertex(v)
                self.clock.charge("vertex_push")

    def _sample(self, count):
        self.batches += 1
        self.clock.charge("batch")
        if math.isfinite(self.c_best):
            pts = sample_informed_batch(self.informed_set(), self.env, self.rng, count)
        else:
            pts = sample_uniform_batch(self.env, self.rng, count)
        valid = states_valid(self.env, pts)
        self.clock.charge("state_check", count)
        self._add_states(pts, valid)

    # ------------------------------------------------------------------ loop
    def step(self):
        """One outer iteration of the anytime loop."""
        self.iterations += 1
        if self.solution_updated():
            self.batch_size = int(self._decide("B"))
        if self.should_expand():
            v_key = self._best_vertex_key()
            if v_key < self.c_best and v_key <= self._best_edge_key():
                _, _, v = heapq.heappop(self.vertex_queue)
                self.psi = float(self._decide("K"))
                self.K = compute_K(self.psi, self.config.eta * self.config.rewire_factor,
                                   self.env.dim, max(self.ledger.n_valid, 2))
                self.expand(v, self.K)
            else:
                self.new_batch()
        else:
            self.process_best_edge()

    def done(self):
        if self.config.max_iterations is not None:
            return self.iterations >= self.config.max_iterations
        return self.clock.elapsed() >= self.config.time_budget

    def run(self):
        if self.config.max_iterations is None and self.config.time_budget <= 0:
            return []
        self._sample(self.config.b_init)
        self._push_vertex(self.start_id)
        while not self.done():
            self.step()
        for source in (self.b_source, self.k_source):
            finish = getattr(source, "finish", None)
            if finish is not None:
                finish(self)
        return self.solutions


def make_sources(config, tensors=None, actors=None):
    """Parameter sources for the configured mode.

    ``tensors`` is ``(tensor_B, tensor_K)``; ``actors`` is
    ``((actor_B, fuzzy, cons_B), (actor_K, fuzzy, cons_K))``. A ``None`` entry
    falls back to the fixed value for that head.
    """
    fixed = (ConstantSource(config.fixed_B), ConstantSource(config.fixed_psi))
    if config.mode == "fixed":
        return fixed
    if config.mode == "tensor":
        if tensors is None:
            raise ValueError("tensor mode needs policy tensors")
        return tuple(TensorSource(t) if t is not None else f for t, f in zip(tensors, fixed))
    if actors is None:
        raise ValueError("online mode needs actor networks")
    return tuple(ActorSource(*a) if a is not None else f for a, f in zip(actors, fixed))


def plan(env, config, rng, tensors=None, actors=None, sources=None):
    """Run the anytime planner; returns the list of improving SolutionRecords."""
    if sources is None:
        sources = make_sources(config, tensors, actors)
    planner = LITPlanner(env, config, rng, *sources)
    return planner.run()


def result_to_dict(solutions, config, seed):
    return {"solutions": [s.to_dict() for s in solutions], "config": asdict(config), "seed": seed}


def save_result(path, solutions, config, seed):
    with open(path, "w") as fh:
        json.dump(result_to_dict(solutions, config, seed), fh, indent=1)
