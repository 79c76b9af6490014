"""Configuration spaces with axis-aligned box obstacles, samplers and measures.

Random streams are ``numpy.random.Generator`` objects backed by PCG64
(see :func:`make_rng`); equal seeds give bit-identical sample sequences.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

RngStream = np.random.Generator

INFORMED_RETRY_CAP = 1000


def make_rng(seed):
    """PCG64 generator for a 64-bit unsigned seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def _frozen(values, dim=None):
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"expected {dim} coordinates, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("state coordinates must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class AxisBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen(self.lo), _frozen(self.hi)
        if lo.shape != hi.shape:
            raise ValueError("box corners differ in dimension")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.shape[0]

    @property
    def measure(self):
        return float(np.prod(self.hi - self.lo))

    def contains(self, x):
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all((x >= self.lo) & (x <= self.hi)))


@dataclass(frozen=True, eq=False)
class Environment:
    dim: int
    bounds: AxisBox
    obstacles: tuple
    start: np.ndarray
    goals: tuple
    delta: float = None
    obs_lo: np.ndarray = field(init=False, repr=False, compare=False)
    obs_hi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        if self.bounds.dim != self.dim:
            raise ValueError("bounds dimension mismatch")
        obstacles = tuple(self.obstacles)
        for box in obstacles:
            if box.dim != self.dim:
                raise ValueError("obstacle dimension mismatch")
        object.__setattr__(self, "obstacles", obstacles)
        object.__setattr__(self, "start", _frozen(self.start, self.dim))
        goals = tuple(_frozen(g, self.dim) for g in self.goals)
        if not goals:
            raise ValueError("at least one goal state is required")
        object.__setattr__(self, "goals", goals)
        delta = self.delta
        if delta is None:
            delta = 0.01 * float(np.min(self.bounds.hi - self.bounds.lo))
        if not delta > 0:
            raise ValueError("collision resolution must be positive")
        object.__setattr__(self, "delta", float(delta))
        lo = np.array([b.lo for b in obstacles], dtype=np.float64).reshape(-1, self.dim)
        hi = np.array([b.hi for b in obstacles], dtype=np.float64).reshape(-1, self.dim)
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "obs_lo", lo)
        object.__setattr__(self, "obs_hi", hi)
        if not is_state_valid(self, self.start):
            raise ValueError("start state is not valid")
        for g in goals:
            if not is_state_valid(self, g):
                raise ValueError("goal state is not valid")

    @property
    def bounds_measure(self):
        return self.bounds.measure

    @property
    def goal_array(self):
        return np.array(self.goals)


def _as_state(env, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != env.dim:
        raise ValueError(f"state has shape {x.shape}, environment dimension is {env.dim}")
    return x


def is_state_valid(env, x):
    """Inside bounds and outside every obstacle (obstacle boundaries are invalid)."""
    x = _as_state(env, x)
    return bool(kernels.points_valid(x[None, :], env.bounds.lo, env.bounds.hi,
                                     env.obs_lo, env.obs_hi)[0])


def states_valid(env, points):
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != env.dim:
        raise ValueError("points must have shape (m, dim)")
    return kernels.points_valid(points, env.bounds.lo, env.bounds.hi, env.obs_lo, env.obs_hi)


def edge_check(env, a, b):
    """Return ``(valid, states_checked)`` for the straight segment a -> b."""
    a = np.ascontiguousarray(_as_state(env, a))
    b = np.ascontiguousarray(_as_state(env, b))
    ok, checked = kernels.segment_check(a, b, env.bounds.lo, env.bounds.hi,
                                        env.obs_lo, env.obs_hi, env.delta)
    return bool(ok), int(checked)


def is_edge_valid(env, a, b):
    """Every interpolated state at spacing <= delta (endpoints included) is valid.

    Obstacles thinner than ``delta`` can slip between two check points.
    """
    return edge_check(env, a, b)[0]


def sample_uniform(env, rng):
    return rng.uniform(env.bounds.lo, env.bounds.hi)


def sample_uniform_batch(env, rng, count):
    return rng.uniform(env.bounds.lo, env.bounds.hi, size=(count, env.dim))


def unit_ball_measure(n):
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


@dataclass(frozen=True, eq=False)
class InformedSet:
    """Prolate hyperspheroid of states that could improve a path of cost ``c_best``."""

    x_a: np.ndarray
    x_b: np.ndarray
    c_best: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "x_a", _frozen(self.x_a))
        object.__setattr__(self, "x_b", _frozen(self.x_b, self.x_a.shape[0]))
        object.__setattr__(self, "c_best", float(self.c_best))

    @property
    def c_min(self):
        return float(np.linalg.norm(self.x_b - self.x_a))

    @property
    def has_solution(self):
        return math.isfinite(self.c_best)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=np.float64)
        focal = np.linalg.norm(x - self.x_a, axis=-1) + np.linalg.norm(x - self.x_b, axis=-1)
        return focal <= self.c_best + tol


def rotation_to_world(x_a, x_b):
    """Rotation taking the first basis vector onto the unit vector x_a -> x_b."""
    n = x_a.shape[0]
    diff = x_b - x_a
    norm = np.linalg.norm(diff)
    if norm == 0.0:
        return np.eye(n)
    m = np.outer(diff / norm, np.eye(n)[0])
    u, _, vt = np.linalg.svd(m)
    d = np.ones(n)
    d[-1] = np.linalg.det(u) * np.linalg.det(vt)
    return u @ np.diag(d) @ vt


def _unit_ball_batch(rng, count, n):
    g = rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random(count)[:, None] ** (1.0 / n)


def _spheroid_batch(inf, rng, count):
    n = inf.x_a.shape[0]
    c_best, c_min = inf.c_best, inf.c_min
    radii = np.full(n, math.sqrt(max(c_best * c_best - c_min * c_min, 0.0)) / 2.0)
    radii[0] = c_best / 2.0
    rot = rotation_to_world(inf.x_a, inf.x_b)
    centre = (inf.x_a + inf.x_b) / 2.0
    ball = _unit_ball_batch(rng, count, n)
    return (ball * radii) @ rot.T + centre


def sample_informed_batch(inf, env, rng, count):
    """``count`` states uniform over the informed set intersected with the bounds.

    States outside the bounds are redrawn; after ``INFORMED_RETRY_CAP`` rounds the
    remainder is drawn uniformly over the bounds. Falls back to uniform sampling
    while no solution exists.
    """
    if not inf.has_solution:
        return sample_uniform_batch(env, rng, count)
    out = np.empty((count, env.dim))
    filled = 0
    for _ in range(INFORMED_RETRY_CAP):
        if filled == count:
            break
        cand = _spheroid_batch(inf, rng, count - filled)
        keep = cand[np.all((cand >= env.bounds.lo) & (cand <= env.bounds.hi), axis=1)]
        out[filled:filled + keep.shape[0]] = keep
        filled += keep.shape[0]
    if filled < count:
        out[filled:] = sample_uniform_batch(env, rng, count - filled)
    return out


def sample_informed(inf, env, rng):
    return sample_informed_batch(inf, env, rng, 1)[0]


def hyperspheroid_measure(inf, n, bounds=None):
    """Lebesgue measure of the informed set; the bounds measure when no solution exists."""
    if not inf.has_solution:
        if bounds is None:
            raise ValueError("bounds are required when c_best is infinite")
        return bounds.measure
    c_best, c_min = inf.c_best, inf.c_min
    if c_best < c_min:
        raise ValueError("c_best must be >= c_min")
    return (c_best * (c_best * c_best - c_min * c_min) ** ((n - 1) / 2.0)
            * unit_ball_measure(n) / 2.0 ** n)


# --------------------------------------------------------------------------
# benchmark worlds
# --------------------------------------------------------------------------

def _unit_bounds(dim):
    return AxisBox(np.zeros(dim), np.ones(dim))


def make_narrow_passage(dim, gap_width=0.25, seed=0, wall_thickness=0.05):
    """Unit cube split by a wall orthogonal to axis 0 with a centred square gap.

    The wall is the slab ``|x0 - 0.5| <= wall_thickness / 2``; the gap is the
    open cube of side ``gap_width`` centred at 0.5 on every other axis. ``seed``
    is accepted for interface symmetry with the random worlds; the layout is fixed.
    """
    if dim < 2:
        raise ValueError("narrow passage needs dim >= 2")
    if not 0 < gap_width < 1:
        raise ValueError("gap_width must lie in (0, 1)")
    w_lo, w_hi = 0.5 - wall_thickness / 2.0, 0.5 + wall_thickness / 2.0
    g_lo, g_hi = 0.5 - gap_width / 2.0, 0.5 + gap_width / 2.0
    obstacles = []
    for axis in range(1, dim):
        for lo_val, hi_val in ((0.0, g_lo), (g_hi, 1.0)):
            lo = np.zeros(dim)
            hi = np.ones(dim)
            lo[0], hi[0] = w_lo, w_hi
            lo[axis], hi[axis] = lo_val, hi_val
            obstacles.append(AxisBox(lo, hi))
    start = np.full(dim, 0.25)
    start[0] = 0.1
    goal = np.full(dim, 0.25)
    goal[0] = 0.9
    return Environment(dim, _unit_bounds(dim), tuple(obstacles), start, (goal,))


def make_random_rectangles(dim, count=10, max_side=0.35, seed=0):
    """``count`` random boxes in the unit cube; start near the low corner, goal near the high one.

    Boxes containing the start or the goal are redrawn. Side lengths are uniform
    in ``[max_side / 4, max_side]`` per axis.
    """
    if dim < 2:
        raise ValueError("random rectangles need dim >= 2")
    if count < 0:
        raise ValueError("count must be non-negative")
    if not max_side > 0:
        raise ValueError("max_side must be positive")
    rng = make_rng(seed)
    start = np.full(dim, 0.1)
    goal = np.full(dim, 0.9)
    obstacles = []
    while len(obstacles) < count:
        centre = rng.uniform(0.0, 1.0, size=dim)
        half = rng.uniform(max_side / 4.0, max_side, size=dim) / 2.0
        box = AxisBox(np.clip(centre - half, 0.0, 1.0), np.clip(centre + half, 0.0, 1.0))
        if box.contains(start) or box.contains(goal):
            continue
        obstacles.append(box)
    return Environment(dim, _unit_bounds(dim), tuple(obstacles), start, (goal,))


def make_empty(dim):
    start = np.full(dim, 0.1)
    goal = np.full(dim, 0.9)
    return Environment(dim, _unit_bounds(dim), (), start, (goal,))


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------

def env_to_dict(env):
    return {
        "dim": env.dim,
        "bounds": {"lo": env.bounds.lo.tolist(), "hi": env.bounds.hi.tolist()},
        "obstacles": [{"lo": b.lo.tolist(), "hi": b.hi.tolist()} for b in env.obstacles],
        "start": env.start.tolist(),
        "goals": [g.tolist() for g in env.goals],
        "delta": env.delta,
    }


def env_from_dict(doc):
    return Environment(
        dim=int(doc["dim"]),
        bounds=AxisBox(doc["bounds"]["lo"], doc["bounds"]["hi"]),
        obstacles=tuple(AxisBox(o["lo"], o["hi"]) for o in doc["obstacles"]),
        start=doc["start"],
        goals=tuple(doc["goals"]),
        delta=float(doc["delta"]),
    )


def save_env(env, path):
    with open(path, "w") as fh:
        json.dump(env_to_dict(env), fh, indent=1)


def load_env(path):
    with open(path) as fh:
        return env_from_dict(json.load(fh))
