"""Learning-based informed trees: an anytime batch planner whose batch size and
neighbour factor come from fuzzy actor-critic policies."""
from .kernels import BACKEND
from .space import (AxisBox, Environment, InformedSet, make_empty, make_narrow_passage,
                    make_random_rectangles, make_rng)
from .planner import LITPlanner, PlannerConfig, SolutionRecord, compute_K, plan

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AxisBox", "Environment", "InformedSet", "LITPlanner", "PlannerConfig",
    "SolutionRecord", "compute_K", "make_empty", "make_narrow_passage",
    "make_random_rectangles", "make_rng", "plan",
]
