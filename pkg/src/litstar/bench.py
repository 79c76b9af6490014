"""Benchmark harness: seeded repeated runs, medians, order-statistic CIs, CSV and SVG output."""
import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import binom

from .planner import ActorSource, ConstantSource, LITPlanner, PlannerConfig, TensorSource
from .space import make_rng

CSV_FIELDS = ("planner", "seed", "t_init", "c_init", "c_final", "success")


@dataclass
class RunRecord:
    planner: str
    seed: int
    t_init: float
    c_init: float
    t_final: float
    c_final: float
    success: bool
    trace: list = field(default_factory=list)   # [(time, cost), ...] per improvement

    def cost_at(self, t):
        cost = math.inf
        for ti, ci in self.trace:
            if ti > t:
                break
            cost = ci
        return cost


@dataclass
class PlannerSummary:
    planner: str
    runs: int
    success_rate: float
    t_init: tuple          # (median, ci_lo, ci_hi)
    c_init: tuple
    c_final: tuple


# ---------------------------------------------------------------- registry
def _fixed(config, tensors, actors):
    return ConstantSource(100), ConstantSource(1.0)


def _tensor(config, tensors, actors):
    if tensors is None or any(t is None for t in tensors):
        raise ValueError("planner 'lit' needs both B and K policy tensors")
    return TensorSource(tensors[0]), TensorSource(tensors[1])


def _online(config, tensors, actors):
    if actors is None or any(a is None for a in actors):
        raise ValueError("planner 'lit-online' needs both B and K actors")
    return ActorSource(*actors[0]), ActorSource(*actors[1])


PLANNERS = {
    "lit": ("tensor", _tensor),
    "lit-tensor": ("tensor", _tensor),
    "lit-fixed": ("fixed", _fixed),
    "lit-online": ("online", _online),
}


def run_once(planner_id, env, config, seed, tensors=None, actors=None):
    if planner_id not in PLANNERS:
        raise ValueError(f"unknown planner {planner_id!r}; choose from {sorted(PLANNERS)}")
    mode, make = PLANNERS[planner_id]
    cfg = replace(config, mode=mode)
    if planner_id == "lit-fixed":
        cfg = replace(cfg, fixed_B=100, fixed_psi=1.0)
    sources = make(cfg, tensors, actors)
    sols = LITPlanner(env, cfg, make_rng(seed), *sources).run()
    trace = [(s.time, s.cost) for s in sols]
    if sols:
        return RunRecord(planner_id, seed, sols[0].time, sols[0].cost, cfg.time_budget,
                         sols[-1].cost, True, trace)
    return RunRecord(planner_id, seed, math.inf, math.inf, cfg.time_budget, math.inf, False, trace)


# ------------------------------------------------------------- statistics
def ci_indices(n, confidence=0.99):
    """1-based order-statistic indices (l, u) bracketing the median.

    The tightest symmetric pair u = n + 1 - l whose binomial(n, 1/2) mass
    P(l <= X <= u - 1) reaches ``confidence``; (1, n) when none does.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    best = (1, n)
    for l in range(1, (n + 1) // 2 + 1):
        u = n + 1 - l
        if u < l:
            break
        mass = binom.cdf(u - 1, n, 0.5) - binom.cdf(l - 1, n, 0.5)
        if mass >= confidence:
            best = (l, u)
        else:
            break
    return best


def nonparametric_ci(samples, confidence=0.99):
    """Median confidence interval (lo, hi) from order statistics; infinities sort last."""
    xs = sorted(float(x) for x in samples)
    l, u = ci_indices(len(xs), confidence)
    return xs[l - 1], xs[u - 1]


def median(samples):
    xs = sorted(float(x) for x in samples)
    n = len(xs)
    if n == 0:
        raise ValueError("median of nothing")
    if n % 2:
        return xs[n // 2]
    return (xs[n // 2 - 1] + xs[n // 2]) / 2   # inf if the upper middle failed


def summarize(records, confidence=0.99):
    out = {}
    for pid in dict.fromkeys(r.planner for r in records):
        rs = [r for r in records if r.planner == pid]

        def stat(name):
            vals = [getattr(r, name) for r in rs]
            return (median(vals),) + nonparametric_ci(vals, confidence)

        out[pid] = PlannerSummary(pid, len(rs), sum(r.success for r in rs) / len(rs),
                                  stat("t_init"), stat("c_init"), stat("c_final"))
    return out


def run_benchmark(env, planners, runs, budget, base_seed=0, tensors=None, actors=None, config=None):
    """Run each planner on seeds base_seed .. base_seed + runs - 1; returns (summary, records)."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    for pid in planners:
        if pid not in PLANNERS:
            raise ValueError(f"unknown planner {pid!r}; choose from {sorted(PLANNERS)}")
    config = replace(config or PlannerConfig(), time_budget=budget)
    records = []
    for pid in planners:
        for seed in range(base_seed, base_seed + runs):
            records.append(run_once(pid, env, config, seed, tensors, actors))
    records.sort(key=lambda r: (planners.index(r.planner), r.seed))
    return summarize(records), records


# ------------------------------------------------------------------ output
def _fmt(x):
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, float):
        return repr(x)
    return x


def emit_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in sorted(records, key=lambda r: (r.planner, r.seed)):
            w.writerow([_fmt(getattr(r, f)) for f in CSV_FIELDS])


def read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({"planner": row["planner"], "seed": int(row["seed"]),
                         "t_init": float(row["t_init"]), "c_init": float(row["c_init"]),
                         "c_final": float(row["c_final"]), "success": bool(int(row["success"]))})
    return rows


def cost_curves(records, times, confidence=0.99):
    """Median and CI of best-so-far cost on a time grid, per planner."""
    curves = {}
    for pid in dict.fromkeys(r.planner for r in records):
        rs = [r for r in records if r.planner == pid]
        med, lo, hi = [], [], []
        for t in times:
            vals = [r.cost_at(t) for r in rs]
            med.append(median(vals))
            a, b = nonparametric_ci(vals, confidence)
            lo.append(a)
            hi.append(b)
        curves[pid] = (np.array(med), np.array(lo), np.array(hi))
    return curves


def emit_plot(records, path, budget=None, title=None):
    """Median cost-vs-time step curves with CI bands on a log time axis (SVG)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "lit"
    finite_t = [t for r in records for t, _ in r.trace]
    if budget is None:
        budget = max((r.t_final for r in records), default=1.0)
    t0 = max(min(finite_t, default=budget * 1e-3), budget * 1e-4)
    times = np.geomspace(t0, budget, 200)
    fig, ax = plt.subplots(figsize=(6, 4))
    for pid, (med, lo, hi) in cost_curves(records, times).items():
        ok = np.isfinite(med)
        line, = ax.step(times[ok], med[ok], where="post", label=pid)
        band = np.isfinite(lo) & np.isfinite(hi)
        ax.fill_between(times[band], lo[band], hi[band], step="post", alpha=0.2,
                        color=line.get_color())
    ax.set_xscale("log")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("solution cost")
    if title:
        ax.set_title(title)
    if records:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
