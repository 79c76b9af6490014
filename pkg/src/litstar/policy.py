"""Policy tensors: actor outputs pre-computed on a 3-axis observation grid."""
import json
from dataclasses import dataclass

import numpy as np

from .fuzzy import HEAD_RANGES, defuzzify_tsk, fuzzify
from .neuralnet import forward

AXIS_NAMES = ("rho_global", "rho_local", "lambda_norm")
DEFAULT_BINS = 21


@dataclass(frozen=True)
class AxisSpec:
    name: str
    min: float = 0.0
    max: float = 1.0
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        if not self.min < self.max:
            raise ValueError("axis requires min < max")
        if self.bins < 2:
            raise ValueError("axis requires at least two bins")

    def index(self, v):
        v = min(max(float(v), self.min), self.max)
        i = int(np.floor((v - self.min) / (self.max - self.min) * self.bins))
        return min(i, self.bins - 1)

    def centers(self):
        return self.min + (np.arange(self.bins) + 0.5) * (self.max - self.min) / self.bins


def default_axes(bins=DEFAULT_BINS):
    return tuple(AxisSpec(name, 0.0, 1.0, bins) for name in AXIS_NAMES)


@dataclass(frozen=True, eq=False)
class PolicyTensor:
    axes: tuple
    values: np.ndarray
    head: str

    def __post_init__(self):
        if len(self.axes) != 3:
            raise ValueError("policy tensors have exactly three axes")
        if self.head not in HEAD_RANGES:
            raise ValueError(f"unknown head {self.head!r}")
        shape = tuple(a.bins for a in self.axes)
        vals = np.array(self.values, dtype=np.float64).reshape(shape)
        lo, hi = self.value_range
        if np.any(vals < lo) or np.any(vals > hi):
            raise ValueError(f"values for head {self.head} must lie in [{lo}, {hi}]")
        if self.head == "B" and np.any(vals != np.round(vals)):
            raise ValueError("batch-size tensor values must be integers")
        vals.flags.writeable = False
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "values", vals)

    @property
    def value_range(self):
        return HEAD_RANGES[self.head]

    @classmethod
    def constant(cls, head, value, axes=None):
        axes = default_axes() if axes is None else axes
        return cls(axes, np.full(tuple(a.bins for a in axes), float(value)), head)


def to_index(obs, axes):
    """Bin indices (x, y, z); values are clamped to each axis range, max maps to the top bin."""
    v = obs.as_array() if hasattr(obs, "as_array") else np.asarray(obs, dtype=np.float64)
    return tuple(ax.index(val) for ax, val in zip(axes, v))


def policy_value(actor, fuzzy_params, consequents, obs):
    """Crisp head output for one observation: fuzzify -> actor -> TSK defuzzify."""
    weights, _ = forward(actor, fuzzify(obs, fuzzy_params))
    return defuzzify_tsk(weights, consequents)


def bake(actor, fuzzy_params, consequents, axes=None, head=None):
    """Evaluate the policy at every bin centre.

    Each cell is computed through :func:`policy_value` one observation at a
    time so lookups match direct evaluation bit for bit.
    """
    axes = default_axes() if axes is None else tuple(axes)
    head = consequents.head if head is None else head
    if head != consequents.head:
        raise ValueError(f"consequents are for head {consequents.head}, not {head}")
    if actor.architecture != "actor":
        raise ValueError("bake needs an actor network")
    grids = [a.centers() for a in axes]
    values = np.empty(tuple(a.bins for a in axes))
    for i, g in enumerate(grids[0]):
        for j, l in enumerate(grids[1]):
            for k, lam in enumerate(grids[2]):
                values[i, j, k] = policy_value(actor, fuzzy_params, consequents,
                                               np.array([g, l, lam]))
    return PolicyTensor(axes, values, head)


def lookup(tensor, obs):
    return float(tensor.values[to_index(obs, tensor.axes)])


def tensor_to_dict(tensor):
    return {
        "head": tensor.head,
        "axes": [{"name": a.name, "min": a.min, "max": a.max, "bins": a.bins} for a in tensor.axes],
        "value_range": list(tensor.value_range),
        "values": tensor.values.reshape(-1).tolist(),
    }


def tensor_from_dict(doc):
    axes = tuple(AxisSpec(a["name"], float(a["min"]), float(a["max"]), int(a["bins"]))
                 for a in doc["axes"])
    if tuple(doc.get("value_range", HEAD_RANGES[doc["head"]])) != HEAD_RANGES[doc["head"]]:
        raise ValueError("value_range does not match the head")
    return PolicyTensor(axes, doc["values"], doc["head"])


def save_tensor(path, tensor):
    with open(path, "w") as fh:
        json.dump(tensor_to_dict(tensor), fh)


def load_tensor(path):
    with open(path) as fh:
        return tensor_from_dict(json.load(fh))
