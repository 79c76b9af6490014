"""Gaussian fuzzification of observations and TSK defuzzification of rule weights."""
from dataclasses import dataclass

import numpy as np

INPUTS = ("global", "local", "lambda")
SETS = ("S", "M", "D")

HEAD_RANGES = {"B": (20.0, 200.0), "K": (3.0, 15.0)}


@dataclass(frozen=True, eq=False)
class MembershipParams:
    """Centres and widths, shape (3 inputs, 3 sets)."""

    centers: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        c = np.array(self.centers, dtype=np.float64).reshape(3, 3)
        w = np.array(self.widths, dtype=np.float64).reshape(3, 3)
        if np.any(w <= 0):
            raise ValueError("membership widths must be positive")
        if np.any(np.diff(c, axis=1) <= 0):
            raise ValueError("centres must be strictly increasing S < M < D")
        c.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "widths", w)

    @classmethod
    def default(cls):
        return cls(np.tile([0.0, 0.5, 1.0], (3, 1)), np.full((3, 3), 0.2))

    def lipschitz(self):
        return float(np.max(1.0 / (self.widths * np.sqrt(np.e))))

    def to_dict(self):
        return {"centers": self.centers.tolist(), "widths": self.widths.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["centers"], doc["widths"])


@dataclass(frozen=True, eq=False)
class RuleConsequents:
    f: np.ndarray
    head: str

    def __post_init__(self):
        if self.head not in HEAD_RANGES:
            raise ValueError(f"unknown head {self.head!r}")
        f = np.array(self.f, dtype=np.float64).reshape(3)
        lo, hi = HEAD_RANGES[self.head]
        if np.any(np.diff(f) < 0):
            raise ValueError("consequents must be ascending")
        if f[0] < lo or f[-1] > hi:
            raise ValueError(f"consequents for head {self.head} must lie in [{lo}, {hi}]")
        f.flags.writeable = False
        object.__setattr__(self, "f", f)

    @classmethod
    def default(cls, head):
        if head == "B":
            return cls([20.0, 110.0, 200.0], "B")
        return cls([3.0, 9.0, 15.0], "K")

    @property
    def value_range(self):
        return HEAD_RANGES[self.head]

    def to_dict(self):
        return {"f": self.f.tolist(), "head": self.head}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["f"], doc["head"])


def fuzzify(obs, params=None):
    """9-vector of memberships, input-major: [g_S, g_M, g_D, l_S, ..., lam_D].

    ``obs`` is a MapObservation or anything array-like of length 3 (or (m, 3)).
    """
    if params is None:
        params = MembershipParams.default()
    x = obs.as_array() if hasattr(obs, "as_array") else np.asarray(obs, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    mu = np.exp(-((x[:, :, None] - params.centers[None]) ** 2)
                / (2.0 * params.widths[None] ** 2))
    mu = mu.reshape(x.shape[0], 9)
    return mu[0] if single else mu


def tsk_value(w, f):
    """Raw weighted mean sum(w f) / sum(w); rows of ``w`` are independent."""
    w = np.asarray(w, dtype=np.float64)
    return (w @ f) / np.sum(w, axis=-1)


def tsk_gradient(w, f):
    """d z / d w_i = (f_i - z) / sum(w)."""
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    total = np.sum(w, axis=1, keepdims=True)
    z = (w @ f)[:, None] / total
    return (f[None, :] - z) / total


def defuzzify_tsk(w, cons):
    """Crisp head output: B rounds to an integer; both heads clamp to their range.

    A zero weight sum returns the middle of the head's range.
    """
    w = np.asarray(w, dtype=np.float64).reshape(3)
    if np.any(w < 0):
        raise ValueError("rule weights must be non-negative")
    lo, hi = cons.value_range
    total = float(np.sum(w))
    if total == 0.0:
        z = (lo + hi) / 2.0
    else:
        z = float(np.dot(w, cons.f)) / total
    if cons.head == "B":
        z = float(np.floor(z + 0.5))
    return min(max(z, lo), hi)
