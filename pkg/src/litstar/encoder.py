"""Map encoding: global/local invalid ratios and the normalised informed-set measure."""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .space import hyperspheroid_measure, unit_ball_measure


class SampleLedger:
    """Every classified sample, valid or invalid, stored in growable arrays.

    Entries are addressed by the integer id returned from :meth:`add`. Valid
    entries can be retired (pruned); invalid entries are kept for the lifetime
    of the ledger because the invalid ratios count them.
    """

    def __init__(self, dim, capacity=1024):
        self.dim = dim
        self._points = np.empty((capacity, dim))
        self._invalid = np.zeros(capacity, dtype=bool)
        self._alive = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.n_valid = 0
        self.n_invalid = 0

    def _grow(self, need):
        cap = self._points.shape[0]
        if need <= cap:
            return
        new_cap = max(need, 2 * cap)
        pts = np.empty((new_cap, self.dim))
        pts[:self.size] = self._points[:self.size]
        inv = np.zeros(new_cap, dtype=bool)
        inv[:self.size] = self._invalid[:self.size]
        alive = np.zeros(new_cap, dtype=bool)
        alive[:self.size] = self._alive[:self.size]
        self._points, self._invalid, self._alive = pts, inv, alive

    def add(self, points, valid):
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        valid = np.asarray(valid, dtype=bool).reshape(-1)
        m = points.shape[0]
        self._grow(self.size + m)
        ids = np.arange(self.size, self.size + m)
        self._points[ids] = points
        self._invalid[ids] = ~valid
        self._alive[ids] = True
        self.size += m
        k = int(np.count_nonzero(valid))
        self.n_valid += k
        self.n_invalid += m - k
        return ids

    def retire(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size == 0:
            return
        if np.any(self._invalid[ids]):
            raise ValueError("invalid ledger entries cannot be retired")
        live = ids[self._alive[ids]]
        self._alive[live] = False
        self.n_valid -= int(np.unique(live).size)

    def point(self, i):
        return self._points[i]

    @property
    def points(self):
        """All entries ever stored (retired ones included), indexed by id."""
        return self._points[:self.size]

    @property
    def alive(self):
        return self._alive[:self.size]

    @property
    def invalid(self):
        return self._invalid[:self.size]

    def live_points(self):
        """Compact ``(points, invalid_mask)`` of the current X_valid and X_invalid."""
        mask = self.alive
        return np.ascontiguousarray(self._points[:self.size][mask]), self._invalid[:self.size][mask]

    def __len__(self):
        return self.n_valid + self.n_invalid


@dataclass(frozen=True)
class MapObservation:
    rho_global: float
    rho_local: float
    lambda_norm: float

    def as_array(self):
        return np.array([self.rho_global, self.rho_local, self.lambda_norm])


def ratio_calc(invalid_count, valid_count):
    """|X_invalid| / (|X_valid| + |X_invalid|), with 0 for an empty set."""
    if invalid_count < 0 or valid_count < 0:
        raise ValueError("counts must be non-negative")
    total = invalid_count + valid_count
    if total == 0:
        return 0.0
    return invalid_count / total


def local_radius(q, n, free_measure, eta):
    """Connection radius of an r-disc random geometric graph with q states."""
    if q < 2:
        raise ValueError("radius needs at least two states")
    ratio = free_measure / unit_ball_measure(n)
    return eta * (2.0 * (1.0 + 1.0 / n) * ratio * (math.log(q) / q)) ** (1.0 / n)


def _ball_ratios(ledger, centers, r):
    if r <= 0:
        raise ValueError("radius must be positive")
    pts, inv = ledger.live_points()
    centers = np.ascontiguousarray(np.asarray(centers, dtype=np.float64).reshape(-1, ledger.dim))
    n_valid, n_invalid = kernels.ball_counts(pts, inv, centers, float(r))
    return [ratio_calc(int(a), int(b)) for a, b in zip(n_invalid, n_valid)]


def local_ratio_B(ledger, path_states, r):
    """Mean invalid ratio over balls of radius r centred on the path states."""
    if len(path_states) == 0:
        if r <= 0:
            raise ValueError("radius must be positive")
        return 0.0
    ratios = _ball_ratios(ledger, path_states, r)
    return sum(ratios) / len(ratios)


def local_ratio_K(ledger, center_k, r):
    return _ball_ratios(ledger, [center_k], r)[0]


def observe(ledger, inf, env, path_states, center_k, head="B", eta=1.1):
    """Observation triple for one network head.

    ``head="B"`` averages local ratios along the current path; ``head="K"``
    uses the single ball around ``center_k``. The free-space measure in the
    radius is estimated as ``(1 - rho_global) * measure(bounds)``.
    """
    rho_global = ratio_calc(ledger.n_invalid, ledger.n_valid)
    q = len(ledger)
    rho_local = 0.0
    if q >= 2:
        free = max(1.0 - rho_global, 1.0 / q) * env.bounds_measure
        r = local_radius(q, env.dim, free, eta)
        if head == "B":
            rho_local = local_ratio_B(ledger, path_states, r)
        elif head == "K":
            rho_local = local_ratio_K(ledger, center_k, r)
        else:
            raise ValueError(f"unknown head {head!r}")
    if inf is None or not inf.has_solution:
        lam = 1.0
    else:
        lam = min(1.0, hyperspheroid_measure(inf, env.dim) / env.bounds_measure)
    return MapObservation(rho_global, rho_local, lam)
