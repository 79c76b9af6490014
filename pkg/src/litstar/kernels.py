"""Hot geometric kernels: point/segment validity, distance scans, ball counts.

Each kernel has a vectorised numpy implementation and a loop implementation
compiled with ``numba.njit``. The numba path is used when numba imports and
the environment variable ``LIT_DISABLE_NUMBA`` is unset (or ``0``). Both paths
return identical booleans and counts; distances may differ in the last ulp.
"""
import math
import os

import numpy as np

try:
    from numba import njit
    _numba_available = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba_available = False


def _env_disabled():
    return os.environ.get("LIT_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = _numba_available and not _env_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


def segment_point_count(length, delta):
    """Number of interpolated states (endpoints included) for spacing <= delta."""
    return int(max(1, math.ceil(length / delta))) + 1


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def points_valid_np(points, bounds_lo, bounds_hi, obs_lo, obs_hi):
    points = np.atleast_2d(points)
    ok = np.all((points >= bounds_lo) & (points <= bounds_hi), axis=1)
    if obs_lo.shape[0] == 0:
        return ok
    p = points[:, None, :]
    inside = np.all((p >= obs_lo[None]) & (p <= obs_hi[None]), axis=2)
    return ok & ~np.any(inside, axis=1)


def segment_check_np(a, b, bounds_lo, bounds_hi, obs_lo, obs_hi, delta):
    """Return (valid, states_checked) walking a -> b at spacing <= delta."""
    count = segment_point_count(float(np.sqrt(np.sum((b - a) ** 2))), delta)
    t = np.arange(count, dtype=np.float64) / (count - 1)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    ok = points_valid_np(pts, bounds_lo, bounds_hi, obs_lo, obs_hi)
    if ok.all():
        return True, count
    return False, int(np.argmin(ok)) + 1


def sq_distances_np(points, x):
    d = points - x[None, :]
    return np.einsum("ij,ij->i", d, d)


def ball_counts_np(points, invalid, centers, radius):
    """Per center, count (valid, invalid) points within ``radius`` (inclusive)."""
    n_valid = np.zeros(centers.shape[0], dtype=np.int64)
    n_invalid = np.zeros(centers.shape[0], dtype=np.int64)
    if points.shape[0] == 0:
        return n_valid, n_invalid
    r2 = radius * radius
    for i in range(centers.shape[0]):
        within = sq_distances_np(points, centers[i]) <= r2
        k_inv = int(np.count_nonzero(within & invalid))
        n_invalid[i] = k_inv
        n_valid[i] = int(np.count_nonzero(within)) - k_inv
    return n_valid, n_invalid


# --------------------------------------------------------------------------
# loop implementations (compiled by numba when available)
# --------------------------------------------------------------------------

def _point_ok_loop(p, bounds_lo, bounds_hi, obs_lo, obs_hi):
    n = p.shape[0]
    for d in range(n):
        if p[d] < bounds_lo[d] or p[d] > bounds_hi[d]:
            return False
    for k in range(obs_lo.shape[0]):
        inside = True
        for d in range(n):
            if p[d] < obs_lo[k, d] or p[d] > obs_hi[k, d]:
                inside = False
                break
        if inside:
            return False
    return True


def points_valid_loop(points, bounds_lo, bounds_hi, obs_lo, obs_hi):
    m = points.shape[0]
    out = np.empty(m, dtype=np.bool_)
    for i in range(m):
        out[i] = _point_ok_loop(points[i], bounds_lo, bounds_hi, obs_lo, obs_hi)
    return out


def segment_check_loop(a, b, bounds_lo, bounds_hi, obs_lo, obs_hi, delta):
    n = a.shape[0]
    length = 0.0
    for d in range(n):
        length += (b[d] - a[d]) ** 2
    length = math.sqrt(length)
    count = max(1, int(math.ceil(length / delta))) + 1
    p = np.empty(n, dtype=np.float64)
    for i in range(count):
        t = i / (count - 1)
        for d in range(n):
            p[d] = a[d] + t * (b[d] - a[d])
        if not _point_ok_loop(p, bounds_lo, bounds_hi, obs_lo, obs_hi):
            return False, i + 1
    return True, count


def sq_distances_loop(points, x):
    m, n = points.shape
    out = np.empty(m, dtype=np.float64)
    for i in range(m):
        s = 0.0
        for d in range(n):
            diff = points[i, d] - x[d]
            s += diff * diff
        out[i] = s
    return out


def ball_counts_loop(points, invalid, centers, radius):
    c = centers.shape[0]
    m, n = points.shape
    n_valid = np.zeros(c, dtype=np.int64)
    n_invalid = np.zeros(c, dtype=np.int64)
    r2 = radius * radius
    for j in range(c):
        for i in range(m):
            s = 0.0
            for d in range(n):
                diff = points[i, d] - centers[j, d]
                s += diff * diff
            if s <= r2:
                if invalid[i]:
                    n_invalid[j] += 1
                else:
                    n_valid[j] += 1
    return n_valid, n_invalid


IMPLEMENTATIONS = {
    "numpy": {
        "points_valid": points_valid_np,
        "segment_check": segment_check_np,
        "sq_distances": sq_distances_np,
        "ball_counts": ball_counts_np,
    },
}

if _numba_available:
    _point_ok_loop = njit(cache=True)(_point_ok_loop)
    IMPLEMENTATIONS["numba"] = {
        "points_valid": njit(cache=True)(points_valid_loop),
        "segment_check": njit(cache=True)(segment_check_loop),
        "sq_distances": njit(cache=True)(sq_distances_loop),
        "ball_counts": njit(cache=True)(ball_counts_loop),
    }

_active = IMPLEMENTATIONS[BACKEND]
points_valid = _active["points_valid"]
segment_check = _active["segment_check"]
sq_distances = _active["sq_distances"]
ball_counts = _active["ball_counts"]
