"""Small vector helpers and input validation.

Norms and dots are spelled out component-wise rather than going through
``np.linalg.norm`` so that the same value is produced bit-for-bit whatever the
array shape or memory layout (the search relies on this for determinism).
"""

import math

import numpy as np

from .errors import InvalidParameter

UNIT_TOL = 1e-9


def as_point3(value, name="point"):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise InvalidParameter(f"{name} must have shape (3,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"{name} must be finite")
    return arr


def as_points(value, name="points"):
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 3))
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidParameter(f"{name} must have shape (m, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"{name} must be finite")
    return arr


def as_unit(value, name="axis", tol=UNIT_TOL):
    """Validate that ``value`` is a unit 3-vector (within ``tol``)."""
    arr = as_point3(value, name)
    n = norm3(arr)
    if abs(n - 1.0) > tol:
        raise InvalidParameter(f"{name} must be a unit vector (|v| = {n!r})")
    return arr


def normalized(value, name="vector"):
    arr = as_point3(value, name)
    n = norm3(arr)
    if n < 1e-12:
        raise InvalidParameter(f"{name} must be non-zero")
    return arr / n


def norm3(a):
    a = np.asarray(a, dtype=float)
    return np.sqrt(a[..., 0] * a[..., 0] + a[..., 1] * a[..., 1] + a[..., 2] * a[..., 2])


def dot3(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross3(a, b):
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def angle_between(a, b):
    """Angle between vectors, accurate near 0 and pi (atan2 of |a x b| and a.b)."""
    return np.arctan2(norm3(cross3(a, b)), dot3(a, b))


def wrap_angle(x):
    """Wrap to the half-open interval (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    if np.ndim(y) == 0:
        return float(y)
    return y


def any_perpendicular(v):
    """A deterministic unit vector perpendicular to ``v``."""
    v = np.asarray(v, dtype=float)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(v)))] = 1.0
    p = cross3(v, axis)
    return p / norm3(p)


def segment_distance(p0, p1, q0, q1):
    """Minimum distance between segments [p0, p1] and [q0, q1].

    Closed-form closest points (clamped parameters); broadcasts over leading
    dimensions.
    """
    p0, p1, q0, q1 = (np.asarray(x, dtype=float) for x in (p0, p1, q0, q1))
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = dot3(d1, d1)
    e = dot3(d2, d2)
    f = dot3(d2, r)
    c = dot3(d1, r)
    b = dot3(d1, d2)
    tiny = 1e-300
    denom = a * e - b * b

    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > 1e-14 * np.maximum(a * e, tiny), (b * f - c * e) / np.where(denom == 0, 1, denom), 0.0)
        s = np.clip(s, 0.0, 1.0)
        t = np.where(e > tiny, (b * s + f) / np.where(e > tiny, e, 1), 0.0)
        # Re-clamp t and recompute s where t leaves [0, 1].
        s_lo = np.where(a > tiny, np.clip(-c / np.where(a > tiny, a, 1), 0.0, 1.0), 0.0)
        s_hi = np.where(a > tiny, np.clip((b - c) / np.where(a > tiny, a, 1), 0.0, 1.0), 0.0)
    degenerate_q = e <= tiny
    s = np.where(degenerate_q | (t < 0.0), s_lo, np.where(t > 1.0, s_hi, s))
    t = np.where(degenerate_q, 0.0, np.clip(t, 0.0, 1.0))
    cp = p0 + s[..., None] * d1
    cq = q0 + t[..., None] * d2
    return norm3(cp - cq)
