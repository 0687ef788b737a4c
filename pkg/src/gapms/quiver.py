"""Latitude-ring tiling of the unit sphere (the "quiver").

Rings are equally spaced in elevation from -pi/2 to +pi/2. The equator is
split into ``N_eq = round(2*pi / equator_azim_step)`` azimuth divisions and a
ring at elevation ``phi`` carries ``max(min_per_ring, round(N_eq * cos(phi)))``
vectors, so the surface sampling density stays roughly constant. Vectors are
addressed either by a flat index or by ``(ring, azimuth)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._utils import as_point3, cross3, dot3, norm3
from .errors import InvalidParameter

ANGLE_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class Quiver:
    vectors: np.ndarray  # (N, 3) unit vectors
    ring_offsets: np.ndarray  # (R,) start index of each ring
    ring_elevations: np.ndarray  # (R,) radians
    elev_step: float
    equator_azim_step: float
    min_per_ring: int

    def __len__(self):
        return len(self.vectors)

    @property
    def ring_counts(self):
        ends = np.append(self.ring_offsets[1:], len(self.vectors))
        return ends - self.ring_offsets

    def index(self, ring, azimuth):
        """Flat index of the ``azimuth``-th vector of ``ring``."""
        counts = self.ring_counts
        if not 0 <= ring < len(counts):
            raise InvalidParameter(f"ring {ring} out of range")
        if not 0 <= azimuth < counts[ring]:
            raise InvalidParameter(f"azimuth {azimuth} out of range for ring {ring}")
        return int(self.ring_offsets[ring] + azimuth)

    def address(self, index):
        """Inverse of :meth:`index`: ``(ring, azimuth)`` for a flat index."""
        if not 0 <= index < len(self.vectors):
            raise InvalidParameter(f"index {index} out of range")
        ring = int(np.searchsorted(self.ring_offsets, index, side="right") - 1)
        return ring, int(index - self.ring_offsets[ring])

    def params(self):
        return {
            "elev_step_deg": math.degrees(self.elev_step),
            "equator_azim_step_deg": math.degrees(self.equator_azim_step),
            "min_per_ring": self.min_per_ring,
        }


def _ring_elevations(elev_step):
    n = math.pi / elev_step
    n_int = round(n)
    if abs(n - n_int) < 1e-9:
        steps = int(n_int)
        elevs = [-math.pi / 2 + k * elev_step for k in range(steps)]
    else:
        steps = math.ceil(n)
        elevs = [-math.pi / 2 + k * elev_step for k in range(steps)]
    elevs.append(math.pi / 2)
    return elevs


def generate_quiver(elev_step=math.radians(2.0), equator_azim_step=math.radians(2.0), min_per_ring=4):
    """Build the quiver. Angles in radians.

    Pole rings hold ``min_per_ring`` copies of the pole vector at distinct
    azimuths, which keeps ``(ring, azimuth)`` addressing total.
    """
    if not (0 < elev_step <= math.pi / 2):
        raise InvalidParameter("elev_step must lie in (0, pi/2]")
    if not (0 < equator_azim_step <= math.pi / 2):
        raise InvalidParameter("equator_azim_step must lie in (0, pi/2]")
    if int(min_per_ring) != min_per_ring or min_per_ring < 1:
        raise InvalidParameter("min_per_ring must be an integer >= 1")
    min_per_ring = int(min_per_ring)

    n_eq = round(2 * math.pi / equator_azim_step)
    vecs = []
    offsets = []
    elevs = _ring_elevations(elev_step)
    for phi in elevs:
        pole = abs(abs(phi) - math.pi / 2) < 1e-15
        cphi = 0.0 if pole else math.cos(phi)
        sphi = math.copysign(1.0, phi) if pole else math.sin(phi)
        count = max(min_per_ring, round(n_eq * cphi))
        offsets.append(len(vecs))
        for a in range(count):
            theta = 2 * math.pi * a / count
            vecs.append((cphi * math.cos(theta), cphi * math.sin(theta), sphi))

    return Quiver(
        vectors=np.array(vecs, dtype=float),
        ring_offsets=np.array(offsets, dtype=np.int64),
        ring_elevations=np.array(elevs, dtype=float),
        elev_step=float(elev_step),
        equator_azim_step=float(equator_azim_step),
        min_per_ring=min_per_ring,
    )


def quiver_from_degrees(deg, min_per_ring=4):
    """Convenience: equal elevation and equatorial azimuth step, in degrees."""
    return generate_quiver(math.radians(deg), math.radians(deg), min_per_ring)


def _angles_to(q, axis, idx=None):
    v = q.vectors if idx is None else q.vectors[idx]
    return np.arctan2(norm3(cross3(v, axis[None, :])), dot3(v, axis[None, :]))


def _candidate_rings(q, axis, radius):
    """Indices of vectors in rings whose elevation band can hold matches."""
    elev = math.asin(max(-1.0, min(1.0, float(axis[2]))))
    lo, hi = elev - radius - 1e-9, elev + radius + 1e-9
    keep = (q.ring_elevations >= lo) & (q.ring_elevations <= hi)
    counts = q.ring_counts
    parts = [np.arange(q.ring_offsets[r], q.ring_offsets[r] + counts[r]) for r in np.nonzero(keep)[0]]
    if not parts:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(parts)


def cone_subset(q, axis, half_angle):
    """Indices (ascending) of quiver vectors within ``half_angle`` of ``axis``."""
    axis = as_point3(axis, "axis")
    if abs(float(norm3(axis)) - 1.0) > 1e-9:
        raise InvalidParameter("cone axis must be a unit vector")
    if not (0.0 <= half_angle <= math.pi):
        raise InvalidParameter("half_angle must lie in [0, pi]")
    cand = _candidate_rings(q, axis, half_angle)
    if len(cand) == 0:
        return cand
    ang = _angles_to(q, axis, cand)
    return cand[ang <= half_angle + ANGLE_SLACK]


def neighbors(q, index, angular_radius):
    """Indices within ``angular_radius`` of vector ``index`` (itself included)."""
    if not 0 <= index < len(q):
        raise InvalidParameter(f"index {index} out of range")
    if angular_radius <= 0:
        raise InvalidParameter("angular_radius must be positive")
    return cone_subset(q, q.vectors[index], min(float(angular_radius), math.pi))
