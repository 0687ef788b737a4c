"""Dense voxel occupancy grid, obstacle marking, dilation and sampled segment tests.

Points outside the grid are free space. Segment tests use ``n`` equispaced
samples excluding the proximal end and including the distal end; the same
samples double as waypoints for path planning.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from ._utils import as_point3, as_points
from .errors import CapacityExceeded, InvalidParameter

DEFAULT_CELL_BUDGET = 64_000_000


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    origin: np.ndarray
    voxel_size: float
    dims: tuple
    occupancy: np.ndarray  # bool, shape dims, True = obstacle
    dilation_radius: float = 0.0

    @property
    def bounds_max(self):
        return self.origin + self.voxel_size * np.asarray(self.dims, dtype=float)

    def world_to_index(self, points):
        pts = np.asarray(points, dtype=float)
        return np.floor((pts - self.origin) / self.voxel_size).astype(np.int64)

    def cell_centers(self, idx):
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.voxel_size

    @property
    def n_occupied(self):
        return int(self.occupancy.sum())


@dataclass
class SceneObstacle:
    """Axis-aligned box (``box_min``/``box_max``) or a cloud of surface points."""

    id: str = "obstacle"
    box_min: np.ndarray = None
    box_max: np.ndarray = None
    points: np.ndarray = None
    dynamic: bool = False
    kind: str = field(init=False)

    def __post_init__(self):
        if self.points is not None:
            if self.box_min is not None or self.box_max is not None:
                raise InvalidParameter(f"obstacle {self.id!r}: give either a box or a point cloud")
            self.points = as_points(self.points, f"obstacle {self.id!r} points")
            self.kind = "cloud"
        else:
            if self.box_min is None or self.box_max is None:
                raise InvalidParameter(f"obstacle {self.id!r}: box needs min and max")
            self.box_min = as_point3(self.box_min, "box min")
            self.box_max = as_point3(self.box_max, "box max")
            if np.any(self.box_min > self.box_max):
                raise InvalidParameter(f"obstacle {self.id!r}: box min exceeds max")
            self.kind = "box"


def build_grid(bounds_min, bounds_max, voxel_size, cell_budget=DEFAULT_CELL_BUDGET):
    lo = as_point3(bounds_min, "bounds_min")
    hi = as_point3(bounds_max, "bounds_max")
    if not voxel_size > 0:
        raise InvalidParameter("voxel_size must be positive")
    if np.any(lo >= hi):
        raise InvalidParameter("bounds_min must be below bounds_max on every axis")
    # tolerate representation error: 1/0.3 should give 4, 2/0.025 should give 80
    dims = tuple(int(math.ceil((h - l) / voxel_size - 1e-9)) for l, h in zip(lo, hi))
    dims = tuple(max(1, d) for d in dims)
    n = dims[0] * dims[1] * dims[2]
    if n > cell_budget:
        raise CapacityExceeded(f"grid of {dims} = {n} cells exceeds budget {cell_budget}")
    return VoxelGrid(origin=lo.copy(), voxel_size=float(voxel_size), dims=dims,
                     occupancy=np.zeros(dims, dtype=bool))


def _box_cells(grid, box_min, box_max):
    """Index ranges of cells whose centers lie inside the closed box."""
    vs = grid.voxel_size
    lo = np.ceil((box_min - grid.origin) / vs - 0.5).astype(np.int64)
    hi = np.floor((box_max - grid.origin) / vs - 0.5).astype(np.int64)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(grid.dims) - 1)
    return lo, hi


def mark_obstacles(grid, obstacles):
    """Return a new grid with every obstacle rasterised into the occupancy."""
    occ = grid.occupancy.copy()
    for ob in obstacles:
        if ob.kind == "box":
            lo, hi = _box_cells(grid, ob.box_min, ob.box_max)
            if np.any(lo > hi):
                continue
            # boundary cells are re-checked exactly against the box
            sl = tuple(slice(max(l - 1, 0), h + 2) for l, h in zip(lo, hi))
            ii, jj, kk = np.meshgrid(*[np.arange(s.start, min(s.stop, d)) for s, d in zip(sl, grid.dims)],
                                     indexing="ij")
            centers = grid.cell_centers(np.stack([ii, jj, kk], axis=-1))
            inside = np.all((centers >= ob.box_min) & (centers <= ob.box_max), axis=-1)
            occ[ii[inside], jj[inside], kk[inside]] = True
        else:
            if len(ob.points) == 0:
                continue
            idx = grid.world_to_index(ob.points)
            ok = np.all((idx >= 0) & (idx < np.asarray(grid.dims)), axis=1)
            idx = idx[ok]
            occ[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return replace(grid, occupancy=occ)


def dilate(grid, radius):
    """Occupy every cell whose center is within ``radius`` of an occupied center."""
    if radius < 0:
        raise InvalidParameter("dilation radius must be non-negative")
    if radius == 0 or not grid.occupancy.any():
        return replace(grid, dilation_radius=grid.dilation_radius + float(radius))
    dist = ndimage.distance_transform_edt(~grid.occupancy, sampling=grid.voxel_size)
    occ = dist <= radius * (1 + 1e-12)
    return replace(grid, occupancy=occ, dilation_radius=grid.dilation_radius + float(radius))


def points_clear(grid, points):
    """Vectorised :func:`point_clear`: bool array over the leading dimensions."""
    pts = np.asarray(points, dtype=float)
    idx = np.floor((pts - grid.origin) / grid.voxel_size).astype(np.int64)
    dims = np.asarray(grid.dims)
    inside = np.all((idx >= 0) & (idx < dims), axis=-1)
    clear = np.ones(pts.shape[:-1], dtype=bool)
    if inside.any():
        sel = idx[inside]
        clear[inside] = ~grid.occupancy[sel[:, 0], sel[:, 1], sel[:, 2]]
    return clear


def point_clear(grid, p):
    return bool(points_clear(grid, as_point3(p, "p")[None, :])[0])


def sample_fractions(n_samples):
    return np.arange(1, n_samples + 1, dtype=float) / n_samples


def segment_samples(p_start, p_end, n_samples):
    """Samples k/n along [p_start, p_end] for k = 1..n; broadcasts over leading dims."""
    if int(n_samples) != n_samples or n_samples < 1:
        raise InvalidParameter("n_samples must be an integer >= 1")
    p_start = np.asarray(p_start, dtype=float)
    p_end = np.asarray(p_end, dtype=float)
    f = sample_fractions(int(n_samples))
    d = p_end - p_start
    return p_start[..., None, :] + f[:, None] * d[..., None, :]


def segment_clear(grid, p_start, p_end, n_samples):
    """Return ``(clear, samples)``; samples are returned even when blocked."""
    samples = segment_samples(as_point3(p_start, "p_start"), as_point3(p_end, "p_end"), n_samples)
    return bool(points_clear(grid, samples).all()), samples
