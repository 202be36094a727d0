"""Rigid-object geometry on a 1 cm voxel grid.

Shapes are boolean occupancy grids cropped tight to their bounding box, with
all lengths in whole centimeters.  Rotation is restricted to the 24 proper
axis-aligned rotations (the rotation group of the cube), which keeps the grid
closed under rotation; each rotation also carries a unit quaternion so poses
can be fed to learned models.

Axis convention: axis 0 = x (width), axis 1 = y (depth), axis 2 = z (up).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation as _ScipyRotation

MAX_DIM = 30  # cm, everyday-object size bound enforced on shape grids

_STABILITY_EPS = 1e-9


def _build_rotation_group() -> np.ndarray:
    """All 3x3 signed permutation matrices with determinant +1.

    Enumeration order (permutations in itertools order, then sign patterns)
    is part of the public contract: it fixes the orientation indices, and
    index 0 is the identity.
    """
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((3, 3), dtype=np.int64)
            for row, (col, sign) in enumerate(zip(perm, signs)):
                m[row, col] = sign
            if round(float(np.linalg.det(m))) == 1:
                mats.append(m)
    return np.stack(mats)


ROTATION_MATRICES = _build_rotation_group()
N_ORIENTATIONS = len(ROTATION_MATRICES)  # 24


def _canonical_quats() -> np.ndarray:
    quats = _ScipyRotation.from_matrix(ROTATION_MATRICES.astype(float)).as_quat()
    # sign convention: first nonzero of (w, x, y, z) positive
    for q in quats:
        wxyz = np.array([q[3], q[0], q[1], q[2]])
        nonzero = np.nonzero(np.abs(wxyz) > 1e-12)[0]
        if len(nonzero) and wxyz[nonzero[0]] < 0:
            q *= -1.0
    return quats


_QUATS_XYZW = _canonical_quats()
# (w, x, y, z) ordering for the public API
ORIENTATION_QUATS = np.ascontiguousarray(_QUATS_XYZW[:, [3, 0, 1, 2]])
ORIENTATION_QUATS.setflags(write=False)

_MATRIX_INDEX = {m.tobytes(): i for i, m in enumerate(ROTATION_MATRICES)}


def _build_compose_table() -> np.ndarray:
    table = np.zeros((N_ORIENTATIONS, N_ORIENTATIONS), dtype=np.int64)
    for i, ri in enumerate(ROTATION_MATRICES):
        for j, rj in enumerate(ROTATION_MATRICES):
            table[i, j] = _MATRIX_INDEX[(rj @ ri).tobytes()]
    return table


_COMPOSE = _build_compose_table()


def compose(first: int, then: int) -> int:
    """Index of the rotation equal to applying `first`, then `then`."""
    return int(_COMPOSE[first, then])


def inverse(index: int) -> int:
    mat = ROTATION_MATRICES[index]
    return _MATRIX_INDEX[np.ascontiguousarray(mat.T).tobytes()]


@dataclass(frozen=True)
class Orientation:
    """One of the 24 axis-aligned rotations, with its unit quaternion."""

    index: int

    @property
    def matrix(self) -> np.ndarray:
        return ROTATION_MATRICES[self.index]

    @property
    def quat(self) -> tuple[float, float, float, float]:
        """(w, x, y, z), unit norm, canonical sign."""
        return tuple(float(v) for v in ORIENTATION_QUATS[self.index])


@lru_cache(maxsize=None)
def orientation(index: int) -> Orientation:
    if not 0 <= index < N_ORIENTATIONS:
        raise ValueError(f"orientation index out of range: {index}")
    return Orientation(index)


def all_orientations() -> list[Orientation]:
    return [orientation(i) for i in range(N_ORIENTATIONS)]


@dataclass(frozen=True, eq=False)
class VoxelShape:
    """Tightly cropped boolean occupancy grid for one rigid object."""

    id: str
    cells: np.ndarray

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=bool)
        if cells.ndim != 3:
            raise ValueError("cells must be a 3-d boolean grid")
        if not cells.any():
            raise ValueError("shape must contain at least one occupied cell")
        if max(cells.shape) > MAX_DIM:
            raise ValueError(f"shape exceeds {MAX_DIM} cm bound: {cells.shape}")
        for axis in range(3):
            ax_any = cells.any(axis=tuple(a for a in range(3) if a != axis))
            if not (ax_any[0] and ax_any[-1]):
                raise ValueError("occupancy must span the bounding dims (tight crop)")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.cells.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelShape):
            return NotImplemented
        return (
            self.id == other.id
            and self.dims == other.dims
            and bool(np.array_equal(self.cells, other.cells))
        )


def volume(shape: VoxelShape) -> int:
    """Occupied volume in cubic cm (1 cell = 1 cm^3)."""
    return int(np.count_nonzero(shape.cells))


def rotate(shape: VoxelShape, o: Orientation | int) -> VoxelShape:
    """Rotated copy, re-cropped to a tight bounding box.

    Occupied count is preserved; the cell set is translated so all indices
    start at zero.
    """
    idx = o.index if isinstance(o, Orientation) else int(o)
    mat = ROTATION_MATRICES[idx]
    coords = np.argwhere(shape.cells)
    rotated = coords @ mat.T
    rotated -= rotated.min(axis=0)
    dims = tuple(int(v) + 1 for v in rotated.max(axis=0))
    cells = np.zeros(dims, dtype=bool)
    cells[tuple(rotated.T)] = True
    return VoxelShape(shape.id, cells)


@dataclass(frozen=True, eq=False)
class HeightProfile:
    """Per-footprint-cell height summary of a shape, seen from above or below.

    kind "top-down": height of the highest occupied cell + 1 per column
    (0 for empty columns).  kind "bottom-up": height of the lowest occupied
    cell per column (grid height nz for empty columns, a sentinel that makes
    the empty column never the drop constraint).
    """

    kind: str
    heights: np.ndarray

    def __post_init__(self):
        if self.kind not in ("top-down", "bottom-up"):
            raise ValueError(f"bad profile kind: {self.kind}")
        heights = np.ascontiguousarray(self.heights, dtype=np.int64)
        heights.setflags(write=False)
        object.__setattr__(self, "heights", heights)


def top_profile(shape: VoxelShape) -> HeightProfile:
    cells = shape.cells
    nz = cells.shape[2]
    occ = cells.any(axis=2)
    top = np.where(occ, nz - np.argmax(cells[:, :, ::-1], axis=2), 0)
    return HeightProfile("top-down", top)


def bottom_profile(shape: VoxelShape) -> HeightProfile:
    cells = shape.cells
    nz = cells.shape[2]
    occ = cells.any(axis=2)
    bottom = np.where(occ, np.argmax(cells, axis=2), nz)
    return HeightProfile("bottom-up", bottom)


def footprint(shape: VoxelShape) -> np.ndarray:
    """Boolean mask of columns containing at least one occupied cell."""
    return shape.cells.any(axis=2)


def centroid(shape: VoxelShape) -> np.ndarray:
    """Mean of occupied cell centers, in cm from the grid origin."""
    return np.argwhere(shape.cells).mean(axis=0) + 0.5


def sample_surface_points(shape: VoxelShape, n: int = 128, seed: int = 0) -> np.ndarray:
    """Sample n points on the exposed voxel faces, centered at the centroid.

    Allocation is stratified per face: every exposed unit face gets
    floor(n / n_faces) points and a seeded draw (without replacement)
    distributes the remainder.  If there are more faces than points, a seeded
    subset of faces gets one point each.  Within a face, positions are
    uniform.  Deterministic for a given (shape, n, seed).
    """
    if n < 8:
        raise ValueError("need at least 8 sample points")
    cells = shape.cells
    centers = []
    axes = []
    for axis in range(3):
        for sign in (-1, 1):
            neighbor = np.zeros_like(cells)
            src = [slice(None)] * 3
            dst = [slice(None)] * 3
            if sign == 1:
                src[axis] = slice(1, None)
                dst[axis] = slice(None, -1)
            else:
                src[axis] = slice(None, -1)
                dst[axis] = slice(1, None)
            neighbor[tuple(dst)] = cells[tuple(src)]
            exposed = cells & ~neighbor
            idx = np.argwhere(exposed).astype(float)
            if len(idx) == 0:
                continue
            face_centers = idx + 0.5
            face_centers[:, axis] += 0.5 * sign
            centers.append(face_centers)
            axes.append(np.full(len(idx), axis))
    face_centers = np.concatenate(centers, axis=0)
    face_axes = np.concatenate(axes, axis=0)
    n_faces = len(face_centers)

    rng = np.random.default_rng(seed)
    if n_faces >= n:
        chosen = rng.choice(n_faces, size=n, replace=False)
    else:
        base = n // n_faces
        extra = rng.choice(n_faces, size=n - base * n_faces, replace=False)
        chosen = np.concatenate([np.repeat(np.arange(n_faces), base), extra])

    points = face_centers[chosen].copy()
    in_face_axes = np.array([[a for a in range(3) if a != ax] for ax in face_axes[chosen]])
    offsets = rng.uniform(-0.5, 0.5, size=(n, 2))
    rows = np.arange(n)
    points[rows, in_face_axes[:, 0]] += offsets[:, 0]
    points[rows, in_face_axes[:, 1]] += offsets[:, 1]
    return points - centroid(shape)


def _support_hull_contains(rot: VoxelShape) -> bool:
    """Support-polygon test: does the centroid project into the convex hull
    of the ground-contact region (contact cells as full unit squares)?"""
    bottom = bottom_profile(rot).heights
    contact = footprint(rot) & (bottom == 0)
    cells_xy = np.argwhere(contact)
    corners = np.concatenate(
        [cells_xy + off for off in ((0, 0), (1, 0), (0, 1), (1, 1))], axis=0
    ).astype(float)
    corners = np.unique(corners, axis=0)
    hull = ConvexHull(corners)
    c = centroid(rot)[:2]
    # hull.equations rows are (a, b, offset) with a*x + b*y + offset <= 0 inside
    values = hull.equations[:, :2] @ c + hull.equations[:, 2]
    return bool(np.all(values <= _STABILITY_EPS))


def stable_orientations(shape: VoxelShape) -> list[Orientation]:
    """Orientations that rest flat without tipping, deduplicated.

    Duplicate orientations (identical rotated cell sets) keep the lowest
    index.  An orientation passes if the centroid's horizontal projection
    lies inside or on the convex hull of its ground-contact cells.  Never
    empty: if nothing passes, the deduplicated orientations minimizing
    centroid height are returned instead.
    """
    reps: list[tuple[int, VoxelShape]] = []
    seen: set[tuple] = set()
    for idx in range(N_ORIENTATIONS):
        rot = rotate(shape, idx)
        key = (rot.dims, rot.cells.tobytes())
        if key in seen:
            continue
        seen.add(key)
        reps.append((idx, rot))

    stable = [orientation(idx) for idx, rot in reps if _support_hull_contains(rot)]
    if stable:
        return stable
    heights = [centroid(rot)[2] for _, rot in reps]
    best = min(heights)
    return [orientation(idx) for (idx, _), h in zip(reps, heights) if h <= best + _STABILITY_EPS]


@dataclass(frozen=True, eq=False)
class OrientedEntry:
    """Cached per-(shape, orientation) geometry used by placement code."""

    shape: VoxelShape
    orientation_index: int
    top: np.ndarray
    bottom: np.ndarray
    footprint: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.shape.dims


class OrientedCache:
    """Memoizes rotations, profiles and stable orientation lists per shape id.

    Shape ids must be unique within the population the cache serves (catalog
    invariant).
    """

    def __init__(self):
        self._entries: dict[tuple[str, int], OrientedEntry] = {}
        self._stable: dict[str, list[Orientation]] = {}

    def entry(self, shape: VoxelShape, orientation_index: int) -> OrientedEntry:
        key = (shape.id, orientation_index)
        hit = self._entries.get(key)
        if hit is None:
            rot = rotate(shape, orientation_index)
            hit = OrientedEntry(
                shape=rot,
                orientation_index=orientation_index,
                top=top_profile(rot).heights,
                bottom=bottom_profile(rot).heights,
                footprint=footprint(rot),
            )
            self._entries[key] = hit
        return hit

    def stable_orientations(self, shape: VoxelShape) -> list[Orientation]:
        hit = self._stable.get(shape.id)
        if hit is None:
            hit = stable_orientations(shape)
            self._stable[shape.id] = hit
        return hit
