"""Container state and heightmap placement physics.

The container is a W x L grid of integer column heights (cm) with a height
budget H.  Placement is a deterministic vertical drop: an object's resting
height is the tightest fit of its bottom profile onto the current heightmap.
States are values; `place` returns a new state and never mutates its input.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .properties import AvoidanceMatrix, MaterialTable, estimated_weight
from .voxelgeom import OrientedCache, OrientedEntry

DEFAULT_DIMS = (32, 32, 30)  # W, L cells, H cm
DEFAULT_AVOID_DISTANCE = 3  # cm, close-pair threshold


class PlacementRejected(Exception):
    """Raised when a requested placement does not fit the container."""


@dataclass(frozen=True)
class PlacedObject:
    object_id: str
    orientation_index: int
    x: int
    y: int
    z: int
    entry: OrientedEntry
    fragile: bool
    weight: float

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.entry.dims

    def top_heights(self) -> np.ndarray:
        """Absolute top height per occupied footprint column (0 elsewhere)."""
        return np.where(self.entry.footprint, self.z + self.entry.top, 0)

    def bottom_heights(self) -> np.ndarray:
        return np.where(self.entry.footprint, self.z + self.entry.bottom, 0)

    def bbox(self) -> tuple[tuple[int, int], tuple[int, int], tuple[int, int]]:
        nx, ny, nz = self.entry.dims
        return ((self.x, self.x + nx), (self.y, self.y + ny), (self.z, self.z + nz))


@dataclass(frozen=True)
class ContainerState:
    width: int
    depth: int
    height: int
    heightmap: np.ndarray  # (width, depth) int, column heights in cm
    placed: tuple[PlacedObject, ...] = ()

    def __post_init__(self):
        hm = np.ascontiguousarray(self.heightmap, dtype=np.int64)
        if hm.shape != (self.width, self.depth):
            raise ValueError("heightmap shape does not match container dims")
        hm.setflags(write=False)
        object.__setattr__(self, "heightmap", hm)

    @classmethod
    def empty(cls, dims=DEFAULT_DIMS) -> "ContainerState":
        w, l, h = dims
        return cls(w, l, h, np.zeros((w, l), dtype=np.int64))

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.width, self.depth, self.height)

    def packed_volume(self) -> int:
        return sum(_entry_volume(p.entry) for p in self.placed)


def _entry_volume(entry: OrientedEntry) -> int:
    return int(np.count_nonzero(entry.shape.cells))


def compactness(state: ContainerState) -> float:
    """Packed volume over container volume."""
    total = sum(_entry_volume(p.entry) for p in state.placed)
    return total / float(state.width * state.depth * state.height)


def drop_z(heightmap: np.ndarray, entry: OrientedEntry, x: int, y: int) -> int:
    """Resting height of a vertical drop at footprint position (x, y).

    z = max over occupied footprint columns of (column height - bottom
    profile); the column sentinel for empty object columns never binds.
    """
    nx, ny, _ = entry.dims
    w, l = heightmap.shape
    if x < 0 or y < 0 or x + nx > w or y + ny > l:
        raise ValueError(f"footprint out of bounds at ({x}, {y})")
    window = heightmap[x : x + nx, y : y + ny]
    fp = entry.footprint
    return int(np.max(window[fp] - entry.bottom[fp]))


def make_placed(
    record,
    orientation_index: int,
    x: int,
    y: int,
    z: int,
    cache: OrientedCache,
    table: MaterialTable,
) -> PlacedObject:
    entry = cache.entry(record.shape, orientation_index)
    return PlacedObject(
        object_id=record.id,
        orientation_index=orientation_index,
        x=x,
        y=y,
        z=z,
        entry=entry,
        fragile=record.properties.fragile,
        weight=estimated_weight(record.shape, record.properties, table),
    )


def place(
    state: ContainerState,
    record,
    orientation_index: int,
    x: int,
    y: int,
    cache: OrientedCache,
    table: MaterialTable,
) -> tuple[ContainerState, int]:
    """Drop the object and return (new state, resting z).

    Raises PlacementRejected if the object would stick out above the height
    budget; the input state is unchanged either way.
    """
    entry = cache.entry(record.shape, orientation_index)
    z = drop_z(state.heightmap, entry, x, y)
    nz = entry.dims[2]
    if z + nz > state.height:
        raise PlacementRejected(
            f"{record.id} at ({x}, {y}) rests at z={z}, exceeds height {state.height}"
        )
    placed = make_placed(record, orientation_index, x, y, z, cache, table)
    heightmap = state.heightmap.copy()
    _blit_max(heightmap, placed)
    return replace(state, heightmap=heightmap, placed=state.placed + (placed,)), z


def _blit_max(target: np.ndarray, placed: PlacedObject) -> None:
    """target[col] = max(target[col], placed top) over occupied columns."""
    nx, ny, _ = placed.dims
    window = target[placed.x : placed.x + nx, placed.y : placed.y + ny]
    tops = placed.top_heights()
    np.maximum(window, tops, out=window, where=placed.entry.footprint)


def recompute_heightmap(state: ContainerState) -> np.ndarray:
    """From-scratch heightmap from the placement history (oracle for the
    incremental update)."""
    hm = np.zeros((state.width, state.depth), dtype=np.int64)
    for p in state.placed:
        _blit_max(hm, p)
    return hm


def fragility_map(state: ContainerState) -> np.ndarray:
    """Per-column max top height contributed by fragile placed objects."""
    fm = np.zeros((state.width, state.depth), dtype=np.int64)
    for p in state.placed:
        if p.fragile:
            _blit_max(fm, p)
    return fm


def avoidance_map(state: ContainerState, object_id: str, avoidance: AvoidanceMatrix) -> np.ndarray:
    """Per-column max top height of placed objects the candidate must avoid."""
    am = np.zeros((state.width, state.depth), dtype=np.int64)
    for p in state.placed:
        if avoidance.pair(object_id, p.object_id):
            _blit_max(am, p)
    return am


def _column_overlap(a: PlacedObject, b: PlacedObject) -> tuple[slice, slice] | None:
    """Intersection of the two footprint windows in container coordinates."""
    x0 = max(a.x, b.x)
    x1 = min(a.x + a.dims[0], b.x + b.dims[0])
    y0 = max(a.y, b.y)
    y1 = min(a.y + a.dims[1], b.y + b.dims[1])
    if x0 >= x1 or y0 >= y1:
        return None
    return slice(x0, x1), slice(y0, y1)


def _window(arr_owner: PlacedObject, grid: np.ndarray, xs: slice, ys: slice) -> np.ndarray:
    """View of an object-local per-column grid inside a container window."""
    return grid[
        xs.start - arr_owner.x : xs.stop - arr_owner.x,
        ys.start - arr_owner.y : ys.stop - arr_owner.y,
    ]


def squeeze_count(state: ContainerState, placed: PlacedObject) -> int:
    """Fragile objects the new placement rests on.

    A fragile object counts once if it shares footprint columns with the new
    object and its top inside the overlap reaches z - 1 (1 cm contact
    tolerance).  `state` is the scene before the new object is added.
    """
    count = 0
    for other in state.placed:
        if not other.fragile:
            continue
        win = _column_overlap(placed, other)
        if win is None:
            continue
        xs, ys = win
        both = _window(placed, placed.entry.footprint, xs, ys) & _window(
            other, other.entry.footprint, xs, ys
        )
        if not both.any():
            continue
        tops = _window(other, other.top_heights(), xs, ys)
        if np.any(tops[both] >= placed.z - 1):
            count += 1
    return count


def pressure_on_fragile(state: ContainerState) -> tuple[list[tuple[int, float]], float]:
    """Prorated weight stacked above each fragile placed object.

    For fragile i, sum over other objects j of weight_j x n_ij / footprint_j,
    where n_ij counts columns both occupy with j's bottom at or above i's top.
    Returns ([(index in placement order, kg)], mean kg over fragile objects);
    mean is 0.0 when nothing fragile is placed.
    """
    per: list[tuple[int, float]] = []
    for i, frag in enumerate(state.placed):
        if not frag.fragile:
            continue
        total = 0.0
        frag_tops = frag.top_heights()
        for j, other in enumerate(state.placed):
            if j == i:
                continue
            win = _column_overlap(frag, other)
            if win is None:
                continue
            xs, ys = win
            both = _window(frag, frag.entry.footprint, xs, ys) & _window(
                other, other.entry.footprint, xs, ys
            )
            if not both.any():
                continue
            above = (
                _window(other, other.bottom_heights(), xs, ys) >= _window(frag, frag_tops, xs, ys)
            ) & both
            n_over = int(np.count_nonzero(above))
            if n_over:
                total += other.weight * n_over / float(other.entry.footprint.sum())
        per.append((i, total))
    mean = float(np.mean([v for _, v in per])) if per else 0.0
    return per, mean


def _axis_gap(lo_a: int, hi_a: int, lo_b: int, hi_b: int) -> int:
    return max(0, lo_b - hi_a, lo_a - hi_b)


def close_pairs(
    state: ContainerState,
    avoidance: AvoidanceMatrix,
    d_avoid: int = DEFAULT_AVOID_DISTANCE,
) -> list[tuple[int, int]]:
    """Avoidance pairs whose bounding boxes are within d_avoid on every axis."""
    out = []
    for i in range(len(state.placed)):
        for j in range(i + 1, len(state.placed)):
            a, b = state.placed[i], state.placed[j]
            if not avoidance.pair(a.object_id, b.object_id):
                continue
            boxes = zip(a.bbox(), b.bbox())
            if all(_axis_gap(la, ha, lb, hb) <= d_avoid for (la, ha), (lb, hb) in boxes):
                out.append((i, j))
    return out
