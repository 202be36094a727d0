"""Placement candidate enumeration.

For each stable orientation of an object the feasible region (positions where
the dropped object stays within the height budget) is computed on the
heightmap, and a compact candidate set is extracted: the convex corners of
each connected feasible component plus each component's lowest-resting cell.
Candidates are ordered by (z, y, x, orientation index) and capped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .container import ContainerState
from .voxelgeom import OrientedCache, OrientedEntry

MAX_CANDIDATES = 500

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class FeasibleMask:
    """Feasibility and resting height per footprint anchor position."""

    orientation_index: int
    valid: np.ndarray  # bool (W, L); anchors where the drop fits under H
    rest_z: np.ndarray  # int (W, L); resting height, -1 outside valid anchors


@dataclass(frozen=True, order=True)
class CandidateAction:
    """One placement option; field order doubles as the sort key (z, y, x, o)."""

    z: int
    y: int
    x: int
    orientation_index: int
    object_id: str = field(compare=False)


def feasible_mask(state: ContainerState, entry: OrientedEntry) -> FeasibleMask:
    w, l = state.width, state.depth
    nx, ny, nz = entry.dims
    valid = np.zeros((w, l), dtype=bool)
    rest = np.full((w, l), -1, dtype=np.int64)
    if nx > w or ny > l or nz > state.height:
        return FeasibleMask(entry.orientation_index, valid, rest)
    windows = sliding_window_view(state.heightmap, (nx, ny))  # (w-nx+1, l-ny+1, nx, ny)
    # empty columns get a huge positive offset so window - support is very
    # negative there and never wins the max
    support = np.where(entry.footprint, entry.bottom, np.iinfo(np.int64).max // 2)
    z = (windows - support[None, None]).max(axis=(2, 3))
    ok = z + nz <= state.height
    valid[: w - nx + 1, : l - ny + 1] = ok
    rest[: w - nx + 1, : l - ny + 1] = np.where(ok, z, -1)
    return FeasibleMask(entry.orientation_index, valid, rest)


def convex_vertices(mask: np.ndarray) -> list[tuple[int, int]]:
    """Cells where the region boundary turns convexly.

    A true cell is a convex corner if, for some diagonal direction, both of
    its axis neighbors toward that diagonal are false or outside the grid.
    A full rectangle yields exactly its 4 corners; concave inner corners of
    an L-shaped region do not fire.
    """
    padded = np.zeros((mask.shape[0] + 2, mask.shape[1] + 2), dtype=bool)
    padded[1:-1, 1:-1] = mask
    core = padded[1:-1, 1:-1]
    corner = np.zeros_like(core)
    for sx in (-1, 1):
        for sy in (-1, 1):
            xn = padded[1 + sx : padded.shape[0] - 1 + sx, 1:-1]
            yn = padded[1:-1, 1 + sy : padded.shape[1] - 1 + sy]
            corner |= core & ~xn & ~yn
    return [(int(x), int(y)) for x, y in np.argwhere(corner)]


def enumerate_candidates(
    state: ContainerState,
    record,
    cache: OrientedCache,
    cap: int = MAX_CANDIDATES,
) -> list[CandidateAction]:
    """Ordered candidate placements for one object.

    Deterministic: orientations come from the stable-orientation list, corner
    and lowest-cell extraction is per connected feasible component, ordering
    is (z, y, x, orientation index) ascending, and truncation to `cap` keeps
    the smallest keys.
    """
    found: dict[tuple[int, int, int], CandidateAction] = {}
    for o in cache.stable_orientations(record.shape):
        entry = cache.entry(record.shape, o.index)
        mask = feasible_mask(state, entry)
        if not mask.valid.any():
            continue
        labels, n_comp = ndimage.label(mask.valid, structure=_FOUR_CONNECTED)
        corners = convex_vertices(mask.valid)
        keyed: list[tuple[int, int]] = list(corners)
        for comp in range(1, n_comp + 1):
            cells = np.argwhere(labels == comp)
            zs = mask.rest_z[cells[:, 0], cells[:, 1]]
            order = np.lexsort((cells[:, 0], cells[:, 1], zs))  # (z, y, x)
            keyed.append((int(cells[order[0], 0]), int(cells[order[0], 1])))
        for x, y in keyed:
            key = (o.index, x, y)
            if key not in found:
                found[key] = CandidateAction(
                    z=int(mask.rest_z[x, y]),
                    y=y,
                    x=x,
                    orientation_index=o.index,
                    object_id=record.id,
                )
    return sorted(found.values())[:cap]
