import numpy as np
import pytest

from proppack.voxelgeom import VoxelShape


def random_blob(rng: np.random.Generator, max_dim: int = 6, fill: float = 0.5) -> VoxelShape:
    """Random tight nonempty occupancy grid (not necessarily connected)."""
    while True:
        dims = rng.integers(1, max_dim + 1, size=3)
        cells = rng.random(dims) < fill
        if not cells.any():
            continue
        occ = np.argwhere(cells)
        lo = occ.min(axis=0)
        hi = occ.max(axis=0) + 1
        cropped = cells[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
        return VoxelShape("blob", np.ascontiguousarray(cropped))


def solid_box(dims, shape_id="box") -> VoxelShape:
    return VoxelShape(shape_id, np.ones(dims, dtype=bool))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
