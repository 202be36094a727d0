"""Classical packing policies and the shared policy interface.

All heuristics scan the full feasible region (every anchor cell of every
stable orientation of every buffered object), so each one is checkable
against an exhaustive argmin/first-scan oracle.  Ties always break toward
smaller coordinates, then orientation index, then buffer position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .candidates import CandidateAction, MAX_CANDIDATES, enumerate_candidates, feasible_mask
from .catalog import Catalog, ObjectRecord
from .container import DEFAULT_AVOID_DISTANCE, ContainerState
from .properties import AvoidanceMatrix, MaterialTable
from .voxelgeom import OrientedCache


@dataclass
class PlanningContext:
    """Shared lookups a policy needs besides the container state."""

    catalog: Catalog
    cache: OrientedCache = field(default_factory=OrientedCache)
    d_avoid: int = DEFAULT_AVOID_DISTANCE
    candidate_cap: int = MAX_CANDIDATES

    @property
    def material_table(self) -> MaterialTable:
        return self.catalog.material_table

    @property
    def avoidance(self) -> AvoidanceMatrix:
        return self.catalog.avoidance


class Policy(Protocol):
    name: str

    def select(
        self,
        state: ContainerState,
        buffer: Sequence[ObjectRecord],
        ctx: PlanningContext,
    ) -> Optional[CandidateAction]:
        """Feasible action for one buffered object, or None when nothing fits."""

    def reset(self, episode_seed: int) -> None:
        """Hook for per-episode reseeding; stateless policies ignore it."""


def _iter_masks(state, rec, ctx):
    for o in ctx.cache.stable_orientations(rec.shape):
        entry = ctx.cache.entry(rec.shape, o.index)
        mask = feasible_mask(state, entry)
        if mask.valid.any():
            yield o.index, mask


class FirstFit:
    """First buffered object that fits, placed at the first feasible anchor
    in (x, y, orientation index) scan order."""

    name = "firstfit"

    def select(self, state, buffer, ctx):
        for rec in buffer:
            masks = list(_iter_masks(state, rec, ctx))
            if not masks:
                continue
            # stack as (x, y, orientation); argmax of the flat bool array is
            # the first True in that lexicographic order
            valid = np.stack([m.valid for _, m in masks], axis=-1)
            if not valid.any():
                continue
            flat_idx = int(valid.reshape(-1).argmax())
            x, y, mi = np.unravel_index(flat_idx, valid.shape)
            o_idx, mask = masks[mi]
            return CandidateAction(
                z=int(mask.rest_z[x, y]), y=int(y), x=int(x),
                orientation_index=o_idx, object_id=rec.id,
            )
        return None

    def reset(self, episode_seed):
        pass


def _argmin_over_keys(state, buffer, ctx, key_fn):
    """Minimize key_fn over every feasible (object, orientation, x, y).

    key_fn(mask, o_idx, buffer_idx, xs, ys, zs) -> array of tuple-comparable
    rows; rows are compared lexicographically via sorted python tuples.
    """
    best_key = None
    best = None
    for bi, rec in enumerate(buffer):
        for o_idx, mask in _iter_masks(state, rec, ctx):
            xs, ys = np.nonzero(mask.valid)
            zs = mask.rest_z[xs, ys]
            keys = key_fn(mask, o_idx, bi, xs, ys, zs)
            i = min(range(len(xs)), key=lambda k: keys[k])
            if best_key is None or keys[i] < best_key:
                best_key = keys[i]
                best = CandidateAction(
                    z=int(zs[i]), y=int(ys[i]), x=int(xs[i]),
                    orientation_index=o_idx, object_id=rec.id,
                )
    return best


class DeepestBottomLeft:
    """Minimize (z, y, x, orientation index, buffer index)."""

    name = "dbl"

    def select(self, state, buffer, ctx):
        def key(mask, o_idx, bi, xs, ys, zs):
            return [(int(z), int(y), int(x), o_idx, bi) for x, y, z in zip(xs, ys, zs)]

        return _argmin_over_keys(state, buffer, ctx, key)

    def reset(self, episode_seed):
        pass


class MinHeight:
    """Minimize resting z alone; ties break by (y, x, orientation, buffer).

    With the package's fixed tie-break chain this coincides with
    DeepestBottomLeft; both are kept because each is oracle-checked against
    its own definition.
    """

    name = "minz"

    def select(self, state, buffer, ctx):
        def key(mask, o_idx, bi, xs, ys, zs):
            return [(int(z), (int(y), int(x), o_idx, bi)) for x, y, z in zip(xs, ys, zs)]

        return _argmin_over_keys(state, buffer, ctx, key)

    def reset(self, episode_seed):
        pass


def heightmap_increment(state: ContainerState, entry, x: int, y: int, z: int) -> int:
    """Total column growth if the object rested at (x, y, z)."""
    nx, ny, _ = entry.dims
    window = state.heightmap[x : x + nx, y : y + ny]
    new_tops = z + entry.top
    growth = np.where(entry.footprint, np.maximum(new_tops - window, 0), 0)
    return int(growth.sum())


class MinIncrement:
    """Minimize total heightmap growth; ties as in DeepestBottomLeft."""

    name = "hm"

    def select(self, state, buffer, ctx):
        best_key = None
        best = None
        for bi, rec in enumerate(buffer):
            for o_idx, mask in _iter_masks(state, rec, ctx):
                entry = ctx.cache.entry(rec.shape, o_idx)
                xs, ys = np.nonzero(mask.valid)
                zs = mask.rest_z[xs, ys]
                for x, y, z in zip(xs, ys, zs):
                    inc = heightmap_increment(state, entry, int(x), int(y), int(z))
                    cand_key = (inc, int(z), int(y), int(x), o_idx, bi)
                    if best_key is None or cand_key < best_key:
                        best_key = cand_key
                        best = CandidateAction(
                            z=int(z), y=int(y), x=int(x),
                            orientation_index=o_idx, object_id=rec.id,
                        )
        return best

    def reset(self, episode_seed):
        pass


class RandomPolicy:
    """Uniform choice over the pooled enumerated candidates of all buffered
    objects.  Seeded; reset(episode_seed) makes paired evaluation repeatable."""

    name = "random"

    def __init__(self, seed: int = 0):
        self._base_seed = seed
        self._rng = np.random.default_rng(seed)

    def reset(self, episode_seed: int):
        self._rng = np.random.default_rng((self._base_seed, episode_seed))

    def select(self, state, buffer, ctx):
        pool: list[CandidateAction] = []
        for rec in buffer:
            pool.extend(enumerate_candidates(state, rec, ctx.cache, ctx.candidate_cap))
        if not pool:
            return None
        return pool[int(self._rng.integers(0, len(pool)))]


HEURISTIC_POLICIES = {
    "firstfit": FirstFit,
    "dbl": DeepestBottomLeft,
    "minz": MinHeight,
    "hm": MinIncrement,
}
