"""Test-time packing loop, paired policy evaluation, and heightmap rendering.

An episode repeatedly asks a policy for one feasible placement and executes
it, refilling the visible buffer from the arrival stream after every step.
The run stops when the buffer is empty or nothing fits anywhere.  Evaluation
replays identical scenarios under every compared policy so differences come
from the policies alone.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .candidates import enumerate_candidates, feasible_mask
from .catalog import Catalog, Scenario
from .container import (
    DEFAULT_AVOID_DISTANCE,
    ContainerState,
    close_pairs,
    compactness,
    place,
    pressure_on_fragile,
)
from .errors import ContractViolationError, UsageError
from .heuristics import PlanningContext, Policy

DEFAULT_CONTAINER = (32, 32, 30)


@dataclass(frozen=True)
class StepRecord:
    """One executed placement."""

    object_id: str
    orientation_index: int
    x: int
    y: int
    z: int


@dataclass(frozen=True)
class EpisodeResult:
    scenario: str
    policy: str
    placements: tuple[StepRecord, ...]
    compactness: float
    close_pair_count: int
    pressures: tuple[tuple[int, float], ...]  # (placed index, stacked kg)
    mean_pressure: float
    steps: int

    @property
    def violation(self) -> bool:
        """True when the terminal packing contains a close avoidance pair."""
        return self.close_pair_count > 0


def _any_feasible(state: ContainerState, buffer, ctx: PlanningContext) -> bool:
    return any(enumerate_candidates(state, rec, ctx.cache, ctx.candidate_cap) for rec in buffer)


def packing_step(
    state: ContainerState,
    buffer: list,
    history: list[StepRecord],
    policy: Policy,
    ctx: PlanningContext,
) -> Optional[ContainerState]:
    """Run one planner step.  Returns the new state, or None to stop.

    On a placement the chosen record is removed from `buffer` and a
    StepRecord is appended to `history`.  The policy's action is re-verified
    against the feasibility mask before execution; any mismatch is a
    ContractViolationError.
    """
    if not buffer:
        return None
    action = policy.select(state, buffer, ctx)
    if action is None:
        if _any_feasible(state, buffer, ctx):
            raise ContractViolationError(
                f"policy {policy.name!r} declined although feasible candidates exist"
            )
        return None

    slot = next((i for i, r in enumerate(buffer) if r.id == action.object_id), None)
    if slot is None:
        raise ContractViolationError(
            f"policy {policy.name!r} chose {action.object_id!r} which is not buffered"
        )
    rec = buffer[slot]
    entry = ctx.cache.entry(rec.shape, action.orientation_index)
    nx, ny, _ = entry.dims
    in_bounds = 0 <= action.x <= state.width - nx and 0 <= action.y <= state.depth - ny
    if not in_bounds:
        raise ContractViolationError(f"action out of bounds: {action}")
    mask = feasible_mask(state, entry)
    if not mask.valid[action.x, action.y] or action.z != int(mask.rest_z[action.x, action.y]):
        raise ContractViolationError(f"infeasible action from policy {policy.name!r}: {action}")

    new_state, z = place(
        state, rec, action.orientation_index, action.x, action.y, ctx.cache, ctx.material_table
    )
    if z != action.z:
        raise ContractViolationError(f"resting height drifted: planned {action.z}, executed {z}")
    buffer.pop(slot)
    history.append(StepRecord(rec.id, action.orientation_index, action.x, action.y, z))
    return new_state


def run_episode(
    scenario: Scenario,
    policy: Policy,
    catalog: Catalog,
    container_dims: tuple[int, int, int] = DEFAULT_CONTAINER,
    ctx: Optional[PlanningContext] = None,
) -> EpisodeResult:
    """Play one scenario to the stop condition and measure the terminal state."""
    ctx = ctx or PlanningContext(catalog=catalog)
    queue = deque(catalog.get(oid) for oid in scenario.order)
    buffer: list = []
    history: list[StepRecord] = []
    policy.reset(scenario.seed)
    state = ContainerState.empty(container_dims)
    while True:
        while queue and len(buffer) < scenario.buffer_capacity:
            buffer.append(queue.popleft())
        next_state = packing_step(state, buffer, history, policy, ctx)
        if next_state is None:
            break
        state = next_state

    pressures, mean_pressure = pressure_on_fragile(state)
    close = close_pairs(state, ctx.avoidance, ctx.d_avoid)
    return EpisodeResult(
        scenario=scenario.name,
        policy=policy.name,
        placements=tuple(history),
        compactness=compactness(state),
        close_pair_count=len(close),
        pressures=tuple(pressures),
        mean_pressure=mean_pressure,
        steps=len(history),
    )


# --- paired evaluation ----------------------------------------------------

@dataclass(frozen=True)
class PolicyAggregate:
    policy: str
    episodes: int
    mean_compactness: float
    avoidance_accuracy: float  # fraction of episodes with zero close pairs
    mean_pressure: float


@dataclass(frozen=True)
class Report:
    rows: tuple[EpisodeResult, ...]
    aggregates: tuple[PolicyAggregate, ...]


def aggregate_rows(policy_name: str, rows: Sequence[EpisodeResult]) -> PolicyAggregate:
    if not rows:
        raise UsageError("cannot aggregate zero episodes")
    n = len(rows)
    return PolicyAggregate(
        policy=policy_name,
        episodes=n,
        mean_compactness=float(np.mean([r.compactness for r in rows])),
        avoidance_accuracy=sum(1 for r in rows if r.close_pair_count == 0) / n,
        mean_pressure=float(np.mean([r.mean_pressure for r in rows])),
    )


def evaluate(
    policies: Sequence[Policy],
    scenarios: Sequence[Scenario],
    catalog: Catalog,
    container_dims: tuple[int, int, int] = DEFAULT_CONTAINER,
    ctx: Optional[PlanningContext] = None,
) -> Report:
    """Run every policy over the same scenario list and aggregate per policy."""
    if not policies or not scenarios:
        raise UsageError("evaluate needs at least one policy and one scenario")
    ctx = ctx or PlanningContext(catalog=catalog)
    rows: list[EpisodeResult] = []
    aggregates: list[PolicyAggregate] = []
    for policy in policies:
        mine = [run_episode(s, policy, catalog, container_dims, ctx) for s in scenarios]
        rows.extend(mine)
        aggregates.append(aggregate_rows(policy.name, mine))
    return Report(rows=tuple(rows), aggregates=tuple(aggregates))


REPORT_HEADER = "policy,scenario,steps,C,close_pairs,mean_pressure"


def report_csv(report: Report) -> str:
    lines = [REPORT_HEADER]
    for r in report.rows:
        lines.append(
            ",".join(
                [
                    r.policy,
                    r.scenario,
                    str(r.steps),
                    repr(float(r.compactness)),
                    str(r.close_pair_count),
                    repr(float(r.mean_pressure)),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def report_summary(report: Report) -> str:
    """Aligned per-policy table: compactness, avoidance accuracy, pressure."""
    head = f"{'policy':<10} {'episodes':>8} {'mean C':>9} {'avoid acc':>10} {'pressure':>9}"
    lines = [head, "-" * len(head)]
    for a in report.aggregates:
        lines.append(
            f"{a.policy:<10} {a.episodes:>8d} {a.mean_compactness:>9.4f} "
            f"{a.avoidance_accuracy:>10.4f} {a.mean_pressure:>9.4f}"
        )
    return "\n".join(lines) + "\n"


# --- rendering ------------------------------------------------------------

def render_heightmap_pgm(state: ContainerState) -> str:
    """Plain PGM (P2), one pixel per column, value = height, maxval = H."""
    w, l, h = state.width, state.depth, state.height
    lines = ["P2", f"{w} {l}", str(h)]
    hm = state.heightmap
    for y in range(l):
        lines.append(" ".join(str(int(hm[x, y])) for x in range(w)))
    return "\n".join(lines) + "\n"


def _footprint_cells(placed) -> list[tuple[int, int]]:
    fx, fy = np.nonzero(placed.entry.footprint)
    return [(placed.x + int(a), placed.y + int(b)) for a, b in zip(fx, fy)]


def render_annotated_ppm(
    state: ContainerState,
    avoidance,
    d_avoid: int = DEFAULT_AVOID_DISTANCE,
) -> str:
    """PPM (P3) heightmap with fragile footprints pushed to red and the
    footprints of close avoidance pairs pushed to blue."""
    w, l, h = state.width, state.depth, state.height
    hm = state.heightmap
    gray = (hm.astype(np.float64) / h * 255.0).round().astype(np.int64)
    r = gray.copy()
    g = gray.copy()
    b = gray.copy()
    for p in state.placed:
        if p.fragile:
            for x, y in _footprint_cells(p):
                r[x, y] = 255
    flagged = {i for pair in close_pairs(state, avoidance, d_avoid) for i in pair}
    for i in flagged:
        for x, y in _footprint_cells(state.placed[i]):
            b[x, y] = 255
    lines = ["P3", f"{w} {l}", "255"]
    for y in range(l):
        row = []
        for x in range(w):
            row.append(f"{int(r[x, y])} {int(g[x, y])} {int(b[x, y])}")
        lines.append("  ".join(row))
    return "\n".join(lines) + "\n"


def render_text(state: ContainerState) -> str:
    """Numeric height grid, one row per depth line."""
    w, l = state.width, state.depth
    hm = state.heightmap
    width = max(2, len(str(int(hm.max()))) if state.placed else 2)
    lines = []
    for y in range(l):
        lines.append(" ".join(f"{int(hm[x, y]):>{width}d}" for x in range(w)))
    return "\n".join(lines) + "\n"


def render(state: ContainerState, out_dir, stem: str, avoidance=None,
           d_avoid: int = DEFAULT_AVOID_DISTANCE) -> list[str]:
    """Write the three render artifacts; returns the paths written."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for suffix, text in [
        (".pgm", render_heightmap_pgm(state)),
        (".txt", render_text(state)),
    ]:
        path = os.path.join(out_dir, stem + suffix)
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text)
        paths.append(path)
    if avoidance is not None:
        path = os.path.join(out_dir, stem + ".ppm")
        with open(path, "w", encoding="ascii") as fh:
            fh.write(render_annotated_ppm(state, avoidance, d_avoid))
        paths.append(path)
    return paths
