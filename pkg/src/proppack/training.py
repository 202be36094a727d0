"""Reward shaping, Bellman targets, replay, and the two-head training loop.

Each placement earns a weighted reward: cumulative packed-volume ratio,
minus a penalty for squeezing fragile objects, minus a penalty for landing
close to an avoidance partner.  Both Q-heads train from the same replayed
transitions: the placement head regresses Bellman targets, the object head
regresses the best placement target available for the chosen object.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import torch

from .catalog import Catalog, Scenario
from .container import (
    DEFAULT_AVOID_DISTANCE,
    ContainerState,
    close_pairs,
    compactness,
    place,
    squeeze_count,
)
from .errors import DivergenceError, UsageError
from .heuristics import PlanningContext
from .opanet import (
    DecisionInputs,
    DimensionTable,
    PackingQNet,
    PointCloudCache,
    QTrainItem,
    batch_loss,
    prepare_step,
)
from .properties import AvoidanceMatrix


@dataclass(frozen=True)
class RewardConfig:
    """Weights of the three reward terms and the discount."""

    compact_weight: float = 10.0
    fragile_weight: float = 20.0
    avoid_weight: float = 0.2
    discount: float = 0.99

    def __post_init__(self):
        if min(self.compact_weight, self.fragile_weight, self.avoid_weight) < 0:
            raise ValueError("reward weights must be nonnegative")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")


@dataclass(frozen=True)
class RewardBreakdown:
    compactness: float  # cumulative fill ratio after the placement
    fragility: float  # squeezed fragile count x placed weight (kg)
    avoidance: float  # 1.0 when the new object sits close to a partner
    overall: float


def compute_reward(
    state_before: ContainerState,
    placed,
    state_after: ContainerState,
    avoidance: AvoidanceMatrix,
    cfg: RewardConfig,
    d_avoid: int = DEFAULT_AVOID_DISTANCE,
) -> RewardBreakdown:
    """Score one placement; `placed` must be the last entry of state_after."""
    c = compactness(state_after)
    frag = float(squeeze_count(state_before, placed)) * placed.weight
    new_idx = len(state_after.placed) - 1
    close = close_pairs(state_after, avoidance, d_avoid)
    avoid = 1.0 if any(new_idx in pair for pair in close) else 0.0
    overall = cfg.compact_weight * c - cfg.fragile_weight * frag - cfg.avoid_weight * avoid
    return RewardBreakdown(c, frag, avoid, overall)


def bellman_target(
    reward: float,
    q_next_max: float,
    alpha: float,
    discount: float,
    q_old: float = 0.0,
) -> float:
    """(1 - alpha) * q_old + alpha * (r + discount * max next Q).

    Terminal transitions pass q_next_max = 0.
    """
    return (1.0 - alpha) * q_old + alpha * (reward + discount * q_next_max)


def object_supervision(placement_targets: Sequence[float]) -> float:
    """Best placement target of an object is the object-level target."""
    if len(placement_targets) == 0:
        raise ValueError("object_supervision needs at least one placement target")
    return float(max(placement_targets))


@dataclass(frozen=True)
class TrainingConfig:
    replay_capacity: int = 20_000
    batch_size: int = 64
    learning_rate: float = 6e-5
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 10_000
    target_mix: float = 1.0  # alpha: 1.0 means pure Bellman targets
    target_sync_interval: int = 500
    warmup_steps: int = 200
    max_steps: int = 50_000
    seed: int = 0
    single_thread: bool = True

    def __post_init__(self):
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch size exceeds replay capacity")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")

    def epsilon(self, step: int) -> float:
        frac = min(1.0, step / max(1, self.epsilon_decay_steps))
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac


@dataclass(frozen=True)
class Transition:
    """One logged decision with everything needed to rebuild its targets."""

    step_inputs: DecisionInputs
    object_index: int
    cand_index: int
    reward: RewardBreakdown
    next_inputs: Optional[DecisionInputs]  # None when the episode ended here
    reward_cfg: RewardConfig

    def __post_init__(self):
        r = self.reward
        cfg = self.reward_cfg
        expected = (
            cfg.compact_weight * r.compactness
            - cfg.fragile_weight * r.fragility
            - cfg.avoid_weight * r.avoidance
        )
        if r.overall != expected:
            raise ValueError("reward decomposition identity violated")

    @property
    def terminal(self) -> bool:
        return self.next_inputs is None


class ReplayBuffer:
    """Fixed-capacity ring with seeded uniform sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self):
        return len(self.items)

    def push(self, t: Transition) -> None:
        self.items.append(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        idx = rng.choice(len(self.items), size=batch_size, replace=len(self.items) < batch_size)
        return [self.items[int(i)] for i in idx]


CURVE_HEADER = "step,episode,C,R_fragility,R_avoidance,R_overall,loss_obj,loss_place,epsilon"


@dataclass(frozen=True)
class CurveRow:
    step: int
    episode: int
    compactness: float
    fragility: float
    avoidance: float
    overall: float
    loss_obj: float
    loss_place: float
    epsilon: float

    def to_csv(self) -> str:
        return ",".join(
            [str(self.step), str(self.episode)]
            + [repr(float(v)) for v in (
                self.compactness, self.fragility, self.avoidance,
                self.overall, self.loss_obj, self.loss_place, self.epsilon,
            )]
        )


def write_curves(path, rows: Sequence[CurveRow]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(CURVE_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


@dataclass
class TrainResult:
    net: PackingQNet
    curves: list[CurveRow]
    replay: ReplayBuffer
    steps: int
    episodes: int


def _strip_candidates(inputs: DecisionInputs, keep: Optional[int]) -> DecisionInputs:
    """Drop candidate arrays from a stored snapshot, keeping only the chosen
    object's (replay memory stays small; the object path never reads them)."""
    empty_g = np.zeros((0, 4), dtype=np.int64)
    empty_s = np.zeros((0, 6), dtype=np.float32)
    if not inputs.cand_geoms:
        return inputs
    geoms = tuple(
        g if i == keep else empty_g for i, g in enumerate(inputs.cand_geoms)
    )
    stats = tuple(
        s if i == keep else empty_s for i, s in enumerate(inputs.cand_stats)
    )
    return replace(inputs, cand_geoms=geoms, cand_stats=stats)


def build_targets(
    target_net: PackingQNet,
    batch: Sequence[Transition],
    train_cfg: TrainingConfig,
) -> tuple[list[QTrainItem], list[QTrainItem]]:
    """Placement and object training items for a sampled batch.

    q_next_max comes from the target net's object head over the next step's
    feasible objects; the executed candidate gets a Bellman target and the
    chosen object's target is the max across its candidates' targets.
    """
    n = len(batch)
    q_next = np.zeros(n)
    nonterm = [i for i, t in enumerate(batch) if not t.terminal]
    with torch.no_grad():
        if nonterm:
            q, mask = target_net.object_q_batch([batch[i].next_inputs for i in nonterm])
            q = q.cpu().numpy()
            mask = mask.cpu().numpy()
            for row, i in enumerate(nonterm):
                q_next[i] = q[row, mask[row]].max()
        qp, pmask = target_net.placement_q_batch(
            [t.step_inputs for t in batch], [t.object_index for t in batch]
        )
        qp = qp.cpu().numpy()
        pmask = pmask.cpu().numpy()

    place_items: list[QTrainItem] = []
    obj_items: list[QTrainItem] = []
    for i, t in enumerate(batch):
        q_row = qp[i, pmask[i]]
        gamma = t.reward_cfg.discount
        y_exec = bellman_target(
            t.reward.overall, q_next[i], train_cfg.target_mix, gamma,
            q_old=float(q_row[t.cand_index]),
        )
        targets = q_row.astype(np.float64).copy()
        targets[t.cand_index] = y_exec
        y_obj = object_supervision(targets.tolist())
        place_items.append(
            QTrainItem(t.step_inputs, t.cand_index, y_exec, object_index=t.object_index)
        )
        obj_items.append(QTrainItem(t.step_inputs, t.object_index, y_obj))
    return place_items, obj_items


def _scenario_records(catalog: Catalog, scenario: Scenario):
    queue = deque(catalog.get(oid) for oid in scenario.order)
    buffer = []
    while queue and len(buffer) < scenario.buffer_capacity:
        buffer.append(queue.popleft())
    return queue, buffer


def _split_params(net: PackingQNet):
    obj, rest = [], []
    for name, p in net.named_parameters():
        (obj if name.startswith(("obj_value", "obj_adv")) else rest).append(p)
    return rest, obj


def train(
    catalog: Catalog,
    scenarios: Sequence[Scenario],
    reward_cfg: RewardConfig,
    train_cfg: TrainingConfig,
    dims: DimensionTable = DimensionTable(),
    d_avoid: int = DEFAULT_AVOID_DISTANCE,
) -> TrainResult:
    """Deterministic single-process training over a cycled scenario list."""
    if not scenarios:
        raise UsageError("training needs at least one scenario")
    if train_cfg.single_thread:
        torch.set_num_threads(1)

    rng = np.random.default_rng(train_cfg.seed)
    net = PackingQNet(dims, seed=train_cfg.seed)
    target_net = net.clone()
    place_params, obj_params = _split_params(net)
    opt_place = torch.optim.Adam(place_params, lr=train_cfg.learning_rate)
    opt_obj = torch.optim.Adam(obj_params, lr=train_cfg.learning_rate)

    ctx = PlanningContext(catalog=catalog)
    point_cache = PointCloudCache(dims.n_points)
    replay = ReplayBuffer(train_cfg.replay_capacity)
    avoidance = catalog.avoidance

    curves: list[CurveRow] = []
    step = 0
    episode = 0
    while step < train_cfg.max_steps:
        scenario = scenarios[episode % len(scenarios)]
        queue, buffer = _scenario_records(catalog, scenario)
        state = ContainerState.empty(dims.map_dims)
        prep = prepare_step(state, buffer, ctx, point_cache)
        ep_frag = ep_avoid = ep_overall = 0.0
        ep_losses: list[tuple[float, float]] = []
        ep_steps = 0

        while prep is not None and step < train_cfg.max_steps:
            eps = train_cfg.epsilon(step)
            with torch.no_grad():
                q_obj = net.object_qvalues(prep.inputs).cpu().numpy()
            if rng.random() < eps:
                b = int(rng.integers(0, len(prep.object_ids)))
            else:
                b = int(q_obj.argmax())
            with torch.no_grad():
                q_place = net.placement_qvalues(prep.inputs, b).cpu().numpy()
            if rng.random() < eps:
                k = int(rng.integers(0, len(prep.candidates[b])))
            else:
                k = int(q_place.argmax())
            action = prep.candidates[b][k]

            record = catalog.get(action.object_id)
            new_state, _ = place(
                state, record, action.orientation_index, action.x, action.y,
                ctx.cache, ctx.material_table,
            )
            reward = compute_reward(
                state, new_state.placed[-1], new_state, avoidance, reward_cfg, d_avoid
            )
            ep_frag += reward.fragility
            ep_avoid += reward.avoidance
            ep_overall += reward.overall

            for slot, rec in enumerate(buffer):
                if rec.id == action.object_id:
                    buffer.pop(slot)
                    break
            if queue:
                buffer.append(queue.popleft())
            next_prep = prepare_step(new_state, buffer, ctx, point_cache) if buffer else None

            replay.push(
                Transition(
                    step_inputs=_strip_candidates(prep.inputs, keep=b),
                    object_index=b,
                    cand_index=k,
                    reward=reward,
                    next_inputs=None if next_prep is None
                    else _strip_candidates(next_prep.inputs, keep=None),
                    reward_cfg=reward_cfg,
                )
            )

            if len(replay) >= max(train_cfg.warmup_steps, train_cfg.batch_size):
                batch = replay.sample(train_cfg.batch_size, rng)
                place_items, obj_items = build_targets(target_net, batch, train_cfg)
                loss_place = batch_loss(net, place_items, "placement")
                loss_obj = batch_loss(net, obj_items, "object")
                lp = float(loss_place.detach())
                lo = float(loss_obj.detach())
                if not (math.isfinite(lp) and math.isfinite(lo)):
                    raise DivergenceError(
                        f"non-finite loss at step {step}: placement={lp}, object={lo}"
                    )
                # object head first: its optimizer touches no parameter saved
                # in the placement graph, so that backward stays valid
                opt_obj.zero_grad(set_to_none=True)
                loss_obj.backward()
                opt_obj.step()
                opt_place.zero_grad(set_to_none=True)
                loss_place.backward()
                opt_place.step()
                ep_losses.append((lo, lp))

            step += 1
            ep_steps += 1
            if step % train_cfg.target_sync_interval == 0:
                target_net.load_state_dict(net.state_dict())
            state = new_state
            prep = next_prep

        if ep_steps == 0:
            raise UsageError(
                f"scenario {scenario.name!r} yields no feasible placement; training cannot progress"
            )
        episode += 1
        mean_obj = float(np.mean([a for a, _ in ep_losses])) if ep_losses else 0.0
        mean_place = float(np.mean([b_ for _, b_ in ep_losses])) if ep_losses else 0.0
        curves.append(
            CurveRow(
                step=step,
                episode=episode,
                compactness=compactness(state),
                fragility=ep_frag,
                avoidance=ep_avoid,
                overall=ep_overall,
                loss_obj=mean_obj,
                loss_place=mean_place,
                epsilon=train_cfg.epsilon(step),
            )
        )
    return TrainResult(net=net, curves=curves, replay=replay, steps=step, episodes=episode)
