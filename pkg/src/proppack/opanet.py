"""Q-network with property-aware feature encoders and two dueling heads.

One network serves two decisions per packing step: which buffered object to
pack next (object head) and where to put it (placement head).  Both heads
consume features from six shared encoders: a permutation-invariant point-set
encoder, a pose-quaternion embedder, a property-vector embedder, and three
small convolutional encoders over the container heightmap, the fragility map,
and the per-object avoidance map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .candidates import CandidateAction, enumerate_candidates
from .container import ContainerState, avoidance_map, fragility_map
from .errors import CheckpointError
from .properties import property_vector
from .voxelgeom import MAX_DIM, ORIENTATION_QUATS, OrientedCache, VoxelShape, sample_surface_points

# fixed input scalings so raw physical values land near unit range
_PROP_SCALE = np.array([1.0, 1.0, 1.0, 1.0 / 8.0, 1.0 / 1000.0], dtype=np.float32)
_POINT_SCALE = 1.0 / float(MAX_DIM)

_CHECKPOINT_MAGIC = "packckpt 1"


@dataclass(frozen=True)
class DimensionTable:
    """Layer sizes; the parameter count is a function of this table alone."""

    point_feat: int = 64
    pose_embed: int = 16
    prop_embed: int = 16
    map_feat: int = 64
    head_hidden: int = 128
    conv_channels: tuple[int, int] = (8, 16)
    n_points: int = 128
    max_poses: int = 24
    map_dims: tuple[int, int, int] = (32, 32, 30)  # (W, L, H)

    @property
    def object_feat(self) -> int:
        return self.point_feat + self.prop_embed + 3 * self.map_feat

    @property
    def placement_feat(self) -> int:
        # + pose embedding, normalized (x, y, z), mean/max of 3 maps under
        # the candidate footprint
        return self.object_feat + self.pose_embed + 3 + 6

    def to_json_dict(self) -> dict:
        return {
            "point_feat": self.point_feat,
            "pose_embed": self.pose_embed,
            "prop_embed": self.prop_embed,
            "map_feat": self.map_feat,
            "head_hidden": self.head_hidden,
            "conv_channels": list(self.conv_channels),
            "n_points": self.n_points,
            "max_poses": self.max_poses,
            "map_dims": list(self.map_dims),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DimensionTable":
        return cls(
            point_feat=int(d["point_feat"]),
            pose_embed=int(d["pose_embed"]),
            prop_embed=int(d["prop_embed"]),
            map_feat=int(d["map_feat"]),
            head_hidden=int(d["head_hidden"]),
            conv_channels=tuple(int(c) for c in d["conv_channels"]),
            n_points=int(d["n_points"]),
            max_poses=int(d["max_poses"]),
            map_dims=tuple(int(c) for c in d["map_dims"]),
        )


@dataclass(frozen=True)
class DecisionInputs:
    """Raw arrays for one decision step, per buffered object with >=1 fit.

    Everything is stored unnormalized (heights in cm, coordinates in cells);
    the network applies its own input scaling.  The candidate fields may be
    empty when only object-level features are needed (next-state lookups).
    """

    points: tuple[np.ndarray, ...]  # per object (n, 3) float32, centroid frame
    pose_quats: tuple[np.ndarray, ...]  # per object (P, 4) float32 (w, x, y, z)
    prop_vecs: np.ndarray  # (M, 5) float32
    container_map: np.ndarray  # (W, L)
    fragility_map: np.ndarray  # (W, L)
    avoidance_maps: np.ndarray  # (M, W, L)
    cand_geoms: tuple[np.ndarray, ...] = ()  # per object (K, 4) int [z, y, x, o]
    cand_stats: tuple[np.ndarray, ...] = ()  # per object (K, 6) float32

    @property
    def n_objects(self) -> int:
        return len(self.points)


def dueling_combine(value: torch.Tensor, advantages: torch.Tensor) -> torch.Tensor:
    """Q_i = V + A_i - mean(A); the advantage is centered so mean(Q) = V."""
    if advantages.numel() == 0:
        raise ValueError("dueling_combine needs at least one advantage entry")
    return value + advantages - advantages.mean()


def _masked_mean(t: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    # t: (B, N, d) or (B, N); mask: (B, N) bool with >=1 True per row
    m = mask.to(t.dtype)
    if t.dim() == 3:
        m = m.unsqueeze(-1)
    return (t * m).sum(dim=1) / m.sum(dim=1)


class _MapEncoder(nn.Module):
    """Two strided 3x3 convolutions then a linear projection."""

    def __init__(self, dims: DimensionTable):
        super().__init__()
        c1, c2 = dims.conv_channels
        w, l, _ = dims.map_dims
        self.conv1 = nn.Conv2d(1, c1, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        w_out = (w + 1) // 2
        l_out = (l + 1) // 2
        w_out = (w_out + 1) // 2
        l_out = (l_out + 1) // 2
        self.fc = nn.Linear(c2 * w_out * l_out, dims.map_feat)

    def forward(self, maps: torch.Tensor) -> torch.Tensor:
        # maps: (B, W, L), already normalized to [0, 1]
        h = F.gelu(self.conv1(maps.unsqueeze(1)))
        h = F.gelu(self.conv2(h))
        return F.gelu(self.fc(h.flatten(1)))


def _mlp(sizes: Sequence[int]) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            layers.append(nn.GELU())
    return nn.Sequential(*layers)


class PackingQNet(nn.Module):
    """Six encoders feeding an object head and a placement head.

    All layers initialize from a fan-in-scaled uniform draw under a dedicated
    generator, so (dims, seed) fully determines the parameters.
    """

    def __init__(self, dims: DimensionTable = DimensionTable(), seed: int = 0):
        super().__init__()
        self.dims = dims
        self.init_seed = seed
        pf, pe, pr = dims.point_feat, dims.pose_embed, dims.prop_embed
        self.point_mlp = _mlp([3, pf, pf])
        self.pose_mlp = _mlp([4, pe, pe])
        self.prop_mlp = _mlp([5, pr, pr])
        self.enc_container = _MapEncoder(dims)
        self.enc_fragility = _MapEncoder(dims)
        self.enc_avoidance = _MapEncoder(dims)
        hh = dims.head_hidden
        self.obj_value = _mlp([dims.object_feat, hh, hh, 1])
        self.obj_adv = _mlp([dims.object_feat, hh, hh, 1])
        self.place_value = _mlp([dims.placement_feat, hh, hh, 1])
        self.place_adv = _mlp([dims.placement_feat, hh, hh, 1])
        self._init_params(seed)

    def _init_params(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for mod in self.modules():
                if isinstance(mod, nn.Linear):
                    fan_in = mod.weight.shape[1]
                elif isinstance(mod, nn.Conv2d):
                    fan_in = mod.weight.shape[1] * mod.weight.shape[2] * mod.weight.shape[3]
                else:
                    continue
                bound = 1.0 / float(np.sqrt(fan_in))
                mod.weight.uniform_(-bound, bound, generator=gen)
                mod.bias.uniform_(-bound, bound, generator=gen)

    @property
    def _dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def _tensor(self, a: np.ndarray) -> torch.Tensor:
        return torch.as_tensor(np.asarray(a), dtype=self._dtype)

    # --- single-sample encoder ops ------------------------------------

    def encode_object(
        self, points: np.ndarray, pose_quats: np.ndarray, prop_vec: np.ndarray
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """(f_P, f_O, f_V) for one object.

        f_P pools a shared per-point transform with max, so it is invariant
        to point order.  f_O concatenates the pose embeddings padded with
        zeros out to the pose maximum.  f_V embeds the scaled property
        vector.
        """
        points = np.asarray(points, dtype=np.float32)
        if points.ndim != 2 or points.shape[1] != 3 or points.shape[0] == 0:
            raise ValueError("points must be a nonempty (n, 3) array")
        pose_quats = np.asarray(pose_quats, dtype=np.float32)
        if pose_quats.ndim != 2 or pose_quats.shape[1] != 4 or pose_quats.shape[0] == 0:
            raise ValueError("pose_quats must be a nonempty (P, 4) array")
        if pose_quats.shape[0] > self.dims.max_poses:
            raise ValueError(f"more than {self.dims.max_poses} poses")
        prop_vec = np.asarray(prop_vec, dtype=np.float32)
        if prop_vec.shape != (5,):
            raise ValueError("prop_vec must have 5 entries")

        f_p = self.point_mlp(self._tensor(points * _POINT_SCALE)).max(dim=0).values
        emb = self.pose_mlp(self._tensor(pose_quats))
        pad = emb.new_zeros((self.dims.max_poses - emb.shape[0], emb.shape[1]))
        f_o = torch.cat([emb, pad], dim=0).reshape(-1)
        f_v = self.prop_mlp(self._tensor(prop_vec * _PROP_SCALE))
        return f_p, f_o, f_v

    def encode_maps(
        self, container: np.ndarray, fragility: np.ndarray, avoidance: np.ndarray
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """(f_C, f_G, f_D) for one decision; maps are normalized by H."""
        w, l, h = self.dims.map_dims
        for name, m in (("container", container), ("fragility", fragility), ("avoidance", avoidance)):
            if np.asarray(m).shape != (w, l):
                raise ValueError(f"{name} map must have shape {(w, l)}")
        scale = 1.0 / float(h)
        f_c = self.enc_container(self._tensor(container)[None] * scale)[0]
        f_g = self.enc_fragility(self._tensor(fragility)[None] * scale)[0]
        f_d = self.enc_avoidance(self._tensor(avoidance)[None] * scale)[0]
        return f_c, f_g, f_d

    # --- batched feature assembly -------------------------------------

    def _object_features(self, batch: Sequence[DecisionInputs]) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Per-object concat features for a batch of decisions.

        Returns (x_obj (N, d), item_index (N,), f_cg (B, 2*map_feat)) where N
        is the total object count across the batch.
        """
        w, l, h = self.dims.map_dims
        scale = 1.0 / float(h)
        counts = [b.n_objects for b in batch]
        if min(counts) == 0:
            raise ValueError("decision inputs with no objects")

        cont = self._tensor(np.stack([np.asarray(b.container_map) for b in batch])) * scale
        frag = self._tensor(np.stack([np.asarray(b.fragility_map) for b in batch])) * scale
        avoid_rows = np.concatenate([np.asarray(b.avoidance_maps) for b in batch], axis=0)
        f_c = self.enc_container(cont)
        f_g = self.enc_fragility(frag)
        f_d = self.enc_avoidance(self._tensor(avoid_rows) * scale)

        all_points = [p for b in batch for p in b.points]
        n_max = max(p.shape[0] for p in all_points)
        pts = np.zeros((len(all_points), n_max, 3), dtype=np.float32)
        msk = np.zeros((len(all_points), n_max), dtype=bool)
        for i, p in enumerate(all_points):
            pts[i, : p.shape[0]] = p * _POINT_SCALE
            msk[i, : p.shape[0]] = True
        hpts = self.point_mlp(self._tensor(pts))
        mask_t = torch.as_tensor(msk).unsqueeze(-1)
        f_p = torch.where(mask_t, hpts, hpts.new_full((), float("-inf"))).max(dim=1).values

        props = np.concatenate([np.asarray(b.prop_vecs, dtype=np.float32) for b in batch], axis=0)
        f_v = self.prop_mlp(self._tensor(props * _PROP_SCALE))

        item_index = torch.repeat_interleave(
            torch.arange(len(batch)), torch.as_tensor(counts)
        )
        x_obj = torch.cat([f_p, f_v, f_c[item_index], f_g[item_index], f_d], dim=1)
        f_cg = torch.cat([f_c, f_g], dim=1)
        return x_obj, item_index, f_cg

    def _pad_rows(self, rows: torch.Tensor, item_index: torch.Tensor, n_items: int) -> tuple[torch.Tensor, torch.Tensor]:
        """Scatter (N, d) rows into (B, N_max, d) with a validity mask."""
        counts = torch.bincount(item_index, minlength=n_items)
        n_max = int(counts.max())
        out = rows.new_zeros((n_items, n_max, rows.shape[1]))
        mask = torch.zeros((n_items, n_max), dtype=torch.bool)
        offsets = torch.cumsum(counts, 0) - counts
        slot = torch.arange(rows.shape[0]) - offsets[item_index]
        out[item_index, slot] = rows
        mask[item_index, slot] = True
        return out, mask

    def _dueling_q(self, x_pad: torch.Tensor, mask: torch.Tensor, value_mlp: nn.Module, adv_mlp: nn.Module) -> torch.Tensor:
        """Padded dueling head: (B, N_max) Q with zeros at masked slots."""
        v = value_mlp(_masked_mean(x_pad, mask))  # (B, 1)
        a = adv_mlp(x_pad).squeeze(-1)  # (B, N_max)
        a = torch.where(mask, a, a.new_zeros(()))
        a_mean = _masked_mean(a, mask).unsqueeze(1)
        q = v + a - a_mean
        return torch.where(mask, q, q.new_zeros(()))

    def object_q_batch(self, batch: Sequence[DecisionInputs]) -> tuple[torch.Tensor, torch.Tensor]:
        x_obj, item_index, _ = self._object_features(batch)
        x_pad, mask = self._pad_rows(x_obj, item_index, len(batch))
        return self._dueling_q(x_pad, mask, self.obj_value, self.obj_adv), mask

    def _placement_x(self, batch: Sequence[DecisionInputs], object_indices: Sequence[int]) -> tuple[torch.Tensor, torch.Tensor]:
        w, l, h = self.dims.map_dims
        x_obj, item_index, _ = self._object_features(batch)
        # row offset of each item's chosen object in the flat object table
        counts = [b.n_objects for b in batch]
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
        chosen_rows = [int(offsets[i] + oi) for i, oi in enumerate(object_indices)]

        geoms, stats, cand_item = [], [], []
        for i, (b, oi) in enumerate(zip(batch, object_indices)):
            g = np.asarray(b.cand_geoms[oi])
            if g.shape[0] == 0:
                raise ValueError("chosen object has no candidate actions")
            geoms.append(g)
            stats.append(np.asarray(b.cand_stats[oi], dtype=np.float32))
            cand_item.extend([i] * g.shape[0])
        geoms_np = np.concatenate(geoms, axis=0)
        stats_t = self._tensor(np.concatenate(stats, axis=0)) / float(h)
        cand_item_t = torch.as_tensor(cand_item)

        pose_emb = self.pose_mlp(self._tensor(ORIENTATION_QUATS[geoms_np[:, 3]]))
        coords = self._tensor(
            np.stack(
                [
                    geoms_np[:, 2] / float(w),
                    geoms_np[:, 1] / float(l),
                    geoms_np[:, 0] / float(h),
                ],
                axis=1,
            )
        )
        x_place = torch.cat(
            [x_obj[torch.as_tensor(chosen_rows)][cand_item_t], pose_emb, coords, stats_t],
            dim=1,
        )
        return x_place, cand_item_t

    def placement_q_batch(self, batch: Sequence[DecisionInputs], object_indices: Sequence[int]) -> tuple[torch.Tensor, torch.Tensor]:
        x_place, cand_item = self._placement_x(batch, object_indices)
        x_pad, mask = self._pad_rows(x_place, cand_item, len(batch))
        return self._dueling_q(x_pad, mask, self.place_value, self.place_adv), mask

    # --- single-decision inference ------------------------------------

    def object_qvalues(self, inputs: DecisionInputs) -> torch.Tensor:
        q, mask = self.object_q_batch([inputs])
        return q[0, mask[0]]

    def placement_qvalues(self, inputs: DecisionInputs, object_index: int) -> torch.Tensor:
        q, mask = self.placement_q_batch([inputs], [object_index])
        return q[0, mask[0]]

    def clone(self) -> "PackingQNet":
        other = PackingQNet(self.dims, self.init_seed)
        other.load_state_dict(self.state_dict())
        return other


# --- flat parameter array and checkpoints -----------------------------


def get_flat_params(net: PackingQNet) -> np.ndarray:
    return np.concatenate(
        [p.detach().cpu().numpy().astype(np.float64).ravel() for _, p in net.named_parameters()]
    )


def set_flat_params(net: PackingQNet, flat: np.ndarray) -> None:
    flat = np.asarray(flat)
    i = 0
    with torch.no_grad():
        for _, p in net.named_parameters():
            n = p.numel()
            chunk = flat[i : i + n].reshape(p.shape)
            p.copy_(torch.as_tensor(chunk, dtype=p.dtype))
            i += n
    if i != flat.size:
        raise ValueError(f"flat parameter array has {flat.size} values, net needs {i}")


def param_count(net: PackingQNet) -> int:
    return sum(p.numel() for p in net.parameters())


def save_checkpoint(path, net: PackingQNet, step: int = 0, train_seed: int = 0) -> None:
    """Versioned header line, one sorted-key JSON metadata line, then the
    float32 little-endian parameter bytes in named-parameter order."""
    flat = np.concatenate(
        [p.detach().cpu().numpy().astype("<f4").ravel() for _, p in net.named_parameters()]
    )
    meta = {
        "dims": net.dims.to_json_dict(),
        "init_seed": net.init_seed,
        "param_count": int(flat.size),
        "step": int(step),
        "train_seed": int(train_seed),
    }
    with open(path, "wb") as fh:
        fh.write((_CHECKPOINT_MAGIC + "\n").encode("ascii"))
        fh.write((json.dumps(meta, sort_keys=True) + "\n").encode("ascii"))
        fh.write(flat.tobytes())


def load_checkpoint(path) -> tuple[PackingQNet, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    head, sep, rest = blob.partition(b"\n")
    if not sep or head.decode("ascii", "replace") != _CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint header in {path}")
    meta_line, sep, body = rest.partition(b"\n")
    if not sep:
        raise CheckpointError(f"missing metadata line in {path}")
    try:
        meta = json.loads(meta_line.decode("ascii"))
        dims = DimensionTable.from_json_dict(meta["dims"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"unreadable checkpoint metadata in {path}: {exc}") from exc
    net = PackingQNet(dims, seed=int(meta.get("init_seed", 0)))
    n = param_count(net)
    if meta.get("param_count") != n or len(body) != 4 * n:
        raise CheckpointError(
            f"parameter payload mismatch in {path}: {len(body)} bytes for {n} parameters"
        )
    set_flat_params(net, np.frombuffer(body, dtype="<f4").copy())
    return net, meta


# --- loss with exact gradients ----------------------------------------


@dataclass(frozen=True)
class QTrainItem:
    """One supervised decision: which Q entry should move toward which value."""

    inputs: DecisionInputs
    action_index: int
    target: float
    object_index: int = 0  # placement head only: which object's candidates


def batch_loss(net: PackingQNet, items: Sequence[QTrainItem], head: str) -> torch.Tensor:
    """Mean squared error between chosen-action Q and targets, as a graph."""
    if len(items) == 0:
        raise ValueError("empty training batch")
    targets = [it.target for it in items]
    if not np.all(np.isfinite(targets)):
        raise ValueError("non-finite target in training batch")
    batch = [it.inputs for it in items]
    if head == "object":
        q, _ = net.object_q_batch(batch)
    elif head == "placement":
        q, _ = net.placement_q_batch(batch, [it.object_index for it in items])
    else:
        raise ValueError(f"unknown head: {head}")
    rows = torch.arange(len(items))
    cols = torch.as_tensor([it.action_index for it in items])
    chosen = q[rows, cols]
    target_t = torch.as_tensor(targets, dtype=chosen.dtype)
    return ((chosen - target_t) ** 2).mean()


def loss_and_gradients(net: PackingQNet, items: Sequence[QTrainItem], head: str) -> tuple[float, np.ndarray]:
    """Loss value and the exact gradient for every parameter, flattened in
    named-parameter order; parameters outside the head's path get zeros."""
    net.zero_grad(set_to_none=True)
    loss = batch_loss(net, items, head)
    loss.backward()
    grads = []
    for _, p in net.named_parameters():
        if p.grad is None:
            grads.append(np.zeros(p.numel()))
        else:
            grads.append(p.grad.detach().cpu().numpy().astype(np.float64).ravel())
    net.zero_grad(set_to_none=True)
    return float(loss.detach()), np.concatenate(grads)


# --- scene preparation and the learned policy -------------------------


class PointCloudCache:
    """Surface point samples per shape id; sampling is seeded and reused."""

    def __init__(self, n_points: int = 128, seed: int = 0):
        self.n_points = n_points
        self.seed = seed
        self._store: dict[str, np.ndarray] = {}

    def get(self, shape: VoxelShape) -> np.ndarray:
        pts = self._store.get(shape.id)
        if pts is None:
            pts = sample_surface_points(shape, self.n_points, self.seed).astype(np.float32)
            self._store[shape.id] = pts
        return pts


@dataclass(frozen=True)
class PreparedStep:
    """DecisionInputs plus the id/action bookkeeping to act on the result."""

    inputs: DecisionInputs
    object_ids: tuple[str, ...]
    candidates: tuple[tuple[CandidateAction, ...], ...]


def candidate_stats(
    state: ContainerState,
    entry,
    cands: Sequence[CandidateAction],
    avoid_map: np.ndarray,
    frag: np.ndarray | None = None,
) -> np.ndarray:
    """Mean and max of heightmap / fragility map / avoidance map under each
    candidate's footprint, as a (K, 6) array of raw heights."""
    if frag is None:
        frag = fragility_map(state)
    out = np.zeros((len(cands), 6), dtype=np.float32)
    fp = entry.footprint
    nx, ny, _ = entry.dims
    for i, c in enumerate(cands):
        for j, m in enumerate((state.heightmap, frag, avoid_map)):
            vals = m[c.x : c.x + nx, c.y : c.y + ny][fp]
            out[i, 2 * j] = float(vals.mean())
            out[i, 2 * j + 1] = float(vals.max())
    return out


def prepare_step(
    state: ContainerState,
    buffer,
    ctx,
    point_cache: PointCloudCache,
) -> Optional[PreparedStep]:
    """Assemble DecisionInputs for the buffered objects that currently fit.

    Candidates come from the shared enumerator; objects with no feasible
    candidate are dropped.  Returns None when nothing fits.
    """
    frag = fragility_map(state)
    ids: list[str] = []
    points: list[np.ndarray] = []
    poses: list[np.ndarray] = []
    props: list[np.ndarray] = []
    avoid_maps: list[np.ndarray] = []
    geoms: list[np.ndarray] = []
    stats: list[np.ndarray] = []
    cand_lists: list[tuple[CandidateAction, ...]] = []
    for rec in buffer:
        cands = enumerate_candidates(state, rec, ctx.cache, ctx.candidate_cap)
        if not cands:
            continue
        amap = avoidance_map(state, rec.id, ctx.avoidance)
        ids.append(rec.id)
        points.append(point_cache.get(rec.shape))
        quats = np.array(
            [ORIENTATION_QUATS[o.index] for o in ctx.cache.stable_orientations(rec.shape)],
            dtype=np.float32,
        )
        poses.append(quats)
        props.append(property_vector(rec.shape, rec.properties, ctx.material_table).astype(np.float32))
        avoid_maps.append(amap)
        g = np.array([[c.z, c.y, c.x, c.orientation_index] for c in cands], dtype=np.int64)
        geoms.append(g)
        st = np.zeros((len(cands), 6), dtype=np.float32)
        for o_idx in np.unique(g[:, 3]):
            sel = np.nonzero(g[:, 3] == o_idx)[0]
            entry = ctx.cache.entry(rec.shape, int(o_idx))
            st[sel] = candidate_stats(state, entry, [cands[k] for k in sel], amap, frag)
        stats.append(st)
        cand_lists.append(tuple(cands))
    if not ids:
        return None
    inputs = DecisionInputs(
        points=tuple(points),
        pose_quats=tuple(poses),
        prop_vecs=np.stack(props),
        container_map=state.heightmap.copy(),
        fragility_map=frag,
        avoidance_maps=np.stack(avoid_maps),
        cand_geoms=tuple(geoms),
        cand_stats=tuple(stats),
    )
    return PreparedStep(inputs, tuple(ids), tuple(cand_lists))


class LearnedPolicy:
    """Greedy argmax over the object head, then the placement head."""

    name = "opa"

    def __init__(self, net: PackingQNet, point_cache: PointCloudCache | None = None):
        self.net = net
        self.point_cache = point_cache or PointCloudCache(net.dims.n_points)

    def reset(self, episode_seed: int) -> None:
        pass

    def select(self, state, buffer, ctx) -> Optional[CandidateAction]:
        prepared = prepare_step(state, buffer, ctx, self.point_cache)
        if prepared is None:
            return None
        with torch.no_grad():
            q_obj = self.net.object_qvalues(prepared.inputs).cpu().numpy()
            b = int(q_obj.argmax())
            q_place = self.net.placement_qvalues(prepared.inputs, b).cpu().numpy()
            k = int(q_place.argmax())
        return prepared.candidates[b][k]
