#!/usr/bin/env python3
"""Build the frozen evaluation dataset: a 12-object catalog, paired scenario
sets, and the training configuration used by the directional learning checks.

Everything is deterministic; rerunning overwrites the same bytes.
"""

import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from proppack.catalog import (
    Catalog,
    ObjectRecord,
    make_box,
    make_cylinder,
    make_hemisphere,
    make_l_shape,
    make_scenario,
    make_t_shape,
    save_catalog,
    save_scenarios,
)
from proppack.properties import ObjectProperties
from proppack.voxelgeom import volume

OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "acceptance")

CONTAINER = (16, 16, 15)
N_EVAL = 100
N_TRAIN = 50
ARRIVALS = 40
BUFFER = 5


def build_catalog() -> Catalog:
    def rec(oid, family, shape, level, **flags):
        return ObjectRecord(oid, family, shape, ObjectProperties(density_level=level, **flags))

    records = [
        rec("crate_a", "box", make_box((6, 5, 4), "crate_a"), 2),
        rec("crate_b", "box", make_box((8, 5, 3), "crate_b"), 3),
        rec("glass_cube", "box", make_box((4, 4, 4), "glass_cube"), 1, fragile=True),
        rec("glass_tray", "box", make_box((6, 6, 2), "glass_tray"), 2, fragile=True),
        rec("bracket", "l_shape", make_l_shape((6, 6, 4), (3, 3), "bracket"), 3),
        rec("cushion_l", "l_shape", make_l_shape((5, 5, 5), (2, 2), "cushion_l"), 1, soft=True),
        rec("girder", "t_shape", make_t_shape((8, 3, 3), 2, 3, "girder"), 2),
        rec("drum", "cylinder", make_cylinder(6, 4, "drum"), 4),
        rec("vial_tube", "cylinder", make_cylinder(4, 6, "vial_tube"), 1, fragile=True),
        rec("knife_block", "box", make_box((2, 2, 7), "knife_block"), 5, sharp=True),
        rec("dome_rock", "hemisphere", make_hemisphere(4, "dome_rock"), 2),
        rec("pillow_mat", "box", make_box((7, 7, 2), "pillow_mat"), 1),
    ]
    return Catalog(records)


TRAIN_CONFIG = {
    "dims": {
        "point_feat": 64,
        "pose_embed": 16,
        "prop_embed": 16,
        "map_feat": 64,
        "head_hidden": 128,
        "conv_channels": [8, 16],
        "n_points": 64,
        "max_poses": 24,
        "map_dims": list(CONTAINER),
    },
    "training": {
        "replay_capacity": 20000,
        "batch_size": 16,
        "learning_rate": 5e-4,
        "epsilon_start": 1.0,
        "epsilon_end": 0.05,
        "epsilon_decay_steps": 2500,
        "target_sync_interval": 250,
        "warmup_steps": 200,
        "max_steps": 5000,
    },
    "reward": {
        "compact_weight": 10.0,
        "fragile_weight": 20.0,
        "avoid_weight": 0.2,
        "discount": 0.8,
    },
    "seeds": [101, 102, 103],
    "container": list(CONTAINER),
}


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    catalog = build_catalog()
    save_catalog(catalog, os.path.join(OUT_DIR, "catalog.txt"))

    vols = {r.id: volume(r.shape) for r in catalog.records}
    mean_vol = sum(vols.values()) / len(vols)
    capacity = CONTAINER[0] * CONTAINER[1] * CONTAINER[2]
    print(f"catalog: {len(catalog)} objects, volumes {min(vols.values())}..{max(vols.values())}")
    print(f"mean volume {mean_vol:.1f}; {ARRIVALS} arrivals ~ "
          f"{ARRIVALS * mean_vol / capacity:.2f}x container capacity")
    pairs = int(catalog.avoidance.matrix.sum()) // 2
    frag = sum(1 for r in catalog.records if r.properties.fragile)
    print(f"{frag} fragile objects, {pairs} avoidance pairs")

    eval_scens = [
        make_scenario(catalog, ARRIVALS, seed=1000 + i, buffer_capacity=BUFFER)
        for i in range(N_EVAL)
    ]
    save_scenarios(eval_scens, os.path.join(OUT_DIR, "eval_scenarios.txt"))
    train_scens = [
        make_scenario(catalog, ARRIVALS, seed=2000 + i, buffer_capacity=BUFFER)
        for i in range(N_TRAIN)
    ]
    save_scenarios(train_scens, os.path.join(OUT_DIR, "train_scenarios.txt"))
    print(f"wrote {N_EVAL} eval + {N_TRAIN} train scenarios (buffer {BUFFER})")

    with open(os.path.join(OUT_DIR, "train_config.json"), "w", encoding="ascii") as fh:
        json.dump(TRAIN_CONFIG, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print("wrote train_config.json")


if __name__ == "__main__":
    main()
