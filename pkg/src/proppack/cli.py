"""Command-line front end.

Subcommands cover the whole workflow: generate a synthetic catalog and
scenario set, pack with any policy, train the learned policy, evaluate
policies pairwise, and render terminal packings.  Exit codes: 0 success,
1 usage error, 2 data error, 3 contract violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .catalog import (
    Catalog,
    GenerationSpec,
    PropertyMarginals,
    Scenario,
    generate_synthetic,
    load_catalog,
    load_scenarios,
    make_scenario,
    save_catalog,
    save_scenarios,
)
from .errors import PackError, UsageError
from .harness import (
    DEFAULT_CONTAINER,
    evaluate,
    render,
    report_csv,
    report_summary,
    run_episode,
)
from .heuristics import (
    DeepestBottomLeft,
    FirstFit,
    MinHeight,
    MinIncrement,
    PlanningContext,
    RandomPolicy,
)
from .properties import FLAG_NAMES

HEURISTIC_POLICIES = {
    "firstfit": FirstFit,
    "dbl": DeepestBottomLeft,
    "minz": MinHeight,
    "hm": MinIncrement,
}


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise UsageError(f"container must look like 32x32x30, got {text!r}")
    try:
        w, l, h = (int(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"container must look like 32x32x30, got {text!r}") from exc
    if min(w, l, h) < 1:
        raise UsageError("container dimensions must all be positive")
    return w, l, h


def _parse_counts(text: str) -> dict:
    counts = {}
    for chunk in text.split(","):
        if not chunk:
            continue
        name, _, num = chunk.partition("=")
        try:
            counts[name.strip()] = int(num)
        except ValueError as exc:
            raise UsageError(f"bad counts entry {chunk!r}; expected family=N") from exc
    if not counts:
        raise UsageError("counts cannot be empty")
    return counts


def _build_policy(name: str, args):
    if name in HEURISTIC_POLICIES:
        return HEURISTIC_POLICIES[name]()
    if name == "random":
        return RandomPolicy(seed=args.seed)
    if name == "opa":
        if not getattr(args, "checkpoint", None):
            raise UsageError("policy 'opa' needs --checkpoint")
        from .opanet import LearnedPolicy, load_checkpoint

        net, _ = load_checkpoint(args.checkpoint)
        dims = _parse_dims(args.container)
        if tuple(net.dims.map_dims) != dims:
            raise UsageError(
                f"checkpoint was trained on container "
                f"{'x'.join(map(str, net.dims.map_dims))}, not {args.container}"
            )
        return LearnedPolicy(net)
    raise UsageError(
        f"unknown policy {name!r}; choose from "
        f"{', '.join([*HEURISTIC_POLICIES, 'random', 'opa'])}"
    )


# --- subcommands ----------------------------------------------------------

def cmd_gen_catalog(args) -> int:
    marginals = PropertyMarginals(**{f: getattr(args, f"p_{f}") for f in FLAG_NAMES})
    spec = GenerationSpec(
        counts=_parse_counts(args.counts),
        size_range=(args.size_min, args.size_max),
        marginals=marginals,
    )
    catalog = generate_synthetic(spec, seed=args.seed)
    save_catalog(catalog, args.out)
    pairs = int(catalog.avoidance.matrix.sum()) // 2
    print(f"wrote {len(catalog)} objects to {args.out} ({pairs} avoidance pairs)")
    return 0


def cmd_gen_scenarios(args) -> int:
    catalog = load_catalog(args.catalog)
    scenarios = [
        make_scenario(
            catalog, args.objects, seed=args.seed + i, buffer_capacity=args.buffer
        )
        for i in range(args.count)
    ]
    save_scenarios(scenarios, args.out)
    print(f"wrote {len(scenarios)} scenarios to {args.out}")
    return 0


def _load_episode_inputs(args) -> tuple[Catalog, list[Scenario]]:
    catalog = load_catalog(args.catalog)
    scenarios = load_scenarios(args.scenarios, catalog)
    return catalog, scenarios


def cmd_pack(args) -> int:
    catalog, scenarios = _load_episode_inputs(args)
    if not 0 <= args.index < len(scenarios):
        raise UsageError(f"scenario index {args.index} out of range [0, {len(scenarios)})")
    scenario = scenarios[args.index]
    policy = _build_policy(args.policy, args)
    dims = _parse_dims(args.container)
    result = run_episode(scenario, policy, catalog, container_dims=dims)
    print(
        f"{result.policy} on {result.scenario}: {result.steps} placed, "
        f"C={result.compactness:.4f}, close pairs={result.close_pair_count}, "
        f"pressure={result.mean_pressure:.4f}"
    )
    if args.render_dir:
        ctx = PlanningContext(catalog=catalog)
        state = _replay(result, catalog, dims, ctx)
        for path in render(state, args.render_dir, result.scenario, catalog.avoidance):
            print(f"wrote {path}")
    return 0


def _replay(result, catalog, dims, ctx):
    from .container import ContainerState, place

    state = ContainerState.empty(dims)
    for step in result.placements:
        state, _ = place(
            state, catalog.get(step.object_id), step.orientation_index,
            step.x, step.y, ctx.cache, ctx.material_table,
        )
    return state


def cmd_train(args) -> int:
    from .opanet import DimensionTable, save_checkpoint
    from .training import RewardConfig, TrainingConfig, train, write_curves

    catalog = load_catalog(args.catalog)
    scenarios = load_scenarios(args.scenarios, catalog)
    overrides = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)

    def build(cls, key, **extra):
        known = {f.name for f in dataclasses.fields(cls)}
        given = overrides.get(key, {})
        unknown = set(given) - known
        if unknown:
            raise UsageError(f"unknown {key} config keys: {sorted(unknown)}")
        return cls(**{**given, **extra})

    reward_cfg = build(RewardConfig, "reward")
    train_kwargs = {"seed": args.seed} if args.seed is not None else {}
    train_cfg = build(TrainingConfig, "training", **train_kwargs)
    if "dims" in overrides:
        dims = DimensionTable.from_json_dict(overrides["dims"])
    else:
        dims = DimensionTable()

    result = train(catalog, scenarios, reward_cfg, train_cfg, dims=dims)
    save_checkpoint(args.out, result.net, step=result.steps, train_seed=train_cfg.seed)
    print(f"trained {result.steps} steps / {result.episodes} episodes -> {args.out}")
    if args.curves:
        write_curves(args.curves, result.curves)
        print(f"wrote curves to {args.curves}")
    return 0


def cmd_eval(args) -> int:
    catalog, scenarios = _load_episode_inputs(args)
    names = [n.strip() for n in args.policies.split(",") if n.strip()]
    if not names:
        raise UsageError("no policies given")
    policies = [_build_policy(n, args) for n in names]
    dims = _parse_dims(args.container)
    report = evaluate(policies, scenarios, catalog, container_dims=dims)
    if args.report:
        with open(args.report, "w", encoding="ascii") as fh:
            fh.write(report_csv(report))
        print(f"wrote per-episode rows to {args.report}")
    print(report_summary(report), end="")
    return 0


def cmd_render(args) -> int:
    catalog, scenarios = _load_episode_inputs(args)
    if not 0 <= args.index < len(scenarios):
        raise UsageError(f"scenario index {args.index} out of range [0, {len(scenarios)})")
    policy = _build_policy(args.policy, args)
    dims = _parse_dims(args.container)
    ctx = PlanningContext(catalog=catalog)
    result = run_episode(scenarios[args.index], policy, catalog, container_dims=dims, ctx=ctx)
    state = _replay(result, catalog, dims, ctx)
    for path in render(state, args.out_dir, result.scenario, catalog.avoidance):
        print(f"wrote {path}")
    return 0


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proppack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-catalog", help="generate a synthetic object catalog")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", default="box=6,l_shape=3,t_shape=3,cylinder=2,hemisphere=2",
                   help="comma list of family=N")
    p.add_argument("--size-min", type=int, default=2)
    p.add_argument("--size-max", type=int, default=8)
    for flag in FLAG_NAMES:
        p.add_argument(f"--p-{flag.replace('_', '-')}", type=float, default=0.0,
                       dest=f"p_{flag}", help=f"marginal probability of {flag}")
    p.set_defaults(func=cmd_gen_catalog)

    p = sub.add_parser("gen-scenarios", help="sample arrival streams from a catalog")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--objects", type=int, default=30)
    p.add_argument("--buffer", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_scenarios)

    def episode_args(p):
        p.add_argument("--catalog", required=True)
        p.add_argument("--scenarios", required=True)
        p.add_argument("--container", default="x".join(map(str, DEFAULT_CONTAINER)))
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--seed", type=int, default=0, help="seed for the random policy")

    p = sub.add_parser("pack", help="run one scenario under one policy")
    episode_args(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--render-dir", default=None)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("train", help="train the learned policy")
    p.add_argument("--catalog", required=True)
    p.add_argument("--scenarios", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--curves", default=None, help="learning-curve csv path")
    p.add_argument("--config", default=None, help="json with reward/training/dims sections")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="compare policies over the same scenarios")
    episode_args(p)
    p.add_argument("--policies", required=True, help="comma list, e.g. firstfit,dbl,random")
    p.add_argument("--report", default=None, help="per-episode csv path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="render the terminal packing of one episode")
    episode_args(p)
    p.add_argument("--policy", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except PackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
