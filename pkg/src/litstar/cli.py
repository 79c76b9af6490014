"""Command line: ``lit plan|train|bake|bench``."""
import argparse
import json
import os
import sys
from dataclasses import fields, replace

from .bench import PLANNERS, emit_csv, emit_plot, run_benchmark
from .ddpg import TrainerConfig, train
from .neuralnet import load_network, save_network
from .planner import PlannerConfig, plan, save_result
from .policy import bake, default_axes, load_tensor, save_tensor
from .space import make_empty, make_narrow_passage, make_random_rectangles, make_rng

ENV_BUILDERS = {
    "np": lambda dim, seed, opts: make_narrow_passage(dim, seed=seed, **opts),
    "rr": lambda dim, seed, opts: make_random_rectangles(dim, seed=seed, **opts),
    "empty": lambda dim, seed, opts: make_empty(dim),
}


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


def _planner_config(args, doc):
    names = {f.name for f in fields(PlannerConfig)}
    overrides = {k: v for k, v in doc.get("planner", {}).items() if k in names}
    unknown = set(doc.get("planner", {})) - names
    if unknown:
        raise ValueError(f"unknown planner config keys: {sorted(unknown)}")
    cfg = PlannerConfig(**overrides)
    if args.time is not None:
        cfg = replace(cfg, time_budget=args.time)
    if getattr(args, "mode", None):
        cfg = replace(cfg, mode=args.mode)
    if args.clock:
        cfg = replace(cfg, clock=args.clock)
    return cfg


def _seed(args):
    env_seed = os.environ.get("LIT_SEED")
    if env_seed not in (None, ""):
        return int(env_seed)
    return args.seed


def _env(args, doc):
    return ENV_BUILDERS[args.env](args.dim, args.env_seed, doc.get("env", {}))


def _tensors(args):
    b = load_tensor(args.tensor_b) if args.tensor_b else None
    k = load_tensor(args.tensor_k) if args.tensor_k else None
    if b is not None and b.head != "B":
        raise ValueError(f"{args.tensor_b} holds a {b.head} tensor, expected B")
    if k is not None and k.head != "K":
        raise ValueError(f"{args.tensor_k} holds a {k.head} tensor, expected K")
    return b, k


def _actors(args):
    out = []
    for path in (args.actor_b, args.actor_k):
        if path is None:
            out.append(None)
            continue
        net, fuzzy, cons = load_network(path)
        if cons is None or fuzzy is None:
            raise ValueError(f"{path} lacks fuzzy parameters or consequents")
        out.append((net, fuzzy, cons))
    return tuple(out)


def cmd_plan(args):
    doc = _load_config(args.config)
    cfg = _planner_config(args, doc)
    seed = _seed(args)
    sols = plan(_env(args, doc), cfg, make_rng(seed), tensors=_tensors(args), actors=_actors(args))
    if args.out:
        save_result(args.out, sols, cfg, seed)
    if sols:
        print(f"{len(sols)} solutions; first cost {sols[0].cost:.4f} at {sols[0].time:.4f}s, "
              f"final cost {sols[-1].cost:.4f}")
    else:
        print("no solution within the time budget")
    return 0


def cmd_train(args):
    doc = _load_config(args.config)
    cfg = _planner_config(args, doc)
    seed = _seed(args)
    tdoc = dict(doc.get("trainer", {}))
    tdoc.update(head=args.head, seed=seed)
    if args.episodes is not None:
        tdoc["episodes"] = args.episodes
    if args.time is not None:
        tdoc["episode_budget"] = args.time
    tcfg = TrainerConfig(**tdoc)
    env_opts = doc.get("env", {})

    def factory(episode, rng):
        return ENV_BUILDERS[args.env](args.dim, args.env_seed + episode, env_opts)

    trainer = train(factory, args.head, tcfg, planner_config=cfg, log_path=args.log)
    out = args.out or f"actor_{args.head}.json"
    save_network(out, trainer.actor, trainer.fuzzy_params, trainer.consequents)
    print(f"trained {args.head}: {tcfg.episodes} episodes, {len(trainer.buffer)} transitions, "
          f"{trainer.updates} updates -> {out}")
    return 0


def cmd_bake(args):
    net, fuzzy, cons = load_network(args.weights)
    if fuzzy is None or cons is None:
        raise ValueError(f"{args.weights} lacks fuzzy parameters or consequents")
    tensor = bake(net, fuzzy, cons, default_axes(args.bins))
    out = args.out or f"tensor_{cons.head}.json"
    save_tensor(out, tensor)
    print(f"baked {cons.head} tensor {tensor.values.shape} -> {out}")
    return 0


def cmd_bench(args):
    doc = _load_config(args.config)
    cfg = _planner_config(args, doc)
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    summary, records = run_benchmark(_env(args, doc), planners, args.runs, cfg.time_budget,
                                     base_seed=_seed(args), tensors=_tensors(args),
                                     actors=_actors(args), config=cfg)
    out = args.out or "bench.csv"
    emit_csv(records, out)
    if args.plot:
        emit_plot(records, args.plot, budget=cfg.time_budget)
    for s in summary.values():
        print(f"{s.planner:12s} success {s.success_rate:.2f}  t_init {s.t_init[0]:.4f}  "
              f"c_init {s.c_init[0]:.4f} [{s.c_init[1]:.4f}, {s.c_init[2]:.4f}]  "
              f"c_final {s.c_final[0]:.4f}")
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--env", choices=sorted(ENV_BUILDERS), default="np")
    common.add_argument("--dim", type=int, default=4)
    common.add_argument("--env-seed", type=int, default=0, help="seed of the obstacle layout")
    common.add_argument("--time", type=float, default=None, help="time budget in seconds")
    common.add_argument("--seed", type=int, default=0, help="planner seed (LIT_SEED overrides)")
    common.add_argument("--clock", choices=("work", "wall"), default=None)
    common.add_argument("--config", default=None, help="JSON file overriding defaults")
    common.add_argument("--out", default=None)

    policy = argparse.ArgumentParser(add_help=False)
    policy.add_argument("--tensor-b", default=None)
    policy.add_argument("--tensor-k", default=None)
    policy.add_argument("--actor-b", default=None, help="trained B actor (online mode)")
    policy.add_argument("--actor-k", default=None, help="trained K actor (online mode)")

    p = argparse.ArgumentParser(prog="lit", description="Learning-based informed trees planner")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("plan", parents=[common, policy], help="run the planner once")
    sp.add_argument("--mode", choices=("fixed", "tensor", "online"), default=None)
    sp.set_defaults(func=cmd_plan)

    st = sub.add_parser("train", parents=[common], help="train one network head")
    st.add_argument("--head", choices=("B", "K"), required=True)
    st.add_argument("--episodes", type=int, default=None)
    st.add_argument("--log", default=None, help="training log CSV")
    st.set_defaults(func=cmd_train, env="rr")

    sk = sub.add_parser("bake", help="bake a trained actor into a policy tensor")
    sk.add_argument("--weights", required=True)
    sk.add_argument("--bins", type=int, default=21)
    sk.add_argument("--out", default=None)
    sk.set_defaults(func=cmd_bake)

    sb = sub.add_parser("bench", parents=[common, policy], help="repeated seeded runs")
    sb.add_argument("--runs", type=int, default=10)
    sb.add_argument("--planners", default="lit-fixed",
                    help=f"comma list from {', '.join(sorted(PLANNERS))}")
    sb.add_argument("--plot", default=None, help="SVG cost-vs-time plot")
    sb.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"lit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
