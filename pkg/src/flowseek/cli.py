"""Operator command line: gen, train, sample, eval, oracle.

Every command resolves one seed (flag, then config, then FLOWSEEK_SEED, then
0), writes a manifest naming its inputs by digest before doing real work, and
produces deterministic primary outputs: rerunning with identical arguments
and seed yields byte-identical files (manifest timestamps excluded).

Exit codes: 0 success, 2 usage or config error, 3 data error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

import jsonschema

from . import __version__
from .environments import EnvInstance, make_env, read_instances, write_instances
from .environments import generate_instances as gen_instances
from .errors import (
    CheckpointError,
    ConfigError,
    EnumerationCapError,
    FlowseekError,
    NumericError,
)
from .exploration import ExplorationSchedule
from .metrics import evaluate, load_run, write_breakdown_jsonl, write_metrics_csv
from .oracle import enumerate_dag, policy_terminal_dist, tv_distance
from .policy import load_checkpoint, save_checkpoint
from .rngutil import substream
from .trainer import LocalSearchConfig, TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

TRAIN_CONFIG_SCHEMA = {
    "type": "object",
    "required": ["env_id", "instances_path"],
    "additionalProperties": False,
    "properties": {
        "env_id": {"type": "string"},
        "instances_path": {"type": "string"},
        "iterations": {"type": "integer", "minimum": 1},
        "batch_size": {"type": "integer", "minimum": 1},
        "learning_rate": {"type": "number", "exclusiveMinimum": 0},
        "optimizer": {"enum": ["sgd", "adaptive"]},
        "loss": {"enum": ["logvar", "tb_logz"]},
        "seed": {"type": "integer"},
        "w": {"type": "number"},
        "lambda": {"type": "number"},
        "reward_floor": {"type": "number", "exclusiveMinimum": 0},
        "offline_data_path": {"type": ["string", "null"]},
        "parent_mode_override": {"enum": ["tree", "exact", None]},
        "schedules": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps_start": {"type": "number"},
                "eps_end": {"type": "number"},
                "beta_start": {"type": "number"},
                "beta_end": {"type": "number"},
                "replay_prob_start": {"type": "number"},
                "replay_prob_end": {"type": "number"},
            },
        },
        "local_search": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "num_recon": {"type": "integer", "minimum": 1},
                "k_mode": {"type": ["string", "integer"]},
                "to_training": {"type": "boolean"},
            },
        },
        "phi_mean_stopgrad": {"type": "boolean"},
        "policy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["linear", "mlp"]},
                "hidden_dim": {"type": "integer", "minimum": 1},
                "featurizer": {"enum": ["default", "tabular"]},
            },
        },
        "scorer": {"enum": ["uniform", "progress"]},
        "buffer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "capacity": {"type": "integer", "minimum": 1},
                "priority_mode": {"enum": ["reward", "log_reward"]},
            },
        },
        "logz": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "shared": {"type": "boolean"},
                "init": {"type": "number"},
                "learning_rate": {"type": ["number", "null"]},
            },
        },
        "lr_schedule": {"enum": ["none", "cosine"]},
        "max_grad_norm": {"type": ["number", "null"]},
        "checkpoint_interval": {"type": ["integer", "null"]},
        "out_dir": {"type": "string"},
    },
}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _default_seed(explicit: int | None, config_seed: int | None = None) -> int:
    if explicit is not None:
        return explicit
    if config_seed is not None:
        return config_seed
    env = os.environ.get("FLOWSEEK_SEED")
    return int(env) if env else 0


def write_manifest(out_dir: Path, command: str, seed: int, config: dict,
                   inputs: list, outputs: list) -> Path:
    manifest = {
        "tool": "flowseek",
        "version": __version__,
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"manifest-{command}.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def cmd_gen(args) -> int:
    seed = _default_seed(args.seed)
    out = Path(args.out)
    write_manifest(out.parent, "gen", seed,
                   {"env": args.env, "count": args.count, "difficulty": args.difficulty},
                   [], [out])
    instances = gen_instances(args.env, args.count, seed, args.difficulty)
    write_instances(out, instances)
    print(f"wrote {len(instances)} {args.env} instances to {out}")
    return EXIT_OK


def _resolve_train_config(args) -> tuple[TrainConfig, dict, Path, Path]:
    with open(args.config, encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON at line {exc.lineno}: {exc.msg}")
    try:
        jsonschema.validate(doc, TRAIN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        field = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{args.config}: field {field}: {exc.message}")

    # flags override config fields; the resolved merge is what gets recorded
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.iterations is not None:
        doc["iterations"] = args.iterations
    if args.out_dir is not None:
        doc["out_dir"] = args.out_dir
    if args.loss is not None:
        doc["loss"] = args.loss
    doc.setdefault("seed", _default_seed(None))
    doc.setdefault("out_dir", "runs/latest")

    sched = ExplorationSchedule(
        total_iterations=doc.get("iterations", 100), **doc.get("schedules", {})
    )
    ls = LocalSearchConfig(**doc.get("local_search", {}))
    policy_doc = doc.get("policy", {})
    buffer_doc = doc.get("buffer", {})
    logz_doc = doc.get("logz", {})
    config = TrainConfig(
        env_id=doc["env_id"],
        iterations=doc.get("iterations", 100),
        batch_size=doc.get("batch_size", 4),
        learning_rate=doc.get("learning_rate", 1e-3),
        optimizer=doc.get("optimizer", "adaptive"),
        loss=doc.get("loss", "logvar"),
        success_weight=doc.get("w", 100.0),
        intermediate_weight=doc.get("lambda", 1.5),
        reward_floor=doc.get("reward_floor", 1e-8),
        seed=doc["seed"],
        schedules=sched,
        offline_data_path=doc.get("offline_data_path"),
        parent_mode_override=doc.get("parent_mode_override"),
        local_search=ls,
        phi_mean_stopgrad=doc.get("phi_mean_stopgrad", False),
        policy_variant=policy_doc.get("variant", "linear"),
        hidden_dim=policy_doc.get("hidden_dim", 64),
        featurizer=policy_doc.get("featurizer", "default"),
        scorer=doc.get("scorer", "uniform"),
        buffer_capacity=buffer_doc.get("capacity", 1000),
        priority_mode=buffer_doc.get("priority_mode", "reward"),
        logz_shared=logz_doc.get("shared", True),
        logz_init=logz_doc.get("init", 0.0),
        logz_learning_rate=logz_doc.get("learning_rate"),
        lr_schedule=doc.get("lr_schedule", "none"),
        max_grad_norm=doc.get("max_grad_norm"),
        checkpoint_interval=doc.get("checkpoint_interval"),
    )
    return config, doc, Path(doc["instances_path"]), Path(doc["out_dir"])


def _checkpoint_extra(config: TrainConfig, envs: dict) -> dict:
    extra = {
        "env_id": config.env_id,
        "scorer": config.scorer,
        "success_weight": config.success_weight,
        "intermediate_weight": config.intermediate_weight,
        "reward_floor": config.reward_floor,
        "parent_mode_override": config.parent_mode_override,
        "featurizer": {"kind": config.featurizer},
    }
    if config.featurizer == "tabular":
        any_env = next(iter(envs.values()))
        extra["featurizer"]["table"] = any_env.table.to_doc()
    return extra


def cmd_train(args) -> int:
    config, doc, instances_path, out_dir = _resolve_train_config(args)
    if not instances_path.exists():
        raise FileNotFoundError(f"instance file not found: {instances_path}")
    inputs = [instances_path]
    if config.offline_data_path:
        if not Path(config.offline_data_path).exists():
            raise FileNotFoundError(f"offline data file not found: {config.offline_data_path}")
        inputs.append(Path(config.offline_data_path))
    ckpt_path = out_dir / "checkpoint.json"
    report_path = out_dir / "report.csv"
    trajlog_path = out_dir / "trajectories.jsonl"
    write_manifest(out_dir, "train", config.seed, doc, inputs,
                   [ckpt_path, report_path, trajlog_path])

    instances = read_instances(instances_path)
    bad = [i.instance_id for i in instances if i.env_id != config.env_id]
    if bad:
        raise FlowseekError(f"instances {bad[:3]} do not match env_id {config.env_id}")

    from .trainer import build_envs

    envs = build_envs(config, instances)
    extra = _checkpoint_extra(config, envs)
    from .policy import OptimizerState

    def checkpoint_writer(iteration, params, opt):
        save_checkpoint(out_dir / f"checkpoint-{iteration + 1}.json", params, opt, extra)

    params, report = train(config, instances, checkpoint_writer=checkpoint_writer)
    save_checkpoint(ckpt_path, params, OptimizerState(kind=config.optimizer,
                                                      learning_rate=config.learning_rate), extra)
    report.final_checkpoint = str(ckpt_path)
    report.write_csv(report_path)
    report.write_trajectory_log(trajlog_path)
    final_loss = report.records[-1]["mean_loss"]
    print(f"trained {config.iterations} iterations; final mean loss {final_loss:.6g}")
    print(f"checkpoint: {ckpt_path}")
    return EXIT_OK


def _envs_from_checkpoint(extra: dict, instances: list[EnvInstance]) -> dict:
    from .environments import TabularEnv, TabularIndex

    env_id = extra.get("env_id")
    mismatched = [i.instance_id for i in instances if i.env_id != env_id]
    if mismatched:
        raise CheckpointError(
            f"checkpoint is for env {env_id!r} but instances {mismatched[:3]} are not"
        )
    envs = {}
    for inst in instances:
        envs[inst.instance_id] = make_env(
            inst,
            scorer=extra.get("scorer", "uniform"),
            parent_mode=extra.get("parent_mode_override"),
            success_weight=extra.get("success_weight", 100.0),
            intermediate_weight=extra.get("intermediate_weight", 1.5),
            reward_floor=extra.get("reward_floor", 1e-8),
        )
    feat = extra.get("featurizer", {"kind": "default"})
    if feat.get("kind") == "tabular":
        table = TabularIndex.from_doc(feat["table"])
        envs = {k: TabularEnv(v, table) for k, v in envs.items()}
    return envs


def cmd_sample(args) -> int:
    seed = _default_seed(args.seed)
    ckpt_path = Path(args.checkpoint)
    inst_path = Path(args.instances)
    out = Path(args.out)
    write_manifest(out.parent, "sample", seed,
                   {"n": args.n, "beta": args.beta, "argmax": args.argmax},
                   [ckpt_path, inst_path], [out])

    params, _, extra = load_checkpoint(ckpt_path)
    instances = read_instances(inst_path)
    envs = _envs_from_checkpoint(extra, instances)

    from .exploration import sample_trajectory_mixed

    with open(out, "w", encoding="utf-8") as f:
        for inst in instances:
            env = envs[inst.instance_id]
            for k in range(args.n):
                if args.argmax:
                    traj = _argmax_rollout(params, env)
                else:
                    rng = substream(seed, "sample", inst.instance_id, k)
                    traj = sample_trajectory_mixed(params, env, eps=0.0, beta=args.beta, rng=rng)
                success = env.is_success(traj)
                rec = {
                    "instance_id": inst.instance_id,
                    "sample_index": k,
                    "actions": traj.actions,
                    "reward": traj.reward,
                    "success": bool(success),
                    "solution_key": env.solution_key(traj) if success else None,
                }
                f.write(json.dumps(rec, sort_keys=True))
                f.write("\n")
    print(f"wrote {args.n} samples per instance for {len(instances)} instances to {out}")
    return EXIT_OK


def _argmax_rollout(params, env):
    """Greedy decode: the beta -> 0 limit of tempered sampling, ties to the first index."""
    import numpy as np

    from .flow_core import Trajectory
    from .policy import action_logits

    state = env.s0
    states, actions, logpf = [state], [], []
    while not env.is_terminal(state):
        dist = action_logits(params, state, env.goal, env)
        idx = int(np.argmax(dist.logits))
        actions.append(dist.action_ids[idx])
        logpf.append(float(dist.log_probs[idx]))
        state = env.apply(state, dist.action_ids[idx])
        states.append(state)
    traj = Trajectory(env.instance.instance_id, states, actions, logpf, is_complete=True)
    traj.reward = env.reward(traj).total
    return traj


def cmd_eval(args) -> int:
    out = Path(args.out)
    specs = []
    for item in args.samples:
        if "=" in item:
            method, _, path = item.partition("=")
        else:
            method, path = Path(item).stem, item
        specs.append((method, Path(path)))
    write_manifest(out.parent, "eval", 0, {"methods": [m for m, _ in specs]},
                   [p for _, p in specs], [out])
    runs = [load_run(path, method) for method, path in specs]
    if len(runs) < 2:
        print("single method: creativity omitted (needs >= 2 aligned sample files)")
    reports = evaluate(runs)
    write_metrics_csv(out, reports)
    breakdown = out.with_suffix(".breakdown.jsonl")
    write_breakdown_jsonl(breakdown, runs)
    for r in reports:
        div = "undefined" if r.diversity is None else f"{r.diversity:.4f}"
        crea = "-" if r.creativity is None else f"{r.creativity:.4f}"
        print(f"{r.method_id}: accuracy {r.accuracy:.4f} diversity {div} creativity {crea}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst_path = Path(args.instances)
    out = Path(args.out)
    inputs = [inst_path]
    params = extra = None
    if args.checkpoint:
        inputs.append(Path(args.checkpoint))
        params, _, extra = load_checkpoint(args.checkpoint)
    write_manifest(out.parent, "oracle", 0, {"cap": args.cap}, inputs, [out])

    instances = read_instances(inst_path)
    envs = (
        _envs_from_checkpoint(extra, instances)
        if extra is not None
        else {i.instance_id: make_env(i) for i in instances}
    )
    n_failed = 0
    with open(out, "w", encoding="utf-8") as f:
        f.write("instance_id,Z,n_trajectories,n_terminals,tv_vs_policy,error\n")
        for inst in instances:
            env = envs[inst.instance_id]
            try:
                summary = enumerate_dag(inst, env, cap=args.cap)
                tv = ""
                if params is not None:
                    pdist = policy_terminal_dist(params, inst, env, cap=args.cap)
                    tv = repr(tv_distance(pdist, summary.target_terminal_dist))
                f.write(
                    f"{inst.instance_id},{summary.Z!r},{summary.n_trajectories},"
                    f"{summary.n_terminals},{tv},\n"
                )
            except EnumerationCapError as exc:
                n_failed += 1
                f.write(f"{inst.instance_id},,,,,cap-exceeded:{exc.partial_count}\n")
    print(f"oracle report for {len(instances)} instances written to {out}")
    if n_failed == len(instances):
        print("all instances exceeded the enumeration cap", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowseek",
        description="Train and evaluate reward-proportional samplers on discrete reasoning tasks.",
    )
    parser.add_argument("--version", action="version", version=f"flowseek {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    from .environments import ENV_IDS

    p = sub.add_parser("gen", help="generate a reproducible instance file")
    p.add_argument("--env", required=True, choices=ENV_IDS)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--difficulty", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="run the training loop from a JSON config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--loss", choices=["logvar", "tb_logz"], default=None)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="sample trajectories from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instances", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--argmax", action="store_true", help="greedy decode (beta -> 0 limit)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="compute accuracy/diversity/creativity from sample files")
    p.add_argument("samples", nargs="+", help="sample files, optionally method=path")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="enumerate instances and report Z / TV distance")
    p.add_argument("--instances", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--cap", type=int, default=1_000_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, jsonschema.ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FlowseekError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
