"""Training loop: mixed exploration, replay/offline exploitation, local search.

Each iteration visits one training instance (round-robin); a seeded draw then
chooses between exploring (sample a batch of mixed rollouts, run local search
on the batch's best trajectory, push everything into the replay buffer) and
exploiting (redraw a batch from the buffer, or from the offline pool when the
instance has offline data). Every trajectory entering a loss gets its log P_F
terms recomputed under the current parameters, then one optimizer step is
applied.

Exploitation draws are restricted to the current instance's entries: phi
targets the per-instance log partition value, so mixing instances inside one
variance batch would conflate their partition values.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .environments import EnvInstance, TabularEnv, TabularIndex, make_env, replay_trajectory
from .errors import CorruptTrajectoryError, EmptyBufferError, FlowseekError, NumericError
from .exploration import (
    ExplorationSchedule,
    ReplayBuffer,
    buffer_insert,
    buffer_sample,
    local_search,
    sample_trajectory_mixed,
)
from .flow_core import FlowBatch, LogZParam, Trajectory, loss_logvar, loss_tb_logz
from .policy import (
    OptimizerState,
    PolicyParams,
    apply_update,
    init_params,
    log_prob_of,
    trajectory_logpf_and_grad,
)
from .rngutil import substream


@dataclass
class LocalSearchConfig:
    enabled: bool = True
    num_recon: int = 4
    k_mode: str | int = "uniform"
    to_training: bool = False  # default routes accepted candidates to the buffer only


@dataclass
class TrainConfig:
    env_id: str
    iterations: int = 100
    batch_size: int = 4
    learning_rate: float = 1e-3
    optimizer: str = "adaptive"  # or "sgd"
    loss: str = "logvar"  # or "tb_logz"
    success_weight: float = 100.0
    intermediate_weight: float = 1.5
    reward_floor: float = 1e-8
    seed: int = 0
    schedules: ExplorationSchedule | None = None
    offline_data_path: str | None = None
    parent_mode_override: str | None = None
    local_search: LocalSearchConfig = field(default_factory=LocalSearchConfig)
    phi_mean_stopgrad: bool = False
    policy_variant: str = "linear"
    hidden_dim: int = 64
    featurizer: str = "default"  # or "tabular"
    scorer: str = "uniform"
    buffer_capacity: int = 1000
    priority_mode: str = "reward"
    logz_shared: bool = True
    logz_init: float = 0.0
    logz_learning_rate: float | None = None
    lr_schedule: str = "none"  # or "cosine"
    max_grad_norm: float | None = None
    checkpoint_interval: int | None = None

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.loss == "logvar" and self.batch_size < 2:
            raise ValueError("the variance loss needs batch_size >= 2")
        if self.loss not in ("logvar", "tb_logz"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.schedules is None:
            self.schedules = ExplorationSchedule(total_iterations=self.iterations)


@dataclass
class TrainReport:
    """Per-iteration scalars plus the trajectory log collected during training."""

    records: list[dict] = field(default_factory=list)
    trajectory_log: list[dict] = field(default_factory=list)
    final_checkpoint: str | None = None

    REPORT_FIELDS = (
        "iteration",
        "phase",
        "mean_loss",
        "mean_reward",
        "buffer_size",
        "eps",
        "beta",
        "replay_prob",
    )

    def write_csv(self, path, include_wallclock: bool = False) -> None:
        # wallclock stays out of the primary CSV so reruns are byte-identical
        fields = self.REPORT_FIELDS + (("wallclock",) if include_wallclock else ())
        with open(path, "w", encoding="utf-8") as f:
            f.write(",".join(fields) + "\n")
            for rec in self.records:
                f.write(",".join(_csv_cell(rec[k]) for k in fields) + "\n")

    def write_trajectory_log(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for rec in self.trajectory_log:
                f.write(json.dumps(rec, sort_keys=True))
                f.write("\n")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def build_envs(config: TrainConfig, instances: list[EnvInstance]) -> dict:
    """One environment per instance; the tabular featurizer is shared across all."""
    envs = {}
    for inst in instances:
        envs[inst.instance_id] = make_env(
            inst,
            scorer=config.scorer,
            parent_mode=config.parent_mode_override,
            success_weight=config.success_weight,
            intermediate_weight=config.intermediate_weight,
            reward_floor=config.reward_floor,
        )
    if config.featurizer == "tabular":
        table = TabularIndex.build(list(envs.values()))
        envs = {k: TabularEnv(v, table) for k, v in envs.items()}
    elif config.featurizer != "default":
        raise ValueError(f"unknown featurizer {config.featurizer!r}")
    return envs


def recompute_logpf(traj: Trajectory, params: PolicyParams, env,
                    version: int | None = None) -> Trajectory:
    """Fresh copy of `traj` with logpf terms scored under `params`."""
    terms = []
    for state, action in zip(traj.states[:-1], traj.actions):
        try:
            terms.append(log_prob_of(params, state, env.goal, action, env))
        except FlowseekError as exc:
            raise CorruptTrajectoryError(
                f"stored action {action!r} no longer replays at {state!r}: {exc}"
            ) from exc
    return dataclasses.replace(traj, logpf_terms=terms, params_version=version)


def ingest_offline(path, envs_by_instance: dict) -> tuple[list[Trajectory], int]:
    """Replay offline {instance_id, actions} records; returns (accepted, rejected)."""
    accepted: list[Trajectory] = []
    rejected = 0
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise FlowseekError(f"offline data file {path} is empty")
    for lineno, line in enumerate(lines, start=1):
        try:
            rec = json.loads(line)
            env = envs_by_instance[rec["instance_id"]]
            traj = replay_trajectory(env, rec["actions"])
            if not traj.is_complete:
                raise CorruptTrajectoryError("record does not reach a terminal state")
            accepted.append(traj)
        except (KeyError, ValueError, FlowseekError):
            rejected += 1
            continue
    if not accepted:
        raise FlowseekError(f"no replayable records in {path} ({rejected} rejected)")
    return accepted, rejected


def train(config: TrainConfig, instances: list[EnvInstance],
          checkpoint_writer=None) -> tuple[PolicyParams, TrainReport]:
    """Run the full training loop; returns final parameters and the report."""
    if not instances:
        raise ValueError("training needs at least one instance")
    envs = build_envs(config, instances)
    any_env = envs[instances[0].instance_id]
    params = init_params(
        config.policy_variant, any_env.feature_dim, config.hidden_dim, seed=config.seed
    )
    opt = OptimizerState(kind=config.optimizer, learning_rate=config.learning_rate)
    version = 0

    logz: dict[str, LogZParam] = {}

    def z_for(instance_id: str) -> LogZParam:
        key = "__shared__" if config.logz_shared else instance_id
        if key not in logz:
            logz[key] = LogZParam(value=config.logz_init, shared=config.logz_shared)
        return logz[key]

    buffer = ReplayBuffer(capacity=config.buffer_capacity, priority_mode=config.priority_mode)
    offline_pool: dict[str, list[Trajectory]] = {}
    if config.offline_data_path:
        offline, _ = ingest_offline(config.offline_data_path, envs)
        for traj in offline:
            offline_pool.setdefault(traj.instance_id, []).append(traj)

    report = TrainReport()
    m = config.batch_size

    for i in range(config.iterations):
        t_start = time.perf_counter()
        inst = instances[i % len(instances)]
        env = envs[inst.instance_id]
        eps, beta, replay_prob = config.schedules.at(i)

        u = float(substream(config.seed, "train-branch", i).random())
        explore = u < (1.0 - replay_prob)
        phase = "explore" if explore else "exploit"
        batch_trajs: list[Trajectory] = []
        extra_log: list[tuple[str, Trajectory]] = []

        if not explore:
            pool = offline_pool.get(inst.instance_id)
            if pool:
                rng = substream(config.seed, "offline-draw", i)
                idx = rng.integers(0, len(pool), size=m)
                batch_trajs = [pool[int(j)] for j in idx]
            else:
                try:
                    rng = substream(config.seed, "buffer-draw", i)
                    batch_trajs = buffer_sample(buffer, m, rng, instance_id=inst.instance_id)
                except EmptyBufferError:
                    explore = True
                    phase = "explore_fallback"

        if explore:
            batch_trajs = [
                sample_trajectory_mixed(
                    params, env, eps, beta, substream(config.seed, "rollout", i, slot)
                )
                for slot in range(m)
            ]
            best = max(range(m), key=lambda j: batch_trajs[j].reward)
            for traj in batch_trajs:
                buffer_insert(buffer, traj, iteration=i)
            if config.local_search.enabled:
                found = local_search(
                    batch_trajs[best],
                    env,
                    num_recon=config.local_search.num_recon,
                    k_mode=config.local_search.k_mode,
                    rng=substream(config.seed, "localsearch", i),
                )
                for traj in found:
                    buffer_insert(buffer, traj, iteration=i)
                    extra_log.append(("local_search", traj))
                if config.local_search.to_training:
                    batch_trajs = batch_trajs + found

        # score every batch trajectory at the current parameters
        fresh: list[Trajectory] = []
        grads: list[np.ndarray] = []
        for traj in batch_trajs:
            terms, grad = trajectory_logpf_and_grad(params, traj, env)
            fresh.append(dataclasses.replace(traj, logpf_terms=terms, params_version=version))
            grads.append(grad)
        assert all(t.params_version == version for t in fresh)

        batch = FlowBatch(trajectories=fresh)
        if config.loss == "logvar":
            loss, grad = loss_logvar(
                batch, env, grads, phi_mean_stopgrad=config.phi_mean_stopgrad
            )
        else:
            z = z_for(inst.instance_id)
            loss, grad, grad_z = loss_tb_logz(batch, env, z, grads)
            z_lr = (
                config.logz_learning_rate
                if config.logz_learning_rate is not None
                else config.learning_rate
            )
            z.value -= z_lr * grad_z

        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss {loss} at iteration {i}")

        lr = config.learning_rate
        if config.lr_schedule == "cosine":
            lr = config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * i / config.iterations))
        if config.max_grad_norm is not None:
            norm = float(np.linalg.norm(grad))
            if norm > config.max_grad_norm:
                grad = grad * (config.max_grad_norm / norm)
        params = apply_update(params, grad, opt, lr_override=lr)
        version += 1

        for traj, phi_val in zip(fresh, batch.phi_values):
            report.trajectory_log.append(
                {
                    "iteration": i,
                    "phase": phase,
                    "instance_id": traj.instance_id,
                    "actions": traj.actions,
                    "reward": traj.reward,
                    "phi": phi_val,
                }
            )
        for tag, traj in extra_log:
            report.trajectory_log.append(
                {
                    "iteration": i,
                    "phase": tag,
                    "instance_id": traj.instance_id,
                    "actions": traj.actions,
                    "reward": traj.reward,
                    "phi": None,
                }
            )
        report.records.append(
            {
                "iteration": i,
                "phase": phase,
                "mean_loss": loss,
                "mean_reward": float(np.mean([t.reward for t in fresh])),
                "buffer_size": len(buffer),
                "eps": eps,
                "beta": beta,
                "replay_prob": replay_prob,
                "wallclock": time.perf_counter() - t_start,
            }
        )
        if (
            checkpoint_writer is not None
            and config.checkpoint_interval
            and (i + 1) % config.checkpoint_interval == 0
        ):
            checkpoint_writer(i, params, opt)

    return params, report
