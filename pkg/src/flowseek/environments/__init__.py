"""Environment registry, instance generation dispatch, and featurizer options."""

from __future__ import annotations

import numpy as np

from ..errors import EnumerationCapError, GenerationError
from ..flow_core import Trajectory
from .arc1d import Arc1dEnv
from .base import (
    DEFAULT_INTERMEDIATE_WEIGHT,
    DEFAULT_SUCCESS_WEIGHT,
    REWARD_FLOOR,
    ActionScorer,
    EnvInstance,
    Environment,
    RewardBreakdown,
    make_scorer,
    read_instances,
    write_instances,
)
from .blocksworld import BlocksWorldEnv
from .cube2x2 import Cube2x2Env
from .game24 import Game24Env
from .logicchain import LogicChainEnv
from .toydag import ToyDagEnv

ENV_CLASSES: dict[str, type[Environment]] = {
    "game24": Game24Env,
    "cube2x2": Cube2x2Env,
    "blocksworld": BlocksWorldEnv,
    "arc1d": Arc1dEnv,
    "logicchain": LogicChainEnv,
    "toydag": ToyDagEnv,
}

ENV_IDS = sorted(ENV_CLASSES)


class TabularIndex:
    """One-hot index over every (goal, state, action) pair reachable in a set
    of instances. Intended for small instances where full capacity is wanted;
    unseen pairs featurize to the zero vector (uniform logits)."""

    def __init__(self, pairs: list[tuple[str, str, str]]):
        self.index = {pair: i for i, pair in enumerate(sorted(pairs))}

    @property
    def dim(self) -> int:
        return max(len(self.index), 1)

    @classmethod
    def build(cls, envs: list[Environment], cap: int = 200_000) -> "TabularIndex":
        pairs: set[tuple[str, str, str]] = set()
        for env in envs:
            seen = {env.s0}
            stack = [env.s0]
            while stack:
                state = stack.pop()
                if env.is_terminal(state):
                    continue
                for action in env.valid_actions(state):
                    pairs.add((env.goal, state, action))
                    if len(pairs) > cap:
                        raise EnumerationCapError(
                            f"tabular featurizer exceeded {cap} pairs", len(pairs)
                        )
                    child = env.apply(state, action)
                    if child not in seen:
                        seen.add(child)
                        stack.append(child)
        return cls(sorted(pairs))

    def to_doc(self) -> dict:
        ordered = [None] * len(self.index)
        for pair, i in self.index.items():
            ordered[i] = list(pair)
        return {"pairs": ordered}

    @classmethod
    def from_doc(cls, doc: dict) -> "TabularIndex":
        return cls([tuple(p) for p in doc["pairs"]])


class TabularEnv:
    """Environment wrapper replacing the default featurizer with a one-hot table."""

    def __init__(self, env: Environment, table: TabularIndex):
        self._env = env
        self.table = table
        self._featmat_cache: dict[str, np.ndarray] = {}

    def __getattr__(self, name):
        return getattr(self._env, name)

    @property
    def feature_dim(self) -> int:
        return self.table.dim

    def featurize(self, state: str, goal: str, action: str) -> np.ndarray:
        vec = np.zeros(self.table.dim)
        idx = self.table.index.get((goal, state, action))
        if idx is not None:
            vec[idx] = 1.0
        return vec

    def feature_matrix(self, state: str, goal: str, actions: list[str]) -> np.ndarray:
        mat = self._featmat_cache.get(state)
        if mat is None:
            mat = np.stack([self.featurize(state, goal, a) for a in actions])
            if len(self._featmat_cache) >= Environment.FEATURE_CACHE_STATES:
                self._featmat_cache.pop(next(iter(self._featmat_cache)))
            self._featmat_cache[state] = mat
        return mat


def make_env(
    instance: EnvInstance,
    scorer: str | ActionScorer = "uniform",
    parent_mode: str | None = None,
    success_weight: float = DEFAULT_SUCCESS_WEIGHT,
    intermediate_weight: float = DEFAULT_INTERMEDIATE_WEIGHT,
    reward_floor: float = REWARD_FLOOR,
) -> Environment:
    try:
        cls = ENV_CLASSES[instance.env_id]
    except KeyError:
        raise GenerationError(f"unknown environment id {instance.env_id!r}") from None
    if isinstance(scorer, str):
        scorer = make_scorer(scorer)
    return cls(
        instance,
        scorer=scorer,
        success_weight=success_weight,
        intermediate_weight=intermediate_weight,
        reward_floor=reward_floor,
        parent_mode=parent_mode,
    )


def generate_instances(
    env_id: str, count: int, seed: int, difficulty: str | None = None
) -> list[EnvInstance]:
    from . import arc1d, blocksworld, cube2x2, game24, logicchain, toydag

    generators = {
        "game24": game24.generate_instances,
        "cube2x2": cube2x2.generate_instances,
        "blocksworld": blocksworld.generate_instances,
        "arc1d": arc1d.generate_instances,
        "logicchain": logicchain.generate_instances,
        "toydag": toydag.generate_instances,
    }
    try:
        gen = generators[env_id]
    except KeyError:
        raise GenerationError(f"unknown environment id {env_id!r}") from None
    return gen(count, seed, difficulty)


def replay_trajectory(env: Environment, actions: list[str]) -> Trajectory:
    """Rebuild a complete trajectory by applying `actions` from s0.

    logpf terms are zero placeholders; callers re-score before any loss use.
    """
    states = env.replay(list(actions))
    traj = Trajectory(
        instance_id=env.instance.instance_id,
        states=states,
        actions=list(actions),
        logpf_terms=[0.0] * len(actions),
        is_complete=env.is_terminal(states[-1]),
    )
    traj.reward = env.reward(traj).total
    return traj
