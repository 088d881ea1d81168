"""Common environment interface and shared reward plumbing.

An environment object is bound to one problem instance (initial state, goal,
step budget) and is immutable after construction. State keys are canonical
strings; in tree mode they embed the full action history so every state has
exactly one parent, while exact mode embeds the step index and counts parents
by inverse-action enumeration.

The per-step action scorer stands in for the likelihood model the reward
formulas of some environments expect. Two built-ins exist: `uniform`
(p = 1 / |valid actions|) and `progress` (logistic in the change of an
environment-specific potential).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ScorerContractError

REWARD_FLOOR = 1e-8
DEFAULT_SUCCESS_WEIGHT = 100.0
DEFAULT_INTERMEDIATE_WEIGHT = 1.5

P_SCORE_MIN = 1e-6
P_SCORE_MAX = 1.0 - 1e-6


@dataclass
class EnvInstance:
    """One problem: initial state, goal, optional gold solutions, step budget."""

    env_id: str
    instance_id: str
    s0: str
    goal: str
    max_steps: int
    gold_solutions: list[str] | None = None
    split: str = "default"

    def to_record(self) -> dict:
        rec = {
            "env_id": self.env_id,
            "instance_id": self.instance_id,
            "s0": self.s0,
            "goal": self.goal,
            "max_steps": self.max_steps,
            "split": self.split,
        }
        if self.gold_solutions is not None:
            rec["gold_solutions"] = self.gold_solutions
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "EnvInstance":
        return cls(
            env_id=rec["env_id"],
            instance_id=rec["instance_id"],
            s0=rec["s0"],
            goal=rec["goal"],
            max_steps=int(rec["max_steps"]),
            gold_solutions=rec.get("gold_solutions"),
            split=rec.get("split", "default"),
        )


def write_instances(path, instances: list[EnvInstance]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps(inst.to_record(), sort_keys=True))
            f.write("\n")


def read_instances(path) -> list[EnvInstance]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(EnvInstance.from_record(json.loads(line)))
    return out


@dataclass
class RewardBreakdown:
    """Success and intermediate reward components; total is floored."""

    success_term: float
    intermediate_term: float
    total: float = field(init=False)

    def __post_init__(self) -> None:
        self.total = max(self.success_term + self.intermediate_term, REWARD_FLOOR)


class ActionScorer:
    """Per-step probability score p(action | state, goal) in (0, 1)."""

    name = "base"

    def score(self, env: "Environment", state: str, goal: str, action: str) -> float:
        raise NotImplementedError

    def clamped(self, env: "Environment", state: str, goal: str, action: str) -> float:
        p = self.score(env, state, goal, action)
        if not (0.0 < p < 1.0):
            raise ScorerContractError(f"scorer {self.name} returned p={p} outside (0,1)")
        return min(max(p, P_SCORE_MIN), P_SCORE_MAX)


class UniformScorer(ActionScorer):
    """p = 1 / |valid actions at state|, goal ignored."""

    name = "uniform"

    def score(self, env, state, goal, action):
        n = len(env.cached_valid_actions(state))
        # a single-action state would give p = 1; the clamp keeps log p finite
        return 1.0 / n if n > 1 else P_SCORE_MAX


class ProgressScorer(ActionScorer):
    """Logistic in the potential improvement of taking the action."""

    name = "progress"

    def score(self, env, state, goal, action):
        before = env.potential(state)
        after = env.potential(env.apply(state, action))
        return 1.0 / (1.0 + math.exp(-(after - before)))


SCORERS = {"uniform": UniformScorer, "progress": ProgressScorer}


def make_scorer(name: str) -> ActionScorer:
    try:
        return SCORERS[name]()
    except KeyError:
        raise ValueError(f"unknown scorer {name!r}") from None


class Environment:
    """Interface every concrete environment implements.

    Subclasses set `env_id` and `parent_mode` ("tree" or "exact") and bind to
    one EnvInstance. All methods are pure; tree-mode subclasses inherit the
    trivial parent count.
    """

    env_id: str = "base"
    parent_mode: str = "tree"

    FEATURE_CACHE_STATES = 2048

    def __init__(
        self,
        instance: EnvInstance,
        scorer: ActionScorer | None = None,
        success_weight: float = DEFAULT_SUCCESS_WEIGHT,
        intermediate_weight: float = DEFAULT_INTERMEDIATE_WEIGHT,
        reward_floor: float = REWARD_FLOOR,
        parent_mode: str | None = None,
    ):
        self.instance = instance
        self.scorer = scorer or UniformScorer()
        self.w = success_weight
        self.lam = intermediate_weight
        self.reward_floor = reward_floor
        if parent_mode is not None:
            self.parent_mode = parent_mode
        self._valid_cache: dict[str, list[str]] = {}
        self._featmat_cache: dict[str, np.ndarray] = {}

    @property
    def s0(self) -> str:
        return self.instance.s0

    @property
    def goal(self) -> str:
        return self.instance.goal

    @property
    def max_steps(self) -> int:
        return self.instance.max_steps

    # -- interface -----------------------------------------------------------

    def valid_actions(self, state: str, goal: str | None = None) -> list[str]:
        raise NotImplementedError

    def apply(self, state: str, action: str) -> str:
        raise NotImplementedError

    def is_terminal(self, state: str) -> bool:
        raise NotImplementedError

    def is_success(self, traj) -> bool:
        raise NotImplementedError

    def reward(self, traj) -> RewardBreakdown:
        raise NotImplementedError

    def solution_key(self, traj) -> str:
        from ..errors import NotASolutionError

        if not (traj.is_complete and self.is_success(traj)):
            raise NotASolutionError("solution keys exist only for successful trajectories")
        return self._solution_key(traj)

    def _solution_key(self, traj) -> str:
        return "|".join(traj.actions)

    def featurize(self, state: str, goal: str, action: str) -> np.ndarray:
        raise NotImplementedError

    @property
    def feature_dim(self) -> int:
        raise NotImplementedError

    # -- cached lookups (features and action sets are parameter-independent) ----

    def cached_valid_actions(self, state: str) -> list[str]:
        actions = self._valid_cache.get(state)
        if actions is None:
            actions = self.valid_actions(state)
            self._valid_cache[state] = actions
        return actions

    def feature_matrix(self, state: str, goal: str, actions: list[str]) -> np.ndarray:
        mat = self._featmat_cache.get(state)
        if mat is None:
            mat = np.stack([self.featurize(state, goal, a) for a in actions])
            if len(self._featmat_cache) >= self.FEATURE_CACHE_STATES:
                self._featmat_cache.pop(next(iter(self._featmat_cache)))
            self._featmat_cache[state] = mat
        return mat

    def parent_count(self, state: str) -> int:
        if self.parent_mode == "tree":
            return 1
        raise NotImplementedError

    def potential(self, state: str) -> float:
        """Scalar progress estimate used by the `progress` scorer; higher is better."""
        return 0.0

    # -- shared reward helpers -------------------------------------------------

    def floored(self, success_term: float, intermediate_term: float) -> RewardBreakdown:
        bd = RewardBreakdown(success_term, intermediate_term)
        bd.total = max(bd.total, self.reward_floor)
        return bd

    def score_steps(self, traj) -> list[float]:
        """Clamped scorer probabilities for each step of `traj`."""
        return [
            self.scorer.clamped(self, s, self.goal, a)
            for s, a in zip(traj.states[:-1], traj.actions)
        ]

    # -- rollout helper ---------------------------------------------------------

    def replay(self, actions: list[str]) -> list[str]:
        """States visited when applying `actions` from s0; raises if illegal."""
        states = [self.s0]
        for a in actions:
            states.append(self.apply(states[-1], a))
        return states


def hashed_features(dim: int, *tokens: object) -> np.ndarray:
    """Signed feature hashing of `tokens` into `dim` buckets (deterministic)."""
    from ..rngutil import stable_hash

    vec = np.zeros(dim)
    for tok in tokens:
        h = stable_hash(tok)
        idx = h % dim
        sign = 1.0 if (h >> 32) & 1 else -1.0
        vec[idx] += sign
    return vec
