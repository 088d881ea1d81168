"""Explicit-graph fixture environment.

The whole transition graph travels inside the instance's goal field as JSON:
{"edges": {state: {action: child}}, "rewards": {terminal: value}}. Rewards
are a function of the terminal state and there is no intermediate term, so
results on this environment are exactly checkable against the enumeration
oracle. Parent counting reads the true graph, which keeps uniform-P_B
backward flow leak-free.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import InvalidActionError, TerminalQueryError
from ..rngutil import substream
from .base import EnvInstance, Environment


def make_graph_goal(edges: dict[str, dict[str, str]], rewards: dict[str, float]) -> str:
    return json.dumps({"edges": edges, "rewards": rewards}, sort_keys=True)


class ToyDagEnv(Environment):
    env_id = "toydag"
    parent_mode = "exact"

    def __init__(self, instance: EnvInstance, **kwargs):
        super().__init__(instance, **kwargs)
        doc = json.loads(instance.goal)
        self.edges: dict[str, dict[str, str]] = doc["edges"]
        self.rewards: dict[str, float] = doc["rewards"]
        self._parents: dict[str, set[str]] = {}
        pairs = []
        for state in sorted(self.edges):
            for action in sorted(self.edges[state]):
                child = self.edges[state][action]
                self._parents.setdefault(child, set()).add(state)
                pairs.append((state, action))
        self._pair_index = {pair: i for i, pair in enumerate(pairs)}

    def valid_actions(self, state, goal=None):
        if self.is_terminal(state):
            raise TerminalQueryError(f"state {state!r} is terminal")
        return sorted(self.edges[state])

    def apply(self, state, action):
        try:
            return self.edges[state][action]
        except KeyError:
            raise InvalidActionError(f"action {action!r} invalid at {state!r}") from None

    def is_terminal(self, state):
        return state not in self.edges or not self.edges[state]

    def is_success(self, traj):
        return traj.is_complete

    def reward(self, traj):
        terminal = traj.states[-1]
        return self.floored(0.0, float(self.rewards.get(terminal, 0.0)))

    def parent_count(self, state):
        from ..errors import StructuralError

        if state == self.s0:
            raise StructuralError("parent count undefined for the initial state")
        parents = self._parents.get(state)
        if not parents:
            raise StructuralError(f"state {state!r} has no parents in the graph")
        return len(parents)

    @property
    def feature_dim(self):
        return len(self._pair_index)

    def featurize(self, state, goal, action):
        vec = np.zeros(self.feature_dim)
        vec[self._pair_index[(state, action)]] = 1.0
        return vec


def two_terminal_instance(instance_id: str = "toy-2term", r_low: float = 1.0, r_high: float = 3.0) -> EnvInstance:
    """Two-level tree with terminal rewards (r_low, r_high); target dist is proportional."""
    edges = {
        "s0": {"left": "mid_l", "right": "mid_r"},
        "mid_l": {"go": "t_low"},
        "mid_r": {"go": "t_high"},
    }
    rewards = {"t_low": r_low, "t_high": r_high}
    return EnvInstance(
        env_id="toydag",
        instance_id=instance_id,
        s0="s0",
        goal=make_graph_goal(edges, rewards),
        max_steps=2,
    )


def diamond_instance(instance_id: str = "toy-diamond") -> EnvInstance:
    """Merging DAG: two paths into a shared state, then two terminals (R=1, R=3)."""
    edges = {
        "s0": {"a": "p", "b": "q"},
        "p": {"c": "x"},
        "q": {"c": "x"},
        "x": {"d": "t1", "e": "t3"},
    }
    rewards = {"t1": 1.0, "t3": 3.0}
    return EnvInstance(
        env_id="toydag",
        instance_id=instance_id,
        s0="s0",
        goal=make_graph_goal(edges, rewards),
        max_steps=3,
    )


def generate_instances(count: int, seed: int, difficulty: str | None = None) -> list[EnvInstance]:
    """Random small layered DAGs with positive terminal rewards."""
    rng = substream(seed, "gen", "toydag")
    out = []
    for i in range(count):
        n_layers = int(rng.integers(2, 4))
        layer_sizes = [1] + [int(rng.integers(2, 4)) for _ in range(n_layers)]
        names = [["s0"]] + [
            [f"l{li}n{ni}" for ni in range(sz)] for li, sz in enumerate(layer_sizes[1:], start=1)
        ]
        edges: dict[str, dict[str, str]] = {}
        for li in range(n_layers):
            for state in names[li]:
                n_out = int(rng.integers(1, len(names[li + 1]) + 1))
                children = sorted(
                    rng.choice(len(names[li + 1]), size=n_out, replace=False).tolist()
                )
                edges[state] = {f"a{c}": names[li + 1][c] for c in children}
        # every terminal-layer state that is actually reachable gets a reward
        reachable = {"s0"}
        for li in range(n_layers):
            for state in list(reachable):
                if state in edges:
                    reachable.update(edges[state].values())
        rewards = {
            s: float(np.round(rng.uniform(0.5, 5.0), 6)) for s in names[-1] if s in reachable
        }
        out.append(
            EnvInstance(
                env_id="toydag",
                instance_id=f"toydag-{seed}-{i}",
                s0="s0",
                goal=make_graph_goal(edges, rewards),
                max_steps=n_layers,
            )
        )
    return out
