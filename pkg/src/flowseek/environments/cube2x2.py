"""2x2 pocket cube restricted to U/R/F face turns (9 moves).

Corner permutation + orientation representation with the DBL corner fixed,
so the solved configuration is unique (identity permutation, zero twist).
States embed the move count, which layers the graph into a DAG; parent
counting enumerates the 9 inverse moves (always distinct under the free group
action) and drops predecessors that would be terminal.

Distance-to-solved is breadth-first search from the solved configuration,
expanded lazily one layer at a time and memoized for the whole process, with
a hard cap of 11 moves.
"""

from __future__ import annotations

import numpy as np

from ..errors import GenerationError, InvalidActionError, StructuralError, TerminalQueryError
from ..rngutil import substream
from .base import EnvInstance, Environment, hashed_features

# corner indices: 0 URF, 1 UFL, 2 ULB, 3 UBR, 4 DFR, 5 DLF, 6 DBL, 7 DRB
_BASE = {
    "U": ((3, 0, 1, 2, 4, 5, 6, 7), (0, 0, 0, 0, 0, 0, 0, 0)),
    "R": ((4, 1, 2, 0, 7, 5, 6, 3), (2, 0, 0, 1, 1, 0, 0, 2)),
    "F": ((1, 5, 2, 3, 0, 4, 6, 7), (1, 2, 0, 0, 2, 1, 0, 0)),
}

MOVES = ["U", "U'", "U2", "R", "R'", "R2", "F", "F'", "F2"]
INVERSE = {"U": "U'", "U'": "U", "U2": "U2", "R": "R'", "R'": "R", "R2": "R2",
           "F": "F'", "F'": "F", "F2": "F2"}
DIST_CAP = 11


def _compose(a, b):
    """Permutation/twist of applying move a then move b."""
    acp, aco = a
    bcp, bco = b
    cp = tuple(acp[bcp[i]] for i in range(8))
    co = tuple((aco[bcp[i]] + bco[i]) % 3 for i in range(8))
    return cp, co


def _build_move_table() -> dict[str, tuple[tuple[int, ...], tuple[int, ...]]]:
    table = {}
    for face, m1 in _BASE.items():
        m2 = _compose(m1, m1)
        m3 = _compose(m2, m1)
        table[face] = m1
        table[face + "2"] = m2
        table[face + "'"] = m3
    return table


_MOVE = _build_move_table()
SOLVED = bytes(range(8)) + bytes(8)


def apply_move(config: bytes, move: str) -> bytes:
    perm, delta = _MOVE[move]
    cp = bytes(config[perm[i]] for i in range(8))
    co = bytes((config[8 + perm[i]] + delta[i]) % 3 for i in range(8))
    return cp + co


def is_solved(config: bytes) -> bool:
    return config == SOLVED


# process-wide BFS ball around the solved configuration
_DIST: dict[bytes, int] = {SOLVED: 0}
_FRONTIER: list[bytes] = [SOLVED]
_DEPTH = 0


def distance_to_solved(config: bytes) -> int:
    """Minimum URF-move count to solve `config`, capped at DIST_CAP."""
    global _FRONTIER, _DEPTH
    while config not in _DIST and _DEPTH < DIST_CAP:
        nxt = []
        for cfg in _FRONTIER:
            for move in MOVES:
                nc = apply_move(cfg, move)
                if nc not in _DIST:
                    _DIST[nc] = _DEPTH + 1
                    nxt.append(nc)
        _FRONTIER = nxt
        _DEPTH += 1
    return _DIST.get(config, DIST_CAP)


def _encode(step: int, config: bytes) -> str:
    cp = "".join(str(c) for c in config[:8])
    co = "".join(str(c) for c in config[8:])
    return f"t={step}|{cp}|{co}"


def _decode(state: str) -> tuple[int, bytes]:
    t_part, cp, co = state.split("|")
    config = bytes(int(c) for c in cp) + bytes(int(c) for c in co)
    return int(t_part[2:]), config


class Cube2x2Env(Environment):
    env_id = "cube2x2"
    parent_mode = "exact"

    _N_HASHED = 32

    def valid_actions(self, state, goal=None):
        if self.is_terminal(state):
            raise TerminalQueryError(f"state {state!r} is terminal")
        return list(MOVES)

    def apply(self, state, action):
        if action not in _MOVE:
            raise InvalidActionError(f"unknown cube move {action!r}")
        step, config = _decode(state)
        if self.is_terminal(state):
            raise InvalidActionError("cannot move from a terminal state")
        return _encode(step + 1, apply_move(config, action))

    def is_terminal(self, state):
        step, config = _decode(state)
        return is_solved(config) or step >= self.max_steps

    def is_success(self, traj):
        _, config = _decode(traj.states[-1])
        return is_solved(config)

    def reward(self, traj):
        success = self.w if self.is_success(traj) else 0.0
        intermediate = 0.0
        for prev, nxt in zip(traj.states[:-1], traj.states[1:]):
            r_prev = distance_to_solved(_decode(prev)[1])
            r_next = distance_to_solved(_decode(nxt)[1])
            intermediate += float(np.exp(r_prev - r_next))
        return self.floored(success, intermediate)

    def parent_count(self, state):
        step, config = _decode(state)
        if step == 0:
            raise StructuralError("parent count undefined for the initial state")
        count = 0
        seen = set()
        for move in MOVES:
            pred = apply_move(config, INVERSE[move])
            if pred in seen:
                continue
            seen.add(pred)
            if not is_solved(pred):  # a solved predecessor is terminal, so no edge
                count += 1
        if count == 0:
            raise StructuralError(f"state {state!r} has no legal parents")
        return count

    def _solution_key(self, traj):
        return " ".join(traj.actions)

    def potential(self, state):
        return -float(distance_to_solved(_decode(state)[1]))

    @property
    def feature_dim(self):
        # action(9) + solved-after(1) + placed/oriented/fully-correct counts(27)
        # + step fraction(1) + bias(1) + hashed
        return 9 + 1 + 27 + 1 + 1 + self._N_HASHED

    def featurize(self, state, goal, action):
        step, config = _decode(state)
        nxt = apply_move(config, action)
        placed = sum(1 for i in range(8) if nxt[i] == i)
        oriented = sum(1 for i in range(8) if nxt[8 + i] == 0)
        correct = sum(1 for i in range(8) if nxt[i] == i and nxt[8 + i] == 0)
        vec = np.zeros(self.feature_dim)
        vec[MOVES.index(action)] = 1.0
        off = 9
        if is_solved(nxt):
            vec[off] = 1.0
        off += 1
        vec[off + min(placed, 8)] = 1.0
        vec[off + 9 + min(oriented, 8)] = 1.0
        vec[off + 18 + min(correct, 8)] = 1.0
        off += 27
        vec[off] = (step + 1) / max(self.max_steps, 1)
        vec[off + 1] = 1.0
        off += 2
        vec[off:] = hashed_features(self._N_HASHED, ("cube", state.split("|", 1)[1], action))
        return vec


def scramble_instance(moves: list[str], instance_id: str, max_steps: int = DIST_CAP,
                      split: str = "default") -> EnvInstance:
    config = SOLVED
    for m in moves:
        config = apply_move(config, m)
    if is_solved(config):
        raise GenerationError(f"scramble {moves} returns to the solved state")
    inverse_seq = [INVERSE[m] for m in reversed(moves)]
    return EnvInstance(
        env_id="cube2x2",
        instance_id=instance_id,
        s0=_encode(0, config),
        goal="solved",
        max_steps=max_steps,
        gold_solutions=[" ".join(inverse_seq)],
        split=split,
    )


def generate_instances(count: int, seed: int, difficulty: str | None = None) -> list[EnvInstance]:
    """Scrambles of 1..4 moves; difficulty "k" pins the scramble length."""
    fixed_len = None
    if difficulty and difficulty != "mixed":
        fixed_len = int(difficulty)
        if not 1 <= fixed_len <= 4:
            raise GenerationError("cube scramble length must be in 1..4")
    rng = substream(seed, "gen", "cube2x2", difficulty or "")
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 100 * count + 100:
            raise GenerationError("cube instance generation stalled")
        k = fixed_len if fixed_len else int(rng.integers(1, 5))
        moves = []
        while len(moves) < k:
            m = MOVES[int(rng.integers(0, 9))]
            if moves and moves[-1][0] == m[0]:  # avoid same-face cancellation
                continue
            moves.append(m)
        try:
            out.append(scramble_instance(moves, f"cube2x2-{seed}-{len(out)}"))
        except GenerationError:
            continue
    return out
