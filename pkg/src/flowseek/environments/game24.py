"""Game of 24: combine four numbers with +,-,*,/ to reach exactly 24.

States are multisets of rationals; arithmetic is exact (fractions.Fraction),
so the success test is equality with 24, never within-epsilon. Actions are
canonical equation strings like "4 + 8 = 12" with commutative operands sorted,
which makes "8 + 4" and "4 + 8" the same action and the same solution-key
entry. State keys embed the equation history (tree mode).
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np

from ..errors import GenerationError, InvalidActionError, TerminalQueryError
from ..rngutil import substream
from .base import EnvInstance, Environment, hashed_features

TARGET = Fraction(24)


def fmt(v: Fraction) -> str:
    return str(v)


def parse_values(text: str) -> tuple[Fraction, ...]:
    return tuple(sorted(Fraction(tok) for tok in text.split()))


def fmt_values(values: tuple[Fraction, ...]) -> str:
    return " ".join(fmt(v) for v in sorted(values))


@lru_cache(maxsize=65536)
def enumerate_actions(values: tuple[Fraction, ...]) -> list[tuple[str, tuple[Fraction, ...]]]:
    """All legal (equation, successor multiset) pairs from `values`.

    Commutative duplicates collapse to one canonical equation; division by
    zero is excluded. Order is deterministic: value pairs ascending, operators
    in a fixed sequence.
    """
    values = tuple(sorted(values))
    seen: dict[str, tuple[Fraction, ...]] = {}
    pairs = []
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            pair = (values[i], values[j])
            if pair not in pairs:
                pairs.append(pair)
    for a, b in pairs:
        rest = list(values)
        rest.remove(a)
        rest.remove(b)
        candidates = [
            (f"{fmt(a)} + {fmt(b)} = {fmt(a + b)}", a + b),
            (f"{fmt(a)} * {fmt(b)} = {fmt(a * b)}", a * b),
            (f"{fmt(a)} - {fmt(b)} = {fmt(a - b)}", a - b),
            (f"{fmt(b)} - {fmt(a)} = {fmt(b - a)}", b - a),
        ]
        if b != 0:
            candidates.append((f"{fmt(a)} / {fmt(b)} = {fmt(a / b)}", a / b))
        if a != 0:
            candidates.append((f"{fmt(b)} / {fmt(a)} = {fmt(b / a)}", b / a))
        for eq, result in candidates:
            if eq not in seen:
                seen[eq] = tuple(sorted(rest + [result]))
    return list(seen.items())


@lru_cache(maxsize=65536)
def _pairs_reaching_target(values: tuple[Fraction, ...]) -> int:
    """How many value pairs in the multiset combine to 24 with a single operation."""
    count = 0
    seen = set()
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            a, b = values[i], values[j]
            if (a, b) in seen:
                continue
            seen.add((a, b))
            results = {a + b, a * b, a - b, b - a}
            if b != 0:
                results.add(a / b)
            if a != 0:
                results.add(b / a)
            if TARGET in results:
                count += 1
    return count


class Game24Env(Environment):
    env_id = "game24"
    parent_mode = "tree"

    _OPS = "+-*/"
    _N_HASHED = 32

    def _parse(self, state: str) -> tuple[list[str], tuple[Fraction, ...]]:
        hist_part, left_part = state.split("|left=")
        history = hist_part[len("h=") :]
        steps = history.split(";") if history else []
        return steps, parse_values(left_part)

    def _key(self, steps: list[str], values: tuple[Fraction, ...]) -> str:
        return f"h={';'.join(steps)}|left={fmt_values(values)}"

    def valid_actions(self, state, goal=None):
        if self.is_terminal(state):
            raise TerminalQueryError(f"state {state!r} is terminal")
        _, values = self._parse(state)
        return [eq for eq, _ in enumerate_actions(values)]

    def apply(self, state, action):
        steps, values = self._parse(state)
        for eq, result in enumerate_actions(values):
            if eq == action:
                return self._key(steps + [action], result)
        raise InvalidActionError(f"action {action!r} invalid at {state!r}")

    def is_terminal(self, state):
        _, values = self._parse(state)
        return len(values) == 1

    def is_success(self, traj):
        _, values = self._parse(traj.states[-1])
        return len(values) == 1 and values[0] == TARGET

    def reward(self, traj):
        success = self.w if self.is_success(traj) else 0.0
        product = 1.0
        for p in self.score_steps(traj):
            product *= p
        return self.floored(success, product)

    def _solution_key(self, traj):
        return ";".join(traj.actions)

    def potential(self, state):
        _, values = self._parse(state)
        closest = min(abs(float(v - TARGET)) for v in values)
        return -closest - len(values)

    # -- features ---------------------------------------------------------------

    _N_BUCKETS = 20

    @staticmethod
    def _bucket(v: Fraction) -> int:
        if v < 0:
            return 0
        if v == 0:
            return 1
        if v.denominator != 1:
            return 2
        n = v.numerator
        if 1 <= n <= 13:
            return 2 + n
        if n <= 23:
            return 16
        if n == 24:
            return 17
        if n <= 48:
            return 18
        return 19

    @property
    def feature_dim(self):
        # op(4) + rank pair(16) + result count(3) + slot buckets(3*20)
        # + {contains 24, solved next, one-left-not-24}(3)
        # + combinable-pair count(3) + two-left-combinable(1) + bias(1) + hashed
        return 4 + 16 + 3 + 3 * self._N_BUCKETS + 3 + 4 + 1 + self._N_HASHED

    def featurize(self, state, goal, action):
        _, values = self._parse(state)
        nxt = None
        for eq, result in enumerate_actions(values):
            if eq == action:
                nxt = result
                break
        if nxt is None:
            raise InvalidActionError(f"action {action!r} invalid at {state!r}")

        lhs = action.split(" = ")[0]
        x_str, op, y_str = lhs.split(" ")
        x, y = Fraction(x_str), Fraction(y_str)
        sorted_vals = list(values)
        rank_x = sorted_vals.index(x)
        rank_y = rank_x + 1 if y == x else sorted_vals.index(y)

        vec = np.zeros(self.feature_dim)
        off = 0
        vec[off + self._OPS.index(op)] = 1.0
        off += 4
        vec[off + min(rank_x, 3) * 4 + min(rank_y, 3)] = 1.0
        off += 16
        vec[off + len(nxt) - 1] = 1.0
        off += 3
        for slot, v in enumerate(sorted(nxt)[:3]):
            vec[off + slot * self._N_BUCKETS + self._bucket(v)] = 1.0
        off += 3 * self._N_BUCKETS
        if TARGET in nxt:
            vec[off] = 1.0
        if len(nxt) == 1 and nxt[0] == TARGET:
            vec[off + 1] = 1.0
        if len(nxt) == 1 and nxt[0] != TARGET:
            vec[off + 2] = 1.0
        off += 3
        pairs24 = _pairs_reaching_target(nxt)
        vec[off + min(pairs24, 2)] = 1.0
        if len(nxt) == 2 and pairs24 > 0:
            vec[off + 3] = 1.0
        off += 4
        vec[off] = 1.0
        off += 1
        left = fmt_values(values)
        vec[off:] = hashed_features(
            self._N_HASHED, ("g24v", left), ("g24a", action), ("g24va", left, action)
        )
        return vec


def solve_game24(numbers) -> set[str]:
    """All distinct solution keys for four rationals, by exhaustive search."""
    values = tuple(sorted(Fraction(n) for n in numbers))
    if len(values) != 4:
        raise ValueError("Game24 takes exactly four numbers")
    solutions: set[str] = set()

    def recurse(vals: tuple[Fraction, ...], path: list[str]) -> None:
        if len(vals) == 1:
            if vals[0] == TARGET:
                solutions.add(";".join(path))
            return
        for eq, nxt in enumerate_actions(vals):
            path.append(eq)
            recurse(nxt, path)
            path.pop()

    recurse(values, [])
    return solutions


def make_instance(numbers, instance_id: str, split: str = "default") -> EnvInstance:
    values = tuple(sorted(Fraction(n) for n in numbers))
    keys = solve_game24(values)
    return EnvInstance(
        env_id="game24",
        instance_id=instance_id,
        s0=f"h=|left={fmt_values(values)}",
        goal="24",
        max_steps=3,
        gold_solutions=sorted(keys) or None,
        split=split,
    )


def generate_instances(count: int, seed: int, difficulty: str | None = None) -> list[EnvInstance]:
    """Solvable draws of four integers; difficulty "lo-hi" bounds the operands."""
    lo, hi = 1, 13
    if difficulty:
        try:
            lo, hi = (int(t) for t in difficulty.split("-"))
        except ValueError:
            raise GenerationError(f"bad game24 difficulty {difficulty!r}, want e.g. '1-13'")
    rng = substream(seed, "gen", "game24", difficulty or "")
    out: list[EnvInstance] = []
    seen: set[tuple] = set()
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 200 * count + 1000:
            raise GenerationError(f"could not generate {count} solvable game24 instances")
        nums = tuple(sorted(int(v) for v in rng.integers(lo, hi + 1, size=4)))
        if nums in seen:
            continue
        seen.add(nums)
        if not solve_game24(nums):
            continue
        out.append(make_instance(nums, f"game24-{seed}-{len(out)}"))
    return out
