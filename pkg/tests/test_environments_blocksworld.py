import itertools
import math

import pytest

from flowseek.environments import make_env, replay_trajectory
from flowseek.environments.base import EnvInstance
from flowseek.environments.blocksworld import (
    BlocksWorldEnv,
    _decode,
    _encode,
    _encode_goal,
    check_physics,
    generate_instances,
)
from flowseek.errors import InvalidActionError, StructuralError
from flowseek.rngutil import substream


def bw_instance(on, goal_relations, max_steps=6, hand=None):
    return EnvInstance(
        "blocksworld", "bw-test", _encode(0, hand, on), _encode_goal(goal_relations), max_steps
    )


@pytest.fixture
def three_on_table():
    on = {"blue": "table", "orange": "table", "red": "table"}
    return make_env(bw_instance(on, [("red", "blue")]))


def test_pickup_preconditions(three_on_table):
    env = three_on_table
    actions = env.valid_actions(env.s0)
    assert set(actions) == {"pickup blue", "pickup orange", "pickup red"}
    held = env.apply(env.s0, "pickup red")
    _, hand, on = _decode(held)
    assert hand == "red" and "red" not in on
    # only putdown/stack while holding
    next_actions = env.valid_actions(held)
    assert next_actions == ["putdown red", "stack red blue", "stack red orange"]


def test_stacked_block_not_pickable():
    on = {"blue": "table", "orange": "red", "red": "blue"}
    env = make_env(bw_instance(on, [("orange", "blue")]))
    actions = env.valid_actions(env.s0)
    # only the clear top block can move, and only by unstacking
    assert actions == ["unstack orange red"]


def test_apply_invalid_action(three_on_table):
    with pytest.raises(InvalidActionError):
        three_on_table.apply(three_on_table.s0, "stack red blue")  # hand empty


def test_physics_invariants_after_random_walks():
    rng = substream(5, "bw-walk")
    insts = generate_instances(3, seed=9, difficulty="4")
    for inst in insts:
        env = make_env(inst)
        state = env.s0
        check_physics(state)
        while not env.is_terminal(state):
            options = env.valid_actions(state)
            state = env.apply(state, options[int(rng.integers(len(options)))])
            check_physics(state)


def test_physics_checker_catches_violations():
    with pytest.raises(StructuralError):
        check_physics("t=0|hand=red|on=blue:red,red:table")  # resting on a held block
    with pytest.raises(StructuralError):
        check_physics("t=0|hand=-|on=a:b,b:a")  # support cycle


def enumerate_all_configs(blocks):
    """Every physically valid (hand, on) arrangement of `blocks`."""
    configs = []
    for held in [None, *blocks]:
        placed = [b for b in blocks if b != held]
        for arrangement in all_stackings(placed):
            configs.append((held, arrangement))
    return configs


def all_stackings(blocks):
    if not blocks:
        return [{}]
    out = []
    # assign each block a support: table or another block, keeping in-degree <= 1
    for supports in itertools.product(["table", *blocks], repeat=len(blocks)):
        on = {}
        ok = True
        used = set()
        for block, support in zip(blocks, supports):
            if support == block:
                ok = False
                break
            if support != "table":
                if support in used:
                    ok = False
                    break
                used.add(support)
            on[block] = support
        if not ok:
            continue
        try:
            check_physics(_encode(0, None, on))
        except StructuralError:
            continue
        out.append(on)
    return out


def test_parent_count_matches_brute_force_enumeration():
    """Oracle: count configs that can reach the state with one legal action."""
    blocks = ["blue", "orange", "red"]
    goal = [("red", "blue")]
    env = make_env(bw_instance({b: "table" for b in blocks}, goal))

    def goal_met(on):
        return all(on.get(b) == s for b, s in goal)

    rng = substream(6, "bw-par")
    states = []
    state = env.s0
    while not env.is_terminal(state):
        options = env.valid_actions(state)
        state = env.apply(state, options[int(rng.integers(len(options)))])
        states.append(state)

    for state in states:
        step, hand, on = _decode(state)
        brute = 0
        for p_hand, p_on in enumerate_all_configs(blocks):
            if goal_met(p_on):  # terminal configs have no outgoing edges
                continue
            probe = bw_instance(p_on, goal, hand=p_hand)
            probe = EnvInstance(
                "blocksworld", "probe", _encode(step - 1, p_hand, p_on),
                _encode_goal(goal), 99,
            )
            penv = BlocksWorldEnv(probe)
            if penv.is_terminal(penv.s0):
                continue
            for action in penv.valid_actions(penv.s0):
                child = penv.apply(penv.s0, action)
                _, c_hand, c_on = _decode(child)
                if c_hand == hand and c_on == on:
                    brute += 1
                    break
        assert env.parent_count(state) == brute


def test_parent_count_after_pickup_from_three_on_table():
    on = {"blue": "table", "orange": "table", "red": "table"}
    env = make_env(bw_instance(on, [("orange", "red")]))
    state = env.apply(env.s0, "pickup red")
    # inverse actions: putdown red (from table) or unstack red from blue/orange
    assert env.parent_count(state) == 3
    # a goal-satisfying predecessor is terminal and therefore not a parent
    env2 = make_env(bw_instance(on, [("red", "blue")]))
    state2 = env2.apply(env2.s0, "pickup red")
    assert env2.parent_count(state2) == 2


def test_reward_formula_blocksworld():
    on = {"blue": "table", "orange": "table", "red": "table"}
    env = make_env(bw_instance(on, [("red", "blue")], max_steps=2))
    traj = replay_trajectory(env, ["pickup red", "stack red blue"])
    assert env.is_success(traj)
    breakdown = env.reward(traj)
    assert breakdown.success_term == 100.0
    # lambda * sum(-1/log p) with the uniform scorer
    expected = 0.0
    state = env.s0
    for action in traj.actions:
        p = 1.0 / len(env.valid_actions(state))
        expected += -1.0 / math.log(p)
        state = env.apply(state, action)
    assert breakdown.intermediate_term == pytest.approx(1.5 * expected, rel=1e-12)


def test_failure_trajectory_keeps_intermediate_term():
    on = {"blue": "table", "orange": "table", "red": "table"}
    env = make_env(bw_instance(on, [("red", "blue")], max_steps=2))
    traj = replay_trajectory(env, ["pickup orange", "stack orange blue"])
    assert not env.is_success(traj)
    breakdown = env.reward(traj)
    assert breakdown.success_term == 0.0
    assert breakdown.intermediate_term > 0.0


def test_distinct_plans_distinct_keys():
    on = {"blue": "orange", "orange": "red", "red": "table"}
    env = make_env(bw_instance(on, [("red", "blue")], max_steps=6))
    plan_a = [
        "unstack blue orange", "putdown blue", "unstack orange red",
        "putdown orange", "pickup red", "stack red blue",
    ]
    plan_b = [
        "unstack blue orange", "putdown blue", "unstack orange red",
        "stack orange blue", "pickup red", "stack red blue",
    ]
    # plan_b stacks red on blue only if blue is clear: orange sits on blue, invalid
    ta = replay_trajectory(env, plan_a)
    assert env.is_success(ta)
    with pytest.raises(InvalidActionError):
        replay_trajectory(env, plan_b)
    plan_c = [
        "unstack blue orange", "putdown blue", "unstack orange red",
        "putdown orange", "pickup red", "stack red orange",
    ]
    # different successful endings give different keys (here same goal via different plan)
    env2 = make_env(bw_instance(on, [("red", "orange")], max_steps=6))
    tc = replay_trajectory(env2, plan_c)
    assert env2.is_success(tc)
    assert env.solution_key(ta) != env2.solution_key(tc)
    assert env.solution_key(ta) == "|".join(plan_a)


def test_generated_instances_solvable_and_deterministic():
    for diff in ("2", "4", "6"):
        a = generate_instances(3, seed=17, difficulty=diff)
        b = generate_instances(3, seed=17, difficulty=diff)
        assert [i.to_record() for i in a] == [i.to_record() for i in b]
        for inst in a:
            env = make_env(inst)
            assert not env.is_terminal(env.s0)
            assert inst.max_steps == int(diff)
            gold = inst.gold_solutions[0].split("|")
            traj = replay_trajectory(env, gold)
            assert env.is_success(traj)
            assert len(gold) <= int(diff)
