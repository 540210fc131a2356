import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grmshaping.envs import (
    DOWN,
    LEFT,
    PICKUP,
    RIGHT,
    TOGGLE,
    UP,
    CliffWalkConfig,
    KeyDoorConfig,
    RandomMdpConfig,
    TabularMdp,
    TabularEnv,
    cliff_walk,
    key_door,
    long_cliff_walk,
    random_episodic_mdp,
)
from grmshaping.errors import CapacityError, ConfigError
from grmshaping.mdp_core import replay, rollout
from grmshaping.tree import expand


class TestCliffWalk:
    def test_layout(self):
        env = cliff_walk()
        assert env.num_states == 48 and env.num_actions == 4
        assert env.position(env.start_state) == (3, 0)
        assert env.position(env.goal_state) == (3, 11)
        assert {env.position(s) for s in env.cliff_states} == {(3, c) for c in range(1, 11)}

    def test_optimal_path(self):
        tr = replay(cliff_walk(), [UP] + [RIGHT] * 11 + [DOWN])
        assert (tr.length, sum(tr.extrinsic)) == (13, 88)

    def test_right_from_start_falls(self):
        env = cliff_walk()
        env.reset()
        out = env.step(RIGHT)
        assert out.next_state in env.cliff_states
        assert out.extrinsic_reward == -100 and out.terminated and not out.truncated

    def test_corner_loop_truncates(self):
        tr = replay(cliff_walk(), [UP, UP, UP] + [LEFT] * 47)
        assert tr.length == 50 and not tr.terminated
        assert sum(tr.extrinsic) == -50

    def test_off_grid_is_noop(self):
        env = cliff_walk()
        s, r, done = env.transition(env.start_state, LEFT)
        assert (s, r, done) == (env.start_state, -1.0, False)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            CliffWalkConfig(width=2)

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=80))
    def test_goal_return_formula(self, actions):
        env = cliff_walk()
        tr = replay(env, actions)
        assert tr.length <= env.max_steps
        if tr.terminated and tr.states[-1] == env.goal_state:
            assert sum(tr.extrinsic) == 100 + (tr.length - 1) * -1

    def test_mdp_view_matches_env(self):
        env = cliff_walk()
        mdp = env.to_mdp()
        for s in range(env.num_states):
            for a in range(4):
                if env.is_absorbing(s):
                    continue
                s2, r, _ = env.transition(s, a)
                assert mdp.transitions[s, a, s2] == 1.0
                assert mdp.rewards[s, a, s2] == r
        assert env.goal_state in mdp.terminal and env.cliff_states <= mdp.terminal

    def test_render(self):
        env = cliff_walk()
        text = env.render_policy([RIGHT] * env.num_states)
        rows = text.splitlines()
        assert len(rows) == 4 and rows[3] == ">" + "C" * 10 + "G"


class TestLongCliffWalk:
    def test_shortest_path(self):
        env = long_cliff_walk()
        assert env.width == 50 and env.max_steps == 100
        tr = replay(env, [UP] + [RIGHT] * 49 + [DOWN])
        assert (tr.length, sum(tr.extrinsic)) == (51, 50)

    def test_right_from_start_falls(self):
        tr = replay(long_cliff_walk(), [RIGHT])
        assert tr.terminated and tr.extrinsic == (-100.0,)


class TestKeyDoor:
    SOLUTION = [DOWN, DOWN, DOWN, PICKUP, UP, UP, RIGHT, TOGGLE, RIGHT, RIGHT, RIGHT, DOWN, DOWN]

    def test_pickup_on_key(self):
        env = key_door()
        s = env.encode(3, 0, False, False)
        s2, r, done = env.transition(s, PICKUP)
        assert env.decode(s2) == (3, 0, True, False) and r == 0 and not done

    def test_toggle_without_door_is_noop(self):
        env = key_door()
        s = env.encode(3, 0, True, False)
        assert env.transition(s, TOGGLE) == (s, 0.0, False)

    def test_toggle_needs_key(self):
        env = key_door()
        s = env.encode(1, 1, False, False)
        assert env.transition(s, TOGGLE)[0] == s

    def test_scripted_solution(self):
        tr = replay(key_door(), self.SOLUTION)
        assert tr.terminated and tr.extrinsic[-1] == 1.0 and sum(tr.extrinsic) == 1.0

    def test_wall_blocks_without_door(self):
        env = key_door()
        s = env.encode(1, 1, True, False)
        assert env.transition(s, RIGHT)[0] == s

    def test_goal_only_through_door(self):
        # Breadth-first over the whole state graph with the door never opening.
        env = key_door()
        seen, frontier = {env.start_state}, [env.start_state]
        while frontier:
            nxt = []
            for s in frontier:
                for a in range(env.num_actions):
                    if a == TOGGLE:
                        continue
                    s2, _, _ = env.transition(s, a)
                    if s2 not in seen:
                        seen.add(s2)
                        nxt.append(s2)
            frontier = nxt
        assert not any(env.is_absorbing(s) for s in seen)

    def test_position_key_ignores_door(self):
        env = key_door()
        assert env.position_key(env.encode(1, 1, True, False)) == env.position_key(env.encode(1, 1, True, True))

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            KeyDoorConfig(goal=(0, 1))


class TestTabularMdp:
    def test_rows_must_sum_to_one(self):
        P = np.zeros((2, 1, 2))
        P[0, 0, 0] = 0.5
        P[1, 0, 1] = 1.0
        with pytest.raises(ValueError):
            TabularMdp(P, np.zeros_like(P), frozenset(), np.array([1.0, 0.0]), 0.9, 2)

    def test_json_round_trip(self):
        mdp = random_episodic_mdp(RandomMdpConfig(deterministic=False, seed=4))
        back = TabularMdp.from_json(mdp.to_json())
        assert np.array_equal(back.transitions, mdp.transitions)
        assert np.array_equal(back.rewards, mdp.rewards)
        assert back.terminal == mdp.terminal and back.horizon == mdp.horizon and back.gamma == mdp.gamma

    def test_sampled_env_follows_table(self):
        mdp = random_episodic_mdp(RandomMdpConfig(seed=2))
        env = TabularEnv(mdp, seed=0)
        tr = rollout(env, lambda s, r: 0)
        for t in range(tr.length):
            assert mdp.transitions[tr.states[t], 0, tr.states[t + 1]] == 1.0


class TestRandomMdp:
    def test_same_seed_same_mdp(self):
        a = random_episodic_mdp(RandomMdpConfig(deterministic=False, seed=7))
        b = random_episodic_mdp(RandomMdpConfig(deterministic=False, seed=7))
        assert a.transitions.tobytes() == b.transitions.tobytes()
        assert a.rewards.tobytes() == b.rewards.tobytes()

    @given(st.integers(0, 10_000))
    @settings(max_examples=50)
    def test_deterministic_rows_are_point_masses(self, seed):
        mdp = random_episodic_mdp(RandomMdpConfig(seed=seed))
        assert np.all(np.sort(mdp.transitions, axis=2)[..., -1] == 1.0)
        assert np.all(np.count_nonzero(mdp.transitions, axis=2) == 1)

    @given(st.integers(0, 10_000))
    @settings(max_examples=50)
    def test_stochastic_rows_sum_to_one(self, seed):
        mdp = random_episodic_mdp(RandomMdpConfig(num_states=4, horizon=2, deterministic=False, seed=seed))
        assert np.all(np.abs(mdp.transitions.sum(axis=2) - 1.0) <= 1e-12)

    def test_node_count_within_cap(self):
        # 3 states, 2 actions, horizon 3, no terminals: 1 + 2 + 4 nodes.
        mdp = random_episodic_mdp(RandomMdpConfig(num_states=3, num_actions=2, horizon=3, seed=1))
        tree = expand(mdp)
        assert len(tree.nodes) == 7 == mdp.history_node_count()
        assert 2 ** len(tree.nodes) <= 10**6

    def test_cap_exceeded(self):
        with pytest.raises(CapacityError):
            random_episodic_mdp(RandomMdpConfig(num_states=6, num_actions=3, horizon=6, deterministic=False, seed=0))

    def test_capacity_error_is_config_error(self):
        assert issubclass(CapacityError, ConfigError)
