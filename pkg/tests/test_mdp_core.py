import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from grmshaping.envs import DOWN, LEFT, RIGHT, UP, cliff_walk
from grmshaping.errors import ContractViolation
from grmshaping.intrinsic import CountBonus
from grmshaping.mdp_core import (
    LOG_SPACE_DELAY,
    StepOutcome,
    Trajectory,
    discount_power,
    discounted_return,
    replay,
    rollout,
)
from grmshaping.shaping import DelayMatching, GrmShaper, IdentityMatching, PbimMatching

rewards = st.lists(st.floats(-100, 100, allow_nan=False), max_size=30)
gammas = st.floats(0.05, 1.0)


def exact_return(rs, gamma, t):
    g = Fraction(gamma)
    return float(sum(Fraction(r) * g ** (n - t) for n, r in enumerate(rs) if n >= t))


class TestDiscountedReturn:
    def test_empty(self):
        assert discounted_return([], 0.9, 0) == 0

    def test_hand_sums(self):
        assert discounted_return([1, 2, 3], 0.5, 0) == 2.75
        assert discounted_return([1, 2, 3], 0.5, 1) == 3.5

    def test_t_equals_n_is_zero(self):
        assert discounted_return([1, 2, 3], 0.5, 3) == 0

    @pytest.mark.parametrize("t", [-1, 4])
    def test_out_of_range(self, t):
        with pytest.raises(IndexError):
            discounted_return([1, 2, 3], 0.5, t)

    @given(rewards, gammas, st.data())
    def test_recursive_identity(self, rs, gamma, data):
        if not rs:
            return
        t = data.draw(st.integers(0, len(rs) - 1))
        lhs = discounted_return(rs, gamma, t)
        rhs = rs[t] + gamma * discounted_return(rs, gamma, t + 1)
        assert lhs == pytest.approx(rhs, abs=1e-9)

    @given(rewards, gammas)
    def test_matches_exact_rational_sum(self, rs, gamma):
        assert discounted_return(rs, gamma) == pytest.approx(exact_return(rs, gamma, 0), abs=1e-9)


class TestDiscountPower:
    def test_small_delays_are_plain_powers(self):
        assert discount_power(0.5, 3) == 0.125
        assert discount_power(0.5, -2) == 4.0

    def test_long_delay_uses_logs(self):
        k = LOG_SPACE_DELAY + 50
        assert discount_power(0.99, -k) == pytest.approx(math.exp(k * -math.log(0.99)), rel=1e-12)

    def test_overflow_is_reported(self):
        with pytest.raises(OverflowError):
            discount_power(0.5, -5000)


class TestRollout:
    def test_fixed_actions_match_reward_table(self):
        env = cliff_walk()
        actions = [UP, RIGHT, RIGHT, LEFT, LEFT, UP, DOWN, DOWN]
        tr = replay(env, actions)
        expected, s = [], env.start_state
        for a in actions:
            s, r, done = env.transition(s, a)
            expected.append(r)
            if done:
                break
        assert list(tr.extrinsic) == expected
        assert tr.length == 8
        assert tr.intrinsic_raw is None and tr.intrinsic_shaped is None

    def test_optimal_cliff_path(self):
        tr = replay(cliff_walk(), [UP] + [RIGHT] * 11 + [DOWN])
        assert tr.length == 13
        assert sum(tr.extrinsic) == 88
        assert tr.terminated

    def test_identity_shaper_zeroes_stream(self):
        env = cliff_walk()
        rng = np.random.default_rng(3)
        tr = rollout(env, lambda s, r: int(r.integers(4)), CountBonus(1.0), GrmShaper(IdentityMatching(), env.gamma), rng)
        assert all(x == 0 for x in tr.intrinsic_shaped)
        assert len(tr.intrinsic_raw) == tr.length

    @pytest.mark.parametrize("matching", [PbimMatching(), DelayMatching(1), DelayMatching(4)])
    @pytest.mark.parametrize("seed", range(5))
    def test_shaped_stream_has_zero_discounted_sum(self, matching, seed):
        env = cliff_walk()
        rng = np.random.default_rng(seed)
        tr = rollout(env, lambda s, r: int(r.integers(4)), CountBonus(1.0), GrmShaper(matching, env.gamma), rng)
        assert abs(discounted_return(tr.intrinsic_shaped, env.gamma)) < 1e-9

    def test_invalid_action_is_contract_violation(self):
        with pytest.raises(ContractViolation):
            rollout(cliff_walk(), lambda s, r: 7)

    def test_replay_is_bit_identical(self):
        env = cliff_walk()
        rng = np.random.default_rng(11)
        tr = rollout(env, lambda s, r: int(r.integers(4)), rng=rng)
        again = replay(env, tr.actions)
        assert again == tr

    def test_truncation_at_max_steps(self):
        tr = replay(cliff_walk(), [UP] * 60)
        assert tr.length == 50 and not tr.terminated
        assert sum(tr.extrinsic) == -50

    def test_on_step_sees_every_transition(self):
        seen = []
        tr = rollout(cliff_walk(), lambda s, r: UP, on_step=lambda o, b: seen.append((o.timestep, b)))
        assert [t for t, _ in seen] == list(range(tr.length))
        assert all(b == 0.0 for _, b in seen)


class TestTrajectory:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Trajectory((0, 1), (0, 1), (1.0,), None, None, False)

    def test_csv_round_trip(self):
        env = cliff_walk()
        rng = np.random.default_rng(0)
        tr = rollout(env, lambda s, r: int(r.integers(4)), CountBonus(0.5), GrmShaper(DelayMatching(2), env.gamma), rng)
        text = tr.to_csv()
        assert text.splitlines()[0] == "t,state,action,extrinsic,intrinsic_raw,intrinsic_shaped"
        assert len(text.splitlines()) == tr.length + 1
        back = Trajectory.from_csv(text, tr.states[-1])
        assert back.states == tr.states and back.actions == tr.actions
        assert back.extrinsic == tr.extrinsic
        assert back.intrinsic_raw == tr.intrinsic_raw and back.intrinsic_shaped == tr.intrinsic_shaped

    def test_step_outcome_done(self):
        assert StepOutcome(0, 0, 1, 0.0, True, False, 0).done
        assert StepOutcome(0, 0, 1, 0.0, False, True, 0).done
        assert not StepOutcome(0, 0, 1, 0.0, False, False, 0).done
