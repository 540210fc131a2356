import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grmshaping.envs import cliff_walk, key_door
from grmshaping.intrinsic import (
    CountBonus,
    IntrinsicModule,
    RndLite,
    RunningMean,
    future_agnosticism_probe,
    normalize,
)
from grmshaping.mdp_core import rollout


class PeekingBonus(IntrinsicModule):
    """Deliberately broken: pays for the *next* action when it can see it."""

    def observe(self, step, context):
        t = context.t
        return float(context.actions[t + 1]) if t + 1 < len(context.actions) else 0.0


class TestCountBonus:
    def test_harmonic_visits(self):
        cb = CountBonus(1.0)
        cb.start_episode(0)
        assert [cb.count_bonus(5) for _ in range(3)] == [1.0, 0.5, 1 / 3]

    def test_zero_alpha(self):
        cb = CountBonus(0.0)
        cb.start_episode(0)
        assert cb.count_bonus(3) == 0.0 and cb.count_bonus(3) == 0.0

    def test_second_visit(self):
        cb = CountBonus(0.025)
        cb.start_episode(0)
        cb.count_bonus(1)
        assert cb.count_bonus(1) == 0.0125

    def test_start_state_counts_once(self):
        cb = CountBonus(1.0)
        cb.start_episode(2)
        assert cb.count_bonus(2) == 0.5

    def test_counts_reset_each_episode(self):
        cb = CountBonus(1.0)
        cb.start_episode(0)
        cb.count_bonus(4)
        cb.start_episode(0)
        assert cb.count_bonus(4) == 1.0

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValueError):
            CountBonus(-1.0)

    def test_key_coarsens_states(self):
        env = key_door()
        cb = CountBonus(1.0, key=env.position_key)
        cb.start_episode(env.start_state)
        a = env.encode(1, 1, True, False)
        b = env.encode(1, 1, True, True)
        assert cb.count_bonus(a) == 1.0 and cb.count_bonus(b) == 0.5


class TestRndLite:
    def test_copied_predictor_pays_nothing(self):
        rnd = RndLite(10, seed=0)
        rnd.copy_target_into_predictor()
        assert [rnd.rnd_reward_and_update(s % 10) for s in range(50)] == [0.0] * 50

    def test_scale_is_linear(self):
        a = RndLite(12, scale=1000.0, lr=1e-3, seed=5)
        b = RndLite(12, scale=2000.0, lr=1e-3, seed=5)
        for s in [0, 3, 3, 7, 11, 0]:
            assert b.rnd_reward_and_update(s) == 2 * a.rnd_reward_and_update(s)

    def test_repeated_state_reward_never_increases(self):
        rnd = RndLite(20, lr=0.01, seed=1)
        seq = [rnd.rnd_reward_and_update(4) for _ in range(300)]
        assert all(b <= a for a, b in zip(seq, seq[1:]))
        assert seq[-1] < seq[0]

    def test_target_is_frozen(self):
        rnd = RndLite(8, lr=0.1, seed=2)
        before = [p.copy() for p in rnd.target]
        for s in range(40):
            rnd.rnd_reward_and_update(s % 8)
        assert all(np.array_equal(a, b) for a, b in zip(before, rnd.target))

    @given(st.integers(0, 2**16), st.lists(st.integers(0, 15), min_size=1, max_size=40))
    @settings(max_examples=50)
    def test_reward_non_negative(self, seed, states):
        rnd = RndLite(16, lr=0.05, seed=seed)
        assert all(rnd.rnd_reward_and_update(s) >= 0 for s in states)

    def test_reward_is_scaled_mse(self):
        # Independent forward pass from the raw parameter arrays.
        rnd = RndLite(6, seed=9)
        s = 4
        onehot = np.eye(6)[s]

        def net(W1, b1, W2, b2):
            return W2 @ np.tanh(W1 @ onehot + b1) + b2

        expected = 1000.0 * np.mean((net(rnd.W1, rnd.b1, rnd.W2, rnd.b2) - net(*rnd.target)) ** 2)
        assert rnd.rnd_reward_and_update(s) == pytest.approx(expected, rel=1e-12)

    def test_gradient_step_matches_finite_differences(self):
        rnd = RndLite(5, lr=1e-3, seed=3)
        s = 2
        W1, b1, W2, b2 = (rnd.W1.copy(), rnd.b1.copy(), rnd.W2.copy(), rnd.b2.copy())
        target = rnd._target_out[s]

        def loss(b2_):
            h = np.tanh(W1[:, s] + b1)
            d = W2 @ h + b2_ - target
            return float(d @ d) / d.size

        eps = 1e-6
        grad_b2 = np.array([(loss(b2 + eps * e) - loss(b2 - eps * e)) / (2 * eps) for e in np.eye(b2.size)])
        rnd.rnd_reward_and_update(s)
        assert np.allclose(b2 - rnd.b2, 1e-3 * grad_b2, atol=1e-12)

    def test_non_finite_is_numeric_error(self):
        rnd = RndLite(4, seed=0)
        rnd.W2[0, 0] = np.inf
        with pytest.raises(FloatingPointError):
            rnd.rnd_reward_and_update(1)

    def test_deepcopy_is_independent(self):
        rnd = RndLite(6, lr=0.1, seed=0)
        clone = copy.deepcopy(rnd)
        clone.rnd_reward_and_update(2)
        assert rnd.error(2) != clone.error(2)
        assert np.shares_memory(clone.W1, clone._w1t)


class TestRunningMean:
    def test_constant_stream(self):
        rm = RunningMean()
        assert [normalize(3.0, rm) for _ in range(4)] == [3.0, 0.0, 0.0, 0.0]

    def test_prior_mean_convention(self):
        rm = RunningMean()
        assert [rm.normalize(x) for x in (1.0, 2.0, 3.0)] == [1.0, 1.0, 1.5]

    def test_first_value_passes_through(self):
        assert RunningMean().normalize(-7.25) == -7.25

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200))
    def test_mean_is_arithmetic_mean(self, xs):
        rm = RunningMean()
        for x in xs:
            rm.update(x)
        assert rm.count == len(xs)
        assert abs(rm.mean - math.fsum(xs) / len(xs)) <= 1e-12 * max(1.0, max(abs(x) for x in xs))


class TestFutureAgnosticism:
    def test_count_bonus(self):
        assert future_agnosticism_probe(CountBonus(1.0), cliff_walk(), [0, 3, 3], [[3, 1], [0, 0, 2]])

    def test_rnd(self):
        assert future_agnosticism_probe(RndLite(48, lr=0.05, seed=0), cliff_walk(), [0, 3, 3, 2], [[0, 3], [1]])

    def test_peeking_module_is_caught(self):
        assert not future_agnosticism_probe(PeekingBonus(), cliff_walk(), [0, 3], [[0], [3]])

    @pytest.mark.parametrize(
        "factory",
        [lambda: CountBonus(1.0), lambda: CountBonus(0.3), lambda: RndLite(48, lr=0.05, seed=4)],
        ids=["count", "count-small", "rnd"],
    )
    def test_shipped_modules_on_random_pairs(self, factory):
        rng = np.random.default_rng(0)
        env = cliff_walk()
        module = factory()
        for _ in range(100):
            # warm the module up a little so RND carries some training state
            rollout(env, lambda s, r: int(r.integers(4)), module, rng=rng, max_steps=5)
            prefix = [0] + list(rng.integers(4, size=int(rng.integers(0, 6))))
            futures = [list(rng.integers(4, size=int(rng.integers(1, 6)))) for _ in range(2)]
            assert future_agnosticism_probe(module, env, prefix, futures)
