import numpy as np
import pytest

from pomdplab import DomainSpec, make_random, make_slot_filling, make_tiger, validate
from pomdplab.errors import GenerationFailedError
from pomdplab.planner import solve_finite_horizon


class TestTiger:
    def test_observation_columns(self):
        model = make_tiger(0.85)
        assert model.observation_matrix[:, 0] == pytest.approx([0.85, 0.15])
        assert model.observation_matrix[:, 1] == pytest.approx([0.15, 0.85])

    def test_separation_gap_value(self):
        # Oracle by hand: |0.85-0.15| + |0.15-0.85| = 1.4
        report = validate(make_tiger(0.85))
        assert report.observation_separation_gap == pytest.approx(1.4)

    def test_uninformative_accuracy_rejected(self):
        with pytest.raises(ValueError):
            make_tiger(0.5)
        with pytest.raises(ValueError):
            make_tiger(1.0)

    def test_listen_keeps_state_opening_resets(self):
        model = make_tiger(0.7)
        assert np.array_equal(model.transitions[0], np.eye(2))
        assert np.array_equal(model.transitions[1], np.full((2, 2), 0.5))
        assert np.array_equal(model.transitions[2], np.full((2, 2), 0.5))

    def test_rewards_in_unit_interval(self):
        model = make_tiger(0.85)
        assert model.rewards.min() == 0.0
        assert model.rewards.max() == 1.0
        assert model.rewards[0] == pytest.approx([0.9, 0.9])


class TestSlotFilling:
    def test_query_transition_is_identity(self):
        model = make_slot_filling(slots=3, noise=0.2, horizon=4)
        assert np.array_equal(model.transitions[0], np.eye(4))

    def test_zero_noise_observation_identity_and_gap(self):
        model = make_slot_filling(slots=2, noise=0.0, horizon=3)
        assert np.array_equal(model.observation_matrix, np.eye(3))
        report = validate(model)
        assert report.observation_separation_gap == pytest.approx(2.0)

    def test_commit_absorbs(self):
        model = make_slot_filling(slots=2, noise=0.1, horizon=3)
        for a in (1, 2):
            assert np.array_equal(model.transitions[a][2], np.ones(3))

    def test_optimal_value_query_then_commit(self):
        # Derived with the exact planner as oracle: with noiseless
        # observations, one query reveals the intent and one correct
        # commit pays reward_max; a commit absorbs, so nothing else pays.
        model = make_slot_filling(slots=2, noise=0.0, horizon=3)
        policy = solve_finite_horizon(model)
        assert policy.value(model.initial_belief) == pytest.approx(1.0, abs=1e-9)

    def test_slots_below_two_rejected(self):
        with pytest.raises(ValueError):
            make_slot_filling(slots=1, noise=0.0, horizon=3)


class TestRandom:
    def test_seed_determinism(self):
        spec = DomainSpec(kind="random", states=4, actions=3, horizon=3, seed=9)
        a, b = make_random(spec), make_random(spec)
        assert np.array_equal(a.transitions, b.transitions)
        assert np.array_equal(a.observation_matrix, b.observation_matrix)
        assert np.array_equal(a.rewards, b.rewards)
        assert np.array_equal(a.initial_belief, b.initial_belief)

    def test_all_generated_models_validate(self):
        for seed in range(100):
            model = make_random(DomainSpec(kind="random", states=4, actions=2,
                                           horizon=3, seed=seed))
            assert validate(model).passed

    def test_too_few_observations_fails(self):
        with pytest.raises(GenerationFailedError):
            make_random(DomainSpec(kind="random", states=3, observations=2,
                                   actions=2, horizon=3, seed=0))

    def test_build_dispatch(self):
        assert DomainSpec(kind="tiger", accuracy=0.8, horizon=4).build() \
            .num_actions == 3
        assert DomainSpec(kind="slot_filling", slots=2, horizon=3).build() \
            .num_states == 3
        with pytest.raises(ValueError):
            DomainSpec(kind="nope").build()
