import numpy as np
import pytest

from pomdplab import (
    DomainSpec,
    TabularPOMDP,
    collect_exploration,
    empirical_moments,
    population_moments,
)
from pomdplab.errors import InsufficientDataError
from pomdplab.moments import (
    first_observation_distribution,
    load_batch,
    population_first_observation,
    view_conditionals,
)


def alternating_chain(horizon=4):
    # deterministic two-state alternator, identity observations, one action
    t = np.array([[0.0, 1.0], [1.0, 0.0]])
    return TabularPOMDP(t[None], np.eye(2), np.array([[0.2, 0.8]]),
                        np.array([1.0, 0.0]), horizon=horizon)


class TestEmpirical:
    def test_deterministic_chain_two_step_correspondence(self):
        # Hand oracle: states run 0,1,0,1,0 so observations are 1,0,1,0.
        # Anchors tau=3,4 give view triples (1,0,1) and (0,1,0); the
        # past/future cross moment is the two-step (identity)
        # correspondence with mass split over the two anchors.
        model = alternating_chain()
        batch = collect_exploration(model, 10, seed=0)
        m = empirical_moments(batch, 0)
        assert m.count == 20
        assert m.pair_13 == pytest.approx(0.5 * np.eye(2))
        assert m.triple[1, 0, 1] == pytest.approx(0.5)
        assert m.triple[0, 1, 0] == pytest.approx(0.5)

    def test_point_mass_batch(self):
        model = alternating_chain()
        batch = collect_exploration(model, 5, seed=1)
        # all triples from an even-horizon deterministic run starting at
        # a point mass: override observations to one repeated symbol
        batch.observations[:] = 1
        m = empirical_moments(batch, 0)
        assert m.triple[1, 1, 1] == pytest.approx(1.0)
        assert m.pair_12[1, 1] == pytest.approx(1.0)

    def test_moment_ranges_and_normalization(self, tiger):
        batch = collect_exploration(tiger, 3000, seed=4)
        for a in range(tiger.num_actions):
            m = empirical_moments(batch, a)
            for arr in (m.m1, m.pair_12, m.pair_13, m.pair_23, m.triple):
                assert arr.min() >= 0.0 and arr.max() <= 1.0
            assert m.m1.sum() == pytest.approx(1.0, abs=1e-9)
            assert m.pair_12.sum() == pytest.approx(1.0, abs=1e-9)
            assert m.triple.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(m.reward_cross >= 0.0)
            assert np.all(m.reward_cross <= tiger.reward_max)

    def test_marginal_consistency(self, tiger):
        batch = collect_exploration(tiger, 2000, seed=5)
        for a in range(tiger.num_actions):
            m = empirical_moments(batch, a)
            assert np.abs(m.triple.sum(axis=2) - m.pair_12).max() <= 1e-12
            assert np.abs(m.triple.sum(axis=0) - m.pair_23).max() <= 1e-12
            assert np.abs(m.triple.sum(axis=1) - m.pair_13).max() <= 1e-12
            assert np.abs(m.triple.sum(axis=(0, 2)) - m.m1).max() <= 1e-12

    def test_merge_law(self, tiger):
        left = collect_exploration(tiger, 1500, seed=42)
        right = collect_exploration(tiger, 2500, seed=42, episode_offset=1500)
        whole = collect_exploration(tiger, 4000, seed=42)
        for a in range(tiger.num_actions):
            merged = empirical_moments(left, a).merge(empirical_moments(right, a))
            direct = empirical_moments(whole, a)
            assert merged.count == direct.count
            assert np.abs(merged.triple - direct.triple).max() <= 1e-12
            assert np.abs(merged.reward_cross - direct.reward_cross).max() <= 1e-12

    def test_merge_commutes_and_associates(self, tiger):
        batches = [collect_exploration(tiger, 500, seed=s) for s in (1, 2, 3)]
        ms = [empirical_moments(b, 0) for b in batches]
        ab_c = ms[0].merge(ms[1]).merge(ms[2])
        a_bc = ms[0].merge(ms[1].merge(ms[2]))
        ba_c = ms[1].merge(ms[0]).merge(ms[2])
        assert np.abs(ab_c.triple - a_bc.triple).max() <= 1e-12
        assert np.abs(ab_c.triple - ba_c.triple).max() <= 1e-12

    def test_insufficient_data(self, tiger):
        batch = collect_exploration(tiger, 100, seed=0,
                                    exploration=[0.5, 0.5, 0.0])
        with pytest.raises(InsufficientDataError) as err:
            empirical_moments(batch, 2)
        assert err.value.action == 2

    def test_uniform_action_frequency(self, tiger):
        batch = collect_exploration(tiger, 100000, seed=6)
        freq = np.bincount(batch.actions[:, 0], minlength=3) / 100000
        se = np.sqrt((1 / 3) * (2 / 3) / 100000)
        assert np.all(np.abs(freq - 1 / 3) <= 3 * se)


class TestCollectMerge:
    def test_split_fanout_equals_single_run(self, tiger):
        whole = collect_exploration(tiger, 10000, seed=99)
        parts = [collect_exploration(tiger, 2500, seed=99, episode_offset=o)
                 for o in (0, 2500, 5000, 7500)]
        merged = parts[0]
        for p in parts[1:]:
            merged = merged.merge(p)
        assert np.array_equal(whole.actions, merged.actions)
        assert np.array_equal(whole.observations, merged.observations)
        assert np.array_equal(whole.rewards, merged.rewards)
        for a in range(3):
            assert np.abs(empirical_moments(whole, a).triple
                          - empirical_moments(merged, a).triple).max() == 0.0

    def test_batch_roundtrip(self, tiger, tmp_path):
        batch = collect_exploration(tiger, 50, seed=3)
        path = tmp_path / "episodes.log"
        batch.save(path)
        loaded = load_batch(path)
        assert np.array_equal(loaded.actions, batch.actions)
        assert np.array_equal(loaded.observations, batch.observations)
        assert np.array_equal(loaded.rewards, batch.rewards)

    def test_episode_iteration(self, tiger):
        batch = collect_exploration(tiger, 3, seed=0)
        eps = list(batch.episodes())
        assert len(eps) == 3
        assert all(len(e) == tiger.horizon for e in eps)


class TestPopulation:
    def test_identity_chain_formula(self):
        # Independent oracle: with identity observations and one action,
        # triple[z1,z2,z3] = mean over anchors of
        # occupancy_{tau-1}(z1) * T[z2,z1] * T[z3,z2].
        t = np.array([[0.7, 0.4], [0.3, 0.6]])
        model = TabularPOMDP(t[None], np.eye(2), np.array([[0.1, 0.9]]),
                             np.array([0.6, 0.4]), horizon=4)
        moments = population_moments(model)[0]
        expected = np.zeros((2, 2, 2))
        nu = model.initial_belief
        occupancies = [nu]
        for _ in range(3):
            nu = t @ nu
            occupancies.append(nu)
        for tau in (3, 4):                      # anchors; 1-based steps
            prev = occupancies[tau - 2]         # state at step tau-1
            for z1 in range(2):
                for z2 in range(2):
                    for z3 in range(2):
                        expected[z1, z2, z3] += prev[z1] * t[z2, z1] * t[z3, z2] / 2
        assert moments.triple == pytest.approx(expected, abs=1e-14)

    def test_relabeling_invariance(self, random_model):
        perm = np.array([2, 0, 1])
        base = population_moments(random_model)
        permuted = population_moments(random_model.permute_states(perm))
        for a in base:
            assert np.abs(base[a].triple - permuted[a].triple).max() <= 1e-14
            assert np.abs(base[a].reward_cross
                          - permuted[a].reward_cross).max() <= 1e-14

    def test_conditional_independence_structure(self):
        # pair moments factor as Ci diag(w) Cj^T through the explicitly
        # constructed view conditional matrices
        for seed in range(5):
            model = DomainSpec(kind="random", states=3, actions=2, horizon=4,
                               seed=seed).build()
            for a in range(model.num_actions):
                m = population_moments(model)[a]
                c1, c2, c3, w = view_conditionals(model, action=a)
                d = np.diag(w)
                assert np.abs(m.pair_12 - c1 @ d @ c2.T).max() <= 1e-12
                assert np.abs(m.pair_13 - c1 @ d @ c3.T).max() <= 1e-12
                assert np.abs(m.pair_23 - c2 @ d @ c3.T).max() <= 1e-12

    def test_empirical_matches_population_tiger(self, tiger):
        n = 1_000_000
        batch = collect_exploration(tiger, n, seed=17)
        pop = population_moments(tiger)
        for a in range(tiger.num_actions):
            emp = empirical_moments(batch, a)
            se = 3 * np.sqrt(pop[a].triple * (1 - pop[a].triple) / emp.count)
            assert np.all(np.abs(emp.triple - pop[a].triple) <= se + 1e-9)

    def test_unbiasedness_over_seeds(self, tiger):
        pop = population_moments(tiger)[0]
        total = None
        count = 0.0
        for seed in range(40):
            m = empirical_moments(collect_exploration(tiger, 2500, seed=seed), 0)
            total = m.pair_23 * m.count + (0 if total is None else total)
            count += m.count
        mean = total / count
        se = np.sqrt(pop.pair_23 * (1 - pop.pair_23) / count)
        assert np.all(np.abs(mean - pop.pair_23) <= 3 * se + 1e-9)

    def test_population_merge_is_identity(self, tiger):
        pop = population_moments(tiger)[1]
        merged = pop.merge(pop)
        assert np.isinf(merged.count)
        assert np.abs(merged.triple - pop.triple).max() <= 1e-15

    def test_first_observation_consistency(self, tiger):
        batch = collect_exploration(tiger, 200000, seed=23)
        emp = first_observation_distribution(batch)
        pop = population_first_observation(tiger)
        se = np.sqrt(pop * (1 - pop) / batch.total_count)
        assert np.all(np.abs(emp - pop) <= 3 * se + 1e-12)
