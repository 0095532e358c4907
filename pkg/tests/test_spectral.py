import numpy as np
import pytest

from pomdplab import (
    DomainSpec,
    TabularPOMDP,
    make_tiger,
    population_moments,
    project_simplex,
    recover_model,
    symmetrize,
    tensor_power,
    whiten,
)
from pomdplab.errors import (
    DecompositionFailedError,
    IllConditionedError,
    RankDeficientError,
)
from pomdplab.moments import _pooled_middle_occupancy
from pomdplab.spectral import truncated_pinv


class TestProjectSimplex:
    def test_feasible_point_unchanged(self):
        assert project_simplex([0.2, 0.3, 0.5]) == pytest.approx([0.2, 0.3, 0.5])

    def test_symmetric_overflow(self):
        assert project_simplex([0.6, 0.6]) == pytest.approx([0.5, 0.5])

    def test_thresholding(self):
        assert project_simplex([1.2, -0.2]) == pytest.approx([1.0, 0.0])

    def test_optimality_against_grid(self):
        # brute-force oracle: the projection must beat every grid point,
        # and the grid best cannot beat it by more than one grid cell
        rng = np.random.default_rng(0)
        for dim, resolution in ((2, 400), (3, 60)):
            lattice = []

            def fill(prefix, remaining, slots):
                if slots == 1:
                    lattice.append(prefix + [remaining])
                    return
                for v in range(remaining + 1):
                    fill(prefix + [v], remaining - v, slots - 1)

            fill([], resolution, dim)
            grid = np.asarray(lattice, dtype=float) / resolution
            for _ in range(40):
                v = rng.uniform(-1.5, 1.5, size=dim)
                proj = project_simplex(v)
                assert np.all(proj >= 0)
                assert proj.sum() == pytest.approx(1.0, abs=1e-12)
                dists = np.linalg.norm(grid - v, axis=1)
                best = dists.min()
                mine = np.linalg.norm(proj - v)
                assert mine <= best + 1e-12
                assert best <= mine + 2.0 / resolution


class TestTruncatedPinv:
    def test_exact_inverse_full_rank(self):
        rng = np.random.default_rng(1)
        m = rng.random((4, 4)) + np.eye(4)
        assert np.abs(truncated_pinv(m) @ m - np.eye(4)).max() <= 1e-10

    def test_rank_deficiency_raises(self):
        m = np.outer([1.0, 2.0], [3.0, 4.0])
        with pytest.raises(RankDeficientError) as err:
            truncated_pinv(m, rank=2)
        assert err.value.required_rank == 2


class TestWhiten:
    def test_identity(self):
        w = whiten(np.eye(3), 3)
        assert np.abs(w.T @ w - np.eye(3)).max() <= 1e-12

    def test_diagonal(self):
        m = np.diag([4.0, 1.0])
        w = whiten(m, 2)
        assert np.abs(w.T @ m @ w - np.eye(2)).max() <= 1e-12

    def test_random_low_rank_residual(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            b = rng.standard_normal((6, 3))
            m = b @ b.T
            w = whiten(m, 3)
            assert np.abs(w.T @ m @ w - np.eye(3)).max() <= 1e-8

    def test_floor_error(self):
        with pytest.raises(IllConditionedError):
            whiten(np.diag([1.0, 1e-14]), 2)


def random_orthogonal_tensor(rng, k, lams):
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    t = np.zeros((k, k, k))
    for lam, v in zip(lams, q.T):
        t += lam * np.einsum("i,j,k->ijk", v, v, v)
    return t, q


class TestTensorPower:
    def test_recovers_known_orthogonal_decomposition(self):
        rng = np.random.default_rng(3)
        t, q = random_orthogonal_tensor(rng, 2, [3.0, 1.0])
        pairs = tensor_power(t, 2, rng=rng)
        order = np.argsort(pairs.eigenvalues)[::-1]
        lams = pairs.eigenvalues[order]
        assert lams == pytest.approx([3.0, 1.0], abs=1e-8)
        for col, lam, true in zip(order, lams, q.T):
            v = pairs.eigenvectors[:, col]
            assert min(np.abs(v - true).max(), np.abs(v + true).max()) <= 1e-8

    def test_rank_one_fixed_point(self):
        rng = np.random.default_rng(4)
        v = np.array([1.0])
        t = 2.5 * np.ones((1, 1, 1))
        pairs = tensor_power(t, 1, rng=rng, n_restarts=1, n_iterations=1)
        assert pairs.eigenvalues[0] == pytest.approx(2.5, abs=1e-12)
        assert abs(pairs.eigenvectors[0, 0]) == pytest.approx(1.0)

    def test_eigenpair_residuals_after_deflation(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            k = int(rng.integers(2, 5))
            lams = np.sort(rng.uniform(0.5, 4.0, size=k))[::-1]
            t, _ = random_orthogonal_tensor(rng, k, lams)
            pairs = tensor_power(t, k, rng=rng)
            deflated = t.copy()
            for lam, v in zip(pairs.eigenvalues, pairs.eigenvectors.T):
                value = np.einsum("ijk,i,j,k->", deflated, v, v, v)
                assert abs(value - lam) <= 1e-8
                deflated -= lam * np.einsum("i,j,k->ijk", v, v, v)
            assert np.abs(deflated).max() <= 1e-7

    def test_equal_eigenvalues_still_identified(self):
        rng = np.random.default_rng(6)
        t, q = random_orthogonal_tensor(rng, 3, [2.0, 2.0, 2.0])
        pairs = tensor_power(t, 3, rng=rng)
        recovered = pairs.eigenvectors
        match = np.abs(recovered.T @ q)
        # each recovered vector matches exactly one true component
        assert np.abs(np.sort(match.max(axis=1)) - 1.0).max() <= 1e-8

    def test_all_below_floor_fails(self):
        rng = np.random.default_rng(7)
        with pytest.raises(DecompositionFailedError):
            tensor_power(np.zeros((2, 2, 2)), 2, rng=rng)

    def test_asymmetric_input_rejected(self):
        rng = np.random.default_rng(8)
        t = rng.standard_normal((3, 3, 3))
        with pytest.raises(ValueError):
            tensor_power(t, 2, rng=rng)


class TestSymmetrize:
    def test_identity_observation_pair_is_middle_weights(self):
        t = np.array([[0.7, 0.4], [0.3, 0.6]])
        model = TabularPOMDP(t[None], np.eye(2), np.array([[0.1, 0.9]]),
                             np.array([0.6, 0.4]), horizon=4)
        pair, triple = symmetrize(population_moments(model)[0], 2)
        middle, _, _ = _pooled_middle_occupancy(model)
        assert np.abs(pair - np.diag(middle)).max() <= 1e-10
        # supersymmetric and PSD contracts
        assert np.abs(triple - np.transpose(triple, (2, 1, 0))).max() <= 1e-10
        assert np.linalg.eigvalsh(pair).min() >= -1e-10

    def test_symmetric_psd_contract_random(self):
        for seed in range(10):
            model = DomainSpec(kind="random", states=3, actions=2,
                               horizon=3, seed=seed).build()
            for a in range(2):
                pair, triple = symmetrize(population_moments(model)[a], 3)
                assert np.abs(pair - pair.T).max() <= 1e-10
                assert np.linalg.eigvalsh(pair).min() >= -1e-10
                for perm in ((1, 0, 2), (0, 2, 1), (2, 1, 0)):
                    assert np.abs(triple - np.transpose(triple, perm)).max() <= 1e-10

    def test_reset_action_is_rank_deficient(self):
        tiger = make_tiger(0.85, 3)
        moments = population_moments(tiger)
        with pytest.raises(RankDeficientError):
            symmetrize(moments[1], 2)   # door opening: rank-one transition


class TestRecoverModel:
    def run_single_action(self, model, action=0):
        rng = np.random.default_rng(11)
        m = population_moments(model)[action]
        pair, triple = symmetrize(m, model.num_states)
        w = whiten(pair, model.num_states)
        whitened = np.einsum("ijk,ip,jq,kr->pqr", triple, w, w, w)
        pairs = tensor_power(whitened, model.num_states, rng=rng)
        return recover_model(m, pairs, w, model.num_states, model.reward_max)

    def test_identity_observation_exact_transitions(self):
        rng = np.random.default_rng(12)
        t = rng.dirichlet(np.ones(3), size=3).T
        model = TabularPOMDP(t[None], np.eye(3), rng.random((1, 3)),
                             rng.dirichlet(np.ones(3)), horizon=4)
        est = self.run_single_action(model)
        # match latent labels through the recovered observation matrix
        perm = np.argmax(est.o_hat, axis=0)
        inv = np.argsort(perm)
        aligned_t = est.t_hat[0][np.ix_(inv, inv)]
        assert np.abs(aligned_t - t).max() <= 1e-8
        aligned_r = est.r_hat[0][inv]
        assert np.abs(aligned_r - model.rewards[0]).max() <= 1e-8

    def test_tiger_listen_action_recovers_observation_matrix(self):
        tiger = make_tiger(0.85, 3)
        est = self.run_single_action(tiger, action=0)
        cols = sorted(est.o_hat.T.tolist())
        expected = sorted(np.asarray([[0.85, 0.15], [0.15, 0.85]]).tolist())
        assert np.abs(np.asarray(cols) - np.asarray(expected)).max() <= 1e-6

    def test_single_state_trivial(self):
        model = TabularPOMDP(
            transitions=np.ones((1, 1, 1)),
            observation_matrix=np.array([[0.3], [0.7]]),
            rewards=np.array([[0.5]]),
            initial_belief=np.array([1.0]),
            horizon=3,
        )
        est = self.run_single_action(model)
        assert est.o_hat[:, 0] == pytest.approx([0.3, 0.7], abs=1e-10)
        assert est.t_hat[0].item() == pytest.approx(1.0)
        assert est.r_hat[0] == pytest.approx([0.5], abs=1e-10)

    def test_estimate_columns_are_distributions(self):
        for seed in range(5):
            model = DomainSpec(kind="random", states=4, actions=2,
                               horizon=3, seed=100 + seed).build()
            est = self.run_single_action(model, action=1)
            assert np.all(est.o_hat >= 0)
            assert est.o_hat.sum(axis=0) == pytest.approx(np.ones(4), abs=1e-9)
            assert np.all(est.t_hat[1] >= 0)
            assert est.t_hat[1].sum(axis=0) == pytest.approx(np.ones(4), abs=1e-9)
            assert est.w_hat[1].sum() == pytest.approx(1.0, abs=1e-9)
