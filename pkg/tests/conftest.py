import numpy as np
import pytest

from pomdplab import DomainSpec, make_tiger


@pytest.fixture
def tiger():
    return make_tiger(0.85, horizon=3)


@pytest.fixture
def random_model():
    return DomainSpec(kind="random", states=3, actions=2, horizon=4, seed=7).build()


def random_tiny_model(rng, max_states=3, max_actions=2, max_observations=2,
                      horizon=3):
    """Unconstrained tiny model (no validation retry): Dirichlet columns."""
    from pomdplab import TabularPOMDP
    s = int(rng.integers(1, max_states + 1))
    a = int(rng.integers(1, max_actions + 1))
    z = int(rng.integers(1, max_observations + 1))
    return TabularPOMDP(
        transitions=rng.dirichlet(np.ones(s), size=(a, s)).swapaxes(1, 2),
        observation_matrix=rng.dirichlet(np.ones(z), size=s).T,
        rewards=rng.random((a, s)),
        initial_belief=rng.dirichlet(np.ones(s)),
        horizon=horizon,
        reward_max=1.0,
    )


def perturb_model(model, rng, eps_T, eps_O, eps_R, eps_b):
    """A model whose parameters sit inside the prescribed error balls."""
    from pomdplab import TabularPOMDP

    def mix_columns(m, eps):
        out = m.copy()
        for j in range(out.shape[1]):
            q = rng.dirichlet(np.ones(out.shape[0]))
            gamma = rng.uniform(0, eps / 2)
            out[:, j] = (1 - gamma) * out[:, j] + gamma * q
        return out

    transitions = np.stack([mix_columns(model.transitions[a], eps_T)
                            for a in range(model.num_actions)])
    observation = mix_columns(model.observation_matrix, eps_O)
    rewards = np.clip(model.rewards
                      + rng.uniform(-eps_R, eps_R, model.rewards.shape),
                      0.0, model.reward_max)
    q = rng.dirichlet(np.ones(model.num_states))
    gamma = rng.uniform(0, eps_b / 2)
    b1 = (1 - gamma) * model.initial_belief + gamma * q
    return TabularPOMDP(transitions, observation, rewards, b1,
                        model.horizon, model.reward_max)


def random_tree(rng, num_actions, num_observations, depth):
    """Random deterministic observation-indexed policy tree."""
    action = int(rng.integers(num_actions))
    if depth == 1:
        return (action, None)
    return (action, tuple(random_tree(rng, num_actions, num_observations,
                                      depth - 1)
                          for _ in range(num_observations)))


def tree_value(model, tree, mu=None):
    """Exact value of a policy tree; independent of the planner module."""
    if mu is None:
        mu = model.initial_belief.copy()
    action, children = tree
    total = float(mu @ model.rewards[action])
    if children is not None:
        pushed = model.transitions[action] @ mu
        for z in range(model.num_observations):
            total += tree_value(model, children[z],
                                model.observation_matrix[z] * pushed)
    return total
