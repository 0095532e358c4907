"""Exact finite-horizon POMDP planning, execution, and evaluation oracles.

``solve_finite_horizon`` runs alpha-vector backward induction with
incremental cross-sums and pointwise-dominance pruning, which preserves
the exact upper envelope; ``brute_force_optimal`` enumerates every
deterministic observation-indexed policy tree and is the independent
oracle the planner is checked against.  ``evaluate_policy`` computes a
policy's exact expected value by forward dynamic programming over the
joint distribution of (latent state, tracked belief), which also covers
the mismatched case of executing a policy planned on an estimated model
against the true one.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from .core import Episode, TabularPOMDP, belief_update, model_from_dict
from .errors import ImpossibleObservationError, PlannerSizeError
from .moments import EpisodeBatch, _sample_categorical
from .validation import as_rng

logger = logging.getLogger(__name__)

MAX_PLAN_STATES = 8
MAX_PLAN_OBSERVATIONS = 8
MAX_PLAN_HORIZON = 10
MAX_STAGE_VECTORS = 200_000
DEFAULT_TREE_CAP = 1_000_000
DEFAULT_NODE_CAP = 100_000


@dataclass
class PolicyValue:
    """Exact expected total reward with a per-step breakdown."""

    value: float
    per_step: np.ndarray

    def to_dict(self) -> dict:
        return {"value": self.value, "per_step": self.per_step.tolist()}


def fallback_belief(model: TabularPOMDP) -> np.ndarray:
    """Belief used after an observation the tracking model thinks is
    impossible: uniform over the support of the model's initial belief."""
    support = model.initial_belief > 0
    return support / support.sum()


def prune_dominated(vectors: np.ndarray, actions=None):
    """Drop vectors pointwise dominated by another vector in the set.

    Exact (tolerance-free) dominance, so the upper envelope is
    unchanged.  Duplicates collapse to one representative; when action
    labels are given, the smallest label survives and is returned
    alongside the kept vectors.
    """
    vectors = np.asarray(vectors, dtype=float)
    if actions is None:
        vectors = np.unique(vectors, axis=0)
    else:
        actions = np.asarray(actions)
        order = np.lexsort((actions,) + tuple(vectors.T[::-1]))
        vectors, actions = vectors[order], actions[order]
        _, first = np.unique(vectors, axis=0, return_index=True)
        vectors, actions = vectors[np.sort(first)], actions[np.sort(first)]
    order = np.argsort(-vectors.sum(axis=1), kind="stable")
    vectors = vectors[order]
    front = np.empty_like(vectors)
    kept_idx = []
    m = 0
    for i, row in enumerate(vectors):
        if m and (front[:m] >= row).all(axis=1).any():
            continue
        front[m] = row
        kept_idx.append(i)
        m += 1
    if actions is None:
        return front[:m]
    return front[:m], actions[order][kept_idx]


def _canonical(vectors, actions):
    order = np.lexsort(tuple(vectors.T[::-1]) + (actions,))
    return vectors[order], actions[order]


@dataclass
class AlphaVectorPolicy:
    """Finite-horizon policy as per-step alpha-vector sets.

    ``alpha[t]`` is an (m_t, S) array and ``actions[t]`` the matching
    action labels, both in canonical (action, vector) order so argmax
    ties resolve to the lowest action index.  Step indices are 0-based.
    The policy carries the model it was solved on; execution against a
    different environment tracks beliefs with this model.
    """

    model: TabularPOMDP
    alpha: list
    actions: list

    @property
    def horizon(self) -> int:
        return len(self.alpha)

    def value(self, belief, step: int = 0) -> float:
        return float((self.alpha[step] @ np.asarray(belief, dtype=float)).max())

    def action_at(self, step: int, belief) -> int:
        values = self.alpha[step] @ np.asarray(belief, dtype=float)
        return int(self.actions[step][int(np.argmax(values))])

    def save(self, path) -> None:
        doc = {
            "model": self.model.to_dict(),
            "steps": [
                {"alpha": a.tolist(), "actions": act.tolist()}
                for a, act in zip(self.alpha, self.actions)
            ],
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_policy(path) -> AlphaVectorPolicy:
    doc = json.loads(Path(path).read_text())
    return AlphaVectorPolicy(
        model=model_from_dict(doc["model"]),
        alpha=[np.asarray(s["alpha"], dtype=float) for s in doc["steps"]],
        actions=[np.asarray(s["actions"], dtype=int) for s in doc["steps"]],
    )


def _observation_maps(model):
    # maps[a][z] : alpha_next -> g  with  g(s) = sum_s' alpha(s') O[z,s'] T_a[s',s]
    return [
        [model.observation_matrix[z][:, None] * model.transitions[a]
         for z in range(model.num_observations)]
        for a in range(model.num_actions)
    ]


def solve_finite_horizon(model: TabularPOMDP, prune: bool = True,
                         max_states=MAX_PLAN_STATES,
                         max_observations=MAX_PLAN_OBSERVATIONS,
                         max_horizon=MAX_PLAN_HORIZON,
                         max_stage_vectors=MAX_STAGE_VECTORS) -> AlphaVectorPolicy:
    """Exact backward alpha-vector value iteration.

    The final step's sets are the immediate reward vectors; each backup
    enumerates cross-sums of successor choices per observation
    incrementally, pruning pointwise-dominated vectors between stages.
    Intended for desk scale; larger inputs raise
    :class:`PlannerSizeError` (use :func:`solve_belief_grid` instead).
    """
    if model.num_states > max_states or model.num_observations > max_observations \
            or model.horizon > max_horizon:
        raise PlannerSizeError(
            f"model size ({model.num_states} states, {model.num_observations} "
            f"observations, horizon {model.horizon}) exceeds the exact "
            f"planner guardrail")
    maps = _observation_maps(model)
    maybe_prune = prune_dominated if prune else (
        lambda v, a=None: v if a is None else (v, a))

    alpha = [None] * model.horizon
    actions = [None] * model.horizon
    vecs, acts = maybe_prune(model.rewards.copy(),
                             np.arange(model.num_actions))
    alpha[-1], actions[-1] = _canonical(vecs, acts)
    for t in range(model.horizon - 2, -1, -1):
        nxt = alpha[t + 1]
        stage_vectors = []
        stage_actions = []
        for a in range(model.num_actions):
            partial = None
            for z in range(model.num_observations):
                g = nxt @ maps[a][z]
                g = maybe_prune(g)
                if partial is None:
                    partial = g
                else:
                    if partial.shape[0] * g.shape[0] > max_stage_vectors:
                        raise PlannerSizeError(
                            f"cross-sum at step {t} for action {a} exceeds "
                            f"{max_stage_vectors} vectors")
                    partial = maybe_prune(
                        (partial[:, None, :] + g[None, :, :])
                        .reshape(-1, model.num_states))
            stage_vectors.append(model.rewards[a][None, :] + partial)
            stage_actions.append(np.full(partial.shape[0], a))
        vecs = np.concatenate(stage_vectors)
        acts = np.concatenate(stage_actions)
        vecs, acts = maybe_prune(vecs, acts)
        alpha[t], actions[t] = _canonical(vecs, acts)
    return AlphaVectorPolicy(model=model, alpha=alpha, actions=actions)


# ---------------------------------------------------------------------------
# Belief-grid approximate planner
# ---------------------------------------------------------------------------

def simplex_grid(dim: int, resolution: int) -> np.ndarray:
    """All probability vectors whose entries are multiples of 1/resolution."""
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    points = []

    def fill(prefix, remaining, slots):
        if slots == 1:
            points.append(prefix + [remaining])
            return
        for v in range(remaining + 1):
            fill(prefix + [v], remaining - v, slots - 1)

    fill([], resolution, dim)
    return np.asarray(points, dtype=float) / resolution


@dataclass
class GridPolicy:
    """Approximate policy from belief-grid value iteration."""

    model: TabularPOMDP
    grid: np.ndarray
    values: np.ndarray    # (H, n_points)
    grid_actions: np.ndarray   # (H, n_points)
    resolution: int

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    def nearest(self, belief) -> int:
        d = np.square(self.grid - np.asarray(belief, dtype=float)[None, :]).sum(axis=1)
        return int(np.argmin(d))

    def value(self, belief, step: int = 0) -> float:
        return float(self.values[step, self.nearest(belief)])

    def action_at(self, step: int, belief) -> int:
        return int(self.grid_actions[step, self.nearest(belief)])


def grid_interpolation_bound(model: TabularPOMDP, resolution: int) -> float:
    """Loose bound on the grid planner's value error vs. the exact one.

    Each nearest-vertex snap moves the belief by at most S/resolution in
    L1; a step-t value function is (H-t+1) * R_max Lipschitz in that
    norm, and a snap happens at every step including the root lookup.
    """
    radius = model.num_states / resolution
    h = model.horizon
    return model.reward_max * radius * h * (h + 1) / 2.0


def solve_belief_grid(model: TabularPOMDP, resolution: int,
                      max_points: int = 200_000) -> GridPolicy:
    """Value iteration on a regular belief-simplex grid.

    Successor beliefs snap to their nearest grid vertex (Euclidean);
    the returned policy's value is exact up to
    :func:`grid_interpolation_bound`.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    grid = simplex_grid(model.num_states, resolution)
    n = grid.shape[0]
    if n > max_points:
        raise PlannerSizeError(f"belief grid has {n} points (cap {max_points})")
    na, nz = model.num_actions, model.num_observations
    succ_index = np.zeros((n, na, nz), dtype=np.int64)
    succ_prob = np.zeros((n, na, nz))
    for a in range(na):
        predicted = grid @ model.transitions[a].T          # (n, S')
        probs = predicted @ model.observation_matrix.T     # (n, Z)
        for z in range(nz):
            posterior = predicted * model.observation_matrix[z][None, :]
            totals = posterior.sum(axis=1)
            ok = totals > 0
            posterior[ok] /= totals[ok, None]
            posterior[~ok] = fallback_belief(model)[None, :]
            d = np.square(posterior[:, None, :] - grid[None, :, :]).sum(axis=2)
            succ_index[:, a, z] = np.argmin(d, axis=1)
            succ_prob[:, a, z] = probs[:, z]

    immediate = grid @ model.rewards.T                     # (n, A)
    h = model.horizon
    values = np.zeros((h, n))
    grid_actions = np.zeros((h, n), dtype=np.int64)
    future = np.zeros(n)
    for t in range(h - 1, -1, -1):
        q = immediate.copy()
        if t < h - 1:
            q += np.einsum("naz,naz->na", succ_prob, future[succ_index])
        grid_actions[t] = np.argmax(q, axis=1)
        values[t] = q[np.arange(n), grid_actions[t]]
        future = values[t]
    return GridPolicy(model=model, grid=grid, values=values,
                      grid_actions=grid_actions, resolution=resolution)


# ---------------------------------------------------------------------------
# Execution and exact evaluation
# ---------------------------------------------------------------------------

def execute_policy(env: TabularPOMDP, policy, rng, seed_tag="") -> Episode:
    """Run one episode of ``policy`` against ``env``.

    Beliefs are tracked with the policy's own model, which may differ
    from the environment; observations the tracking model rules out
    reset the belief to a fallback (logged) and execution continues.
    """
    if policy.horizon != env.horizon:
        raise ValueError("policy and environment horizons differ")
    rng = as_rng(rng)
    h = env.horizon
    actions = np.empty(h, dtype=np.int32)
    observations = np.empty(h, dtype=np.int32)
    rewards = np.empty(h, dtype=float)
    state = int(rng.choice(env.num_states, p=env.initial_belief))
    belief = policy.model.initial_belief.copy()
    for t in range(h):
        a = policy.action_at(t, belief)
        actions[t] = a
        rewards[t] = env.rewards[a, state]
        state = int(rng.choice(env.num_states, p=env.transitions[a][:, state]))
        z = int(rng.choice(env.num_observations, p=env.observation_matrix[:, state]))
        observations[t] = z
        if t + 1 < h:
            try:
                belief = belief_update(policy.model, belief, a, z)
            except ImpossibleObservationError:
                logger.warning("impossible observation %d after action %d at "
                               "step %d; resetting belief", z, a, t)
                belief = fallback_belief(policy.model)
    return Episode(actions, observations, rewards, seed_tag=seed_tag)


def _select_actions(policy, step, beliefs):
    if isinstance(policy, AlphaVectorPolicy):
        values = beliefs @ policy.alpha[step].T
        return policy.actions[step][np.argmax(values, axis=1)].astype(np.int64)
    if isinstance(policy, GridPolicy):
        d = np.square(beliefs[:, None, :] - policy.grid[None, :, :]).sum(axis=2)
        return policy.grid_actions[step][np.argmin(d, axis=1)].astype(np.int64)
    return np.array([policy.action_at(step, b) for b in beliefs], dtype=np.int64)


def execute_policy_batch(env: TabularPOMDP, policy, episodes: int,
                         seed) -> EpisodeBatch:
    """Vectorized variant of :func:`execute_policy` for many episodes."""
    if policy.horizon != env.horizon:
        raise ValueError("policy and environment horizons differ")
    rng = as_rng(seed)
    n, h = episodes, env.horizon
    actions = np.empty((n, h), dtype=np.int32)
    observations = np.empty((n, h), dtype=np.int32)
    rewards = np.empty((n, h), dtype=float)
    states = _sample_categorical(rng, np.broadcast_to(env.initial_belief,
                                                      (n, env.num_states)))
    beliefs = np.broadcast_to(policy.model.initial_belief,
                              (n, policy.model.num_states)).copy()
    obs_cols = env.observation_matrix.T
    fb = fallback_belief(policy.model)
    for t in range(h):
        acts = _select_actions(policy, t, beliefs)
        actions[:, t] = acts
        rewards[:, t] = env.rewards[acts, states]
        states = _sample_categorical(rng, env.transitions[acts, :, states])
        obs = _sample_categorical(rng, obs_cols[states])
        observations[:, t] = obs
        if t + 1 < h:
            predicted = np.einsum("nij,nj->ni",
                                  policy.model.transitions[acts], beliefs)
            posterior = predicted * policy.model.observation_matrix[obs]
            totals = posterior.sum(axis=1)
            dead = totals <= 0
            if np.any(dead):
                posterior[dead] = fb
                totals[dead] = 1.0
            beliefs = posterior / totals[:, None]
    return EpisodeBatch(
        actions=actions, observations=observations, rewards=rewards,
        num_actions=env.num_actions, num_observations=env.num_observations,
        reward_max=env.reward_max, exploration=None,
        seed_plan=f"policy-exec/seed={seed}",
    )


def evaluate_policy(model: TabularPOMDP, policy,
                    node_cap: int = DEFAULT_NODE_CAP) -> PolicyValue:
    """Exact expected value of ``policy`` on ``model``.

    Forward dynamic programming over pairs of (tracked belief node,
    unnormalized latent-state measure).  Histories whose tracked beliefs
    coincide merge, and the policy's belief tracking uses the policy's
    own (possibly mismatched) model, so this evaluates exactly what
    :func:`execute_policy` samples.
    """
    if policy.horizon != model.horizon:
        raise ValueError("policy and model horizons differ")
    h = model.horizon
    per_step = np.zeros(h)
    fb = fallback_belief(policy.model)

    def key(b):
        return np.round(b, 12).tobytes()

    nodes = {key(policy.model.initial_belief): (
        policy.model.initial_belief.copy(), model.initial_belief.copy())}
    for t in range(h):
        next_nodes = {}
        for belief, mu in nodes.values():
            a = policy.action_at(t, belief)
            per_step[t] += float(mu @ model.rewards[a])
            if t + 1 == h:
                continue
            pushed = model.transitions[a] @ mu
            for z in range(model.num_observations):
                mu_next = model.observation_matrix[z] * pushed
                mass = mu_next.sum()
                if mass <= 0.0:
                    continue
                try:
                    b_next = belief_update(policy.model, belief, a, z)
                except ImpossibleObservationError:
                    b_next = fb
                k = key(b_next)
                if k in next_nodes:
                    next_nodes[k] = (next_nodes[k][0], next_nodes[k][1] + mu_next)
                else:
                    if len(next_nodes) >= node_cap:
                        raise PlannerSizeError(
                            f"evaluation exceeded {node_cap} belief nodes")
                    next_nodes[k] = (b_next, mu_next)
        nodes = next_nodes
    return PolicyValue(value=float(per_step.sum()), per_step=per_step)


# ---------------------------------------------------------------------------
# Brute-force policy-tree oracle
# ---------------------------------------------------------------------------

def count_policy_trees(num_actions: int, num_observations: int, horizon: int) -> int:
    if num_observations > 1:
        nodes = (num_observations**horizon - 1) // (num_observations - 1)
    else:
        nodes = horizon
    return num_actions**nodes


def _all_trees(num_actions, num_observations, depth):
    if depth == 1:
        return [(a, None) for a in range(num_actions)]
    subtrees = _all_trees(num_actions, num_observations, depth - 1)
    return [
        (a, children)
        for a in range(num_actions)
        for children in product(subtrees, repeat=num_observations)
    ]


def brute_force_optimal(model: TabularPOMDP,
                        tree_cap: int = DEFAULT_TREE_CAP) -> PolicyValue:
    """Enumerate all deterministic observation-indexed policy trees of
    depth H, evaluate each exactly, and return the best value.

    Deliberately naive so it can serve as an independent oracle for
    :func:`solve_finite_horizon`.  Only tiny instances are enumerable;
    beyond ``tree_cap`` trees this raises :class:`PlannerSizeError`.
    """
    n_trees = count_policy_trees(model.num_actions, model.num_observations,
                                 model.horizon)
    if n_trees > tree_cap:
        raise PlannerSizeError(f"{n_trees} policy trees exceed cap {tree_cap}")

    def evaluate(tree, mu, t, per_step):
        a, children = tree
        per_step[t] += float(mu @ model.rewards[a])
        if children is None:
            return
        pushed = model.transitions[a] @ mu
        for z in range(model.num_observations):
            mu_next = model.observation_matrix[z] * pushed
            if mu_next.sum() > 0.0:
                evaluate(children[z], mu_next, t + 1, per_step)

    best_value, best_steps = -np.inf, None
    for tree in _all_trees(model.num_actions, model.num_observations,
                           model.horizon):
        per_step = np.zeros(model.horizon)
        evaluate(tree, model.initial_belief.copy(), 0, per_step)
        total = per_step.sum()
        if total > best_value:
            best_value, best_steps = total, per_step
    return PolicyValue(value=float(best_value), per_step=best_steps)
