"""Multi-view moment construction from exploration data, plus an exact
population oracle computed from a known model.

View construction
-----------------
For an action ``a``, a triple is anchored at every step ``tau`` (1-based,
``tau >= 3``) where ``a`` was taken.  Under the package's observation
timing (the step-``t`` observation is emitted by the post-transition
state), the state ``s_tau`` in which ``a`` is executed emits the
observation recorded at step ``tau - 1``.  The three views around that
hidden middle state are therefore

    view1 = z_{tau-2}   (emitted by s_{tau-1}; past view)
    view2 = z_{tau-1}   (emitted by s_tau itself; middle view)
    view3 = z_tau       (emitted by s_{tau+1} ~ T_a[:, s_tau]; future view)

which are conditionally independent given ``s_tau`` when exploration is
memoryless.  The implied view conditional matrices are ``C2 = O``,
``C3 = O @ T_a`` and ``C1 = O @ B`` with ``B`` the occupancy-weighted
backward map of the exploration-averaged transition.  Triples are pooled
over all anchor steps, conditioning only on the middle action.

The middle-step reward ``r_tau = R_a[s_tau]`` is accumulated against the
middle view in ``reward_cross``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import Episode, TabularPOMDP, occupancy_profile
from .errors import InsufficientDataError, StructuralModelError
from .validation import as_rng, check_exploration_mixture, check_index

DEFAULT_CHUNK_SIZE = 4096

INFINITE_COUNT = float("inf")


@dataclass
class EpisodeBatch:
    """Column-major store of exploration episodes.

    ``actions``, ``observations`` and ``rewards`` are (N, H) arrays; the
    batch also remembers the index ranges and the exploration mixture it
    was collected under so moment code can sanity-check inputs.
    """

    actions: np.ndarray
    observations: np.ndarray
    rewards: np.ndarray
    num_actions: int
    num_observations: int
    reward_max: float
    exploration: np.ndarray
    seed_plan: str = ""

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int32)
        self.observations = np.asarray(self.observations, dtype=np.int32)
        self.rewards = np.asarray(self.rewards, dtype=float)
        if not (self.actions.shape == self.observations.shape == self.rewards.shape):
            raise StructuralModelError("batch arrays must share one shape")
        if self.actions.ndim != 2:
            raise StructuralModelError("batch arrays must be (episodes, horizon)")
        self.exploration = check_exploration_mixture(self.exploration, self.num_actions)

    @property
    def total_count(self) -> int:
        return self.actions.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[1]

    def episodes(self):
        """Iterate the batch as :class:`~pomdplab.core.Episode` objects."""
        for i in range(self.total_count):
            yield Episode(self.actions[i], self.observations[i], self.rewards[i],
                          seed_tag=f"{self.seed_plan}[{i}]")

    def merge(self, other: "EpisodeBatch") -> "EpisodeBatch":
        if (self.num_actions, self.num_observations, self.horizon) != (
                other.num_actions, other.num_observations, other.horizon):
            raise StructuralModelError("cannot merge batches with different ranges")
        return EpisodeBatch(
            actions=np.concatenate([self.actions, other.actions]),
            observations=np.concatenate([self.observations, other.observations]),
            rewards=np.concatenate([self.rewards, other.rewards]),
            num_actions=self.num_actions,
            num_observations=self.num_observations,
            reward_max=max(self.reward_max, other.reward_max),
            exploration=self.exploration,
            seed_plan=f"{self.seed_plan}+{other.seed_plan}",
        )

    def save(self, path) -> None:
        """Write a text log: a JSON header line, then one episode per line
        as whitespace-separated ``action observation reward`` triplets."""
        header = json.dumps({
            "episodes": self.total_count, "horizon": self.horizon,
            "actions": self.num_actions, "observations": self.num_observations,
            "reward_max": self.reward_max,
            "exploration": self.exploration.tolist(),
            "seed_plan": self.seed_plan,
        })
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for i in range(self.total_count):
                fields = []
                for t in range(self.horizon):
                    fields += [str(self.actions[i, t]), str(self.observations[i, t]),
                               repr(float(self.rewards[i, t]))]
                fh.write(" ".join(fields) + "\n")


def load_batch(path) -> EpisodeBatch:
    with open(path) as fh:
        header = json.loads(fh.readline())
        n, h = header["episodes"], header["horizon"]
        actions = np.empty((n, h), dtype=np.int32)
        observations = np.empty((n, h), dtype=np.int32)
        rewards = np.empty((n, h), dtype=float)
        for i in range(n):
            parts = fh.readline().split()
            row = np.array(parts, dtype=object).reshape(h, 3)
            actions[i] = row[:, 0].astype(np.int32)
            observations[i] = row[:, 1].astype(np.int32)
            rewards[i] = row[:, 2].astype(float)
    return EpisodeBatch(
        actions, observations, rewards,
        num_actions=header["actions"], num_observations=header["observations"],
        reward_max=header["reward_max"], exploration=np.array(header["exploration"]),
        seed_plan=header.get("seed_plan", ""),
    )


def _sample_categorical(rng, prob_rows):
    """Draw one index per row of a (N, K) probability array."""
    cum = np.cumsum(prob_rows, axis=1)
    u = rng.random(prob_rows.shape[0])
    idx = (u[:, None] > cum).sum(axis=1)
    return np.minimum(idx, prob_rows.shape[1] - 1).astype(np.int64)


def _simulate_chunk(model: TabularPOMDP, n, mixture, rng):
    h = model.horizon
    actions = np.empty((n, h), dtype=np.int32)
    observations = np.empty((n, h), dtype=np.int32)
    rewards = np.empty((n, h), dtype=float)
    states = _sample_categorical(rng, np.broadcast_to(model.initial_belief,
                                                      (n, model.num_states)))
    obs_cols = model.observation_matrix.T        # (S, Z)
    for t in range(h):
        acts = _sample_categorical(rng, np.broadcast_to(mixture,
                                                        (n, model.num_actions)))
        actions[:, t] = acts
        rewards[:, t] = model.rewards[acts, states]
        states = _sample_categorical(rng, model.transitions[acts, :, states])
        observations[:, t] = _sample_categorical(rng, obs_cols[states])
    return actions, observations, rewards


def collect_exploration(model: TabularPOMDP, episodes: int, seed,
                        exploration=None, chunk_size=DEFAULT_CHUNK_SIZE,
                        episode_offset: int = 0) -> EpisodeBatch:
    """Run the memoryless exploration policy for ``episodes`` episodes.

    Episodes are produced in fixed-size chunks; chunk ``j`` (a global
    index, counting from episode 0) is always generated in full from its
    own child RNG stream of ``seed`` and then sliced.  A run over
    ``[offset, offset + n)`` therefore yields exactly the same episodes
    as the corresponding slice of one big run, so batches can be fanned
    out across workers in arbitrary splits and merged deterministically.
    """
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    mixture = check_exploration_mixture(exploration, model.num_actions)
    first = episode_offset // chunk_size
    last = (episode_offset + episodes - 1) // chunk_size
    parts = []
    for chunk in range(first, last + 1):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
        arrays = _simulate_chunk(model, chunk_size, mixture, rng)
        lo = max(episode_offset - chunk * chunk_size, 0)
        hi = min(episode_offset + episodes - chunk * chunk_size, chunk_size)
        parts.append(tuple(a[lo:hi] for a in arrays))
    actions, observations, rewards = (np.concatenate(cols) for cols in zip(*parts))
    return EpisodeBatch(
        actions=actions, observations=observations, rewards=rewards,
        num_actions=model.num_actions, num_observations=model.num_observations,
        reward_max=model.reward_max, exploration=mixture,
        seed_plan=f"seed={seed}/chunk={chunk_size}/off={episode_offset}/n={episodes}",
    )


@dataclass
class ViewMoments:
    """Per-action first, second and third order view moments.

    ``count`` is the number of contributing triples (``inf`` marks exact
    population moments).  ``m1`` is the middle-view distribution;
    ``pair_12``, ``pair_13``, ``pair_23`` the pairwise cross moments over
    (past, middle, future); ``triple`` the third-order tensor; and
    ``reward_cross[z]`` the mean of (middle-step reward) * 1{middle view
    = z}.
    """

    action: int
    count: float
    m1: np.ndarray
    pair_12: np.ndarray
    pair_13: np.ndarray
    pair_23: np.ndarray
    triple: np.ndarray
    reward_cross: np.ndarray

    @property
    def num_observations(self) -> int:
        return self.m1.size

    def merge(self, other: "ViewMoments") -> "ViewMoments":
        """Count-weighted average; associative and commutative."""
        if self.action != other.action:
            raise ValueError("cannot merge moments for different actions")
        if self.num_observations != other.num_observations:
            raise ValueError("cannot merge moments with different ranges")
        if np.isinf(self.count) and np.isinf(other.count):
            wa = wb = 0.5
            total = INFINITE_COUNT
        else:
            total = self.count + other.count
            wa, wb = self.count / total, other.count / total
        mix = lambda x, y: wa * x + wb * y
        return ViewMoments(
            action=self.action, count=total,
            m1=mix(self.m1, other.m1),
            pair_12=mix(self.pair_12, other.pair_12),
            pair_13=mix(self.pair_13, other.pair_13),
            pair_23=mix(self.pair_23, other.pair_23),
            triple=mix(self.triple, other.triple),
            reward_cross=mix(self.reward_cross, other.reward_cross),
        )

    def to_dict(self) -> dict:
        return {
            "action": self.action,
            "count": self.count if np.isfinite(self.count) else "inf",
            "m1": self.m1.tolist(),
            "pair_12": self.pair_12.tolist(),
            "pair_13": self.pair_13.tolist(),
            "pair_23": self.pair_23.tolist(),
            "triple": self.triple.tolist(),
            "reward_cross": self.reward_cross.tolist(),
        }


def save_moments(moments_by_action, path) -> None:
    doc = {str(a): m.to_dict() for a, m in sorted(moments_by_action.items())}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def empirical_moments(batch: EpisodeBatch, action: int) -> ViewMoments:
    """Plain averages over all triples whose middle action is ``action``."""
    a = check_index(action, batch.num_actions, "action")
    if batch.horizon < 3:
        raise StructuralModelError("moment construction needs horizon >= 3")
    z = batch.num_observations
    # Anchor steps tau >= 3 (1-based) where the action was taken; 0-based
    # column index i = tau - 1 ranges over [2, H).
    ep, i = np.nonzero(batch.actions[:, 2:] == a)
    i = i + 2
    n = ep.size
    if n == 0:
        raise InsufficientDataError(a)
    v1 = batch.observations[ep, i - 2].astype(np.int64)
    v2 = batch.observations[ep, i - 1].astype(np.int64)
    v3 = batch.observations[ep, i].astype(np.int64)
    r = batch.rewards[ep, i]
    triple = np.bincount(
        (v1 * z + v2) * z + v3, minlength=z * z * z
    ).reshape(z, z, z).astype(float) / n
    reward_cross = np.bincount(v2, weights=r, minlength=z) / n
    return ViewMoments(
        action=a, count=float(n),
        m1=triple.sum(axis=(0, 2)),
        pair_12=triple.sum(axis=2),
        pair_13=triple.sum(axis=1),
        pair_23=triple.sum(axis=0),
        triple=triple,
        reward_cross=reward_cross,
    )


def first_observation_distribution(batch: EpisodeBatch) -> np.ndarray:
    """Empirical distribution of the first recorded observation."""
    return np.bincount(batch.observations[:, 0],
                       minlength=batch.num_observations) / batch.total_count


def population_first_observation(model: TabularPOMDP, exploration=None) -> np.ndarray:
    """Exact law of the first observation: O @ T_bar @ b1."""
    return model.observation_matrix @ model.mean_transition(exploration) \
        @ model.initial_belief


def _pooled_middle_occupancy(model: TabularPOMDP, exploration=None):
    """Occupancy of the anchor (middle) state pooled over tau in {3..H},
    and of the preceding state pooled over the same anchors."""
    profile = occupancy_profile(model, exploration, steps=model.horizon)
    middle = profile[2:model.horizon].mean(axis=0)       # s_tau, tau = 3..H
    previous = profile[1:model.horizon - 1].mean(axis=0)  # s_{tau-1}
    return middle, previous, profile


def view_conditionals(model: TabularPOMDP, exploration=None, action: int = 0):
    """Explicit multi-view conditionals (C1, C2, C3) and middle weights.

    Built directly from the model so tests can verify the factorization
    ``pair_ij = Ci @ diag(w) @ Cj.T`` of the population moments.
    """
    a = check_index(action, model.num_actions, "action")
    t_bar = model.mean_transition(exploration)
    middle, previous, _ = _pooled_middle_occupancy(model, exploration)
    o = model.observation_matrix
    # Pooled backward map: P(prev state | middle state), occupancy weighted.
    joint = t_bar * previous[None, :]            # [middle, prev]
    backward = joint.T / np.clip(middle[None, :], 1e-300, None)
    c1 = o @ backward
    c2 = o
    c3 = o @ model.transitions[a]
    return c1, c2, c3, middle


def population_moments(model: TabularPOMDP, exploration=None) -> dict:
    """Exact view moments per action, via the length-3 latent path sum.

    For each anchor step the joint law of the three emitting states is
    ``nu_{tau-1}(sp) * T_bar[sm, sp] * T_a[sf, sm]`` (the previous action
    marginalized under the exploration mixture, the middle action
    conditioned); observation emissions then map state paths to view
    cells.  Anchors are pooled uniformly, matching the empirical
    construction in expectation.  ``count`` is set to infinity.
    """
    if model.horizon < 3:
        raise StructuralModelError("moment construction needs horizon >= 3")
    mixture = check_exploration_mixture(exploration, model.num_actions)
    t_bar = model.mean_transition(mixture)
    _, _, profile = _pooled_middle_occupancy(model, mixture)
    o = model.observation_matrix
    anchors = range(3, model.horizon + 1)
    out = {}
    for a in range(model.num_actions):
        t_a = model.transitions[a]
        path = np.zeros((model.num_states,) * 3)   # [sp, sm, sf]
        for tau in anchors:
            nu_prev = profile[tau - 2]             # distribution of s_{tau-1}
            path += np.einsum("p,mp,fm->pmf", nu_prev, t_bar, t_a)
        path /= len(anchors)
        triple = np.einsum("pmf,ip,jm,kf->ijk", path, o, o, o)
        middle = path.sum(axis=(0, 2))
        reward_cross = o @ (middle * model.rewards[a])
        out[a] = ViewMoments(
            action=a, count=INFINITE_COUNT,
            m1=triple.sum(axis=(0, 2)),
            pair_12=triple.sum(axis=2),
            pair_13=triple.sum(axis=1),
            pair_23=triple.sum(axis=0),
            triple=triple,
            reward_cross=reward_cross,
        )
    return out
