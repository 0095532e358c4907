"""Tabular episodic POMDP model, validity checks, belief tracking, simulator.

Conventions used throughout the package:

* ``transitions[a][s_next, s]`` is the probability of moving to ``s_next``
  when taking action ``a`` in state ``s`` (column-stochastic).
* ``observation_matrix[z, s]`` is the probability of emitting ``z`` from
  state ``s`` (column-stochastic, action-independent).
* The observation recorded at step ``t`` is emitted by the state reached
  *after* the step-``t`` transition.  An episode therefore looks like

      s_1 ~ b1;  for t = 1..H:  a_t, r_t = R[a_t][s_t],
                                 s_{t+1} ~ T[a_t][:, s_t],
                                 z_t ~ O[:, s_{t+1}]

  so the first recorded observation already reflects one transition.
  Every module (moment construction, planning, belief tracking) honors
  this single convention.
* Rewards are deterministic given (state, action) and lie in
  ``[0, reward_max]``.

Beliefs are plain probability vectors over states; use
:func:`pomdplab.validation.check_probability_vector` to validate one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ImpossibleObservationError, StructuralModelError
from .validation import (
    as_rng,
    check_exploration_mixture,
    check_index,
    check_probability_vector,
    check_stochastic_matrix,
)

MODEL_FILE_FIELDS = ("states", "actions", "observations", "horizon",
                     "reward_max", "b1", "T", "O", "R")

VALIDATION_FLOOR = 1e-8


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass
class TabularPOMDP:
    """Ground-truth tabular POMDP.

    Parameters
    ----------
    transitions : array, shape (A, S, S)
        Per-action column-stochastic transition matrices.
    observation_matrix : array, shape (Z, S)
        Column-stochastic observation matrix.
    rewards : array, shape (A, S)
        Per-action reward of taking the action in each state, in
        ``[0, reward_max]``.
    initial_belief : array, shape (S,)
        Distribution of the latent state at the start of an episode.
    horizon : int
        Steps per episode.  Moment construction needs at least 3 so an
        episode contains a full view triple; shorter horizons are still
        constructible for planning oracles.
    reward_max : float
        Upper bound on rewards.

    Arrays are validated, renormalized to tight stochasticity and frozen
    (marked read-only) on construction.
    """

    transitions: np.ndarray
    observation_matrix: np.ndarray
    rewards: np.ndarray
    initial_belief: np.ndarray
    horizon: int
    reward_max: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.transitions, dtype=float)
        if t.ndim != 3 or t.shape[1] != t.shape[2]:
            raise StructuralModelError(f"transitions must be (A, S, S), got {t.shape}")
        num_actions, num_states = t.shape[0], t.shape[1]
        stacked = np.stack([
            check_stochastic_matrix(t[a], f"T[{a}]") for a in range(num_actions)
        ])
        o = check_stochastic_matrix(self.observation_matrix, "O")
        if o.shape[1] != num_states:
            raise StructuralModelError(
                f"O has {o.shape[1]} state columns, expected {num_states}"
            )
        r = np.asarray(self.rewards, dtype=float)
        if r.shape != (num_actions, num_states):
            raise StructuralModelError(
                f"rewards must be (A, S) = {(num_actions, num_states)}, got {r.shape}"
            )
        if not np.all(np.isfinite(r)):
            raise StructuralModelError("rewards contain non-finite entries")
        if self.reward_max <= 0:
            raise StructuralModelError("reward_max must be positive")
        if r.min() < -1e-12 or r.max() > self.reward_max + 1e-12:
            raise StructuralModelError(
                f"rewards must lie in [0, {self.reward_max}], got "
                f"[{r.min():.6g}, {r.max():.6g}]"
            )
        b1 = check_probability_vector(self.initial_belief, "b1")
        if b1.size != num_states:
            raise StructuralModelError(
                f"b1 has length {b1.size}, expected {num_states}"
            )
        if int(self.horizon) < 1:
            raise StructuralModelError("horizon must be at least 1")
        self.transitions = _freeze(stacked)
        self.observation_matrix = _freeze(o)
        self.rewards = _freeze(np.clip(r, 0.0, self.reward_max))
        self.initial_belief = _freeze(b1)
        self.horizon = int(self.horizon)
        self.reward_max = float(self.reward_max)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_observations(self) -> int:
        return self.observation_matrix.shape[0]

    def mean_transition(self, exploration=None) -> np.ndarray:
        """Exploration-mixture-weighted average transition matrix."""
        mix = check_exploration_mixture(exploration, self.num_actions)
        return np.einsum("a,aij->ij", mix, self.transitions)

    def permute_states(self, perm) -> "TabularPOMDP":
        """Relabel latent states: new label ``i`` is old label ``perm[i]``."""
        perm = np.asarray(perm, dtype=int)
        if sorted(perm.tolist()) != list(range(self.num_states)):
            raise ValueError("perm must be a permutation of the state labels")
        t = self.transitions[:, perm][:, :, perm]
        return TabularPOMDP(
            transitions=t,
            observation_matrix=self.observation_matrix[:, perm],
            rewards=self.rewards[:, perm],
            initial_belief=self.initial_belief[perm],
            horizon=self.horizon,
            reward_max=self.reward_max,
        )

    def to_dict(self) -> dict:
        return {
            "states": self.num_states,
            "actions": self.num_actions,
            "observations": self.num_observations,
            "horizon": self.horizon,
            "reward_max": self.reward_max,
            "b1": self.initial_belief.tolist(),
            "T": [m.tolist() for m in self.transitions],
            "O": self.observation_matrix.tolist(),
            "R": [r.tolist() for r in self.rewards],
        }


@dataclass
class Episode:
    """One simulated episode of (action, observation, reward) steps."""

    actions: np.ndarray
    observations: np.ndarray
    rewards: np.ndarray
    seed_tag: str = ""

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int32)
        self.observations = np.asarray(self.observations, dtype=np.int32)
        self.rewards = np.asarray(self.rewards, dtype=float)
        if not (self.actions.shape == self.observations.shape == self.rewards.shape):
            raise StructuralModelError("episode fields must share one length")

    def __len__(self) -> int:
        return self.actions.size

    def steps(self):
        """Iterate over (action, observation, reward) tuples."""
        return zip(self.actions.tolist(), self.observations.tolist(),
                   self.rewards.tolist())


@dataclass
class ValidationReport:
    """Executable form of the restricted-class conditions.

    ``passed`` requires the smallest singular value of O, of every T_a,
    the observation separation gap, and the minimum per-step state
    occupancy under the exploration mixture to all exceed ``floor``.
    """

    sigma_min_O: float
    per_action_sigma_min_T: np.ndarray
    observation_separation_gap: float
    min_state_occupancy: float
    passed: bool
    failures: list = field(default_factory=list)
    floor: float = VALIDATION_FLOOR

    def to_dict(self) -> dict:
        return {
            "sigma_min_O": self.sigma_min_O,
            "per_action_sigma_min_T": np.asarray(self.per_action_sigma_min_T).tolist(),
            "observation_separation_gap": self.observation_separation_gap,
            "min_state_occupancy": self.min_state_occupancy,
            "passed": self.passed,
            "failures": list(self.failures),
            "floor": self.floor,
        }


def separation_gap(observation_matrix: np.ndarray) -> float:
    """Minimum L1 distance between pairs of observation columns.

    For a single-state model there is no pair to separate; the gap is
    reported as 2.0 (the largest possible L1 distance) so the condition
    is vacuously satisfied.
    """
    o = np.asarray(observation_matrix, dtype=float)
    n = o.shape[1]
    if n < 2:
        return 2.0
    diff = np.abs(o[:, :, None] - o[:, None, :]).sum(axis=0)
    return float(diff[np.triu_indices(n, k=1)].min())


def occupancy_profile(model: TabularPOMDP, exploration=None, steps=None) -> np.ndarray:
    """Per-step latent state distribution under a memoryless exploration mixture.

    Row ``t`` (0-based) is the distribution of the state at step ``t+1``,
    i.e. the mixture-averaged transition applied ``t`` times to ``b1``.
    """
    steps = model.horizon if steps is None else int(steps)
    t_bar = model.mean_transition(exploration)
    profile = np.empty((steps, model.num_states))
    dist = model.initial_belief.copy()
    for t in range(steps):
        profile[t] = dist
        dist = t_bar @ dist
    return profile


def validate(model: TabularPOMDP, exploration=None, floor=VALIDATION_FLOOR) -> ValidationReport:
    """Check the restricted-class conditions on ``model``.

    Singular values come from dense SVDs; occupancy from forward
    propagation of ``b1`` under the exploration mixture for H steps.
    A structurally malformed model raises before any report is built
    (that happens in the ``TabularPOMDP`` constructor), so reaching a
    failed report always means a well-formed model outside the class.
    """
    sigma_o = float(np.linalg.svd(model.observation_matrix, compute_uv=False).min())
    sigma_t = np.array([
        np.linalg.svd(model.transitions[a], compute_uv=False).min()
        for a in range(model.num_actions)
    ])
    gap = separation_gap(model.observation_matrix)
    occupancy = float(occupancy_profile(model, exploration).min())

    failures = []
    if sigma_o <= floor:
        failures.append("observation_rank")
    for a in np.flatnonzero(sigma_t <= floor):
        failures.append(f"transition_rank[a={a}]")
    if gap <= floor:
        failures.append("observation_separation")
    if occupancy <= floor:
        failures.append("state_occupancy")

    return ValidationReport(
        sigma_min_O=sigma_o,
        per_action_sigma_min_T=sigma_t,
        observation_separation_gap=gap,
        min_state_occupancy=occupancy,
        passed=not failures,
        failures=failures,
        floor=floor,
    )


def belief_update(model: TabularPOMDP, belief, action, observation) -> np.ndarray:
    """Exact Bayes filter step: normalize(diag(O[z]) @ T_a @ b)."""
    belief = np.asarray(belief, dtype=float)
    a = check_index(action, model.num_actions, "action")
    z = check_index(observation, model.num_observations, "observation")
    predicted = model.transitions[a] @ belief
    posterior = model.observation_matrix[z] * predicted
    total = posterior.sum()
    if total <= 0.0:
        raise ImpossibleObservationError(belief, a, z)
    return posterior / total


class UniformRandomPolicy:
    """Memoryless exploration policy drawing actions from a fixed mixture."""

    def __init__(self, num_actions: int, mixture=None):
        self.num_actions = num_actions
        self.mixture = check_exploration_mixture(mixture, num_actions)

    def action(self, t, actions, observations, rng) -> int:
        return int(rng.choice(self.num_actions, p=self.mixture))


class FixedActionPolicy:
    """Plays a predetermined action sequence; handy for tests."""

    def __init__(self, sequence):
        self.sequence = [int(a) for a in sequence]

    def action(self, t, actions, observations, rng) -> int:
        return self.sequence[t]


def simulate_episode(model: TabularPOMDP, policy, rng, seed_tag="") -> Episode:
    """Run one episode of ``model.horizon`` steps under ``policy``.

    ``policy`` must expose ``action(t, actions_so_far, observations_so_far,
    rng) -> int``.  Sampling is deterministic given the state of ``rng``.
    """
    rng = as_rng(rng)
    h = model.horizon
    actions = np.empty(h, dtype=np.int32)
    observations = np.empty(h, dtype=np.int32)
    rewards = np.empty(h, dtype=float)
    state = int(rng.choice(model.num_states, p=model.initial_belief))
    for t in range(h):
        a = check_index(
            policy.action(t, actions[:t], observations[:t], rng),
            model.num_actions, "policy action",
        )
        actions[t] = a
        rewards[t] = model.rewards[a, state]
        state = int(rng.choice(model.num_states, p=model.transitions[a][:, state]))
        observations[t] = int(
            rng.choice(model.num_observations, p=model.observation_matrix[:, state])
        )
    return Episode(actions, observations, rewards, seed_tag=seed_tag)


# ---------------------------------------------------------------------------
# Model file format: a self-describing JSON document with a strict schema.
# ---------------------------------------------------------------------------

def save_model(model: TabularPOMDP, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def model_from_dict(doc: dict) -> TabularPOMDP:
    unknown = set(doc) - set(MODEL_FILE_FIELDS)
    if unknown:
        raise StructuralModelError(f"unknown model fields: {sorted(unknown)}")
    missing = set(MODEL_FILE_FIELDS) - set(doc)
    if missing:
        raise StructuralModelError(f"missing model fields: {sorted(missing)}")
    t = np.asarray(doc["T"], dtype=float)
    o = np.asarray(doc["O"], dtype=float)
    r = np.asarray(doc["R"], dtype=float)
    model = TabularPOMDP(
        transitions=t,
        observation_matrix=o,
        rewards=r,
        initial_belief=np.asarray(doc["b1"], dtype=float),
        horizon=int(doc["horizon"]),
        reward_max=float(doc["reward_max"]),
    )
    declared = (doc["states"], doc["actions"], doc["observations"])
    actual = (model.num_states, model.num_actions, model.num_observations)
    if tuple(declared) != actual:
        raise StructuralModelError(
            f"declared sizes {declared} disagree with arrays {actual}"
        )
    return model


def load_model(path) -> TabularPOMDP:
    return model_from_dict(json.loads(Path(path).read_text()))
