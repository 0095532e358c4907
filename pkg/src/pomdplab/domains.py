"""Synthetic ground-truth POMDPs: tiger, slot filling, seeded random models.

The tiger and slot-filling constructions are information-gathering
domains: some actions only gather evidence about a hidden quantity while
others cash it in.  Both contain a "reset"-style action whose transition
matrix is rank deficient, so they intentionally fail the strict
transition-rank condition of :func:`pomdplab.core.validate`; the
estimation pipeline handles such actions through its pair-moment
recovery route.  ``make_random`` regenerates until the full validation
report passes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import TabularPOMDP, validate
from .errors import GenerationFailedError
from .validation import as_rng

RANDOM_RETRY_BUDGET = 100


@dataclass
class DomainSpec:
    """Parameters for the synthetic generators.

    ``kind`` selects the generator.  Size fields apply to ``random``;
    ``accuracy`` to ``tiger`` (listen accuracy) and ``random``
    (observation anchor weight); ``noise`` to ``slot_filling``;
    ``transition_mixing`` blends random transition columns toward
    uniform to keep them well conditioned.
    """

    kind: str = "random"
    states: int = 3
    actions: int = 2
    observations: Optional[int] = None
    horizon: int = 3
    accuracy: float = 0.8
    noise: float = 0.1
    slots: int = 2
    transition_mixing: float = 0.2
    seed: int = 0

    def build(self) -> TabularPOMDP:
        if self.kind == "tiger":
            return make_tiger(self.accuracy, self.horizon)
        if self.kind == "slot_filling":
            return make_slot_filling(self.slots, self.noise, self.horizon)
        if self.kind == "random":
            return make_random(self)
        raise ValueError(f"unknown domain kind {self.kind!r}")


def make_tiger(listen_accuracy: float, horizon: int = 3) -> TabularPOMDP:
    """Two-door tiger with rewards rescaled into [0, 1].

    States: tiger-left, tiger-right.  Actions: listen, open-left,
    open-right.  Listening keeps the state and hears the correct side
    with probability ``listen_accuracy``; opening a door resets the
    state uniformly (a fresh tiger placement).  The classic rewards
    (listen -1, tiger -100, treasure +10) are affinely mapped to [0, 1],
    which lands listen at 0.9, the tiger at 0 and the treasure at 1.
    """
    if not 0.5 < listen_accuracy < 1.0:
        raise ValueError("listen_accuracy must be in (0.5, 1)")
    p = float(listen_accuracy)
    identity = np.eye(2)
    reset = np.full((2, 2), 0.5)
    observation = np.array([[p, 1.0 - p],
                            [1.0 - p, p]])
    raw = np.array([
        [-1.0, -1.0],     # listen
        [-100.0, 10.0],   # open-left: tiger behind left, treasure otherwise
        [10.0, -100.0],   # open-right
    ])
    rewards = (raw - raw.min()) / (raw.max() - raw.min())
    return TabularPOMDP(
        transitions=np.stack([identity, reset, reset]),
        observation_matrix=observation,
        rewards=rewards,
        initial_belief=np.array([0.5, 0.5]),
        horizon=horizon,
        reward_max=1.0,
    )


def make_slot_filling(slots: int, noise: float, horizon: int) -> TabularPOMDP:
    """Dialogue slot filling: query a fixed hidden intent, then commit.

    States are the ``slots`` user intents plus an absorbing "done"
    state.  The query action never moves the state (T = identity) and
    commit actions move everything to done, so a commit can pay at most
    once per episode.  Observations mirror the states; intent columns
    are corrupted by ``noise`` spread uniformly over the intent symbols.
    Committing to the true intent pays ``reward_max``.
    """
    if slots < 2:
        raise ValueError("slots must be at least 2")
    if not 0.0 <= noise < 1.0:
        raise ValueError("noise must be in [0, 1)")
    n = slots + 1           # intents + done
    done = slots
    query = np.eye(n)
    commits = []
    for i in range(slots):
        t = np.zeros((n, n))
        t[done, :] = 1.0
        commits.append(t)
    observation = np.eye(n)
    observation[:slots, :slots] = (
        (1.0 - noise) * np.eye(slots) + noise / slots * np.ones((slots, slots))
    )
    rewards = np.zeros((1 + slots, n))
    for i in range(slots):
        rewards[1 + i, i] = 1.0
    b1 = np.zeros(n)
    b1[:slots] = 1.0 / slots
    return TabularPOMDP(
        transitions=np.stack([query, *commits]),
        observation_matrix=observation,
        rewards=rewards,
        initial_belief=b1,
        horizon=horizon,
        reward_max=1.0,
    )


def _random_stochastic(rng, rows, cols, mixing=0.0):
    cols_list = rng.dirichlet(np.ones(rows), size=cols).T
    if mixing > 0.0:
        cols_list = (1.0 - mixing) * cols_list + mixing / rows
    return cols_list


def make_random(spec: DomainSpec) -> TabularPOMDP:
    """Seeded random model, regenerated until validation passes.

    Observation columns anchor mass ``accuracy`` on a distinct symbol
    per state and spread the rest by a Dirichlet draw; transition
    columns are Dirichlet blended toward uniform by
    ``transition_mixing``.  Needs at least as many observations as
    states, otherwise the observation matrix cannot have full column
    rank and generation fails immediately.
    """
    num_obs = spec.observations if spec.observations is not None else spec.states
    if min(spec.states, spec.actions, num_obs) < 1:
        raise ValueError("sizes must be at least 1")
    if num_obs < spec.states:
        raise GenerationFailedError(
            0, {"observation_rank": "forced"},
            message=f"need observations >= states for identifiability "
                    f"({num_obs} < {spec.states})",
        )
    rng = as_rng(spec.seed)
    failure_counts = {}
    for _ in range(RANDOM_RETRY_BUDGET):
        transitions = np.stack([
            _random_stochastic(rng, spec.states, spec.states, spec.transition_mixing)
            for _ in range(spec.actions)
        ])
        observation = (1.0 - spec.accuracy) * _random_stochastic(rng, num_obs, spec.states)
        observation[:spec.states, :] += spec.accuracy * np.eye(spec.states)
        b1 = rng.dirichlet(np.ones(spec.states))
        model = TabularPOMDP(
            transitions=transitions,
            observation_matrix=observation,
            rewards=rng.random((spec.actions, spec.states)),
            initial_belief=b1,
            horizon=spec.horizon,
            reward_max=1.0,
        )
        report = validate(model)
        if report.passed:
            return model
        for name in report.failures:
            failure_counts[name] = failure_counts.get(name, 0) + 1
    raise GenerationFailedError(RANDOM_RETRY_BUDGET, failure_counts)
