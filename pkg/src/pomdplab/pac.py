"""Sample-complexity calculator and the simulation-lemma value bound.

``required_episodes`` instantiates the explore-then-exploit episode
budget as one explicit formula skeleton,

    N = C * S^eS * A^eA * Z^eZ * H^eH * Rmax^eR * log(1/delta)
        / (eps^2 * sigma_O^eSO * sigma_T^eST * gap^eG * occupancy^eOcc)

with every exponent read from :data:`BOUND_EXPONENTS` below and the
leading constant from multiplicative overrides.  The exponents shipped
here are PLACEHOLDERS chosen for the right qualitative shape (monotone
increasing in sizes, decreasing in accuracy targets and conditioning
margins); pinning down sharper values is a one-line edit of the table.

``simulation_gap_bound`` is a deliberately safe bound on how much a
fixed policy's exact value can move when model parameters are perturbed:
rewards contribute linearly in H, dynamics and observation errors
quadratically, each scaled by the per-column L1 error.  Its soundness is
property-tested against exhaustive policy evaluation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import InvalidConfigError

#: Formula table for ``required_episodes``.  Exponents are placeholders
#: (see module docstring); edit here to tighten the bound.
BOUND_EXPONENTS = {
    "states": 4,
    "actions": 2,
    "observations": 1,
    "horizon": 4,
    "reward_max": 2,
    "epsilon": 2,            # denominator
    "sigma_min_O": 4,        # denominator
    "sigma_min_T": 2,        # denominator
    "separation_gap": 2,     # denominator
    "occupancy": 2,          # denominator
}


@dataclass
class PacConfig:
    """Inputs to the episode-budget formula."""

    epsilon: float
    delta: float
    num_states: int
    num_actions: int
    num_observations: int
    horizon: int
    reward_max: float
    sigma_min_O: float
    sigma_min_T: float
    separation_gap: float
    occupancy: float
    constant_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidConfigError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise InvalidConfigError("delta must be in (0, 1)")
        for name in ("num_states", "num_actions", "num_observations",
                     "horizon"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be at least 1")
        for name in ("reward_max", "sigma_min_O", "sigma_min_T",
                     "separation_gap", "occupancy"):
            if not getattr(self, name) > 0:
                raise InvalidConfigError(f"{name} must be positive")

    @classmethod
    def from_model(cls, model, report, epsilon, delta, **overrides):
        """Build a config from a model and its validation report.

        Stats at or below the report's floor are numerically degenerate;
        the episode bound is meaningless there, so they are rejected.
        """
        stats = (report.sigma_min_O, float(min(report.per_action_sigma_min_T)),
                 report.observation_separation_gap, report.min_state_occupancy)
        if min(stats) <= report.floor:
            raise InvalidConfigError(
                "model statistics are below the validation floor "
                f"({report.failures}); the episode bound does not apply")
        return cls(
            epsilon=epsilon, delta=delta,
            num_states=model.num_states, num_actions=model.num_actions,
            num_observations=model.num_observations, horizon=model.horizon,
            reward_max=model.reward_max,
            sigma_min_O=report.sigma_min_O,
            sigma_min_T=float(min(report.per_action_sigma_min_T)),
            separation_gap=report.observation_separation_gap,
            occupancy=report.min_state_occupancy,
            **overrides,
        )


def episode_bound_value(config: PacConfig) -> float:
    """The bound skeleton evaluated exactly, before ceiling rounding."""
    e = BOUND_EXPONENTS
    constant = 1.0
    for value in config.constant_overrides.values():
        constant *= value
    numerator = (
        constant
        * config.num_states ** e["states"]
        * config.num_actions ** e["actions"]
        * config.num_observations ** e["observations"]
        * config.horizon ** e["horizon"]
        * config.reward_max ** e["reward_max"]
        * math.log(1.0 / config.delta)
    )
    denominator = (
        config.epsilon ** e["epsilon"]
        * config.sigma_min_O ** e["sigma_min_O"]
        * config.sigma_min_T ** e["sigma_min_T"]
        * config.separation_gap ** e["separation_gap"]
        * config.occupancy ** e["occupancy"]
    )
    return numerator / denominator


def required_episodes(config: PacConfig) -> int:
    """Exploration episode budget, ceiling-rounded."""
    return math.ceil(episode_bound_value(config))


def simulation_gap_bound(eps_T: float, eps_O: float, eps_R: float,
                         eps_b: float, horizon: int, reward_max: float) -> float:
    """Value-error bound for a fixed policy across two nearby models.

    ``eps_T`` and ``eps_O`` are maximum L1 column errors of the
    transition and observation matrices, ``eps_R`` the maximum absolute
    reward error, ``eps_b`` the L1 initial-belief error.  For any two
    models within these distances (rewards in [0, reward_max]), and any
    fixed history-based policy evaluated exactly on both,

        |V - V_hat| <= H*eps_R + Rmax*H*eps_b + Rmax*H*(H+1)/2*(eps_T + eps_O)
    """
    for name, v in (("eps_T", eps_T), ("eps_O", eps_O), ("eps_R", eps_R),
                    ("eps_b", eps_b)):
        if v < 0:
            raise InvalidConfigError(f"{name} must be nonnegative")
    h = float(horizon)
    return (h * eps_R
            + reward_max * h * eps_b
            + reward_max * h * (h + 1) / 2.0 * (eps_T + eps_O))


@dataclass
class RunLog:
    """Phase accounting for one explore-then-exploit run."""

    exploration_episodes: int
    exploitation_episodes: int
    exploitation_value: float
    oracle_value: float
    epsilon: float
    required: Optional[int] = None


@dataclass
class AccountingReport:
    """Episodes on which near-optimality is not guaranteed or achieved."""

    flagged_exploration: int
    flagged_exploitation: int
    exploitation_gap: float
    within_target: bool
    required: Optional[int]
    exploration_within_budget: Optional[bool]

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def pac_episode_accounting(log: RunLog) -> AccountingReport:
    """Flag the episodes that count against the PAC guarantee.

    Every exploration episode is flagged by definition.  Exploitation
    episodes are flagged only if the measured sub-optimality exceeds the
    target epsilon.  When a ``required`` budget is known the exploration
    count is also compared against it.
    """
    gap = log.oracle_value - log.exploitation_value
    within = gap <= log.epsilon
    return AccountingReport(
        flagged_exploration=log.exploration_episodes,
        flagged_exploitation=0 if within else log.exploitation_episodes,
        exploitation_gap=float(gap),
        within_target=bool(within),
        required=log.required,
        exploration_within_budget=(
            None if log.required is None
            else log.exploration_episodes >= log.required),
    )
