"""pomdplab: spectral estimation and planning lab for tabular episodic POMDPs.

The package learns the parameters of a small POMDP from exploration
episodes by the method of moments (multi-view moments per action, tensor
power decomposition, cross-action latent-state alignment), plans exactly
on the estimate with finite-horizon alpha-vector value iteration, and
quantifies the explore-then-exploit tradeoff with episode-budget and
simulation-gap calculators.  Brute-force oracles for every nontrivial
piece live alongside the fast paths.
"""

from .core import (
    Episode,
    TabularPOMDP,
    ValidationReport,
    belief_update,
    load_model,
    occupancy_profile,
    save_model,
    simulate_episode,
    validate,
)
from .domains import DomainSpec, make_random, make_slot_filling, make_tiger
from .moments import (
    EpisodeBatch,
    ViewMoments,
    collect_exploration,
    empirical_moments,
    population_moments,
)
from .spectral import (
    SpectralEstimate,
    project_simplex,
    recover_model,
    symmetrize,
    tensor_power,
    whiten,
)
from .alignment import AlignmentResult, align, apply_alignment
from .planner import (
    AlphaVectorPolicy,
    PolicyValue,
    brute_force_optimal,
    evaluate_policy,
    execute_policy,
    solve_belief_grid,
    solve_finite_horizon,
)
from .pac import (
    PacConfig,
    RunLog,
    pac_episode_accounting,
    required_episodes,
    simulation_gap_bound,
)
from .estimator import SpectralPOMDPEstimator, estimate_from_batch, estimate_pomdp
from .harness import ExperimentConfig, run_experiment, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult", "AlphaVectorPolicy", "DomainSpec", "Episode",
    "EpisodeBatch", "ExperimentConfig", "PacConfig", "PolicyValue",
    "RunLog", "SpectralEstimate", "SpectralPOMDPEstimator", "TabularPOMDP",
    "ValidationReport", "ViewMoments", "align", "apply_alignment",
    "belief_update", "brute_force_optimal", "collect_exploration",
    "empirical_moments", "estimate_from_batch", "estimate_pomdp",
    "evaluate_policy", "execute_policy", "load_model", "make_random",
    "make_slot_filling", "make_tiger", "occupancy_profile",
    "pac_episode_accounting", "population_moments", "project_simplex",
    "recover_model", "required_episodes", "run_experiment", "run_pipeline",
    "save_model", "simulate_episode", "simulation_gap_bound",
    "solve_belief_grid", "solve_finite_horizon", "symmetrize",
    "tensor_power", "validate", "whiten",
]
