"""End-to-end spectral estimation of a POMDP from exploration data.

``estimate_pomdp`` wires the per-action pieces together: tensor
decomposition for every action whose future view carries full rank,
latent-state alignment of those actions onto a common labeling, a merged
observation matrix, and a pair-moment recovery route for the remaining
actions (information-gathering domains routinely contain "reset" actions
whose rank-one transitions make the three-view decomposition impossible;
their transitions and rewards are still identified linearly once the
observation matrix is known).

``SpectralPOMDPEstimator`` wraps the same pipeline in a scikit-learn
style estimator so hyperparameters compose with ``get_params`` /
``set_params`` / ``clone``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import spectral
from .alignment import align, apply_alignment
from .errors import DecompositionFailedError, PomdpLabError
from .moments import (
    EpisodeBatch,
    empirical_moments,
    first_observation_distribution,
)
from .spectral import (
    SpectralEstimate,
    recover_model,
    solve_action_params,
    solve_initial_belief,
    symmetrize,
    tensor_power,
    truncated_pinv,
    whiten,
)
from .validation import as_rng, check_exploration_mixture

#: The future-view cross moment must carry a k-th singular value above
#: ``rank_gate_scale * sqrt(Z / N_a)`` (roughly the sampling noise level
#: of an N_a-triple moment matrix) for an action to be decomposed on its
#: own; otherwise it is deferred to the pair-moment route.
DEFAULT_RANK_GATE_SCALE = 2.0


def _rank_signal(moments, k):
    s = np.linalg.svd(moments.pair_13, compute_uv=False)
    sigma_k = float(s[k - 1]) if s.size >= k else 0.0
    return sigma_k, float(s[0]) if s.size else 0.0


def estimate_pomdp(moments_by_action: dict, num_states: int, first_obs,
                   exploration=None, reward_max: float = 1.0, rng=None,
                   n_restarts=spectral.DEFAULT_RESTARTS,
                   n_iterations=spectral.DEFAULT_ITERATIONS,
                   n_polish=spectral.DEFAULT_POLISH,
                   tpm_tol=spectral.DEFAULT_TPM_TOL,
                   eigenvalue_floor=spectral.EIGENVALUE_FLOOR,
                   rel_tol=spectral.PINV_REL_TOL,
                   rank_gate_scale=DEFAULT_RANK_GATE_SCALE) -> SpectralEstimate:
    """Estimate all POMDP parameters from per-action view moments.

    Parameters
    ----------
    moments_by_action : dict
        Action index -> :class:`~pomdplab.moments.ViewMoments`, one entry
        per action.
    num_states : int
        Latent dimension k, taken as known.
    first_obs : array, shape (Z,)
        Distribution of the first recorded observation, used to solve
        for the initial belief.
    exploration : array or None
        Action mixture the data was collected under (None = uniform).

    Returns
    -------
    SpectralEstimate covering every action, with the initial belief
    solved and per-action routing recorded in the diagnostics.
    """
    rng = as_rng(rng)
    k = int(num_states)
    actions = sorted(moments_by_action)
    mixture = check_exploration_mixture(exploration, len(actions))

    signals, gates = {}, {}
    for a in actions:
        m = moments_by_action[a]
        sigma_k, sigma_1 = _rank_signal(m, k)
        gate = 0.0 if np.isinf(m.count) else (
            rank_gate_scale * np.sqrt(m.num_observations / m.count))
        signals[a] = (sigma_k, sigma_1)
        gates[a] = gate

    candidates = [a for a in actions
                  if signals[a][0] > max(gates[a], rel_tol * signals[a][1])]
    forced = False
    if not candidates:
        best = max(actions, key=lambda a: signals[a][0])
        if signals[best][0] <= rel_tol * max(signals[best][1], 1e-300):
            raise DecompositionFailedError(
                "no action has a usable future view; cannot identify the "
                "observation matrix")
        candidates, forced = [best], True

    per_action, routes, failures = {}, {}, {}
    for a in candidates:
        m = moments_by_action[a]
        try:
            pair, triple = symmetrize(m, k, rel_tol=rel_tol)
            w = whiten(pair, k, floor=eigenvalue_floor)
            whitened = np.einsum("ijk,ip,jq,kr->pqr", triple, w, w, w)
            pairs = tensor_power(whitened, k, rng, n_restarts=n_restarts,
                                 n_iterations=n_iterations, n_polish=n_polish,
                                 tol=tpm_tol, eigenvalue_floor=eigenvalue_floor)
            per_action[a] = recover_model(m, pairs, w, k, reward_max,
                                          rel_tol=rel_tol)
            routes[a] = "decomposed" if not forced else "decomposed(forced)"
        except PomdpLabError as exc:
            failures[a] = f"{type(exc).__name__}: {exc}"
    if not per_action:
        raise DecompositionFailedError(
            f"every candidate action failed to decompose: {failures}")

    reference = max(per_action,
                    key=lambda a: (moments_by_action[a].count, -a))
    alignment = align({a: est.o_hat for a, est in per_action.items()},
                      reference=reference)
    merged = apply_alignment(per_action, alignment)

    # Under a memoryless exploration mixture the middle-state occupancy
    # does not depend on the conditioned action, so actions without a
    # decomposition of their own borrow the (always positive) weights
    # recovered by the decomposed ones.
    decomposed = sorted(merged.w_hat)
    weights = np.array([merged.counts[a] for a in decomposed])
    weights = np.ones_like(weights) if np.any(np.isinf(weights)) \
        else weights / weights.sum()
    shared_w = sum(wt * merged.w_hat[a] for wt, a in zip(weights, decomposed))
    for a in actions:
        if a in merged.t_hat:
            continue
        m = moments_by_action[a]
        t_a, r_a = solve_action_params(merged.o_hat, shared_w, m, reward_max,
                                       rel_tol=rel_tol)
        merged.t_hat[a] = t_a
        merged.r_hat[a] = r_a
        merged.w_hat[a] = shared_w
        merged.counts[a] = m.count
        routes[a] = "pair_fallback"

    merged.b1_hat = solve_initial_belief(merged, first_obs,
                                         exploration=mixture, rel_tol=rel_tol)
    merged.diagnostics["routes"] = routes
    merged.diagnostics["rank_signals"] = {
        a: {"sigma_k": signals[a][0], "gate": gates[a]} for a in actions}
    if failures:
        merged.diagnostics["decomposition_failures"] = failures
    return merged


def estimate_from_batch(batch: EpisodeBatch, num_states: int,
                        **kwargs) -> SpectralEstimate:
    """Convenience wrapper: empirical moments for every action, then
    :func:`estimate_pomdp`."""
    moments = {a: empirical_moments(batch, a) for a in range(batch.num_actions)}
    kwargs.setdefault("exploration", batch.exploration)
    kwargs.setdefault("reward_max", batch.reward_max)
    return estimate_pomdp(moments, num_states,
                          first_obs=first_observation_distribution(batch),
                          **kwargs)


class SpectralPOMDPEstimator(BaseEstimator):
    """Scikit-learn style wrapper around the spectral pipeline.

    Parameters
    ----------
    n_states : int
        Known latent dimension of the POMDP.
    reward_max : float or None
        Reward bound; None takes the bound recorded on the batch.
    n_restarts, n_iterations, n_polish, tpm_tol, eigenvalue_floor,
    pinv_rel_tol, rank_gate_scale
        Tensor power method and conditioning knobs, as in
        :func:`estimate_pomdp`.
    random_state : int or None
        Seed for the power-method restarts.

    Attributes
    ----------
    estimate_ : SpectralEstimate
        Full merged estimate.
    observation_matrix_, transitions_, rewards_, initial_belief_ : arrays
        Recovered parameters (transitions and rewards stacked over
        actions in index order).
    diagnostics_ : dict
        Routing, conditioning and alignment diagnostics.

    Examples
    --------
    >>> est = SpectralPOMDPEstimator(n_states=2, random_state=0)
    >>> est.fit(batch)                          # doctest: +SKIP
    >>> est.observation_matrix_.shape           # doctest: +SKIP
    (2, 2)
    """

    def __init__(self, n_states=2, reward_max=None,
                 n_restarts=spectral.DEFAULT_RESTARTS,
                 n_iterations=spectral.DEFAULT_ITERATIONS,
                 n_polish=spectral.DEFAULT_POLISH,
                 tpm_tol=spectral.DEFAULT_TPM_TOL,
                 eigenvalue_floor=spectral.EIGENVALUE_FLOOR,
                 pinv_rel_tol=spectral.PINV_REL_TOL,
                 rank_gate_scale=DEFAULT_RANK_GATE_SCALE,
                 random_state=None):
        self.n_states = n_states
        self.reward_max = reward_max
        self.n_restarts = n_restarts
        self.n_iterations = n_iterations
        self.n_polish = n_polish
        self.tpm_tol = tpm_tol
        self.eigenvalue_floor = eigenvalue_floor
        self.pinv_rel_tol = pinv_rel_tol
        self.rank_gate_scale = rank_gate_scale
        self.random_state = random_state

    def fit(self, X, y=None):
        """Fit the POMDP parameters from an :class:`EpisodeBatch`."""
        if not isinstance(X, EpisodeBatch):
            raise TypeError("X must be an EpisodeBatch")
        reward_max = self.reward_max if self.reward_max is not None else X.reward_max
        self.estimate_ = estimate_from_batch(
            X, self.n_states, reward_max=reward_max,
            rng=np.random.default_rng(self.random_state),
            n_restarts=self.n_restarts, n_iterations=self.n_iterations,
            n_polish=self.n_polish, tpm_tol=self.tpm_tol,
            eigenvalue_floor=self.eigenvalue_floor,
            rel_tol=self.pinv_rel_tol,
            rank_gate_scale=self.rank_gate_scale,
        )
        est = self.estimate_
        self.observation_matrix_ = est.o_hat
        self.transitions_ = np.stack([est.t_hat[a] for a in est.actions])
        self.rewards_ = np.stack([est.r_hat[a] for a in est.actions])
        self.initial_belief_ = est.b1_hat
        self.diagnostics_ = est.diagnostics
        return self

    def to_model(self, horizon: int):
        """The fitted estimate as a :class:`~pomdplab.core.TabularPOMDP`."""
        if not hasattr(self, "estimate_"):
            raise RuntimeError("estimator is not fitted")
        return self.estimate_.to_model(horizon)
