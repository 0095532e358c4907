"""Latent-state alignment across per-action estimates.

Each action's spectral recovery labels the latent states in an arbitrary
order, so per-action estimates of the shared observation matrix are
column permutations of each other (plus noise).  Alignment matches every
action's columns to a reference action by minimum-total-cost bipartite
assignment under the L1 column distance, the same metric as the
observation separation gap: if every estimated column is within half the
true gap of its target, the optimal assignment provably recovers the
true correspondence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import AmbiguousAlignmentError
from .spectral import SpectralEstimate

AMBIGUITY_FLOOR = 1e-8


@dataclass
class AlignmentResult:
    """Per-action bijections onto a common latent labeling.

    ``permutations[a][j]`` is the local column of action ``a`` assigned
    to reference label ``j``; the reference action maps by identity.
    ``matching_cost`` is the total L1 assignment cost and ``margin`` the
    smallest gap, over the action's columns, between the chosen match
    and that column's best alternative reference column.
    """

    reference_action: int
    permutations: dict = field(default_factory=dict)
    matching_cost: dict = field(default_factory=dict)
    margin: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "reference_action": self.reference_action,
            "permutations": {str(a): p.tolist() for a, p in self.permutations.items()},
            "matching_cost": {str(a): c for a, c in self.matching_cost.items()},
            "margin": {str(a): m for a, m in self.margin.items()},
        }


def _column_cost(columns, reference):
    # cost[i, j] = L1 distance between local column i and reference column j
    return np.abs(columns[:, :, None] - reference[:, None, :]).sum(axis=0)


def align(o_hats: dict, reference: int, floor=AMBIGUITY_FLOOR) -> AlignmentResult:
    """Match every action's observation columns to the reference action's.

    Raises :class:`AmbiguousAlignmentError` when two reference columns
    are within ``floor`` in L1 distance, since no assignment against
    such a reference can be trusted.
    """
    if reference not in o_hats:
        raise ValueError(f"reference action {reference} has no estimate")
    ref = np.asarray(o_hats[reference], dtype=float)
    k = ref.shape[1]
    ref_cost = _column_cost(ref, ref)
    for i in range(k):
        for j in range(i + 1, k):
            if ref_cost[i, j] <= floor:
                raise AmbiguousAlignmentError(i, j, float(ref_cost[i, j]))

    result = AlignmentResult(reference_action=reference)
    for a in sorted(o_hats):
        columns = np.asarray(o_hats[a], dtype=float)
        if columns.shape != ref.shape:
            raise ValueError(f"estimate for action {a} has shape "
                             f"{columns.shape}, expected {ref.shape}")
        cost = _column_cost(columns, ref)
        rows, cols = linear_sum_assignment(cost)
        perm = np.empty(k, dtype=int)
        perm[cols] = rows                      # local column for each ref label
        chosen = cost[rows, cols]
        if k > 1:
            margins = []
            for i, j in zip(rows, cols):
                alternatives = np.delete(cost[i], j)
                margins.append(float(alternatives.min() - cost[i, j]))
            margin = min(margins)
        else:
            margin = float("inf")
        result.permutations[a] = perm
        result.matching_cost[a] = float(chosen.sum())
        result.margin[a] = margin
    return result


def apply_alignment(estimates: dict, result: AlignmentResult) -> SpectralEstimate:
    """Permute per-action estimates into the reference labeling and merge.

    Transition matrices are permuted on both axes, rewards and weights
    entrywise, observation columns by column; the merged observation
    matrix is the triple-count-weighted average of the aligned copies.
    The initial belief is left unset here; it is solved once the
    estimate covers every action (see
    :func:`pomdplab.spectral.solve_initial_belief`).
    """
    if not estimates:
        raise ValueError("no estimates to align")
    some = next(iter(estimates.values()))
    merged = SpectralEstimate(
        num_states=some.num_states,
        num_observations=some.num_observations,
        reward_max=some.reward_max,
        o_hat=np.zeros_like(some.o_hat),
        diagnostics={"per_action": {}, "alignment": result.to_dict()},
    )
    counts = {}
    aligned_os = {}
    for a, est in sorted(estimates.items()):
        if a not in result.permutations:
            raise ValueError(f"alignment result does not cover action {a}")
        perm = result.permutations[a]
        merged.t_hat[a] = est.t_hat[a][np.ix_(perm, perm)]
        merged.r_hat[a] = est.r_hat[a][perm]
        merged.w_hat[a] = est.w_hat[a][perm]
        merged.counts[a] = est.counts[a]
        counts[a] = est.counts[a]
        aligned_os[a] = est.o_hat[:, perm]
        merged.diagnostics["per_action"].update(
            est.diagnostics.get("per_action", {}))

    weights = np.array([counts[a] for a in sorted(counts)], dtype=float)
    if np.any(np.isinf(weights)):
        weights = np.ones_like(weights)
    weights = weights / weights.sum()
    merged.o_hat = sum(w * aligned_os[a]
                       for w, a in zip(weights, sorted(counts)))
    return merged
