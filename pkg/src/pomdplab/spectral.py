"""Spectral recovery of POMDP parameters from view moments.

The estimation route per action is the standard three-view reduction:
map the past and future views into middle-view coordinates using cross
moments, whiten the resulting symmetric pair matrix, run the robust
tensor power method on the whitened triple tensor, and un-whiten the
eigenpairs into observation columns and middle-state weights.  The
action's transition and reward vectors then come from linear solves
against the pair moments.

All recovered columns are pushed through the Euclidean simplex
projection so downstream planning always sees valid distributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import json

import numpy as np

from .errors import (
    DecompositionFailedError,
    IllConditionedError,
    RankDeficientError,
    StructuralModelError,
)
from .moments import ViewMoments
from .validation import as_rng, check_exploration_mixture

PINV_REL_TOL = 1e-10
EIGENVALUE_FLOOR = 1e-10
WEIGHT_FLOOR = 1e-10

DEFAULT_RESTARTS = 50
DEFAULT_ITERATIONS = 100
DEFAULT_POLISH = 20
DEFAULT_TPM_TOL = 1e-10


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project non-finite vector")
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - 1.0
    indices = np.arange(1, v.size + 1)
    rho = np.nonzero(u - cumulative / indices > 0)[0][-1]
    theta = cumulative[rho] / (rho + 1.0)
    out = np.maximum(v - theta, 0.0)
    return out / out.sum()


def truncated_pinv(m, rank=None, rel_tol=PINV_REL_TOL) -> np.ndarray:
    """Pseudoinverse via SVD truncated at ``rank`` components.

    Raises :class:`RankDeficientError` when the requested rank is not
    supported above the relative singular value cutoff.
    """
    m = np.asarray(m, dtype=float)
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if rank is None:
        rank = int((s > rel_tol * s[0]).sum()) if s[0] > 0 else 0
        if rank == 0:
            raise RankDeficientError(0.0, 1, "matrix is numerically zero")
    if rank > s.size or s[rank - 1] <= rel_tol * s[0]:
        sigma = s[rank - 1] if rank <= s.size else 0.0
        raise RankDeficientError(float(sigma), rank)
    return (vt[:rank].T / s[:rank]) @ u[:, :rank].T


def _supersymmetrize(t: np.ndarray) -> np.ndarray:
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    return sum(np.transpose(t, p) for p in perms) / 6.0


def symmetrize(moments: ViewMoments, k: int, rel_tol=PINV_REL_TOL):
    """Reduce the three views to middle-view coordinates.

    Returns ``(pair, triple)`` where ``pair = sum_h w_h o_h o_h^T`` and
    ``triple = sum_h w_h o_h^{x3}`` for the middle-view conditional
    columns ``o_h`` and middle-state weights ``w_h``.  Uses the cross
    moment transforms ``A1 = M23 @ pinv(M13)`` and ``A3 = M21 @
    pinv(M31)`` with rank-``k`` truncated pseudoinverses, then averages
    over index permutations so the outputs are exactly (super)symmetric.

    Raises :class:`RankDeficientError` if a cross moment does not carry
    rank ``k`` above the cutoff; this happens structurally for actions
    whose transition matrix is rank deficient (the future view carries
    no usable signal for them).
    """
    if k < 1:
        raise ValueError("latent dimension k must be at least 1")
    m12, m13, m23 = moments.pair_12, moments.pair_13, moments.pair_23
    a1 = m23 @ truncated_pinv(m13, rank=k, rel_tol=rel_tol)
    a3 = m12.T @ truncated_pinv(m13.T, rank=k, rel_tol=rel_tol)
    pair = a1 @ m13 @ a3.T
    pair = (pair + pair.T) / 2.0
    triple = np.einsum("pi,ijk,rk->pjr", a1, moments.triple, a3)
    return pair, _supersymmetrize(triple)


def whiten(pair: np.ndarray, k: int, floor=EIGENVALUE_FLOOR) -> np.ndarray:
    """Whitening map from the top-k eigendecomposition of ``pair``.

    The returned (d, k) matrix satisfies ``W.T @ pair @ W = I_k``;
    the residual is checked to 1e-8 before returning.
    """
    pair = np.asarray(pair, dtype=float)
    if pair.shape[0] != pair.shape[1] or np.abs(pair - pair.T).max() > 1e-8:
        raise ValueError("whiten expects a symmetric matrix")
    eigvals, eigvecs = np.linalg.eigh(pair)
    order = np.argsort(eigvals)[::-1][:k]
    top = eigvals[order]
    if top.size < k or top[-1] <= floor:
        value = float(top[-1]) if top.size else 0.0
        raise IllConditionedError(
            value, f"eigenvalue {value:.3e} of the pair matrix is below the "
                   f"floor {floor:.1e} for latent dimension {k}")
    w = eigvecs[:, order] / np.sqrt(top)
    residual = np.abs(w.T @ pair @ w - np.eye(k)).max()
    if residual > 1e-8:
        raise IllConditionedError(residual, "whitening residual above 1e-8")
    return w


@dataclass
class TensorEigenpairs:
    """Eigenpairs of a supersymmetric tensor plus extraction diagnostics."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray   # columns
    diagnostics: dict = field(default_factory=dict)


def _tensor_apply(t, theta):
    return np.einsum("ijk,j,k->i", t, theta, theta)


def _tensor_value(t, theta):
    return float(np.einsum("ijk,i,j,k->", t, theta, theta, theta))


def tensor_power(tensor: np.ndarray, k: int, rng,
                 n_restarts=DEFAULT_RESTARTS, n_iterations=DEFAULT_ITERATIONS,
                 n_polish=DEFAULT_POLISH, tol=DEFAULT_TPM_TOL,
                 eigenvalue_floor=EIGENVALUE_FLOOR,
                 symmetry_tol=1e-6) -> TensorEigenpairs:
    """Robust tensor power method with deflation.

    For each of ``k`` components: run ``n_restarts`` random restarts of
    ``n_iterations`` power iterations, keep the candidate with the
    largest Rayleigh value, polish it, record the eigenpair and deflate.
    Non-convergence of the polish stage is recorded in the diagnostics,
    not fatal; a component whose eigenvalue falls below the floor aborts
    with :class:`DecompositionFailedError`.
    """
    rng = as_rng(rng)
    t = np.asarray(tensor, dtype=float)
    d = t.shape[0]
    if t.shape != (d, d, d):
        raise ValueError("tensor must be cubic")
    if np.abs(t - np.transpose(t, (1, 0, 2))).max() > symmetry_tol or \
            np.abs(t - np.transpose(t, (0, 2, 1))).max() > symmetry_tol:
        raise ValueError("tensor is not supersymmetric within tolerance")

    work = t.copy()
    eigenvalues = np.empty(k)
    eigenvectors = np.empty((d, k))
    convergence_failures = 0
    final_moves = []
    for component in range(k):
        best_theta, best_value = None, -np.inf
        for _ in range(n_restarts):
            theta = rng.standard_normal(d)
            theta /= np.linalg.norm(theta)
            for _ in range(n_iterations):
                nxt = _tensor_apply(work, theta)
                norm = np.linalg.norm(nxt)
                if norm <= 0.0:
                    break
                nxt /= norm
                if np.linalg.norm(nxt - theta) < tol:
                    theta = nxt
                    break
                theta = nxt
            value = _tensor_value(work, theta)
            if value > best_value:
                best_theta, best_value = theta, value
        theta = best_theta
        move = 0.0
        for _ in range(n_polish):
            nxt = _tensor_apply(work, theta)
            norm = np.linalg.norm(nxt)
            if norm <= 0.0:
                break
            nxt /= norm
            move = float(np.linalg.norm(nxt - theta))
            theta = nxt
            if move < tol:
                break
        if move >= tol:
            convergence_failures += 1
        final_moves.append(move)
        lam = _tensor_value(work, theta)
        if lam < 0.0:
            theta, lam = -theta, -lam
        if lam <= eigenvalue_floor:
            raise DecompositionFailedError(
                f"component {component}: eigenvalue {lam:.3e} below floor "
                f"{eigenvalue_floor:.1e}")
        eigenvalues[component] = lam
        eigenvectors[:, component] = theta
        work = work - lam * np.einsum("i,j,k->ijk", theta, theta, theta)

    gaps = np.abs(np.subtract.outer(eigenvalues, eigenvalues))
    diagnostics = {
        "convergence_failures": convergence_failures,
        "final_moves": final_moves,
        "min_eigenvalue_gap": float(gaps[np.triu_indices(k, 1)].min()) if k > 1 else float("inf"),
        "deflation_residual": float(np.abs(work).max()),
        "restarts": n_restarts,
    }
    return TensorEigenpairs(eigenvalues, eigenvectors, diagnostics)


@dataclass
class SpectralEstimate:
    """Recovered POMDP parameters in an internal latent labeling.

    Per-action estimates (as returned by :func:`recover_model`) populate
    the dictionaries for their own action only and leave ``b1_hat``
    unset; the aligned, merged estimate covers every action and carries
    the solved initial belief.
    """

    num_states: int
    num_observations: int
    reward_max: float
    o_hat: np.ndarray
    t_hat: dict = field(default_factory=dict)
    r_hat: dict = field(default_factory=dict)
    w_hat: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    b1_hat: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def actions(self):
        return sorted(self.t_hat)

    def to_model(self, horizon: int):
        """Package the estimate as a TabularPOMDP for planning."""
        from .core import TabularPOMDP
        if self.b1_hat is None:
            raise StructuralModelError("estimate has no initial belief yet")
        acts = self.actions
        if acts != list(range(len(acts))):
            raise StructuralModelError("estimate does not cover all actions")
        return TabularPOMDP(
            transitions=np.stack([self.t_hat[a] for a in acts]),
            observation_matrix=self.o_hat,
            rewards=np.stack([self.r_hat[a] for a in acts]),
            initial_belief=self.b1_hat,
            horizon=horizon,
            reward_max=self.reward_max,
        )

    def save(self, path, diagnostics_path=None, horizon=None) -> None:
        """Write in the model file format plus a diagnostics side-file.

        A merged estimate saved with a ``horizon`` is a complete model
        document and loads back through :func:`pomdplab.core.load_model`.
        """
        doc = {
            "states": self.num_states,
            "actions": len(self.actions),
            "observations": self.num_observations,
            "horizon": horizon,
            "reward_max": self.reward_max,
            "b1": None if self.b1_hat is None else self.b1_hat.tolist(),
            "T": [self.t_hat[a].tolist() for a in self.actions],
            "O": self.o_hat.tolist(),
            "R": [self.r_hat[a].tolist() for a in self.actions],
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")
        if diagnostics_path is not None:
            Path(diagnostics_path).write_text(
                json.dumps(_jsonify(self.diagnostics), indent=2) + "\n")


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and np.isinf(obj):
        return "inf"
    return obj


def solve_action_params(o_hat, w_hat, moments: ViewMoments, reward_max,
                        rel_tol=PINV_REL_TOL, weight_floor=WEIGHT_FLOOR):
    """Transition and reward vectors for one action from its pair moments.

    Solves ``pair_23 = O diag(w) (O T_a)^T`` for the future-view
    conditional and then for ``T_a``, and ``reward_cross = O diag(w)
    R_a`` for the rewards.  Columns of the transition estimate are
    projected to the simplex; rewards are clamped to ``[0, reward_max]``.
    """
    if np.any(w_hat <= weight_floor):
        raise IllConditionedError(
            float(w_hat.min()),
            f"middle-state weight {w_hat.min():.3e} below floor; cannot invert")
    o_pinv = truncated_pinv(o_hat, rank=o_hat.shape[1], rel_tol=rel_tol)
    c3 = (truncated_pinv(o_hat * w_hat[None, :], rank=o_hat.shape[1],
                         rel_tol=rel_tol) @ moments.pair_23).T
    t_raw = o_pinv @ c3
    t_hat = np.column_stack([project_simplex(col) for col in t_raw.T])
    r_hat = np.clip((o_pinv @ moments.reward_cross) / w_hat, 0.0, reward_max)
    return t_hat, r_hat


def recover_model(moments: ViewMoments, eigenpairs: TensorEigenpairs,
                  whitening: np.ndarray, k: int, reward_max: float,
                  rel_tol=PINV_REL_TOL) -> SpectralEstimate:
    """Un-whiten eigenpairs into observation columns and finish one action.

    Columns are ``lam_i * pinv(W.T) v_i`` with middle-state weights
    ``w_i = lam_i**-2``; each column's sign is fixed to have nonnegative
    sum, then projected to the simplex.  The action's transition and
    rewards follow from :func:`solve_action_params`.
    """
    lams, vecs = eigenpairs.eigenvalues, eigenpairs.eigenvectors
    unwhiten = truncated_pinv(whitening.T, rank=k, rel_tol=rel_tol)
    columns = unwhiten @ (vecs * lams[None, :])
    signs = np.where(columns.sum(axis=0) < 0, -1.0, 1.0)
    columns = columns * signs[None, :]
    o_hat = np.column_stack([project_simplex(col) for col in columns.T])
    w_hat = 1.0 / lams**2
    w_hat = w_hat / w_hat.sum()
    t_hat, r_hat = solve_action_params(o_hat, w_hat, moments, reward_max,
                                       rel_tol=rel_tol)
    a = moments.action
    return SpectralEstimate(
        num_states=k,
        num_observations=moments.num_observations,
        reward_max=reward_max,
        o_hat=o_hat,
        t_hat={a: t_hat},
        r_hat={a: r_hat},
        w_hat={a: w_hat},
        counts={a: moments.count},
        diagnostics={
            "per_action": {a: {
                "eigenvalues": lams.tolist(),
                **eigenpairs.diagnostics,
            }},
        },
    )


def solve_initial_belief(estimate: SpectralEstimate, first_obs,
                         exploration=None, rel_tol=PINV_REL_TOL) -> np.ndarray:
    """Initial belief from the law of the first observation.

    Under the post-transition observation timing the first observation
    has law ``O @ T_bar @ b1``, so recovering ``b1`` solves through the
    merged observation matrix and then through the exploration-averaged
    estimated transition.  The result is projected to the simplex.
    """
    acts = estimate.actions
    mixture = check_exploration_mixture(exploration, len(acts))
    t_bar = sum(mixture[a] * estimate.t_hat[a] for a in acts)
    o_pinv = truncated_pinv(estimate.o_hat, rank=estimate.num_states,
                            rel_tol=rel_tol)
    second_state_dist = o_pinv @ np.asarray(first_obs, dtype=float)
    b1 = truncated_pinv(t_bar, rel_tol=rel_tol) @ second_state_dist
    return project_simplex(b1)
