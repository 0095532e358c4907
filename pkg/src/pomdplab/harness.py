"""Pipeline driver and experiment runner.

``run_pipeline`` realizes one explore-then-exploit run: collect
exploration episodes (or take exact population moments), estimate the
model per action, align, plan on the merged estimate, and evaluate the
exploitation policy exactly against the true model.  ``run_experiment``
fans a (episode schedule x seeds) grid out over workers and writes a
results table, a diagnostics document and a learning-curve figure.

Parameter errors are always computed after optimally permuting the
estimate's latent labels onto the truth (matching observation columns),
never by raw label comparison.  Wall-clock timings are reported in the
diagnostics document only, so the results table and figure are
byte-reproducible from (config, seeds).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .alignment import align
from .core import TabularPOMDP, load_model
from .domains import DomainSpec
from .errors import InsufficientDataError, InvalidConfigError
from .estimator import estimate_pomdp
from .figures import write_learning_curves
from .moments import (
    EpisodeBatch,
    collect_exploration,
    empirical_moments,
    first_observation_distribution,
    population_first_observation,
    population_moments,
)
from .planner import evaluate_policy, solve_belief_grid, solve_finite_horizon
from .spectral import SpectralEstimate, _jsonify

RESULTS_HEADER = ("n_episodes,seed,status,err_T,err_O,err_R,err_b1,"
                  "exploit_value,oracle_value,regret,note")


def parameter_errors(truth: TabularPOMDP, estimate: SpectralEstimate) -> dict:
    """Max-entry errors of the estimate after optimal label matching.

    The estimate's latent labels are matched to the truth by the same
    bipartite assignment used for cross-action alignment, applied
    against the true observation matrix.
    """
    matching = align({0: truth.observation_matrix, 1: estimate.o_hat},
                     reference=0)
    perm = matching.permutations[1]
    o_err = np.abs(estimate.o_hat[:, perm] - truth.observation_matrix) \
        .sum(axis=0).max()
    t_err = max(
        np.abs(estimate.t_hat[a][np.ix_(perm, perm)] - truth.transitions[a])
        .sum(axis=0).max()
        for a in range(truth.num_actions)
    )
    r_err = max(
        np.abs(estimate.r_hat[a][perm] - truth.rewards[a]).max()
        for a in range(truth.num_actions)
    )
    b_err = np.abs(estimate.b1_hat[perm] - truth.initial_belief).sum()
    return {
        "err_T": float(t_err), "err_O": float(o_err),
        "err_R": float(r_err), "err_b1": float(b_err),
        "permutation": perm.tolist(),
    }


@dataclass
class RunRow:
    """One (episode count, seed) cell of an experiment."""

    n_episodes: int
    seed: int
    status: str = "ok"
    err_T: float = float("nan")
    err_O: float = float("nan")
    err_R: float = float("nan")
    err_b1: float = float("nan")
    exploit_value: float = float("nan")
    oracle_value: float = float("nan")
    regret: float = float("nan")
    note: str = ""
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def csv_line(self) -> str:
        fields = [str(self.n_episodes), str(self.seed), self.status]
        fields += [repr(getattr(self, f)) for f in
                   ("err_T", "err_O", "err_R", "err_b1",
                    "exploit_value", "oracle_value", "regret")]
        fields.append(self.note.replace(",", ";"))
        return ",".join(fields)


def _single_state_estimate(model, batch, population, reward_max) -> SpectralEstimate:
    # Everything is observable with one latent state; the "estimate" is
    # the bandit solution: identity transitions and per-action mean rewards.
    est = SpectralEstimate(
        num_states=1, num_observations=model.num_observations,
        reward_max=reward_max,
        o_hat=np.zeros((model.num_observations, 1)),
        b1_hat=np.array([1.0]),
        diagnostics={"routes": {a: "single_state"
                                for a in range(model.num_actions)}},
    )
    for a in range(model.num_actions):
        est.t_hat[a] = np.array([[1.0]])
        est.w_hat[a] = np.array([1.0])
    if population:
        est.o_hat = model.observation_matrix.copy()
        for a in range(model.num_actions):
            est.r_hat[a] = model.rewards[a].copy()
            est.counts[a] = float("inf")
    else:
        counts = np.bincount(batch.actions.ravel(),
                             minlength=model.num_actions).astype(float)
        if np.any(counts == 0):
            raise InsufficientDataError(int(np.argmin(counts)))
        sums = np.bincount(batch.actions.ravel(), weights=batch.rewards.ravel(),
                           minlength=model.num_actions)
        est.o_hat = (np.bincount(batch.observations.ravel(),
                                 minlength=model.num_observations)
                     / batch.observations.size)[:, None]
        for a in range(model.num_actions):
            est.r_hat[a] = np.array([sums[a] / counts[a]])
            est.counts[a] = counts[a]
    return est


def run_pipeline(model: TabularPOMDP, n_episodes: int, seed: int,
                 population_moments_toggle: bool = False,
                 planner: str = "exact", grid_resolution: int = 40,
                 exploration=None, oracle_value: Optional[float] = None,
                 estimator_kwargs: Optional[dict] = None):
    """One explore-estimate-align-plan-evaluate run.

    Returns ``(estimate, policy, row)``.  Any stage failure propagates
    with the stage name attached to the exception (``pipeline_stage``
    attribute and message prefix).
    """
    timings = {}
    stage = "setup"
    estimator_kwargs = dict(estimator_kwargs or {})
    try:
        stage = "explore"
        t0 = time.perf_counter()
        if population_moments_toggle:
            batch = None
            moments = population_moments(model, exploration)
            first_obs = population_first_observation(model, exploration)
        else:
            batch = collect_exploration(model, n_episodes, seed,
                                        exploration=exploration)
            moments = None
            first_obs = None
        timings["explore"] = time.perf_counter() - t0

        stage = "moments"
        t0 = time.perf_counter()
        if batch is not None and model.num_states > 1:
            moments = {a: empirical_moments(batch, a)
                       for a in range(model.num_actions)}
            first_obs = first_observation_distribution(batch)
        timings["moments"] = time.perf_counter() - t0

        stage = "estimate"
        t0 = time.perf_counter()
        if model.num_states == 1:
            estimate = _single_state_estimate(
                model, batch, population_moments_toggle, model.reward_max)
        else:
            estimate = estimate_pomdp(
                moments, model.num_states, first_obs,
                exploration=exploration, reward_max=model.reward_max,
                rng=np.random.default_rng(np.random.SeedSequence(
                    seed, spawn_key=(0xA11C,))),
                **estimator_kwargs)
        est_model = estimate.to_model(model.horizon)
        timings["estimate"] = time.perf_counter() - t0

        stage = "plan"
        t0 = time.perf_counter()
        if planner == "exact":
            policy = solve_finite_horizon(est_model)
        elif planner == "grid":
            policy = solve_belief_grid(est_model, grid_resolution)
        else:
            raise InvalidConfigError(f"unknown planner {planner!r}")
        timings["plan"] = time.perf_counter() - t0

        stage = "evaluate"
        t0 = time.perf_counter()
        exploit_value = evaluate_policy(model, policy).value
        if oracle_value is None:
            oracle_value = evaluate_policy(
                model, solve_finite_horizon(model)).value
        errors = parameter_errors(model, estimate)
        timings["evaluate"] = time.perf_counter() - t0
    except Exception as exc:
        exc.pipeline_stage = stage
        if exc.args and isinstance(exc.args[0], str):
            exc.args = (f"[stage:{stage}] {exc.args[0]}",) + exc.args[1:]
        else:
            exc.args = (f"[stage:{stage}]",) + exc.args
        raise

    row = RunRow(
        n_episodes=n_episodes, seed=seed, status="ok",
        err_T=errors["err_T"], err_O=errors["err_O"],
        err_R=errors["err_R"], err_b1=errors["err_b1"],
        exploit_value=float(exploit_value),
        oracle_value=float(oracle_value),
        regret=float(oracle_value - exploit_value),
        timings=timings,
        diagnostics=estimate.diagnostics,
    )
    return estimate, policy, row


@dataclass
class ExperimentConfig:
    """Grid of (episode count, seed) cells over one domain or model file."""

    domain: Optional[DomainSpec] = None
    model_path: Optional[str] = None
    schedule: tuple = (1000,)
    seeds: tuple = (0,)
    epsilon: float = 0.1
    delta: float = 0.05
    out_dir: str = "runs"
    population_moments: bool = False
    planner: str = "exact"
    grid_resolution: int = 40
    workers: int = 1

    def __post_init__(self):
        self.schedule = tuple(int(n) for n in self.schedule)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise InvalidConfigError("at least one seed is required")
        if not self.schedule:
            raise InvalidConfigError("episode schedule is empty")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise InvalidConfigError("episode schedule must be strictly increasing")
        if (self.domain is None) == (self.model_path is None):
            raise InvalidConfigError("specify exactly one of domain or model_path")
        if self.planner not in ("exact", "grid"):
            raise InvalidConfigError(f"unknown planner {self.planner!r}")

    def load_model(self) -> TabularPOMDP:
        if self.model_path is not None:
            return load_model(self.model_path)
        return self.domain.build()


def _run_cell(args):
    model_doc, n, seed, population, planner, resolution, oracle = args
    from .core import model_from_dict
    model = model_from_dict(model_doc)
    try:
        _, _, row = run_pipeline(
            model, n, seed, population_moments_toggle=population,
            planner=planner, grid_resolution=resolution, oracle_value=oracle)
    except Exception as exc:
        row = RunRow(n_episodes=n, seed=seed, status="error",
                     note=f"{type(exc).__name__}: {exc}")
    return row


def run_experiment(config: ExperimentConfig):
    """Run the full grid and write results, diagnostics and figures.

    Writes ``results.csv`` (fixed column order, one row per cell),
    ``diagnostics.json`` (per-cell diagnostics and timings) and
    ``curves.svg`` (median parameter error and regret vs N, log-log).
    Cell failures are recorded in their row and the run continues.
    """
    model = config.load_model()
    oracle = evaluate_policy(model, solve_finite_horizon(model)).value
    cells = [(model.to_dict(), n, seed, config.population_moments,
              config.planner, config.grid_resolution, oracle)
             for n in config.schedule for seed in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]
    rows.sort(key=lambda r: (r.n_episodes, r.seed))

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [RESULTS_HEADER] + [r.csv_line() for r in rows]
    (out / "results.csv").write_text("\n".join(lines) + "\n")

    diagnostics = {
        f"N={r.n_episodes}/seed={r.seed}": _jsonify(
            {"status": r.status, "note": r.note, "timings": r.timings,
             **r.diagnostics})
        for r in rows
    }
    (out / "diagnostics.json").write_text(json.dumps(diagnostics, indent=2) + "\n")

    curves = _aggregate_curves(rows)
    write_learning_curves(out / "curves.svg", curves)
    return rows, out


def _aggregate_curves(rows):
    by_n = {}
    for r in rows:
        if r.status == "ok":
            by_n.setdefault(r.n_episodes, []).append(r)
    error_series, regret_series = [], []
    for n in sorted(by_n):
        group = by_n[n]
        max_err = np.median([max(r.err_T, r.err_O, r.err_R, r.err_b1)
                             for r in group])
        regret = np.median([r.regret for r in group])
        error_series.append((n, float(max_err)))
        regret_series.append((n, float(regret)))
    return {"median max parameter error": error_series,
            "median regret": regret_series}
