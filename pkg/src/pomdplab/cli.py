"""Command line interface.

Subcommands: ``generate`` (write a synthetic model file), ``validate``
(restricted-class report), ``simulate`` (exploration episode log),
``estimate`` (spectral model estimate), ``plan`` (exact or grid policy),
``pac`` (episode budget and value-error bound), ``experiment`` (full
schedule x seeds grid with reports).
"""

from __future__ import annotations

import argparse
import json
import sys

from .core import load_model, save_model, validate
from .domains import DomainSpec
from .errors import PomdpLabError
from .harness import ExperimentConfig, run_experiment, run_pipeline
from .moments import collect_exploration
from .pac import PacConfig, required_episodes, simulation_gap_bound
from .planner import solve_belief_grid, solve_finite_horizon


def _add_model_arg(p):
    p.add_argument("--model", required=True, help="path to a model file")


def _cmd_generate(args):
    spec = DomainSpec(
        kind=args.domain, states=args.states, actions=args.actions,
        observations=args.observations, horizon=args.horizon,
        accuracy=args.accuracy, noise=args.noise, slots=args.slots,
        seed=args.seed,
    )
    model = spec.build()
    save_model(model, args.out)
    print(f"wrote {args.domain} model ({model.num_states} states, "
          f"{model.num_actions} actions, {model.num_observations} "
          f"observations, H={model.horizon}) to {args.out}")
    return 0


def _cmd_validate(args):
    report = validate(load_model(args.model), floor=args.floor)
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_simulate(args):
    model = load_model(args.model)
    batch = collect_exploration(model, args.episodes, args.seed)
    batch.save(args.out)
    print(f"wrote {batch.total_count} episodes (H={batch.horizon}) to {args.out}")
    return 0


def _cmd_estimate(args):
    model = load_model(args.model)
    estimate, _, row = run_pipeline(
        model, args.episodes, args.seed,
        population_moments_toggle=args.population_moments,
        planner=args.planner, grid_resolution=args.resolution,
    )
    estimate.save(args.out, diagnostics_path=args.diagnostics)
    print(f"max parameter errors: T={row.err_T:.3e} O={row.err_O:.3e} "
          f"R={row.err_R:.3e} b1={row.err_b1:.3e}")
    print(f"exploitation value {row.exploit_value:.6f} vs oracle "
          f"{row.oracle_value:.6f} (regret {row.regret:.3e})")
    return 0


def _cmd_plan(args):
    model = load_model(args.model)
    if args.planner == "exact":
        policy = solve_finite_horizon(model)
        value = policy.value(model.initial_belief)
        if args.out:
            policy.save(args.out)
    else:
        policy = solve_belief_grid(model, args.resolution)
        value = policy.value(model.initial_belief)
    print(f"{args.planner} planner value at b1: {value:.9f}")
    return 0


def _cmd_pac(args):
    model = load_model(args.model)
    report = validate(model)
    out = {"validation_passed": report.passed}
    try:
        config = PacConfig.from_model(model, report, args.epsilon, args.delta)
        out["required_episodes"] = required_episodes(config)
    except PomdpLabError as exc:
        out["required_episodes"] = None
        out["required_episodes_error"] = str(exc)
    eps = {name: getattr(args, name) if getattr(args, name) is not None
           else args.epsilon
           for name in ("eps_t", "eps_o", "eps_r", "eps_b")}
    out["value_error_bound"] = simulation_gap_bound(
        eps["eps_t"], eps["eps_o"], eps["eps_r"], eps["eps_b"],
        model.horizon, model.reward_max)
    print(json.dumps(out, indent=2))
    return 0


def _cmd_experiment(args):
    domain = None
    if args.domain:
        domain = DomainSpec(kind=args.domain, states=args.states,
                            actions=args.actions, horizon=args.horizon,
                            accuracy=args.accuracy, noise=args.noise,
                            slots=args.slots, seed=args.seed)
    config = ExperimentConfig(
        domain=domain, model_path=args.model,
        schedule=tuple(int(x) for x in args.episodes.split(",")),
        seeds=tuple(int(x) for x in args.seeds.split(",")),
        epsilon=args.epsilon, delta=args.delta, out_dir=args.out,
        population_moments=args.population_moments, planner=args.planner,
        grid_resolution=args.resolution, workers=args.workers,
    )
    rows, out = run_experiment(config)
    failed = sum(r.status != "ok" for r in rows)
    print(f"ran {len(rows)} cells ({failed} failed); reports in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pomdplab",
        description="spectral estimation and planning lab for tabular "
                    "episodic POMDPs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic model file")
    p.add_argument("--domain", choices=["tiger", "slot_filling", "random"],
                   required=True)
    p.add_argument("--states", type=int, default=3)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--observations", type=int, default=None)
    p.add_argument("--horizon", type=int, default=3)
    p.add_argument("--accuracy", type=float, default=0.85)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--slots", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("validate", help="restricted-class validation report")
    _add_model_arg(p)
    p.add_argument("--floor", type=float, default=1e-8)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("simulate", help="collect exploration episodes")
    _add_model_arg(p)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="spectral estimate from exploration")
    _add_model_arg(p)
    p.add_argument("--episodes", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--population-moments", action="store_true")
    p.add_argument("--planner", choices=["exact", "grid"], default="exact")
    p.add_argument("--resolution", type=int, default=40)
    p.add_argument("--out", required=True)
    p.add_argument("--diagnostics", default=None)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("plan", help="plan on a model file")
    _add_model_arg(p)
    p.add_argument("--planner", choices=["exact", "grid"], default="exact")
    p.add_argument("--resolution", type=int, default=40)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("pac", help="episode budget and value-error bound")
    _add_model_arg(p)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--eps-t", type=float, default=None)
    p.add_argument("--eps-o", type=float, default=None)
    p.add_argument("--eps-r", type=float, default=None)
    p.add_argument("--eps-b", type=float, default=None)
    p.set_defaults(func=_cmd_pac)

    p = sub.add_parser("experiment", help="schedule x seeds grid with reports")
    p.add_argument("--model", default=None)
    p.add_argument("--domain", choices=["tiger", "slot_filling", "random"],
                   default=None)
    p.add_argument("--states", type=int, default=3)
    p.add_argument("--actions", type=int, default=2)
    p.add_argument("--horizon", type=int, default=3)
    p.add_argument("--accuracy", type=float, default=0.85)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--slots", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", required=True,
                   help="comma-separated episode schedule")
    p.add_argument("--seeds", required=True, help="comma-separated seeds")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--population-moments", action="store_true")
    p.add_argument("--planner", choices=["exact", "grid"], default="exact")
    p.add_argument("--resolution", type=int, default=40)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PomdpLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
