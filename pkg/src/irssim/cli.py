"""Command line front end: sense / trial / sweep / plot."""

from __future__ import annotations

import argparse
import json
import sys


def _load_scenario(args):
    from .scenario import Scenario, load_config

    scenario = load_config(args.config) if args.config else Scenario()
    if args.seed is not None:
        import dataclasses

        scenario = dataclasses.replace(scenario, seed=args.seed)
    return scenario


def _cmd_sense(args) -> int:
    from .geometry import build_channels
    from .harness import trial_rngs
    from .localization import rmse, sense_locations
    from .signals import PhaseShiftConfig, generate_symbols, receive_at_sub_irs

    scenario = _load_scenario(args)
    rngs = trial_rngs(scenario.seed)
    users = scenario.place_users(rngs["placement"])
    channels = build_channels(scenario, users, rngs["channels"])
    theta1 = PhaseShiftConfig.random(
        {1: scenario.panels[0].total}, scenario.bits, rngs["theta_block1"]
    )
    symbols = generate_symbols(scenario.k_users, scenario.tau1, rngs["symbols_block1"])
    snaps = [
        receive_at_sub_irs(
            channels, theta1, symbols, scenario.rho, scenario.sigma2, p, rngs["noise_block1"]
        )
        for p in (2, 3)
    ]
    est = sense_locations(snaps[0], snaps[1], scenario, block=1)
    out = {
        "seed": scenario.seed,
        "users_true": users.tolist(),
        "users_estimated": est.positions.tolist(),
        "rmse_m": rmse(est.positions, users),
        "rmse_raw_m": rmse(est.positions, users, assign=False),
    }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_trial(args) -> int:
    from .harness import run_trial

    scenario = _load_scenario(args)
    record = run_trial(scenario, scenario.seed, with_baselines=args.baselines)
    out = {
        "seed": record.seed,
        "rmse_block1_m": record.rmse_block1,
        "rmse_block1_raw_m": record.rmse_block1_raw,
        "rmse_block2_m": record.rmse_block2,
        "rmse_block2_raw_m": record.rmse_block2_raw,
        "rate_isac": record.rate_isac,
        "rate_pc": record.rate_pc,
        "rate_overall": record.rate_overall,
        "offsets_exhaustive": record.offsets_exhaustive,
        "failures": record.failures,
        "elapsed_s": round(record.elapsed_s, 2),
    }
    if args.baselines:
        out.update(
            rate_isac_random=record.rate_isac_random,
            rate_isac_genie=record.rate_isac_genie,
            rate_pc_random=record.rate_pc_random,
            rate_pc_genie=record.rate_pc_genie,
        )
    print(json.dumps(out, indent=2))
    return 0


def _parse_values(text: str):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _cmd_sweep(args) -> int:
    from .sweep import AXES, SweepSpec, run_sweep

    scenario = _load_scenario(args)
    if args.axis not in AXES:
        raise SystemExit(f"unknown axis {args.axis!r}; choose from {', '.join(AXES)}")
    values = _parse_values(args.values) if args.values else _default_values(args.axis)
    spec = SweepSpec(axis=args.axis, values=values, trials=args.trials, mode=args.mode)
    path = run_sweep(scenario, spec, args.out, workers=args.workers)
    print(path)
    return 0


def _default_values(axis: str) -> tuple:
    defaults = {
        "rho": (0.0, 10.0, 20.0, 30.0),
        "tau1": (20.0, 50.0, 90.0),
        "users": (1.0, 2.0, 3.0),
        "m_semi": (16.0, 144.0, 400.0),
        "m_reflect": (256.0, 576.0, 1024.0),
        "tau1_over_t1": (0.1, 0.2, 0.4, 0.6, 0.8),
        "t1_over_t": (0.1, 0.2, 0.4, 0.6, 0.8),
    }
    return defaults[axis]


def _cmd_plot(args) -> int:
    from .plots import emit_plots

    metrics = tuple(args.metrics.split(",")) if args.metrics else None
    written = emit_plots(args.data, args.out, metrics=metrics)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irssim",
        description="IRS-enabled multi-user ISAC link-level simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file (defaults otherwise)")
    common.add_argument("--seed", type=int, default=None, help="master seed override")

    p_sense = sub.add_parser("sense", parents=[common], help="one localization trial")
    p_sense.set_defaults(func=_cmd_sense)

    p_trial = sub.add_parser("trial", parents=[common], help="one full protocol run")
    p_trial.add_argument("--baselines", action="store_true", help="also run the baselines")
    p_trial.set_defaults(func=_cmd_trial)

    p_sweep = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep to CSV")
    p_sweep.add_argument("--axis", required=True, help="sweep axis")
    p_sweep.add_argument("--values", help="comma-separated sweep values (axis defaults otherwise)")
    p_sweep.add_argument("--trials", type=int, default=50, help="trials per point")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_sweep.add_argument(
        "--mode", choices=("auto", "sense", "full"), default="auto",
        help="sense = localization only, full = protocol with baselines",
    )
    p_sweep.set_defaults(func=_cmd_sweep)

    p_plot = sub.add_parser("plot", help="render SVG figures from a sweep CSV")
    p_plot.add_argument("--data", required=True, help="sweep CSV path")
    p_plot.add_argument("--out", required=True, help="output directory")
    p_plot.add_argument("--metrics", help="comma-separated metric subset")
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
