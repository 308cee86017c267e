"""Seeded Monte Carlo sweeps over one scenario axis, with CSV output.

Per-trial seeds derive from (master seed, point index, trial index), so the
same CSV comes out byte-identical for any worker count; aggregation sorts
before writing.
"""

from __future__ import annotations

import csv
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .harness import TrialRecord, run_trial
from .scenario import Scenario

AXES = (
    "rho",
    "tau1",
    "users",
    "m_semi",
    "m_reflect",
    "tau1_over_t1",
    "t1_over_t",
)

# sensing-only axes reproduce the RMSE figures and skip the beamforming legs
_SENSE_AXES = {"rho", "tau1", "m_semi"}

CSV_FIELDS = ("sweep_value", "metric", "mean", "p10", "p50", "p90", "trials", "seed")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    trials: int
    mode: str = "auto"  # auto | sense | full

    def resolved_mode(self) -> str:
        if self.mode != "auto":
            return self.mode
        return "sense" if self.axis in _SENSE_AXES else "full"


def _square_panel(total: int) -> tuple:
    side = int(round(np.sqrt(total)))
    if side * side != total:
        raise ValueError(f"panel element count {total} is not a perfect square")
    return side, side


def apply_axis(scenario: Scenario, axis: str, value) -> Scenario:
    """Scenario variant for one sweep point."""
    if axis == "rho":
        return dataclasses.replace(scenario, rho_dbm=float(value))
    if axis == "tau1":
        return dataclasses.replace(scenario, tau1=int(value))
    if axis == "users":
        # sweep K at fixed total transmit power K * rho
        total_dbm = scenario.rho_dbm
        rho = total_dbm - 10.0 * np.log10(int(value))
        return dataclasses.replace(scenario, k_users=int(value), rho_dbm=float(rho))
    if axis == "m_semi":
        dims = _square_panel(int(value))
        panels = (scenario.panel_dims[0], dims, dims)
        return dataclasses.replace(scenario, panel_dims=panels)
    if axis == "m_reflect":
        dims = _square_panel(int(value))
        panels = (dims, scenario.panel_dims[1], scenario.panel_dims[2])
        return dataclasses.replace(scenario, panel_dims=panels)
    if axis == "tau1_over_t1":
        tau1 = max(1, min(scenario.t1 - 1, int(round(float(value) * scenario.t1))))
        return dataclasses.replace(scenario, tau1=tau1)
    if axis == "t1_over_t":
        t1 = max(2, min(scenario.t_total - 1, int(round(float(value) * scenario.t_total))))
        tau1 = max(1, min(t1 - 1, int(round(t1 / 10.0))))
        return dataclasses.replace(scenario, t1=t1, tau1=tau1)
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")


def trial_seed(master_seed: int, point: int, trial: int) -> int:
    ss = np.random.SeedSequence([master_seed, point, trial])
    return int(ss.generate_state(1, np.uint64)[0])


def _sense_only_trial(scenario: Scenario, seed: int) -> TrialRecord:
    """Block-1 sensing without the beamforming legs (RMSE figures)."""
    from .geometry import build_channels
    from .harness import trial_rngs
    from .localization import rmse, sense_locations
    from .signals import PhaseShiftConfig, generate_symbols, receive_at_sub_irs

    rngs = trial_rngs(seed)
    record = TrialRecord(seed=seed)
    users = scenario.place_users(rngs["placement"])
    record.users_true = users
    channels = build_channels(scenario, users, rngs["channels"])
    theta1 = PhaseShiftConfig.random(
        {1: scenario.panels[0].total}, scenario.bits, rngs["theta_block1"]
    )
    symbols = generate_symbols(scenario.k_users, scenario.tau1, rngs["symbols_block1"])
    try:
        snap2 = receive_at_sub_irs(
            channels, theta1, symbols, scenario.rho, scenario.sigma2, 2, rngs["noise_block1"]
        )
        snap3 = receive_at_sub_irs(
            channels, theta1, symbols, scenario.rho, scenario.sigma2, 3, rngs["noise_block1"]
        )
        est = sense_locations(snap2, snap3, scenario, block=1)
        record.positions_block1 = est.positions
        record.rmse_block1 = rmse(est.positions, users)
        record.rmse_block1_raw = rmse(est.positions, users, assign=False)
    except Exception as exc:
        record.failures.append(f"sense_block1: {exc}")
    return record


def _run_one(args) -> tuple:
    scenario, spec, point, trial = args
    varied = apply_axis(scenario, spec.axis, spec.values[point])
    seed = trial_seed(scenario.seed, point, trial)
    if spec.resolved_mode() == "sense":
        record = _sense_only_trial(varied, seed)
    else:
        record = run_trial(varied, seed, with_baselines=True)
    return point, trial, record


_METRICS_SENSE = ("rmse_block1",)
_METRICS_FULL = (
    "rmse_block1",
    "rmse_block2",
    "rate_isac",
    "rate_isac_random",
    "rate_isac_genie",
    "rate_pc",
    "rate_pc_random",
    "rate_pc_genie",
    "rate_overall",
)


def aggregate_rows(spec: SweepSpec, master_seed: int, results: dict) -> list:
    """Long-format rows: one per (sweep value, metric), aggregated over the
    successful trials; a `failures` row carries the failed-trial count."""
    metrics = _METRICS_SENSE if spec.resolved_mode() == "sense" else _METRICS_FULL
    rows = []
    for point, value in enumerate(spec.values):
        records = results[point]
        for metric in metrics:
            samples = np.array(
                [getattr(r, metric) for r in records if getattr(r, metric) is not None],
                dtype=float,
            )
            finite = samples[np.isfinite(samples)]
            if finite.size == 0:
                stats = dict.fromkeys(("mean", "p10", "p50", "p90"), np.nan)
            else:
                stats = {
                    "mean": finite.mean(),
                    "p10": np.percentile(finite, 10),
                    "p50": np.percentile(finite, 50),
                    "p90": np.percentile(finite, 90),
                }
            rows.append(
                {
                    "sweep_value": value,
                    "metric": metric,
                    **stats,
                    "trials": int(finite.size),
                    "seed": master_seed,
                }
            )
        n_failed = sum(1 for r in records if r.failures)
        rows.append(
            {
                "sweep_value": value,
                "metric": "failures",
                "mean": float(n_failed),
                "p10": 0.0,
                "p50": 0.0,
                "p90": 0.0,
                "trials": len(records),
                "seed": master_seed,
            }
        )
    rows.sort(key=lambda r: (float(r["sweep_value"]), r["metric"]))
    return rows


def write_csv(rows: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key in ("mean", "p10", "p50", "p90"):
                out[key] = format(float(out[key]), ".12g")
            writer.writerow(out)


def run_sweep(
    scenario: Scenario, spec: SweepSpec, out_dir, workers: int = 1
) -> Path:
    """Run all sweep points and write `sweep_<axis>.csv` into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (scenario, spec, point, trial)
        for point in range(len(spec.values))
        for trial in range(spec.trials)
    ]
    results = {point: [None] * spec.trials for point in range(len(spec.values))}
    if workers <= 1 or len(tasks) <= 1:
        for point, trial, record in map(_run_one, tasks):
            results[point][trial] = record
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for point, trial, record in pool.map(_run_one, tasks):
                results[point][trial] = record
    rows = aggregate_rows(spec, scenario.seed, results) if spec.trials > 0 else []
    path = out_dir / f"sweep_{spec.axis}.csv"
    write_csv(rows, path)
    return path
