"""Fusing two panels' angle estimates into user positions.

The estimators in `doa` output phase-progression angles; everything
geometric here divides by pi to work with direction cosines before
triangulating, per the half-wavelength identity u = pi * cos.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .doa import (
    AoaPairSet,
    esprit_axis,
    exclude_inter_irs,
    fbss_covariance,
    music_pair,
)
from .errors import (
    DegenerateGeometryError,
    IllConditionedError,
    MatchingFailureError,
)
from .geometry import effective_angles, path_gain_magnitude, steering_ura
from .signals import SnapshotBlock

_GRAM_COND_LIMIT = 1e12


@dataclass(frozen=True)
class PathLossEstimates:
    """Per-user path-loss magnitudes at one panel, plus the aggregate
    magnitude of the passive-panel reflection (exposed, unused downstream)."""

    user_magnitudes: np.ndarray  # (K,)
    passive_aggregate: float
    panel: int


def path_losses_from_covariance(
    r: np.ndarray, steering: np.ndarray, rho: float, sigma2: float
) -> np.ndarray:
    """Magnitudes from the sandwiched pseudo-inverse of the covariance.

    R_beta = (1/rho) * G^{-1} B^H (R - sigma2 I) B G^{-1} with G = B^H B;
    returns sqrt of the real diagonal, clamped at zero (finite-sample noise
    subtraction can dip below zero).
    """
    b = np.asarray(steering)
    gram = b.conj().T @ b
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > _GRAM_COND_LIMIT:
        raise IllConditionedError(f"steering matrix is rank deficient (cond={cond:.3e})")
    centered = r - sigma2 * np.eye(r.shape[0])
    inner = np.linalg.solve(gram, b.conj().T @ centered @ b)
    r_beta = np.linalg.solve(gram, inner.conj().T).conj().T / rho
    return np.sqrt(np.clip(np.real(np.diag(r_beta)), 0.0, None))


def estimate_path_losses(
    snapshots: SnapshotBlock, pair_set: AoaPairSet, scenario
) -> PathLossEstimates:
    """Estimate |alpha| for each matched user pair at one semi-passive panel.

    The steering matrix stacks the K estimated user pairs and the known
    passive-to-panel link direction; the sample covariance comes from the
    full-panel snapshots of the same block.
    """
    panel = pair_set.panel
    geom = scenario.panels[panel - 1]
    x = snapshots.samples
    r_hat = x @ x.conj().T / x.shape[1]
    inter = effective_angles(scenario.q_irs[0], scenario.q_irs[panel - 1])
    columns = [steering_ura(u, v, geom) for u, v in pair_set.pairs]
    columns.append(steering_ura(inter.u, inter.v, geom))
    b = np.stack(columns, axis=1)
    mags = path_losses_from_covariance(r_hat, b, scenario.rho, scenario.sigma2)
    return PathLossEstimates(
        user_magnitudes=mags[:-1], passive_aggregate=float(mags[-1]), panel=panel
    )


@dataclass(frozen=True)
class CandidateLocation:
    """One triangulated candidate from a (panel-2 pair, panel-3 pair) combo."""

    position: np.ndarray  # (3,)
    d2: float
    d3: float
    losses: np.ndarray  # (2,) predicted |alpha| at panels 2, 3; +inf if infeasible
    feasible: bool


def _infeasible(d2: float = np.nan, d3: float = np.nan) -> CandidateLocation:
    return CandidateLocation(
        position=np.full(3, np.nan),
        d2=d2,
        d3=d3,
        losses=np.full(2, np.inf),
        feasible=False,
    )


def triangulate(pair2, pair3, scenario) -> CandidateLocation:
    """Closed-form user position from one angle pair per panel.

    Solves the 4x4 linear system in (y, z, d2, d3), then picks the x branch
    minimizing the mismatch between the two sphere intersections (ties go to
    the larger x; users sit on the positive-x side of the panels).  Negative
    ranges or radicands mark the candidate infeasible with +inf predicted
    loss so matching never selects it.
    """
    u2, v2 = np.asarray(pair2, dtype=float) / np.pi
    u3, v3 = np.asarray(pair3, dtype=float) / np.pi
    x2, y2, z2 = scenario.q_irs[1]
    x3, y3, z3 = scenario.q_irs[2]
    den = u3 * v2 - u2 * v3
    if abs(den) < 1e-12:
        raise DegenerateGeometryError(
            f"sight lines are parallel in the y-z plane (denominator {den:.3e})"
        )
    d2 = (u3 * (z2 - z3) - v3 * (y2 - y3)) / den
    d3 = (u2 * (z3 - z2) - v2 * (y3 - y2)) / -den
    if d2 <= 0 or d3 <= 0:
        return _infeasible(d2, d3)
    y = y2 - u2 * d2
    z = z2 - v2 * d2
    rad2 = d2**2 - (y - y2) ** 2 - (z - z2) ** 2
    rad3 = d3**2 - (y - y3) ** 2 - (z - z3) ** 2
    tol2, tol3 = 1e-12 * d2**2, 1e-12 * d3**2
    if rad2 < -tol2 or rad3 < -tol3:
        return _infeasible(d2, d3)
    dx2 = np.sqrt(max(rad2, 0.0))
    dx3 = np.sqrt(max(rad3, 0.0))
    omega2 = np.array([x2 + dx2, x2 + dx2, x2 - dx2, x2 - dx2])
    omega3 = np.array([x3 + dx3, x3 - dx3, x3 + dx3, x3 - dx3])
    diffs = np.abs(omega2 - omega3)
    near_best = diffs <= diffs.min() + 1e-12 * max(1.0, diffs.min())
    x = float(omega2[near_best].max())
    position = np.array([x, y, z])
    model = scenario.pathloss
    losses = np.array(
        [
            path_gain_magnitude(
                float(np.linalg.norm(position - scenario.q_irs[i])), model.exp_u2i, model
            )
            for i in (1, 2)
        ]
    )
    return CandidateLocation(
        position=position, d2=float(d2), d3=float(d3), losses=losses, feasible=True
    )


@dataclass(frozen=True)
class LocationEstimate:
    """Estimated user positions for one time block, ordered by the panel-2
    pair index they were matched from."""

    positions: np.ndarray  # (K, 3)
    block: int


def match_aoas(
    candidates, losses2: PathLossEstimates, losses3: PathLossEstimates, block: int = 1
) -> LocationEstimate:
    """Assign panel-3 pairs to panel-2 pairs by path-loss consistency.

    Iterates l = 1..K, each time picking the remaining s minimizing the
    Euclidean distance between the candidate's predicted losses and the
    measured [|alpha_2l|, |alpha_3s|], then retiring s.
    """
    k = len(candidates)
    remaining = list(range(k))
    positions = np.zeros((k, 3))
    for l in range(k):
        metrics = []
        for s in remaining:
            cand = candidates[l][s]
            measured = np.array(
                [losses2.user_magnitudes[l], losses3.user_magnitudes[s]]
            )
            metrics.append(float(np.linalg.norm(cand.losses - measured)))
        best = int(np.argmin(metrics))
        if not np.isfinite(metrics[best]):
            raise MatchingFailureError(
                f"all candidates infeasible for panel-2 pair {l}"
            )
        s_hat = remaining.pop(best)
        positions[l] = candidates[l][s_hat].position
    return LocationEstimate(positions=positions, block=block)


def sense_locations(
    snap2: SnapshotBlock, snap3: SnapshotBlock, scenario, block: int = 1
) -> LocationEstimate:
    """Full multi-user location pipeline for one time block.

    Per panel: smoothed covariance, per-axis TLS angles, noise-subspace
    pairing, inter-panel exclusion, path-loss estimation.  Then all K^2
    triangulations and the loss-consistency matching.
    """
    k = scenario.k_users
    user_pairs = {}
    losses = {}
    for snap in (snap2, snap3):
        panel = snap.panel
        ms = scenario.micro_set(panel)
        cov = fbss_covariance(snap, ms, model_order=k + 1)
        cand_u = esprit_axis(cov, ms, "y")
        cand_v = esprit_axis(cov, ms, "z")
        paired = AoaPairSet(
            pairs=music_pair(cand_u, cand_v, cov, ms), panel=panel, block=block
        )
        user_pairs[panel] = exclude_inter_irs(paired, scenario)
        losses[panel] = estimate_path_losses(snap, user_pairs[panel], scenario)
    candidates = []
    for l in range(k):
        row = []
        for s in range(k):
            try:
                row.append(
                    triangulate(
                        user_pairs[2].pairs[l], user_pairs[3].pairs[s], scenario
                    )
                )
            except DegenerateGeometryError:
                row.append(_infeasible())
        candidates.append(row)
    return match_aoas(candidates, losses[2], losses[3], block=block)


def rmse(
    estimated: np.ndarray, truth: np.ndarray, assign: bool = True
) -> float:
    """Root mean square position error over users, in meters.

    With `assign`, estimates are matched to true users by minimum total
    squared distance before averaging, so label permutations do not count
    as error; without it, positions are compared in the given order.
    """
    est = np.atleast_2d(np.asarray(estimated, dtype=float))
    tru = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape != tru.shape:
        raise ValueError(f"cardinality mismatch: {est.shape} vs {tru.shape}")
    if assign:
        cost = np.sum((est[:, None, :] - tru[None, :, :]) ** 2, axis=2)
        rows, cols = linear_sum_assignment(cost)
        sq = cost[rows, cols].mean()
    else:
        sq = np.mean(np.sum((est - tru) ** 2, axis=1))
    return float(np.sqrt(sq))
