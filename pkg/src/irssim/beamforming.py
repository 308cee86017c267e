"""Sensing-based combiner and phase-shift design.

ISAC period: the BS combiner reduces to a matched filter on the panel-1
arrival direction regardless of the reflect configuration, so only the
passive panel's discrete phases are optimized, by cross-entropy search over
a surrogate sum rate built from sensed channel magnitudes.

PC period: the per-panel gain phases are unobservable from location sensing
alone; their pairwise offsets are recovered from received-power records
taken under random probing beams, after which a joint cross-entropy search
over all panels' phases with a per-candidate zero-forcing combiner
maximizes the surrogate sum rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllConditionedError, InsufficientDataError
from .geometry import (
    ChannelSet,
    effective_angles,
    path_gain_magnitude,
    steering_ula,
    steering_ura,
)
from .signals import phase_alphabet, rate_from_gains

_ZF_COND_LIMIT = 1e12


def mrc_combiner(scenario) -> np.ndarray:
    """Matched-filter BS combiner, one identical unit-norm column per user.

    Every column is a(u)/sqrt(N) at the panel-1 arrival direction; the
    passive panel's configuration drops out of the maximization, so the
    combiner needs geometry only.
    """
    ang = effective_angles(scenario.q_irs[0], scenario.q_bs)
    w = steering_ula(ang.u, scenario.n_bs) / np.sqrt(scenario.n_bs)
    return np.tile(w[:, None], (1, scenario.k_users))


@dataclass(frozen=True)
class SensedChannelMagnitude:
    """Phase-stripped user channel reconstructed from a sensed position."""

    magnitude: float
    u: float
    v: float
    vector: np.ndarray  # (M_i,) = magnitude * steering at the sensed angles


def sensed_channel(position, panel: int, scenario) -> SensedChannelMagnitude:
    """h_abs at one panel from an estimated user position: log-distance
    magnitude at the sensed range times steering at the sensed direction."""
    q = scenario.q_irs[panel - 1]
    pos = np.asarray(position, dtype=float)
    d = float(np.linalg.norm(pos - q))
    ang = effective_angles(pos, q)
    model = scenario.pathloss
    mag = path_gain_magnitude(d, model.exp_u2i, model)
    vec = mag * steering_ura(ang.u, ang.v, scenario.panels[panel - 1])
    return SensedChannelMagnitude(magnitude=mag, u=ang.u, v=ang.v, vector=vec)


def sensed_user_matrix(positions: np.ndarray, panel: int, scenario) -> np.ndarray:
    """(M_i, K) matrix of sensed h_abs columns for one panel."""
    cols = [sensed_channel(p, panel, scenario).vector for p in np.atleast_2d(positions)]
    return np.stack(cols, axis=1)


# -- cross-entropy engine ------------------------------------------------------


@dataclass(frozen=True)
class CeParams:
    """Cross-entropy search parameters.

    `smoothing` is the weight on the fresh elite frequencies in the
    probability update; 1.0 reproduces the plain elite-frequency refit.
    """

    samples: int
    elites: int
    bits: int
    kappa: float = 1e-3
    max_iters: int = 50
    smoothing: float = 1.0

    def __post_init__(self):
        if not (1 <= self.elites <= self.samples):
            raise ValueError("need 1 <= elites <= samples")
        if self.kappa <= 0:
            raise ValueError("stop threshold kappa must be positive")
        if self.max_iters < 1:
            raise ValueError("need at least one iteration")
        if not (0.0 < self.smoothing <= 1.0):
            raise ValueError("smoothing must lie in (0, 1]")


@dataclass
class CeState:
    """Categorical distribution over the phase alphabet, one column per
    element; every column stays on the probability simplex."""

    probabilities: np.ndarray  # (2^bits, n_elements)
    iteration: int = 0


@dataclass(frozen=True)
class CeResult:
    indices: np.ndarray  # (n_elements,) best phase indices observed
    score: float
    iterations: int
    converged: bool
    state: CeState


def _sample_categorical(prob: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n rows of per-column categorical indices from (levels, M) prob."""
    levels, m = prob.shape
    u = rng.random((n, m))
    if levels <= 32:
        # broadcast inverse-CDF; memory n*m*levels stays small
        cdf = np.cumsum(prob.T, axis=1)
        idx = (u[:, :, None] >= cdf[None, :, :]).sum(axis=-1)
    else:
        # one flattened searchsorted: column m's CDF offset by m keeps the
        # concatenation monotone, queries carry the same offset
        cdf = np.cumsum(prob, axis=0)
        flat = (cdf + np.arange(m)[None, :]).T.ravel()
        idx = np.searchsorted(flat, (u + np.arange(m)[None, :]).ravel(), side="right")
        idx = idx.reshape(n, m) - np.arange(m)[None, :] * levels
    return np.clip(idx, 0, levels - 1, out=idx)


def _elite_frequencies(elite_idx: np.ndarray, n_levels: int) -> np.ndarray:
    """(levels, M) empirical distribution of the elite samples per element."""
    n_elite, m = elite_idx.shape
    freq = np.zeros((n_levels, m))
    cols = np.broadcast_to(np.arange(m), elite_idx.shape)
    np.add.at(freq, (elite_idx.ravel(), cols.ravel()), 1.0)
    return freq / n_elite


def ce_optimize(score_fn, n_elements: int, params: CeParams, rng: np.random.Generator) -> CeResult:
    """Generic cross-entropy loop over discrete phase indices.

    Each iteration samples `params.samples` candidate index rows from the
    current per-element categorical distribution, scores them in one batch,
    refits the distribution to the `params.elites` best (stable sort: ties
    go to the first sampled), and stops once the sampled scores' spread
    drops below kappa or the iteration cap is hit.  The best candidate ever
    observed is returned.
    """
    n_levels = 2**params.bits
    state = CeState(probabilities=np.full((n_levels, n_elements), 1.0 / n_levels))
    best_idx = None
    best_score = -np.inf
    converged = False
    plain = params.smoothing == 1.0
    elite_idx = None
    cols = np.arange(n_elements)[None, :]
    for _ in range(params.max_iters):
        state.iteration += 1
        if plain:
            # drawing from the elite-frequency categorical is exactly drawing
            # a uniformly random elite row per element
            if elite_idx is None:
                idx = rng.integers(0, n_levels, size=(params.samples, n_elements))
            else:
                rows = rng.integers(0, elite_idx.shape[0], size=(params.samples, n_elements))
                idx = elite_idx[rows, cols]
        else:
            idx = _sample_categorical(state.probabilities, params.samples, rng)
        scores = np.asarray(score_fn(idx), dtype=float)
        order = np.argsort(-scores, kind="stable")
        if scores[order[0]] > best_score:
            best_score = float(scores[order[0]])
            best_idx = idx[order[0]].copy()
        elite_idx = idx[order[: params.elites]]
        freq = _elite_frequencies(elite_idx, n_levels)
        state.probabilities = (
            params.smoothing * freq + (1.0 - params.smoothing) * state.probabilities
        )
        if float(scores.max() - scores.min()) < params.kappa:
            converged = True
            break
    return CeResult(
        indices=best_idx,
        score=best_score,
        iterations=state.iteration,
        converged=converged,
        state=state,
    )


def _phase_table(bits: int) -> np.ndarray:
    """Unit-circle lookup for the discrete alphabet (cheaper than exp per draw)."""
    return np.exp(1j * phase_alphabet(bits))


def _isac_gain_batch(
    idx: np.ndarray, w_rows: np.ndarray, h_users: np.ndarray, bits: int
) -> np.ndarray:
    """(S, K, K) combined gains for candidate index rows during ISAC."""
    xi = _phase_table(bits)[idx]
    k, m = w_rows.shape
    j = h_users.shape[1]
    # G[s,k,j] = sum_m xi[s,m] * (w_rows[k,m] * h_users[m,j]) as one GEMM
    weights = (w_rows[:, None, :] * h_users.T[None, :, :]).reshape(k * j, m)
    return (xi @ weights.T).reshape(-1, k, j)


def ce_optimize_isac(
    h_abs: np.ndarray,
    h_i2b_1: np.ndarray,
    combiner: np.ndarray,
    rho: float,
    sigma2: float,
    params: CeParams,
    rng: np.random.Generator,
) -> CeResult:
    """Optimize the passive panel's phase indices against the sensed-channel
    surrogate sum rate (combiner fixed)."""
    w_rows = combiner.conj().T @ h_i2b_1  # (K, M1)

    def score(idx):
        return rate_from_gains(_isac_gain_batch(idx, w_rows, h_abs, params.bits), rho, sigma2)

    return ce_optimize(score, h_i2b_1.shape[1], params, rng)


# -- zero-forcing --------------------------------------------------------------


def zf_combiner(h_eq: np.ndarray) -> np.ndarray:
    """Unit-norm zero-forcing receive combiner for an (N, K) effective channel.

    Computed as H (H^H H)^{-1} with columns normalized, which nulls the cross
    terms under the w^H convention of the rate expressions.
    """
    n, k = h_eq.shape
    if k > n:
        raise ValueError(f"need K <= N, got K={k}, N={n}")
    cond = np.linalg.cond(h_eq)
    if not np.isfinite(cond) or cond > _ZF_COND_LIMIT:
        raise IllConditionedError(f"effective channel condition number {cond:.3e}")
    w = h_eq @ np.linalg.inv(h_eq.conj().T @ h_eq)
    return w / np.linalg.norm(w, axis=0, keepdims=True)


# -- phase-offset recovery -------------------------------------------------------


@dataclass(frozen=True)
class PowerRecord:
    """Probing record from the head of the PC period: the full phase-index
    configuration and the BS received signal strength of each slot."""

    indices: np.ndarray  # (C, M) int
    powers: np.ndarray  # (C,)
    bits: int

    @property
    def slots(self) -> int:
        return self.powers.shape[0]


def received_power(
    h_to_bs: np.ndarray,
    xi: np.ndarray,
    h_users: np.ndarray,
    combiner: np.ndarray,
    rho: float,
    sigma2: float,
) -> float:
    """BS received signal strength: rho * sum_k |w_k^H H diag(xi) h_k|^2 + sigma2."""
    gains = np.einsum(
        "nk,nm,m,mk->k", combiner.conj(), h_to_bs, xi, h_users, optimize=True
    )
    return float(rho * np.sum(np.abs(gains) ** 2) + sigma2)


def record_powers_pc(
    channels: ChannelSet,
    combiner: np.ndarray,
    xi1_indices: np.ndarray,
    bits: int,
    c_slots: int,
    rho: float,
    sigma2: float,
    rng: np.random.Generator,
) -> PowerRecord:
    """Probe the stacked channel for `c_slots` slots: panel 1 frozen at its
    ISAC optimum, panels 2-3 random each slot; record the true received power."""
    sizes = [h.shape[0] for h in channels.h_u2i]
    h = channels.h_i2b_stacked()
    hu = channels.h_u2i_stacked()
    alphabet = phase_alphabet(bits)
    records = np.empty((c_slots, sum(sizes)), dtype=np.int64)
    powers = np.empty(c_slots)
    for t in range(c_slots):
        idx = np.concatenate(
            [
                np.asarray(xi1_indices, dtype=np.int64),
                rng.integers(0, 2**bits, size=sizes[1]),
                rng.integers(0, 2**bits, size=sizes[2]),
            ]
        )
        records[t] = idx
        powers[t] = received_power(h, np.exp(1j * alphabet[idx]), hu, combiner, rho, sigma2)
    return PowerRecord(indices=records, powers=powers, bits=bits)


@dataclass(frozen=True)
class PhaseOffsetGrid:
    """Discrete search grid for the per-panel gain phase offsets."""

    bits: int

    @property
    def values(self) -> np.ndarray:
        return phase_alphabet(self.bits)


@dataclass(frozen=True)
class OffsetEstimate:
    delta: np.ndarray  # (2, K) phases, rows = panels 2 and 3
    exhaustive: bool
    objective: float


def apply_offsets(h_abs_panels, delta: np.ndarray) -> np.ndarray:
    """Stack per-panel sensed channels with offsets applied to panels 2-3.

    Returns the (M, K) matrix whose column k is
    [h_abs_1k; e^{j delta_2k} h_abs_2k; e^{j delta_3k} h_abs_3k].
    """
    h1, h2, h3 = h_abs_panels
    return np.concatenate(
        [h1, h2 * np.exp(1j * delta[0])[None, :], h3 * np.exp(1j * delta[1])[None, :]],
        axis=0,
    )


def _offset_power_tables(
    record: PowerRecord,
    h_abs_panels,
    h_i2b_panels,
    combiner: np.ndarray,
    grid: PhaseOffsetGrid,
    rho: float,
) -> np.ndarray:
    """(K, A, A, C) per-user power terms for every (delta2, delta3) grid combo.

    The modeled power splits per user as rho * |c1 + e^{j d2} c2 + e^{j d3} c3|^2
    with c_i(t) = w_k^H H_i diag(xi_i(t)) h_abs_i,k, so each user's table only
    has A^2 entries.
    """
    alphabet = phase_alphabet(record.bits)
    sizes = [h.shape[0] for h in h_abs_panels]
    bounds = np.cumsum([0] + sizes)
    k = h_abs_panels[0].shape[1]
    c = record.slots
    terms = np.empty((3, k, c), dtype=complex)
    xi_all = np.exp(1j * alphabet[record.indices])  # (C, M)
    for i in range(3):
        xi_i = xi_all[:, bounds[i] : bounds[i + 1]]
        terms[i] = np.einsum(
            "nk,nm,tm,mk->kt",
            combiner.conj(),
            h_i2b_panels[i],
            xi_i,
            h_abs_panels[i],
            optimize=True,
        )
    w = np.exp(1j * grid.values)
    mix = (
        terms[0][:, None, None, :]
        + w[None, :, None, None] * terms[1][:, None, None, :]
        + w[None, None, :, None] * terms[2][:, None, None, :]
    )
    return rho * np.abs(mix) ** 2


def estimate_phase_offsets(
    record: PowerRecord,
    h_abs_panels,
    h_i2b_panels,
    combiner: np.ndarray,
    grid: PhaseOffsetGrid,
    rho: float,
    sigma2: float,
    budget: int = 20_000_000,
) -> OffsetEstimate:
    """Recover the per-panel gain phase offsets from the probing record.

    Minimizes f(D) = sum_t |P_model(D, t) - P_measured(t)| over the offset
    grid: exhaustively when the A^{2K} space fits the budget, otherwise by
    three sweeps of per-coordinate descent from zero (flagged via
    `exhaustive=False`).
    """
    if record.slots == 0:
        raise InsufficientDataError("no probing slots recorded")
    k = h_abs_panels[0].shape[1]
    a = 2**grid.bits
    tables = _offset_power_tables(record, h_abs_panels, h_i2b_panels, combiner, grid, rho)
    residual_base = sigma2 - record.powers  # (C,)

    n_combos = a ** (2 * k)
    if n_combos <= budget:
        # exhaustive scan; a combo id stacks per-user (d2*a + d3) digits in
        # base a^2, user 1 most significant.  The trailing one or two users
        # are pre-combined into a dense table so the hot loop is gather-free.
        flat_tables = tables.reshape(k, a * a, record.slots)
        if k == 1:
            tail = flat_tables[0]
        else:
            tail = (flat_tables[-2][:, None, :] + flat_tables[-1][None, :, :]).reshape(
                -1, record.slots
            )
        lead_users = max(k - 2, 0)
        best_f = np.inf
        best_combo = 0
        for lead in range(a ** (2 * lead_users)):
            base = residual_base.copy()
            rest = lead
            for kk in range(lead_users - 1, -1, -1):
                base = base + flat_tables[kk, rest % (a * a)]
                rest //= a * a
            f = np.abs(base[None, :] + tail).sum(axis=1)
            pos = int(np.argmin(f))
            if f[pos] < best_f:
                best_f = float(f[pos])
                best_combo = lead * tail.shape[0] + pos
        digits = []
        rest = best_combo
        for _ in range(k):
            digits.append(rest % (a * a))
            rest //= a * a
        digits.reverse()  # user 1 first
        pairs = np.array([(d // a, d % a) for d in digits])
        return OffsetEstimate(
            delta=np.stack([grid.values[pairs[:, 0]], grid.values[pairs[:, 1]]]),
            exhaustive=True,
            objective=best_f,
        )

    # per-user descent: each user's (delta_2k, delta_3k) pair is one block,
    # searched jointly over its A^2 grid while the other users stay fixed
    d2_idx = np.zeros(k, dtype=np.int64)
    d3_idx = np.zeros(k, dtype=np.int64)
    best_f = np.inf
    for _ in range(3):
        for kk in range(k):
            others = residual_base.copy()
            for jj in range(k):
                if jj != kk:
                    others = others + tables[jj, d2_idx[jj], d3_idx[jj]]
            f_grid = np.abs(others[None, None, :] + tables[kk]).sum(axis=2)  # (A, A)
            flat = int(np.argmin(f_grid))
            d2_idx[kk], d3_idx[kk] = np.unravel_index(flat, (a, a))
            best_f = float(f_grid.ravel()[flat])
    return OffsetEstimate(
        delta=np.stack([grid.values[d2_idx], grid.values[d3_idx]]),
        exhaustive=False,
        objective=best_f,
    )


# -- joint PC optimization -------------------------------------------------------


def _pc_score_batch(
    idx: np.ndarray,
    h_i2b: np.ndarray,
    h_delta: np.ndarray,
    rho: float,
    sigma2: float,
    bits: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Scores and effective channels for a batch of PC candidates.

    Each candidate gets its own zero-forcing combiner; candidates whose
    effective channel loses rank score zero.
    """
    xi = _phase_table(bits)[idx]  # (S, M)
    s, _ = xi.shape
    n, k = h_i2b.shape[0], h_delta.shape[1]
    # one GEMM: weights[m, n*k] = h_i2b[n, m] * h_delta[m, k]
    weights = (h_i2b.T[:, :, None] * h_delta[:, None, :]).reshape(-1, n * k)
    h_eq = (xi @ weights).reshape(s, n, k)
    gram = np.einsum("snk,snl->skl", h_eq.conj(), h_eq, optimize=True)
    eigs = np.linalg.eigvalsh(gram)
    bad = (eigs[:, -1] <= 0) | (eigs[:, 0] <= eigs[:, -1] * 1e-24)
    safe = np.where(bad[:, None, None], np.eye(k)[None], gram)
    w = h_eq @ np.linalg.inv(safe)
    norms = np.linalg.norm(w, axis=1, keepdims=True)
    w = w / np.where(norms > 0, norms, 1.0)
    gains = np.einsum("snk,snj->skj", w.conj(), h_eq, optimize=True)
    scores = rate_from_gains(gains, rho, sigma2)
    scores[bad] = 0.0
    return scores, h_eq


def ce_optimize_pc(
    h_delta: np.ndarray,
    h_i2b: np.ndarray,
    rho: float,
    sigma2: float,
    params: CeParams,
    rng: np.random.Generator,
) -> tuple[CeResult, np.ndarray]:
    """Joint search over all panels' phases with per-candidate ZF combining.

    Returns the best configuration observed and its zero-forcing combiner.
    """

    def score(idx):
        return _pc_score_batch(idx, h_i2b, h_delta, rho, sigma2, params.bits)[0]

    result = ce_optimize(score, h_i2b.shape[1], params, rng)
    xi_best = np.exp(1j * phase_alphabet(params.bits)[result.indices])
    h_eq_best = (h_i2b * xi_best[None, :]) @ h_delta
    return result, zf_combiner(h_eq_best)
