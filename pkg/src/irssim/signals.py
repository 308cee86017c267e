"""Symbol generation, received-signal synthesis, and achievable rate.

Powers are linear (mW) throughout; dBm conversion happens at config parse.
Complex AWGN is circularly symmetric with independent real/imaginary parts
of variance sigma2/2 each.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ChannelSet


def phase_alphabet(bits: int) -> np.ndarray:
    """The 2^bits uniformly spaced reflection phases {2*pi*l / 2^bits}."""
    if bits < 1:
        raise ValueError(f"bit-quantization number must be >= 1, got {bits}")
    n = 2**bits
    return 2.0 * np.pi * np.arange(n) / n


@dataclass(frozen=True)
class SymbolBlock:
    """Unit-modulus user symbols, one row per user."""

    samples: np.ndarray  # (K, T) complex
    alphabet: str = "qpsk"

    @property
    def k_users(self) -> int:
        return self.samples.shape[0]

    @property
    def slots(self) -> int:
        return self.samples.shape[1]


def generate_symbols(k_users: int, slots: int, rng: np.random.Generator) -> SymbolBlock:
    """Uniform-random QPSK streams: unit modulus, zero mean, uncorrelated."""
    if slots < 1:
        raise ValueError(f"need at least one slot, got {slots}")
    idx = rng.integers(0, 4, size=(k_users, slots))
    samples = np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * idx))
    return SymbolBlock(samples=samples)


@dataclass(frozen=True)
class PhaseShiftConfig:
    """Discrete phase indices per panel plus the derived reflection beams."""

    indices: dict  # panel id -> (M_i,) int array into the alphabet
    bits: int

    def __post_init__(self):
        hi = 2**self.bits
        for panel, idx in self.indices.items():
            arr = np.asarray(idx)
            if arr.ndim != 1 or np.any(arr < 0) or np.any(arr >= hi):
                raise ValueError(f"panel {panel} indices out of range for b={self.bits}")

    @classmethod
    def random(cls, sizes: dict, bits: int, rng: np.random.Generator) -> "PhaseShiftConfig":
        indices = {p: rng.integers(0, 2**bits, size=m) for p, m in sizes.items()}
        return cls(indices=indices, bits=bits)

    def xi(self, panel: int) -> np.ndarray:
        """Unit-modulus reflection vector of one panel."""
        return np.exp(1j * phase_alphabet(self.bits)[self.indices[panel]])

    def xi_full(self) -> np.ndarray:
        """Concatenated beam over covered panels in ascending panel order."""
        return np.concatenate([self.xi(p) for p in sorted(self.indices)])


@dataclass(frozen=True)
class SnapshotBlock:
    """Raw complex samples recorded at one semi-passive panel."""

    samples: np.ndarray  # (M_i, tau) complex
    panel: int
    block: int

    @property
    def slots(self) -> int:
        return self.samples.shape[1]


def awgn(shape, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """CN(0, sigma2) samples of the given shape."""
    scale = np.sqrt(sigma2 / 2.0)
    return rng.normal(scale=scale, size=shape) + 1j * rng.normal(scale=scale, size=shape)


def receive_at_sub_irs(
    channels: ChannelSet,
    theta1: PhaseShiftConfig,
    symbols: SymbolBlock,
    rho: float,
    sigma2: float,
    panel: int,
    rng: np.random.Generator,
    block: int = 1,
) -> SnapshotBlock:
    """Snapshots at a semi-passive panel: direct user signals plus the
    reflection through the passive panel plus AWGN.

    x_i(t) = sqrt(rho) * sum_k h_U2I,i,k s_k(t)
           + sqrt(rho) * H_I2I,i diag(xi_1) sum_k h_U2I,1,k s_k(t) + n_i(t)
    """
    if panel not in (2, 3):
        raise ValueError(f"only panels 2 and 3 sense; got panel {panel}")
    if set(theta1.indices) != {1}:
        raise ValueError("theta1 must configure exactly the passive panel")
    s = symbols.samples
    direct = channels.h_u2i[panel - 1] @ s
    via_passive = (channels.h_i2i[panel] * theta1.xi(1)[None, :]) @ (
        channels.h_u2i[0] @ s
    )
    noise = awgn(direct.shape, sigma2, rng)
    x = np.sqrt(rho) * direct + np.sqrt(rho) * via_passive + noise
    return SnapshotBlock(samples=x, panel=panel, block=block)


def _check_combiner(combiner: np.ndarray):
    norms = np.linalg.norm(combiner, axis=0)
    if not np.allclose(norms, 1.0, atol=1e-9):
        raise ValueError(f"combiner columns must be unit norm, got {norms}")


def receive_at_bs_isac(
    channels: ChannelSet,
    theta1: PhaseShiftConfig,
    combiner: np.ndarray,
    symbols: SymbolBlock,
    rho: float,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-user combined BS samples during the ISAC period (panel 1 only)."""
    _check_combiner(combiner)
    h_eff = (channels.h_i2b[0] * theta1.xi(1)[None, :]) @ channels.h_u2i[0]  # (N, K)
    y_clean = combiner.conj().T @ h_eff @ symbols.samples * np.sqrt(rho)
    noise = combiner.conj().T @ awgn((combiner.shape[0], symbols.slots), sigma2, rng)
    return y_clean + noise


def receive_at_bs_pc(
    channels: ChannelSet,
    theta: PhaseShiftConfig,
    combiner: np.ndarray,
    symbols: SymbolBlock,
    rho: float,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-user combined BS samples during the PC period (all panels stacked)."""
    _check_combiner(combiner)
    h_eff = (channels.h_i2b_stacked() * theta.xi_full()[None, :]) @ channels.h_u2i_stacked()
    y_clean = combiner.conj().T @ h_eff @ symbols.samples * np.sqrt(rho)
    noise = combiner.conj().T @ awgn((combiner.shape[0], symbols.slots), sigma2, rng)
    return y_clean + noise


def rate_from_gains(gains: np.ndarray, rho: float, sigma2: float) -> np.ndarray:
    """Sum rate from combined-channel gains G[..., k, j] = w_k^H H Theta h_j.

    SINR_k = rho|G_kk|^2 / (rho * sum_{j != k} |G_kj|^2 + sigma2); the all-zero
    row yields rate 0 rather than NaN.  Broadcasts over leading batch axes.
    """
    p = rho * np.abs(gains) ** 2
    signal = np.diagonal(p, axis1=-2, axis2=-1)
    interference = p.sum(axis=-1) - signal
    denom = interference + sigma2
    with np.errstate(invalid="ignore", divide="ignore"):
        sinr = np.where(signal > 0, signal / np.where(denom > 0, denom, 1.0), 0.0)
        sinr = np.where((signal > 0) & (denom == 0), np.inf, sinr)
    return np.log2(1.0 + sinr).sum(axis=-1)


def sum_rate(
    h_to_bs: np.ndarray,
    xi: np.ndarray,
    h_users: np.ndarray,
    combiner: np.ndarray,
    rho: float,
    sigma2: float,
) -> float:
    """Sum of log2(1 + SINR_k) for one reflect configuration.

    Parameters
    ----------
    h_to_bs : (N, M) IRS-to-BS channel (panel 1 alone or all panels stacked).
    xi : (M,) unit-modulus reflection beam over the same elements.
    h_users : (M, K) user-to-IRS channels, one column per user.
    combiner : (N, K) unit-norm receive combiners.
    """
    _check_combiner(combiner)
    gains = combiner.conj().T @ (h_to_bs * xi[None, :]) @ h_users
    return float(rate_from_gains(gains, rho, sigma2))


def isac_sum_rate(
    channels: ChannelSet,
    theta1: PhaseShiftConfig,
    combiner: np.ndarray,
    rho: float,
    sigma2: float,
) -> float:
    """ISAC-period rate: only the passive panel reflects."""
    return sum_rate(
        channels.h_i2b[0], theta1.xi(1), channels.h_u2i[0], combiner, rho, sigma2
    )


def pc_sum_rate(
    channels: ChannelSet,
    theta: PhaseShiftConfig,
    combiner: np.ndarray,
    rho: float,
    sigma2: float,
) -> float:
    """PC-period rate: all three panels reflect (stacked channels)."""
    return sum_rate(
        channels.h_i2b_stacked(),
        theta.xi_full(),
        channels.h_u2i_stacked(),
        combiner,
        rho,
        sigma2,
    )
