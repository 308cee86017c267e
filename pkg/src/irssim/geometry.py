"""3D scene geometry, array steering vectors, and LoS channel synthesis.

Conventions used throughout the package:

* Panels are uniform rectangular arrays in the y-o-z plane, half-wavelength
  spacing, flattened y-major: element (iy, iz) sits at flat index
  ``iy * rows_z + iz``, matching the Kronecker order of `steering_ura`
  (y factor first, z factor second).
* An "effective angle" is the per-element phase progression along an array
  axis.  At half-wavelength spacing it equals pi times the direction cosine
  of the propagation direction along that axis, so estimators work in the
  phase domain (u, v) and geometric routines divide by pi to recover
  cosines.
* Direction cosines for a link are taken along the propagation direction
  (source -> destination), evaluated identically for departure and arrival.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import DegenerateGeometryError

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import Scenario


def as_position(p) -> np.ndarray:
    """Coerce to a finite (3,) float position vector."""
    q = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(q)):
        raise ValueError(f"position must be finite, got {p!r}")
    return q


@dataclass(frozen=True)
class PanelGeometry:
    """A cols_y x rows_z rectangular panel (half-wavelength spacing)."""

    cols_y: int
    rows_z: int
    spacing: float = 0.5  # in wavelengths; the u = pi*cos identities assume 1/2

    def __post_init__(self):
        if self.cols_y < 1 or self.rows_z < 1:
            raise ValueError(
                f"panel dimensions must be >= 1, got {self.cols_y}x{self.rows_z}"
            )

    @property
    def total(self) -> int:
        return self.cols_y * self.rows_z


@dataclass(frozen=True)
class EffectiveAngles:
    """Phase-progression angles (u, v) and the direction cosines behind them."""

    u: float
    v: float
    cos_y: float
    cos_z: float

    @classmethod
    def from_cosines(cls, cos_y: float, cos_z: float) -> "EffectiveAngles":
        return cls(u=np.pi * cos_y, v=np.pi * cos_z, cos_y=cos_y, cos_z=cos_z)


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss: PL(d) = pl0_db + 10*eps*log10(d/d0) in dB."""

    pl0_db: float = 30.0
    d0: float = 1.0
    exp_u2i: float = 2.2
    exp_i2b: float = 2.3
    exp_i2i: float = 2.1

    def __post_init__(self):
        if self.d0 <= 0:
            raise ValueError("reference distance d0 must be positive")
        if min(self.exp_u2i, self.exp_i2b, self.exp_i2i) <= 0:
            raise ValueError("path loss exponents must be positive")


def steering_ula(u: float, n: int) -> np.ndarray:
    """Uniform linear array response: entry m = exp(j*m*u), m = 0..n-1."""
    if n < 1:
        raise ValueError(f"array needs at least one element, got n={n}")
    return np.exp(1j * u * np.arange(n))


def steering_ura(u: float, v: float, geometry: PanelGeometry) -> np.ndarray:
    """Rectangular panel response: kron(y factor at u, z factor at v).

    Flat index iy * rows_z + iz carries phase iy*u + iz*v.
    """
    return np.kron(
        steering_ula(u, geometry.cols_y), steering_ula(v, geometry.rows_z)
    )


def direction_cosines(src, dst) -> tuple[float, float]:
    """(cos_y, cos_z) of the propagation direction from src to dst."""
    src = as_position(src)
    dst = as_position(dst)
    delta = dst - src
    dist = float(np.linalg.norm(delta))
    if dist < 1e-12:
        raise DegenerateGeometryError(f"coincident points {src} and {dst}")
    return float(delta[1] / dist), float(delta[2] / dist)


def effective_angles(src, dst) -> EffectiveAngles:
    """Effective (u, v) of a wave departing src and arriving at dst."""
    cos_y, cos_z = direction_cosines(src, dst)
    return EffectiveAngles.from_cosines(cos_y, cos_z)


def path_gain_magnitude(d: float, exponent: float, model: PathLossModel) -> float:
    """Linear amplitude gain at distance d; distances below d0 clamp to d0."""
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    d = max(d, model.d0)
    loss_db = model.pl0_db + 10.0 * exponent * np.log10(d / model.d0)
    return float(10.0 ** (-loss_db / 20.0))


@dataclass(frozen=True)
class ChannelSet:
    """All complex channels of one coherence block.

    Every channel is rank one: a steering outer product scaled by a single
    complex gain whose magnitude follows the path loss model and whose phase
    is drawn uniformly per link.  Immutable after construction.

    h_i2b[i]   : (N, M_i)   sub-IRS i+1 -> BS
    h_u2i[i]   : (M_i, K)   user k -> sub-IRS i+1, column per user
    h_i2i[p]   : (M_p, M_1) passive panel -> semi-passive panel p (p in {2,3})
    """

    h_i2b: tuple
    h_u2i: tuple
    h_i2i: dict
    alpha_i2b: np.ndarray  # (3,) complex gains
    alpha_u2i: np.ndarray  # (3, K) complex gains
    alpha_i2i: np.ndarray  # (2,) complex gains for panels 2, 3

    @property
    def k_users(self) -> int:
        return self.alpha_u2i.shape[1]

    def h_i2b_stacked(self) -> np.ndarray:
        """(N, M) concatenation [panel1, panel2, panel3]."""
        return np.concatenate(self.h_i2b, axis=1)

    def h_u2i_stacked(self) -> np.ndarray:
        """(M, K) concatenation [panel1; panel2; panel3]."""
        return np.concatenate(self.h_u2i, axis=0)


def build_channels(
    scenario: "Scenario",
    user_positions: np.ndarray,
    rng: np.random.Generator,
    u2i_phases: np.ndarray | None = None,
) -> ChannelSet:
    """Assemble the full ChannelSet for one coherence block.

    Gain phases are drawn uniformly on [0, 2pi) from `rng` in a fixed order
    (I2B panels 1..3, then U2I (panel, user) row-major, then I2I panels 2..3)
    so a fixed seed reproduces the block bitwise.  `u2i_phases` (3, K)
    overrides the user-link phases; used by tests that need controlled
    phase offsets.

    Parameters
    ----------
    scenario : Scenario
        Provides panel geometries, positions, BS size and path loss model.
    user_positions : (K, 3) array
        True user locations for this block.
    """
    users = np.atleast_2d(np.asarray(user_positions, dtype=float))
    k = users.shape[0]
    model = scenario.pathloss

    phases_i2b = rng.uniform(0.0, 2.0 * np.pi, size=3)
    drawn_u2i = rng.uniform(0.0, 2.0 * np.pi, size=(3, k))
    phases_i2i = rng.uniform(0.0, 2.0 * np.pi, size=2)
    phases_u2i = drawn_u2i if u2i_phases is None else np.asarray(u2i_phases, float)

    h_i2b = []
    h_u2i = []
    alpha_i2b = np.zeros(3, dtype=complex)
    alpha_u2i = np.zeros((3, k), dtype=complex)
    for i in range(3):
        q_i = scenario.q_irs[i]
        panel = scenario.panels[i]

        # panel -> BS: ULA arrival at the BS uses the y cosine only
        ang = effective_angles(q_i, scenario.q_bs)
        d = float(np.linalg.norm(scenario.q_bs - q_i))
        gain = path_gain_magnitude(d, model.exp_i2b, model) * np.exp(
            1j * phases_i2b[i]
        )
        alpha_i2b[i] = gain
        a_bs = steering_ula(ang.u, scenario.n_bs)
        b_dep = steering_ura(ang.u, ang.v, panel)
        h_i2b.append(gain * np.outer(a_bs, b_dep.conj()))

        # users -> panel
        h_uk = np.zeros((panel.total, k), dtype=complex)
        for kk in range(k):
            ang_u = effective_angles(users[kk], q_i)
            d_u = float(np.linalg.norm(q_i - users[kk]))
            g = path_gain_magnitude(d_u, model.exp_u2i, model) * np.exp(
                1j * phases_u2i[i, kk]
            )
            alpha_u2i[i, kk] = g
            h_uk[:, kk] = g * steering_ura(ang_u.u, ang_u.v, panel)
        h_u2i.append(h_uk)

    h_i2i = {}
    alpha_i2i = np.zeros(2, dtype=complex)
    for idx, p in enumerate((2, 3)):
        q_from = scenario.q_irs[0]
        q_to = scenario.q_irs[p - 1]
        ang = effective_angles(q_from, q_to)
        d = float(np.linalg.norm(q_to - q_from))
        gain = path_gain_magnitude(d, model.exp_i2i, model) * np.exp(
            1j * phases_i2i[idx]
        )
        alpha_i2i[idx] = gain
        b_arr = steering_ura(ang.u, ang.v, scenario.panels[p - 1])
        b_dep = steering_ura(ang.u, ang.v, scenario.panels[0])
        h_i2i[p] = gain * np.outer(b_arr, b_dep.conj())

    return ChannelSet(
        h_i2b=tuple(h_i2b),
        h_u2i=tuple(h_u2i),
        h_i2i=h_i2i,
        alpha_i2b=alpha_i2b,
        alpha_u2i=alpha_u2i,
        alpha_i2i=alpha_i2i,
    )
