"""Experiment configuration: geometry, powers, protocol timing, algorithm
parameters, and the key = value config file format.

All powers enter in dBm and are converted to linear milliwatts once, here;
everything downstream is linear.  Distances are meters, slots are counts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .beamforming import CeParams
from .doa import MicroSurfaceSet, enumerate_micro_surfaces
from .geometry import PanelGeometry, PathLossModel, as_position


def dbm_to_linear(dbm: float) -> float:
    """dBm to linear milliwatts."""
    return float(10.0 ** (dbm / 10.0))


_DEFAULT_PANELS = ((32, 32), (12, 12), (12, 12))


@dataclass(frozen=True)
class Scenario:
    """One fully specified experiment; immutable, replace() to vary."""

    # population and arrays
    k_users: int = 3
    n_bs: int = 8
    panel_dims: tuple = _DEFAULT_PANELS  # ((cols_y, rows_z) per sub-IRS)

    # 3D scene (meters); panels face +x, users live on the z = 0 floor.  The
    # BS sits high on the user side so the three panels arrive at the BS
    # array from well-separated bearings (spatial multiplexing in the PC
    # period needs the per-panel steering vectors to be distinguishable);
    # the passive panel is mounted high so the inter-panel links arrive at
    # the sensing panels from above while users always arrive from below,
    # keeping the link direction resolvable from every user direction
    q_bs_xyz: tuple = (44.0, 0.0, 20.0)
    q_irs_xyz: tuple = ((-2.0, 0.0, 15.0), (-2.0, -10.0, 7.0), (-2.0, 10.0, 9.0))

    # user placement: "square" (uniform in a floor square), "ring" (fixed
    # 3D distance from panel 2 inside a sector), or "fixed" (explicit list)
    user_mode: str = "square"
    square_center: tuple = (4.0, 0.0)
    square_side: float = 10.0
    ring_distance: float = 10.0
    ring_sector_deg: float = 90.0
    # sector aim for ring mode, degrees from +x in the floor plane
    ring_azimuth_deg: float = 0.0
    users_fixed: tuple = ()
    # minimum pairwise user distance for random modes (0 disables the
    # rejection step; co-located users are unresolvable by any DoA method)
    min_user_separation: float = 0.0

    # powers (dBm)
    rho_dbm: float = 20.0
    sigma2_dbm: float = -80.0

    # protocol timing (slots): ISAC period = block 1 (tau1) + block 2, then PC.
    # The probing head needs c_slots >= 2*k_users scalar power measurements to
    # pin down the 2K panel phase offsets; 8 covers the K=3 default.
    t_total: int = 1200
    t1: int = 120
    tau1: int = 20
    c_slots: int = 8

    # path loss
    pl0_db: float = 30.0
    d0: float = 1.0
    eps_u2i: float = 2.2
    eps_i2b: float = 2.3
    eps_i2i: float = 2.1

    # phase quantization
    bits: int = 3
    bits_delta: int = 4

    # cross-entropy search
    s_isac: int = 1500
    elite_isac: int = 300
    s_pc: int = 2000
    elite_pc: int = 400
    kappa: float = 1e-3
    ce_max_iters: int = 50

    # genie baseline (upper reference: true channels, near-continuous phases)
    genie_bits: int = 10
    genie_smoothing: float = 1.0
    genie_max_iters: int = 60

    # phase-offset search
    offset_budget: int = 20_000_000

    # micro-surface configuration; 0 means "derive from the panel size"
    micro_q_y: int = 0
    micro_q_z: int = 0
    micro_count: int = 4

    seed: int = 0

    def __post_init__(self):
        if min(self.k_users, self.n_bs, self.t_total, self.t1, self.tau1) < 1:
            raise ValueError("counts must be >= 1")
        if not (1 <= self.tau1 <= self.t1 - 1):
            raise ValueError(f"tau1={self.tau1} must leave both time blocks nonempty")
        if self.t1 >= self.t_total:
            raise ValueError("ISAC period must leave room for the PC period")
        if self.c_slots < 1 or self.c_slots > self.t2 // 10:
            raise ValueError(
                f"c_slots={self.c_slots} must satisfy 1 <= C <= T2/10 = {self.t2 // 10}"
            )
        pts = [as_position(self.q_bs_xyz)] + [as_position(q) for q in self.q_irs_xyz]
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                if np.linalg.norm(pts[a] - pts[b]) <= 0:
                    raise ValueError("scene positions must be pairwise distinct")
        if self.user_mode not in ("square", "ring", "fixed"):
            raise ValueError(f"unknown user_mode {self.user_mode!r}")
        if self.user_mode == "fixed" and len(self.users_fixed) != self.k_users:
            raise ValueError("users_fixed must list exactly k_users positions")

    # -- derived quantities ------------------------------------------------

    @property
    def tau2(self) -> int:
        return self.t1 - self.tau1

    @property
    def t2(self) -> int:
        return self.t_total - self.t1

    @property
    def rho(self) -> float:
        return dbm_to_linear(self.rho_dbm)

    @property
    def sigma2(self) -> float:
        return dbm_to_linear(self.sigma2_dbm)

    @property
    def panels(self) -> tuple:
        return tuple(PanelGeometry(cols_y=cy, rows_z=rz) for cy, rz in self.panel_dims)

    @property
    def q_bs(self) -> np.ndarray:
        return as_position(self.q_bs_xyz)

    @property
    def q_irs(self) -> tuple:
        return tuple(as_position(q) for q in self.q_irs_xyz)

    @property
    def pathloss(self) -> PathLossModel:
        return PathLossModel(
            pl0_db=self.pl0_db,
            d0=self.d0,
            exp_u2i=self.eps_u2i,
            exp_i2b=self.eps_i2b,
            exp_i2i=self.eps_i2i,
        )

    @property
    def m_total(self) -> int:
        return sum(p.total for p in self.panels)

    def panel_sizes(self) -> dict:
        return {i + 1: self.panels[i].total for i in range(3)}

    def ce_params_isac(self) -> CeParams:
        return CeParams(
            samples=self.s_isac,
            elites=self.elite_isac,
            bits=self.bits,
            kappa=self.kappa,
            max_iters=self.ce_max_iters,
        )

    def ce_params_pc(self) -> CeParams:
        return CeParams(
            samples=self.s_pc,
            elites=self.elite_pc,
            bits=self.bits,
            kappa=self.kappa,
            max_iters=self.ce_max_iters,
        )

    def ce_params_genie(self, period: str) -> CeParams:
        base = self.ce_params_isac() if period == "isac" else self.ce_params_pc()
        return dataclasses.replace(
            base,
            bits=self.genie_bits,
            smoothing=self.genie_smoothing,
            max_iters=self.genie_max_iters,
        )

    def micro_dims(self, panel: int) -> tuple:
        """Micro-surface dims for a semi-passive panel; defaults shrink the
        panel by 4 per axis (by 1 for small panels) to leave shift room."""
        if self.micro_q_y and self.micro_q_z:
            return self.micro_q_y, self.micro_q_z
        geom = self.panels[panel - 1]

        def default(m: int) -> int:
            return m - 4 if m >= 12 else max(m - 1, 1)

        return default(geom.cols_y), default(geom.rows_z)

    def micro_set(self, panel: int) -> MicroSurfaceSet:
        geom = self.panels[panel - 1]
        q_y, q_z = self.micro_dims(panel)
        slots = (geom.cols_y - q_y + 1) * (geom.rows_z - q_z + 1)
        return enumerate_micro_surfaces(geom, q_y, q_z, min(self.micro_count, slots))

    # -- per-trial randomness ------------------------------------------------

    def place_users(self, rng: np.random.Generator) -> np.ndarray:
        """Draw the K true user positions for one coherence block."""
        if self.user_mode == "fixed":
            return np.array([as_position(q) for q in self.users_fixed])
        for _ in range(1000):
            users = self._draw_users(rng)
            if self.k_users == 1 or self.min_user_separation <= 0:
                return users
            gaps = np.linalg.norm(users[:, None, :] - users[None, :, :], axis=2)
            gaps[np.diag_indices(self.k_users)] = np.inf
            if gaps.min() >= self.min_user_separation:
                return users
        raise ValueError(
            f"could not place {self.k_users} users {self.min_user_separation} m apart"
        )

    def _draw_users(self, rng: np.random.Generator) -> np.ndarray:
        if self.user_mode == "square":
            cx, cy = self.square_center
            half = self.square_side / 2.0
            xy = rng.uniform(-half, half, size=(self.k_users, 2))
            return np.column_stack([cx + xy[:, 0], cy + xy[:, 1], np.zeros(self.k_users)])
        # ring: fixed 3D distance from panel 2, on the floor, inside a sector
        q2 = self.q_irs[1]
        if self.ring_distance <= abs(q2[2]):
            raise ValueError("ring_distance must exceed the panel height")
        horiz = float(np.sqrt(self.ring_distance**2 - q2[2] ** 2))
        aim = float(np.deg2rad(self.ring_azimuth_deg))
        half_angle = np.deg2rad(self.ring_sector_deg) / 2.0
        phi = aim + rng.uniform(-half_angle, half_angle, size=self.k_users)
        return np.column_stack(
            [q2[0] + horiz * np.cos(phi), q2[1] + horiz * np.sin(phi), np.zeros(self.k_users)]
        )


# -- config file parsing -----------------------------------------------------

_TUPLE3 = ("q_bs_xyz",)
_TUPLE2 = ("square_center",)


def _parse_triple(text: str) -> tuple:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected x,y,z triple, got {text!r}")
    return tuple(parts)


def _parse_scalar(kind, text: str):
    if kind is bool:
        return text.strip().lower() in ("1", "true", "yes", "on")
    return kind(text)


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines (# comments, blank lines allowed) into the
    keyword arguments of Scenario."""
    defaults = {f.name: f for f in dataclasses.fields(Scenario)}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in defaults:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key == "panel_dims":
            dims = []
            for chunk in value.split(","):
                cy, rz = chunk.lower().split("x")
                dims.append((int(cy), int(rz)))
            if len(dims) != 3:
                raise ValueError(f"line {lineno}: panel_dims needs three AxB entries")
            out[key] = tuple(dims)
        elif key == "q_irs_xyz" or key == "users_fixed":
            out[key] = tuple(_parse_triple(chunk) for chunk in value.split(";") if chunk.strip())
        elif key in _TUPLE3:
            out[key] = _parse_triple(value)
        elif key in _TUPLE2:
            parts = [float(p) for p in value.split(",")]
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected x,y pair")
            out[key] = tuple(parts)
        else:
            out[key] = _parse_scalar(type(defaults[key].default), value)
    return out


def load_config(path) -> Scenario:
    """Build a Scenario from a config file; missing keys keep defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        return Scenario(**parse_config_text(fh.read()))
