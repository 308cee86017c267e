"""IRS-enabled multi-user ISAC link-level simulator.

A distributed intelligent reflecting surface with one passive and two
semi-passive panels assists uplink transmission while localizing the users
from their own communication signals; the sensed locations then drive
discrete phase-shift beamforming for both protocol periods.
"""

from .beamforming import (
    CeParams,
    CeResult,
    OffsetEstimate,
    PhaseOffsetGrid,
    PowerRecord,
    apply_offsets,
    ce_optimize,
    ce_optimize_isac,
    ce_optimize_pc,
    estimate_phase_offsets,
    mrc_combiner,
    record_powers_pc,
    sensed_channel,
    sensed_user_matrix,
    zf_combiner,
)
from .doa import (
    AoaPairSet,
    CovarianceEstimate,
    MicroSurfaceSet,
    enumerate_micro_surfaces,
    esprit_axis,
    exclude_inter_irs,
    fbss_covariance,
    music_pair,
    wrap_angle,
)
from .errors import (
    DegenerateGeometryError,
    DegenerateSubspaceError,
    IllConditionedError,
    InsufficientDataError,
    MatchingFailureError,
)
from .geometry import (
    ChannelSet,
    EffectiveAngles,
    PanelGeometry,
    PathLossModel,
    build_channels,
    direction_cosines,
    effective_angles,
    path_gain_magnitude,
    steering_ula,
    steering_ura,
)
from .harness import TrialRecord, run_trial
from .localization import (
    CandidateLocation,
    LocationEstimate,
    PathLossEstimates,
    estimate_path_losses,
    match_aoas,
    rmse,
    sense_locations,
    triangulate,
)
from .scenario import Scenario, dbm_to_linear, load_config
from .signals import (
    PhaseShiftConfig,
    SnapshotBlock,
    SymbolBlock,
    generate_symbols,
    isac_sum_rate,
    pc_sum_rate,
    phase_alphabet,
    receive_at_bs_isac,
    receive_at_bs_pc,
    receive_at_sub_irs,
    sum_rate,
)
from .sweep import SweepSpec, apply_axis, run_sweep

__version__ = "0.1.0"
