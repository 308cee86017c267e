"""Subspace estimation of effective AoA pairs at a semi-passive panel.

Pipeline per panel and time block: slide micro-surfaces over the panel,
average a forward-backward smoothed covariance (restores rank for the
coherent passive-panel reflection), extract per-axis phase-progression
angles with TLS rotational invariance, pair the two axes by noise-subspace
orthogonality, and drop the pair belonging to the known inter-panel link.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSubspaceError, InsufficientDataError
from .geometry import PanelGeometry, effective_angles, steering_ula

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class MicroSurfaceSet:
    """Contiguous q_y x q_z sub-grids of a parent panel, shifted one element
    at a time, with index maps into the parent's y-major flattening."""

    panel: PanelGeometry
    q_y: int
    q_z: int
    index_maps: np.ndarray  # (n_micro, L_micro) int

    @property
    def n_micro(self) -> int:
        return self.index_maps.shape[0]

    @property
    def l_micro(self) -> int:
        return self.q_y * self.q_z

    def steering(self, u: float, v: float) -> np.ndarray:
        """Micro-surface array response (same Kronecker order as the parent)."""
        return np.kron(steering_ula(u, self.q_y), steering_ula(v, self.q_z))


def enumerate_micro_surfaces(
    panel: PanelGeometry, q_y: int, q_z: int, n_micro: int
) -> MicroSurfaceSet:
    """Enumerate micro-surfaces anchored at the corner, shifting by one
    column (y) until exhausted, then by one row (z)."""
    if not (1 <= q_y <= panel.cols_y and 1 <= q_z <= panel.rows_z):
        raise ValueError(
            f"micro dims {q_y}x{q_z} do not fit panel {panel.cols_y}x{panel.rows_z}"
        )
    slots_y = panel.cols_y - q_y + 1
    slots_z = panel.rows_z - q_z + 1
    if not (1 <= n_micro <= slots_y * slots_z):
        raise ValueError(
            f"cannot place {n_micro} micro-surfaces; at most {slots_y * slots_z}"
        )
    jy, jz = np.meshgrid(np.arange(q_y), np.arange(q_z), indexing="ij")
    base = (jy * panel.rows_z + jz).ravel()  # parent indices of the corner surface
    maps = np.empty((n_micro, q_y * q_z), dtype=np.int64)
    for m in range(n_micro):
        oy, oz = m % slots_y, m // slots_y
        maps[m] = base + oy * panel.rows_z + oz
    return MicroSurfaceSet(panel=panel, q_y=q_y, q_z=q_z, index_maps=maps)


@dataclass(frozen=True)
class CovarianceEstimate:
    """Smoothed micro-surface covariance with its eigen-structure.

    Eigenvalues are real and descending; the first `model_order` eigenvectors
    span the signal subspace and the remainder the noise subspace.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    model_order: int

    @property
    def signal_subspace(self) -> np.ndarray:
        return self.eigenvectors[:, : self.model_order]

    @property
    def noise_subspace(self) -> np.ndarray:
        return self.eigenvectors[:, self.model_order :]


def fbss_covariance(snapshots, ms: MicroSurfaceSet, model_order: int) -> CovarianceEstimate:
    """Forward-backward spatially smoothed covariance over all micro-surfaces.

    Averages x x^H and its exchanged conjugate J x* x^T J over micro-surfaces
    and slots with 1/(2 * tau * n_micro) normalization, then eigen-decomposes.

    `snapshots` is a SnapshotBlock or a raw (M, tau) complex array.
    """
    x = np.asarray(getattr(snapshots, "samples", snapshots))
    if x.ndim != 2 or x.shape[1] < 1:
        raise InsufficientDataError(f"need at least one snapshot, got shape {x.shape}")
    tau = x.shape[1]
    forward = np.zeros((ms.l_micro, ms.l_micro), dtype=complex)
    for idx in ms.index_maps:
        xm = x[idx]
        forward += xm @ xm.conj().T
    backward = forward.conj()[::-1, ::-1]  # J F* J with J the exchange matrix
    r = (forward + backward) / (2.0 * tau * ms.n_micro)
    r = 0.5 * (r + r.conj().T)
    if not (1 <= model_order <= ms.l_micro - 1):
        raise ValueError(
            f"model order {model_order} must lie in [1, {ms.l_micro - 1}]"
        )
    eigvals, eigvecs = np.linalg.eigh(r)
    return CovarianceEstimate(
        matrix=r,
        eigenvalues=eigvals[::-1],
        eigenvectors=eigvecs[:, ::-1],
        model_order=model_order,
    )


def _shift_selection(ms: MicroSurfaceSet, axis: str) -> tuple[np.ndarray, np.ndarray]:
    """Flat micro indices of the two one-element-shifted auxiliary surfaces."""
    if axis == "y":
        sel1 = np.arange((ms.q_y - 1) * ms.q_z)  # drop the last y column
        return sel1, sel1 + ms.q_z
    if axis == "z":
        jy, jz = np.meshgrid(np.arange(ms.q_y), np.arange(ms.q_z - 1), indexing="ij")
        sel1 = (jy * ms.q_z + jz).ravel()  # drop the last z row
        return sel1, sel1 + 1
    raise ValueError(f"axis must be 'y' or 'z', got {axis!r}")


def esprit_axis(
    cov: CovarianceEstimate,
    ms: MicroSurfaceSet,
    axis: str,
    model_order: int | None = None,
) -> np.ndarray:
    """Total-least-squares rotational-invariance angles along one axis.

    Builds the two shifted auxiliary sub-surfaces, stacks their signal
    subspaces, eigen-decomposes the (2p x 2p) Gram matrix, and reads the
    angles off the eigenvalues of Phi = -V12 V22^{-1}.  Returns `model_order`
    candidate effective angles in (-pi, pi], ascending.
    """
    p = cov.model_order if model_order is None else model_order
    sel1, sel2 = _shift_selection(ms, axis)
    if sel1.size < p + 1:
        raise ValueError(
            f"auxiliary surface has {sel1.size} elements; needs >= {p + 1}"
        )
    us = cov.eigenvectors[:, :p]
    stacked = np.hstack([us[sel1], us[sel2]])
    gram = stacked.conj().T @ stacked
    _, vecs = np.linalg.eigh(gram)
    vecs = vecs[:, ::-1]  # descending eigenvalue order
    v12 = vecs[:p, p:]
    v22 = vecs[p:, p:]
    cond = np.linalg.cond(v22)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise DegenerateSubspaceError(f"V22 is singular (cond={cond:.3e})")
    phi = -np.linalg.solve(v22.conj().T, v12.conj().T).conj().T
    return np.sort(np.angle(np.linalg.eigvals(phi)))


def music_pair(
    cands_u: np.ndarray,
    cands_v: np.ndarray,
    cov: CovarianceEstimate,
    ms: MicroSurfaceSet,
) -> np.ndarray:
    """Pair per-axis candidates by noise-subspace orthogonality.

    Evaluates f(u, v) = ||b_micro(u, v)^H U_N||^2 on the full candidate grid
    and greedily selects the smallest entries under a one-to-one constraint
    (each u and each v used exactly once).  Returns (p, 2) pairs in
    selection order.
    """
    cands_u = np.asarray(cands_u, dtype=float)
    cands_v = np.asarray(cands_v, dtype=float)
    p = cands_u.size
    if cands_v.size != p:
        raise ValueError("candidate lists must have equal length")
    un = cov.noise_subspace
    if un.shape[1] == 0:
        raise ValueError("noise subspace is empty; model order equals L_micro")
    spectrum = np.empty((p, p))
    for l in range(p):
        for s in range(p):
            proj = ms.steering(cands_u[l], cands_v[s]).conj() @ un
            spectrum[l, s] = float(np.sum(np.abs(proj) ** 2))
    pairs = np.empty((p, 2))
    cost = spectrum.copy()
    for q in range(p):
        l, s = np.unravel_index(np.argmin(cost), cost.shape)
        pairs[q] = (cands_u[l], cands_v[s])
        cost[l, :] = np.inf
        cost[:, s] = np.inf
    return pairs


@dataclass(frozen=True)
class AoaPairSet:
    """Candidate (u, v) effective-angle pairs at one panel and time block."""

    pairs: np.ndarray  # (n, 2)
    panel: int
    block: int

    @property
    def count(self) -> int:
        return self.pairs.shape[0]


def wrap_angle(angle):
    """Wrap phase-progression angles into (-pi, pi]."""
    return -np.mod(-np.asarray(angle) + np.pi, 2.0 * np.pi) + np.pi


def exclude_inter_irs(pair_set: AoaPairSet, scenario) -> AoaPairSet:
    """Remove the pair closest to the known passive-to-panel link direction.

    The link angles come from geometry (direction cosines times pi); the
    closest candidate in circular (u, v) distance is dropped, leaving the
    K user pairs.  Distances wrap at +-pi: a link near the aliasing edge may
    be estimated with the opposite sign.
    """
    ang = effective_angles(scenario.q_irs[0], scenario.q_irs[pair_set.panel - 1])
    known = np.array([ang.u, ang.v])
    delta = wrap_angle(pair_set.pairs - known[None, :])
    dist = np.linalg.norm(delta, axis=1)
    keep = np.delete(np.arange(pair_set.count), int(np.argmin(dist)))
    return AoaPairSet(
        pairs=pair_set.pairs[keep], panel=pair_set.panel, block=pair_set.block
    )
