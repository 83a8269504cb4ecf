"""Reference estimators: conventional MUSIC on xi and add-minus suppression (AMS)."""

from dataclasses import dataclass
from enum import Enum
import logging
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .mirrored_music import (
    AxisEstimate,
    delay_grid,
    doppler_grid,
    is_los_only,
    pair_and_sign,
    resolve_mirror,
    subspace_search,
)
from .models import (
    CaccGrid,
    EstimateSet,
    MirrorConfig,
    ModelValidationError,
    RxGrid,
    ScenarioConfig,
    XiGrid,
)

logger = logging.getLogger(__name__)


class Axis(Enum):
    DOPPLER = "doppler"
    DELAY = "delay"


# --- Conventional MUSIC ---

def hankel_columns(series: np.ndarray, window: int) -> np.ndarray:
    """(window+1) x (len - window) matrix of plain sliding slices."""
    return sliding_window_view(series, window + 1).T


def fold_estimates(signed: np.ndarray, count: int, tolerance: float) -> np.ndarray:
    """Keep up to ``count`` distinct magnitudes, in peak order.

    A magnitude within ``tolerance`` of one already kept is the mirror of
    that peak and is dropped.
    """
    kept: list[float] = []
    for value in np.abs(signed):
        if len(kept) == count:
            break
        if all(abs(value - other) > tolerance for other in kept):
            kept.append(float(value))
    return np.array(kept)


@dataclass(frozen=True, eq=False)
class ConventionalResult:
    """2L signed peaks of a conventional search and their folded magnitudes."""
    search: AxisEstimate
    folded: np.ndarray

    @property
    def peaks(self) -> np.ndarray:
        return self.search.values

    @property
    def evaluations(self) -> int:
        return self.search.evaluations


def conventional_music(
    xi: XiGrid,
    axis: Axis,
    num_targets: int,
    mirror: MirrorConfig,
    cfg: ScenarioConfig,
) -> ConventionalResult:
    """MUSIC without mirroring on one axis of one xi slice.

    The actual component and the side product are separate exponentials
    here, so the Hankel matrix has rank 2L and the search covers the full
    signed period. The 2L peaks are folded to L magnitudes.

    Args:
        xi: Filtered CACC output (or any grid with the same layout).
        axis: Doppler (slice over packets at g0) or delay (slice over
            subcarriers at m0).
        num_targets: L.
        mirror: Windows and slice indices, resolved automatically when None.
        cfg: Scenario providing T_A and T.
    """
    mirror = resolve_mirror(xi, mirror)
    row = xi.row(mirror.n0)
    match axis:
        case Axis.DOPPLER:
            window = mirror.p
            matrix = hankel_columns(xi.rho[row, :, mirror.g0], window)
            grid = doppler_grid(cfg, window, signed=True)
            phase = 2 * math.pi * cfg.packet_interval
        case Axis.DELAY:
            window = mirror.q
            matrix = hankel_columns(xi.rho[row, mirror.m0, :], window)
            grid = delay_grid(cfg, window, signed=True)
            phase = -2 * math.pi / cfg.symbol_period

    if not 2 * num_targets <= window < matrix.shape[0] + matrix.shape[1] - 1 - 2 * num_targets:
        raise ModelValidationError(
            f"{axis.value} window {window} too short for 2L={2 * num_targets} components"
        )
    i = np.arange(window + 1)

    def basis(x: np.ndarray) -> np.ndarray:
        return np.exp(1j * phase * np.multiply.outer(x, i))

    search = subspace_search(
        matrix, 2 * num_targets, 2 * num_targets, basis, grid, refine=mirror.refine, circular=True
    )
    step = float(grid[1] - grid[0])
    return ConventionalResult(search, fold_estimates(search.values, num_targets, step))


def conventional_estimate(
    xi: XiGrid,
    omega_los: float,
    tau_los: float,
    cfg: ScenarioConfig,
    mirror: MirrorConfig,
    num_targets: int,
) -> EstimateSet:
    """Conventional MUSIC on both axes, then the same pairing as mirrored-MUSIC."""
    if is_los_only(xi):
        estimates = EstimateSet()
        estimates.flag("los_only")
        return estimates
    mirror = resolve_mirror(xi, mirror)
    dopplers = conventional_music(xi, Axis.DOPPLER, num_targets, mirror, cfg)
    delays = conventional_music(xi, Axis.DELAY, num_targets, mirror, cfg)
    estimates = pair_and_sign(dopplers.folded, delays.folded, xi, omega_los, tau_los, cfg)
    estimates.candidate_evaluations = dopplers.evaluations + delays.evaluations
    if len(dopplers.folded) < num_targets:
        estimates.flag("short_doppler_peaks")
    if len(delays.folded) < num_targets:
        estimates.flag("short_delay_peaks")
    return estimates


# --- AMS ---

@dataclass(frozen=True, eq=False)
class AmsGrids:
    """Add-minus grids of the AMS baseline.

    Attributes:
        minus: A_n = y_n - D_hat_n, the LOS-suppressed signal.
        plus: B_n = y_n + D_hat_n.
        xi: xi^AMS_n = A_n conj(B_ref), approximately 2 rho4 + rho2.
    """
    minus: np.ndarray
    plus: np.ndarray
    xi: XiGrid


def ams_transform(rx: RxGrid, reference: int = 0) -> AmsGrids:
    """Build the AMS grids with D_hat_n[g] the mean of y_n[:, g] over all packets."""
    direct = np.mean(rx.y, axis=1, keepdims=True)
    minus = rx.y - direct
    plus = rx.y + direct
    antennas = np.array([n for n in range(rx.num_antennas) if n != reference])
    xi = minus[antennas] * np.conj(plus[reference])[None, :, :]
    return AmsGrids(minus=minus, plus=plus, xi=XiGrid(rho=xi, antennas=antennas, reference=reference))


def actual_gain_matrix(
    xi: CaccGrid,
    dopplers: np.ndarray,
    delays_rel: np.ndarray,
    omega_los: float,
    cfg: ScenarioConfig,
) -> np.ndarray:
    """Combining gain of the actual component, incoherent across antennas.

    sum_n |sum_{m,g} xi_n[m,g] e^{-j m 2 pi T_A f} e^{j g 2 pi tau / T}|.
    The spatial phase of an actual component is the unknown target AoA, so
    ``omega_los`` is not used.
    """
    num_packets, num_subcarriers = xi.rho.shape[1:]
    m = np.arange(num_packets)
    g = np.arange(num_subcarriers)
    doppler_kernel = np.exp(-2j * math.pi * cfg.packet_interval * np.outer(m, dopplers))
    delay_kernel = np.exp(2j * math.pi * np.outer(g, delays_rel) / cfg.symbol_period)
    per_delay = xi.rho @ delay_kernel
    per_pair = np.einsum("kmj,mi->kij", per_delay, doppler_kernel)
    return np.sum(np.abs(per_pair), axis=0)


def ams_estimate(
    ams: AmsGrids,
    tau_los: float,
    cfg: ScenarioConfig,
    mirror: MirrorConfig,
    num_targets: int,
) -> EstimateSet:
    """Conventional MUSIC on xi^AMS, paired with the actual-component gain."""
    xi = ams.xi
    if is_los_only(xi):
        estimates = EstimateSet()
        estimates.flag("los_only")
        return estimates
    mirror = resolve_mirror(xi, mirror)
    dopplers = conventional_music(xi, Axis.DOPPLER, num_targets, mirror, cfg)
    delays = conventional_music(xi, Axis.DELAY, num_targets, mirror, cfg)
    estimates = pair_and_sign(
        dopplers.folded, delays.folded, xi, 0.0, tau_los, cfg, gain_matrix=actual_gain_matrix
    )
    estimates.candidate_evaluations = dopplers.evaluations + delays.evaluations
    if len(estimates) < num_targets:
        estimates.flag("short_peaks")
    return estimates
