"""Multi-domain AoA estimation on the filtered CACC output.

The spatial vectors of xi are stacked along subcarriers and along packets
into an enlarged array of C (N-1) elements. Once a target's delay and
Doppler are known, its enlarged basis only depends on the spatial
frequency, so a one-dimensional MUSIC scan over Omega recovers the AoA with
the resolution of the larger aperture.

Targets with near-equal delays and Dopplers share almost the same enlarged
basis, and their objectives then peak at several AoAs. Targets with a single
clear peak are settled first, strongest first; every target takes its
highest peak unless it falls within 2 pi / (C (N-1)) of an AoA that is
already settled, and then its next peak.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np

from .models import AoAConfig, EstimateSet, ModelValidationError, Resolution, ScenarioConfig, XiGrid
from .subspace import (
    PSEUDO_SPECTRUM_CAP,
    PseudoSpectrum,
    SubspaceDecomposition,
    local_maxima,
    null_projection,
    refine_peak,
    svd_left,
)

logger = logging.getLogger(__name__)


def spatial_vector_c(xi: XiGrid, m: int, g: int) -> np.ndarray:
    """[xi_1[m, g], ..., xi_{N-1}[m, g]] over the kept antennas."""
    return xi.rho[:, m, g].copy()


def build_Cprime(xi: XiGrid, m: int, g: int, c: int) -> np.ndarray:
    """C(N-1) x 2 block: spatial vectors stacked along subcarriers, then packets.

    Column 0 stacks c[m, g], ..., c[m, g+C-1]; column 1 stacks
    c[m, g], ..., c[m+C-1, g].

    Raises:
        ModelValidationError: If either stack runs past the grid.
    """
    _, num_packets, num_subcarriers = xi.rho.shape
    if m < 0 or g < 0 or m + c > num_packets or g + c > num_subcarriers:
        raise ModelValidationError(
            f"C={c} blocks from (m={m}, g={g}) exceed the {num_packets}x{num_subcarriers} grid"
        )
    along_g = xi.rho[:, m, g : g + c].T.reshape(-1)
    along_m = xi.rho[:, m : m + c, g].T.reshape(-1)
    return np.column_stack([along_g, along_m])


def assemble_Cmatrix(xi: XiGrid, aoa_cfg: AoAConfig) -> np.ndarray:
    """C(N-1) x 2(C1+1) matrix of the diagonal blocks C'[k, k], k = 0..C1."""
    return np.hstack([build_Cprime(xi, k, k, aoa_cfg.c) for k in range(aoa_cfg.c1 + 1)])


# --- Enlarged bases ---

@dataclass(frozen=True, eq=False)
class EnlargedBasisPair:
    """Enlarged basis vectors for the two stacking directions.

    Block i of ``first`` is a(Omega) e^{-j i tau_bar}; block i of ``second``
    is a(Omega) e^{j i f_bar}, with tau_bar = 2 pi (tau - tau_0) / T and
    f_bar = 2 pi T_A f_D.
    """
    first: np.ndarray
    second: np.ndarray


def _enlarged(omegas: np.ndarray, lags: np.ndarray, step: float, c: int) -> np.ndarray:
    spatial = np.exp(1j * np.multiply.outer(omegas, lags))
    progression = np.exp(1j * step * np.arange(c))
    stacked = progression[None, :, None] * spatial[:, None, :]
    return stacked.reshape(len(omegas), c * len(lags))


def _phase_steps(
    delay_rel: float, doppler: float, cfg: ScenarioConfig, side: bool
) -> tuple[float, float]:
    tau_bar = 2 * math.pi * delay_rel / cfg.symbol_period
    f_bar = 2 * math.pi * cfg.packet_interval * doppler
    if side:
        return tau_bar, -f_bar
    return -tau_bar, f_bar


def basis_pair(
    omega: float,
    delay_rel: float,
    doppler: float,
    lags: np.ndarray,
    c: int,
    cfg: ScenarioConfig,
    side: bool = False,
) -> EnlargedBasisPair:
    """Enlarged basis of one target at spatial frequency omega.

    With ``side`` set the delay and Doppler progressions are negated, giving
    the basis of the target's side product.
    """
    first_step, second_step = _phase_steps(delay_rel, doppler, cfg, side)
    omegas = np.array([omega], dtype=float)
    return EnlargedBasisPair(
        first=_enlarged(omegas, np.asarray(lags), first_step, c)[0],
        second=_enlarged(omegas, np.asarray(lags), second_step, c)[0],
    )


def aoa_objective(
    null_space: np.ndarray,
    omegas: np.ndarray,
    delay_rel: float,
    doppler: float,
    lags: np.ndarray,
    c: int,
    cfg: ScenarioConfig,
    side: bool = False,
) -> np.ndarray:
    """1 / (||c1^H U_null||^2 + ||c2^H U_null||^2) with unit-norm bases, capped."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    first_step, second_step = _phase_steps(delay_rel, doppler, cfg, side)
    norm = math.sqrt(c * len(lags))
    first = _enlarged(omegas, lags, first_step, c) / norm
    second = _enlarged(omegas, lags, second_step, c) / norm
    denominator = null_projection(null_space, first) + null_projection(null_space, second)
    with np.errstate(divide="ignore"):
        values = np.where(denominator > 0, 1.0 / denominator, PSEUDO_SPECTRUM_CAP)
    return np.minimum(values, PSEUDO_SPECTRUM_CAP)


def _wrap(omega: float) -> float:
    return (omega + math.pi) % (2 * math.pi) - math.pi


def _circular_distance(a: float, b: float) -> float:
    return abs(_wrap(a - b))


# --- Algorithm ---

@dataclass(frozen=True, eq=False)
class AoASearch:
    """Decomposition of C and the per-target objectives on the candidate grid."""
    decomposition: SubspaceDecomposition
    spectra: list[PseudoSpectrum]


def search_spectra(
    xi: XiGrid,
    estimates: EstimateSet,
    cfg: ScenarioConfig,
    aoa_cfg: AoAConfig,
    side: bool = False,
) -> AoASearch:
    """Evaluate every target's AoA objective over the candidate grid."""
    num_targets = len(estimates)
    c_matrix = assemble_Cmatrix(xi, aoa_cfg)
    rank = min(4 * num_targets, c_matrix.shape[0] - 1)
    decomposition = svd_left(c_matrix, rank)
    logger.debug("C matrix %dx%d, signal rank %d", *c_matrix.shape, rank)

    num_antennas = xi.rho.shape[0] + 1
    grid = aoa_cfg.candidate_grid(num_antennas)
    spectra = [
        PseudoSpectrum(
            grid=grid,
            values=aoa_objective(
                decomposition.null_space, grid, target.delay_rel, target.doppler,
                xi.lags, aoa_cfg.c, cfg, side=side,
            ),
        )
        for target in estimates.targets
    ]
    return AoASearch(decomposition, spectra)


def threshold_peaks(spectrum: PseudoSpectrum, ratio: float) -> np.ndarray:
    """Circular local maxima at or above ratio x the global maximum, strongest first."""
    peaks = local_maxima(spectrum.values, circular=True)
    if peaks.size == 0:
        return peaks
    floor = ratio * float(np.max(spectrum.values))
    return peaks[spectrum.values[peaks] >= floor]


def settle_order(spectra: list[PseudoSpectrum], peak_counts: list[int]) -> list[int]:
    """Targets with a single strong peak first, each group by peak height.

    Targets without any peak are left out.
    """
    tops = [float(np.max(s.values)) if s.values.size else 0.0 for s in spectra]
    indices = [i for i, count in enumerate(peak_counts) if count > 0]
    return sorted(indices, key=lambda i: (peak_counts[i] > 1, -tops[i], i))


def select_aoas(
    spectra: list[PseudoSpectrum], aoa_cfg: AoAConfig, num_antennas: int
) -> tuple[dict[int, float], set[int]]:
    """Coarse AoA of every target plus the targets left ambiguous.

    With the multi-peak rule a target takes its highest peak unless it lies
    within 2 pi / (C (N-1)) of an AoA already settled, in which case it
    moves on to its next peak, below the threshold if need be. A target
    whose every peak collides keeps its highest one and is reported as
    ambiguous. Without the rule every target takes its global maximum.
    """
    ranked = [local_maxima(s.values, circular=True) for s in spectra]
    counts = [threshold_peaks(s, aoa_cfg.peak_threshold_ratio).size for s in spectra]
    for index, count in enumerate(counts):
        if count == 0:
            logger.warning("Target %d: no AoA peak above threshold", index)

    min_separation = aoa_cfg.min_separation(num_antennas)
    chosen: dict[int, float] = {}
    ambiguous: set[int] = set()
    for index in settle_order(spectra, counts):
        omegas = spectra[index].grid[ranked[index]]
        if not aoa_cfg.multi_peak:
            chosen[index] = float(omegas[0])
            continue
        pick = next(
            (
                float(omega) for omega in omegas
                if all(_circular_distance(omega, s) >= min_separation for s in chosen.values())
            ),
            None,
        )
        if pick is None:
            logger.warning("Target %d: every AoA peak collides with a settled AoA", index)
            ambiguous.add(index)
            pick = float(omegas[0])
        elif pick != omegas[0]:
            logger.debug("Target %d: highest AoA peak collides, moved to %.4f", index, pick)
        chosen[index] = pick
    return chosen, ambiguous


def estimate_aoa(
    xi: XiGrid,
    estimates: EstimateSet,
    cfg: ScenarioConfig,
    aoa_cfg: AoAConfig,
) -> EstimateSet:
    """Estimate the spatial frequency of every paired target.

    Only the actual-component bases are scanned; the side-product bases would
    return the known LOS spatial frequency.

    Args:
        xi: High-pass filtered CACC output.
        estimates: Paired delays and signed Dopplers.
        cfg: Scenario providing T_A and T.
        aoa_cfg: Stacking sizes and peak rule.

    Returns:
        A copy of ``estimates`` with ``aoa`` and ``resolution`` filled in.
        Targets whose objective has no usable peak stay unresolved with a
        None AoA, and the set is flagged ``unresolved_aoa``. Targets whose
        peaks all collide with settled AoAs keep their highest peak as
        ambiguous, and the set is flagged ``ambiguous_aoa``. An all-zero C
        matrix flags ``degenerate_cmatrix``.

    Raises:
        ModelValidationError: If C or C1 violate their bounds.
    """
    num_targets = len(estimates)
    if num_targets == 0:
        return estimates.with_aoas([], [])
    num_antennas = xi.rho.shape[0] + 1
    aoa_cfg.validate(num_targets, num_antennas, xi.rho.shape[1], xi.rho.shape[2])

    if not np.any(assemble_Cmatrix(xi, aoa_cfg)):
        logger.warning("C matrix is all zero; no AoA can be resolved")
        result = estimates.with_aoas([None] * num_targets, [Resolution.UNRESOLVED] * num_targets)
        result.flag("degenerate_cmatrix")
        result.flag("unresolved_aoa")
        return result

    search = search_spectra(xi, estimates, cfg, aoa_cfg)
    grid_step = 2 * math.pi / len(search.spectra[0].grid)
    chosen, ambiguous = select_aoas(search.spectra, aoa_cfg, num_antennas)

    aoas: list[float | None] = []
    states: list[Resolution] = []
    null_space = search.decomposition.null_space
    for index, target in enumerate(estimates.targets):
        if index not in chosen:
            aoas.append(None)
            states.append(Resolution.UNRESOLVED)
            continue

        def objective(omega: float, target=target) -> float:
            value = aoa_objective(
                null_space, np.array([omega]), target.delay_rel, target.doppler,
                xi.lags, aoa_cfg.c, cfg,
            )[0]
            return 1.0 / value

        aoas.append(_wrap(refine_peak(objective, chosen[index], grid_step)))
        states.append(Resolution.AMBIGUOUS if index in ambiguous else Resolution.RESOLVED)

    result = estimates.with_aoas(aoas, states)
    if Resolution.UNRESOLVED in states:
        result.flag("unresolved_aoa")
    if Resolution.AMBIGUOUS in states:
        result.flag("ambiguous_aoa")
    logger.debug("AoA estimates %s", aoas)
    return result
