"""Mirrored-MUSIC delay and Doppler estimation.

After CACC, every target appears twice in xi: once as the actual component
(+f_D, tau - tau_0) and once as the side product with both parameters
negated. Adding a slice to its own reversal makes every signal vector
palindromic, and the actual and mirrored exponentials then share one
palindromic basis vector. The P (packet axis) and Q (subcarrier axis)
matrices therefore have rank L instead of 2L, the searches only need the
folded half period, and a final pairing step picks the sign of each Doppler
and the delay that goes with it.
"""

from dataclasses import dataclass, replace
import logging
import math
from typing import Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cacc import select_reference_index_n0
from .models import (
    CaccGrid,
    EstimateSet,
    MirrorConfig,
    ModelValidationError,
    ScenarioConfig,
    TargetEstimate,
    XiGrid,
)
from .subspace import (
    PseudoSpectrum,
    estimate_model_order,
    null_objective,
    pick_peaks,
    pseudo_spectrum,
    refine_peak,
    svd_left,
    unit_rows,
)

logger = logging.getLogger(__name__)

# Mean |xi|^2 below which the filter output is treated as LOS-only.
LOS_ONLY_ENERGY = 1e-20

GainMatrixFn = Callable[[XiGrid, np.ndarray, np.ndarray, float, ScenarioConfig], np.ndarray]


# --- Mirrored vectors and bases ---

def _mirrored_exponentials(phase, window: int, offset: int) -> np.ndarray:
    phase = np.asarray(phase, dtype=float)
    i = np.arange(window + 1)
    forward = np.exp(1j * np.multiply.outer(phase, offset + i))
    backward = np.exp(1j * np.multiply.outer(phase, offset + window - i))
    return forward + backward


def _mirrored_derivative(phase, window: int, offset: int) -> np.ndarray:
    """d/dphase of _mirrored_exponentials."""
    phase = np.asarray(phase, dtype=float)
    i = np.arange(window + 1)
    forward = 1j * (offset + i) * np.exp(1j * np.multiply.outer(phase, offset + i))
    backward = 1j * (offset + window - i) * np.exp(
        1j * np.multiply.outer(phase, offset + window - i)
    )
    return forward + backward


def basis_p(doppler, p: int, packet_interval: float, m: int = 0) -> np.ndarray:
    """Mirrored packet-axis basis, entry i = e^{j(m+i)phi} + e^{j(m+P-i)phi}.

    phi = 2 pi T_A f. Accepts a scalar Doppler (returns a length P+1 vector)
    or an array of K Dopplers (returns K x (P+1)).
    """
    return _mirrored_exponentials(2 * math.pi * packet_interval * np.asarray(doppler), p, m)


def basis_q(delay_rel, q: int, symbol_period: float, g: int = 0) -> np.ndarray:
    """Mirrored subcarrier-axis basis, entry i = e^{-j(g+i)theta} + e^{-j(g+Q-i)theta}.

    theta = 2 pi (tau - tau_0) / T.
    """
    return _mirrored_exponentials(-2 * math.pi * np.asarray(delay_rel) / symbol_period, q, g)


def basis_p_derivative(doppler, p: int, packet_interval: float, m: int = 0) -> np.ndarray:
    """d basis_p / d f (per Hz)."""
    scale = 2 * math.pi * packet_interval
    return scale * _mirrored_derivative(scale * np.asarray(doppler), p, m)


def basis_q_derivative(delay_rel, q: int, symbol_period: float, g: int = 0) -> np.ndarray:
    """d basis_q / d tau (per second)."""
    scale = -2 * math.pi / symbol_period
    return scale * _mirrored_derivative(scale * np.asarray(delay_rel), q, g)


def mirrored_vector_p(xi: XiGrid, n0: int, m: int, g0: int, p: int) -> np.ndarray:
    """xi_n0[m:m+P+1, g0] plus its reversal.

    Raises:
        ModelValidationError: If the window runs past the last packet.
    """
    num_packets = xi.rho.shape[1]
    if m < 0 or m + p >= num_packets:
        raise ModelValidationError(
            f"packet window [{m}, {m + p}] exceeds M={num_packets}"
        )
    segment = xi.rho[xi.row(n0), m : m + p + 1, g0]
    return segment + segment[::-1]


def mirrored_vector_q(xi: XiGrid, n0: int, m0: int, g: int, q: int) -> np.ndarray:
    """xi_n0[m0, g:g+Q+1] plus its reversal.

    Raises:
        ModelValidationError: If the window runs past the last subcarrier.
    """
    num_subcarriers = xi.rho.shape[2]
    if g < 0 or g + q >= num_subcarriers:
        raise ModelValidationError(
            f"subcarrier window [{g}, {g + q}] exceeds G={num_subcarriers}"
        )
    segment = xi.rho[xi.row(n0), m0, g : g + q + 1]
    return segment + segment[::-1]


def _mirrored_columns(series: np.ndarray, window: int) -> np.ndarray:
    frames = sliding_window_view(series, window + 1)
    return (frames + frames[:, ::-1]).T


def assemble_P(xi: XiGrid, mirror: MirrorConfig) -> np.ndarray:
    """(P+1) x (M-P) matrix whose column m is mirrored_vector_p(m)."""
    series = xi.rho[xi.row(mirror.n0), :, mirror.g0]
    return _mirrored_columns(series, mirror.p)


def assemble_Q(xi: XiGrid, mirror: MirrorConfig) -> np.ndarray:
    """(Q+1) x (G-Q) matrix whose column g is mirrored_vector_q(g)."""
    series = xi.rho[xi.row(mirror.n0), mirror.m0, :]
    return _mirrored_columns(series, mirror.q)


def choose_m0_g0(xi: XiGrid) -> tuple[int, int]:
    """(m, g) with the largest |xi|^2 averaged over antennas (first on ties)."""
    power = np.mean(np.abs(xi.rho) ** 2, axis=0)
    m0, g0 = np.unravel_index(int(np.argmax(power)), power.shape)
    return int(m0), int(g0)


def resolve_mirror(
    xi: XiGrid, mirror: MirrorConfig, cacc_grid: CaccGrid | None = None
) -> MirrorConfig:
    """Fill the automatic n0, m0 and g0 choices of a MirrorConfig.

    n0 comes from the low-pass energy of the unfiltered CACC grid when one
    is given, otherwise it is the first antenna of xi.
    """
    if mirror.n0 is not None:
        n0 = mirror.n0
    elif cacc_grid is not None:
        n0 = select_reference_index_n0(cacc_grid)
    else:
        n0 = int(xi.antennas[0])
    m0, g0 = mirror.m0, mirror.g0
    if m0 is None or g0 is None:
        best_m, best_g = choose_m0_g0(xi)
        m0 = best_m if m0 is None else m0
        g0 = best_g if g0 is None else g0
    logger.debug("Mirror windows P=%d Q=%d at n0=%d m0=%d g0=%d",
                 mirror.p, mirror.q, n0, m0, g0)
    return replace(mirror, n0=n0, m0=m0, g0=g0)


# --- Search grids ---

def folded_count(window: int) -> int:
    """Candidates in the folded half period at step period / (window + 1)."""
    return math.ceil((window + 1) / 2)


def doppler_grid(cfg: ScenarioConfig, p: int, signed: bool = False) -> np.ndarray:
    """Doppler candidates at step 1 / (T_A (P+1)).

    The folded grid covers [0, 1/(2 T_A)); the signed grid covers the full
    period around zero with exactly twice as many candidates.
    """
    half = folded_count(p)
    k = np.arange(-half, half) if signed else np.arange(half)
    return k / (cfg.packet_interval * (p + 1))


def delay_grid(cfg: ScenarioConfig, q: int, signed: bool = False) -> np.ndarray:
    """Relative-delay candidates at step T / (Q+1), folded or signed."""
    half = folded_count(q)
    k = np.arange(-half, half) if signed else np.arange(half)
    return k * cfg.symbol_period / (q + 1)


@dataclass(frozen=True, eq=False)
class AxisEstimate:
    """Peaks of one parameter search.

    Attributes:
        values: Estimated parameters, strongest peak first.
        spectrum: The coarse pseudo-spectrum.
        complete: False when fewer peaks than requested were found.
        matrix_shape: Shape of the decomposed matrix.
    """
    values: np.ndarray
    spectrum: PseudoSpectrum
    complete: bool
    matrix_shape: tuple[int, int]

    @property
    def evaluations(self) -> int:
        return self.spectrum.evaluations


def subspace_search(
    matrix: np.ndarray,
    rank: int,
    num_peaks: int,
    basis_fn: Callable[[np.ndarray], np.ndarray],
    grid: np.ndarray,
    refine: bool = True,
    circular: bool = False,
) -> AxisEstimate:
    """Pseudo-spectrum search of a signal matrix over a 1-D candidate grid.

    The null space keeps everything past the leading ``rank`` directions.
    Peaks are refined within one grid step when ``refine`` is set.
    """
    decomposition = svd_left(matrix, rank)

    def unit_basis(x: np.ndarray) -> np.ndarray:
        return unit_rows(np.atleast_2d(basis_fn(x)))

    spectrum = pseudo_spectrum(decomposition.null_space, unit_basis, grid)
    picks = pick_peaks(spectrum.values, num_peaks, min_separation_bins=1, circular=circular)
    values = grid[picks.indices].astype(float)

    if refine and len(grid) > 1:
        step = float(grid[1] - grid[0])
        objective = null_objective(decomposition.null_space, basis_fn)
        values = np.array([refine_peak(objective, v, step) for v in values])

    logger.debug(
        "Searched %d candidates on a %dx%d matrix (rank %d): %s",
        len(grid), *matrix.shape, rank, np.array2string(values, precision=6),
    )
    return AxisEstimate(values, spectrum, picks.complete, matrix.shape)


def estimate_dopplers_abs(
    p_matrix: np.ndarray, num_targets: int, cfg: ScenarioConfig, refine: bool = True
) -> AxisEstimate:
    """|f_D| of each target from the mirrored P matrix."""
    p = p_matrix.shape[0] - 1
    result = subspace_search(
        p_matrix,
        num_targets,
        num_targets,
        lambda f: basis_p(f, p, cfg.packet_interval),
        doppler_grid(cfg, p),
        refine=refine,
    )
    return replace(result, values=np.abs(result.values))


def estimate_delays_rel(
    q_matrix: np.ndarray, num_targets: int, cfg: ScenarioConfig, refine: bool = True
) -> AxisEstimate:
    """tau_l - tau_0 of each target from the mirrored Q matrix."""
    q = q_matrix.shape[0] - 1
    result = subspace_search(
        q_matrix,
        num_targets,
        num_targets,
        lambda tau: basis_q(tau, q, cfg.symbol_period),
        delay_grid(cfg, q),
        refine=refine,
    )
    return replace(result, values=np.abs(result.values))


# --- Pairing ---

def side_gain_matrix(
    xi: XiGrid,
    dopplers: np.ndarray,
    delays_rel: np.ndarray,
    omega_los: float,
    cfg: ScenarioConfig,
) -> np.ndarray:
    """Combining gain P_xi for every (signed Doppler, relative delay) pair.

    P_xi(f, tau) = sum_{n,m,g} xi_n[m,g] e^{j m 2 pi T_A f}
    e^{-j g 2 pi tau / T} e^{-j lag_n Omega_0}. The side product of a target
    at (f_l, tau_l) adds up coherently at (+f_l, tau_l).

    Returns:
        Complex array of shape (len(dopplers), len(delays_rel)).
    """
    num_packets, num_subcarriers = xi.rho.shape[1:]
    m = np.arange(num_packets)
    g = np.arange(num_subcarriers)
    doppler_kernel = np.exp(2j * math.pi * cfg.packet_interval * np.outer(m, dopplers))
    delay_kernel = np.exp(-2j * math.pi * np.outer(g, delays_rel) / cfg.symbol_period)
    spatial = np.exp(-1j * xi.lags * omega_los)
    per_delay = xi.rho @ delay_kernel
    per_pair = np.einsum("kmj,mi->kij", per_delay, doppler_kernel)
    return np.einsum("k,kij->ij", spatial, per_pair)


def combine_gain_Pxi(
    xi: XiGrid, doppler: float, delay_rel: float, omega_los: float, cfg: ScenarioConfig
) -> complex:
    """P_xi at a single signed candidate."""
    return complex(
        side_gain_matrix(xi, np.array([doppler]), np.array([delay_rel]), omega_los, cfg)[0, 0]
    )


def greedy_pairs(scores: np.ndarray) -> list[tuple[int, int, int]]:
    """Greedy assignment on a (dopplers, 2 signs, delays) score cube.

    Each round takes the largest remaining score, then removes that
    (Doppler, sign) row and that delay column. A |f_D| can therefore serve
    two targets of opposite sign, which is how targets sharing a Doppler
    magnitude (one folded peak) are recovered. Ties go to the lowest flat
    index, i.e. the earlier Doppler, the positive sign, the earlier delay.

    Returns:
        (doppler_index, sign_index, delay_index) per round; sign_index 0 is +.
    """
    num_dopplers, num_signs, num_delays = scores.shape
    active = np.ones(scores.shape, dtype=bool)
    pairs = []
    for _ in range(min(num_signs * num_dopplers, num_delays)):
        masked = np.where(active, scores, -np.inf)
        i, s, j = np.unravel_index(int(np.argmax(masked)), scores.shape)
        pairs.append((int(i), int(s), int(j)))
        active[i, s, :] = False
        active[:, :, j] = False
    return pairs


def pair_and_sign(
    dopplers_abs: np.ndarray,
    delays_rel: np.ndarray,
    xi: XiGrid,
    omega_los: float,
    tau_los: float,
    cfg: ScenarioConfig,
    gain_matrix: GainMatrixFn = side_gain_matrix,
) -> EstimateSet:
    """Match every |f_D| to a delay and a sign by maximum combining gain.

    All 2 L^2 signed candidates are scored once; see greedy_pairs for the
    removal rule. The result is flagged ``shared_doppler_magnitude`` when
    one |f_D| was paired under both signs.
    """
    dopplers_abs = np.asarray(dopplers_abs, dtype=float)
    delays_rel = np.asarray(delays_rel, dtype=float)
    estimates = EstimateSet()
    if dopplers_abs.size == 0 or delays_rel.size == 0:
        return estimates

    signed = np.concatenate([dopplers_abs, -dopplers_abs])
    magnitude = np.abs(gain_matrix(xi, signed, delays_rel, omega_los, cfg))
    scores = magnitude.reshape(2, len(dopplers_abs), len(delays_rel)).transpose(1, 0, 2)

    pairs = greedy_pairs(scores)
    for i, s, j in pairs:
        doppler = dopplers_abs[i] if s == 0 else -dopplers_abs[i]
        estimates.targets.append(
            TargetEstimate(
                delay_rel=float(delays_rel[j]),
                delay_abs=float(tau_los + delays_rel[j]),
                doppler=float(doppler),
                pair_score=float(scores[i, s, j]),
            )
        )
    rows = [i for i, _, _ in pairs]
    if len(set(rows)) < len(rows):
        estimates.flag("shared_doppler_magnitude")
    return estimates


# --- Full estimator ---

def is_los_only(xi: XiGrid) -> bool:
    return float(np.mean(np.abs(xi.rho) ** 2)) <= LOS_ONLY_ENERGY


def estimate_delay_doppler(
    xi: XiGrid,
    omega_los: float,
    tau_los: float,
    cfg: ScenarioConfig,
    mirror: MirrorConfig,
    num_targets: int | None = None,
) -> EstimateSet:
    """Mirrored-MUSIC estimation of paired delays and signed Dopplers.

    Args:
        xi: High-pass filtered CACC output.
        omega_los: LOS spatial frequency Omega_0.
        tau_los: LOS delay tau_0 (s); absolute delays are tau_0 plus the
            relative estimate.
        cfg: Scenario providing T_A and T.
        mirror: Window lengths and the (possibly automatic) n0, m0, g0.
        num_targets: Number of targets L; None estimates it by MDL on the
            singular values of the P matrix.

    Returns:
        EstimateSet; flagged ``los_only`` (and empty) when xi carries no
        energy, ``short_doppler_peaks`` / ``short_delay_peaks`` when a search
        found fewer than L peaks, ``shared_doppler_magnitude`` when two
        targets of opposite sign share one |f_D| and ``unpaired_targets``
        when fewer than L targets could be paired.

    Raises:
        ModelValidationError: If the windows violate their bounds for L.
    """
    if is_los_only(xi):
        logger.warning("Filter output has no energy; treating the scene as LOS-only")
        estimates = EstimateSet()
        estimates.flag("los_only")
        return estimates

    mirror = resolve_mirror(xi, mirror)
    p_matrix = assemble_P(xi, mirror)
    q_matrix = assemble_Q(xi, mirror)

    if num_targets is None:
        singular_values = svd_left(p_matrix).singular_values
        num_targets = estimate_model_order(singular_values, p_matrix.shape[1])
        logger.info("MDL selected L=%d", num_targets)
    mirror.validate(num_targets, xi.rho.shape[1], xi.rho.shape[2])

    dopplers = estimate_dopplers_abs(p_matrix, num_targets, cfg, refine=mirror.refine)
    delays = estimate_delays_rel(q_matrix, num_targets, cfg, refine=mirror.refine)

    estimates = pair_and_sign(dopplers.values, delays.values, xi, omega_los, tau_los, cfg)
    estimates.candidate_evaluations = dopplers.evaluations + delays.evaluations
    if not dopplers.complete:
        estimates.flag("short_doppler_peaks")
    if not delays.complete:
        estimates.flag("short_delay_peaks")
    if len(estimates) < num_targets:
        estimates.flag("unpaired_targets")
    logger.debug("Mirrored-MUSIC paired %d targets", len(estimates))
    return estimates
