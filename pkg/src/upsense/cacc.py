"""Cross-antenna cross-correlation and the high-pass stage that yields xi.

Multiplying every antenna by the conjugate of a reference antenna removes the
timing and carrier offsets, which are common to all antennas. What remains is
a constant LOS term, a weak NLOS x NLOS term, and the two terms carrying the
target parameters (the actual component and its mirrored side product). A 2D
high-pass over (m, g) keeps the latter two.
"""

from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy import ndimage, signal

from .models import (
    DEFAULT_CUTOFF,
    CaccDecomposition,
    CaccGrid,
    ModelValidationError,
    OffsetTrace,
    PathParams,
    RxGrid,
    ScenarioConfig,
    XiGrid,
    los_path,
    nlos_paths,
)
from .scenario import path_response

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 4
DC_REGION = 1  # half-width of the low-pass bin block used for n0 selection


class FilterDesignError(ValueError):
    """Invalid high-pass filter arguments."""


def reference_by_power(rx: RxGrid) -> int:
    """Antenna with the largest average received power."""
    power = np.mean(np.abs(rx.y) ** 2, axis=(1, 2))
    return int(np.argmax(power))


def cacc(rx: RxGrid, ref_index: int | str = 0) -> CaccGrid:
    """Cross-correlate every antenna with the reference antenna.

    rho_n[m, g] = y_n[m, g] * conj(y_ref[m, g]) for every n != ref.

    Args:
        rx: Received grid.
        ref_index: Reference antenna, or ``"auto"`` for the antenna with the
            largest average received power.

    Returns:
        CaccGrid with N - 1 rows.
    """
    if rx.num_antennas < 2:
        raise ModelValidationError("CACC needs at least two antennas")
    if ref_index == "auto":
        reference = reference_by_power(rx)
    else:
        reference = int(ref_index)
    if not 0 <= reference < rx.num_antennas:
        raise ModelValidationError(f"reference antenna {reference} outside the array")

    antennas = np.array([n for n in range(rx.num_antennas) if n != reference])
    rho = rx.y[antennas] * np.conj(rx.y[reference])[None, :, :]
    logger.debug("CACC against antenna %d over antennas %s", reference, antennas.tolist())
    return CaccGrid(rho=rho, antennas=antennas, reference=reference)


def decompose_cacc(
    cfg: ScenarioConfig,
    paths: list[PathParams],
    offsets: OffsetTrace | None = None,
    reference: int = 0,
) -> CaccDecomposition:
    """Analytic four-term split of the noiseless CACC output.

    rho1 = D_n D_ref*, rho2 = I_n I_ref*, rho3 = D_n I_ref* (side product) and
    rho4 = I_n D_ref* (actual component), where D is the LOS response and I
    the sum of NLOS responses. rho2 is further split into its invariant
    diagonal part and the cross-target remainder.
    """
    offsets = offsets if offsets is not None else OffsetTrace.zeros(cfg.num_packets)
    antennas = np.array([n for n in range(cfg.num_antennas) if n != reference])
    lags = antennas - reference
    shape = (len(antennas), cfg.num_packets, cfg.num_subcarriers)

    los = los_path(paths)
    direct = path_response(cfg, los, offsets)
    targets = nlos_paths(paths)
    if targets:
        interference = sum(path_response(cfg, p, offsets) for p in targets)
    else:
        interference = np.zeros(cfg.shape, dtype=complex)

    rho1 = los.power * np.exp(1j * lags * los.spatial_freq)
    rho2_bar = np.zeros(len(antennas), dtype=complex)
    for path in targets:
        rho2_bar += path.power * np.exp(1j * lags * path.spatial_freq)

    rho2 = interference[antennas] * np.conj(interference[reference])[None]
    rho2_tilde = rho2 - rho2_bar[:, None, None] if targets else np.zeros(shape, complex)
    rho3 = direct[antennas] * np.conj(interference[reference])[None]
    rho4 = interference[antennas] * np.conj(direct[reference])[None]

    return CaccDecomposition(
        rho1=rho1,
        rho2_bar=rho2_bar,
        rho2_tilde=rho2_tilde,
        rho3=rho3,
        rho4=rho4,
        antennas=antennas,
        reference=reference,
    )


def analytic_xi(
    cfg: ScenarioConfig, paths: list[PathParams], reference: int = 0
) -> XiGrid:
    """The ideal filter output rho3 + rho4 (offset-free by construction)."""
    return decompose_cacc(cfg, paths, reference=reference).xi_grid()


# --- High-pass filters ---

def _check_cutoff(cutoff: tuple[float, float]) -> None:
    for value in cutoff:
        if not 0 < value < math.pi:
            raise FilterDesignError(f"cut-off {value!r} outside (0, pi)")


def _zero_phase_lowpass(values: np.ndarray, sos: np.ndarray, axis: int) -> np.ndarray:
    length = values.shape[axis]
    padlen = length - 1
    real = signal.sosfiltfilt(sos, values.real, axis=axis, padtype="even", padlen=padlen)
    imag = signal.sosfiltfilt(sos, values.imag, axis=axis, padtype="even", padlen=padlen)
    return real + 1j * imag


def highpass_butterworth(
    grid: CaccGrid,
    cutoff: tuple[float, float] = DEFAULT_CUTOFF,
    order: int = DEFAULT_ORDER,
) -> XiGrid:
    """Remove the low-pass (m, g) component with a zero-phase Butterworth.

    The low-pass part is estimated by separable forward-backward Butterworth
    low-pass filtering along packets then subcarriers, with even reflection
    padding at the borders, and subtracted from the input. Only the region
    around (0, 0) is removed, so a target with zero Doppler but non-zero delay
    (or the reverse) survives.

    Args:
        grid: CACC output.
        cutoff: (omega_f, omega_tau) in rad/sample, each in (0, pi).
        order: Butterworth order.

    Raises:
        FilterDesignError: If a cut-off lies outside (0, pi) or the order is
            not positive.
    """
    _check_cutoff(cutoff)
    if order < 1:
        raise FilterDesignError(f"filter order must be positive (got {order})")

    omega_f, omega_tau = cutoff
    sos_m = signal.butter(order, omega_f / math.pi, btype="low", output="sos")
    sos_g = signal.butter(order, omega_tau / math.pi, btype="low", output="sos")

    lowpass = _zero_phase_lowpass(grid.rho, sos_m, axis=1)
    lowpass = _zero_phase_lowpass(lowpass, sos_g, axis=2)
    return XiGrid.like(grid, grid.rho - lowpass)


def highpass_mean_subtraction(grid: CaccGrid, window_packets: int) -> XiGrid:
    """Subtract a centred sliding mean over packets for every (antenna, subcarrier).

    Raises:
        FilterDesignError: If the window is not in [1, M].
    """
    num_packets = grid.rho.shape[1]
    if not 1 <= window_packets <= num_packets:
        raise FilterDesignError(
            f"window of {window_packets} packets outside [1, M={num_packets}]"
        )
    mean = ndimage.uniform_filter1d(grid.rho.real, window_packets, axis=1, mode="reflect")
    mean = mean + 1j * ndimage.uniform_filter1d(
        grid.rho.imag, window_packets, axis=1, mode="reflect"
    )
    return XiGrid.like(grid, grid.rho - mean)


def cutoff_from_dynamics(
    cfg: ScenarioConfig, min_abs_doppler: float, min_rel_delay: float
) -> tuple[float, float]:
    """Cut-off (min |pi T_A f_D|, min pi (tau_l - tau_0) / T), kept inside (0, pi)."""
    omega_f = math.pi * cfg.packet_interval * abs(min_abs_doppler)
    omega_tau = math.pi * min_rel_delay / cfg.symbol_period
    tiny = 1e-6
    return (
        min(max(omega_f, tiny), math.pi - tiny),
        min(max(omega_tau, tiny), math.pi - tiny),
    )


def cutoff_for_paths(cfg: ScenarioConfig, paths: list[PathParams]) -> tuple[float, float]:
    """Apply the cut-off rule to the dynamics of a known scene."""
    targets = nlos_paths(paths)
    if not targets:
        return DEFAULT_CUTOFF
    tau0 = los_path(paths).delay
    return cutoff_from_dynamics(
        cfg,
        min(abs(p.doppler) for p in targets),
        min(p.delay - tau0 for p in targets),
    )


# --- Spectra and diagnostics ---

@dataclass(frozen=True, eq=False)
class Spectrum2D:
    """Magnitude of the 2D transform of one antenna slice.

    ``magnitude[i, j]`` belongs to Doppler bin ``doppler_bins[i]`` and delay
    bin ``delay_bins[j]``; bins are centred (zero in the middle). A term
    e^{j 2 pi m T_A f} e^{-j 2 pi g dtau / T} peaks at Doppler bin T_A f M and
    delay bin dtau G / T.
    """
    magnitude: np.ndarray
    doppler_bins: np.ndarray
    delay_bins: np.ndarray
    doppler_hz: np.ndarray
    delay_s: np.ndarray


def spectrum_2d(grid: CaccGrid, antenna: int, cfg: ScenarioConfig | None = None) -> Spectrum2D:
    """2D spectrum of one antenna slice over (Doppler, delay) bins."""
    values = grid.rho[grid.row(antenna)]
    num_packets, num_subcarriers = values.shape
    transform = np.fft.fft(values, axis=0)
    transform = np.fft.ifft(transform, axis=1) * num_subcarriers
    magnitude = np.fft.fftshift(np.abs(transform))

    doppler_bins = np.fft.fftshift(np.fft.fftfreq(num_packets, 1 / num_packets))
    delay_bins = np.fft.fftshift(np.fft.fftfreq(num_subcarriers, 1 / num_subcarriers))
    if cfg is not None:
        doppler_hz = doppler_bins / (num_packets * cfg.packet_interval)
        delay_s = delay_bins * cfg.symbol_period / num_subcarriers
    else:
        doppler_hz = doppler_bins.astype(float)
        delay_s = delay_bins.astype(float)
    return Spectrum2D(magnitude, doppler_bins, delay_bins, doppler_hz, delay_s)


def dc_region_energy(values: np.ndarray, half_width: int = DC_REGION) -> float:
    """Energy of the (2w+1) x (2w+1) lowest-frequency bins of a 2D FFT."""
    transform = np.fft.fft2(values)
    offsets = np.arange(-half_width, half_width + 1)
    block = transform[np.ix_(offsets % values.shape[0], offsets % values.shape[1])]
    return float(np.sum(np.abs(block) ** 2))


def select_reference_index_n0(grid: CaccGrid) -> int:
    """Antenna whose slice has the least low-pass energy.

    The low-pass 2D-FFT component of a CACC slice estimates
    |sum_l |alpha_l|^2 e^{j n Omega_l}|^2, the quantity the optimal n0
    minimises.
    """
    energies = [dc_region_energy(grid.rho[k]) for k in range(grid.rho.shape[0])]
    choice = int(grid.antennas[int(np.argmin(energies))])
    logger.debug("n0 selection energies %s -> antenna %d", np.round(energies, 3), choice)
    return choice


def input_error(xi_hat: XiGrid | np.ndarray, xi_oracle: XiGrid | np.ndarray) -> float:
    """Mean squared entrywise deviation e^2 between xi_hat and the analytic xi.

    Raises:
        ModelValidationError: If the shapes differ.
    """
    a = xi_hat.rho if isinstance(xi_hat, CaccGrid) else np.asarray(xi_hat)
    b = xi_oracle.rho if isinstance(xi_oracle, CaccGrid) else np.asarray(xi_oracle)
    if a.shape != b.shape:
        raise ModelValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b) ** 2))


@dataclass(frozen=True)
class InputErrorSplit:
    """Input error split into the interference floor and the noise part."""
    total: float
    interference: float
    noise: float


def split_input_error(
    xi_hat: XiGrid | np.ndarray,
    xi_noiseless: XiGrid | np.ndarray,
    xi_oracle: XiGrid | np.ndarray,
) -> InputErrorSplit:
    """Separate the filter residual of the noiseless CACC from the noise share.

    Args:
        xi_hat: Filter output of the noisy grid.
        xi_noiseless: Same filter applied to the noiseless CACC.
        xi_oracle: Analytic rho3 + rho4, or rho4 alone for the AMS output.
    """
    interference = input_error(xi_noiseless, xi_oracle)
    noise = input_error(xi_hat, xi_noiseless)
    return InputErrorSplit(
        total=input_error(xi_hat, xi_oracle), interference=interference, noise=noise
    )
