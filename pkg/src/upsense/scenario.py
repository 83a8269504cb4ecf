"""Scenario synthesis: clock offsets, preamble symbols and the received grid."""

import logging
import math

import numpy as np

from .models import (
    CfoModel,
    ModelValidationError,
    OffsetTrace,
    PathParams,
    RxGrid,
    ScenarioConfig,
    SymbolGrid,
    TimingOffsetModel,
    validate_paths,
)

logger = logging.getLogger(__name__)

QPSK = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Create the generator used for one scenario or trial."""
    return np.random.default_rng(seed)


def steering(spatial_freq: float, lags: np.ndarray) -> np.ndarray:
    """Array response exp(j * lag * Omega) over the given antenna lags."""
    return np.exp(1j * np.asarray(lags) * spatial_freq)


def generate_offsets(
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    to_model: TimingOffsetModel | None = None,
    cfo_model: CfoModel | None = None,
) -> OffsetTrace:
    """Draw per-packet timing offsets and carrier frequency offsets.

    Timing offsets are i.i.d. uniform over [0, to_max_fraction * T_C) per
    packet. A constant CFO is drawn uniformly within +-cfo_ppm of the carrier;
    the random-walk law starts from such a draw and adds Gaussian increments of
    standard deviation cfo_step_hz per packet.

    Args:
        cfg: Scenario providing M, T_C, the carrier and the law parameters.
        rng: Random generator.
        to_model: Override of cfg.to_model.
        cfo_model: Override of cfg.cfo_model.

    Returns:
        OffsetTrace of length M.
    """
    to_model = to_model or cfg.to_model
    cfo_model = cfo_model or cfg.cfo_model
    count = cfg.num_packets

    match to_model:
        case TimingOffsetModel.NONE:
            timing = np.zeros(count)
        case TimingOffsetModel.PER_PACKET_UNIFORM:
            timing = rng.uniform(0.0, cfg.to_max_fraction * cfg.cp_period, count)

    cfo_bound = cfg.cfo_ppm * 1e-6 * cfg.carrier_freq
    match cfo_model:
        case CfoModel.NONE:
            cfo = np.zeros(count)
        case CfoModel.CONSTANT:
            cfo = np.full(count, rng.uniform(-cfo_bound, cfo_bound))
        case CfoModel.RANDOM_WALK:
            start = rng.uniform(-cfo_bound, cfo_bound)
            steps = rng.normal(0.0, cfg.cfo_step_hz, count)
            steps[0] = 0.0
            cfo = start + np.cumsum(steps)

    return OffsetTrace(timing_offset=timing, cfo=cfo)


def generate_symbols(cfg: ScenarioConfig, rng: np.random.Generator) -> SymbolGrid:
    """Draw an M x G grid of QPSK preamble symbols (unit modulus)."""
    indices = rng.integers(0, 4, size=(cfg.num_packets, cfg.num_subcarriers))
    return SymbolGrid(QPSK[indices])


def path_response(
    cfg: ScenarioConfig, path: PathParams, offsets: OffsetTrace
) -> np.ndarray:
    """Noiseless, symbol-free contribution of one path, shape N x M x G."""
    n = np.arange(cfg.num_antennas)
    m = np.arange(cfg.num_packets)
    g = np.arange(cfg.num_subcarriers)
    spatial = steering(path.spatial_freq, n)
    slow = np.exp(2j * np.pi * m * cfg.packet_interval * (path.doppler + offsets.cfo))
    fast = np.exp(
        -2j * np.pi * np.outer(path.delay + offsets.timing_offset, g) / cfg.symbol_period
    )
    return path.gain * spatial[:, None, None] * (slow[:, None] * fast)[None, :, :]


def synthesize_rx(
    cfg: ScenarioConfig,
    paths: list[PathParams],
    offsets: OffsetTrace,
    symbols: SymbolGrid,
    rng: np.random.Generator,
) -> RxGrid:
    """Synthesize the received frequency-domain grid y_n[m, g].

    Each path contributes alpha e^{j n Omega} e^{j 2 pi m T_A (f_D + cfo(m))}
    e^{-j 2 pi (g / T)(tau + to(m))} x[m, g]; circular complex Gaussian noise
    of variance sigma^2 is added on every entry.

    Raises:
        ModelValidationError: On an invalid path list, a delay outside
            [0, T_C), or an offset trace / symbol grid of the wrong size.
    """
    validate_paths(cfg, paths)
    if len(offsets) != cfg.num_packets:
        raise ModelValidationError(
            f"offset trace has {len(offsets)} packets, scenario has {cfg.num_packets}"
        )
    if symbols.x.shape != (cfg.num_packets, cfg.num_subcarriers):
        raise ModelValidationError(
            f"symbol grid shape {symbols.x.shape} does not match "
            f"({cfg.num_packets}, {cfg.num_subcarriers})"
        )

    y = np.zeros(cfg.shape, dtype=complex)
    for path in paths:
        y += path_response(cfg, path, offsets)
    y *= symbols.x[None, :, :]

    if cfg.noise_variance > 0:
        scale = math.sqrt(cfg.noise_variance / 2)
        y += scale * (rng.standard_normal(cfg.shape) + 1j * rng.standard_normal(cfg.shape))

    logger.debug(
        "Synthesized grid %s with %d paths, sigma^2=%.3g",
        cfg.shape, len(paths), cfg.noise_variance,
    )
    return RxGrid(y)


def random_paths(
    cfg: ScenarioConfig,
    num_targets: int,
    rng: np.random.Generator,
    max_delay: float = 0.4e-6,
    max_doppler: float = 300.0,
    min_delay_gap: float = 0.0,
    min_doppler_gap: float = 0.0,
    min_abs_doppler: float = 0.0,
    max_tries: int = 1000,
) -> list[PathParams]:
    """Draw a random scene: one LOS path plus num_targets NLOS paths.

    Delays fall in [0, max_delay) capped by the CP minus the timing-offset
    bound, with every NLOS delay above the LOS delay. Dopplers are uniform
    over [-max_doppler, max_doppler], AoAs uniform over (0, pi) and gain
    phases uniform. The LOS path has unit power, every NLOS path sits
    cfg.los_nlos_gap_db below it.

    The gap arguments reject draws whose relative delays, or Doppler
    magnitudes, come closer than the given spacing.

    Raises:
        ModelValidationError: If no draw satisfies the gaps in max_tries.
    """
    delay_cap = min(max_delay, (1 - cfg.to_max_fraction) * cfg.cp_period)
    los_delay_cap = 0.1 * delay_cap
    nlos_amplitude = 10 ** (-cfg.los_nlos_gap_db / 20)

    for _ in range(max_tries):
        los_delay = rng.uniform(0.0, los_delay_cap)
        delays = rng.uniform(los_delay, delay_cap, num_targets)
        dopplers = rng.uniform(-max_doppler, max_doppler, num_targets)
        angles = rng.uniform(0.0, math.pi, num_targets + 1)
        phases = rng.uniform(0.0, 2 * math.pi, num_targets + 1)
        if not _gaps_ok(delays - los_delay, min_delay_gap, lower=0.0):
            continue
        if not _gaps_ok(np.abs(dopplers), min_doppler_gap, lower=min_abs_doppler):
            continue
        if np.any(angles <= 0):
            continue
        break
    else:
        raise ModelValidationError(
            f"could not draw {num_targets} targets with the requested spacing "
            f"in {max_tries} tries"
        )

    paths = [
        PathParams.from_angle(
            gain=np.exp(1j * phases[0]), delay=los_delay, doppler=0.0,
            aoa=angles[0], antenna_spacing=cfg.antenna_spacing, is_los=True,
        )
    ]
    for i in range(num_targets):
        paths.append(
            PathParams.from_angle(
                gain=nlos_amplitude * np.exp(1j * phases[i + 1]),
                delay=delays[i], doppler=dopplers[i], aoa=angles[i + 1],
                antenna_spacing=cfg.antenna_spacing,
            )
        )
    return paths


def _gaps_ok(values: np.ndarray, gap: float, lower: float) -> bool:
    if np.any(values < max(lower, gap)):
        return False
    if gap <= 0 or values.size < 2:
        return True
    return bool(np.min(np.diff(np.sort(values))) >= gap)


def simulate(
    cfg: ScenarioConfig,
    paths: list[PathParams],
    rng: np.random.Generator,
) -> tuple[RxGrid, OffsetTrace]:
    """Draw offsets and symbols from rng and synthesize the received grid."""
    offsets = generate_offsets(cfg, rng)
    symbols = generate_symbols(cfg, rng)
    return synthesize_rx(cfg, paths, offsets, symbols, rng), offsets
