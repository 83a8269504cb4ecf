"""Data models for upsense."""

from dataclasses import dataclass, field, replace
from enum import Enum, auto
import math

import numpy as np


class ModelValidationError(ValueError):
    """A scenario, path list or estimator setting violates a model invariant."""


def _parse_enum(cls, value: str):
    value = value.strip().lower()
    for member in cls:
        if member.value == value:
            return member
    choices = ", ".join(m.value for m in cls)
    raise ValueError(f"Unknown {cls.__name__} value: {value!r} (expected one of {choices})")


class TimingOffsetModel(Enum):
    """How the per-packet timing offset is drawn."""
    NONE = "none"
    PER_PACKET_UNIFORM = "per_packet_uniform"

    @classmethod
    def from_str(cls, value: str) -> "TimingOffsetModel":
        return _parse_enum(cls, value)


class CfoModel(Enum):
    """How the carrier frequency offset evolves over packets."""
    NONE = "none"
    CONSTANT = "constant"
    RANDOM_WALK = "random_walk"

    @classmethod
    def from_str(cls, value: str) -> "CfoModel":
        return _parse_enum(cls, value)


class FilterKind(Enum):
    """High-pass stage that turns CACC output into xi."""
    BUTTERWORTH = "butterworth"
    MEAN_SUBTRACTION = "mean_subtraction"
    ORACLE = "oracle"

    @classmethod
    def from_str(cls, value: str) -> "FilterKind":
        return _parse_enum(cls, value)


class Method(Enum):
    """Delay/Doppler estimators available to the harness and CLI."""
    MIRRORED = "mirrored"
    CONVENTIONAL = "conventional"
    AMS = "ams"

    @classmethod
    def from_str(cls, value: str) -> "Method":
        return _parse_enum(cls, value)


class Resolution(Enum):
    """AoA resolution state of a target estimate."""
    PENDING = auto()
    RESOLVED = auto()
    AMBIGUOUS = auto()
    UNRESOLVED = auto()


class SweepKind(Enum):
    """Parameter varied across the points of an experiment."""
    SNR_DB = "snr_db"
    Q = "q"
    NUM_TARGETS = "num_targets"
    C = "c"

    @classmethod
    def from_str(cls, value: str) -> "SweepKind":
        return _parse_enum(cls, value)


class ModelOrderMode(Enum):
    """Where the number of targets L comes from."""
    ORACLE = "oracle"
    MDL = "mdl"

    @classmethod
    def from_str(cls, value: str) -> "ModelOrderMode":
        return _parse_enum(cls, value)


DEFAULT_CUTOFF = (math.pi / 128, math.pi / 128)


# --- Scenario ---

@dataclass(frozen=True)
class ScenarioConfig:
    """OFDM, array and clock parameterization of one sensing scenario.

    Attributes:
        carrier_freq: Carrier frequency (Hz).
        num_subcarriers: G, subcarriers per preamble.
        bandwidth: Occupied bandwidth (Hz); the symbol period is G / bandwidth.
        cp_period: T_C, cyclic prefix duration (s).
        packet_interval: T_A, spacing between preambles (s).
        num_packets: M, preambles used for sensing.
        num_antennas: N, receive ULA size.
        antenna_spacing: d / lambda.
        noise_variance: sigma^2 of the per-entry complex AWGN.
        los_nlos_gap_db: Power gap between the LOS path and each NLOS path.
        rng_seed: Master seed for everything random in the scenario.
        to_model: Timing offset law.
        to_max_fraction: Timing offsets are drawn in [0, to_max_fraction * T_C).
        cfo_model: Carrier frequency offset law.
        cfo_ppm: Bound of the constant CFO draw, in ppm of the carrier.
        cfo_step_hz: Standard deviation of a random-walk CFO increment.
    """
    carrier_freq: float = 3e9
    num_subcarriers: int = 256
    bandwidth: float = 128e6
    cp_period: float = 0.4e-6
    packet_interval: float = 1e-3
    num_packets: int = 128
    num_antennas: int = 4
    antenna_spacing: float = 0.5
    noise_variance: float = 0.0
    los_nlos_gap_db: float = 10.0
    rng_seed: int = 0
    to_model: TimingOffsetModel = TimingOffsetModel.PER_PACKET_UNIFORM
    to_max_fraction: float = 0.1
    cfo_model: CfoModel = CfoModel.CONSTANT
    cfo_ppm: float = 1.0
    cfo_step_hz: float = 1.0

    def __post_init__(self) -> None:
        if self.num_antennas < 2:
            raise ModelValidationError(
                f"num_antennas must be >= 2 (got {self.num_antennas})"
            )
        if self.num_packets < 2:
            raise ModelValidationError(
                f"num_packets must be >= 2 (got {self.num_packets})"
            )
        if self.num_subcarriers < 2:
            raise ModelValidationError(
                f"num_subcarriers must be >= 2 (got {self.num_subcarriers})"
            )
        if self.bandwidth <= 0 or self.packet_interval <= 0:
            raise ModelValidationError("bandwidth and packet_interval must be positive")
        if not 0 < self.cp_period < self.symbol_period:
            raise ModelValidationError(
                f"cp_period must lie in (0, T={self.symbol_period:.3g} s) "
                f"(got {self.cp_period:.3g})"
            )
        if self.noise_variance < 0:
            raise ModelValidationError("noise_variance must be >= 0")
        if not 0 <= self.to_max_fraction < 1:
            raise ModelValidationError("to_max_fraction must lie in [0, 1)")

    @property
    def symbol_period(self) -> float:
        """T = G / bandwidth."""
        return self.num_subcarriers / self.bandwidth

    @property
    def shape(self) -> tuple[int, int, int]:
        """(N, M, G) of the received grid."""
        return (self.num_antennas, self.num_packets, self.num_subcarriers)

    def with_snr(self, snr_db: float, los_power: float = 1.0) -> "ScenarioConfig":
        """Return a copy whose noise variance gives the LOS-referenced SNR."""
        return replace(self, noise_variance=los_power / 10 ** (snr_db / 10))

    def snr_db(self, los_power: float = 1.0) -> float:
        """LOS-referenced SNR, 10 log10(|alpha_0|^2 / sigma^2)."""
        if self.noise_variance == 0:
            return math.inf
        return 10 * math.log10(los_power / self.noise_variance)

    @classmethod
    def desk_default(cls) -> "ScenarioConfig":
        """The desk-scale configuration: G=256, 128 MHz, M=128, N=4, T_A=1 ms."""
        return cls()


@dataclass(frozen=True)
class PathParams:
    """One propagation path.

    Attributes:
        gain: Complex amplitude alpha.
        delay: Propagation delay tau (s).
        doppler: Signed Doppler frequency f_D (Hz).
        spatial_freq: Omega = 2 pi (d / lambda) cos(theta) (rad).
        is_los: True for the single line-of-sight path.
    """
    gain: complex
    delay: float
    doppler: float
    spatial_freq: float
    is_los: bool = False

    @classmethod
    def from_angle(
        cls,
        gain: complex,
        delay: float,
        doppler: float,
        aoa: float,
        antenna_spacing: float,
        is_los: bool = False,
    ) -> "PathParams":
        """Build a path from its angle of arrival theta in (0, pi)."""
        if not 0 < aoa < math.pi:
            raise ModelValidationError(f"aoa must lie in (0, pi) (got {aoa})")
        omega = 2 * math.pi * antenna_spacing * math.cos(aoa)
        return cls(gain=complex(gain), delay=delay, doppler=doppler,
                   spatial_freq=omega, is_los=is_los)

    def angle(self, antenna_spacing: float) -> float:
        """Angle of arrival theta recovered from the spatial frequency."""
        ratio = self.spatial_freq / (2 * math.pi * antenna_spacing)
        return math.acos(max(-1.0, min(1.0, ratio)))

    @property
    def power(self) -> float:
        return abs(self.gain) ** 2


def los_path(paths: list[PathParams]) -> PathParams:
    """Return the LOS path of a validated path list."""
    for path in paths:
        if path.is_los:
            return path
    raise ModelValidationError("path list has no LOS path")


def nlos_paths(paths: list[PathParams]) -> list[PathParams]:
    """Return the target (NLOS) paths in list order."""
    return [p for p in paths if not p.is_los]


def validate_paths(cfg: ScenarioConfig, paths: list[PathParams]) -> None:
    """Check the path-list invariants against a scenario.

    Raises:
        ModelValidationError: If the list is empty, does not have exactly one
            LOS path, the LOS path moves, or a delay violates the CP bound.
    """
    if not paths:
        raise ModelValidationError("path list is empty")
    los_count = sum(1 for p in paths if p.is_los)
    if los_count != 1:
        raise ModelValidationError(f"expected exactly one LOS path (got {los_count})")
    if los_path(paths).doppler != 0:
        raise ModelValidationError("the LOS path must have zero Doppler")
    for index, path in enumerate(paths):
        if not 0 <= path.delay < cfg.cp_period:
            raise ModelValidationError(
                f"path {index}: delay {path.delay:.3g} s outside [0, T_C={cfg.cp_period:.3g} s)"
            )


# --- Grids ---

def _frozen_array(value, dtype) -> np.ndarray:
    array = np.array(value, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class OffsetTrace:
    """Per-packet timing offset (s) and carrier frequency offset (Hz)."""
    timing_offset: np.ndarray
    cfo: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "timing_offset", _frozen_array(self.timing_offset, float))
        object.__setattr__(self, "cfo", _frozen_array(self.cfo, float))
        if self.timing_offset.shape != self.cfo.shape or self.timing_offset.ndim != 1:
            raise ModelValidationError("timing_offset and cfo must be 1-D and equally long")

    def __len__(self) -> int:
        return self.timing_offset.shape[0]

    @classmethod
    def zeros(cls, num_packets: int) -> "OffsetTrace":
        return cls(np.zeros(num_packets), np.zeros(num_packets))


@dataclass(frozen=True, eq=False)
class SymbolGrid:
    """Unit-modulus preamble symbols x[m, g], shape M x G."""
    x: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", _frozen_array(self.x, complex))

    @classmethod
    def ones(cls, num_packets: int, num_subcarriers: int) -> "SymbolGrid":
        return cls(np.ones((num_packets, num_subcarriers), dtype=complex))


@dataclass(frozen=True, eq=False)
class RxGrid:
    """Received frequency-domain grid y[n, m, g], shape N x M x G."""
    y: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "y", _frozen_array(self.y, complex))
        if self.y.ndim != 3:
            raise ModelValidationError(f"RxGrid must be 3-D (got shape {self.y.shape})")

    @property
    def num_antennas(self) -> int:
        return self.y.shape[0]

    @property
    def num_packets(self) -> int:
        return self.y.shape[1]

    @property
    def num_subcarriers(self) -> int:
        return self.y.shape[2]


@dataclass(frozen=True, eq=False)
class CaccGrid:
    """Cross-antenna cross-correlation rho[k, m, g] against a reference antenna.

    Row k belongs to antenna ``antennas[k]``; ``lags[k]`` is that antenna's
    index minus the reference index and is what steering phases use.
    """
    rho: np.ndarray
    antennas: np.ndarray
    reference: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "rho", _frozen_array(self.rho, complex))
        object.__setattr__(self, "antennas", _frozen_array(self.antennas, int))
        if self.rho.ndim != 3 or self.rho.shape[0] != self.antennas.shape[0]:
            raise ModelValidationError("rho rows must match the antenna list")

    @property
    def lags(self) -> np.ndarray:
        return self.antennas - self.reference

    def row(self, antenna: int) -> int:
        """Grid row holding the given antenna."""
        hits = np.flatnonzero(self.antennas == antenna)
        if hits.size == 0:
            raise ModelValidationError(f"antenna {antenna} is not part of this grid")
        return int(hits[0])


@dataclass(frozen=True, eq=False)
class XiGrid(CaccGrid):
    """High-pass filtered CACC output xi_hat[k, m, g] (same layout as CaccGrid).

    The ``rho`` attribute holds the filtered values; ``xi`` is an alias.
    """

    @property
    def xi(self) -> np.ndarray:
        return self.rho

    @classmethod
    def like(cls, grid: CaccGrid, values: np.ndarray) -> "XiGrid":
        return cls(rho=values, antennas=grid.antennas, reference=grid.reference)


@dataclass(frozen=True, eq=False)
class CaccDecomposition:
    """Noiseless analytic split of the CACC output.

    Attributes:
        rho1: LOS x LOS term per row, constant over (m, g); shape (K,).
        rho2_bar: Invariant part of the NLOS x NLOS term; shape (K,).
        rho2_tilde: Variant (cross-target) part of the NLOS x NLOS term.
        rho3: LOS x NLOS* side product.
        rho4: NLOS x LOS* actual component.
        antennas: Antenna index per row.
        reference: Reference antenna.
    """
    rho1: np.ndarray
    rho2_bar: np.ndarray
    rho2_tilde: np.ndarray
    rho3: np.ndarray
    rho4: np.ndarray
    antennas: np.ndarray
    reference: int

    @property
    def rho2(self) -> np.ndarray:
        return self.rho2_bar[:, None, None] + self.rho2_tilde

    @property
    def xi(self) -> np.ndarray:
        """The desired filter output rho3 + rho4."""
        return self.rho3 + self.rho4

    def total(self) -> np.ndarray:
        """rho1 + rho2 + rho3 + rho4."""
        return self.rho1[:, None, None] + self.rho2 + self.rho3 + self.rho4

    def xi_grid(self) -> XiGrid:
        return XiGrid(rho=self.xi, antennas=self.antennas, reference=self.reference)


# --- Estimator settings ---

@dataclass(frozen=True)
class MirrorConfig:
    """Window lengths and fixed indices for mirrored-MUSIC.

    Attributes:
        p: Packet window P, L <= P < M - L.
        q: Subcarrier window Q, L <= Q < G - L.
        n0: Antenna whose xi slice forms the P and Q matrices; None picks
            the slice with the least low-pass energy.
        m0: Packet index used for the Q matrix; None picks the strongest.
        g0: Subcarrier index used for the P matrix; None picks the strongest.
        refine: Run a bounded scalar refinement around each coarse peak.
    """
    p: int
    q: int
    n0: int | None = None
    m0: int | None = None
    g0: int | None = None
    refine: bool = True

    def validate(self, num_targets: int, num_packets: int, num_subcarriers: int) -> None:
        if not num_targets <= self.p < num_packets - num_targets:
            raise ModelValidationError(
                f"P={self.p} violates L <= P < M - L (L={num_targets}, M={num_packets})"
            )
        if not num_targets <= self.q < num_subcarriers - num_targets:
            raise ModelValidationError(
                f"Q={self.q} violates L <= Q < G - L (L={num_targets}, G={num_subcarriers})"
            )
        if self.m0 is not None and not 0 <= self.m0 < num_packets:
            raise ModelValidationError(f"m0={self.m0} outside [0, {num_packets})")
        if self.g0 is not None and not 0 <= self.g0 < num_subcarriers:
            raise ModelValidationError(f"g0={self.g0} outside [0, {num_subcarriers})")


@dataclass(frozen=True)
class AoAConfig:
    """Settings of the multi-domain AoA search.

    Attributes:
        c: Blocks per enlarged vector, 4L/(N-1) < C < min(G-4L, M-4L).
        c1: Diagonal blocks stacked into C, C + C1 < min(M, G).
        peak_threshold_ratio: Peaks above this fraction of the maximum count.
        grid_factor: Candidates per unit of the equivalent aperture C(N-1).
        multi_peak: Use the multi-peak ambiguity rule (False keeps only the
            global maximum of each target's objective).
    """
    c: int = 100
    c1: int = 10
    peak_threshold_ratio: float = 0.5
    grid_factor: int = 4
    multi_peak: bool = True

    def aperture(self, num_antennas: int) -> int:
        """Equivalent array length C(N-1)."""
        return self.c * (num_antennas - 1)

    def min_separation(self, num_antennas: int) -> float:
        """2 pi / (C (N-1))."""
        return 2 * math.pi / self.aperture(num_antennas)

    def candidate_grid(self, num_antennas: int) -> np.ndarray:
        """Omega' candidates over [-pi, pi)."""
        count = self.grid_factor * self.aperture(num_antennas)
        return -math.pi + 2 * math.pi * np.arange(count) / count

    def validate(
        self, num_targets: int, num_antennas: int, num_packets: int, num_subcarriers: int
    ) -> None:
        lower = 4 * num_targets / (num_antennas - 1)
        upper = min(num_subcarriers - 4 * num_targets, num_packets - 4 * num_targets)
        if not lower < self.c < upper:
            raise ModelValidationError(
                f"C={self.c} violates 4L/(N-1) < C < min(G-4L, M-4L) "
                f"({lower:.3g} < C < {upper})"
            )
        if not self.c + self.c1 < min(num_packets, num_subcarriers):
            raise ModelValidationError(
                f"C + C1 = {self.c + self.c1} must be below min(M, G)"
            )


# --- Estimates ---

@dataclass(frozen=True)
class TargetEstimate:
    """One paired target estimate.

    Attributes:
        delay_rel: tau_hat - tau_0 (s), positive.
        delay_abs: tau_0 + delay_rel (s).
        doppler: Signed Doppler estimate (Hz).
        pair_score: |P_xi| of the selected pair.
        aoa: Spatial frequency Omega_hat (rad) once the AoA stage ran.
        resolution: AoA resolution state.
    """
    delay_rel: float
    delay_abs: float
    doppler: float
    pair_score: float
    aoa: float | None = None
    resolution: Resolution = Resolution.PENDING


@dataclass
class EstimateSet:
    """Paired estimates for all detected targets plus run diagnostics.

    Attributes:
        targets: Target estimates, ordered by selection.
        flags: Named conditions met during estimation (for example
            ``"los_only"``, ``"short_doppler_peaks"``).
        candidate_evaluations: Pseudo-spectrum evaluations spent on the
            delay and Doppler searches.
    """
    targets: list[TargetEstimate] = field(default_factory=list)
    flags: set[str] = field(default_factory=set)
    candidate_evaluations: int = 0

    def __len__(self) -> int:
        return len(self.targets)

    def flag(self, name: str) -> None:
        self.flags.add(name)

    def delays(self) -> np.ndarray:
        return np.array([t.delay_rel for t in self.targets])

    def dopplers(self) -> np.ndarray:
        return np.array([t.doppler for t in self.targets])

    def with_aoas(
        self, aoas: list[float | None], resolutions: list[Resolution]
    ) -> "EstimateSet":
        """Return a copy with the AoA fields filled in."""
        targets = [
            replace(target, aoa=aoa, resolution=state)
            for target, aoa, state in zip(self.targets, aoas, resolutions)
        ]
        return EstimateSet(
            targets=targets,
            flags=set(self.flags),
            candidate_evaluations=self.candidate_evaluations,
        )


@dataclass(frozen=True)
class EstimatorSettings:
    """Every estimator knob of an experiment or an ``estimate`` run.

    Attributes:
        p, q: Mirrored window lengths.
        c, c1: AoA stacking sizes.
        aoa: Run the AoA stage after pairing.
        multi_peak: Use the multi-peak AoA rule.
        filter: High-pass stage applied to the CACC output.
        filter_order: Butterworth order.
        cutoff: (omega_f, omega_tau) in rad/sample, or None to derive it from
            the scene dynamics.
        mean_window: Window (packets) of the mean-subtraction filter.
        reference: CACC reference antenna, or None for the strongest antenna.
        model_order: Oracle L or MDL.
    """
    p: int = 64
    q: int = 128
    c: int = 100
    c1: int = 10
    aoa: bool = True
    multi_peak: bool = True
    filter: FilterKind = FilterKind.BUTTERWORTH
    filter_order: int = 4
    cutoff: tuple[float, float] | None = DEFAULT_CUTOFF
    mean_window: int = 8
    reference: int | None = 0
    model_order: ModelOrderMode = ModelOrderMode.ORACLE

    def mirror_config(self) -> MirrorConfig:
        return MirrorConfig(p=self.p, q=self.q)

    def aoa_config(self) -> AoAConfig:
        return AoAConfig(c=self.c, c1=self.c1, multi_peak=self.multi_peak)


@dataclass(frozen=True)
class ExperimentSpec:
    """A Monte-Carlo study: scenario, scene law, sweep and estimators.

    Attributes:
        scenario: Base scenario (its noise variance is overridden by an SNR
            sweep).
        paths: Fixed scene; empty draws a random scene per trial.
        num_targets: Random-scene size.
        max_delay: Random-scene delay bound (s).
        max_doppler: Random-scene |f_D| bound (Hz).
        sweep_kind: Parameter varied across points.
        sweep_values: Values of the swept parameter.
        trials: Trials per sweep point.
        methods: Estimators compared at every trial.
        threshold: Per-target NMSE below which a target counts as detected.
        estimator: Estimator settings shared by all methods.
    """
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    paths: tuple[PathParams, ...] = ()
    num_targets: int = 3
    max_delay: float = 0.4e-6
    max_doppler: float = 300.0
    sweep_kind: SweepKind = SweepKind.SNR_DB
    sweep_values: tuple[float, ...] = (20.0,)
    trials: int = 1
    methods: tuple[Method, ...] = (Method.MIRRORED,)
    threshold: float = 1e-3
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ModelValidationError(f"trials must be >= 1 (got {self.trials})")
        if not self.sweep_values:
            raise ModelValidationError("sweep needs at least one value")
        if not self.methods:
            raise ModelValidationError("at least one method is required")
        if self.paths:
            validate_paths(self.scenario, list(self.paths))


@dataclass(frozen=True)
class PerturbationReport:
    """Predicted estimator error variances and the Psi-variance terms."""
    predicted_var_doppler: float
    predicted_var_delay: float
    predicted_var_aoa: float
    psi_entry_variance: float
    delta_xi: float
    delta_n0: float
