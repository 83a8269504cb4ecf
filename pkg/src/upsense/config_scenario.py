"""Parser for scenario / experiment configuration files (key = value lines)."""

from dataclasses import dataclass, field, replace
import math
from pathlib import Path
from typing import Any, Callable

from .models import (
    DEFAULT_CUTOFF,
    CfoModel,
    EstimatorSettings,
    ExperimentSpec,
    FilterKind,
    Method,
    ModelOrderMode,
    ModelValidationError,
    PathParams,
    ScenarioConfig,
    SweepKind,
    TimingOffsetModel,
    validate_paths,
)


class ConfigParseError(Exception):
    """Error parsing a configuration file."""

    def __init__(self, message: str, line_number: int, line_content: str):
        self.line_number = line_number
        self.line_content = line_content
        super().__init__(f"Line {line_number}: {message}\n  Content: {line_content!r}")


def _parse_bool(value: str) -> bool:
    match value.lower():
        case "true" | "yes" | "on" | "1":
            return True
        case "false" | "no" | "off" | "0":
            return False
        case _:
            raise ValueError(f"expected true or false, got {value!r}")


def _parse_int(value: str) -> int:
    number = float(value)
    if not number.is_integer():
        raise ValueError(f"expected an integer, got {value!r}")
    return int(number)


SCENARIO_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "carrier_freq": ("carrier_freq", float),
    "num_subcarriers": ("num_subcarriers", _parse_int),
    "bandwidth": ("bandwidth", float),
    "cp_period": ("cp_period", float),
    "packet_interval": ("packet_interval", float),
    "num_packets": ("num_packets", _parse_int),
    "num_antennas": ("num_antennas", _parse_int),
    "antenna_spacing": ("antenna_spacing", float),
    "los_nlos_gap_db": ("los_nlos_gap_db", float),
    "seed": ("rng_seed", _parse_int),
    "to_model": ("to_model", TimingOffsetModel.from_str),
    "to_max_fraction": ("to_max_fraction", float),
    "cfo_model": ("cfo_model", CfoModel.from_str),
    "cfo_ppm": ("cfo_ppm", float),
    "cfo_step_hz": ("cfo_step_hz", float),
}

ESTIMATOR_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "p": ("p", _parse_int),
    "q": ("q", _parse_int),
    "c": ("c", _parse_int),
    "c1": ("c1", _parse_int),
    "aoa": ("aoa", _parse_bool),
    "multi_peak": ("multi_peak", _parse_bool),
    "filter": ("filter", FilterKind.from_str),
    "filter_order": ("filter_order", _parse_int),
    "mean_window": ("mean_window", _parse_int),
    "model_order": ("model_order", ModelOrderMode.from_str),
}

EXPERIMENT_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "num_targets": ("num_targets", _parse_int),
    "max_delay": ("max_delay", float),
    "max_doppler": ("max_doppler", float),
    "trials": ("trials", _parse_int),
    "threshold": ("threshold", float),
}


@dataclass
class _PendingPath:
    is_los: bool
    power_db: float
    delay: float
    doppler: float
    aoa: float
    line_number: int
    line: str


@dataclass
class _ConfigState:
    scenario: dict[str, Any] = field(default_factory=dict)
    estimator: dict[str, Any] = field(default_factory=dict)
    experiment: dict[str, Any] = field(default_factory=dict)
    paths: list[_PendingPath] = field(default_factory=list)
    noise: tuple[str, float] | None = None
    last_line: tuple[int, str] = (0, "")


def parse_config_file(path: Path) -> ExperimentSpec:
    """Parse a configuration file from disk.

    Args:
        path: Path to the configuration file.

    Returns:
        ExperimentSpec holding the scenario, the scene and every estimator
        setting (keys left out keep their defaults).

    Raises:
        FileNotFoundError: If the file doesn't exist.
        ConfigParseError: If the file contains invalid content.
    """
    content = path.read_text(encoding="utf-8")
    return parse_config_content(content)


def parse_config_content(content: str) -> ExperimentSpec:
    """Parse configuration content from a string.

    Raises:
        ConfigParseError: If the content contains invalid syntax, an unknown
            key, a bad value, or values that together violate a model
            invariant (reported at the last line that contributed).
    """
    state = _ConfigState()
    for line_number, line in enumerate(content.splitlines(), start=1):
        entry = parse_config_line(line, line_number)
        if entry is not None:
            key, value = entry
            _apply(state, key, value, line_number, line.strip())
    return _build(state)


def parse_config_line(line: str, line_number: int) -> tuple[str, str] | None:
    """Split one line into (key, value).

    Returns:
        None for blank lines and comments.

    Raises:
        ConfigParseError: If the line is not ``key = value``.
    """
    line = line.strip()
    if not line or line.startswith("#"):
        return None

    # Trailing comments
    text = line.split("#", 1)[0].strip()
    if "=" not in text:
        raise ConfigParseError("Invalid line format. Expected key = value", line_number, line)

    key, _, value = text.partition("=")
    key = key.strip().lower()
    value = value.strip()
    if not key:
        raise ConfigParseError("Missing key before '='", line_number, line)
    if not value:
        raise ConfigParseError(f"Empty value for key {key}", line_number, line)
    return key, value


def _apply(state: _ConfigState, key: str, value: str, line_number: int, line: str) -> None:
    try:
        match key:
            case _ if key in SCENARIO_KEYS:
                name, parse = SCENARIO_KEYS[key]
                state.scenario[name] = parse(value)
                state.last_line = (line_number, line)
            case _ if key in ESTIMATOR_KEYS:
                name, parse = ESTIMATOR_KEYS[key]
                state.estimator[name] = parse(value)
            case _ if key in EXPERIMENT_KEYS:
                name, parse = EXPERIMENT_KEYS[key]
                state.experiment[name] = parse(value)
            case "snr_db":
                state.noise = ("snr_db", float(value))
            case "noise_variance":
                state.noise = ("noise_variance", float(value))
            case "path":
                state.paths.append(_parse_path(value, line_number, line))
            case "sweep":
                kind, values = _parse_sweep(value)
                state.experiment["sweep_kind"] = kind
                state.experiment["sweep_values"] = values
            case "methods":
                state.experiment["methods"] = tuple(Method.from_str(v) for v in value.split())
            case "cutoff":
                state.estimator["cutoff"] = _parse_cutoff(value)
            case "reference":
                state.estimator["reference"] = None if value.lower() == "auto" else _parse_int(value)
            case _:
                raise ConfigParseError(f"Unknown key: {key}", line_number, line)
    except ConfigParseError:
        raise
    except ValueError as e:
        raise ConfigParseError(f"Invalid value for {key}: {e}", line_number, line) from e


def _parse_path(value: str, line_number: int, line: str) -> _PendingPath:
    """Parse ``kind power_db delay_s doppler_hz aoa_rad``."""
    parts = value.split()
    if len(parts) != 5:
        raise ConfigParseError(
            "path requires: kind power_db delay_s doppler_hz aoa_rad", line_number, line
        )
    kind = parts[0].lower()
    if kind not in ("los", "nlos"):
        raise ConfigParseError(f"Unknown path kind: {parts[0]}. Expected los or nlos",
                               line_number, line)
    power_db, delay, doppler, aoa = (float(p) for p in parts[1:])
    return _PendingPath(kind == "los", power_db, delay, doppler, aoa, line_number, line)


def _parse_sweep(value: str) -> tuple[SweepKind, tuple[float, ...]]:
    """Parse ``kind: v1 v2 ...``."""
    kind, sep, rest = value.partition(":")
    if not sep:
        raise ValueError("expected 'kind: v1 v2 ...'")
    values = tuple(float(v) for v in rest.split())
    if not values:
        raise ValueError("sweep needs at least one value")
    return SweepKind.from_str(kind), values


def _parse_cutoff(value: str) -> tuple[float, float] | None:
    if value.lower() == "auto":
        return None
    parts = value.split()
    if len(parts) != 2:
        raise ValueError("expected 'auto' or two cut-offs in rad/sample")
    cutoff = (float(parts[0]), float(parts[1]))
    if not all(0 < c < math.pi for c in cutoff):
        raise ValueError("cut-offs must lie in (0, pi)")
    return cutoff


def _build(state: _ConfigState) -> ExperimentSpec:
    line_number, line = state.last_line
    try:
        scenario = ScenarioConfig(**state.scenario)
    except ModelValidationError as e:
        raise ConfigParseError(str(e), line_number, line) from e

    paths = []
    for pending in state.paths:
        try:
            paths.append(PathParams.from_angle(
                gain=10 ** (pending.power_db / 20),
                delay=pending.delay,
                doppler=pending.doppler,
                aoa=pending.aoa,
                antenna_spacing=scenario.antenna_spacing,
                is_los=pending.is_los,
            ))
        except ModelValidationError as e:
            raise ConfigParseError(str(e), pending.line_number, pending.line) from e
    if paths:
        try:
            validate_paths(scenario, paths)
        except ModelValidationError as e:
            first = state.paths[0]
            raise ConfigParseError(str(e), first.line_number, first.line) from e

    los_power = next((p.power for p in paths if p.is_los), 1.0)
    match state.noise:
        case ("snr_db", snr):
            scenario = scenario.with_snr(snr, los_power)
        case ("noise_variance", variance):
            try:
                scenario = replace(scenario, noise_variance=variance)
            except ModelValidationError as e:
                raise ConfigParseError(str(e), line_number, line) from e

    try:
        estimator = EstimatorSettings(**state.estimator)
        return ExperimentSpec(
            scenario=scenario, paths=tuple(paths), estimator=estimator, **state.experiment
        )
    except ModelValidationError as e:
        raise ConfigParseError(str(e), line_number, line) from e


# --- Sample file generation ---

SAMPLE_CONFIG = f"""\
# upsense scenario / experiment configuration
#
# One "key = value" per line; '#' starts a comment. Every key is optional
# and defaults to the desk-scale configuration shown here.

# OFDM and array
carrier_freq     = 3e9        # Hz
num_subcarriers  = 256        # G
bandwidth        = 128e6      # Hz, symbol period T = G / bandwidth
cp_period        = 0.4e-6     # s
packet_interval  = 1e-3       # s, T_A
num_packets      = 128        # M
num_antennas     = 4          # N
antenna_spacing  = 0.5        # d / lambda

# Noise and clocks
snr_db           = 20         # LOS-referenced; or noise_variance = ...
los_nlos_gap_db  = 10
seed             = 1
to_model         = per_packet_uniform   # none | per_packet_uniform
to_max_fraction  = 0.1
cfo_model        = constant             # none | constant | random_walk
cfo_ppm          = 1.0
cfo_step_hz      = 1.0

# Scene: fixed paths (kind power_db delay_s doppler_hz aoa_rad), or leave
# them out to draw num_targets random targets per trial.
num_targets      = 3
max_delay        = 0.4e-6
max_doppler      = 300
# path = los    0    0.02e-6   0     1.3
# path = nlos  -10   0.21e-6   120   0.7

# Estimators
p                = 64
q                = 128
c                = 100
c1               = 10
aoa              = true
filter           = butterworth          # butterworth | mean_subtraction | oracle
filter_order     = 4
cutoff           = {DEFAULT_CUTOFF[0]:.6f} {DEFAULT_CUTOFF[1]:.6f}   # or auto
mean_window      = 8
reference        = 0                    # or auto
model_order      = oracle               # oracle | mdl

# Experiment
sweep            = snr_db: 0 5 10 15 20 25 30
trials           = 200
methods          = mirrored conventional ams
threshold        = 1e-3
"""


def generate_sample_config(path: Path) -> bool:
    """Generate a sample configuration file.

    Args:
        path: Path where the file should be created.

    Returns:
        True if file was created, False if it already exists.
    """
    if path.exists():
        return False

    path.write_text(SAMPLE_CONFIG, encoding="utf-8")
    return True
