"""CSV output of estimates, spectra and experiment tables."""

import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import TextIO

import numpy as np
import pandas as pd

from .cacc import Spectrum2D
from .models import EstimateSet

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.10g"

ESTIMATE_COLUMNS = [
    "target_id", "delay_s", "delay_rel_s", "doppler_hz", "pair_score", "aoa_rad",
    "resolution_flag",
]


@dataclass
class StreamTarget:
    """Where a table goes.

    Attributes:
        path: "stdout" or a file path.
    """
    path: str = "stdout"

    def is_stdout(self) -> bool:
        return self.path == "stdout"

    def is_file(self) -> bool:
        return not self.is_stdout()


class ResultWriter:
    """Writes schema-tagged CSV tables to one target.

    Usage:
        with ResultWriter(StreamTarget("out.csv")) as writer:
            writer.write_table("estimates", estimates_frame(estimates))
    """

    def __init__(self, target: StreamTarget):
        self.target = target
        self._stream: TextIO | None = None
        self._opened = False

    def __enter__(self) -> "ResultWriter":
        if self.target.is_stdout():
            self._stream = sys.stdout
        else:
            self._stream = open(Path(self.target.path), "w", encoding="utf-8", newline="")
            self._opened = True
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self._opened and self._stream is not None:
            self._stream.close()
        self._stream = None
        self._opened = False
        return False

    def write_table(self, kind: str, frame: pd.DataFrame) -> None:
        """Write ``# upsense <kind> schema v1`` followed by the CSV table."""
        assert self._stream is not None, "ResultWriter used outside its context"
        self._stream.write(f"# upsense {kind} schema v{SCHEMA_VERSION}\n")
        frame.to_csv(self._stream, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        self._stream.flush()


def read_table(path: Path) -> pd.DataFrame:
    """Read a table written by ResultWriter (the schema line is skipped)."""
    return pd.read_csv(path, comment="#")


def estimates_frame(estimates: EstimateSet) -> pd.DataFrame:
    """One row per target estimate."""
    rows = [
        {
            "target_id": index,
            "delay_s": target.delay_abs,
            "delay_rel_s": target.delay_rel,
            "doppler_hz": target.doppler,
            "pair_score": target.pair_score,
            "aoa_rad": np.nan if target.aoa is None else target.aoa,
            "resolution_flag": target.resolution.name.lower(),
        }
        for index, target in enumerate(estimates.targets)
    ]
    return pd.DataFrame(rows, columns=ESTIMATE_COLUMNS)


def spectrum_frame(spectrum: Spectrum2D) -> pd.DataFrame:
    """Long-format 2D map: one row per (Doppler bin, delay bin)."""
    doppler_bin, delay_bin = np.meshgrid(spectrum.doppler_bins, spectrum.delay_bins, indexing="ij")
    doppler_hz, delay_s = np.meshgrid(spectrum.doppler_hz, spectrum.delay_s, indexing="ij")
    return pd.DataFrame({
        "doppler_bin": doppler_bin.ravel(),
        "delay_bin": delay_bin.ravel(),
        "doppler_hz": doppler_hz.ravel(),
        "delay_s": delay_s.ravel(),
        "magnitude": spectrum.magnitude.ravel(),
    })


def records_frame(records: list, columns: list[str] | None = None) -> pd.DataFrame:
    """Frame of dataclass records (MetricRow, BenchRow, ...)."""
    return pd.DataFrame([asdict(r) for r in records], columns=columns)
