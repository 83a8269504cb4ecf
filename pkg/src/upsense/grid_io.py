"""Binary dump and load of received grids for pipeline debugging.

Layout (little-endian):

    magic    4 bytes  b"UPSG"
    version  uint32   1
    N, M, G  uint64 x 3
    samples  N*M*G complex128, interleaved re/im, C order (n, m, g)
"""

from pathlib import Path
import struct

import numpy as np

from .models import RxGrid

MAGIC = b"UPSG"
VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")
_SAMPLE_DTYPE = np.dtype("<c16")


class GridFormatError(Exception):
    """Error reading a grid file."""

    def __init__(self, message: str, path: Path | None = None):
        self.path = path
        if path is not None:
            super().__init__(f"{path}: {message}")
        else:
            super().__init__(message)


def dump_grid(grid: RxGrid, path: Path) -> None:
    """Write a grid to disk."""
    n, m, g = grid.y.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, n, m, g))
        f.write(np.ascontiguousarray(grid.y, dtype=_SAMPLE_DTYPE).tobytes())


def load_grid(path: Path) -> RxGrid:
    """Read a grid written by dump_grid.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        GridFormatError: On a bad magic, unknown version or truncated payload.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise GridFormatError("file too short for a grid header", path)

    magic, version, n, m, g = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise GridFormatError(f"bad magic {magic!r}", path)
    if version != VERSION:
        raise GridFormatError(f"unsupported grid version {version}", path)

    expected = n * m * g * _SAMPLE_DTYPE.itemsize
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise GridFormatError(
            f"payload has {len(payload)} bytes, header promises {expected}", path
        )

    samples = np.frombuffer(payload, dtype=_SAMPLE_DTYPE).astype(complex)
    return RxGrid(samples.reshape(n, m, g))
