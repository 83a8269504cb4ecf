"""Subspace machinery shared by the MUSIC-type estimators."""

from dataclasses import dataclass
import logging
from typing import Callable

import numpy as np
from scipy import linalg, optimize, signal

logger = logging.getLogger(__name__)

PSEUDO_SPECTRUM_CAP = 1e12

# Maps a 1-D array of K candidate parameters to a K x D matrix of basis vectors.
BasisFn = Callable[[np.ndarray], np.ndarray]


class SubspaceError(ValueError):
    """Invalid input to a subspace operation."""


@dataclass(frozen=True, eq=False)
class SubspaceDecomposition:
    """Full SVD of a signal matrix with a chosen signal rank.

    Attributes:
        left_singulars: U, all left singular vectors as columns.
        singular_values: Nonincreasing singular values.
        right_singulars: V (not V^H), economy size.
        signal_rank: Number of leading directions treated as signal.
    """
    left_singulars: np.ndarray
    singular_values: np.ndarray
    right_singulars: np.ndarray
    signal_rank: int = 0

    @property
    def signal_space(self) -> np.ndarray:
        return self.left_singulars[:, : self.signal_rank]

    @property
    def null_space(self) -> np.ndarray:
        """Orthonormal complement of the leading signal_rank left directions."""
        return self.left_singulars[:, self.signal_rank:]

    def with_rank(self, rank: int) -> "SubspaceDecomposition":
        if not 0 <= rank <= self.left_singulars.shape[1]:
            raise SubspaceError(
                f"signal rank {rank} outside [0, {self.left_singulars.shape[1]}]"
            )
        return SubspaceDecomposition(
            self.left_singulars, self.singular_values, self.right_singulars, rank
        )

    def gap_ratio(self, rank: int) -> float:
        """sigma_{rank+1} / sigma_1, zero when the matrix has no further values."""
        if rank >= len(self.singular_values) or self.singular_values[0] == 0:
            return 0.0
        return float(self.singular_values[rank] / self.singular_values[0])


def svd_left(matrix: np.ndarray, rank: int = 0) -> SubspaceDecomposition:
    """Singular value decomposition keeping the full left basis.

    Raises:
        SubspaceError: If the matrix is not 2-D or holds non-finite entries.
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise SubspaceError(f"expected a matrix (got {matrix.ndim} dimensions)")
    try:
        u, s, vh = linalg.svd(matrix, full_matrices=True, check_finite=True)
    except ValueError as e:
        raise SubspaceError(f"cannot decompose matrix: {e}") from e
    right = vh.conj().T[:, : len(s)]
    logger.debug("SVD of %dx%d matrix, rank %d", *matrix.shape, rank)
    return SubspaceDecomposition(u, s, right).with_rank(rank)


def estimate_model_order(singular_values: np.ndarray, num_snapshots: int) -> int:
    """Minimum description length estimate of the number of signal components.

    The squared singular values stand in for covariance eigenvalues. Values
    are floored at machine precision relative to the largest so exact zeros
    stay finite. The result is clamped to [1, len - 1].
    """
    values = np.sort(np.asarray(singular_values, dtype=float))[::-1]
    count = len(values)
    if count < 2:
        return 1
    eig = values ** 2
    floor = np.finfo(float).eps * max(eig[0], np.finfo(float).tiny)
    eig = np.maximum(eig, floor)

    scores = np.empty(count)
    for k in range(count):
        tail = eig[k:]
        log_ratio = np.mean(np.log(tail)) - np.log(np.mean(tail))
        penalty = 0.5 * k * (2 * count - k) * np.log(num_snapshots)
        scores[k] = -num_snapshots * (count - k) * log_ratio + penalty
    order = int(np.argmin(scores))
    clamped = min(max(order, 1), count - 1)
    if clamped != order:
        logger.warning("MDL order %d clamped to %d", order, clamped)
    return clamped


@dataclass(frozen=True, eq=False)
class PseudoSpectrum:
    """MUSIC pseudo-spectrum over a candidate grid."""
    grid: np.ndarray
    values: np.ndarray

    @property
    def evaluations(self) -> int:
        return len(self.grid)


def null_projection(null_space: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """||b^H U_null||^2 for every row b of a K x D basis matrix."""
    return np.sum(np.abs(basis.conj() @ null_space) ** 2, axis=1)


def pseudo_spectrum(
    null_space: np.ndarray,
    basis_fn: BasisFn,
    candidate_grid: np.ndarray,
    cap: float = PSEUDO_SPECTRUM_CAP,
) -> PseudoSpectrum:
    """Evaluate 1 / ||basis(c)^H U_null||_F^2 over the candidates.

    Exact-null candidates are capped at ``cap``; an all-zero basis vector
    scores 0.

    Raises:
        SubspaceError: If the null space is empty or its row count differs
            from the basis length.
    """
    if null_space.shape[1] == 0:
        raise SubspaceError("null space is empty: signal rank equals the dimension")
    grid = np.asarray(candidate_grid, dtype=float)
    basis = np.atleast_2d(basis_fn(grid))
    if basis.shape[1] != null_space.shape[0]:
        raise SubspaceError(
            f"basis length {basis.shape[1]} does not match null-space rows "
            f"{null_space.shape[0]}"
        )
    denominator = null_projection(null_space, basis)
    with np.errstate(divide="ignore"):
        values = np.where(denominator > 0, 1.0 / denominator, cap)
    values = np.where(np.any(basis != 0, axis=1), np.minimum(values, cap), 0.0)
    return PseudoSpectrum(grid=grid, values=values)


def unit_rows(basis: np.ndarray) -> np.ndarray:
    """Scale every non-zero row to unit norm."""
    norms = np.linalg.norm(basis, axis=-1, keepdims=True)
    return np.divide(basis, norms, out=np.zeros_like(basis), where=norms > 0)


@dataclass(frozen=True, eq=False)
class PeakSelection:
    """Indices of the chosen peaks, strongest first."""
    indices: np.ndarray
    requested: int

    @property
    def complete(self) -> bool:
        return len(self.indices) >= self.requested


def local_maxima(values: np.ndarray, circular: bool = False) -> np.ndarray:
    """Indices of local maxima, largest first and lower index first on ties."""
    values = np.asarray(values, dtype=float)
    if circular:
        padded = np.concatenate([values[-1:], values, values[:1]])
    else:
        padded = np.concatenate([[-np.inf], values, [-np.inf]])
    found, _ = signal.find_peaks(padded)
    found = found - 1
    return found[np.lexsort((found, -values[found]))]


def pick_peaks(
    values: np.ndarray,
    k: int,
    min_separation_bins: int = 1,
    circular: bool = False,
) -> PeakSelection:
    """Greedy selection of up to k local maxima, largest first.

    A peak is kept only if it lies at least min_separation_bins from every
    peak already kept. Equal peaks are taken in index order. Border samples
    count as maxima on a linear grid; on a circular grid the ends wrap.
    """
    if k < 1:
        raise SubspaceError(f"k must be >= 1 (got {k})")
    values = np.asarray(values, dtype=float)
    size = len(values)
    candidates = local_maxima(values, circular)
    if candidates.size == 0 and size:
        candidates = np.array([int(np.argmax(values))])

    chosen: list[int] = []
    for index in candidates:
        if len(chosen) == k:
            break
        distances = np.abs(np.array(chosen) - index)
        if circular:
            distances = np.minimum(distances, size - distances)
        if chosen and np.min(distances) < min_separation_bins:
            continue
        chosen.append(int(index))

    selection = PeakSelection(np.array(chosen, dtype=int), k)
    if not selection.complete:
        logger.warning("Only %d of %d requested peaks found", len(chosen), k)
    return selection


def null_objective(null_space: np.ndarray, basis_fn: BasisFn) -> Callable[[float], float]:
    """Scalar ||b(x)^H U_null||^2 of the unit-norm basis at x (inf for a zero basis)."""

    def objective(x: float) -> float:
        basis = np.atleast_2d(basis_fn(np.array([x])))
        norm = np.linalg.norm(basis)
        if norm == 0:
            return np.inf
        return float(null_projection(null_space, basis / norm)[0])

    return objective


def refine_peak(
    objective: Callable[[float], float], center: float, half_width: float
) -> float:
    """Minimise a scalar null-spectrum within center +- half_width."""
    result = optimize.minimize_scalar(
        objective,
        bounds=(center - half_width, center + half_width),
        method="bounded",
        options={"xatol": half_width * 1e-6},
    )
    if not result.success or objective(result.x) > objective(center):
        return center
    return float(result.x)
