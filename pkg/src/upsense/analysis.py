"""First-order error predictors for the mirrored-MUSIC and AoA estimators.

A perturbation Psi of the signal matrix moves the null space, and a single
Newton step of the MUSIC objective around the true parameter gives the
resulting parameter error. Psi is made of copies of independent CACC error
samples, so summing the first-order weights of each sample gives the error
variance in closed form.
"""

from dataclasses import dataclass, replace
import logging

import numpy as np

from .aoa import assemble_Cmatrix, basis_pair
from .cacc import analytic_xi, cacc, decompose_cacc
from .mirrored_music import (
    assemble_P,
    assemble_Q,
    basis_p,
    basis_p_derivative,
    basis_q,
    basis_q_derivative,
    resolve_mirror,
)
from .models import (
    AoAConfig,
    MirrorConfig,
    PathParams,
    PerturbationReport,
    ScenarioConfig,
    XiGrid,
    los_path,
    nlos_paths,
)
from .scenario import simulate
from .subspace import SubspaceDecomposition, SubspaceError, svd_left

logger = logging.getLogger(__name__)


def reference_objective(paths: list[PathParams], n: int) -> float:
    """|sum_l |alpha_l|^2 e^{j n Omega_l}|^2 over all paths at antenna lag n."""
    total = sum(p.power * np.exp(1j * n * p.spatial_freq) for p in paths)
    return float(abs(total) ** 2)


def best_n0(paths: list[PathParams], antennas: np.ndarray, reference: int = 0) -> int:
    """Antenna minimising the reference-selection objective (first on ties)."""
    scores = [reference_objective(paths, int(a) - reference) for a in antennas]
    return int(antennas[int(np.argmin(scores))])


@dataclass(frozen=True)
class PsiVariance:
    """Closed-form entry variance of the perturbation matrix.

    Attributes:
        delta_xi: Power of the cross-target NLOS x NLOS residual per entry.
        delta_n0: Reference-selection objective at n0.
        total: 4 delta_xi + 4 delta_n0 sigma^2.
    """
    delta_xi: float
    delta_n0: float
    total: float


def _delta_xi(paths: list[PathParams]) -> float:
    powers = np.array([p.power for p in nlos_paths(paths)])
    if powers.size == 0:
        return 0.0
    return float(np.sum(powers) ** 2 - np.sum(powers ** 2))


def psi_variance(paths: list[PathParams], n0: int, noise_variance: float) -> PsiVariance:
    """Entry variance of Psi as 4 delta_xi + 4 delta_n0 sigma^2.

    delta_xi = sum over ordered pairs l != l' of NLOS powers, the variance of
    the variant NLOS x NLOS term. n0 is the antenna lag.
    """
    delta_xi = _delta_xi(paths)
    delta_n0 = reference_objective(paths, n0)
    return PsiVariance(delta_xi, delta_n0, 4 * delta_xi + 4 * delta_n0 * noise_variance)


def cacc_entry_variance(
    paths: list[PathParams], noise_variance: float, mirrored: bool = True
) -> float:
    """Entry variance of the CACC error after the invariant terms are removed.

    Each CACC entry carries the NLOS residual (delta_xi) and the noise
    products s_n z_ref* + z_n s_ref* + z_n z_ref*, whose power is
    2 S sigma^2 + sigma^4 with S the total path power. A mirrored entry is
    the sum of two such entries.
    """
    total_power = sum(p.power for p in paths)
    per_entry = _delta_xi(paths) + 2 * total_power * noise_variance + noise_variance ** 2
    return 2 * per_entry if mirrored else per_entry


def empirical_psi_variance(
    cfg: ScenarioConfig,
    paths: list[PathParams],
    mirror: MirrorConfig,
    trials: int,
    rng: np.random.Generator,
    reference: int = 0,
) -> float:
    """Monte-Carlo mean |Psi|^2 of the mirrored P matrix.

    Every draw synthesizes a noisy grid with fresh offsets, removes the
    invariant LOS and NLOS terms from its CACC output, and mirrors what is
    left over minus the analytic xi.
    """
    mirror = resolve_mirror(analytic_xi(cfg, paths, reference), mirror)
    energies = []
    for _ in range(trials):
        rx, offsets = simulate(cfg, paths, rng)
        grid = cacc(rx, reference)
        parts = decompose_cacc(cfg, paths, offsets, reference)
        invariant = (parts.rho1 + parts.rho2_bar)[:, None, None]
        error = XiGrid.like(grid, grid.rho - invariant - parts.xi)
        energies.append(np.mean(np.abs(assemble_P(error, mirror)) ** 2))
    return float(np.mean(energies))


def mirrored_sample_index(window: int, length: int) -> np.ndarray:
    """Series positions summed into every entry of a mirrored matrix.

    Entry (i, j) of the (window+1) x (length-window) matrix is
    s[j + i] + s[j + window - i]; both index arrays are stacked.
    """
    i = np.arange(window + 1)[:, None]
    j = np.arange(length - window)[None, :]
    return np.stack([i + j, window - i + j])


def cmatrix_sample_index(xi: XiGrid, aoa_cfg: AoAConfig) -> np.ndarray:
    """Flat xi position of every entry of the stacked C matrix, shape (1, D, K)."""
    positions = np.arange(xi.rho.size).reshape(xi.rho.shape)
    index = assemble_Cmatrix(XiGrid.like(xi, positions), aoa_cfg)
    return np.rint(index.real).astype(int)[None]


def predict_parameter_error(
    decomposition: SubspaceDecomposition,
    basis: np.ndarray,
    basis_derivative: np.ndarray,
    sample_variance: float,
    sample_index: np.ndarray | None = None,
) -> float:
    """First-order variance of a MUSIC parameter estimate.

    For every basis vector p0 (columns of ``basis``) with derivative p1,
    beta = -V E^-1 U^H p0 and gamma = U_null U_null^H p1. The error is
    -Re[sum gamma^H Psi beta] / sum p1^H gamma, a linear form in the
    entries of Psi with weights W = sum gamma beta^H.

    Psi is built from independent circular samples of variance
    ``sample_variance``; ``sample_index`` names the samples each matrix
    entry sums (shape (copies, D, K), or D x K). The weights of one sample
    add up before squaring, so the variance is
    1/2 sum_k |sum_{entries of k} W|^2 var / (sum p1^H gamma)^2. Without an
    index every entry is its own sample.

    Args:
        decomposition: SVD of the noiseless signal matrix with the signal
            rank set.
        basis: D-vector or D x B matrix of basis vectors at the true value.
        basis_derivative: Their derivatives w.r.t. the parameter.
        sample_variance: Variance of one underlying sample.
        sample_index: Sample positions of the matrix entries.

    Raises:
        SubspaceError: If the derivative has no component in the null space.
    """
    p0 = np.asarray(basis).reshape(len(decomposition.left_singulars), -1)
    p1 = np.asarray(basis_derivative).reshape(p0.shape)
    rank = decomposition.signal_rank
    signal = decomposition.signal_space
    values = decomposition.singular_values[:rank]
    right = decomposition.right_singulars[:, :rank]
    null = decomposition.null_space

    beta = -right @ ((signal.conj().T @ p0) / values[:, None])
    gamma = null @ (null.conj().T @ p1)
    denominator = float(np.real(np.sum(np.conj(p1) * gamma)))
    if denominator <= 1e-12 * max(float(np.sum(np.abs(p1) ** 2)), 1e-300):
        raise SubspaceError("basis derivative has no null-space component")

    weights = gamma @ beta.conj().T
    if sample_index is None:
        energy = float(np.sum(np.abs(weights) ** 2))
    else:
        index = np.asarray(sample_index).reshape(-1, *weights.shape)
        per_sample = np.zeros(int(index.max()) + 1, dtype=complex)
        for copy in index:
            np.add.at(per_sample, copy.ravel(), weights.ravel())
        energy = float(np.sum(np.abs(per_sample) ** 2))
    return 0.5 * energy * sample_variance / denominator ** 2


def _signal_decomposition(matrix: np.ndarray, rank: int) -> SubspaceDecomposition:
    return svd_left(matrix, min(rank, matrix.shape[0] - 1))


def predict_report(
    cfg: ScenarioConfig,
    paths: list[PathParams],
    mirror: MirrorConfig,
    aoa_cfg: AoAConfig | None = None,
    reference: int = 0,
) -> PerturbationReport:
    """Average predicted variances over the targets of a known scene.

    The signal matrices come from the analytic xi and their perturbation
    from independent CACC samples of variance cacc_entry_variance, each
    entering every matrix entry it is copied to. n0 defaults to the antenna
    that minimises the reference-selection objective. The AoA prediction is
    skipped (NaN) when no AoAConfig is given.
    """
    targets = nlos_paths(paths)
    xi = analytic_xi(cfg, paths, reference)
    if mirror.n0 is None:
        mirror = replace(mirror, n0=best_n0(paths, xi.antennas, reference))
    mirror = resolve_mirror(xi, mirror)
    noise = cfg.noise_variance
    num_targets = len(targets)
    tau0 = los_path(paths).delay
    sample_var = cacc_entry_variance(paths, noise, mirrored=False)

    doppler_vars, delay_vars, aoa_vars = [], [], []
    if num_targets:
        p_dec = _signal_decomposition(assemble_P(xi, mirror), num_targets)
        q_dec = _signal_decomposition(assemble_Q(xi, mirror), num_targets)
        _, num_packets, num_subcarriers = xi.rho.shape
        p_index = mirrored_sample_index(mirror.p, num_packets)
        q_index = mirrored_sample_index(mirror.q, num_subcarriers)
        for path in targets:
            doppler_vars.append(predict_parameter_error(
                p_dec,
                basis_p(path.doppler, mirror.p, cfg.packet_interval),
                basis_p_derivative(path.doppler, mirror.p, cfg.packet_interval),
                sample_var,
                p_index,
            ))
            delay_vars.append(predict_parameter_error(
                q_dec,
                basis_q(path.delay - tau0, mirror.q, cfg.symbol_period),
                basis_q_derivative(path.delay - tau0, mirror.q, cfg.symbol_period),
                sample_var,
                q_index,
            ))

        if aoa_cfg is not None:
            c_dec = _signal_decomposition(assemble_Cmatrix(xi, aoa_cfg), 4 * num_targets)
            c_index = cmatrix_sample_index(xi, aoa_cfg)
            tiled = 1j * np.tile(xi.lags, aoa_cfg.c)
            for path in targets:
                pair = basis_pair(
                    path.spatial_freq, path.delay - tau0, path.doppler,
                    xi.lags, aoa_cfg.c, cfg,
                )
                vectors = np.column_stack([pair.first, pair.second])
                aoa_vars.append(predict_parameter_error(
                    c_dec, vectors, vectors * tiled[:, None], sample_var, c_index,
                ))

    psi = psi_variance(paths, mirror.n0 - reference, noise)
    report = PerturbationReport(
        predicted_var_doppler=float(np.mean(doppler_vars)) if doppler_vars else 0.0,
        predicted_var_delay=float(np.mean(delay_vars)) if delay_vars else 0.0,
        predicted_var_aoa=float(np.mean(aoa_vars)) if aoa_vars else float("nan"),
        psi_entry_variance=psi.total,
        delta_xi=psi.delta_xi,
        delta_n0=psi.delta_n0,
    )
    logger.debug("Predicted %s", report)
    return report
