"""Estimation pipeline, Monte-Carlo experiments, metrics and the complexity bench."""

from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
import time

import numpy as np
from rich.progress import Progress
from scipy.stats import spearmanr

from .analysis import best_n0, predict_report, reference_objective
from .aoa import estimate_aoa
from .baselines import Axis, ams_estimate, ams_transform, conventional_estimate, conventional_music
from .cacc import (
    InputErrorSplit,
    analytic_xi,
    cacc,
    cutoff_for_paths,
    decompose_cacc,
    highpass_butterworth,
    highpass_mean_subtraction,
    reference_by_power,
    split_input_error,
)
from .mirrored_music import (
    assemble_P,
    assemble_Q,
    estimate_delay_doppler,
    estimate_dopplers_abs,
    estimate_delays_rel,
    resolve_mirror,
)
from .models import (
    DEFAULT_CUTOFF,
    CaccGrid,
    EstimateSet,
    EstimatorSettings,
    ExperimentSpec,
    FilterKind,
    Method,
    MirrorConfig,
    ModelOrderMode,
    ModelValidationError,
    PathParams,
    Resolution,
    RxGrid,
    ScenarioConfig,
    SweepKind,
    TargetEstimate,
    XiGrid,
    los_path,
    nlos_paths,
)
from .scenario import (
    generate_offsets,
    generate_symbols,
    make_rng,
    random_paths,
    simulate,
    synthesize_rx,
)
from .subspace import SubspaceError, estimate_model_order, svd_left

logger = logging.getLogger(__name__)


# --- Pipeline ---

@dataclass(frozen=True, eq=False)
class PipelineResult:
    """Estimates of one method plus the grids they came from."""
    estimates: EstimateSet
    xi: XiGrid
    cacc_grid: CaccGrid


def filter_cacc(
    grid: CaccGrid,
    cfg: ScenarioConfig,
    settings: EstimatorSettings,
    paths: list[PathParams] | None = None,
) -> XiGrid:
    """Apply the configured high-pass stage to a CACC grid.

    Raises:
        ModelValidationError: If the oracle filter is asked for without a
            known scene.
    """
    match settings.filter:
        case FilterKind.BUTTERWORTH:
            cutoff = settings.cutoff
            if cutoff is None:
                cutoff = cutoff_for_paths(cfg, paths) if paths else DEFAULT_CUTOFF
            return highpass_butterworth(grid, cutoff, settings.filter_order)
        case FilterKind.MEAN_SUBTRACTION:
            return highpass_mean_subtraction(grid, settings.mean_window)
        case FilterKind.ORACLE:
            if not paths:
                raise ModelValidationError("the oracle filter needs the scene paths")
            return analytic_xi(cfg, paths, grid.reference)


def mdl_order(xi: XiGrid, mirror: MirrorConfig) -> int:
    """Number of targets by MDL on the mirrored P matrix of xi."""
    p_matrix = assemble_P(xi, mirror)
    return estimate_model_order(svd_left(p_matrix).singular_values, p_matrix.shape[1])


def resolve_reference(rx: RxGrid, settings: EstimatorSettings) -> int:
    """The configured reference antenna, or the strongest one when unset."""
    if settings.reference is None:
        return reference_by_power(rx)
    return settings.reference


def run_pipeline(
    rx: RxGrid,
    cfg: ScenarioConfig,
    los: PathParams,
    settings: EstimatorSettings,
    method: Method,
    num_targets: int,
    paths: list[PathParams] | None = None,
    n0: int | None = None,
) -> PipelineResult:
    """rx -> CACC -> high-pass (or AMS) -> delay/Doppler -> AoA.

    Args:
        rx: Received grid.
        cfg: Scenario of the grid.
        los: The known LOS path (Omega_0 and tau_0).
        settings: Estimator settings.
        method: Delay/Doppler estimator.
        num_targets: L used in oracle model-order mode.
        paths: The true scene, needed only by the oracle filter and the
            automatic cut-off.
        n0: Mirror antenna; None picks it from the CACC grid.
    """
    grid = cacc(rx, resolve_reference(rx, settings))
    mirror = settings.mirror_config()
    if n0 is not None:
        mirror = replace(mirror, n0=n0)

    if method is Method.AMS:
        ams = ams_transform(rx, grid.reference)
        xi = ams.xi
    else:
        xi = filter_cacc(grid, cfg, settings, paths)
    mirror = resolve_mirror(xi, mirror, grid)

    order = num_targets
    if settings.model_order is ModelOrderMode.MDL:
        order = mdl_order(xi, mirror)

    match method:
        case Method.MIRRORED:
            estimates = estimate_delay_doppler(xi, los.spatial_freq, los.delay, cfg, mirror, order)
        case Method.CONVENTIONAL:
            estimates = conventional_estimate(xi, los.spatial_freq, los.delay, cfg, mirror, order)
        case Method.AMS:
            estimates = ams_estimate(ams, los.delay, cfg, mirror, order)

    if settings.aoa and method is not Method.AMS and len(estimates):
        estimates = estimate_aoa(xi, estimates, cfg, settings.aoa_config())
    return PipelineResult(estimates, xi, grid)


# --- Metrics ---

def nmse(errors, normalizer: float) -> float:
    """mean |e|^2 / normalizer^2 (0 for no errors)."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        return 0.0
    return float(np.mean(np.abs(errors) ** 2) / normalizer ** 2)


def wrap_angle(value: float) -> float:
    return (value + math.pi) % (2 * math.pi) - math.pi


def match_estimates(
    truths: list[PathParams],
    estimates: list[TargetEstimate],
    tau_los: float,
    cfg: ScenarioConfig,
) -> list[tuple[int, int]]:
    """Greedy nearest-neighbour matching in normalised (delay, Doppler) space.

    Distances use (delay - tau_0) / T and f_D T_A. The closest remaining
    pair is matched first; ties go to the lower truth then estimate index.

    Returns:
        (truth_index, estimate_index) pairs.
    """
    if not truths or not estimates:
        return []
    truth_points = np.array([
        [(p.delay - tau_los) / cfg.symbol_period, p.doppler * cfg.packet_interval]
        for p in truths
    ])
    estimate_points = np.array([
        [e.delay_rel / cfg.symbol_period, e.doppler * cfg.packet_interval] for e in estimates
    ])
    distance = np.linalg.norm(truth_points[:, None, :] - estimate_points[None, :, :], axis=2)
    pairs = []
    for _ in range(min(len(truths), len(estimates))):
        i, j = np.unravel_index(int(np.argmin(distance)), distance.shape)
        pairs.append((int(i), int(j)))
        distance[i, :] = np.inf
        distance[:, j] = np.inf
    return sorted(pairs)


@dataclass(frozen=True)
class TargetOutcome:
    """One true target and the estimate matched to it (if any)."""
    truth: PathParams
    estimate: TargetEstimate | None
    nmse_delay: float = math.nan
    nmse_doppler: float = math.nan
    aoa_error: float = math.nan

    @property
    def matched(self) -> bool:
        return self.estimate is not None

    def detected(self, threshold: float) -> bool:
        return self.matched and self.nmse_delay < threshold and self.nmse_doppler < threshold


@dataclass
class TrialResult:
    """Outcome of one method on one trial.

    Attributes:
        method: Estimator.
        value: Sweep value of the trial.
        trial: Trial index within its sweep point.
        outcomes: One entry per true target.
        num_estimates: Estimates returned by the method.
        candidate_evaluations: Pseudo-spectrum evaluations of the searches.
        wall_time: Seconds spent in the pipeline.
        xi_mse: Input error of the method's filter output.
        xi_noise_mse: Share of xi_mse caused by the receiver noise.
        xi_interference_mse: Share of xi_mse left by the filter on the
            noiseless grid.
        xi_floor: Analytic NLOS x NLOS residual power of the scene.
        predicted: (var_delay, var_doppler, var_aoa) of the scene.
        flags: Estimate-set flags.
    """
    method: Method
    value: float
    trial: int
    outcomes: list[TargetOutcome] = field(default_factory=list)
    num_estimates: int = 0
    candidate_evaluations: int = 0
    wall_time: float = 0.0
    xi_mse: float = math.nan
    xi_noise_mse: float = math.nan
    xi_interference_mse: float = math.nan
    xi_floor: float = math.nan
    predicted: tuple[float, float, float] = (math.nan, math.nan, math.nan)
    flags: frozenset[str] = frozenset()

    @property
    def unmatched_estimates(self) -> int:
        """Estimates left without a true target."""
        return self.num_estimates - sum(o.matched for o in self.outcomes)


def roc_point(trials: list[TrialResult], threshold: float) -> tuple[float, float]:
    """(Pd, Pfa) over a batch of trials.

    A target is detected when its matched estimate has delay and Doppler
    NMSE below the threshold. Pd = detected / targets; Pfa = (unmatched or
    failing estimates) / estimates.
    """
    targets = sum(len(t.outcomes) for t in trials)
    estimates = sum(t.num_estimates for t in trials)
    detected = sum(o.detected(threshold) for t in trials for o in t.outcomes)
    failing_matched = sum(
        o.matched and not o.detected(threshold) for t in trials for o in t.outcomes
    )
    unmatched = sum(t.unmatched_estimates for t in trials)
    pd = detected / targets if targets else 0.0
    pfa = (unmatched + failing_matched) / estimates if estimates else 0.0
    return pd, pfa


def score_trial(
    method: Method,
    value: float,
    trial: int,
    paths: list[PathParams],
    estimates: EstimateSet,
    cfg: ScenarioConfig,
) -> TrialResult:
    """Match estimates to the scene and fill the per-target errors."""
    truths = nlos_paths(paths)
    tau0 = los_path(paths).delay
    pairs = dict(match_estimates(truths, estimates.targets, tau0, cfg))
    outcomes = []
    for index, truth in enumerate(truths):
        if index not in pairs:
            outcomes.append(TargetOutcome(truth, None))
            continue
        estimate = estimates.targets[pairs[index]]
        aoa_error = math.nan
        if estimate.resolution is Resolution.RESOLVED and estimate.aoa is not None:
            aoa_error = wrap_angle(estimate.aoa - truth.spatial_freq)
        outcomes.append(TargetOutcome(
            truth,
            estimate,
            nmse_delay=nmse([estimate.delay_rel - (truth.delay - tau0)], cfg.symbol_period),
            nmse_doppler=nmse([estimate.doppler - truth.doppler], 1 / cfg.packet_interval),
            aoa_error=aoa_error,
        ))
    return TrialResult(
        method=method,
        value=value,
        trial=trial,
        outcomes=outcomes,
        num_estimates=len(estimates),
        candidate_evaluations=estimates.candidate_evaluations,
        flags=frozenset(estimates.flags),
    )


@dataclass(frozen=True)
class MetricRow:
    """One (sweep value, method) row of an experiment table."""
    sweep: str
    value: float
    method: str
    nmse_delay: float
    nmse_doppler: float
    median_nmse_delay: float
    median_nmse_doppler: float
    rmse_aoa: float
    pd: float
    pfa: float
    targets: int
    estimates: int
    predicted_nmse_delay: float
    predicted_nmse_doppler: float
    predicted_rmse_aoa: float
    xi_mse: float
    xi_noise_mse: float
    xi_interference_mse: float
    xi_floor: float


METRIC_COLUMNS = list(MetricRow.__dataclass_fields__)


def _nanmean(values) -> float:
    values = np.asarray(list(values), dtype=float)
    values = values[~np.isnan(values)]
    return float(np.mean(values)) if values.size else math.nan


def _nanmedian(values) -> float:
    values = np.asarray(list(values), dtype=float)
    values = values[~np.isnan(values)]
    return float(np.median(values)) if values.size else math.nan


def reduce_trials(
    sweep: SweepKind, value: float, method: Method, trials: list[TrialResult],
    threshold: float, cfg: ScenarioConfig,
) -> MetricRow:
    """Aggregate the trials of one (sweep value, method) cell."""
    outcomes = [o for t in trials for o in t.outcomes if o.matched]
    per_trial_delay = [_nanmean(o.nmse_delay for o in t.outcomes if o.matched) for t in trials]
    per_trial_doppler = [_nanmean(o.nmse_doppler for o in t.outcomes if o.matched) for t in trials]
    aoa_errors = [o.aoa_error for o in outcomes if not math.isnan(o.aoa_error)]
    pd, pfa = roc_point(trials, threshold)
    var_delay = _nanmean(t.predicted[0] for t in trials)
    var_doppler = _nanmean(t.predicted[1] for t in trials)
    var_aoa = _nanmean(t.predicted[2] for t in trials)
    return MetricRow(
        sweep=sweep.value,
        value=value,
        method=method.value,
        nmse_delay=_nanmean(o.nmse_delay for o in outcomes),
        nmse_doppler=_nanmean(o.nmse_doppler for o in outcomes),
        median_nmse_delay=_nanmedian(per_trial_delay),
        median_nmse_doppler=_nanmedian(per_trial_doppler),
        rmse_aoa=math.sqrt(np.mean(np.square(aoa_errors))) if aoa_errors else math.nan,
        pd=pd,
        pfa=pfa,
        targets=sum(len(t.outcomes) for t in trials),
        estimates=sum(t.num_estimates for t in trials),
        predicted_nmse_delay=var_delay / cfg.symbol_period ** 2,
        predicted_nmse_doppler=var_doppler * cfg.packet_interval ** 2,
        predicted_rmse_aoa=math.sqrt(var_aoa) if not math.isnan(var_aoa) else math.nan,
        xi_mse=_nanmean(t.xi_mse for t in trials),
        xi_noise_mse=_nanmean(t.xi_noise_mse for t in trials),
        xi_interference_mse=_nanmean(t.xi_interference_mse for t in trials),
        xi_floor=_nanmean(t.xi_floor for t in trials),
    )


# --- Experiments ---

def apply_sweep(
    spec: ExperimentSpec, value: float
) -> tuple[ScenarioConfig, EstimatorSettings, int]:
    """Scenario, estimator settings and L at one sweep value."""
    cfg, settings, num_targets = spec.scenario, spec.estimator, spec.num_targets
    match spec.sweep_kind:
        case SweepKind.SNR_DB:
            los_power = los_path(list(spec.paths)).power if spec.paths else 1.0
            cfg = cfg.with_snr(value, los_power)
        case SweepKind.Q:
            settings = replace(settings, q=int(value))
        case SweepKind.NUM_TARGETS:
            num_targets = int(value)
        case SweepKind.C:
            settings = replace(settings, c=int(value))
    return cfg, settings, num_targets


def trial_seed(master_seed: int, point: int, trial: int) -> np.random.SeedSequence:
    """Seed of one trial, derived from the master seed by counter."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(point, trial))


@dataclass(frozen=True)
class TrialTask:
    spec: ExperimentSpec
    point: int
    value: float
    trial: int
    master_seed: int
    predict: bool = True


def xi_error_split(
    method: Method,
    outcome: PipelineResult,
    clean: RxGrid,
    cfg: ScenarioConfig,
    settings: EstimatorSettings,
    paths: list[PathParams],
) -> InputErrorSplit:
    """Input error of a method's xi, split against its noiseless counterpart.

    ``clean`` is the received grid of the same trial without noise. The AMS
    output carries 2 rho4 and is halved before it is compared with rho4;
    the other methods are compared with the analytic xi.
    """
    reference = outcome.cacc_grid.reference
    if method is Method.AMS:
        oracle = decompose_cacc(cfg, paths, reference=reference).rho4
        noiseless = ams_transform(clean, reference).xi.rho / 2
        return split_input_error(outcome.xi.rho / 2, noiseless, oracle)
    oracle = analytic_xi(cfg, paths, reference)
    noiseless = filter_cacc(cacc(clean, reference), cfg, settings, paths)
    return split_input_error(outcome.xi, noiseless, oracle)


def run_trial(task: TrialTask) -> list[TrialResult]:
    """Draw one scene and noise realisation and run every method on it."""
    spec = task.spec
    cfg, settings, num_targets = apply_sweep(spec, task.value)
    rng = make_rng(trial_seed(task.master_seed, task.point, task.trial))
    if spec.paths:
        paths = list(spec.paths)
    else:
        paths = random_paths(cfg, num_targets, rng, spec.max_delay, spec.max_doppler)
    num_targets = len(nlos_paths(paths))
    offsets = generate_offsets(cfg, rng)
    symbols = generate_symbols(cfg, rng)
    rx = synthesize_rx(cfg, paths, offsets, symbols, rng)
    clean = synthesize_rx(replace(cfg, noise_variance=0.0), paths, offsets, symbols, rng)
    los = los_path(paths)
    reference = resolve_reference(rx, settings)

    predicted = (math.nan, math.nan, math.nan)
    xi_floor = math.nan
    if task.predict and num_targets:
        aoa_cfg = settings.aoa_config() if settings.aoa else None
        try:
            report = predict_report(cfg, paths, settings.mirror_config(), aoa_cfg, reference)
        except SubspaceError as e:
            logger.warning("No prediction for trial %d: %s", task.trial, e)
        else:
            predicted = (report.predicted_var_delay, report.predicted_var_doppler,
                         report.predicted_var_aoa)
            xi_floor = report.delta_xi

    results = []
    for method in spec.methods:
        start = time.perf_counter()
        outcome = run_pipeline(rx, cfg, los, settings, method, num_targets, paths)
        elapsed = time.perf_counter() - start

        split = xi_error_split(method, outcome, clean, cfg, settings, paths)

        result = score_trial(method, task.value, task.trial, paths, outcome.estimates, cfg)
        result.wall_time = elapsed
        result.xi_mse = split.total
        result.xi_noise_mse = split.noise
        result.xi_interference_mse = split.interference
        result.xi_floor = xi_floor
        result.predicted = predicted
        results.append(result)
    return results


def run_experiment(
    spec: ExperimentSpec,
    seed: int | None = None,
    threads: int = 1,
    progress: bool = False,
    predict: bool = True,
) -> list[MetricRow]:
    """Run every trial of every sweep point and reduce to metric rows.

    Trials are independent; with threads > 1 they run in a process pool.
    Results are reduced in (sweep point, method) order, so the rows only
    depend on the experiment and the master seed.

    Args:
        spec: The experiment.
        seed: Master seed (defaults to the scenario seed).
        threads: Worker processes.
        progress: Show a rich progress bar.
        predict: Compute the theoretical prediction columns.
    """
    master_seed = spec.scenario.rng_seed if seed is None else seed
    tasks = [
        TrialTask(spec, point, value, trial, master_seed, predict)
        for point, value in enumerate(spec.sweep_values)
        for trial in range(spec.trials)
    ]
    logger.info(
        "Running %d trials (%d points x %d) with methods %s",
        len(tasks), len(spec.sweep_values), spec.trials, [m.value for m in spec.methods],
    )

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = _collect(pool.map(run_trial, tasks), len(tasks), progress)
    else:
        outcomes = _collect(map(run_trial, tasks), len(tasks), progress)

    cells: dict[tuple[int, Method], list[TrialResult]] = defaultdict(list)
    for task, results in zip(tasks, outcomes):
        for result in results:
            cells[(task.point, result.method)].append(result)

    rows = []
    for point, value in enumerate(spec.sweep_values):
        cfg, _, _ = apply_sweep(spec, value)
        for method in spec.methods:
            rows.append(reduce_trials(
                spec.sweep_kind, value, method, cells[(point, method)], spec.threshold, cfg
            ))
    return rows


def _collect(results, total: int, progress: bool) -> list[list[TrialResult]]:
    if not progress:
        return list(results)
    collected = []
    with Progress(transient=True) as bar:
        task = bar.add_task("Trials", total=total)
        for result in results:
            collected.append(result)
            bar.advance(task)
    return collected


# --- Single scenes ---

@dataclass(frozen=True, eq=False)
class Scene:
    """A scene drawn for the single-shot commands, with the generator to simulate it."""
    cfg: ScenarioConfig
    settings: EstimatorSettings
    paths: list[PathParams]
    rng: np.random.Generator


def draw_scene(spec: ExperimentSpec, seed: int | None = None) -> Scene:
    """The scene of the first trial at the first sweep value.

    Fixed paths are used as given; otherwise a random scene is drawn. The
    same seed always gives the same scene and noise.
    """
    master_seed = spec.scenario.rng_seed if seed is None else seed
    cfg, settings, num_targets = apply_sweep(spec, spec.sweep_values[0])
    rng = make_rng(trial_seed(master_seed, 0, 0))
    paths = list(spec.paths) or random_paths(
        cfg, num_targets, rng, spec.max_delay, spec.max_doppler
    )
    return Scene(cfg, settings, paths, rng)


# --- Complexity bench ---

@dataclass(frozen=True)
class BenchRow:
    """Search cost of one method on one scene."""
    method: str
    candidates: int
    doppler_matrix: str
    delay_matrix: str
    wall_time_s: float


def bench_candidate_counts(
    spec: ExperimentSpec, seed: int | None = None, repeats: int = 3
) -> list[BenchRow]:
    """Candidate counts, matrix sizes and search wall time, mirrored vs conventional.

    Both searches run on the same filtered grid at the same grid step; the
    wall time is the best of ``repeats`` runs of the two axis searches.
    """
    scene = draw_scene(spec, seed)
    cfg, settings, paths = scene.cfg, scene.settings, scene.paths
    num_targets = len(nlos_paths(paths))
    rx, _ = simulate(cfg, paths, scene.rng)
    grid = cacc(rx, resolve_reference(rx, settings))
    xi = filter_cacc(grid, cfg, settings, paths)
    mirror = resolve_mirror(xi, settings.mirror_config(), grid)

    def mirrored_search():
        p_matrix, q_matrix = assemble_P(xi, mirror), assemble_Q(xi, mirror)
        return (
            estimate_dopplers_abs(p_matrix, num_targets, cfg, refine=False),
            estimate_delays_rel(q_matrix, num_targets, cfg, refine=False),
        )

    def conventional_search():
        plain = replace(mirror, refine=False)
        return (
            conventional_music(xi, Axis.DOPPLER, num_targets, plain, cfg).search,
            conventional_music(xi, Axis.DELAY, num_targets, plain, cfg).search,
        )

    rows = []
    for method, search in (
        (Method.MIRRORED, mirrored_search), (Method.CONVENTIONAL, conventional_search)
    ):
        timings = []
        for _ in range(repeats):
            start = time.perf_counter()
            doppler, delay = search()
            timings.append(time.perf_counter() - start)
        rows.append(BenchRow(
            method=method.value,
            candidates=doppler.evaluations + delay.evaluations,
            doppler_matrix="x".join(map(str, doppler.matrix_shape)),
            delay_matrix="x".join(map(str, delay.matrix_shape)),
            wall_time_s=min(timings),
        ))
        logger.info("%s: %d candidates, P %s, Q %s", method.value, rows[-1].candidates,
                    rows[-1].doppler_matrix, rows[-1].delay_matrix)
    return rows


# --- Reference antenna study ---

@dataclass(frozen=True)
class ReferenceRow:
    """Mirrored-MUSIC delay error of one scene mirrored at one antenna."""
    scene: int
    n0: int
    objective: float
    median_nmse_delay: float
    chosen: bool


@dataclass(frozen=True)
class ReferenceStudy:
    """Rows of the study plus the mean per-scene rank correlation."""
    rows: list[ReferenceRow]
    rank_correlation: float


def reference_antenna_study(
    spec: ExperimentSpec,
    num_scenes: int = 50,
    trials: int = 5,
    seed: int | None = None,
) -> ReferenceStudy:
    """Compare the reference-selection objective with the measured delay error.

    Every random scene is estimated with each antenna as n0 over ``trials``
    noise draws. Per scene the Spearman correlation between the objective
    and the median delay NMSE is computed; a positive mean means a lower
    objective goes with a lower error.
    """
    master_seed = spec.scenario.rng_seed if seed is None else seed
    cfg, settings, num_targets = apply_sweep(spec, spec.sweep_values[0])
    reference = settings.reference or 0
    settings = replace(settings, aoa=False, reference=reference)
    antennas = [n for n in range(cfg.num_antennas) if n != reference]

    rows: list[ReferenceRow] = []
    correlations = []
    for scene in range(num_scenes):
        rng = make_rng(trial_seed(master_seed, scene, 0))
        paths = random_paths(cfg, num_targets, rng, spec.max_delay, spec.max_doppler)
        objectives = [reference_objective(paths, n - reference) for n in antennas]
        chosen = best_n0(paths, np.array(antennas), reference)
        errors = {n: [] for n in antennas}
        for trial in range(trials):
            noise_rng = make_rng(trial_seed(master_seed, scene, trial + 1))
            rx, _ = simulate(cfg, paths, noise_rng)
            for n in antennas:
                outcome = run_pipeline(rx, cfg, los_path(paths), settings, Method.MIRRORED,
                                       num_targets, paths, n0=n)
                result = score_trial(Method.MIRRORED, 0.0, trial, paths, outcome.estimates, cfg)
                errors[n].append(_nanmean(o.nmse_delay for o in result.outcomes))
        medians = [_nanmedian(errors[n]) for n in antennas]
        rows.extend(
            ReferenceRow(scene, n, objective, median, n == chosen)
            for n, objective, median in zip(antennas, objectives, medians)
        )
        if len(antennas) > 1 and np.ptp(objectives) > 0 and np.ptp(medians) > 0:
            correlations.append(spearmanr(objectives, medians).statistic)

    correlation = _nanmean(correlations)
    logger.info("Reference study over %d scenes: mean rank correlation %.3f",
                num_scenes, correlation)
    return ReferenceStudy(rows, correlation)
