"""Command-line interface for upsense."""

import logging
from pathlib import Path
from typing import Annotated, NoReturn, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from . import __version__
from .cacc import FilterDesignError, cacc, spectrum_2d
from .config_scenario import ConfigParseError, generate_sample_config, parse_config_file
from .grid_io import GridFormatError, dump_grid, load_grid
from .harness import (
    METRIC_COLUMNS,
    MetricRow,
    draw_scene,
    bench_candidate_counts,
    filter_cacc,
    reference_antenna_study,
    run_experiment,
    run_pipeline,
)
from .models import ExperimentSpec, Method, ModelValidationError, los_path, nlos_paths
from .results_writer import (
    ResultWriter,
    StreamTarget,
    estimates_frame,
    records_frame,
    spectrum_frame,
)
from .scenario import simulate as simulate_grid
from .subspace import SubspaceError

app = typer.Typer(
    name="upsense",
    help="Uplink OFDM sensing with asynchronous transceivers: simulate, estimate and run experiments.",
    add_completion=False,
)

console = Console()
err_console = Console(stderr=True)

# Default file names
DEFAULT_CONFIG_FILE = "upsense.cfg"

# Library errors reported as a red message and exit status 1
LIBRARY_ERRORS = (
    ModelValidationError,
    SubspaceError,
    FilterDesignError,
    GridFormatError,
)


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        console.print(f"upsense {__version__}")
        raise typer.Exit()


def setup_logging(verbose: bool, quiet: bool) -> None:
    """Send log records through a single RichHandler on stderr."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


@app.callback()
def main(
    version: Annotated[
        Optional[bool],
        typer.Option(
            "--version",
            "-v",
            help="Show version and exit.",
            callback=version_callback,
            is_eager=True,
        ),
    ] = None,
    verbose: Annotated[
        bool,
        typer.Option("--verbose", help="Log debug details."),
    ] = False,
    quiet: Annotated[
        bool,
        typer.Option("--quiet", "-q", help="Log warnings and errors only."),
    ] = False,
) -> None:
    """upsense - Uplink sensing with asynchronous transceivers."""
    setup_logging(verbose, quiet)


ConfigOption = Annotated[
    Path,
    typer.Option(
        "--config",
        "-c",
        help="Scenario / experiment configuration file.",
    ),
]
SeedOption = Annotated[
    Optional[int],
    typer.Option("--seed", help="Master seed (defaults to the config seed)."),
]
OutOption = Annotated[
    str,
    typer.Option("--out", "-o", help="Output file, or 'stdout'."),
]


@app.command()
def init(
    force: Annotated[
        bool,
        typer.Option(
            "--force",
            "-f",
            help="Overwrite an existing config file.",
        ),
    ] = False,
    path: Annotated[
        Path,
        typer.Option("--path", help="Where to write the sample config."),
    ] = Path(DEFAULT_CONFIG_FILE),
) -> None:
    """Create a sample configuration file."""
    if force and path.exists():
        path.unlink()

    if generate_sample_config(path):
        console.print(f"[green]Created:[/green] {path}")
    else:
        console.print(f"[yellow]Skipped (already exists):[/yellow] {path}")
        console.print("[dim]Use --force to overwrite existing files.[/dim]")


@app.command()
def simulate(
    out: Annotated[
        Path,
        typer.Option("--out", "-o", help="Binary grid file to write."),
    ],
    config: ConfigOption = Path(DEFAULT_CONFIG_FILE),
    seed: SeedOption = None,
) -> None:
    """Synthesize the received grid of a scene and dump it to disk."""
    spec = _load_spec(config)
    try:
        scene = draw_scene(spec, seed)
        rx, _ = simulate_grid(scene.cfg, scene.paths, scene.rng)
        dump_grid(rx, out)
    except LIBRARY_ERRORS as e:
        _fail(e)
    except OSError as e:
        err_console.print(f"[red]Error writing {out}:[/red] {e}")
        raise typer.Exit(1)
    console.print(
        f"[green]Wrote[/green] {out} ({scene.cfg.num_antennas}x{scene.cfg.num_packets}"
        f"x{scene.cfg.num_subcarriers}, {len(nlos_paths(scene.paths))} targets)"
    )


@app.command()
def estimate(
    config: ConfigOption = Path(DEFAULT_CONFIG_FILE),
    grid: Annotated[
        Optional[Path],
        typer.Option(
            "--grid",
            "-g",
            help="Binary grid from 'upsense simulate' (default: simulate the config scene).",
            exists=True,
            readable=True,
        ),
    ] = None,
    method: Annotated[
        str,
        typer.Option("--method", "-m", help="mirrored, conventional or ams."),
    ] = Method.MIRRORED.value,
    seed: SeedOption = None,
    out: OutOption = "stdout",
) -> None:
    """Estimate target delays, Dopplers and AoAs and write them as CSV.

    The LOS path of the config scene (same seed as 'simulate') supplies the
    known LOS delay and spatial frequency.
    """
    spec = _load_spec(config)
    chosen = _parse_method(method)
    try:
        scene = draw_scene(spec, seed)
        rx = load_grid(grid) if grid is not None else simulate_grid(
            scene.cfg, scene.paths, scene.rng
        )[0]
        if rx.y.shape != scene.cfg.shape:
            raise ModelValidationError(
                f"grid shape {rx.y.shape} does not match the config {scene.cfg.shape}"
            )
        result = run_pipeline(
            rx, scene.cfg, los_path(scene.paths), scene.settings, chosen,
            len(nlos_paths(scene.paths)), scene.paths,
        )
    except LIBRARY_ERRORS as e:
        _fail(e)
    if result.estimates.flags:
        err_console.print(f"[yellow]Flags:[/yellow] {', '.join(sorted(result.estimates.flags))}")
    _write(out, "estimates", estimates_frame(result.estimates))


@app.command()
def spectrum(
    config: ConfigOption = Path(DEFAULT_CONFIG_FILE),
    antenna: Annotated[
        int,
        typer.Option("--antenna", "-n", help="Antenna whose CACC slice is transformed."),
    ] = 1,
    filtered: Annotated[
        bool,
        typer.Option("--filtered/--raw", help="Transform the high-pass output or the raw CACC."),
    ] = False,
    seed: SeedOption = None,
    out: OutOption = "stdout",
) -> None:
    """Write the 2D (Doppler, delay) magnitude map of one antenna as CSV."""
    spec = _load_spec(config)
    try:
        scene = draw_scene(spec, seed)
        rx, _ = simulate_grid(scene.cfg, scene.paths, scene.rng)
        reference = "auto" if scene.settings.reference is None else scene.settings.reference
        values = cacc(rx, reference)
        if filtered:
            values = filter_cacc(values, scene.cfg, scene.settings, scene.paths)
        result = spectrum_2d(values, antenna, scene.cfg)
    except LIBRARY_ERRORS as e:
        _fail(e)
    _write(out, "spectrum", spectrum_frame(result))


@app.command()
def experiment(
    config: ConfigOption = Path(DEFAULT_CONFIG_FILE),
    seed: SeedOption = None,
    threads: Annotated[
        int,
        typer.Option("--threads", "-t", min=1, help="Worker processes."),
    ] = 1,
    predict: Annotated[
        bool,
        typer.Option("--predict/--no-predict", help="Fill the theoretical prediction columns."),
    ] = True,
    out: OutOption = "stdout",
) -> None:
    """Run the Monte-Carlo experiment of a config and write one row per point and method."""
    spec = _load_spec(config)
    try:
        rows = run_experiment(spec, seed, threads, progress=True, predict=predict)
    except LIBRARY_ERRORS as e:
        _fail(e)
    _write(out, "experiment", records_frame(rows, METRIC_COLUMNS))
    if out != "stdout":
        _print_summary(spec, rows)


@app.command()
def bench(
    config: ConfigOption = Path(DEFAULT_CONFIG_FILE),
    seed: SeedOption = None,
    repeats: Annotated[
        int,
        typer.Option("--repeats", "-r", min=1, help="Timed runs per method (best is kept)."),
    ] = 3,
    out: OutOption = "stdout",
) -> None:
    """Compare candidate counts, matrix sizes and search time of the two MUSIC variants."""
    spec = _load_spec(config)
    try:
        rows = bench_candidate_counts(spec, seed, repeats)
    except LIBRARY_ERRORS as e:
        _fail(e)
    _write(out, "bench", records_frame(rows))


@app.command("reference-study")
def reference_study(
    config: ConfigOption = Path(DEFAULT_CONFIG_FILE),
    scenes: Annotated[
        int,
        typer.Option("--scenes", min=1, help="Random scenes."),
    ] = 50,
    trials: Annotated[
        int,
        typer.Option("--trials", min=1, help="Noise draws per scene and antenna."),
    ] = 5,
    seed: SeedOption = None,
    out: OutOption = "stdout",
) -> None:
    """Measure the delay error of every mirror antenna against its selection objective."""
    spec = _load_spec(config)
    try:
        study = reference_antenna_study(spec, scenes, trials, seed)
    except LIBRARY_ERRORS as e:
        _fail(e)
    _write(out, "reference", records_frame(study.rows))
    err_console.print(f"Mean rank correlation: {study.rank_correlation:.3f}")


def _load_spec(path: Path) -> ExperimentSpec:
    """Load a config file, failing with a red message."""
    if not path.exists():
        err_console.print(
            f"[red]Error:[/red] {path} not found. Run 'upsense init' to create one."
        )
        raise typer.Exit(1)

    try:
        return parse_config_file(path)
    except ConfigParseError as e:
        err_console.print(f"[red]Error parsing {path}:[/red] {e}")
        raise typer.Exit(1)


def _parse_method(value: str) -> Method:
    try:
        return Method.from_str(value)
    except ValueError as e:
        err_console.print(f"[red]Error:[/red] {e}")
        raise typer.Exit(1)


def _fail(error: Exception) -> NoReturn:
    err_console.print(f"[red]Error:[/red] {error}")
    raise typer.Exit(1)


def _write(out: str, kind: str, frame) -> None:
    target = StreamTarget(out)
    try:
        with ResultWriter(target) as writer:
            writer.write_table(kind, frame)
    except OSError as e:
        err_console.print(f"[red]Error writing {out}:[/red] {e}")
        raise typer.Exit(1)
    if target.is_file():
        console.print(f"[green]Wrote[/green] {kind} table to {out}")


def _print_summary(spec: ExperimentSpec, rows: list[MetricRow]) -> None:
    table = Table(title=f"{spec.sweep_kind.value} sweep, {spec.trials} trials")
    for column in ("value", "method", "nmse_delay", "nmse_doppler", "rmse_aoa", "pd", "pfa"):
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(
            f"{row.value:g}", row.method, f"{row.nmse_delay:.3g}", f"{row.nmse_doppler:.3g}",
            f"{row.rmse_aoa:.3g}", f"{row.pd:.3f}", f"{row.pfa:.3f}",
        )
    console.print(table)
