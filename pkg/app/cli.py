"""
app/cli.py
Command-line entry point: simulate, detect, locate, fit, evaluate, serve

Every subcommand accepts --config FILE with `key = value` lines naming RunConfig fields;
flags given on the command line override values from the file.
"""

import functools
import logging
import sys
from typing import Any, Callable, Dict, Optional

import click
from dotenv import dotenv_values
from pydantic import ValidationError

from app.api.models.common import AlarmIndicator, BinningKind, TestFunctionKind
from app.api.models.scenario import RunConfig
from app.api.services import dataset_io
from app.api.services.detection import DetectionService, evaluate_tdr_far
from app.api.services.factor_model import FactorModelService, fit_report
from app.api.services.synth import PRESETS, generate, ground_truth, scenario_from_config
from app.api.services.window import form_window, standardize_rows
from app.core.config import configure_logging
from app.core.errors import AnalysisError, ConfigError, DataIOError

logger = logging.getLogger(__name__)


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as stream:
            values = dotenv_values(stream=stream)
    except OSError as exc:
        raise DataIOError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    return {key.strip().lower().replace("-", "_"): value for key, value in values.items() if value is not None}


def build_run_config(config_path: Optional[str], flags: Dict[str, Any]) -> RunConfig:
    """File values first, then every flag that was actually given."""
    merged = load_config_file(config_path)
    merged.update({key: value for key, value in flags.items() if value is not None})
    try:
        return RunConfig(**merged)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def handle_errors(command: Callable) -> Callable:
    """Map AnalysisError subclasses onto their exit codes."""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except AnalysisError as exc:
            click.secho(f"Error: {type(exc).__name__}: {exc}", fg="red", bold=True, err=True)
            sys.exit(exc.exit_code)
    return wrapper


def _options(*decorators):
    def apply(command):
        for decorator in reversed(decorators):
            command = decorator(command)
        return command
    return apply


config_option = click.option(
    "-c", "--config", "config_path", type=click.Path(dir_okay=False), default=None,
    help="Key-value file supplying any flag.",
)

detection_options = _options(
    click.option("-i", "--input", type=click.Path(dir_okay=False), help="Dataset CSV."),
    click.option("-w", "--window-width", type=int, help="Window width T."),
    click.option("--history-length", type=int, help="Confidence history T'."),
    click.option("-t", "--threshold", type=float, help="Alarm confidence threshold."),
    click.option("--test-function", type=click.Choice([k.value for k in TestFunctionKind]), help="Test function phi."),
    click.option("--indicator", type=click.Choice([k.value for k in AlarmIndicator]), help="Indicator driving alarms."),
    click.option("--top-k", type=int, help="Located channels listed per indicator row."),
    click.option("-j", "--n-jobs", type=int, help="Worker processes (-1 for all cores)."),
    click.option("--upward-only/--two-sided", default=None, help="Only rising indicators raise confidence."),
    click.option(
        "--adjust-autocorrelation/--no-adjust-autocorrelation", default=None,
        help="Shrink t degrees of freedom by the lag-1 autocorrelation of the history.",
    ),
    click.option("--min-duration", type=int, help="Alarming windows an event needs."),
    click.option("--merge-gap", type=int, help="Quiet windows bridged inside one event."),
)

grid_options = _options(
    click.option("--p-min", type=int, help="Smallest factor count searched."),
    click.option("--p-max", type=int, help="Largest factor count searched."),
    click.option("--b-step", type=float, help="Step of the autoregressive-rate grid."),
    click.option("--b-max", type=float, help="Largest autoregressive rate searched."),
    click.option("--include-p0/--no-include-p0", default=None, help="Also try p = 0."),
    click.option("--bins", type=str, help="Histogram bins, an integer or 'auto'."),
    click.option("--binning", type=click.Choice([k.value for k in BinningKind]), help="Linear mass splitting or hard counts."),
    click.option("--extrapolate/--no-extrapolate", default=None, help="Cancel the first-order smoothing error."),
    click.option("--epsilon", type=float, help="Imaginary offset of the Green's function."),
    click.option("--grid-points", type=int, help="Points of the model density grid."),
)


@click.group()
@click.option("--log-level", default=None, help="Logging level (default from LOG_LEVEL).")
def cli(log_level):
    """Spatio-temporal correlation analysis of multichannel time series."""
    configure_logging(log_level)


@cli.command()
@config_option
@click.option("-s", "--scenario", type=click.Choice(sorted(PRESETS)), help="Preset scenario.")
@click.option("--n-channels", type=int, help="Channels N.")
@click.option("--n-samples", type=int, help="Samples T_total.")
@click.option("-a", "--anomalies", type=str, help="kind@ch[,ch]:onset[-end]:magnitude[:initial], ';'-separated.")
@click.option("--snr", type=float, help="Signal-to-noise ratio ('inf' for no noise).")
@click.option("--noise-b", type=float, help="AR(1) rate of the noise.")
@click.option("--seed", type=int, help="Random seed.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Dataset CSV to write.")
@click.option("--truth", type=click.Path(dir_okay=False), help="Ground-truth JSON lines to write.")
@handle_errors
def simulate(config_path, **flags):
    """Generate a synthetic dataset with planted anomalies."""
    cfg = build_run_config(config_path, flags)
    if not cfg.output:
        raise ConfigError("an output path is required")
    spec = scenario_from_config(cfg)
    data = generate(spec)
    dataset_io.write_dataset(data, cfg.output)
    if cfg.truth:
        dataset_io.write_truth(ground_truth(spec), cfg.truth)
    click.secho(f"Wrote {data.n_channels} x {data.n_samples} dataset to {cfg.output}", fg="green")


def _run_detection(config_path, flags):
    cfg = build_run_config(config_path, flags)
    if not cfg.input:
        raise ConfigError("an input dataset is required")
    data = dataset_io.read_dataset(cfg.input)
    run = DetectionService().run_detection(data, cfg.detection_config())
    return cfg, run


@cli.command()
@config_option
@detection_options
@grid_options
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Indicator CSV to write.")
@click.option("--alarms", type=click.Path(dir_okay=False), help="Alarm JSON lines to write.")
@handle_errors
def detect(config_path, **flags):
    """Sliding-window detection: indicator curves and merged alarms."""
    cfg, run = _run_detection(config_path, flags)
    if cfg.output:
        dataset_io.write_indicators(run.series, cfg.output, cfg.top_k)
    if cfg.alarms:
        dataset_io.write_alarms(run.alarms, cfg.alarms)
    click.echo(f"Windows evaluated: {len(run.series)} ({len(run.failures)} failed)")
    for alarm in run.alarms:
        top = alarm.top_channel.channel if alarm.top_channel else "-"
        click.echo(f"  alarm {alarm.index}-{alarm.end_index} confidence={alarm.confidence:.4f} top={top}")
    click.secho(f"{len(run.alarms)} alarm events", fg="yellow" if run.alarms else "green", bold=True)


@cli.command()
@config_option
@detection_options
@grid_options
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Location indicator CSV to write.")
@click.option("--alarms", type=click.Path(dir_okay=False), help="Alarm JSON lines to write.")
@handle_errors
def locate(config_path, **flags):
    """Detection restricted to the location indicator curves."""
    cfg, run = _run_detection(config_path, flags)
    if cfg.output:
        dataset_io.write_eta(run.series, cfg.output)
    if cfg.alarms:
        dataset_io.write_alarms(run.alarms, cfg.alarms)
    for alarm in run.alarms:
        located = ", ".join(f"{c.channel} ({c.confidence:.3f})" for c in alarm.located_channels) or "-"
        click.echo(f"  alarm {alarm.index}: {located}")


@cli.command()
@config_option
@click.option("-i", "--input", type=click.Path(dir_okay=False), help="Dataset CSV.")
@click.option("-e", "--end-index", type=int, help="Last sample of the window (default: last sample).")
@click.option("-w", "--window-width", type=int, help="Window width T.")
@grid_options
@click.option("--surface/--no-surface", default=None, help="Include the distance surface.")
@click.option("--densities/--no-densities", default=None, help="Include binned residual and model densities.")
@click.option("-r", "--report", type=click.Path(dir_okay=False), help="Fit report JSON (default: stdout).")
@handle_errors
def fit(config_path, **flags):
    """Estimate (p, b) for a single window."""
    cfg = build_run_config(config_path, flags)
    if not cfg.input:
        raise ConfigError("an input dataset is required")
    data = dataset_io.read_dataset(cfg.input)
    end_index = data.n_samples - 1 if cfg.end_index is None else cfg.end_index
    window = standardize_rows(form_window(data, end_index, cfg.window_width))
    result = FactorModelService(cfg.density_config()).fit(window, cfg.fit_grid(), keep_densities=cfg.densities)
    report = fit_report(result, window, include_surface=cfg.surface)
    if cfg.report:
        dataset_io.write_report(report, cfg.report)
        click.secho(f"p_hat={report.p_hat} b_hat={report.b_hat:.2f} D={report.min_distance:.4f}", fg="green")
    else:
        click.echo(report.model_dump_json(indent=2))


@cli.command()
@config_option
@click.option("--alarms", type=click.Path(dir_okay=False), help="Alarm JSON lines.")
@click.option("--truth", type=click.Path(dir_okay=False), help="Ground-truth JSON lines.")
@click.option("--tolerance", type=int, help="Matching tolerance in samples.")
@click.option("-r", "--report", type=click.Path(dir_okay=False), help="Evaluation JSON (default: stdout).")
@handle_errors
def evaluate(config_path, **flags):
    """True detecting rate and false alarming rate of alarms against ground truth."""
    cfg = build_run_config(config_path, flags)
    if not cfg.alarms or not cfg.truth:
        raise ConfigError("both --alarms and --truth are required")
    report = evaluate_tdr_far(dataset_io.read_alarms(cfg.alarms), dataset_io.read_truth(cfg.truth), cfg.tolerance)
    if cfg.report:
        dataset_io.write_report(report, cfg.report)
    tdr = "n/a" if report.tdr is None else f"{report.tdr:.4f}"
    click.echo(f"TDR={tdr} FAR={report.far:.4f} ({report.n_correct}/{report.n_truth} events, {report.n_alarms} alarms)")
    if not cfg.report:
        click.echo(report.model_dump_json(indent=2))


@cli.command()
@click.option("--host", default="0.0.0.0", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
def serve(host, port):
    """Run the HTTP API."""
    import uvicorn

    uvicorn.run("app.main:app", host=host, port=port)


if __name__ == "__main__":
    cli()
