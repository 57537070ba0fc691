"""Command-line commands of the multislit toolkit."""

from __future__ import annotations

import logging
from dataclasses import replace
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click

from config import Config

from . import storage
from .campaign import (
	CURVE_HEADER,
	EntryError,
	ExperimentConfig,
	aggregate_campaign,
	analyze_raw_directory,
	check_alignment_files,
	curve_rows,
	emit_results,
	read_results,
	run_campaign,
	theory_curves,
	theory_formulas,
)
from .hierarchy import MissingConfigurationError
from .optics import PhaseGrid, detection_fresnel_number, mask_fresnel_numbers
from .storage import FormatError


logger = logging.getLogger(__name__)


def domain_errors(command: Callable[..., Any]) -> Callable[..., Any]:
	"""Turn domain failures into a short message and exit status 1."""

	@wraps(command)
	def wrapped(*args: Any, **kwargs: Any) -> Any:
		try:
			return command(*args, **kwargs)
		except EntryError as exc:
			logger.error("Entry failure: %s", exc)
			click.echo(f"Errore nella misura '{exc.label}' del set {exc.set_index}: {exc.__cause__}", err=True)
		except MissingConfigurationError as exc:
			logger.error("Missing configuration: %s", exc)
			click.echo(f"Configurazione mancante: {exc}", err=True)
		except FormatError as exc:
			logger.error("Malformed file: %s", exc)
			click.echo(f"File non valido: {exc}", err=True)
		except (ValueError, OSError) as exc:
			logger.error("Command failed: %s", exc)
			click.echo(f"Operazione non riuscita: {exc}", err=True)
		raise SystemExit(1)

	return wrapped


def load_experiment(config_path: Optional[str], full_scale: bool = False) -> ExperimentConfig:
	"""Environment defaults, then the experiment file, then command-line overrides."""

	preset = ExperimentConfig.full_scale if full_scale else ExperimentConfig.desk_scale
	base = preset(workers=max(Config.WORKERS, 1), output_dir=Config.OUTPUT_DIR)
	return ExperimentConfig.from_options(Config.experiment_options(config_path), base)


def _overrides(**values: Any) -> Dict[str, Any]:
	return {key: value for key, value in values.items() if value is not None}


@click.command("theory")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Experiment file (KEY=value).")
@click.option("--output", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--points", type=int, default=1001, show_default=True, help="Phase samples over [-3π, 3π].")
@domain_errors
def theory_command(config_path: Optional[str], output: Optional[str], points: int) -> None:
	"""Ideal normalized orders 2..5 for M = 1, 2 and the ideal Sorkin parameters."""

	experiment = load_experiment(config_path)
	grid = PhaseGrid.uniform(count=points)
	_, curves, kappa = theory_curves(experiment.source(), experiment.geometry, grid, experiment.use_envelope)
	target = Path(output or experiment.output_dir) / "theory_curves.csv"
	storage.write_csv(target, CURVE_HEADER, curve_rows("ideal", grid.values.tolist(), curves))

	for formula in theory_formulas():
		click.echo(formula)
	near, far = mask_fresnel_numbers(experiment.geometry)
	click.echo(f"F_21 = {near:.3g} (r) / {far:.3g} (2r), F_1 = {detection_fresnel_number(experiment.geometry):.3g}")
	for order, estimate in sorted(kappa.items()):
		click.echo(f"κ^({order}) ideale = {estimate.value:.6e}")
	click.echo(f"Curve teoriche salvate in {target}")


@click.command("simulate")
@click.option("--regime", type=click.Choice(["photon", "intensity", "both"]), help="Detection regime.")
@click.option("--sets", type=int, help="Number of measurement sets.")
@click.option("--seed", type=int, help="Master seed.")
@click.option("--paper-scale", "--full-scale", "full_scale", is_flag=True, help="Long acquisitions (120 s) and full frame stacks.")
@click.option("--workers", type=int, help="Parallel worker processes.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Experiment file (KEY=value).")
@click.option("--output", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--raw-dir", type=click.Path(file_okay=False), help="Also store raw time tags and frames here.")
@domain_errors
def simulate_command(
	regime: Optional[str],
	sets: Optional[int],
	seed: Optional[int],
	full_scale: bool,
	workers: Optional[int],
	config_path: Optional[str],
	output: Optional[str],
	raw_dir: Optional[str],
) -> None:
	"""Simulate a campaign of randomized measurement sets and write its results."""

	experiment = load_experiment(config_path, full_scale)
	experiment = replace(
		experiment,
		**_overrides(regime=regime, sets=sets, master_seed=seed, workers=workers, output_dir=output),
	)
	summary, results = run_campaign(experiment, raw_dir)
	paths = emit_results(summary, experiment.output_dir, results)
	_echo_summary(summary)
	click.echo(f"Risultati salvati in {paths['summary'].parent}")


@click.command("analyze")
@click.argument("raw_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--regime", type=click.Choice(["photon", "intensity"]), required=True, help="Detection regime of the files.")
@click.option("--window-ps", type=float, help="Coincidence half-window t_f in picoseconds.")
@click.option("--correct-counts", is_flag=True, help="Correct for non-number-resolving detectors.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Experiment file (KEY=value).")
@click.option("--output", type=click.Path(file_okay=False), help="Output directory.")
@domain_errors
def analyze_command(
	raw_dir: str,
	regime: str,
	window_ps: Optional[float],
	correct_counts: bool,
	config_path: Optional[str],
	output: Optional[str],
) -> None:
	"""Analyze stored time-tag or frame files and write campaign results."""

	experiment = load_experiment(config_path)
	results = analyze_raw_directory(
		raw_dir,
		regime,
		window_ps=window_ps if window_ps is not None else experiment.window_ps,
		threshold=experiment.alignment_threshold,
		correct_counts=correct_counts or experiment.correct_counts,
	)
	summary = aggregate_campaign(results, experiment.master_seed)
	paths = emit_results(summary, output or experiment.output_dir, results)
	_echo_summary(summary)
	click.echo(f"Risultati salvati in {paths['summary'].parent}")


@click.command("check-alignment")
@click.argument("first", type=click.Path(exists=True, dir_okay=False))
@click.argument("second", type=click.Path(exists=True, dir_okay=False))
@click.argument("background", type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", type=float, default=1e-2, show_default=True, help="Maximum normalized RMS deviation.")
@click.option("--window-ps", type=float, default=1000.0, show_default=True, help="Coincidence half-window in picoseconds.")
@domain_errors
def check_alignment_command(first: str, second: str, background: str, threshold: float, window_ps: float) -> None:
	"""Compare the two ABCDE acquisitions of a set against each other."""

	result = check_alignment_files(first, second, background, threshold, window_ps)
	click.echo(f"Deviazione RMS normalizzata: {result.deviation:.3e} (soglia {result.threshold:.1e})")
	if not result.passed:
		click.echo("Allineamento non superato: il set va scartato.", err=True)
		raise SystemExit(1)
	click.echo("Allineamento superato.")


@click.command("report")
@click.argument("output_dir", type=click.Path(file_okay=False), required=False)
@domain_errors
def report_command(output_dir: Optional[str]) -> None:
	"""Print the κ statistics of a stored campaign."""

	_echo_summary(read_results(output_dir or Config.OUTPUT_DIR))


def _echo_summary(summary: Any) -> None:
	for name, regime in sorted(summary.regimes.items()):
		click.echo(f"[{name}] set: {regime.n_sets}, allineamento superato: {regime.alignment_passed}")
		for order, stats in sorted(regime.kappa.items()):
			click.echo(
				f"  κ^({order}) = {stats.mean:.3e} ± {stats.standard_error:.2e} "
				f"(dev. std. {stats.std:.2e}, media pesata {stats.weighted_mean:.3e} ± {stats.weighted_error:.2e}, "
				f"media/σ = {stats.zero_consistency:.2f})"
			)


COMMANDS = (theory_command, simulate_command, analyze_command, check_alignment_command, report_command)
