"""Randomized measurement sets, campaigns over both detection regimes, and result emission."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .analysis import (
	BACKGROUND,
	ORDER_SIZES,
	CcdCorrelation,
	CorrelationAccumulator,
	CountRecord,
	DataHierarchy,
	count_record,
	hierarchy_from_data,
)
from .ccd_sim import CcdModel, CropWindow, FrameStack, calibrate_exposure, default_window, expected_image, iter_frame_chunks, pixel_phases, sample_stack
from .hierarchy import SorkinEstimate, formulas, sorkin_parameter, standard_orders, theory_table
from .optics import MASK_SLITS, MaskGeometry, PhaseGrid, SlitConfiguration, SourceState, all_configurations, illumination_weights
from .spad_sim import PS_PER_S, RunPlan, SpadModel, TimeTagStream, derive_seed, make_rng, simulate_config_run
from . import storage


logger = logging.getLogger(__name__)

REGIMES: Tuple[str, ...] = ("photon", "intensity")
SET_SIZE: int = 33
FIRST_FULL: str = "ABCDE(1)"
SECOND_FULL: str = "ABCDE(2)"

# stream tags of the derived seeds
_SEQUENCE, _CONDITIONS, _PHOTON, _INTENSITY = range(4)


class EntryError(RuntimeError):
	"""A measurement-set entry failed; carries the entry label and set index."""

	def __init__(self, label: str, set_index: int, regime: str, cause: BaseException) -> None:
		self.label = label
		self.set_index = set_index
		self.regime = regime
		super().__init__(f"Set {set_index} ({regime}), entry '{label}': {cause}")


def set_template(n_slits: int = MASK_SLITS) -> List[str]:
	"""ABCDE(1), the other 30 hierarchy configurations, ABCDE(2) and the background."""

	full = SlitConfiguration.prefix(n_slits).label
	others = [c.label for c in all_configurations(n_slits) if c.label != full]
	return [f"{full}(1)"] + others + [f"{full}(2)", BACKGROUND.label]


def entry_configuration(label: str) -> SlitConfiguration:
	return SlitConfiguration.from_label(label.split("(")[0])


def hierarchy_label(label: str) -> Optional[str]:
	"""Label under which an entry enters the hierarchy; None for the duplicate."""

	if label.endswith("(2)"):
		return None
	return label.split("(")[0]


@dataclass(frozen=True)
class ExperimentConfig:
	"""Everything a campaign needs: setup, detectors, statistics, imperfections, seeds."""

	geometry: MaskGeometry = field(default_factory=MaskGeometry)
	beam_radius: float = 0.02
	beam_offset: float = 0.0
	mean_photon_number: float = 1.0
	use_envelope: bool = True
	spads: Tuple[SpadModel, SpadModel] = field(default_factory=lambda: (SpadModel(), SpadModel()))
	ccd: CcdModel = field(default_factory=CcdModel)
	regime: str = "both"
	duration_s: float = 1.0
	window_ps: float = 1000.0
	base_rate_hz: float = 5e5
	detection_phase: float = 0.0
	n_frames: int = 25
	ccd_rows: int = 100
	headroom: float = 0.9
	sets: int = 100
	drift_sigma: float = 1e-4
	misalignment_sigma: float = 4e-3
	alignment_threshold: float = 1e-2
	correct_counts: bool = False
	master_seed: int = 0
	workers: int = 1
	output_dir: str = "results"

	def __post_init__(self) -> None:
		if self.regime not in ("photon", "intensity", "both"):
			raise ValueError(f"Unknown regime '{self.regime}'")
		if self.sets < 1:
			raise ValueError("A campaign needs at least one measurement set")
		if min(self.drift_sigma, self.misalignment_sigma) < 0:
			raise ValueError("Imperfection widths must be non-negative")
		if not self.duration_s > 0 or not self.base_rate_hz > 0 or self.window_ps < 0:
			raise ValueError("Duration and base rate must be positive, the window non-negative")
		if self.n_frames < 1 or self.ccd_rows < 2:
			raise ValueError("At least one frame and two rows are required")
		if self.workers < 1:
			raise ValueError("At least one worker is required")

	@classmethod
	def desk_scale(cls, **overrides: Any) -> "ExperimentConfig":
		return cls(**overrides)

	@classmethod
	def full_scale(cls, **overrides: Any) -> "ExperimentConfig":
		settings: Dict[str, Any] = {"duration_s": 120.0, "base_rate_hz": 2.5e5, "n_frames": 250, "ccd_rows": 850}
		settings.update(overrides)
		return cls(**settings)

	@property
	def regimes(self) -> Tuple[str, ...]:
		return REGIMES if self.regime == "both" else (self.regime,)

	def source(self) -> SourceState:
		weights = illumination_weights(self.beam_radius, self.beam_offset, self.geometry)
		return SourceState.coherent(self.mean_photon_number, weights=weights)

	def window(self) -> CropWindow:
		return default_window(self.geometry, self.ccd, rows=self.ccd_rows)

	@classmethod
	def from_options(cls, options: Mapping[str, Optional[str]], base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
		"""Build a configuration from KEY=value options (SI units) on top of ``base``."""

		config = base or cls()
		top: Dict[str, Any] = {}
		geometry: Dict[str, Any] = {}
		spad: Dict[str, Any] = {}
		ccd: Dict[str, Any] = {}
		for raw_key, raw_value in options.items():
			key = raw_key.strip().upper()
			if key not in OPTION_KEYS:
				logger.warning("Ignoring unknown configuration key '%s'", raw_key)
				continue
			if raw_value is None or raw_value.strip() == "":
				continue
			section, name, kind = OPTION_KEYS[key]
			try:
				value = _coerce(raw_value, kind)
			except ValueError:
				raise ValueError(f"Invalid value for '{key}': {raw_value!r}") from None
			{"top": top, "geometry": geometry, "spad": spad, "ccd": ccd}[section][name] = value
		if geometry:
			top["geometry"] = replace(config.geometry, **geometry)
		if spad:
			top["spads"] = tuple(replace(model, **spad) for model in config.spads)
		if ccd:
			top["ccd"] = replace(config.ccd, **ccd)
		return replace(config, **top)


def _coerce(text: str, kind: type) -> Any:
	value = text.strip()
	if kind is bool:
		lowered = value.lower()
		if lowered in {"1", "true", "yes", "on"}:
			return True
		if lowered in {"0", "false", "no", "off"}:
			return False
		raise ValueError(value)
	if kind is int:
		return int(float(value)) if "e" in value.lower() else int(value)
	return kind(value)


OPTION_KEYS: Dict[str, Tuple[str, str, type]] = {
	"WAVELENGTH": ("geometry", "wavelength", float),
	"SLIT_PITCH": ("geometry", "slit_pitch", float),
	"SLIT_WIDTH": ("geometry", "slit_width", float),
	"SLIT_HEIGHT": ("geometry", "slit_height", float),
	"HOLE_RADIUS": ("geometry", "hole_radius", float),
	"CONFIG_SPACING": ("geometry", "config_spacing", float),
	"MASK_SEPARATION": ("geometry", "mask_separation", float),
	"DETECTOR_DISTANCE": ("geometry", "detector_distance", float),
	"BEAM_RADIUS": ("top", "beam_radius", float),
	"BEAM_OFFSET": ("top", "beam_offset", float),
	"MEAN_PHOTON_NUMBER": ("top", "mean_photon_number", float),
	"USE_ENVELOPE": ("top", "use_envelope", bool),
	"REGIME": ("top", "regime", str),
	"SETS": ("top", "sets", int),
	"MASTER_SEED": ("top", "master_seed", int),
	"DURATION": ("top", "duration_s", float),
	"COINCIDENCE_WINDOW": ("top", "window_ps", float),
	"BASE_RATE": ("top", "base_rate_hz", float),
	"DETECTION_PHASE": ("top", "detection_phase", float),
	"SPAD_EFFICIENCY": ("spad", "efficiency", float),
	"SPAD_DEAD_TIME": ("spad", "dead_time_ps", float),
	"SPAD_DARK_RATE": ("spad", "dark_rate_hz", float),
	"SPAD_JITTER": ("spad", "jitter_ps", float),
	"CCD_FRAMES": ("top", "n_frames", int),
	"CCD_ROWS": ("top", "ccd_rows", int),
	"CCD_QE": ("ccd", "quantum_efficiency", float),
	"CCD_READ_NOISE": ("ccd", "read_noise", float),
	"CCD_GAIN": ("ccd", "gain", float),
	"CCD_DARK_OFFSET": ("ccd", "dark_offset", float),
	"CCD_INTEGRATION_TIME": ("ccd", "integration_time", float),
	"CCD_HEADROOM": ("top", "headroom", float),
	"DRIFT_SIGMA": ("top", "drift_sigma", float),
	"MISALIGNMENT_SIGMA": ("top", "misalignment_sigma", float),
	"ALIGNMENT_THRESHOLD": ("top", "alignment_threshold", float),
	"CORRECT_COUNTS": ("top", "correct_counts", bool),
	"WORKERS": ("top", "workers", int),
	"OUTPUT_DIR": ("top", "output_dir", str),
}


@dataclass(frozen=True)
class MeasurementSet:
	"""One randomized pass over the 33 entries."""

	set_index: int
	sequence: Tuple[str, ...]
	seed: int

	def __post_init__(self) -> None:
		if len(self.sequence) != SET_SIZE:
			raise ValueError(f"A measurement set has {SET_SIZE} entries, got {len(self.sequence)}")


@dataclass(frozen=True)
class AlignmentResult:
	deviation: float
	passed: bool
	threshold: float


@dataclass
class SetResult:
	"""Analyzed measurement set of one regime."""

	set_index: int
	regime: str
	sequence: Tuple[str, ...]
	hierarchy: DataHierarchy
	alignment: AlignmentResult
	records: Dict[str, Union[CountRecord, CcdCorrelation]] = field(default_factory=dict, repr=False)


def randomize_sequence(template: Sequence[str], seed: Union[int, Sequence[int]]) -> List[str]:
	"""Uniform random permutation of the set template, fixed by ``seed``."""

	if len(template) != SET_SIZE:
		raise ValueError(f"The set template must have {SET_SIZE} entries, got {len(template)}")
	order = make_rng(seed).permutation(len(template))
	return [template[i] for i in order]


def alignment_check(first: np.ndarray, second: np.ndarray, threshold: float = 1e-2) -> AlignmentResult:
	"""Normalized RMS difference of the two background-subtracted ABCDE patterns."""

	a = np.asarray(first, dtype=float)
	b = np.asarray(second, dtype=float)
	if a.shape != b.shape:
		raise ValueError(f"Alignment patterns are sampled on different grids ({a.shape} vs {b.shape})")
	norm = float(np.sqrt(np.mean(a ** 2)))
	if norm == 0.0:
		raise ValueError("The reference pattern is identically zero")
	deviation = float(np.sqrt(np.mean((b - a) ** 2))) / norm
	return AlignmentResult(deviation=deviation, passed=deviation < threshold, threshold=threshold)


def _visit_conditions(config: ExperimentConfig, set_index: int, entry_index: int, source: SourceState) -> Tuple[float, SourceState]:
	"""Drift factor (1 + ξ) and misaligned source for one configuration visit."""

	rng = make_rng((config.master_seed, set_index, entry_index, _CONDITIONS))
	drift = 1.0 + rng.normal(0.0, config.drift_sigma)
	epsilon = rng.normal(0.0, config.misalignment_sigma, source.n_slits)
	attenuation = np.clip(1.0 - np.abs(epsilon), 0.0, 1.0)
	return float(drift), source.with_attenuation(attenuation)


def _raw_path(raw_dir: Path, set_index: int, label: str, suffix: str) -> Path:
	return raw_dir / f"set{set_index:03d}_{label}{suffix}"


def _photon_entry(
	config: ExperimentConfig,
	set_index: int,
	entry_index: int,
	label: str,
	source: SourceState,
	raw_dir: Optional[Path],
) -> CountRecord:
	drift, visited = _visit_conditions(config, set_index, entry_index, source)
	configuration = entry_configuration(label)
	plan = RunPlan(
		configuration=configuration,
		phase=config.detection_phase,
		duration_s=config.duration_s,
		base_rate_hz=config.base_rate_hz,
		seed=derive_seed(config.master_seed, set_index, entry_index, _PHOTON),
	)
	first, second = simulate_config_run(plan, visited, config.geometry, config.spads, drift, config.use_envelope, reference=source)
	if raw_dir is not None:
		stream = TimeTagStream.merge({1: first, 2: second}, plan.duration_ps)
		storage.write_time_tags(_raw_path(raw_dir, set_index, label, ".ttag"), stream)
	return count_record(configuration, first, second, config.window_ps, config.duration_s)


def _frame_metadata(config: ExperimentConfig, window: CropWindow) -> Dict[str, Any]:
	phases = pixel_phases(config.geometry, config.ccd, window)
	step = float(phases[1] - phases[0]) if phases.size > 1 else 0.0
	return {
		"phase_step": step,
		"center_offset": config.ccd.center_column - window.col_start,
		"wavelength": config.geometry.wavelength,
		"slit_pitch": config.geometry.slit_pitch,
		"slit_width": config.geometry.slit_width,
		"detector_distance": config.geometry.detector_distance,
		"pixel_size": config.ccd.pixel_size,
		"quantum_efficiency": config.ccd.quantum_efficiency,
		"read_noise": config.ccd.read_noise,
		"gain": config.ccd.gain,
		"dark_offset": config.ccd.dark_offset,
		"bit_depth": config.ccd.bit_depth,
	}


def _intensity_entry(
	config: ExperimentConfig,
	set_index: int,
	entry_index: int,
	label: str,
	source: SourceState,
	exposure: float,
	window: CropWindow,
	phases: np.ndarray,
	background: Optional[np.ndarray],
	raw_dir: Optional[Path],
) -> CcdCorrelation:
	drift, visited = _visit_conditions(config, set_index, entry_index, source)
	configuration = entry_configuration(label)
	expected = expected_image(configuration, visited, config.geometry, config.ccd, exposure * drift, window, config.use_envelope)
	seed = derive_seed(config.master_seed, set_index, entry_index, _INTENSITY)
	accumulator = CorrelationAccumulator(window.cols, background)
	if raw_dir is not None:
		stack = sample_stack(expected, config.ccd, config.n_frames, seed, label=label, window=window)
		storage.write_frames(_raw_path(raw_dir, set_index, label, ".fram"), stack, _frame_metadata(config, window))
		accumulator.add(stack.frames)
	else:
		for chunk in iter_frame_chunks(expected, config.ccd, config.n_frames, seed):
			accumulator.add(chunk)
	return accumulator.result(phases)


def _alignment_pattern(regime: str, records: Mapping[str, Union[CountRecord, CcdCorrelation]], label: str) -> np.ndarray:
	record = records[label]
	background = records[BACKGROUND.label]
	if regime == "photon":
		return np.array([record.singles / record.duration_s - background.singles / background.duration_s])
	return record.g1 - background.g1


def analyze_set(
	records: Mapping[str, Union[CountRecord, CcdCorrelation]],
	regime: str,
	set_index: int,
	sequence: Sequence[str],
	threshold: float = 1e-2,
	correct_counts: bool = False,
) -> SetResult:
	"""Hierarchy and alignment verdict of one complete set of entry records."""

	data = {hierarchy_label(label): record for label, record in records.items() if hierarchy_label(label) is not None}
	hierarchy = hierarchy_from_data(data, regime, correct_counts=correct_counts, set_index=set_index)
	alignment = alignment_check(
		_alignment_pattern(regime, records, FIRST_FULL),
		_alignment_pattern(regime, records, SECOND_FULL),
		threshold,
	)
	if not alignment.passed:
		logger.warning("Set %d (%s): alignment check failed, deviation %.3e", set_index, regime, alignment.deviation)
	return SetResult(set_index, regime, tuple(sequence), hierarchy, alignment, dict(records))


def measurement_set(config: ExperimentConfig, set_index: int) -> MeasurementSet:
	seed = derive_seed(config.master_seed, set_index, _SEQUENCE)
	return MeasurementSet(set_index, tuple(randomize_sequence(set_template(), seed)), seed)


def run_measurement_set(
	config: ExperimentConfig,
	set_index: int,
	regime: str,
	raw_dir: Optional[Union[str, Path]] = None,
) -> SetResult:
	"""Simulate the 33 entries in randomized order, then analyze the set."""

	if regime not in REGIMES:
		raise ValueError(f"Unknown regime '{regime}'")
	plan = measurement_set(config, set_index)
	template = set_template()
	index_of = {label: i for i, label in enumerate(template)}
	source = config.source()
	raw_path = Path(raw_dir) if raw_dir is not None else None
	records: Dict[str, Union[CountRecord, CcdCorrelation]] = {}

	def run_entry(label: str, **extra: Any) -> Union[CountRecord, CcdCorrelation]:
		try:
			if regime == "photon":
				return _photon_entry(config, set_index, index_of[label], label, source, raw_path)
			return _intensity_entry(config, set_index, index_of[label], label, source, raw_dir=raw_path, **extra)
		except Exception as exc:
			raise EntryError(label, set_index, regime, exc) from exc

	if regime == "photon":
		for label in plan.sequence:
			records[label] = run_entry(label)
	else:
		window = config.window()
		phases = pixel_phases(config.geometry, config.ccd, window)
		exposure = calibrate_exposure(source, config.geometry, config.ccd, config.headroom, config.use_envelope)
		# background profile first; every entry has its own seed
		dark = run_entry(BACKGROUND.label, exposure=exposure, window=window, phases=phases, background=None)
		profile = dark.g1
		for label in plan.sequence:
			records[label] = run_entry(label, exposure=exposure, window=window, phases=phases, background=profile)

	try:
		result = analyze_set(records, regime, set_index, plan.sequence, config.alignment_threshold, config.correct_counts)
	except Exception as exc:
		raise EntryError("analysis", set_index, regime, exc) from exc
	logger.info(
		"Set %d (%s) done: %s",
		set_index, regime,
		", ".join(f"κ({m}) = {e.value:.3e} ± {e.uncertainty:.1e}" for m, e in sorted(result.hierarchy.sorkin.items())),
	)
	return result


def _run_set_task(args: Tuple[ExperimentConfig, int, str, Optional[str]]) -> SetResult:
	config, set_index, regime, raw_dir = args
	result = run_measurement_set(config, set_index, regime, raw_dir)
	result.hierarchy.tables = {}
	if regime == "intensity":
		result.records = {}
	return result


def run_sets(config: ExperimentConfig, raw_dir: Optional[Union[str, Path]] = None) -> List[SetResult]:
	"""All sets of every configured regime, ordered by regime and set index."""

	raw = str(raw_dir) if raw_dir is not None else None
	tasks = [(config, index, regime, raw) for regime in config.regimes for index in range(config.sets)]
	logger.info("Running %d measurement sets with %d worker(s)", len(tasks), config.workers)
	if config.workers == 1:
		return [_run_set_task(task) for task in tasks]
	with ProcessPoolExecutor(max_workers=config.workers) as executor:
		return list(executor.map(_run_set_task, tasks))


# -- aggregation -----------------------------------------------------------------

@dataclass
class KappaStats:
	"""Campaign statistics of κ^(M) in one regime."""

	order: int
	values: List[float]
	sigmas: List[float]
	set_indices: List[int]
	mean: float
	std: float
	standard_error: float
	weighted_mean: float
	weighted_error: float
	zero_consistency: float


@dataclass
class RegimeSummary:
	regime: str
	n_sets: int
	kappa: Dict[int, KappaStats]
	central: Dict[str, Dict[str, Any]]
	curves: Dict[str, List[float]]
	phases: List[float]
	alignment_passed: int


@dataclass
class CampaignSummary:
	master_seed: int
	regimes: Dict[str, RegimeSummary]

	def to_dict(self) -> Dict[str, Any]:
		return {
			"master_seed": self.master_seed,
			"regimes": {
				name: {
					**{k: v for k, v in asdict(summary).items() if k != "kappa"},
					"kappa": {str(m): asdict(stats) for m, stats in summary.kappa.items()},
				}
				for name, summary in self.regimes.items()
			},
		}

	@classmethod
	def from_dict(cls, data: Mapping[str, Any]) -> "CampaignSummary":
		regimes: Dict[str, RegimeSummary] = {}
		for name, raw in data["regimes"].items():
			kappa = {int(m): KappaStats(**stats) for m, stats in raw["kappa"].items()}
			values = {f.name: raw[f.name] for f in fields(RegimeSummary) if f.name != "kappa"}
			regimes[name] = RegimeSummary(kappa=kappa, **values)
		return cls(master_seed=int(data["master_seed"]), regimes=regimes)


def order_key(order: int, n: int) -> str:
	return f"M{order}N{n}"


def _kappa_stats(order: int, estimates: Sequence[SorkinEstimate]) -> KappaStats:
	values = np.array([e.value for e in estimates], dtype=float)
	sigmas = np.array([e.uncertainty for e in estimates], dtype=float)
	n = values.size
	mean = float(values.mean())
	std = float(values.std(ddof=1)) if n > 1 else 0.0
	standard_error = std / math.sqrt(n) if n > 1 else float(sigmas[0])
	positive = sigmas > 0
	if np.all(positive):
		weights = 1.0 / sigmas ** 2
		weighted_mean = float(np.sum(weights * values) / np.sum(weights))
		weighted_error = float(1.0 / math.sqrt(np.sum(weights)))
	else:
		weighted_mean, weighted_error = mean, standard_error
	zero_consistency = mean / standard_error if standard_error > 0 else 0.0
	return KappaStats(
		order=order,
		values=values.tolist(),
		sigmas=sigmas.tolist(),
		set_indices=[int(e.set_index) if e.set_index is not None else -1 for e in estimates],
		mean=mean,
		std=std,
		standard_error=standard_error,
		weighted_mean=weighted_mean,
		weighted_error=weighted_error,
		zero_consistency=zero_consistency,
	)


def aggregate_campaign(results: Sequence[SetResult], master_seed: int = 0) -> CampaignSummary:
	"""Per-regime κ statistics, central order values at δ = 0 and mean Ī curves."""

	if not results:
		raise ValueError("Cannot aggregate an empty campaign")
	by_regime: Dict[str, List[SetResult]] = {}
	for result in sorted(results, key=lambda r: (r.regime, r.set_index)):
		by_regime.setdefault(result.regime, []).append(result)
	regimes: Dict[str, RegimeSummary] = {}
	for regime, group in by_regime.items():
		# sets lacking an order (zero normalization) are left out of that order only
		orders = sorted({m for r in group for m in r.hierarchy.sorkin})
		for order in orders:
			missing = [r.set_index for r in group if order not in r.hierarchy.sorkin]
			if missing:
				logger.warning("Campaign %s: κ(%d) excludes sets %s", regime, order, missing)
		kappa = {
			order: _kappa_stats(order, [r.hierarchy.sorkin[order] for r in group if order in r.hierarchy.sorkin])
			for order in orders
		}
		central: Dict[str, Dict[str, Any]] = {}
		curves: Dict[str, List[float]] = {}
		phases: List[float] = []
		for key in sorted({k for r in group for k in r.hierarchy.orders}):
			missing = [r.set_index for r in group if key not in r.hierarchy.orders]
			if missing:
				logger.warning("Campaign %s: %s excludes sets %s", regime, order_key(*key), missing)
			available = [r.hierarchy.orders[key] for r in group if key in r.hierarchy.orders]
			at_zero = np.array([item.at_zero()[0] for item in available])
			error = float(at_zero.std(ddof=1) / math.sqrt(at_zero.size)) if at_zero.size > 1 else 0.0
			# ratio of summed numerators and summed normalizations
			raw_total = sum(float(item.raw[item.grid.zero_index()]) for item in available)
			pooled = raw_total / sum(item.denominator for item in available)
			central[order_key(*key)] = {
				"mean": float(at_zero.mean()),
				"standard_error": error,
				"pooled": float(pooled),
				"n_sets": len(available),
			}
			curves[order_key(*key)] = np.stack([item.normalized for item in available]).mean(axis=0).tolist()
			phases = available[0].grid.values.tolist()
		regimes[regime] = RegimeSummary(
			regime=regime,
			n_sets=len(group),
			kappa=kappa,
			central=central,
			curves=curves,
			phases=phases,
			alignment_passed=sum(1 for r in group if r.alignment.passed),
		)
		stats = kappa.get(2)
		if stats is not None:
			logger.info(
				"Campaign %s: κ(2) = %.3e ± %.2e (mean/σ = %.2f) over %d sets",
				regime, stats.mean, stats.standard_error, stats.zero_consistency, len(group),
			)
	return CampaignSummary(master_seed=master_seed, regimes=regimes)


def run_campaign(config: ExperimentConfig, raw_dir: Optional[Union[str, Path]] = None) -> Tuple[CampaignSummary, List[SetResult]]:
	results = run_sets(config, raw_dir)
	summary = aggregate_campaign(results, config.master_seed)
	return summary, results


# -- theory and emission ---------------------------------------------------------

def theory_curves(
	source: SourceState,
	geometry: MaskGeometry,
	grid: Optional[PhaseGrid] = None,
	use_envelope: bool = False,
) -> Tuple[PhaseGrid, Dict[str, np.ndarray], Dict[int, SorkinEstimate]]:
	"""Ideal normalized orders 2..5 for M = 1, 2 and the ideal κ^(1), κ^(2)."""

	grid = grid or PhaseGrid.uniform()
	curves: Dict[str, np.ndarray] = {}
	kappa: Dict[int, SorkinEstimate] = {}
	for order in (1, 2):
		table = theory_table(order, grid, source, geometry, use_envelope=use_envelope)
		for n, result in standard_orders(order, table, ORDER_SIZES).items():
			curves[order_key(order, n)] = result.normalized
		if not grid.has_zero:
			table = theory_table(order, PhaseGrid.single(0.0), source, geometry, use_envelope=use_envelope)
		kappa[order] = sorkin_parameter(order, table)
	return grid, curves, kappa


def theory_formulas() -> List[str]:
	return formulas({1: ORDER_SIZES, 2: ORDER_SIZES})


def curve_rows(
	regime: str,
	phases: Sequence[float],
	curves: Mapping[str, Sequence[float]],
	central: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> List[Tuple[Any, ...]]:
	"""Long-format curve rows; ``n_sets`` is the number of sets behind each order (0 for ideal curves)."""

	rows: List[Tuple[Any, ...]] = []
	for key in sorted(curves):
		order, n = int(key[1]), int(key[3:])
		n_sets = int(central[key]["n_sets"]) if central and key in central else 0
		for delta, value in zip(phases, curves[key]):
			rows.append((regime, order, n, n_sets, float(delta), float(value)))
	return rows


CURVE_HEADER: Tuple[str, ...] = ("regime", "order", "n", "n_sets", "delta", "normalized")


def emit_results(
	summary: CampaignSummary,
	output_dir: Union[str, Path],
	results: Optional[Sequence[SetResult]] = None,
) -> Dict[str, Path]:
	"""Write summary.json, mean hierarchy curves, the per-set κ series and, given results, per-set rows."""

	if not summary.regimes or all(r.n_sets == 0 for r in summary.regimes.values()):
		raise ValueError("Refusing to write results of an empty campaign")
	out = Path(output_dir)
	paths = {
		"summary": out / "summary.json",
		"curves": out / "hierarchy_curves.csv",
		"sorkin": out / "sorkin_sets.csv",
	}
	storage.write_summary(paths["summary"], summary.to_dict())

	rows = []
	for regime, regime_summary in summary.regimes.items():
		rows.extend(curve_rows(regime, regime_summary.phases, regime_summary.curves, regime_summary.central))
	storage.write_csv(paths["curves"], CURVE_HEADER, rows)

	sorkin_rows = []
	for regime, regime_summary in summary.regimes.items():
		for order, stats in sorted(regime_summary.kappa.items()):
			for index, value, sigma in zip(stats.set_indices, stats.values, stats.sigmas):
				sorkin_rows.append((index, regime, order, value, sigma))
	storage.write_csv(paths["sorkin"], ("set_index", "regime", "order", "kappa", "sigma"), sorkin_rows)

	if results:
		paths["sets"] = out / "sets.csv"
		set_rows = []
		for result in sorted(results, key=lambda r: (r.regime, r.set_index)):
			for (order, n), item in sorted(result.hierarchy.orders.items()):
				sigma = item.normalized_sigma if item.normalized_sigma is not None else np.zeros_like(item.normalized)
				for delta, value, error in zip(item.grid.values, item.normalized, sigma):
					set_rows.append((result.set_index, result.regime, order, item.base.label, n, float(delta), float(value), float(error)))
		storage.write_csv(paths["sets"], ("set_index", "regime", "order", "slits", "n", "delta", "value", "sigma"), set_rows)

	for name, path in paths.items():
		logger.info("Wrote %s to '%s'", name, path)
	return paths


def read_results(output_dir: Union[str, Path]) -> CampaignSummary:
	return CampaignSummary.from_dict(storage.read_summary(Path(output_dir) / "summary.json"))


# -- raw data ------------------------------------------------------------------

def _parse_raw_name(path: Path) -> Tuple[int, str]:
	stem = path.stem
	if not stem.startswith("set") or "_" not in stem:
		raise ValueError(f"Unrecognized raw file name '{path.name}'")
	index_text, label = stem[3:].split("_", 1)
	return int(index_text), label


def frame_phases(stack: FrameStack, metadata: Mapping[str, Optional[str]]) -> np.ndarray:
	"""Column phases of a stored frame stack from its sidecar."""

	step = float(metadata.get("PHASE_STEP") or 0.0)
	offset_text = metadata.get("CENTER_OFFSET")
	offset = int(offset_text) if offset_text not in (None, "") else stack.shape[1] // 2
	return (np.arange(stack.shape[1]) - offset) * step


def load_count_record(path: Union[str, Path], window_ps: float, label: Optional[str] = None) -> CountRecord:
	"""Singles and coincidences of a stored time-tag file.

	Without ``label`` the configuration is taken from a ``set<NNN>_<label>.ttag`` name.
	"""

	path = Path(path)
	stream = storage.read_time_tags(path)
	first, second = stream.split()
	if label is None:
		_, label = _parse_raw_name(path)
	return count_record(entry_configuration(label), first, second, window_ps, stream.duration_ps / PS_PER_S)


def load_correlation(path: Union[str, Path], background: Optional[np.ndarray] = None) -> CcdCorrelation:
	stack, metadata = storage.read_frames(path)
	accumulator = CorrelationAccumulator(stack.shape[1], background)
	accumulator.add(stack.frames)
	return accumulator.result(frame_phases(stack, metadata))


def check_alignment_files(
	first: Union[str, Path],
	second: Union[str, Path],
	background: Union[str, Path],
	threshold: float = 1e-2,
	window_ps: float = 1000.0,
) -> AlignmentResult:
	"""Alignment verdict from two stored ABCDE acquisitions and a background file."""

	paths = {FIRST_FULL: Path(first), SECOND_FULL: Path(second), BACKGROUND.label: Path(background)}
	suffixes = {p.suffix for p in paths.values()}
	if suffixes == {".ttag"}:
		records: Dict[str, Union[CountRecord, CcdCorrelation]] = {
			label: load_count_record(path, window_ps, label) for label, path in paths.items()
		}
		return alignment_check(
			_alignment_pattern("photon", records, FIRST_FULL),
			_alignment_pattern("photon", records, SECOND_FULL),
			threshold,
		)
	if suffixes == {".fram"}:
		correlations = {label: load_correlation(path) for label, path in paths.items()}
		return alignment_check(
			_alignment_pattern("intensity", correlations, FIRST_FULL),
			_alignment_pattern("intensity", correlations, SECOND_FULL),
			threshold,
		)
	raise ValueError("Alignment files must all be time-tag (.ttag) or all frame (.fram) files")


def analyze_raw_directory(
	directory: Union[str, Path],
	regime: str,
	window_ps: float = 1000.0,
	threshold: float = 1e-2,
	correct_counts: bool = False,
) -> List[SetResult]:
	"""Analyze stored time-tag (``.ttag``) or frame (``.fram``) files set by set."""

	if regime not in REGIMES:
		raise ValueError(f"Unknown regime '{regime}'")
	root = Path(directory)
	suffix = ".ttag" if regime == "photon" else ".fram"
	grouped: Dict[int, Dict[str, Path]] = {}
	for path in sorted(root.glob(f"set*{suffix}")):
		index, label = _parse_raw_name(path)
		grouped.setdefault(index, {})[label] = path
	if not grouped:
		raise ValueError(f"No '{suffix}' files found in '{root}'")
	results: List[SetResult] = []
	for index, files in sorted(grouped.items()):
		missing = [label for label in set_template() if label not in files]
		if missing:
			raise ValueError(f"Set {index} in '{root}' lacks entries: {', '.join(missing)}")
		records: Dict[str, Union[CountRecord, CcdCorrelation]] = {}
		if regime == "photon":
			for label, path in files.items():
				records[label] = load_count_record(path, window_ps, label)
		else:
			profile = load_correlation(files[BACKGROUND.label]).g1
			for label, path in files.items():
				records[label] = load_correlation(path, profile)
		logger.info("Analyzed raw set %d (%s) from '%s'", index, regime, root)
		results.append(analyze_set(records, regime, index, tuple(files), threshold, correct_counts))
	return results
