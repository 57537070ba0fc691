"""From raw detector data to correlation tables, interference orders and Sorkin parameters."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np

from .ccd_sim import FrameStack
from .hierarchy import (
	GTable,
	InterferenceOrderResult,
	MissingConfigurationError,
	SorkinEstimate,
	compute_order,
	sorkin_parameter,
	subconfigurations,
)
from .optics import MASK_SLITS, PhaseGrid, SlitConfiguration, all_configurations
from .spad_sim import SeedLike, make_rng


logger = logging.getLogger(__name__)

BACKGROUND = SlitConfiguration(0)
REGIME_TAGS: Dict[str, str] = {
	"photon": "photon-correlation",
	"intensity": "intensity-correlation",
	"ideal": "ideal",
}
ORDER_SIZES: Tuple[int, ...] = (2, 3, 4, 5)


@dataclass(frozen=True)
class CountRecord:
	"""Singles per channel and coincidences of one photon-counting acquisition."""

	configuration: SlitConfiguration
	singles_1: int
	singles_2: int
	coincidences: int
	duration_s: float
	window_ps: float

	def __post_init__(self) -> None:
		if min(self.singles_1, self.singles_2, self.coincidences) < 0:
			raise ValueError("Counts must be non-negative")
		if self.coincidences > self.singles_1 * self.singles_2:
			raise ValueError("More coincidences than possible channel pairs")
		if not self.duration_s > 0:
			raise ValueError("Duration must be positive")

	@property
	def singles(self) -> int:
		return self.singles_1 + self.singles_2


@dataclass
class CcdCorrelation:
	"""Line-pair autocorrelation of a frame stack, per phase bin."""

	phases: np.ndarray = field(repr=False)
	g1: np.ndarray = field(repr=False)
	g2: np.ndarray = field(repr=False)
	g1_sigma: np.ndarray = field(repr=False)
	g2_sigma: np.ndarray = field(repr=False)
	samples: int = 0
	pair_samples: int = 0


@dataclass
class DataHierarchy:
	"""Hierarchy evaluated from one set of measured configurations."""

	regime: str
	tables: Dict[int, GTable]
	orders: Dict[Tuple[int, int], InterferenceOrderResult]
	sorkin: Dict[int, SorkinEstimate]
	set_index: Optional[int] = None


def _check_sorted(timestamps: np.ndarray, name: str) -> None:
	if timestamps.size > 1 and np.any(np.diff(timestamps) < 0):
		raise ValueError(f"Stream '{name}' is not sorted by timestamp")


def count_coincidences(first: np.ndarray, second: np.ndarray, window_ps: float) -> int:
	"""Pairs (t1, t2) from opposite channels with |t1 − t2| ≤ t_f, multiplicity included."""

	t1 = np.asarray(first, dtype=np.int64)
	t2 = np.asarray(second, dtype=np.int64)
	_check_sorted(t1, "first")
	_check_sorted(t2, "second")
	if window_ps < 0:
		raise ValueError("Coincidence window must be non-negative")
	if t1.size == 0 or t2.size == 0:
		return 0
	window = int(np.floor(window_ps))
	upper = np.searchsorted(t2, t1 + window, side="right")
	lower = np.searchsorted(t2, t1 - window, side="left")
	return int(np.sum(upper - lower))


def count_record(
	configuration: SlitConfiguration,
	first: np.ndarray,
	second: np.ndarray,
	window_ps: float,
	duration_s: float,
) -> CountRecord:
	return CountRecord(
		configuration=configuration,
		singles_1=int(len(first)),
		singles_2=int(len(second)),
		coincidences=count_coincidences(first, second, window_ps),
		duration_s=duration_s,
		window_ps=window_ps,
	)


def correct_nonresolving(singles: int, coincidences: int) -> Tuple[int, int]:
	"""Undo the splitter bias of non-number-resolving detectors.

	Two-photon events reach both detectors only half of the time, so the
	coincidences are doubled, and the singles lose the over-counted events.
	"""

	if singles < 0 or coincidences < 0:
		raise ValueError("Counts must be non-negative")
	if singles < coincidences:
		raise ValueError(f"Inconsistent counts: {singles} singles but {coincidences} coincidences")
	return singles - coincidences, 2 * coincidences


class CorrelationAccumulator:
	"""Streaming sums for the neighboring-line autocorrelation of frame chunks.

	Lines are paired disjointly, (0, 1), (2, 3), ...; an odd last line only
	enters G^(1). Each line is one 1-D measurement of G^(1), each line pair
	one 1-D measurement of G^(2).
	"""

	def __init__(self, n_columns: int, background: Optional[np.ndarray] = None) -> None:
		self.n_columns = n_columns
		self.background = None if background is None else np.asarray(background, dtype=float)
		if self.background is not None and self.background.shape != (n_columns,):
			raise ValueError("Background profile must have one value per column")
		self.lines = 0
		self.pairs = 0
		self.sum_1 = np.zeros(n_columns)
		self.sumsq_1 = np.zeros(n_columns)
		self.sum_2 = np.zeros(n_columns)
		self.sumsq_2 = np.zeros(n_columns)

	def add(self, frames: np.ndarray) -> None:
		data = np.asarray(frames, dtype=float)
		if data.ndim == 2:
			data = data[np.newaxis]
		if data.ndim != 3 or data.shape[2] != self.n_columns:
			raise ValueError("Frames do not match the accumulator columns")
		if self.background is not None:
			data = data - self.background
		n_pairs = data.shape[1] // 2
		self.lines += data.shape[0] * data.shape[1]
		self.sum_1 += data.sum(axis=(0, 1))
		self.sumsq_1 += (data ** 2).sum(axis=(0, 1))
		if n_pairs:
			products = data[:, 0:2 * n_pairs:2, :] * data[:, 1:2 * n_pairs:2, :]
			self.pairs += data.shape[0] * n_pairs
			self.sum_2 += products.sum(axis=(0, 1))
			self.sumsq_2 += (products ** 2).sum(axis=(0, 1))

	@staticmethod
	def _mean_and_error(total: np.ndarray, total_sq: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
		mean = total / n
		if n < 2:
			return mean, np.zeros_like(mean)
		variance = np.maximum(total_sq - n * mean ** 2, 0.0) / (n - 1)
		return mean, np.sqrt(variance / n)

	def result(self, phases: np.ndarray) -> CcdCorrelation:
		if self.lines == 0 or self.pairs == 0:
			raise ValueError("No line pairs accumulated")
		phases = np.asarray(phases, dtype=float)
		if phases.shape != (self.n_columns,):
			raise ValueError("Phase map must have one phase per column")
		g1, g1_sigma = self._mean_and_error(self.sum_1, self.sumsq_1, self.lines)
		g2, g2_sigma = self._mean_and_error(self.sum_2, self.sumsq_2, self.pairs)
		return CcdCorrelation(phases, g1, g2, g1_sigma, g2_sigma, samples=self.lines, pair_samples=self.pairs)


def _crop(frames: np.ndarray, crop: Optional[Tuple[int, int, int, int]]) -> np.ndarray:
	if crop is None:
		return frames
	row_start, row_stop, col_start, col_stop = crop
	_, height, width = frames.shape
	if not (0 <= row_start < row_stop <= height and 0 <= col_start < col_stop <= width):
		raise ValueError(f"Crop {crop} lies outside the {height}x{width} frames")
	return frames[:, row_start:row_stop, col_start:col_stop]


def background_profile(stack: Union[FrameStack, np.ndarray], crop: Optional[Tuple[int, int, int, int]] = None) -> np.ndarray:
	"""Per-column mean count of a background stack."""

	frames = stack.frames if isinstance(stack, FrameStack) else np.asarray(stack)
	return _crop(frames, crop).astype(float).mean(axis=(0, 1))


def ccd_autocorrelation(
	stack: Union[FrameStack, np.ndarray],
	phases: np.ndarray,
	crop: Optional[Tuple[int, int, int, int]] = None,
	background: Optional[np.ndarray] = None,
) -> CcdCorrelation:
	"""G^(1)(δ_p) and G^(2)(δ_p, δ_p) from pixels of the same column in neighboring lines.

	Parameters
	----------
	stack: FrameStack or np.ndarray
		Frames shaped (frames, rows, columns).
	phases: np.ndarray
		Phase of every column after cropping.
	crop: Optional[Tuple[int, int, int, int]]
		(row_start, row_stop, col_start, col_stop) window inside the frames.
	background: Optional[np.ndarray]
		Per-column profile subtracted from every line before correlating.
	"""

	frames = stack.frames if isinstance(stack, FrameStack) else np.asarray(stack)
	if frames.ndim != 3 or frames.shape[0] == 0:
		raise ValueError("A non-empty (frames, rows, columns) stack is required")
	cropped = _crop(frames, crop)
	accumulator = CorrelationAccumulator(cropped.shape[2], background)
	accumulator.add(cropped)
	return accumulator.result(phases)


def background_subtract(table: GTable, background: GTable) -> GTable:
	"""Subtract the background entry from every configuration; negatives are kept."""

	if table.order != background.order:
		raise ValueError("Background and data tables have different orders")
	if not table.grid.same_as(background.grid):
		raise ValueError("Background and data tables are sampled on different grids")
	offset = background.get(BACKGROUND)
	offset_sigma = background.sigma(BACKGROUND)
	values = {c: v - offset for c, v in table.values.items() if not c.is_empty}
	sigmas = None
	if table.has_sigmas or background.has_sigmas:
		sigmas = {c: np.sqrt(table.sigma(c) ** 2 + offset_sigma ** 2) for c in values}
	return GTable(table.order, table.grid, values, sigmas)


def propagate_count_errors(data: Union[CountRecord, CcdCorrelation]) -> Dict[str, np.ndarray | float]:
	"""Poisson σ(N) = √N for counts; across-line standard errors for CCD correlations."""

	if isinstance(data, CountRecord):
		return {
			"singles_1": float(np.sqrt(data.singles_1)),
			"singles_2": float(np.sqrt(data.singles_2)),
			"singles": float(np.sqrt(data.singles)),
			"coincidences": float(np.sqrt(data.coincidences)),
		}
	return {"g1": data.g1_sigma, "g2": data.g2_sigma}


def _require_all(records: Mapping[SlitConfiguration, object], n_slits: int) -> None:
	for config in all_configurations(n_slits) + [BACKGROUND]:
		if config not in records:
			raise MissingConfigurationError(config, "measurement set is incomplete")


def _key(label: Union[str, SlitConfiguration]) -> SlitConfiguration:
	return label if isinstance(label, SlitConfiguration) else SlitConfiguration.from_label(label)


def tables_from_counts(records: Mapping[SlitConfiguration, CountRecord], correct_counts: bool = False) -> Tuple[GTable, GTable]:
	"""Single-bin G^(1) (singles rate) and G^(2) (coincidence rate) tables at the detector phase."""

	grid = PhaseGrid.single(0.0)
	values_1: Dict[SlitConfiguration, np.ndarray] = {}
	values_2: Dict[SlitConfiguration, np.ndarray] = {}
	sigmas_1: Dict[SlitConfiguration, np.ndarray] = {}
	sigmas_2: Dict[SlitConfiguration, np.ndarray] = {}
	for config, record in records.items():
		singles, coincidences = record.singles, record.coincidences
		sigma_singles, sigma_coincidences = np.sqrt(singles), np.sqrt(coincidences)
		if correct_counts:
			singles, coincidences = correct_nonresolving(singles, coincidences)
			sigma_coincidences = 2 * sigma_coincidences
		values_1[config] = np.array([singles / record.duration_s])
		values_2[config] = np.array([coincidences / record.duration_s])
		sigmas_1[config] = np.array([sigma_singles / record.duration_s])
		sigmas_2[config] = np.array([sigma_coincidences / record.duration_s])
	return GTable(1, grid, values_1, sigmas_1), GTable(2, grid, values_2, sigmas_2)


def tables_from_correlations(correlations: Mapping[SlitConfiguration, CcdCorrelation]) -> Tuple[GTable, GTable]:
	"""G^(1) and G^(2) tables on the phase grid of the cropped columns."""

	phases = next(iter(correlations.values())).phases
	grid = PhaseGrid(phases)
	for config, corr in correlations.items():
		if not np.array_equal(corr.phases, grid.values):
			raise ValueError(f"Correlation of '{config.label}' uses a different phase map")
	table_1 = GTable(1, grid, {c: x.g1 for c, x in correlations.items()}, {c: x.g1_sigma for c, x in correlations.items()})
	table_2 = GTable(2, grid, {c: x.g2 for c, x in correlations.items()}, {c: x.g2_sigma for c, x in correlations.items()})
	return table_1, table_2


def hierarchy_from_tables(
	tables: Mapping[int, GTable],
	regime: str,
	set_index: Optional[int] = None,
	sizes: Iterable[int] = ORDER_SIZES,
) -> DataHierarchy:
	"""Background-corrected tables → normalized orders 2..5 and κ^(1), κ^(2)."""

	tag = REGIME_TAGS[regime]
	orders: Dict[Tuple[int, int], InterferenceOrderResult] = {}
	sorkin: Dict[int, SorkinEstimate] = {}
	for order, table in tables.items():
		for n in sizes:
			try:
				orders[(order, n)] = compute_order(order, SlitConfiguration.prefix(n), table)
			except ValueError as exc:
				# zero normalization: no counts in the base configuration
				logger.warning("Set %s (%s): skipping I^(%d)_%d: %s", set_index, regime, order, n, exc)
		try:
			sorkin[order] = sorkin_parameter(order, table, regime=tag, set_index=set_index)
		except ValueError as exc:
			logger.warning("Set %s (%s): no κ^(%d): %s", set_index, regime, order, exc)
	return DataHierarchy(regime=regime, tables=dict(tables), orders=orders, sorkin=sorkin, set_index=set_index)


def hierarchy_from_data(
	records: Mapping[Union[str, SlitConfiguration], Union[CountRecord, CcdCorrelation]],
	regime: str,
	correct_counts: bool = False,
	set_index: Optional[int] = None,
	n_slits: int = MASK_SLITS,
) -> DataHierarchy:
	"""Per-configuration records (31 configurations plus background "0") → hierarchy.

	``regime`` is ``"photon"`` for :class:`CountRecord` data and ``"intensity"``
	for :class:`CcdCorrelation` data.
	"""

	if regime not in ("photon", "intensity"):
		raise ValueError(f"Unknown regime '{regime}'")
	keyed = {_key(label): record for label, record in records.items()}
	_require_all(keyed, n_slits)
	if regime == "photon":
		raw_1, raw_2 = tables_from_counts(keyed, correct_counts)
	else:
		raw_1, raw_2 = tables_from_correlations(keyed)
	tables = {
		1: background_subtract(raw_1, raw_1),
		2: background_subtract(raw_2, raw_2),
	}
	result = hierarchy_from_tables(tables, regime, set_index)
	logger.debug("Set %s (%s): κ = %s", set_index, regime, {m: e.value for m, e in result.sorkin.items()})
	return result


def monte_carlo_sigma(
	table: GTable,
	order: int,
	base: SlitConfiguration,
	trials: int = 10_000,
	seed: SeedLike = 0,
	poisson: bool = False,
) -> float:
	"""Spread of the normalized order at δ = 0 under resampling of the table.

	With ``poisson`` the table values are taken as raw counts and redrawn from
	Poisson distributions; otherwise each value is redrawn from a normal
	distribution with its table uncertainty.
	"""

	rng = make_rng(seed)
	zero = table.grid.zero_index()
	terms = subconfigurations(base)
	n = len(base)
	signs = np.array([-1.0 if (n - len(t)) % 2 else 1.0 for t in terms])
	means = np.array([table.get(t)[zero] for t in terms])
	if poisson:
		draws = rng.poisson(means, size=(trials, len(terms))).astype(float)
	else:
		sigmas = np.array([table.sigma(t)[zero] for t in terms])
		draws = rng.normal(means, sigmas, size=(trials, len(terms)))
	denominators = draws[:, terms.index(base)]
	normalized = (draws @ signs) / denominators
	return float(np.std(normalized, ddof=1))
