"""Interference hierarchy: inclusion-exclusion orders, normalization and Sorkin parameters."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .optics import (
	MaskGeometry,
	PhaseGrid,
	SlitConfiguration,
	SourceState,
	all_configurations,
	gm_product,
)


logger = logging.getLogger(__name__)

REGIMES: Tuple[str, ...] = ("ideal", "intensity-correlation", "photon-correlation")


class MissingConfigurationError(KeyError):
	"""Raised when a GTable lacks a configuration an order needs."""

	def __init__(self, configuration: SlitConfiguration, context: str = "") -> None:
		self.configuration = configuration
		message = f"Missing data for slit configuration '{configuration.label}'"
		if context:
			message = f"{message} ({context})"
		super().__init__(message)

	def __str__(self) -> str:
		return str(self.args[0])


@dataclass
class GTable:
	"""Correlation-function values of order M per slit configuration on one phase grid."""

	order: int
	grid: PhaseGrid
	values: Dict[SlitConfiguration, np.ndarray] = field(default_factory=dict)
	sigmas: Optional[Dict[SlitConfiguration, np.ndarray]] = None
	# G(0,…,0) per configuration, for grids without a δ = 0 sample
	origin: Optional[Dict[SlitConfiguration, float]] = None

	def __post_init__(self) -> None:
		if self.order < 1:
			raise ValueError("GTable order must be at least 1")
		size = len(self.grid)
		checked: Dict[SlitConfiguration, np.ndarray] = {}
		for config, array in self.values.items():
			arr = np.asarray(array, dtype=float).reshape(-1)
			if arr.size != size:
				raise ValueError(f"Values for '{config.label}' do not match the phase grid ({arr.size} != {size})")
			if not np.all(np.isfinite(arr)):
				raise ValueError(f"Values for '{config.label}' are not finite")
			checked[config] = arr
		self.values = checked
		if self.sigmas is not None:
			sigmas: Dict[SlitConfiguration, np.ndarray] = {}
			for config, array in self.sigmas.items():
				arr = np.asarray(array, dtype=float).reshape(-1)
				if arr.size != size or np.any(arr < 0):
					raise ValueError(f"Invalid uncertainties for '{config.label}'")
				sigmas[config] = arr
			self.sigmas = sigmas
		if self.origin is not None:
			self.origin = {config: float(value) for config, value in self.origin.items()}

	@classmethod
	def from_function(
		cls,
		order: int,
		grid: PhaseGrid,
		configurations: Iterable[SlitConfiguration],
		function: Callable[[SlitConfiguration, np.ndarray], np.ndarray],
	) -> "GTable":
		return cls(order, grid, {config: function(config, grid.values) for config in configurations})

	def __contains__(self, configuration: object) -> bool:
		return configuration in self.values

	def get(self, configuration: SlitConfiguration) -> np.ndarray:
		try:
			return self.values[configuration]
		except KeyError:
			raise MissingConfigurationError(configuration) from None

	def sigma(self, configuration: SlitConfiguration) -> np.ndarray:
		if self.sigmas is None or configuration not in self.sigmas:
			return np.zeros(len(self.grid))
		return self.sigmas[configuration]

	@property
	def has_sigmas(self) -> bool:
		return self.sigmas is not None

	def configurations(self) -> List[SlitConfiguration]:
		return sorted(self.values, key=SlitConfiguration.sort_key)

	def norm(self) -> float:
		"""Largest absolute value in the table."""

		if not self.values:
			return 0.0
		return float(max(np.max(np.abs(arr)) for arr in self.values.values()))

	def scaled(self, factor: float) -> "GTable":
		sigmas = None
		if self.sigmas is not None:
			sigmas = {c: s * abs(factor) for c, s in self.sigmas.items()}
		origin = None if self.origin is None else {c: v * factor for c, v in self.origin.items()}
		return GTable(self.order, self.grid, {c: v * factor for c, v in self.values.items()}, sigmas, origin)

	def shifted(self, offset: np.ndarray | float) -> "GTable":
		return GTable(self.order, self.grid, {c: v + offset for c, v in self.values.items()}, self.sigmas)

	def restricted(self, configurations: Iterable[SlitConfiguration]) -> "GTable":
		wanted = list(configurations)
		values = {c: self.get(c) for c in wanted}
		sigmas = None
		if self.sigmas is not None:
			sigmas = {c: self.sigma(c) for c in wanted}
		origin = None if self.origin is None else {c: self.origin[c] for c in wanted if c in self.origin}
		return GTable(self.order, self.grid, values, sigmas, origin)


@dataclass
class InterferenceOrderResult:
	"""I^(M)_N over the grid for one base configuration, raw and normalized."""

	order: int
	n: int
	base: SlitConfiguration
	grid: PhaseGrid
	raw: np.ndarray
	normalized: np.ndarray
	denominator: float
	raw_sigma: Optional[np.ndarray] = None
	normalized_sigma: Optional[np.ndarray] = None

	def at_zero(self) -> Tuple[float, float]:
		"""Normalized value and uncertainty at δ = 0."""

		index = self.grid.zero_index()
		sigma = 0.0 if self.normalized_sigma is None else float(self.normalized_sigma[index])
		return float(self.normalized[index]), sigma


@dataclass(frozen=True)
class SorkinEstimate:
	"""κ^(M) with its uncertainty and provenance."""

	order: int
	value: float
	uncertainty: float = 0.0
	regime: str = "ideal"
	set_index: Optional[int] = None
	base: str = ""

	def __post_init__(self) -> None:
		if self.uncertainty < 0:
			raise ValueError("Uncertainty must be non-negative")
		if self.regime not in REGIMES:
			raise ValueError(f"Unknown regime '{self.regime}'")


def subconfigurations(configuration: SlitConfiguration) -> List[SlitConfiguration]:
	"""All 2^|S| − 1 nonempty subsets of ``configuration``, by size then label."""

	if configuration.is_empty:
		raise ValueError("The empty configuration has no subconfigurations")
	members = configuration.indices
	subsets = [
		SlitConfiguration.from_indices(combo)
		for size in range(1, len(members) + 1)
		for combo in combinations(members, size)
	]
	return sorted(subsets, key=SlitConfiguration.sort_key)


def _signed_terms(configuration: SlitConfiguration) -> List[Tuple[int, SlitConfiguration]]:
	n = len(configuration)
	return [(-1 if (n - len(sub)) % 2 else 1, sub) for sub in subconfigurations(configuration)]


def _check_order(order: int, table: GTable) -> None:
	if table.order != order:
		raise ValueError(f"Table holds G^({table.order}) but order {order} was requested")


def interference_order(
	order: int,
	configuration: SlitConfiguration,
	table: GTable,
	index: Optional[int] = None,
) -> np.ndarray | float:
	"""I^(M)_N = Σ_{∅≠T⊆S} (−1)^{N−|T|} G^(M)_T.

	Parameters
	----------
	order: int
		Particle order M of the table.
	configuration: SlitConfiguration
		Base configuration S with N = |S| slits.
	table: GTable
		Must contain every nonempty subset of S.
	index: Optional[int]
		Grid index; when omitted the whole grid is returned.
	"""

	_check_order(order, table)
	total = np.zeros(len(table.grid))
	for sign, sub in _signed_terms(configuration):
		if sub not in table:
			raise MissingConfigurationError(sub, f"needed for I^({order})_{len(configuration)}[{configuration.label}]")
		total = total + sign * table.get(sub)
	if index is not None:
		return float(total[index])
	return total


def interference_order_sigma(order: int, configuration: SlitConfiguration, table: GTable) -> np.ndarray:
	"""Quadrature sum of the table uncertainties entering I^(M)_N."""

	_check_order(order, table)
	variance = np.zeros(len(table.grid))
	for _, sub in _signed_terms(configuration):
		variance = variance + table.sigma(sub) ** 2
	return np.sqrt(variance)


def expand_formula(order: int, configuration: SlitConfiguration) -> str:
	"""Render the signed sum term by term, largest configurations first."""

	terms = sorted(_signed_terms(configuration), key=lambda item: (-len(item[1]), item[1].label))
	rendered = " ".join(f"{'+' if sign > 0 else '-'} G_{sub.label}" for sign, sub in terms)
	return f"I^({order})_{len(configuration)}[{configuration.label}] = {rendered}"


def _denominator(configuration: SlitConfiguration, table: GTable) -> Tuple[float, float, Optional[int]]:
	"""G_S(0,…,0) from the δ = 0 sample, else from the table's origin values."""

	zero: Optional[int] = None
	if table.grid.has_zero:
		zero = table.grid.zero_index()
		value, sigma = float(table.get(configuration)[zero]), float(table.sigma(configuration)[zero])
	elif table.origin is not None and configuration in table.origin:
		value, sigma = table.origin[configuration], 0.0
	else:
		raise ValueError(
			f"No G^({table.order})_{configuration.label} value at δ = 0: the grid lacks the sample and the table has no origin values"
		)
	if value == 0.0:
		raise ValueError(
			f"Normalization G^({table.order})_{configuration.label}(0) is zero; the order cannot be normalized"
		)
	return value, sigma, zero


def compute_order(order: int, configuration: SlitConfiguration, table: GTable) -> InterferenceOrderResult:
	"""Raw and normalized I^(M)_N with first-order uncertainties when the table has them."""

	raw = np.asarray(interference_order(order, configuration, table), dtype=float)
	denominator, denominator_sigma, zero = _denominator(configuration, table)
	result = InterferenceOrderResult(
		order=order,
		n=len(configuration),
		base=configuration,
		grid=table.grid,
		raw=raw,
		normalized=raw / denominator,
		denominator=denominator,
	)
	if table.has_sigmas:
		raw_sigma = interference_order_sigma(order, configuration, table)
		# variance of Ī without the base term, then the base term and denominator
		own = table.sigma(configuration)
		rest = np.maximum(raw_sigma ** 2 - own ** 2, 0.0)
		variance = rest / denominator ** 2 + (own / denominator) ** 2 + (raw * denominator_sigma / denominator ** 2) ** 2
		if zero is not None:
			# at δ = 0 the base term and the denominator are the same measurement
			d_ratio = 1.0 / denominator - raw[zero] / denominator ** 2
			variance[zero] = rest[zero] / denominator ** 2 + (d_ratio * own[zero]) ** 2
		result.raw_sigma = raw_sigma
		result.normalized_sigma = np.sqrt(variance)
	return result


def normalize_order(result: InterferenceOrderResult, table: GTable) -> np.ndarray:
	"""Ī^(M)_N(δ) = I^(M)_N(δ) / G^(M)_S(0,…,0)."""

	_check_order(result.order, table)
	denominator, _, _ = _denominator(result.base, table)
	return result.raw / denominator


def sorkin_parameter(
	order: int,
	table: GTable,
	base: Optional[SlitConfiguration] = None,
	regime: str = "ideal",
	set_index: Optional[int] = None,
) -> SorkinEstimate:
	"""κ^(M) = I^(M)_{2M+1}(0) / G^(M)_{full}(0,…,0) on a (2M+1)-slit base."""

	n = 2 * order + 1
	base = base if base is not None else SlitConfiguration.prefix(n)
	if len(base) != n:
		raise ValueError(f"κ^({order}) needs a {n}-slit configuration, got '{base.label}'")
	result = compute_order(order, base, table)
	value, sigma = result.at_zero()
	return SorkinEstimate(order=order, value=value, uncertainty=sigma, regime=regime, set_index=set_index, base=base.label)


def standard_orders(order: int, table: GTable, sizes: Sequence[int] = (2, 3, 4, 5)) -> Dict[int, InterferenceOrderResult]:
	"""Orders on the prefix configurations AB, ABC, ABCD, ABCDE."""

	return {n: compute_order(order, SlitConfiguration.prefix(n), table) for n in sizes}


def theory_table(
	order: int,
	grid: PhaseGrid,
	source: SourceState,
	geometry: MaskGeometry,
	configurations: Optional[Iterable[SlitConfiguration]] = None,
	use_envelope: bool = False,
) -> GTable:
	"""Ideal GTable in the autocorrelation scheme δ_1 = … = δ_M = δ."""

	configs = list(configurations) if configurations is not None else all_configurations(source.n_slits)

	def evaluate(config: SlitConfiguration, phases: np.ndarray) -> np.ndarray:
		return np.asarray(gm_product(config, [phases] * order, source, geometry, use_envelope), dtype=float)

	table = GTable.from_function(order, grid, configs, evaluate)
	if not grid.has_zero:
		table.origin = {config: float(evaluate(config, np.zeros(1))[0]) for config in configs}
	return table


def amplitude_table(order: int, grid: PhaseGrid, amplitudes: Sequence[complex]) -> GTable:
	"""GTable with G_T = |Σ_{j∈T} a_j|^{2M} for arbitrary complex a_j, constant over the grid."""

	amps = np.asarray(amplitudes, dtype=complex)
	configs = all_configurations(len(amps))
	values: Dict[SlitConfiguration, np.ndarray] = {}
	for config in configs:
		total = amps[list(config.indices)].sum()
		values[config] = np.full(len(grid), abs(total) ** (2 * order))
	return GTable(order, grid, values)


def formulas(orders: Mapping[int, Sequence[int]]) -> List[str]:
	"""Expanded formulas for each requested (M, N) on the prefix configurations."""

	return [expand_formula(m, SlitConfiguration.prefix(n)) for m, sizes in orders.items() for n in sizes]
