"""Mask geometry, source states and ideal far-field correlation functions."""

from __future__ import annotations

import logging
import math
import string
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np


logger = logging.getLogger(__name__)

SLIT_LETTERS: str = string.ascii_uppercase
MASK_SLITS: int = 5
BACKGROUND_LABEL: str = "0"

PhaseLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class MaskGeometry:
	"""Geometry of the slit masks and of the far-field detection plane (SI units)."""

	wavelength: float = 633e-9
	slit_pitch: float = 500e-6
	slit_width: float = 25e-6
	slit_height: float = 200e-6
	hole_radius: float = 200e-6
	config_spacing: float = 1000e-6
	mask_separation: float = 1e-3
	detector_distance: float = 1.7
	n_slits: int = MASK_SLITS

	def __post_init__(self) -> None:
		lengths = {
			"wavelength": self.wavelength,
			"slit_pitch": self.slit_pitch,
			"slit_width": self.slit_width,
			"slit_height": self.slit_height,
			"hole_radius": self.hole_radius,
			"config_spacing": self.config_spacing,
			"mask_separation": self.mask_separation,
			"detector_distance": self.detector_distance,
		}
		for name, value in lengths.items():
			if not math.isfinite(value) or value <= 0:
				raise ValueError(f"Geometry parameter '{name}' must be finite and positive, got {value!r}")
		if self.slit_width >= self.slit_pitch:
			raise ValueError("Slit width must be smaller than the slit pitch")
		if not 1 <= self.n_slits <= len(SLIT_LETTERS):
			raise ValueError(f"Unsupported number of slits: {self.n_slits}")

	@property
	def wavenumber(self) -> float:
		return 2.0 * math.pi / self.wavelength

	@property
	def slit_positions(self) -> np.ndarray:
		"""Slit positions x_j = j·d relative to slit A."""

		return np.arange(self.n_slits, dtype=float) * self.slit_pitch


@dataclass(frozen=True, order=False)
class SlitConfiguration:
	"""Subset of labeled slits, stored as a bit mask (bit j ↔ letter j)."""

	mask: int

	def __post_init__(self) -> None:
		if self.mask < 0 or self.mask >= 1 << len(SLIT_LETTERS):
			raise ValueError(f"Invalid slit mask: {self.mask}")

	@classmethod
	def from_label(cls, label: str) -> "SlitConfiguration":
		"""Parse a label such as ``"BCD"``; ``"0"`` is the background."""

		text = label.strip().upper()
		if text == BACKGROUND_LABEL:
			return cls(0)
		if not text:
			raise ValueError("Empty slit configuration label")
		mask = 0
		for letter in text:
			index = SLIT_LETTERS.find(letter)
			if index < 0:
				raise ValueError(f"Unknown slit '{letter}' in label '{label}'")
			if mask & (1 << index):
				raise ValueError(f"Slit '{letter}' repeated in label '{label}'")
			mask |= 1 << index
		return cls(mask)

	@classmethod
	def from_indices(cls, indices: Iterable[int]) -> "SlitConfiguration":
		mask = 0
		for index in indices:
			mask |= 1 << int(index)
		return cls(mask)

	@classmethod
	def prefix(cls, n: int) -> "SlitConfiguration":
		"""The first ``n`` slits (A, AB, ABC, ...)."""

		return cls((1 << n) - 1)

	@property
	def indices(self) -> Tuple[int, ...]:
		return tuple(j for j in range(len(SLIT_LETTERS)) if self.mask & (1 << j))

	@property
	def label(self) -> str:
		if self.mask == 0:
			return BACKGROUND_LABEL
		return "".join(SLIT_LETTERS[j] for j in self.indices)

	@property
	def is_empty(self) -> bool:
		return self.mask == 0

	@property
	def highest_index(self) -> int:
		return self.mask.bit_length() - 1

	def issubset(self, other: "SlitConfiguration") -> bool:
		return self.mask & ~other.mask == 0

	def sort_key(self) -> Tuple[int, str]:
		return (len(self), self.label)

	def __len__(self) -> int:
		return bin(self.mask).count("1")

	def __iter__(self) -> Iterator[int]:
		return iter(self.indices)

	def __str__(self) -> str:
		return self.label


def all_configurations(n_slits: int = MASK_SLITS) -> List[SlitConfiguration]:
	"""Every nonempty configuration of ``n_slits`` slits, canonically ordered."""

	configs = [SlitConfiguration(mask) for mask in range(1, 1 << n_slits)]
	return sorted(configs, key=SlitConfiguration.sort_key)


@dataclass(frozen=True)
class SourceState:
	"""Light source seen by the slit mask.

	``kind`` is ``"coherent"`` (mean photon number ``mean_photon_number``) or
	``"fock"`` (postselected ``photon_number`` of 1 or 2). Transmissions are
	complex per-slit amplitudes, weights are real illumination amplitudes.
	"""

	kind: str = "coherent"
	mean_photon_number: float = 1.0
	photon_number: Optional[int] = None
	transmissions: Tuple[complex, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)
	weights: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)

	def __post_init__(self) -> None:
		if self.kind not in {"coherent", "fock"}:
			raise ValueError(f"Unknown source kind '{self.kind}'")
		if self.kind == "coherent" and not (self.mean_photon_number >= 0):
			raise ValueError("Mean photon number must be non-negative")
		if self.kind == "fock" and self.photon_number not in {1, 2}:
			raise ValueError("Postselected Fock states support m = 1 or m = 2 photons")
		if len(self.transmissions) != len(self.weights):
			raise ValueError("Transmissions and weights must cover the same slits")
		if any(abs(t) > 1.0 + 1e-12 for t in self.transmissions):
			raise ValueError("Slit transmissions must satisfy |t_j| <= 1")
		if any(not (w > 0) for w in self.weights):
			raise ValueError("Illumination weights must be real and positive")

	@classmethod
	def coherent(cls, mean_photon_number: float = 1.0, weights: Optional[Sequence[float]] = None) -> "SourceState":
		weights = tuple(float(w) for w in weights) if weights is not None else (1.0,) * MASK_SLITS
		return cls(kind="coherent", mean_photon_number=mean_photon_number, transmissions=(1.0,) * len(weights), weights=weights)

	@classmethod
	def fock(cls, photon_number: int, weights: Optional[Sequence[float]] = None) -> "SourceState":
		weights = tuple(float(w) for w in weights) if weights is not None else (1.0,) * MASK_SLITS
		return cls(kind="fock", photon_number=photon_number, transmissions=(1.0,) * len(weights), weights=weights)

	@property
	def n_slits(self) -> int:
		return len(self.weights)

	def postselect(self, photon_number: int) -> "SourceState":
		"""Effective state of the subensemble in which ``photon_number`` photons were detected."""

		return SourceState(
			kind="fock",
			photon_number=photon_number,
			transmissions=self.transmissions,
			weights=self.weights,
		)

	def with_attenuation(self, factors: Sequence[float]) -> "SourceState":
		"""Copy with each slit amplitude multiplied by the given real factor."""

		if len(factors) != self.n_slits:
			raise ValueError("One attenuation factor per slit is required")
		transmissions = tuple(complex(t) * float(f) for t, f in zip(self.transmissions, factors))
		return SourceState(self.kind, self.mean_photon_number, self.photon_number, transmissions, self.weights)

	def photon_number_distribution(self, n_max: int) -> np.ndarray:
		"""Probabilities p_n = |c_n|² for n = 0..n_max."""

		n = np.arange(n_max + 1)
		if self.kind == "fock":
			return (n == self.photon_number).astype(float)
		nbar = self.mean_photon_number
		if nbar == 0:
			return (n == 0).astype(float)
		log_p = -nbar + n * math.log(nbar) - np.array([math.lgamma(k + 1) for k in n])
		return np.exp(log_p)

	def amplitudes(self) -> np.ndarray:
		"""Per-slit complex amplitudes w_j·t_j."""

		return np.asarray(self.weights, dtype=float) * np.asarray(self.transmissions, dtype=complex)


@dataclass(frozen=True)
class PhaseGrid:
	"""Strictly increasing detection phases δ (radians)."""

	values: np.ndarray = field(repr=False)

	def __post_init__(self) -> None:
		values = np.asarray(self.values, dtype=float)
		if values.ndim != 1 or values.size == 0:
			raise ValueError("Phase grid must be a non-empty 1-D array")
		if not np.all(np.isfinite(values)):
			raise ValueError("Phase grid contains non-finite values")
		if values.size > 1 and not np.all(np.diff(values) > 0):
			raise ValueError("Phase grid must be strictly increasing")
		object.__setattr__(self, "values", values)

	@classmethod
	def uniform(cls, start: float = -3 * math.pi, stop: float = 3 * math.pi, count: int = 1001) -> "PhaseGrid":
		"""Uniform grid; symmetric ranges with odd ``count`` hold δ = 0 exactly."""

		if count < 1:
			raise ValueError("Phase grid needs at least one sample")
		if count % 2 == 1 and math.isclose(start, -stop):
			half = np.linspace(0.0, stop, count // 2 + 1)
			return cls(np.concatenate([-half[:0:-1], half]))
		return cls(np.linspace(start, stop, count))

	@classmethod
	def single(cls, phase: float = 0.0) -> "PhaseGrid":
		return cls(np.array([phase], dtype=float))

	def __len__(self) -> int:
		return int(self.values.size)

	@property
	def has_zero(self) -> bool:
		return bool(np.any(self.values == 0.0))

	def zero_index(self) -> int:
		hits = np.flatnonzero(self.values == 0.0)
		if hits.size == 0:
			raise ValueError("Phase grid does not contain δ = 0")
		return int(hits[0])

	def same_as(self, other: "PhaseGrid") -> bool:
		return self.values.shape == other.values.shape and bool(np.array_equal(self.values, other.values))


def phase_at_pixel(pixel: PhaseLike, geometry: MaskGeometry, pixel_size: float) -> PhaseLike:
	"""Optical phase δ_p = (2π/λ)·d·(p·d_pixel)/L accumulated at pixel ``p``."""

	if not math.isfinite(pixel_size) or pixel_size <= 0:
		raise ValueError("Pixel size must be finite and positive")
	return geometry.wavenumber * geometry.slit_pitch * (np.asarray(pixel, dtype=float) * pixel_size) / geometry.detector_distance


def pixel_period(geometry: MaskGeometry, pixel_size: float) -> float:
	"""Pixels per 2π period of the interference pattern, λL/(d·d_pixel)."""

	return geometry.wavelength * geometry.detector_distance / (geometry.slit_pitch * pixel_size)


def phase_span(n_pixels: int, geometry: MaskGeometry, pixel_size: float) -> float:
	return float(phase_at_pixel(n_pixels, geometry, pixel_size))


def fresnel_number(area: float, distance: float, wavelength: float) -> float:
	"""Fresnel number F = area/(distance·λ)."""

	if not distance > 0:
		raise ValueError("Propagation distance must be positive")
	if not wavelength > 0:
		raise ValueError("Wavelength must be positive")
	return area / (distance * wavelength)


def detection_fresnel_number(geometry: MaskGeometry) -> float:
	"""F_1 = a·b/(L·λ) of the detection plane."""

	return fresnel_number(geometry.slit_width * geometry.slit_height, geometry.detector_distance, geometry.wavelength)


def mask_fresnel_numbers(geometry: MaskGeometry) -> Tuple[float, float]:
	"""F_21 between the masks, computed with the hole radius r and with the diameter 2r."""

	radius = fresnel_number(geometry.hole_radius ** 2, geometry.mask_separation, geometry.wavelength)
	diameter = fresnel_number((2 * geometry.hole_radius) ** 2, geometry.mask_separation, geometry.wavelength)
	return radius, diameter


def illumination_weights(beam_radius: float, center_offset: float, geometry: MaskGeometry) -> np.ndarray:
	"""Gaussian amplitude weights exp(−x̃_j²/w²) of a beam centered on slit C plus ``center_offset``.

	Parameters
	----------
	beam_radius: float
		1/e² intensity radius w of the beam at the mask (m); ``inf`` gives flat illumination.
	center_offset: float
		Offset of the beam center from the middle slit (m).
	geometry: MaskGeometry
		Slit positions are taken from the geometry.

	Returns
	-------
	np.ndarray
		One weight per slit, normalized so the largest is 1.
	"""

	if not beam_radius > 0:
		raise ValueError("Beam radius must be positive")
	positions = geometry.slit_positions
	center = positions.mean() + center_offset
	relative = positions - center
	if math.isinf(beam_radius):
		weights = np.ones_like(relative)
	else:
		weights = np.exp(-(relative ** 2) / beam_radius ** 2)
	return weights / weights.max()


def envelope(delta: PhaseLike, geometry: MaskGeometry) -> PhaseLike:
	"""Single-slit diffraction factor sinc(a·δ/(2d))."""

	# np.sinc is the normalized sinc, sin(πx)/(πx)
	return np.sinc(geometry.slit_width * np.asarray(delta, dtype=float) / (2.0 * geometry.slit_pitch * math.pi))


def _check_configuration(configuration: SlitConfiguration, source: SourceState) -> None:
	if configuration.is_empty:
		raise ValueError("The background configuration has no amplitude")
	if configuration.highest_index >= source.n_slits:
		raise ValueError(f"Configuration '{configuration.label}' uses slits the source does not illuminate")


def config_amplitude(
	configuration: SlitConfiguration,
	delta: PhaseLike,
	source: SourceState,
	geometry: MaskGeometry,
	use_envelope: bool = False,
) -> PhaseLike:
	"""Far-field amplitude A_S(δ) = envelope(δ)·Σ_{j∈S} w_j·t_j·e^{i·j·δ}."""

	_check_configuration(configuration, source)
	delta_arr = np.asarray(delta, dtype=float)
	amplitudes = source.amplitudes()
	total = np.zeros(delta_arr.shape, dtype=complex)
	for j in configuration:
		total = total + amplitudes[j] * np.exp(1j * j * delta_arr)
	if use_envelope:
		total = total * envelope(delta_arr, geometry)
	return total if total.ndim else complex(total)


def g1(
	configuration: SlitConfiguration,
	delta: PhaseLike,
	source: SourceState,
	geometry: MaskGeometry,
	use_envelope: bool = False,
) -> PhaseLike:
	"""First-order correlation G^(1)_S(δ) = |A_S(δ)|² (unit scale per photon)."""

	amplitude = np.asarray(config_amplitude(configuration, delta, source, geometry, use_envelope))
	value = amplitude.real ** 2 + amplitude.imag ** 2
	return value if value.ndim else float(value)


def gm_product(
	configuration: SlitConfiguration,
	deltas: Sequence[PhaseLike],
	source: SourceState,
	geometry: MaskGeometry,
	use_envelope: bool = False,
) -> PhaseLike:
	"""M-th order correlation G^(M)_S(δ_1..δ_M) = Π_i G^(1)_S(δ_i).

	A postselected Fock state of m photons has no correlations above order m,
	so the product is replaced by zero there.
	"""

	order = len(deltas)
	if order < 1:
		raise ValueError("Correlation order M must be at least 1")
	result = None
	for delta in deltas:
		factor = np.asarray(g1(configuration, delta, source, geometry, use_envelope))
		result = factor if result is None else result * factor
	if source.kind == "fock" and order > (source.photon_number or 0):
		result = np.zeros_like(result)
	return result if result.ndim else float(result)
