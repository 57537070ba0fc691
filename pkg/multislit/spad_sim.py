"""Monte Carlo model of the photon-counting chain (fiber splitter onto two SPADs)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .optics import MaskGeometry, SlitConfiguration, SourceState, g1


logger = logging.getLogger(__name__)

PS_PER_S: int = 1_000_000_000_000
CHANNELS: Tuple[int, int] = (1, 2)

SeedLike = Union[int, Sequence[int], np.random.SeedSequence, np.random.Generator, None]


def make_rng(seed: SeedLike) -> np.random.Generator:
	"""Generator from an int, an entropy tuple, a SeedSequence or an existing Generator."""

	if isinstance(seed, np.random.Generator):
		return seed
	if isinstance(seed, np.random.SeedSequence):
		return np.random.default_rng(seed)
	if seed is None:
		return np.random.default_rng()
	if isinstance(seed, (int, np.integer)):
		return np.random.default_rng(np.random.SeedSequence(int(seed)))
	return np.random.default_rng(np.random.SeedSequence([int(s) for s in seed]))


def derive_seed(*keys: int) -> int:
	"""Stable 63-bit seed from an entropy tuple such as (master, set, entry, tag)."""

	state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0]
	return int(state >> np.uint64(1))


def child_seeds(seed: SeedLike, count: int) -> list:
	"""Independent child seed sequences derived from ``seed``."""

	if isinstance(seed, np.random.Generator):
		return [np.random.SeedSequence(int(x)) for x in seed.integers(0, 2**63 - 1, size=count)]
	if isinstance(seed, np.random.SeedSequence):
		return seed.spawn(count)
	if isinstance(seed, (int, np.integer)) or seed is None:
		return np.random.SeedSequence(seed if seed is None else int(seed)).spawn(count)
	return np.random.SeedSequence([int(s) for s in seed]).spawn(count)


@dataclass(frozen=True)
class SpadModel:
	"""Single-photon avalanche diode: efficiency, dead time, dark counts, jitter."""

	efficiency: float = 0.40
	dead_time_ps: float = 77.0
	dark_rate_hz: float = 25.0
	jitter_ps: float = 45.0

	def __post_init__(self) -> None:
		if not 0.0 <= self.efficiency <= 1.0:
			raise ValueError("SPAD efficiency must lie in [0, 1]")
		if self.dead_time_ps < 0 or self.dark_rate_hz < 0 or self.jitter_ps < 0:
			raise ValueError("SPAD dead time, dark rate and jitter must be non-negative")


@dataclass(frozen=True)
class RunPlan:
	"""One photon-counting acquisition of a slit configuration."""

	configuration: SlitConfiguration
	phase: float = 0.0
	duration_s: float = 120.0
	base_rate_hz: float = 1e5
	seed: SeedLike = 0

	def __post_init__(self) -> None:
		if not self.duration_s > 0:
			raise ValueError("Acquisition time T must be positive")
		if not self.base_rate_hz > 0:
			raise ValueError("Base rate R0 must be positive")

	@property
	def duration_ps(self) -> int:
		return int(round(self.duration_s * PS_PER_S))


@dataclass
class TimeTagStream:
	"""Timestamp-sorted detector events (channel, picoseconds from run start)."""

	channels: np.ndarray = field(repr=False)
	timestamps: np.ndarray = field(repr=False)
	duration_ps: int = 0

	def __post_init__(self) -> None:
		self.channels = np.asarray(self.channels, dtype=np.uint8)
		self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
		if self.channels.shape != self.timestamps.shape:
			raise ValueError("Channels and timestamps must have the same length")
		if self.timestamps.size and self.timestamps.min() < 0:
			raise ValueError("Timestamps must be non-negative")
		if self.timestamps.size > 1 and np.any(np.diff(self.timestamps) < 0):
			raise ValueError("Time tags must be sorted by timestamp")

	@classmethod
	def merge(cls, streams: Dict[int, np.ndarray], duration_ps: int) -> "TimeTagStream":
		"""Interleave per-channel sorted timestamps into one sorted record stream."""

		channels = np.concatenate([np.full(len(ts), ch, dtype=np.uint8) for ch, ts in streams.items()])
		timestamps = np.concatenate([np.asarray(ts, dtype=np.int64) for ts in streams.values()])
		order = np.lexsort((channels, timestamps))
		return cls(channels[order], timestamps[order], duration_ps)

	def channel(self, channel: int) -> np.ndarray:
		return self.timestamps[self.channels == channel]

	def split(self) -> Tuple[np.ndarray, np.ndarray]:
		return self.channel(CHANNELS[0]), self.channel(CHANNELS[1])

	def __len__(self) -> int:
		return int(self.timestamps.size)


def simulate_poisson_stream(rate_hz: float, duration_s: float, seed: SeedLike) -> np.ndarray:
	"""Homogeneous Poisson process on [0, T) as sorted integer picoseconds."""

	if rate_hz < 0:
		raise ValueError("Rate must be non-negative")
	rng = make_rng(seed)
	duration_ps = int(round(duration_s * PS_PER_S))
	count = rng.poisson(rate_hz * duration_s) if rate_hz > 0 else 0
	if count == 0:
		return np.empty(0, dtype=np.int64)
	times = np.floor(rng.random(count) * duration_ps).astype(np.int64)
	times.sort()
	return times


def dead_time_filter(timestamps: np.ndarray, dead_time_ps: float) -> np.ndarray:
	"""Non-paralyzable dead time: drop events less than τ after the last kept event."""

	if timestamps.size < 2 or dead_time_ps <= 0:
		return timestamps
	close = np.flatnonzero(np.diff(timestamps) < dead_time_ps) + 1
	if close.size == 0:
		return timestamps
	keep = np.ones(timestamps.size, dtype=bool)
	# events outside `close` are always kept; walk only the close ones
	reference: Dict[int, int] = {}
	for i in close:
		ref = timestamps[i - 1] if keep[i - 1] else reference[i - 1]
		if timestamps[i] - ref < dead_time_ps:
			keep[i] = False
			reference[i] = ref
	return timestamps[keep]


def apply_spad_model(timestamps: np.ndarray, model: SpadModel, duration_s: float, seed: SeedLike) -> np.ndarray:
	"""Detection chain: efficiency thinning, dark counts, Gaussian jitter, dead time."""

	stream = np.asarray(timestamps, dtype=np.int64)
	if stream.size > 1 and np.any(np.diff(stream) < 0):
		raise ValueError("Input stream must be sorted")
	thin_seed, dark_seed, jitter_seed = child_seeds(seed, 3)
	detected = stream[make_rng(thin_seed).random(stream.size) < model.efficiency]
	dark = simulate_poisson_stream(model.dark_rate_hz, duration_s, dark_seed)
	merged = np.concatenate([detected, dark])
	if model.jitter_ps > 0 and merged.size:
		noise = make_rng(jitter_seed).normal(0.0, model.jitter_ps, merged.size)
		merged = np.maximum(merged + np.rint(noise).astype(np.int64), 0)
	merged.sort()
	return dead_time_filter(merged, model.dead_time_ps)


def relative_rate(
	configuration: SlitConfiguration,
	phase: float,
	source: SourceState,
	geometry: MaskGeometry,
	use_envelope: bool = False,
	reference: Optional[SourceState] = None,
) -> float:
	"""Ḡ^(1)_X(δ): G^(1) normalized to 1 for all slits open at δ = 0."""

	if configuration.is_empty:
		return 0.0
	norm_source = reference if reference is not None else source
	brightest = g1(SlitConfiguration.prefix(norm_source.n_slits), 0.0, norm_source, geometry, use_envelope)
	return float(g1(configuration, phase, source, geometry, use_envelope)) / float(brightest)


def simulate_config_run(
	plan: RunPlan,
	source: SourceState,
	geometry: MaskGeometry,
	detectors: Tuple[SpadModel, SpadModel],
	intensity_scale: float = 1.0,
	use_envelope: bool = False,
	reference: Optional[SourceState] = None,
) -> Tuple[np.ndarray, np.ndarray]:
	"""Photon stream at rate R0·Ḡ^(1)_X(δ) split 50:50 onto two independent SPADs.

	``reference`` is the unperturbed source the rate is normalized to; it
	defaults to ``source``. Coincidences between the two returned channels
	arise from independent detections, which is exact for coherent light.
	"""

	config = plan.configuration
	if config.highest_index >= source.n_slits:
		raise ValueError(f"Unknown configuration '{config.label}' for a {source.n_slits}-slit mask")
	if intensity_scale < 0:
		raise ValueError("Intensity scale must be non-negative")
	rate = plan.base_rate_hz * intensity_scale * relative_rate(config, plan.phase, source, geometry, use_envelope, reference)

	photon_seed, split_seed, first_seed, second_seed = child_seeds(plan.seed, 4)
	photons = simulate_poisson_stream(rate, plan.duration_s, photon_seed)
	to_first = make_rng(split_seed).random(photons.size) < 0.5
	first = apply_spad_model(photons[to_first], detectors[0], plan.duration_s, first_seed)
	second = apply_spad_model(photons[~to_first], detectors[1], plan.duration_s, second_seed)
	logger.debug("Run %s: rate %.1f Hz, %d / %d detections", config.label, rate, first.size, second.size)
	return first, second


def expected_coincidences(rate_1: float, rate_2: float, window_ps: float, duration_s: float) -> float:
	"""Accidental coincidences r1·r2·2t_f·T of two independent streams."""

	return rate_1 * rate_2 * 2.0 * window_ps / PS_PER_S * duration_s


def measured_rate(true_rate_hz: float, dead_time_ps: float) -> float:
	"""Non-paralyzable detector response r/(1 + r·τ)."""

	tau = dead_time_ps / PS_PER_S
	return true_rate_hz / (1.0 + true_rate_hz * tau)


def dead_time_corrected_rate(measured_rate_hz: float, dead_time_ps: float) -> float:
	"""Inverse of the non-paralyzable response, m/(1 − m·τ)."""

	tau = dead_time_ps / PS_PER_S
	if measured_rate_hz * tau >= 1.0:
		raise ValueError("Measured rate saturates the detector")
	return measured_rate_hz / (1.0 - measured_rate_hz * tau)
