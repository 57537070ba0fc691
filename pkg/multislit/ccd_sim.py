"""Monte Carlo model of the intensity chain: far-field images and 14-bit CCD frames."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple

import numpy as np

from .optics import MaskGeometry, SlitConfiguration, SourceState, g1, phase_at_pixel
from .spad_sim import SeedLike, child_seeds, make_rng


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CcdModel:
	"""Camera parameters; noise terms are in electrons, offsets in counts."""

	width: int = 1392
	height: int = 1040
	pixel_size: float = 6.45e-6
	bit_depth: int = 14
	quantum_efficiency: float = 0.40
	read_noise: float = 5.0
	gain: float = 1.0
	dark_offset: float = 20.0
	integration_time: float = 2e-3

	def __post_init__(self) -> None:
		if self.width < 1 or self.height < 1:
			raise ValueError("Sensor dimensions must be positive")
		if not 1 <= self.bit_depth <= 16:
			raise ValueError("Bit depth must lie between 1 and 16")
		if not 0.0 <= self.quantum_efficiency <= 1.0:
			raise ValueError("Quantum efficiency must lie in [0, 1]")
		if self.read_noise < 0 or self.dark_offset < 0 or not self.gain > 0 or not self.integration_time > 0:
			raise ValueError("Noise parameters must be non-negative, gain and integration time positive")

	@property
	def max_count(self) -> int:
		return (1 << self.bit_depth) - 1

	@property
	def center_column(self) -> int:
		return self.width // 2


@dataclass(frozen=True)
class CropWindow:
	"""Half-open row and column bounds of the evaluated sensor region."""

	row_start: int
	row_stop: int
	col_start: int
	col_stop: int

	@property
	def rows(self) -> int:
		return self.row_stop - self.row_start

	@property
	def cols(self) -> int:
		return self.col_stop - self.col_start

	def validate(self, height: int, width: int) -> None:
		if not (0 <= self.row_start < self.row_stop <= height and 0 <= self.col_start < self.col_stop <= width):
			raise ValueError(f"Crop window {self} lies outside the {height}x{width} frame")


@dataclass
class FrameStack:
	"""Stack of quantized frames with acquisition metadata."""

	frames: np.ndarray = field(repr=False)
	label: str = ""
	integration_time: float = 2e-3
	window: Optional[CropWindow] = None
	seed: int = 0

	def __post_init__(self) -> None:
		self.frames = np.asarray(self.frames)
		if self.frames.ndim != 3:
			raise ValueError("A frame stack is a (frames, rows, columns) array")

	def __len__(self) -> int:
		return int(self.frames.shape[0])

	@property
	def shape(self) -> Tuple[int, int]:
		return int(self.frames.shape[1]), int(self.frames.shape[2])


def default_window(geometry: MaskGeometry, ccd: CcdModel, rows: int = 850, max_phase: float = 3 * math.pi) -> CropWindow:
	"""Columns with |δ_p| ≤ ``max_phase`` around the central column and a centered block of rows."""

	if not 1 <= rows <= ccd.height:
		raise ValueError(f"Cannot crop {rows} rows from a {ccd.height}-row sensor")
	columns = np.arange(ccd.width) - ccd.center_column
	phases = np.asarray(phase_at_pixel(columns, geometry, ccd.pixel_size))
	inside = np.flatnonzero(np.abs(phases) <= max_phase + 1e-12)
	row_start = (ccd.height - rows) // 2
	return CropWindow(row_start, row_start + rows, int(inside[0]), int(inside[-1]) + 1)


def pixel_phases(geometry: MaskGeometry, ccd: CcdModel, window: CropWindow) -> np.ndarray:
	"""δ_p of each cropped column; the central column sits at δ = 0."""

	window.validate(ccd.height, ccd.width)
	columns = np.arange(window.col_start, window.col_stop) - ccd.center_column
	return np.asarray(phase_at_pixel(columns, geometry, ccd.pixel_size), dtype=float)


def calibrate_exposure(source: SourceState, geometry: MaskGeometry, ccd: CcdModel, headroom: float = 0.9, use_envelope: bool = False) -> float:
	"""Exposure scale placing the all-slits peak at ``headroom`` of the count range."""

	if not 0 < headroom <= 1:
		raise ValueError("Headroom must lie in (0, 1]")
	peak = float(g1(SlitConfiguration.prefix(source.n_slits), 0.0, source, geometry, use_envelope))
	target_electrons = (headroom * ccd.max_count - ccd.dark_offset) * ccd.gain
	return target_electrons / (ccd.quantum_efficiency * ccd.integration_time * peak)


def expected_image(
	configuration: SlitConfiguration,
	source: SourceState,
	geometry: MaskGeometry,
	ccd: CcdModel,
	exposure_scale: float,
	window: Optional[CropWindow] = None,
	use_envelope: bool = False,
) -> np.ndarray:
	"""Mean photoelectrons η·scale·t_i·G^(1)_S(δ_p), flat along the rows of the window."""

	if not exposure_scale > 0:
		raise ValueError("Exposure scale must be positive")
	window = window or CropWindow(0, ccd.height, 0, ccd.width)
	phases = pixel_phases(geometry, ccd, window)
	if configuration.is_empty:
		profile = np.zeros_like(phases)
	else:
		profile = ccd.quantum_efficiency * exposure_scale * ccd.integration_time * np.asarray(
			g1(configuration, phases, source, geometry, use_envelope)
		)
	return np.broadcast_to(profile, (window.rows, window.cols)).copy()


def sample_frame(expected: np.ndarray, ccd: CcdModel, seed: SeedLike) -> np.ndarray:
	"""Shot noise, read noise, gain, offset and 14-bit clipping of one frame."""

	expected = np.asarray(expected, dtype=float)
	if np.any(expected < 0):
		raise ValueError("Expected photoelectrons must be non-negative")
	rng = make_rng(seed)
	electrons = rng.poisson(expected).astype(float)
	if ccd.read_noise > 0:
		electrons += rng.normal(0.0, ccd.read_noise, expected.shape)
	counts = np.rint(electrons / ccd.gain) + ccd.dark_offset
	return np.clip(counts, 0, ccd.max_count).astype(np.uint16)


def iter_frame_chunks(expected: np.ndarray, ccd: CcdModel, n_frames: int, seed: SeedLike, chunk: int = 25) -> Iterator[np.ndarray]:
	"""Frames in chunks; frame ``k`` always uses the ``k``-th derived seed."""

	if n_frames < 1:
		raise ValueError("At least one frame is required")
	seeds = child_seeds(seed, n_frames)
	for start in range(0, n_frames, chunk):
		stop = min(start + chunk, n_frames)
		yield np.stack([sample_frame(expected, ccd, seeds[k]) for k in range(start, stop)])


def sample_stack(
	expected: np.ndarray,
	ccd: CcdModel,
	n_frames: int,
	seed: int,
	label: str = "",
	window: Optional[CropWindow] = None,
) -> FrameStack:
	frames = np.concatenate(list(iter_frame_chunks(expected, ccd, n_frames, seed)))
	return FrameStack(frames, label=label, integration_time=ccd.integration_time, window=window, seed=seed)
