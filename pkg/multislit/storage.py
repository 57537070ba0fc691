"""File formats: time-tag and frame files, GTable text files, result tables and summaries."""

from __future__ import annotations

import csv
import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from dotenv import dotenv_values

from .ccd_sim import FrameStack
from .hierarchy import GTable
from .optics import PhaseGrid, SlitConfiguration
from .spad_sim import TimeTagStream


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TTAG_MAGIC: bytes = b"TTAG"
TTAG_VERSION: int = 1
TTAG_HEADER = struct.Struct("<4sHQQ")
TTAG_RECORD = np.dtype([("channel", "u1"), ("timestamp", "<u8")])

FRAM_MAGIC: bytes = b"FRAM"
FRAM_VERSION: int = 1
FRAM_HEADER = struct.Struct("<4sHIII")
FRAM_LABEL = struct.Struct("<H")
FRAM_SEED = struct.Struct("<Q")


class FormatError(ValueError):
	"""Malformed data file."""

	def __init__(self, path: PathLike, reason: str) -> None:
		self.path = Path(path)
		super().__init__(f"{self.path}: {reason}")


def format_float(value: float) -> str:
	"""Decimal text with 17 significant digits."""

	return format(float(value), ".17g")


def _read_bytes(path: PathLike) -> bytes:
	try:
		return Path(path).read_bytes()
	except OSError as exc:
		logger.error("Unable to read '%s': %s", path, exc)
		raise


def _write_bytes(path: PathLike, payload: bytes) -> None:
	target = Path(path)
	try:
		target.parent.mkdir(parents=True, exist_ok=True)
		target.write_bytes(payload)
	except OSError as exc:
		logger.error("Unable to write '%s': %s", target, exc)
		raise


def _write_text(path: PathLike, text: str) -> None:
	_write_bytes(path, text.encode("utf-8"))


# -- time tags -----------------------------------------------------------------

def write_time_tags(path: PathLike, stream: TimeTagStream) -> None:
	"""Header (magic, version, duration_ps, count) and packed 9-byte records."""

	records = np.empty(len(stream), dtype=TTAG_RECORD)
	records["channel"] = stream.channels
	records["timestamp"] = stream.timestamps.astype(np.uint64)
	header = TTAG_HEADER.pack(TTAG_MAGIC, TTAG_VERSION, int(stream.duration_ps), len(stream))
	_write_bytes(path, header + records.tobytes())


def read_time_tags(path: PathLike) -> TimeTagStream:
	payload = _read_bytes(path)
	if len(payload) < TTAG_HEADER.size:
		raise FormatError(path, "file shorter than the time-tag header")
	magic, version, duration_ps, count = TTAG_HEADER.unpack_from(payload)
	if magic != TTAG_MAGIC:
		raise FormatError(path, f"bad magic {magic!r}")
	if version != TTAG_VERSION:
		raise FormatError(path, f"unsupported time-tag version {version}")
	body = payload[TTAG_HEADER.size:]
	if len(body) != count * TTAG_RECORD.itemsize:
		raise FormatError(path, f"expected {count} records, found {len(body)} bytes")
	records = np.frombuffer(body, dtype=TTAG_RECORD, count=count)
	if np.any((records["channel"] != 1) & (records["channel"] != 2)):
		raise FormatError(path, "channel numbers must be 1 or 2")
	try:
		return TimeTagStream(records["channel"].copy(), records["timestamp"].astype(np.int64), int(duration_ps))
	except ValueError as exc:
		raise FormatError(path, str(exc)) from exc


# -- frames --------------------------------------------------------------------

def _sidecar(path: PathLike) -> Path:
	return Path(path).with_suffix(".meta")


def write_frames(path: PathLike, stack: FrameStack, metadata: Optional[Mapping[str, Any]] = None) -> None:
	"""Frame file plus a ``.meta`` sidecar of KEY=value lines."""

	n_frames, height, width = stack.frames.shape
	label = stack.label.encode("utf-8")
	header = (
		FRAM_HEADER.pack(FRAM_MAGIC, FRAM_VERSION, width, height, n_frames)
		+ FRAM_LABEL.pack(len(label))
		+ label
		+ FRAM_SEED.pack(int(stack.seed))
	)
	pixels = np.clip(stack.frames, 0, 0xFFFF).astype("<u2").tobytes()
	_write_bytes(path, header + pixels)
	lines = [f"LABEL={stack.label}", f"INTEGRATION_TIME={format_float(stack.integration_time)}"]
	if stack.window is not None:
		w = stack.window
		lines.append(f"CROP={w.row_start},{w.row_stop},{w.col_start},{w.col_stop}")
	for key, value in (metadata or {}).items():
		text = format_float(value) if isinstance(value, float) else str(value)
		lines.append(f"{key.upper()}={text}")
	_write_text(_sidecar(path), "\n".join(lines) + "\n")


def read_frames(path: PathLike) -> Tuple[FrameStack, Dict[str, Optional[str]]]:
	payload = _read_bytes(path)
	if len(payload) < FRAM_HEADER.size + FRAM_LABEL.size:
		raise FormatError(path, "file shorter than the frame header")
	magic, version, width, height, n_frames = FRAM_HEADER.unpack_from(payload)
	if magic != FRAM_MAGIC:
		raise FormatError(path, f"bad magic {magic!r}")
	if version != FRAM_VERSION:
		raise FormatError(path, f"unsupported frame version {version}")
	offset = FRAM_HEADER.size
	(label_length,) = FRAM_LABEL.unpack_from(payload, offset)
	offset += FRAM_LABEL.size
	try:
		label = payload[offset:offset + label_length].decode("utf-8")
	except UnicodeDecodeError as exc:
		raise FormatError(path, f"frame label is not UTF-8 ({exc.reason})") from exc
	offset += label_length
	if len(payload) < offset + FRAM_SEED.size:
		raise FormatError(path, "truncated frame header")
	(seed,) = FRAM_SEED.unpack_from(payload, offset)
	offset += FRAM_SEED.size
	expected = n_frames * height * width * 2
	if len(payload) - offset != expected:
		raise FormatError(path, f"expected {expected} pixel bytes, found {len(payload) - offset}")
	frames = np.frombuffer(payload, dtype="<u2", offset=offset).reshape(n_frames, height, width).copy()
	metadata: Dict[str, Optional[str]] = {}
	sidecar = _sidecar(path)
	if sidecar.exists():
		metadata = dict(dotenv_values(sidecar))
	integration_time = float(metadata.get("INTEGRATION_TIME") or 2e-3)
	return FrameStack(frames, label=label, integration_time=integration_time, seed=int(seed)), metadata


# -- correlation tables --------------------------------------------------------

def write_gtable(path: PathLike, table: GTable) -> None:
	"""``order``, ``grid`` and one row per configuration; floats via repr."""

	lines = [f"order {table.order}", "grid " + " ".join(repr(float(x)) for x in table.grid.values)]
	for config in table.configurations():
		lines.append(config.label + " " + " ".join(repr(float(x)) for x in table.get(config)))
	if table.sigmas is not None:
		for config in table.configurations():
			lines.append("sigma " + config.label + " " + " ".join(repr(float(x)) for x in table.sigma(config)))
	_write_text(path, "\n".join(lines) + "\n")


def read_gtable(path: PathLike) -> GTable:
	try:
		text = Path(path).read_text(encoding="utf-8")
	except OSError as exc:
		logger.error("Unable to read '%s': %s", path, exc)
		raise
	order: Optional[int] = None
	grid: Optional[PhaseGrid] = None
	values: Dict[SlitConfiguration, np.ndarray] = {}
	sigmas: Dict[SlitConfiguration, np.ndarray] = {}
	for number, line in enumerate(text.splitlines(), start=1):
		parts = line.split()
		if not parts or parts[0].startswith("#"):
			continue
		try:
			if parts[0] == "order":
				order = int(parts[1])
			elif parts[0] == "grid":
				grid = PhaseGrid(np.array([float(x) for x in parts[1:]]))
			elif parts[0] == "sigma":
				sigmas[SlitConfiguration.from_label(parts[1])] = np.array([float(x) for x in parts[2:]])
			else:
				values[SlitConfiguration.from_label(parts[0])] = np.array([float(x) for x in parts[1:]])
		except (IndexError, ValueError) as exc:
			raise FormatError(path, f"line {number}: {exc}") from exc
	if order is None or grid is None:
		raise FormatError(path, "missing 'order' or 'grid' header")
	try:
		return GTable(order, grid, values, sigmas or None)
	except ValueError as exc:
		raise FormatError(path, str(exc)) from exc


# -- results -------------------------------------------------------------------

def _cell(value: Any) -> str:
	if isinstance(value, (float, np.floating)):
		return format_float(value)
	return str(value)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
	target = Path(path)
	try:
		target.parent.mkdir(parents=True, exist_ok=True)
		with target.open("w", newline="", encoding="utf-8") as handle:
			writer = csv.writer(handle)
			writer.writerow(header)
			for row in rows:
				writer.writerow([_cell(value) for value in row])
	except OSError as exc:
		logger.error("Unable to write '%s': %s", target, exc)
		raise


def read_csv(path: PathLike) -> List[Dict[str, str]]:
	try:
		with Path(path).open(newline="", encoding="utf-8") as handle:
			return list(csv.DictReader(handle))
	except OSError as exc:
		logger.error("Unable to read '%s': %s", path, exc)
		raise


def write_summary(path: PathLike, summary: Mapping[str, Any]) -> None:
	_write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")


def read_summary(path: PathLike) -> Dict[str, Any]:
	try:
		return json.loads(Path(path).read_text(encoding="utf-8"))
	except OSError as exc:
		logger.error("Unable to read '%s': %s", path, exc)
		raise
	except json.JSONDecodeError as exc:
		raise FormatError(path, f"invalid summary document: {exc}") from exc
