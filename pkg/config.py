"""Application configuration module."""

from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Optional, Union

from dotenv import dotenv_values, load_dotenv


BASE_DIR = Path(__file__).resolve().parent

# Load environment variables from the .env file located at the project root.
load_dotenv(BASE_DIR / ".env")


class Config:
	"""Base configuration loaded from environment variables."""

	OUTPUT_DIR: str = os.getenv("MULTISLIT_OUTPUT_DIR", "results")
	LOG_LEVEL: str = os.getenv("MULTISLIT_LOG_LEVEL", "INFO").upper()
	WORKERS: int = int(os.getenv("MULTISLIT_WORKERS", "1") or "1")
	CONFIG_FILE: str = os.getenv("MULTISLIT_CONFIG_FILE", "")

	@classmethod
	def experiment_file(cls, path: Optional[Union[str, Path]] = None) -> Optional[Path]:
		"""Explicit experiment file, else the one named by MULTISLIT_CONFIG_FILE."""

		chosen = path or cls.CONFIG_FILE
		if not chosen:
			return None
		candidate = Path(chosen)
		return candidate if candidate.is_absolute() else Path.cwd() / candidate

	@classmethod
	def experiment_options(cls, path: Optional[Union[str, Path]] = None) -> Dict[str, Optional[str]]:
		"""Return the raw KEY=value options of the experiment file as a dictionary."""

		target = cls.experiment_file(path)
		if target is None:
			return {}
		if not target.is_file():
			raise FileNotFoundError(f"Experiment configuration '{target}' not found")
		return dict(dotenv_values(target))
