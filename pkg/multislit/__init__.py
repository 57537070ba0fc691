"""Command-line factory for the multislit toolkit."""

from __future__ import annotations

import logging

import click

from config import Config


def create_cli() -> click.Group:
	"""Create and configure the command group."""

	logging.basicConfig(
		level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
		format="%(asctime)s %(levelname)s %(name)s: %(message)s",
	)

	@click.group(help="Higher-order interference in multi-slit experiments: theory, simulation, analysis.")
	def cli() -> None:
		pass

	from .commands import COMMANDS

	for command in COMMANDS:
		cli.add_command(command)

	return cli
