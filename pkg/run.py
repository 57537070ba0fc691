"""Entrypoint for running the multislit toolkit locally."""

from __future__ import annotations

from multislit import create_cli


cli = create_cli()


if __name__ == "__main__":
	cli()
