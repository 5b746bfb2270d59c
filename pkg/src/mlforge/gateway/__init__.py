"""HTTP facade: everything the CLI and web dashboard can do, under /v1."""

from mlforge.gateway.app import create_app

__all__ = ["create_app"]
