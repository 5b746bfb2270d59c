"""Command-line client for the /v1 gateway."""
