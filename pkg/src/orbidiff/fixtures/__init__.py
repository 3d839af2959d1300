"""Bundled scenario fixtures."""
