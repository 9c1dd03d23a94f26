"""Helpers and utilities."""
