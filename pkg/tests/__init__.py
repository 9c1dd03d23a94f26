"""Tests for Edge Squeeze."""
