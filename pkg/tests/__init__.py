"""Tests for varjet."""
