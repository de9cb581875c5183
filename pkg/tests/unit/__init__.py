"""Unit tests, one module per varjet module."""
