"""Tests suite for `nibm`."""
