"""Test suite for fairwatch."""
