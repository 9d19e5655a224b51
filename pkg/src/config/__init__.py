"""Configuration management for fairwatch."""
