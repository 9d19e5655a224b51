"""Pydantic and dataclass models shared across the services."""
