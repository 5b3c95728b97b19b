"""FastAPI service exposing the codec; the CLI is a thin client over it."""

from .app import app

__all__ = ["app"]
