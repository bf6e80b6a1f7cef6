"""HTTP facade over the synthesis engine."""
from .app import create_app

__all__ = ["create_app"]
