from .app import create_app
from .store import ProjectStore

__all__ = ["ProjectStore", "create_app"]
