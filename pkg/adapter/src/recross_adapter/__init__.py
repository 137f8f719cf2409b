"""Reference model backend: a small real encoder-decoder behind the HTTP protocol."""

__version__ = "0.1.0"

from .server import create_app
from .service import AdapterService

__all__ = ["AdapterService", "create_app", "__version__"]
