"""Reference-free quality estimation behind a small HTTP service.

Implements POST /score, POST /embed and GET /meta with compact JSON
bodies; non-2xx responses carry {"error": string}.
"""

from .app import create_app
from .config import ServiceConfig
from .models import load_model

__all__ = ["ServiceConfig", "create_app", "load_model"]
