from .app import create_app
from .config import ServiceConfig, load_config
from .store import NotFound, Store

__all__ = ["create_app", "ServiceConfig", "load_config", "Store", "NotFound"]
