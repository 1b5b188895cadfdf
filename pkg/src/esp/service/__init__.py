"""HTTP/JSON facade: authentication, endpoint surface, CSV export."""

from .app import create_app, render_result_csv
from .auth import AuthenticationError, User, authenticate, load_users
from .config import ServiceConfig, load_config

__all__ = [
    "AuthenticationError",
    "ServiceConfig",
    "User",
    "authenticate",
    "create_app",
    "load_config",
    "load_users",
    "render_result_csv",
]
