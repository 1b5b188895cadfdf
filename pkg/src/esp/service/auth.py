"""Static user table and bearer-token authentication.

Users come from a JSON file loaded at startup: a list of
``{"user_id", "name", "role", "token"}`` objects. Roles: SUPERUSER (may
see and manage workbook internals), ENDUSER (submits jobs, reads own
results), ADMIN (reads audit, manages the user file out of band; may not
upload models or submit jobs).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import EspError
from ..store import ROLES, Actor


class AuthenticationError(EspError):
    """Missing or unknown token (401, as opposed to a 403 role failure)."""

    def __init__(self, message: str):
        super().__init__("AUTH", message)


@dataclass(frozen=True)
class User:
    user_id: str
    name: str
    role: str
    token: str

    @property
    def actor(self) -> Actor:
        return Actor(self.user_id, self.role)

    def to_json(self) -> dict:
        return {"user_id": self.user_id, "name": self.name, "role": self.role}


def load_users(path: str | Path) -> dict[str, User]:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise EspError("NOT_FOUND", f"users file {path!r} not found") from exc
    except ValueError as exc:
        raise EspError("FORMAT", f"users file is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise EspError("FORMAT", "users file must hold a JSON list")
    users: dict[str, User] = {}
    seen_ids: set[str] = set()
    for entry in doc:
        if not isinstance(entry, dict):
            raise EspError("FORMAT", "user entries must be objects")
        user_id = entry.get("user_id")
        role = entry.get("role")
        token = entry.get("token")
        name = entry.get("name", user_id)
        if not all(isinstance(x, str) and x for x in (user_id, role, token)):
            raise EspError("FORMAT", "user entries need user_id, role, and token")
        if role not in ROLES:
            raise EspError("SCHEMA", f"user {user_id!r}: role must be one of {ROLES}")
        if token in users:
            raise EspError("SCHEMA", f"duplicate token (user {user_id!r})")
        if user_id in seen_ids:
            raise EspError("SCHEMA", f"duplicate user_id {user_id!r}")
        seen_ids.add(user_id)
        users[token] = User(user_id, name, role, token)
    return users


def authenticate(users: dict[str, User], authorization: str | None) -> User:
    if not authorization or not authorization.startswith("Bearer "):
        raise AuthenticationError("missing bearer token")
    token = authorization[len("Bearer "):]
    user = users.get(token)
    if user is None:
        raise AuthenticationError("unknown token")
    return user
