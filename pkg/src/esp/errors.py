"""Platform error type carrying a stable machine-readable code."""

from __future__ import annotations

from typing import Any


class EspError(Exception):
    """Operation failure with a stable code, a human message, and details.

    Codes are part of the wire contract: the HTTP layer maps them onto status
    codes and the uniform ``{code, message, details}`` envelope, the CLI maps
    them onto exit code 1.
    """

    def __init__(self, code: str, message: str, details: dict[str, Any] | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.details: dict[str, Any] = details or {}

    def envelope(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "details": self.details}
