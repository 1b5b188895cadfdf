"""Versioned model repository, lifecycle gate, and tamper-evident audit."""

from .audit import ACTIONS, AuditLog, AuditRecord
from .store import (
    ADMIN,
    ENDUSER,
    ROLES,
    SUPERUSER,
    Actor,
    ModelStore,
    ModelVersion,
    RunArchive,
    StandardTest,
    TestOutcome,
    TestReport,
    parse_standard_test,
)

__all__ = [
    "ACTIONS",
    "ADMIN",
    "ENDUSER",
    "ROLES",
    "SUPERUSER",
    "Actor",
    "AuditLog",
    "AuditRecord",
    "ModelStore",
    "ModelVersion",
    "RunArchive",
    "StandardTest",
    "TestOutcome",
    "TestReport",
    "parse_standard_test",
]
