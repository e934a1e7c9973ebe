"""Shared diagnostic record used by parsing and validation."""
from __future__ import annotations

import enum
from dataclasses import dataclass


class Severity(str, enum.Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """One finding, addressed by a slash-delimited path into the source doc."""

    severity: Severity
    path: str
    message: str
    code: str = ""

    def format(self) -> str:
        return f"{self.severity.value} {self.path} {self.message}"


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.severity is Severity.ERROR for d in diagnostics)
