"""Diagnostics reported by the parser and the validator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..model import Span

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    code: str
    message: str
    span: Optional[Span] = None
    path: str = "<string>"

    def format(self) -> str:
        where = f"{self.span.line}:{self.span.col}" if self.span else "1:1"
        return f"{self.path}:{where}: {self.severity}[{self.code}]: {self.message}"

    __str__ = format

    @property
    def is_error(self) -> bool:
        return self.severity == ERROR


class ModelError(Exception):
    """Raised when a model fails to parse or validate."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(d.format() for d in self.diagnostics))


class ParseError(ModelError):
    pass
