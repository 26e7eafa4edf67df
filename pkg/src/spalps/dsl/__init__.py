"""Text front end: parsing, rendering and validation of ``.palps`` models."""

from .diagnostics import ERROR, WARNING, Diagnostic, ModelError, ParseError
from .parser import parse, parse_file
from .render import render
from .validate import ValidatedModel, check, validate

__all__ = [
    "ERROR",
    "WARNING",
    "Diagnostic",
    "ModelError",
    "ParseError",
    "ValidatedModel",
    "check",
    "parse",
    "parse_file",
    "render",
    "validate",
]
