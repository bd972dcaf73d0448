"""Shared exception types for the toolkit."""

from __future__ import annotations


class EvalError(Exception):
    """Base class for all toolkit errors."""


class RegionError(EvalError, ValueError):
    """Malformed, degenerate, or otherwise invalid region."""


class FormatError(EvalError, ValueError):
    """Bad on-disk data; names the file and line when known."""

    def __init__(self, message: str, *, file: object = None, line: int | None = None):
        self.file = str(file) if file is not None else None
        self.line = line
        prefix = ""
        if self.file is not None:
            prefix = self.file if line is None else f"{self.file}:{line}"
            prefix += ": "
        super().__init__(prefix + message)


class ParameterError(EvalError, ValueError):
    """Out-of-range or inconsistent parameter values."""


class ContractError(EvalError, ValueError):
    """Caller violated an API contract (shape, symmetry, alignment)."""


class ConfigError(EvalError, ValueError):
    """Bad workspace configuration; names the file and key when known."""

    def __init__(self, message: str, *, file: object = None, key: str | None = None):
        self.file = str(file) if file is not None else None
        self.key = key
        parts = []
        if self.file is not None:
            parts.append(self.file)
        if key is not None:
            parts.append(f"key {key!r}")
        prefix = ": ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ProtocolError(EvalError, RuntimeError):
    """Tracker spoke the wire protocol incorrectly."""


class TrackerTimeoutError(EvalError, RuntimeError):
    """Tracker failed to reply within the per-frame time budget."""


class TrackerCrashError(EvalError, RuntimeError):
    """Tracker process exited or closed its pipes mid-session."""
