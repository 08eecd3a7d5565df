"""Exception types shared across tmkit.

Every error carries a stable ``code`` string so that callers (and the CLI)
can branch on it without parsing messages.
"""

from __future__ import annotations


class TMError(Exception):
    code = "TM_ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.message = message

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class PathNotFound(TMError):
    code = "PATH_NOT_FOUND"

    def __init__(self, path: str, prefix: str, detail: str = ""):
        msg = f"cannot resolve {path!r} (longest resolvable prefix {prefix!r})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.path = path
        self.prefix = prefix


class InvalidModel(TMError):
    """Raised by operations that require a model passing ``validate``."""

    code = "INVALID_MODEL"

    def __init__(self, report):
        first = report.violations[0] if report.violations else None
        msg = f"model has {len(report.violations)} violation(s)"
        if first is not None:
            msg += f"; first: {first.code} at {first.location}"
        super().__init__(msg)
        self.report = report


class EventError(TMError):
    code = "EVENT_ERROR"


class SimulationError(TMError):
    code = "SIMULATION_ERROR"


class ExportError(TMError):
    code = "EXPORT_ERROR"
