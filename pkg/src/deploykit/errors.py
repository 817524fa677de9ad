"""Exception types shared across the runtime."""

from __future__ import annotations


class ScriptError(RuntimeError):
    """An uncaught exception raised while executing script code.

    ``frames`` holds ``(module, line)`` pairs, innermost first.
    """

    kind = "Error"

    def __init__(self, message: str, kind: str | None = None):
        super().__init__(message)
        self.message = message
        if kind is not None:
            self.kind = kind
        self.frames: list[tuple[str, int]] = []
        # line of the innermost statement not yet attributed to a frame
        self.pending_line: int | None = None

    def add_frame(self, module: str, line: int | None) -> None:
        self.frames.append((module, line if line is not None else 0))
        self.pending_line = None

    def format_traceback(self) -> str:
        lines = ["Script traceback (most recent call last):"]
        for module, line in reversed(self.frames):
            lines.append(f"  module {module!r}, line {line}")
        lines.append(f"{self.kind}: {self.message}")
        return "\n".join(lines)

    def __str__(self) -> str:
        if not self.frames:
            return f"{self.kind}: {self.message}"
        return self.format_traceback()


class ScriptTypeError(ScriptError, TypeError):
    kind = "TypeError"


class ScriptImportError(ScriptError, ImportError):
    kind = "ImportError"


class ScriptAttributeError(ScriptError, AttributeError):
    kind = "AttributeError"


class MockUsedError(ScriptError):
    """A mocked module attribute was used (called, operated on, ...)."""

    kind = "MockUsedError"

    def __init__(self, path: str, action: str = "used"):
        super().__init__(f"mocked object {path!r} {action}; its module was mocked out at export")
        self.path = path


class ScriptSyntaxError(SyntaxError):
    def __init__(self, message: str, module: str, line: int, column: int, token: str):
        super().__init__(f"{message} at {module}:{line}:{column} near {token!r}")
        self.module = module
        self.lineno = line
        self.offset = column
        self.token = token


class ShapeError(ValueError):
    pass


class UseAfterFree(RuntimeError):
    pass


class PickleError(Exception):
    pass


class UnpicklableError(PickleError, TypeError):
    pass


class ClassNotFoundError(PickleError, LookupError):
    pass


class FormatError(ValueError):
    pass


class PatternError(ValueError):
    pass


class DependencyError(Exception):
    """One or more modules needed by the package could not be resolved.

    ``failures`` is a list of requirement chains, each a list of strings
    ordered from the missing module outwards.
    """

    def __init__(self, failures: list[list[str]]):
        self.failures = failures
        lines = [" <- ".join(chain) for chain in failures]
        super().__init__("unresolvable dependencies:\n  " + "\n  ".join(lines))


class ConfigError(ValueError):
    pass


class ShutdownError(RuntimeError):
    pass


class StaleHandleError(RuntimeError):
    pass
