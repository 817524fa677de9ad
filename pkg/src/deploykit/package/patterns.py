"""Dotted module-name patterns (``a.*.c``, ``torch.**``) and module classification."""

from __future__ import annotations

import re
from functools import lru_cache

from ..errors import PatternError

_SEGMENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

EXTERN = "extern"
MOCK = "mock"
INTERN = "intern"


class ModulePattern:
    """Whole-name matcher.  ``*`` is exactly one segment, ``**`` zero or more."""

    __slots__ = ("pattern", "segments")

    def __init__(self, pattern: str):
        if not isinstance(pattern, str) or not pattern:
            raise PatternError(f"empty module pattern {pattern!r}")
        segments = tuple(pattern.split("."))
        for seg in segments:
            if seg not in ("*", "**") and not _SEGMENT.fullmatch(seg):
                raise PatternError(f"invalid segment {seg!r} in module pattern {pattern!r}")
        self.pattern = pattern
        self.segments = segments

    def matches(self, name: str) -> bool:
        return _match(self.segments, tuple(name.split(".")))

    def __repr__(self):
        return f"ModulePattern({self.pattern!r})"


@lru_cache(maxsize=4096)
def _match(pat: tuple[str, ...], parts: tuple[str, ...]) -> bool:
    if not pat:
        return not parts
    head = pat[0]
    if head == "**":
        return any(_match(pat[1:], parts[i:]) for i in range(len(parts) + 1))
    if not parts:
        return False
    if head == "*" or head == parts[0]:
        return _match(pat[1:], parts[1:])
    return False


def compile_patterns(patterns) -> list[ModulePattern]:
    if isinstance(patterns, str):
        patterns = [patterns]
    return [p if isinstance(p, ModulePattern) else ModulePattern(p) for p in patterns]


def classify(name: str, extern_patterns, mock_patterns) -> str:
    """extern beats mock beats intern, whatever order the rules were added in."""
    if any(p.matches(name) for p in extern_patterns):
        return EXTERN
    if any(p.matches(name) for p in mock_patterns):
        return MOCK
    return INTERN
