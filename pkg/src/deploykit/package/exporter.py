"""Building package archives: pickles plus the source closure they need."""

from __future__ import annotations

import logging
import os
from collections import deque
from dataclasses import dataclass, field

from .. import serde
from ..blobstore import encode_ntb1
from ..errors import DependencyError, ScriptSyntaxError
from ..script.parser import parse_module
from .archive import EXTERN_FILE, MOCKED_FILE, data_path, encode_name_list, source_path, write_archive
from .importer import rewrite_tensor_keys
from .patterns import EXTERN, INTERN, MOCK, classify, compile_patterns

log = logging.getLogger(__name__)

DEFAULT_EXTERN = ("nt",)


@dataclass
class Closure:
    sources: dict[str, str] = field(default_factory=dict)
    extern: set[str] = field(default_factory=set)
    mocked: set[str] = field(default_factory=set)
    # module -> chain of requirement descriptions leading to it
    reasons: dict[str, list[str]] = field(default_factory=dict)
    failures: list[list[str]] = field(default_factory=list)


class _ChainProvider:
    def __init__(self, sources):
        self.sources = [s for s in sources if hasattr(s, "get_source")]

    def get_source(self, name):
        for s in self.sources:
            src = s.get_source(name)
            if src is not None:
                return src
        return None


class PackageExporter:
    """Collects pickles and modules, then writes one archive on :meth:`finalize`.

    ``provider`` maps module names to source text (``get_source``); when
    omitted, the importers are asked instead.  ``importers`` locate the
    classes of pickled instances, in order.
    """

    def __init__(self, path, provider=None, importers=()):
        self.path = os.fspath(path)
        directory = os.path.dirname(os.path.abspath(self.path))
        if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
            raise OSError(f"cannot write package to {self.path!r}")
        self.importers = list(importers)
        self.provider = provider if provider is not None else _ChainProvider(self.importers)
        self._extern_patterns = compile_patterns([f"{m}.**" for m in DEFAULT_EXTERN])
        self._mock_patterns: list = []
        self._roots: list[tuple[str, str]] = []  # (module, requirement description)
        self._pickles: dict[str, bytes] = {}
        self._data: dict[int, tuple[int, bytes]] = {}  # live blob key -> (index, NTB1 bytes)
        self._finalized = False

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.finalize()

    def extern(self, patterns) -> None:
        self._extern_patterns.extend(compile_patterns(patterns))

    def mock(self, patterns) -> None:
        self._mock_patterns.extend(compile_patterns(patterns))

    def classify(self, module: str) -> str:
        return classify(module, self._extern_patterns, self._mock_patterns)

    @property
    def extern_modules(self) -> list[str]:
        return sorted(set(DEFAULT_EXTERN) | self._closure(self._roots).extern)

    # -- dependency closure --

    def _closure(self, roots) -> Closure:
        result = Closure()
        queue = deque()
        for module, why in roots:
            if module not in result.reasons:
                result.reasons[module] = [why]
                queue.append(module)
        while queue:
            module = queue.popleft()
            chain = result.reasons[module]
            kind = self.classify(module)
            if kind == EXTERN:
                result.extern.add(module)
                continue
            if kind == MOCK:
                result.mocked.add(module)
                continue
            source = self.provider.get_source(module)
            if source is None:
                result.failures.append([module] + chain)
                continue
            try:
                ast = parse_module(module, source)
            except ScriptSyntaxError as exc:
                result.failures.append([f"{module} (syntax error: {exc})"] + chain)
                continue
            result.sources[module] = source
            for decl in ast.imports:
                if decl.module not in result.reasons:
                    result.reasons[decl.module] = [f"import in {module}"] + chain
                    queue.append(decl.module)
        return result

    def _check(self, roots) -> Closure:
        closure = self._closure(roots)
        if closure.failures:
            raise DependencyError(closure.failures)
        return closure

    # -- saving --

    def save_pickle(self, package: str, resource: str, value) -> None:
        label = f"{package}/{resource}"
        stream = self._pickle(value)
        roots = [(module, f"GLOBAL in {label}") for module, _ in sorted(stream.global_refs)]
        self._check(roots)
        mapping = {}
        for _, op, arg in serde.iter_ops(stream.data):
            if op == serde.TENSOR:
                key = arg[0]
                if key not in self._data:
                    self._data[key] = (len(self._data), encode_ntb1(key))
                mapping[key] = self._data[key][0]
        self._pickles[label] = rewrite_tensor_keys(stream.data, mapping)
        self._roots.extend(roots)
        log.debug("staged %s: globals=%s tensors=%d", label, sorted(stream.global_refs), len(mapping))

    def _pickle(self, value) -> serde.PickleStream:
        # instance state belongs to the importers' interpreter; read it under that lock
        gils = []
        for imp in self.importers:
            interp = getattr(imp, "interp", None)
            if interp is not None and interp.gil not in gils:
                gils.append(interp.gil)
        for g in gils:
            g.acquire()
        try:
            return serde.pickle(value, self.importers)
        finally:
            for g in reversed(gils):
                g.release()

    def save_module(self, name: str) -> None:
        root = [(name, "explicitly saved")]
        self._check(root)
        self._roots.extend(root)

    def dependency_report(self) -> str:
        """One line per module with its classification and why it is needed."""
        closure = self._closure(self._roots)
        lines = []
        for module in sorted(closure.reasons):
            if module in closure.sources:
                kind = INTERN
            elif module in closure.extern:
                kind = EXTERN
            elif module in closure.mocked:
                kind = MOCK
            else:
                kind = "MISSING"
            lines.append(f"{kind:8s} {module}  <- " + " <- ".join(closure.reasons[module]))
        return "\n".join(lines)

    def finalize(self) -> str:
        closure = self._check(self._roots)
        entries: dict[str, bytes] = {}
        for module, source in closure.sources.items():
            entries[source_path(module)] = source.encode("utf-8")
        entries.update(self._pickles)
        for index, blob in self._data.values():
            entries[data_path(index)] = blob
        entries[EXTERN_FILE] = encode_name_list(set(DEFAULT_EXTERN) | closure.extern)
        entries[MOCKED_FILE] = encode_name_list(closure.mocked)
        write_archive(self.path, entries)
        self._finalized = True
        log.info("wrote %s (%d modules, %d pickles, %d blobs)", self.path, len(closure.sources), len(self._pickles), len(self._data))
        return self.path
