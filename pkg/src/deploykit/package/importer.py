"""Module importers: source providers, a development importer, and the hermetic package importer."""

from __future__ import annotations

import os
import struct
from pathlib import Path

from .. import serde
from ..blobstore import Tensor, load_ntb1
from ..errors import FormatError, ScriptImportError
from ..script.interpreter import Interpreter
from ..script.parser import parse_module
from ..script.values import HostObject, MockModule, ModuleEnv, NativeFunction
from .archive import SOURCE_SUFFIX, Archive, data_path

_U64 = struct.Struct("<Q")


class DirectoryProvider:
    """Module sources laid out as ``<root>/a/b.ms`` for module ``a.b``."""

    def __init__(self, root):
        self.root = Path(root)

    def get_source(self, name: str) -> str | None:
        path = self.root.joinpath(*name.split(".")).with_suffix(SOURCE_SUFFIX)
        if not path.is_file():
            return None
        return path.read_text(encoding="utf-8")

    def __repr__(self):
        return f"DirectoryProvider({str(self.root)!r})"


class DictProvider:
    def __init__(self, sources: dict[str, str]):
        self.sources = dict(sources)

    def get_source(self, name: str) -> str | None:
        return self.sources.get(name)

    def __repr__(self):
        return f"DictProvider({sorted(self.sources)})"


class SourceImporter:
    """Loads modules from a source provider into the interpreter's own module table.

    This is the authoring environment: objects built here can be exported,
    with this importer in the exporter's class-locator list.
    """

    def __init__(self, interp: Interpreter, provider):
        self.interp = interp
        self.provider = provider

    def import_module(self, name: str) -> ModuleEnv:
        interp = self.interp
        with interp.gil:
            env = interp.modules.get(name)
            if env is not None:
                return env
            if name in interp.native_modules:
                return interp.native_modules[name]
            source = self.provider.get_source(name)
            if source is None:
                return interp.system_import(name)
            return interp.exec_module(parse_module(name, source), self.import_module)

    def get_source(self, name: str) -> str | None:
        return self.provider.get_source(name)

    def __repr__(self):
        return f"SourceImporter({self.provider!r})"


def rewrite_tensor_keys(data: bytes, mapping: dict[int, int]) -> bytes:
    """Copy of a pickle stream with every TENSOR key replaced through ``mapping``."""
    out = bytearray(data)
    for offset, op, arg in serde.iter_ops(data):
        if op == serde.TENSOR:
            try:
                _U64.pack_into(out, offset + 1, mapping[arg[0]])
            except KeyError:
                raise FormatError(f"TENSOR key {arg[0]} has no mapping") from None
    return bytes(out)


class HermeticImporter(HostObject):
    """Imports modules from one archive into a package-private module table.

    Only modules listed in the archive's ``extern_modules`` reach the
    interpreter's system importer; mocked modules become stubs; everything
    else must come from the archive's ``code/`` tree.
    """

    def __init__(self, interp: Interpreter, archive):
        self.interp = interp
        self.archive = archive if isinstance(archive, Archive) else Archive.open(archive)
        self.modules: dict[str, ModuleEnv] = {}
        self._data_cache: dict[int, Tensor] = {}

    def __repr__(self):
        return f"HermeticImporter({os.path.basename(self.archive.path)!r}, interp={self.interp.id})"

    def import_module(self, name: str) -> ModuleEnv:
        with self.interp.gil:
            env = self.modules.get(name)
            if env is not None:
                return env
            archive = self.archive
            if name in archive.extern_modules:
                try:
                    env = self.interp.system_import(name)
                except ImportError as exc:
                    raise ScriptImportError(
                        f"extern module {name!r} of {archive.path} is not available: {exc}"
                    ) from exc
            elif archive.is_mocked(name):
                env = MockModule(name)
            else:
                source = archive.source(name)
                if source is None:
                    raise ScriptImportError(f"No module named {name!r} in package {archive.path}")
                # registered before execution so import cycles see the partial module
                env = self.modules[name] = ModuleEnv(name, {}, self.import_module)
                try:
                    self.interp.exec_module(parse_module(name, source), register=False, env=env)
                except BaseException:
                    del self.modules[name]
                    raise
                return env
            self.modules[name] = env
            return env

    def resolve_global(self, module: str, name: str):
        env = self.import_module(module)
        return env.get_attr(name)

    def get_source(self, name: str) -> str | None:
        return self.archive.source(name)

    def _data(self, index: int) -> Tensor:
        tensor = self._data_cache.get(index)
        if tensor is None:
            raw = self.archive.entries.get(data_path(index))
            if raw is None:
                raise FormatError(f"{self.archive.path}: missing {data_path(index)}")
            tensor = self._data_cache[index] = load_ntb1(raw)
        return tensor

    def load_pickle(self, package: str, resource: str):
        raw = self.archive.resource(package, resource)
        _, data_refs = serde.scan(raw)
        with self.interp.gil:
            mapping = {index: self._data(index).key for index in data_refs}
            return serde.unpickle(rewrite_tensor_keys(raw, mapping), self.resolve_global)

    def script_getattr(self, interp, name: str):
        if name == "load_pickle":
            return NativeFunction("importer.load_pickle", self.load_pickle)
        if name == "import_module":
            return NativeFunction("importer.import_module", self.import_module)
        return super().script_getattr(interp, name)
