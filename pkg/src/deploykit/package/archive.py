"""Zip container layout shared by the exporter and the importer.

    code/<a>/<b>.ms      module source for ``a.b``
    <package>/<name>     pickle streams, TENSOR keys are data-file indices
    data/<n>.nt          NTB1 blob files
    extern_modules       sorted dotted names, one per line
    mocked_modules       same format
"""

from __future__ import annotations

import os
import tempfile
import zipfile

from ..errors import FormatError

SOURCE_SUFFIX = ".ms"
EXTERN_FILE = "extern_modules"
MOCKED_FILE = "mocked_modules"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def source_path(module: str) -> str:
    return "code/" + module.replace(".", "/") + SOURCE_SUFFIX


def module_from_path(path: str) -> str:
    return path[len("code/"):-len(SOURCE_SUFFIX)].replace("/", ".")


def data_path(index: int) -> str:
    return f"data/{index}.nt"


def encode_name_list(names) -> bytes:
    names = sorted(set(names))
    return "".join(f"{n}\n" for n in names).encode("utf-8")


def decode_name_list(raw: bytes) -> list[str]:
    return [line for line in raw.decode("utf-8").split("\n") if line]


def write_archive(path, entries: dict[str, bytes]) -> None:
    """Write a deterministic zip (sorted names, fixed timestamps, stored) atomically."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".zip", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh, zipfile.ZipFile(fh, "w", zipfile.ZIP_STORED) as zf:
            for name in sorted(entries):
                info = zipfile.ZipInfo(name, date_time=_EPOCH)
                info.compress_type = zipfile.ZIP_STORED
                info.external_attr = 0o644 << 16
                info.create_system = 3
                zf.writestr(info, entries[name])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Archive:
    """An archive read fully into memory (read-only, safe to share across threads)."""

    def __init__(self, path, entries: dict[str, bytes]):
        self.path = os.fspath(path)
        self.entries = entries
        self.extern_modules = frozenset(decode_name_list(entries[EXTERN_FILE]))
        self.mocked_modules = frozenset(decode_name_list(entries.get(MOCKED_FILE, b"")))

    @classmethod
    def open(cls, path) -> Archive:
        try:
            with zipfile.ZipFile(path) as zf:
                entries = {info.filename: zf.read(info) for info in zf.infolist() if not info.is_dir()}
        except zipfile.BadZipFile as exc:
            raise FormatError(f"{path}: not a package archive ({exc})") from None
        if EXTERN_FILE not in entries:
            raise FormatError(f"{path}: missing {EXTERN_FILE!r} entry")
        try:
            return cls(path, entries)
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: module lists are not UTF-8 ({exc})") from None

    def has_source(self, module: str) -> bool:
        return source_path(module) in self.entries

    def source(self, module: str) -> str | None:
        raw = self.entries.get(source_path(module))
        return None if raw is None else raw.decode("utf-8")

    def source_modules(self) -> list[str]:
        return sorted(module_from_path(p) for p in self.entries if p.startswith("code/") and p.endswith(SOURCE_SUFFIX))

    def resource(self, package: str, resource: str) -> bytes:
        name = f"{package}/{resource}"
        try:
            return self.entries[name]
        except KeyError:
            raise FileNotFoundError(f"{self.path}: no resource {name!r}") from None

    def is_mocked(self, module: str) -> bool:
        """A module is mocked if it or any dotted prefix of it is listed."""
        parts = module.split(".")
        return any(".".join(parts[:i]) in self.mocked_modules for i in range(1, len(parts) + 1))

    def __repr__(self):
        return f"Archive({self.path!r})"
