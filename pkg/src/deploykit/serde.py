"""Stack-machine object serialization.

Byte format, one-byte opcodes followed by little-endian operands::

    0x00 NONE      0x01 TRUE      0x02 FALSE
    0x03 INT       i64
    0x04 FLOAT     f64
    0x05 STR       u32 length + UTF-8
    0x06 LIST      u32 n            pops n items
    0x07 DICT      u32 n            pops n key/value pairs
    0x08 GLOBAL    str module, str name (u32-length-prefixed)
    0x09 NEWOBJ    pops class, pushes an empty instance
    0x0A SETSTATE  pops attr dict and instance, pushes the instance
    0x0B TENSOR    u64 blob key, u8 dtype, u8 ndim, ndim x u64 dims
    0x0C MEMOIZE   stores top of stack at the next memo index
    0x0D GET       u32 memo index
    0xFF STOP

Tensors travel out-of-band: a TENSOR op names a live blob in the process
store rather than carrying data.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .blobstore import STORE, Tensor, pack_header, unpack_header
from .errors import ClassNotFoundError, FormatError, MockUsedError, UnpicklableError
from .script.values import Class, Instance, Mock

NONE = 0x00
TRUE = 0x01
FALSE = 0x02
INT = 0x03
FLOAT = 0x04
STR = 0x05
LIST = 0x06
DICT = 0x07
GLOBAL = 0x08
NEWOBJ = 0x09
SETSTATE = 0x0A
TENSOR = 0x0B
MEMOIZE = 0x0C
GET = 0x0D
STOP = 0xFF

OPNAMES = {
    NONE: "NONE", TRUE: "TRUE", FALSE: "FALSE", INT: "INT", FLOAT: "FLOAT", STR: "STR",
    LIST: "LIST", DICT: "DICT", GLOBAL: "GLOBAL", NEWOBJ: "NEWOBJ", SETSTATE: "SETSTATE",
    TENSOR: "TENSOR", MEMOIZE: "MEMOIZE", GET: "GET", STOP: "STOP",
}

_I64 = struct.Struct("<q")
_F64 = struct.Struct("<d")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass
class PickleStream:
    data: bytes
    global_refs: set[tuple[str, str]] = field(default_factory=set)
    blob_refs: set[int] = field(default_factory=set)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def locate_class(cls: Class, importers) -> tuple[str, str]:
    """Find ``cls`` through the first importer whose module binds it by identity."""
    searched = []
    for importer in importers:
        searched.append(repr(importer))
        try:
            env = importer.import_module(cls.module_name)
        except ImportError:
            continue
        if env.bindings.get(cls.name) is cls:
            return cls.module_name, cls.name
    raise ClassNotFoundError(
        f"class {cls.qualname} not found via importers [{', '.join(searched)}]"
    )


class Pickler:
    def __init__(self, importers=()):
        self.importers = list(importers)
        self.out = bytearray()
        self.memo: dict[int, int] = {}
        self.keep: list = []  # keeps memoized objects alive so ids stay unique
        self.active: set[int] = set()
        self.global_refs: set[tuple[str, str]] = set()
        self.blob_refs: set[int] = set()
        self._located: dict[int, tuple[str, str]] = {}

    def dump(self, value) -> PickleStream:
        self.save(value)
        self.out.append(STOP)
        return PickleStream(bytes(self.out), self.global_refs, self.blob_refs)

    def _memoized(self, obj) -> bool:
        idx = self.memo.get(id(obj))
        if idx is None:
            if id(obj) in self.active:
                raise UnpicklableError(f"reference cycle through {obj!r}")
            return False
        self.out.append(GET)
        self.out += _U32.pack(idx)
        return True

    def _memoize(self, obj):
        self.memo[id(obj)] = len(self.memo)
        self.keep.append(obj)
        self.out.append(MEMOIZE)

    def _global(self, cls: Class):
        ref = self._located.get(id(cls))
        if ref is None:
            ref = self._located[id(cls)] = locate_class(cls, self.importers)
        self.global_refs.add(ref)
        self.out.append(GLOBAL)
        self.out += _pack_str(ref[0]) + _pack_str(ref[1])

    def save(self, value):
        out = self.out
        t = type(value)
        if value is None:
            out.append(NONE)
        elif value is True:
            out.append(TRUE)
        elif value is False:
            out.append(FALSE)
        elif t is int:
            try:
                out.append(INT)
                out += _I64.pack(value)
            except struct.error:
                raise UnpicklableError(f"integer {value} does not fit in 64 bits") from None
        elif t is float:
            out.append(FLOAT)
            out += _F64.pack(value)
        elif t is str:
            out.append(STR)
            out += _pack_str(value)
        elif t is list:
            if self._memoized(value):
                return
            self.active.add(id(value))
            for item in value:
                self.save(item)
            self.active.discard(id(value))
            out.append(LIST)
            out += _U32.pack(len(value))
            self._memoize(value)
        elif t is dict:
            if self._memoized(value):
                return
            self._save_dict(value)
            self._memoize(value)
        elif t is Instance:
            if self._memoized(value):
                return
            self._global(value.cls)
            out.append(NEWOBJ)
            self._save_dict(value.attrs, owner=value)
            out.append(SETSTATE)
            self._memoize(value)
        elif t is Tensor:
            if self._memoized(value):
                return
            self.blob_refs.add(value.key)
            out.append(TENSOR)
            out += _U64.pack(value.key) + pack_header(value.dtype, value.shape)
            self._memoize(value)
        elif t is Class:
            self._global(value)
        elif t is Mock:
            raise UnpicklableError(f"cannot pickle mocked object {value.full_path!r}")
        else:
            raise UnpicklableError(f"cannot pickle value of type {type(value).__name__} ({value!r})")

    def _save_dict(self, d: dict, owner=None):
        key = id(owner if owner is not None else d)
        self.active.add(key)
        for k, v in d.items():
            if type(k) is not str:
                raise UnpicklableError(f"dict key {k!r} is not a string")
            self.out.append(STR)
            self.out += _pack_str(k)
            self.save(v)
        self.active.discard(key)
        self.out.append(DICT)
        self.out += _U32.pack(len(d))


def pickle(value, class_locator=()) -> PickleStream:
    """Serialize ``value``; instance classes are located through ``class_locator``."""
    return Pickler(class_locator).dump(value)


def iter_ops(data: bytes):
    """Yield ``(offset, opcode, operand)`` for every op up to and including STOP.

    Operands: INT/FLOAT/STR values, LIST/DICT counts, GLOBAL ``(module, name)``,
    TENSOR ``(key, dtype, shape)``, GET index; otherwise ``None``.
    """
    pos = 0
    end = len(data)
    unpack_from = struct.unpack_from
    try:
        while True:
            if pos >= end:
                raise FormatError("stream truncated before STOP")
            start = pos
            op = data[pos]
            pos += 1
            if op in (NONE, TRUE, FALSE, NEWOBJ, SETSTATE, MEMOIZE):
                arg = None
            elif op == INT:
                (arg,) = unpack_from("<q", data, pos)
                pos += 8
            elif op == FLOAT:
                (arg,) = unpack_from("<d", data, pos)
                pos += 8
            elif op == STR:
                arg, pos = _read_str(data, pos)
            elif op in (LIST, DICT, GET):
                (arg,) = unpack_from("<I", data, pos)
                pos += 4
            elif op == GLOBAL:
                module, pos = _read_str(data, pos)
                name, pos = _read_str(data, pos)
                arg = (module, name)
            elif op == TENSOR:
                (key,) = unpack_from("<Q", data, pos)
                dtype, shape, pos = unpack_header(data, pos + 8)
                arg = (key, dtype, shape)
            elif op == STOP:
                if pos != end:
                    raise FormatError(f"{end - pos} trailing bytes after STOP")
                yield start, op, None
                return
            else:
                raise FormatError(f"unknown opcode 0x{op:02x} at offset {start}")
            yield start, op, arg
    except struct.error as exc:
        raise FormatError(f"truncated operand: {exc}") from None


def _read_str(data: bytes, pos: int) -> tuple[str, int]:
    (length,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if pos + length > len(data):
        raise FormatError("truncated string operand")
    try:
        return data[pos:pos + length].decode("utf-8"), pos + length
    except UnicodeDecodeError as exc:
        raise FormatError(f"invalid UTF-8 in string operand: {exc}") from None


def _stream_bytes(stream) -> bytes:
    return stream.data if isinstance(stream, PickleStream) else bytes(stream)


def scan(stream) -> tuple[set[tuple[str, str]], set[int]]:
    """Referenced globals and blob keys, found by walking ops without constructing anything.

    Also validates stack discipline, so a stream that passes will not underflow.
    """
    globals_: set[tuple[str, str]] = set()
    blobs: set[int] = set()
    depth = 0
    memo = 0
    for offset, op, arg in iter_ops(_stream_bytes(stream)):
        if op == GLOBAL:
            globals_.add(arg)
            depth += 1
        elif op == TENSOR:
            blobs.add(arg[0])
            depth += 1
        elif op == LIST:
            depth -= arg
            if depth < 0:
                raise FormatError(f"stack underflow at offset {offset}")
            depth += 1
        elif op == DICT:
            depth -= 2 * arg
            if depth < 0:
                raise FormatError(f"stack underflow at offset {offset}")
            depth += 1
        elif op == NEWOBJ:
            if depth < 1:
                raise FormatError(f"stack underflow at offset {offset}")
        elif op == SETSTATE:
            if depth < 2:
                raise FormatError(f"stack underflow at offset {offset}")
            depth -= 1
        elif op == MEMOIZE:
            if depth < 1:
                raise FormatError(f"MEMOIZE on empty stack at offset {offset}")
            memo += 1
        elif op == GET:
            if arg >= memo:
                raise FormatError(f"GET {arg} before it was memoized (offset {offset})")
            depth += 1
        elif op == STOP:
            if depth != 1:
                raise FormatError(f"stack depth {depth} at STOP, expected 1")
        else:
            depth += 1
    return globals_, blobs


def unpickle(stream, resolver):
    """Rebuild a value.  ``resolver(module, name)`` supplies GLOBAL targets."""
    stack: list = []
    memo: list = []
    push = stack.append
    pop = stack.pop
    try:
        for offset, op, arg in iter_ops(_stream_bytes(stream)):
            if op == NONE:
                push(None)
            elif op == TRUE:
                push(True)
            elif op == FALSE:
                push(False)
            elif op in (INT, FLOAT, STR):
                push(arg)
            elif op == LIST:
                if arg > len(stack):
                    raise FormatError(f"stack underflow at offset {offset}")
                items = stack[len(stack) - arg:] if arg else []
                del stack[len(stack) - arg:]
                push(items)
            elif op == DICT:
                if 2 * arg > len(stack):
                    raise FormatError(f"stack underflow at offset {offset}")
                flat = stack[len(stack) - 2 * arg:] if arg else []
                del stack[len(stack) - 2 * arg:]
                d = {}
                for i in range(0, len(flat), 2):
                    if type(flat[i]) is not str:
                        raise FormatError(f"non-string dict key at offset {offset}")
                    d[flat[i]] = flat[i + 1]
                push(d)
            elif op == GLOBAL:
                push(resolver(*arg))
            elif op == NEWOBJ:
                cls = pop()
                if type(cls) is Mock:
                    raise MockUsedError(cls.full_path, "instantiated while unpickling")
                if type(cls) is not Class:
                    raise FormatError(f"NEWOBJ on non-class {cls!r} at offset {offset}")
                push(Instance(cls))
            elif op == SETSTATE:
                state = pop()
                inst = pop()
                if type(inst) is not Instance or type(state) is not dict:
                    raise FormatError(f"malformed SETSTATE at offset {offset}")
                inst.attrs.update(state)
                push(inst)
            elif op == TENSOR:
                key, dtype, shape = arg
                tensor = Tensor.share(key)
                if tensor.dtype != dtype or tensor.shape != shape:
                    raise FormatError(
                        f"blob {key} is {list(tensor.shape)}:{tensor.dtype}, stream says {list(shape)}:{dtype}"
                    )
                push(tensor)
            elif op == MEMOIZE:
                memo.append(stack[-1])
            elif op == GET:
                if arg >= len(memo):
                    raise FormatError(f"GET {arg} before it was memoized (offset {offset})")
                push(memo[arg])
            elif op == STOP:
                if len(stack) != 1:
                    raise FormatError(f"stack depth {len(stack)} at STOP, expected 1")
                return stack[0]
    except IndexError:
        raise FormatError("stack underflow") from None
    raise FormatError("stream ended without STOP")


def retain_blobs(stream: PickleStream) -> None:
    for key in stream.blob_refs:
        STORE.retain(key)


def release_blobs(stream: PickleStream) -> None:
    for key in stream.blob_refs:
        STORE.release(key)


def disassemble(stream) -> list[str]:
    """Human-readable op listing, for debugging and golden tests."""
    lines = []
    for offset, op, arg in iter_ops(_stream_bytes(stream)):
        lines.append(f"{offset:5d} {OPNAMES[op]}" + ("" if arg is None else f" {arg!r}"))
    return lines
