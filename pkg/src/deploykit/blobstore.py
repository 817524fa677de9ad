"""Process-global store of immutable, reference-counted tensor buffers.

All interpreters in the process share this store, so a tensor handed from
one interpreter to another is just another reference to the same blob.
The native tensor kernels that script code calls through the ``nt`` module
also live here.
"""

from __future__ import annotations

import itertools
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from . import gil
from .errors import FormatError, ShapeError, UseAfterFree

DTYPES = {"f32": np.dtype("<f4"), "i64": np.dtype("<i8")}
DTYPE_CODES = {"f32": 0, "i64": 1}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}
NTB1_MAGIC = b"NTB1"


def _numel(shape) -> int:
    n = 1
    for d in shape:
        n *= d
    return n


class Blob:
    __slots__ = ("key", "dtype", "shape", "array", "refcount")

    def __init__(self, key: int, dtype: str, shape: tuple[int, ...], array: np.ndarray):
        self.key = key
        self.dtype = dtype
        self.shape = shape
        self.array = array
        self.refcount = 1

    @property
    def nbytes(self) -> int:
        return self.array.nbytes


@dataclass
class BlobStats:
    count: int
    total_bytes: int
    refcounts: dict[int, int] = field(default_factory=dict)


class BlobStore:
    def __init__(self):
        self._lock = threading.Lock()
        self._blobs: dict[int, Blob] = {}
        self._keys = itertools.count(1)

    def _publish(self, dtype: str, shape: tuple[int, ...], array: np.ndarray) -> Blob:
        array = np.ascontiguousarray(array, dtype=DTYPES[dtype]).reshape(shape)
        array.flags.writeable = False
        with self._lock:
            blob = Blob(next(self._keys), dtype, shape, array)
            self._blobs[blob.key] = blob
        return blob

    def create(self, dtype: str, shape, data: bytes) -> int:
        if dtype not in DTYPES:
            raise ValueError(f"unknown dtype {dtype!r}")
        shape = tuple(int(d) for d in shape)
        if any(d < 0 for d in shape):
            raise ShapeError(f"negative dimension in shape {list(shape)}")
        expected = _numel(shape) * DTYPES[dtype].itemsize
        if len(data) != expected:
            raise ShapeError(
                f"data length {len(data)} does not match shape {list(shape)} x {dtype} ({expected} bytes)"
            )
        array = np.frombuffer(bytes(data), dtype=DTYPES[dtype]).copy()
        return self._publish(dtype, shape, array).key

    def get(self, key: int) -> Blob:
        blob = self._blobs.get(key)
        if blob is None:
            raise UseAfterFree(f"blob {key} is not alive")
        return blob

    def retain(self, key: int) -> int:
        with self._lock:
            blob = self._blobs.get(key)
            if blob is None:
                raise UseAfterFree(f"retain of dead blob {key}")
            blob.refcount += 1
            return blob.refcount

    def release(self, key: int) -> int:
        with self._lock:
            blob = self._blobs.get(key)
            if blob is None:
                raise UseAfterFree(f"release of dead blob {key}")
            blob.refcount -= 1
            if blob.refcount == 0:
                del self._blobs[key]
            return blob.refcount

    def read(self, key: int) -> bytes:
        return self.get(key).array.tobytes()

    def stats(self) -> BlobStats:
        with self._lock:
            blobs = list(self._blobs.values())
            return BlobStats(
                count=len(blobs),
                total_bytes=sum(b.nbytes for b in blobs),
                refcounts={b.key: b.refcount for b in blobs},
            )


STORE = BlobStore()


def blob_create(dtype: str, shape, data: bytes) -> int:
    return STORE.create(dtype, shape, data)


def blob_retain(key: int) -> int:
    return STORE.retain(key)


def blob_release(key: int) -> int:
    return STORE.release(key)


def blob_read(key: int) -> bytes:
    return STORE.read(key)


def blob_stats() -> BlobStats:
    return STORE.stats()


class Tensor:
    """Script-visible handle to a blob.  Owns exactly one reference."""

    __slots__ = ("blob", "__weakref__")

    def __init__(self, blob: Blob):
        self.blob = blob

    @classmethod
    def adopt(cls, key: int) -> Tensor:
        """Wrap a reference the caller already owns (e.g. from ``blob_create``)."""
        return cls(STORE.get(key))

    @classmethod
    def share(cls, key: int) -> Tensor:
        """Take a new reference to a live blob."""
        STORE.retain(key)
        return cls(STORE.get(key))

    @property
    def key(self) -> int:
        return self.blob.key

    @property
    def shape(self) -> tuple[int, ...]:
        return self.blob.shape

    @property
    def dtype(self) -> str:
        return self.blob.dtype

    def numpy(self) -> np.ndarray:
        """Read-only view of the data."""
        return self.blob.array

    def tolist(self):
        return self.blob.array.tolist()

    def __del__(self):
        try:
            STORE.release(self.blob.key)
        except Exception:
            pass

    def __repr__(self):
        return f"Tensor(key={self.key}, shape={list(self.shape)}, dtype={self.dtype})"


def tensor_from_numpy(array, dtype: str | None = None) -> Tensor:
    array = np.asarray(array)
    if dtype is None:
        dtype = "i64" if array.dtype.kind in "iub" else "f32"
    return Tensor(STORE._publish(dtype, tuple(array.shape), array))


def _new(dtype: str, array: np.ndarray) -> Tensor:
    return Tensor(STORE._publish(dtype, tuple(array.shape), array))


# -- NTB1 blob files ---------------------------------------------------------

def pack_header(dtype: str, shape) -> bytes:
    return struct.pack("<BB", DTYPE_CODES[dtype], len(shape)) + b"".join(
        struct.pack("<Q", d) for d in shape
    )


def unpack_header(buf: bytes, offset: int = 0) -> tuple[str, tuple[int, ...], int]:
    """Returns (dtype, shape, offset past the header)."""
    try:
        code, ndim = struct.unpack_from("<BB", buf, offset)
        offset += 2
        shape = struct.unpack_from(f"<{ndim}Q", buf, offset)
    except struct.error as exc:
        raise FormatError(f"truncated tensor header: {exc}") from None
    if code not in CODE_DTYPES:
        raise FormatError(f"unknown dtype code {code}")
    return CODE_DTYPES[code], tuple(shape), offset + 8 * ndim


def encode_ntb1(tensor_or_key) -> bytes:
    blob = tensor_or_key.blob if isinstance(tensor_or_key, Tensor) else STORE.get(tensor_or_key)
    return NTB1_MAGIC + pack_header(blob.dtype, blob.shape) + blob.array.tobytes()


def decode_ntb1(data: bytes) -> tuple[str, tuple[int, ...], bytes]:
    if data[:4] != NTB1_MAGIC:
        raise FormatError("bad NTB1 magic")
    dtype, shape, off = unpack_header(data, 4)
    payload = data[off:]
    if len(payload) != _numel(shape) * DTYPES[dtype].itemsize:
        raise FormatError(f"NTB1 payload length {len(payload)} does not match shape {list(shape)}")
    return dtype, shape, payload


def load_ntb1(data: bytes) -> Tensor:
    dtype, shape, payload = decode_ntb1(data)
    return Tensor.adopt(STORE.create(dtype, shape, payload))


# -- kernels -----------------------------------------------------------------

def _kernel_entry():
    if gil.CHECKS and gil.holding_any_lock():
        raise gil.LockDisciplineError("native kernel entered while holding an interpreter lock")


def _check_shape(shape) -> tuple[int, ...]:
    try:
        shape = tuple(int(d) for d in shape)
    except TypeError:
        raise ShapeError(f"shape must be a list of ints, got {shape!r}") from None
    if any(d < 0 for d in shape):
        raise ShapeError(f"negative dimension in shape {list(shape)}")
    return shape


def _same(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape or a.dtype != b.dtype:
        raise ShapeError(
            f"{op}: operand mismatch {list(a.shape)}:{a.dtype} vs {list(b.shape)}:{b.dtype}"
        )


def zeros(shape, dtype: str = "f32") -> Tensor:
    _kernel_entry()
    shape = _check_shape(shape)
    return _new(dtype, np.zeros(shape, dtype=DTYPES[dtype]))


def full(shape, value, dtype: str = "f32") -> Tensor:
    _kernel_entry()
    shape = _check_shape(shape)
    return _new(dtype, np.full(shape, value, dtype=DTYPES[dtype]))


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of the splitmix64 stream started at ``seed``."""
    seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        z = seed + _GOLDEN * np.arange(1, n + 1, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def rand(shape, seed: int) -> Tensor:
    """Uniform f32 in [0, 1): top 24 bits of each splitmix64 output times 2**-24."""
    _kernel_entry()
    shape = _check_shape(shape)
    bits = splitmix64(int(seed), _numel(shape)) >> np.uint64(40)
    values = bits.astype(np.float32) * np.float32(2.0**-24)
    return _new("f32", values.reshape(shape))


def _infer_shape(values) -> tuple[int, ...]:
    shape = []
    cur = values
    while isinstance(cur, list):
        shape.append(len(cur))
        if not cur:
            break
        cur = cur[0]
    return tuple(shape)


def _flatten(values, shape, depth, out):
    if depth == len(shape):
        if isinstance(values, list) or isinstance(values, bool) or not isinstance(values, (int, float)):
            raise ShapeError(f"from_list: ragged or non-numeric element {values!r}")
        out.append(values)
        return
    if not isinstance(values, list) or len(values) != shape[depth]:
        raise ShapeError(f"from_list: ragged nested list, expected length {shape[depth]} at depth {depth}")
    for v in values:
        _flatten(v, shape, depth + 1, out)


def from_list(values, dtype: str = "f32") -> Tensor:
    _kernel_entry()
    if dtype not in DTYPES:
        raise ValueError(f"unknown dtype {dtype!r}")
    if not isinstance(values, list):
        raise ShapeError("from_list expects a (nested) list")
    shape = _infer_shape(values)
    flat: list = []
    _flatten(values, shape, 0, flat)
    return _new(dtype, np.array(flat, dtype=DTYPES[dtype]).reshape(shape))


def add(a: Tensor, b: Tensor) -> Tensor:
    _kernel_entry()
    _same("add", a, b)
    return _new(a.dtype, a.blob.array + b.blob.array)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _kernel_entry()
    _same("sub", a, b)
    return _new(a.dtype, a.blob.array - b.blob.array)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _kernel_entry()
    _same("mul", a, b)
    return _new(a.dtype, a.blob.array * b.blob.array)


def scale(a: Tensor, factor) -> Tensor:
    _kernel_entry()
    arr = a.blob.array
    return _new(a.dtype, arr * arr.dtype.type(factor))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _kernel_entry()
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0] or a.dtype != b.dtype:
        raise ShapeError(
            f"matmul: incompatible operands {list(a.shape)}:{a.dtype} x {list(b.shape)}:{b.dtype}"
        )
    from . import _kernels

    return _new(a.dtype, _kernels.matmul(a.blob.array, b.blob.array))


def relu(a: Tensor) -> Tensor:
    _kernel_entry()
    from . import _kernels

    arr = a.blob.array
    return _new(a.dtype, _kernels.relu(arr.reshape(-1)).reshape(arr.shape))


def reduce_sum(a: Tensor) -> Tensor:
    _kernel_entry()
    from . import _kernels

    arr = a.blob.array
    total = _kernels.sum_all(arr.reshape(-1))
    return _new(a.dtype, np.array(total, dtype=DTYPES[a.dtype]))


KERNELS = {
    "zeros": zeros,
    "full": full,
    "rand": rand,
    "from_list": from_list,
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "matmul": matmul,
    "relu": relu,
    "sum": reduce_sum,
}


def warm_kernels() -> None:
    """Trigger JIT compilation for both dtypes so timed code does not pay for it."""
    for dtype in DTYPES:
        x = full([2, 2], 1, dtype)
        matmul(x, x)
        relu(x)
        reduce_sum(x)
