import gc
import random
import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deploykit import blobstore as bs
from deploykit.blobstore import Tensor
from deploykit.errors import FormatError, ShapeError, UseAfterFree

M64 = (1 << 64) - 1


def splitmix64_ref(seed, n):
    """Plain-integer splitmix64."""
    state, out = seed & M64, []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & M64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        out.append(z ^ (z >> 31))
    return out


def f32(x):
    return np.float32(x)


def matmul_ref(a, b):
    n, k = a.shape
    out = np.zeros((n, b.shape[1]), a.dtype)
    for i in range(n):
        for j in range(b.shape[1]):
            acc = a.dtype.type(0)
            for p in range(k):
                acc = a.dtype.type(acc + a[i, p] * b[p, j])
            out[i, j] = acc
    return out


def sum_ref(a):
    acc = a.dtype.type(0)
    for x in a.reshape(-1):
        acc = a.dtype.type(acc + x)
    return acc


def test_create_read_round_trip(no_leaks):
    data = struct.pack("<4f", 1.0, -2.5, 3.25, 0.0)
    key = bs.blob_create("f32", [2, 2], data)
    assert bs.blob_read(key) == data
    assert bs.blob_stats().refcounts[key] == 1
    bs.blob_release(key)


def test_empty_blob(no_leaks):
    key = bs.blob_create("f32", [0], b"")
    assert bs.blob_read(key) == b""
    bs.blob_release(key)


def test_length_mismatch():
    with pytest.raises(ShapeError):
        bs.blob_create("f32", [3], b"\0" * 8)


def test_stats_count_and_bytes(no_leaks):
    before = bs.blob_stats()
    key = bs.blob_create("i64", [3], b"\0" * 24)
    after = bs.blob_stats()
    assert after.count == before.count + 1
    assert after.total_bytes == before.total_bytes + 24
    bs.blob_release(key)


def test_retain_release_and_death(no_leaks):
    key = bs.blob_create("f32", [1], b"\0" * 4)
    assert bs.blob_retain(key) == 2
    assert bs.blob_release(key) == 1
    assert bs.blob_release(key) == 0
    assert key not in bs.blob_stats().refcounts
    with pytest.raises(UseAfterFree):
        bs.blob_retain(key)
    with pytest.raises(UseAfterFree):
        bs.blob_release(key)
    with pytest.raises(UseAfterFree):
        bs.blob_read(key)


def test_keys_are_never_reused(no_leaks):
    seen = set()
    for _ in range(50):
        key = bs.blob_create("f32", [1], b"\0" * 4)
        assert key not in seen
        seen.add(key)
        bs.blob_release(key)


def test_concurrent_retain_release_matches_sequential_replay(no_leaks):
    key = bs.blob_create("f32", [4], b"\0" * 16)
    rng = random.Random(3)
    # per-thread op logs with net zero change; retains precede releases so the count never hits 0
    logs = []
    for _ in range(8):
        n = rng.randint(200, 400)
        logs.append(["r"] * n + ["d"] * n)
    replay = 1
    for log in logs:
        for op in log:
            replay += 1 if op == "r" else -1
    barrier = threading.Barrier(8)

    def worker(log):
        barrier.wait()
        for op in log:
            (bs.blob_retain if op == "r" else bs.blob_release)(key)

    threads = [threading.Thread(target=worker, args=(log,)) for log in logs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert bs.blob_stats().refcounts[key] == replay == 1
    bs.blob_release(key)


def test_tensor_handles_own_one_reference(no_leaks):
    t = bs.zeros([3])
    key = t.key
    u = Tensor.share(key)
    assert bs.blob_stats().refcounts[key] == 2
    del t
    gc.collect()
    assert bs.blob_stats().refcounts[key] == 1
    assert u.tolist() == [0.0, 0.0, 0.0]
    del u
    gc.collect()
    assert key not in bs.blob_stats().refcounts


def test_blob_data_is_immutable():
    t = bs.full([2], 1.0)
    with pytest.raises(ValueError):
        t.numpy()[0] = 5.0


def test_splitmix_matches_integer_reference():
    for seed in (0, 7, 2**63 + 12345, M64):
        assert [int(z) for z in bs.splitmix64(seed, 20)] == splitmix64_ref(seed, 20)


def test_rand_mapping_and_determinism():
    t = bs.rand([2, 3], 7)
    expected = [f32((z >> 40) * 2.0**-24) for z in splitmix64_ref(7, 6)]
    assert t.numpy().reshape(-1).tolist() == expected
    assert np.array_equal(bs.rand([2, 3], 7).numpy(), t.numpy())
    assert not np.array_equal(bs.rand([2, 3], 8).numpy(), t.numpy())
    assert float(t.numpy().min()) >= 0.0 and float(t.numpy().max()) < 1.0


def test_add_zeros_identity():
    x = bs.from_list([1.5, -2.0, 3.0, 0.125])
    assert np.array_equal(bs.add(bs.zeros([4]), x).numpy(), x.numpy())


def test_matmul_fixture():
    a = bs.from_list([[1, 2, 3], [4, 5, 6]])
    b = bs.from_list([[7, 8], [9, 10], [11, 12]])
    out = bs.matmul(a, b)
    assert out.shape == (2, 2)
    assert out.tolist() == [[58.0, 64.0], [139.0, 154.0]]


@pytest.mark.parametrize(
    "op, a, b",
    [
        (bs.add, [2], [3]),
        (bs.mul, [2, 2], [4]),
        (bs.sub, [1], [1, 1]),
        (bs.matmul, [2, 3], [2, 3]),
        (bs.matmul, [3], [3, 1]),
    ],
)
def test_shape_errors_name_both_shapes(op, a, b):
    with pytest.raises(ShapeError) as info:
        op(bs.zeros(a), bs.zeros(b))
    assert str(list(a)) in str(info.value) and str(list(b)) in str(info.value)


def test_from_list_dtypes_and_ragged():
    assert bs.from_list([[1, 2]], "i64").numpy().dtype == np.dtype("<i8")
    assert bs.from_list([]).shape == (0,)
    with pytest.raises(ShapeError):
        bs.from_list([[1, 2], [3]])


def test_inputs_unchanged_by_kernels():
    a = bs.from_list([[1.0, -1.0], [2.0, -3.0]])
    before = bs.blob_read(a.key)
    for op in (bs.relu, bs.reduce_sum, lambda x: bs.matmul(x, x), lambda x: bs.scale(x, 2.0)):
        op(a)
    assert bs.blob_read(a.key) == before


_dims = st.integers(0, 8)
_floats = st.floats(-100, 100, allow_nan=False, width=32)


@st.composite
def _matrix(draw, rows, cols):
    return np.array(draw(st.lists(_floats, min_size=rows * cols, max_size=rows * cols)), np.float32).reshape(rows, cols)


@settings(max_examples=60, deadline=None)
@given(st.data(), _dims, _dims, _dims)
def test_kernels_match_scalar_reference(data, n, k, m):
    a = data.draw(_matrix(n, k))
    b = data.draw(_matrix(k, m))
    c = data.draw(_matrix(n, k))
    ta, tb, tc = bs.tensor_from_numpy(a), bs.tensor_from_numpy(b), bs.tensor_from_numpy(c)
    assert np.array_equal(bs.matmul(ta, tb).numpy(), matmul_ref(a, b))
    assert np.array_equal(bs.reduce_sum(ta).numpy(), sum_ref(a))
    assert np.array_equal(bs.relu(ta).numpy(), np.where(a > 0, a, np.float32(0)))
    assert np.array_equal(bs.add(ta, tc).numpy(), np.array([[f32(x + y) for x, y in zip(r, s)] for r, s in zip(a, c)], np.float32).reshape(n, k))
    assert np.array_equal(bs.mul(ta, tc).numpy(), (a * c).astype(np.float32))


def test_ntb1_format():
    t = bs.from_list([[1, 2, 3]], "i64")
    raw = bs.encode_ntb1(t)
    expected = b"NTB1" + bytes([1, 2]) + struct.pack("<QQ", 1, 3) + struct.pack("<3q", 1, 2, 3)
    assert raw == expected
    assert bs.decode_ntb1(raw) == ("i64", (1, 3), struct.pack("<3q", 1, 2, 3))
    assert bs.load_ntb1(raw).tolist() == [[1, 2, 3]]
    for bad in (b"NTB2" + raw[4:], raw[:-1], raw[:7], b"NTB1" + bytes([9, 0])):
        with pytest.raises(FormatError):
            bs.decode_ntb1(bad)
