"""Per-interpreter global lock with hold-time accounting.

Every interpreter owns one :class:`GlobalLock`.  A thread holds it while
touching script state and drops it for the duration of native kernels
(:meth:`GlobalLock.released`).  Time spent holding any interpreter lock and
time spent inside released sections are accumulated per thread, which is
what the benchmark's interpreter-time fraction is computed from.  The clock
is thread CPU time: waiting for a core, or for the host's own GIL after a
kernel returns, is not work and would otherwise swamp the figures once
threads outnumber cores.
"""

from __future__ import annotations

import os
import threading
from time import thread_time

# When enabled, mutation points and kernel entries assert lock discipline.
CHECKS = os.environ.get("DEPLOYKIT_CHECK_LOCKS", "") not in ("", "0")

_tls = threading.local()


def _state():
    try:
        return _tls.state
    except AttributeError:
        st = _tls.state = _ThreadTiming()
        return st


class _ThreadTiming:
    __slots__ = ("held", "kernel", "depth", "started")

    def __init__(self):
        self.held = 0.0
        self.kernel = 0.0
        self.depth = 0  # number of interpreter locks this thread holds
        self.started = 0.0


def thread_timing() -> tuple[float, float]:
    """(CPU seconds holding interpreter locks, CPU seconds in released sections) for this thread."""
    st = _state()
    held = st.held
    if st.depth:
        held += thread_time() - st.started
    return held, st.kernel


def holding_any_lock() -> bool:
    return _state().depth > 0


def set_checks(enabled: bool) -> None:
    global CHECKS
    CHECKS = enabled


class LockDisciplineError(AssertionError):
    pass


class GlobalLock:
    """A non-recursive mutex that tolerates re-entry by its owner.

    Re-entry only bumps a depth counter, so nested embedding calls made from
    native functions do not deadlock.
    """

    __slots__ = ("_lock", "_owner", "_depth")

    def __init__(self):
        self._lock = threading.Lock()
        self._owner: int | None = None
        self._depth = 0

    def acquire(self) -> None:
        me = threading.get_ident()
        if self._owner == me:
            self._depth += 1
            return
        self._lock.acquire()
        self._owner = me
        self._depth = 1
        st = _state()
        if st.depth == 0:
            st.started = thread_time()
        st.depth += 1

    def release(self) -> None:
        if self._owner != threading.get_ident():
            raise LockDisciplineError("interpreter lock released by a thread that does not own it")
        self._depth -= 1
        if self._depth:
            return
        self._owner = None
        st = _state()
        st.depth -= 1
        if st.depth == 0:
            st.held += thread_time() - st.started
        self._lock.release()

    def held_by_me(self) -> bool:
        return self._owner == threading.get_ident()

    def locked(self) -> bool:
        return self._lock.locked()

    def assert_held(self) -> None:
        if self._owner != threading.get_ident():
            raise LockDisciplineError("script state touched without holding the interpreter lock")

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()

    def released(self) -> _Released:
        """Context manager that fully drops the lock (all re-entry levels) and restores it."""
        return _Released(self)


class _Released:
    __slots__ = ("_gil", "_depth", "_t0")

    def __init__(self, gil: GlobalLock):
        self._gil = gil
        self._depth = 0

    def __enter__(self):
        gil = self._gil
        if gil._owner != threading.get_ident():
            # not holding it (host code calling a native directly)
            self._depth = 0
            self._t0 = thread_time()
            return self
        self._depth = gil._depth
        gil._depth = 1
        gil.release()
        self._t0 = thread_time()
        return self

    def __exit__(self, *exc):
        st = _state()
        st.kernel += thread_time() - self._t0
        if self._depth:
            self._gil.acquire()
            self._gil._depth = self._depth
