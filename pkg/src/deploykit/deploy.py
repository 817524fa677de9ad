"""Serving runtime: a pool of interpreters handed out to caller threads.

The manager is a load balancer, not a thread pool; it never starts threads.
Models are loaded once, pickled into a :class:`MovableObject`, and
materialized lazily on whichever interpreter serves a request.  Tensor data
is shared by blob key, so each materialization costs no weight memory.
"""

from __future__ import annotations

import threading
import weakref
from collections import deque
from contextlib import contextmanager

from . import serde
from .blobstore import Tensor
from .errors import ConfigError, ShutdownError, StaleHandleError
from .package.archive import Archive
from .package.importer import HermeticImporter
from .script.interpreter import INT_MAX, INT_MIN, Interpreter, type_name

__all__ = [
    "InterpreterManager",
    "InterpreterSession",
    "MovableObject",
    "ObjHandle",
    "Package",
    "to_host",
    "to_script",
]


def to_script(value):
    """Host value -> script value.  Tensors pass by reference, containers are copied."""
    t = type(value)
    if value is None or t is bool or t is float or t is str or t is Tensor:
        return value
    if t is int:
        if not INT_MIN <= value <= INT_MAX:
            raise TypeError(f"integer {value} does not fit in 64 bits")
        return value
    if t is list or t is tuple:
        return [to_script(v) for v in value]
    if t is dict:
        out = {}
        for k, v in value.items():
            if type(k) is not str:
                raise TypeError(f"dict keys must be strings, got {k!r}")
            out[k] = to_script(v)
        return out
    if isinstance(value, ObjHandle):
        return value.value
    raise TypeError(f"cannot pass {type(value).__name__} into an interpreter")


def to_host(value):
    """Script value -> host value.  Instances, functions and modules do not cross."""
    t = type(value)
    if value is None or t is bool or t is int or t is float or t is str or t is Tensor:
        return value
    if t is list:
        return [to_host(v) for v in value]
    if t is dict:
        return {k: to_host(v) for k, v in value.items()}
    raise TypeError(f"cannot convert script value of type '{type_name(value)}' to a host value")


class _Waiter:
    __slots__ = ("event", "interp")

    def __init__(self):
        self.event = threading.Event()
        self.interp: Interpreter | None = None


class InterpreterManager:
    """A fixed pool of interpreters with a FIFO-blocking availability queue.

    A good size is one interpreter per hardware thread.
    """

    def __init__(self, n_interpreters: int):
        if not isinstance(n_interpreters, int) or n_interpreters < 1:
            raise ConfigError(f"n_interpreters must be >= 1, got {n_interpreters!r}")
        self.interpreters = [Interpreter() for _ in range(n_interpreters)]
        self._lock = threading.Lock()
        self._free = deque(self.interpreters)
        self._waiters: deque[_Waiter] = deque()
        self._shutdown = False
        self._packages: weakref.WeakSet = weakref.WeakSet()
        self._movables: weakref.WeakSet = weakref.WeakSet()

    def __len__(self):
        return len(self.interpreters)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()

    @property
    def is_shutdown(self) -> bool:
        return self._shutdown

    @property
    def n_waiting(self) -> int:
        return len(self._waiters)

    @property
    def n_free(self) -> int:
        return len(self._free)

    def register_module(self, name: str, provider) -> None:
        """Make a host module importable (as an extern) on every interpreter."""
        for interp in self.interpreters:
            interp.register_module(name, provider)

    def acquire(self) -> Interpreter:
        """Check out an interpreter, blocking in FIFO order when none is free."""
        with self._lock:
            if self._shutdown:
                raise ShutdownError("interpreter manager has been shut down")
            if self._free and not self._waiters:
                return self._free.popleft()
            waiter = _Waiter()
            self._waiters.append(waiter)
        waiter.event.wait()
        if waiter.interp is None:
            raise ShutdownError("interpreter manager was shut down while waiting")
        return waiter.interp

    def release(self, interp: Interpreter) -> None:
        with self._lock:
            if self._waiters:
                waiter = self._waiters.popleft()
                waiter.interp = interp
                waiter.event.set()
            else:
                self._free.append(interp)

    @contextmanager
    def checkout(self):
        interp = self.acquire()
        try:
            yield interp
        finally:
            self.release(interp)

    def load_package(self, path) -> Package:
        if self._shutdown:
            raise ShutdownError("interpreter manager has been shut down")
        pkg = Package(self, path)
        self._packages.add(pkg)
        return pkg

    def shutdown(self) -> None:
        """Refuse new work, wake waiters with ShutdownError, drop cached state and blob references."""
        with self._lock:
            if self._shutdown:
                return
            self._shutdown = True
            waiters, self._waiters = list(self._waiters), deque()
        for w in waiters:
            w.event.set()
        for movable in list(self._movables):
            movable.release()
        for pkg in list(self._packages):
            pkg._importers.clear()


class Package:
    """An opened archive plus one hermetic importer per interpreter, created on first use."""

    def __init__(self, manager: InterpreterManager, path):
        self.manager = manager
        self.archive = Archive.open(path)
        self.path = self.archive.path
        self._importers: dict[int, HermeticImporter] = {}
        self._lock = threading.Lock()

    def __repr__(self):
        return f"Package({self.path!r})"

    def importer_for(self, interp: Interpreter) -> HermeticImporter:
        imp = self._importers.get(interp.id)
        if imp is None:
            with self._lock:
                imp = self._importers.get(interp.id)
                if imp is None:
                    imp = self._importers[interp.id] = HermeticImporter(interp, self.archive)
        return imp

    @property
    def n_importers(self) -> int:
        return len(self._importers)

    def load_pickle(self, package: str, resource: str) -> MovableObject:
        """Load on one pooled interpreter, then re-pickle into a movable object."""
        with self.manager.checkout() as interp:
            imp = self.importer_for(interp)
            with interp.gil:
                value = imp.load_pickle(package, resource)
                stream = serde.pickle(value, [imp])
        return MovableObject(stream, self)

    def acquire_session(self) -> InterpreterSession:
        interp = self.manager.acquire()
        try:
            return InterpreterSession(self.manager, interp, self, self.importer_for(interp))
        except BaseException:
            self.manager.release(interp)
            raise


class MovableObject:
    """A pickled object that materializes at most once per interpreter.

    Holds a reference on every blob its stream names until released (or the
    manager shuts down).
    """

    def __init__(self, stream: serde.PickleStream, package: Package):
        self.stream = stream
        self.package = package
        self._cache: dict[int, object] = {}
        self._released = False
        serde.retain_blobs(stream)
        package.manager._movables.add(self)

    def __repr__(self):
        return f"MovableObject({self.package.path!r}, materialized on {sorted(self._cache)})"

    @property
    def materialized_on(self) -> list[int]:
        return sorted(self._cache)

    def materialize(self, interp: Interpreter):
        """The object on ``interp`` (caller holds, or this takes, the interpreter lock)."""
        if self._released:
            raise ShutdownError("movable object has been released")
        value = self._cache.get(interp.id)
        if value is None:
            imp = self.package.importer_for(interp)
            with interp.gil:
                value = serde.unpickle(self.stream, imp.resolve_global)
            self._cache[interp.id] = value
        return value

    def __call__(self, *args):
        manager = self.package.manager
        interp = manager.acquire()
        try:
            with interp.gil:
                obj = self.materialize(interp)
                result = interp._call(obj, [to_script(a) for a in args])
                return to_host(result)
        finally:
            manager.release(interp)

    call = __call__

    def acquire_session(self) -> InterpreterSession:
        manager = self.package.manager
        interp = manager.acquire()
        try:
            return InterpreterSession(manager, interp, self.package, self.materialize(interp))
        except BaseException:
            manager.release(interp)
            raise

    def release(self) -> None:
        if self._released:
            return
        self._released = True
        self._cache.clear()
        serde.release_blobs(self.stream)

    def __del__(self):
        try:
            self.release()
        except Exception:
            pass


class InterpreterSession:
    """Exclusive use of one interpreter until closed.

    The lock is taken for each call made through the session and released
    in between.  Handles minted here die with the session.
    """

    def __init__(self, manager: InterpreterManager, interp: Interpreter, package: Package, self_value):
        self.manager = manager
        self.interp = interp
        self.package = package
        self._thread = threading.get_ident()
        self.is_open = True
        self.self = ObjHandle(self, self_value)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _check(self):
        if not self.is_open:
            raise StaleHandleError("session is closed; its handles are no longer valid")
        if threading.get_ident() != self._thread:
            raise RuntimeError("an interpreter session may only be used by the thread that opened it")

    def get_global(self, module: str, name: str) -> ObjHandle:
        """Handle to ``name`` in ``module``, imported through the session's package."""
        self._check()
        imp = self.package.importer_for(self.interp)
        with self.interp.gil:
            return ObjHandle(self, self.interp._getattr(imp.import_module(module), name))

    # ``global`` is a keyword on the host side
    global_ = get_global

    def wrap(self, value) -> ObjHandle:
        """Hand a host value into the session."""
        self._check()
        return ObjHandle(self, to_script(value))

    def create_movable(self, handle: ObjHandle) -> MovableObject:
        self._check()
        handle._check()
        imp = self.package.importer_for(self.interp)
        with self.interp.gil:
            stream = serde.pickle(handle.value, [imp, self.interp])
        return MovableObject(stream, self.package)

    def close(self) -> None:
        if self.is_open:
            self.is_open = False
            self.manager.release(self.interp)


class ObjHandle:
    """A script value seen through a session; valid only while the session is open."""

    __slots__ = ("session", "value")

    def __init__(self, session: InterpreterSession, value):
        self.session = session
        self.value = value

    def _check(self):
        self.session._check()

    def attr(self, name: str) -> ObjHandle:
        self._check()
        return ObjHandle(self.session, self.session.interp.get_attr(self.value, name))

    def __call__(self, *args) -> ObjHandle:
        self._check()
        converted = [to_script(a) for a in args]
        return ObjHandle(self.session, self.session.interp.call_value(self.value, converted))

    def to_host(self):
        self._check()
        with self.session.interp.gil:
            return to_host(self.value)

    def __repr__(self):
        state = "open" if self.session.is_open else "stale"
        return f"<ObjHandle {type_name(self.value)} ({state})>"
