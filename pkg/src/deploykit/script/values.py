"""Runtime value types for the script language.

Primitive values are plain Python objects: ``None``, ``bool``, ``int``,
``float``, ``str``, ``list`` and ``dict`` (string keys).  Lists and dicts are
treated as immutable by script code; instance attribute dicts are the only
mutable object state.  Tensors are :class:`deploykit.blobstore.Tensor`.
"""

from __future__ import annotations

from ..errors import MockUsedError, ScriptAttributeError


class ModuleEnv:
    """A module's namespace plus the import function its statements use."""

    __slots__ = ("name", "bindings", "_import_fn", "namespace_only", "__weakref__")

    def __init__(self, name: str, bindings: dict | None = None, import_fn=None, namespace_only: bool = False):
        self.name = name
        self.bindings = bindings if bindings is not None else {}
        self._import_fn = import_fn
        # synthetic parent created by ``import a.b`` to hold ``b``
        self.namespace_only = namespace_only

    @property
    def import_fn(self):
        return self._import_fn

    def get_attr(self, name: str):
        try:
            return self.bindings[name]
        except KeyError:
            raise ScriptAttributeError(f"module {self.name!r} has no attribute {name!r}") from None

    def __repr__(self):
        return f"<module {self.name}>"


class MockModule(ModuleEnv):
    """Stub for a mocked-out module: every attribute is a :class:`Mock`."""

    __slots__ = ()

    def get_attr(self, name: str):
        return Mock(self.name, (name,))

    def __repr__(self):
        return f"<mocked module {self.name}>"


class Mock:
    """Placeholder for an attribute of a mocked module.

    Attribute access only extends the recorded path; any other use raises
    :class:`MockUsedError`.
    """

    __slots__ = ("module", "path")

    def __init__(self, module: str, path: tuple[str, ...]):
        self.module = module
        self.path = path

    @property
    def full_path(self) -> str:
        return ".".join((self.module,) + self.path)

    def used(self, action: str = "used") -> MockUsedError:
        return MockUsedError(self.full_path, action)

    def __repr__(self):
        return f"<mock {self.full_path}>"


class Function:
    __slots__ = ("name", "params", "defaults", "body", "module", "line")

    def __init__(self, name, params, defaults, body, module: ModuleEnv, line: int = 0):
        self.name = name
        self.params = params
        self.defaults = defaults
        self.body = body
        self.module = module
        self.line = line

    def __repr__(self):
        return f"<function {self.module.name}.{self.name}>"


class Class:
    __slots__ = ("name", "module_name", "methods", "module", "__weakref__")

    def __init__(self, name: str, module: ModuleEnv, methods: dict):
        self.name = name
        self.module_name = module.name
        self.methods = methods
        self.module = module

    @property
    def qualname(self) -> str:
        return f"{self.module_name}.{self.name}"

    def __repr__(self):
        return f"<class {self.qualname}>"


class Instance:
    __slots__ = ("cls", "attrs", "__weakref__")

    def __init__(self, cls: Class, attrs: dict | None = None):
        self.cls = cls
        self.attrs = attrs if attrs is not None else {}

    def __repr__(self):
        return f"<{self.cls.qualname} instance>"


class BoundMethod:
    __slots__ = ("obj", "func")

    def __init__(self, obj, func: Function):
        self.obj = obj
        self.func = func

    def __repr__(self):
        return f"<bound method {self.func.name} of {self.obj!r}>"


class NativeFunction:
    """A host-implemented callable.  ``fn`` receives the script arguments.

    When ``releases_lock`` is set the interpreter lock is dropped for the
    duration of the call (native tensor kernels).
    """

    __slots__ = ("name", "fn", "releases_lock")

    def __init__(self, name: str, fn, releases_lock: bool = False):
        self.name = name
        self.fn = fn
        self.releases_lock = releases_lock

    def __repr__(self):
        return f"<native function {self.name}>"


class HostObject:
    """Base for host objects exposed to scripts (e.g. a package importer)."""

    def script_getattr(self, interp, name: str):
        raise ScriptAttributeError(f"{type(self).__name__} object has no attribute {name!r}")
