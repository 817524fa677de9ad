"""Tree-walking evaluator and embedding API.

Each :class:`Interpreter` is an independent VM: its own module table,
builtins and global lock.  Nothing is shared between interpreters except the
process-wide blob store behind tensor values.
"""

from __future__ import annotations

import itertools
import sys

from .. import blobstore, gil
from ..blobstore import Tensor
from ..errors import (
    MockUsedError,
    ScriptAttributeError,
    ScriptError,
    ScriptImportError,
    ScriptTypeError,
)
from . import nodes as n
from .parser import parse_module
from .values import (
    BoundMethod,
    Class,
    Function,
    HostObject,
    Instance,
    Mock,
    MockModule,
    ModuleEnv,
    NativeFunction,
)

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

_ids = itertools.count()

# block signals
_BREAK = object()
_CONTINUE = object()
_RETURN = object()


class Frame:
    __slots__ = ("module", "locals", "retval")

    def __init__(self, module: ModuleEnv, locals_: dict | None):
        self.module = module
        self.locals = locals_
        self.retval = None


def wrap_exception(exc: BaseException) -> ScriptError:
    """Convert a host exception raised inside script execution."""
    if isinstance(exc, ImportError):
        err: ScriptError = ScriptImportError(str(exc))
    elif isinstance(exc, AttributeError):
        err = ScriptAttributeError(str(exc))
    elif isinstance(exc, TypeError):
        err = ScriptTypeError(str(exc))
    else:
        err = ScriptError(str(exc), kind=type(exc).__name__)
    err.__cause__ = exc
    return err


def _check_int(value: int) -> int:
    if value < INT_MIN or value > INT_MAX:
        raise ScriptError(f"integer overflow: result {value} does not fit in 64 bits", kind="OverflowError")
    return value


def type_name(value) -> str:
    if value is None:
        return "NoneType"
    if isinstance(value, Instance):
        return value.cls.qualname
    if isinstance(value, ModuleEnv):
        return "module"
    return type(value).__name__


def to_str(value, nested: bool = False) -> str:
    t = type(value)
    if t is str:
        return repr(value) if nested else value
    if value is None or t is bool or t is int or t is float:
        return repr(value)
    if t is list:
        return "[" + ", ".join(to_str(v, True) for v in value) + "]"
    if t is dict:
        return "{" + ", ".join(f"{k!r}: {to_str(v, True)}" for k, v in value.items()) + "}"
    if t is Tensor:
        return f"<tensor {list(value.shape)} {value.dtype}>"
    if t is Mock:
        raise value.used("converted to string")
    return repr(value)


class Interpreter:
    """One embedded script VM with its own global lock."""

    def __init__(self, native_modules=None):
        self.id = next(_ids)
        self.gil = gil.GlobalLock()
        self.modules: dict[str, ModuleEnv] = {}
        self._registry: dict[str, object] = {}
        self.system_import_log: list[str] = []
        self.stdout = sys.stdout
        providers = native_modules if native_modules is not None else {"nt": make_nt_module}
        self.native_modules: dict[str, ModuleEnv] = {name: make(self) for name, make in providers.items()}
        self.builtins = ModuleEnv("builtins", self._make_builtins())
        self.builtins.bindings.update(self.native_modules)
        self.import_hook = self.system_import

        self._ev = {
            n.Const: self._e_const,
            n.Name: self._e_name,
            n.ListExpr: self._e_list,
            n.DictExpr: self._e_dict,
            n.BinOp: self._e_binop,
            n.UnaryOp: self._e_unary,
            n.BoolOp: self._e_boolop,
            n.Compare: self._e_compare,
            n.Call: self._e_call,
            n.Attribute: self._e_attribute,
            n.Subscript: self._e_subscript,
            n.IfExp: self._e_ifexp,
        }
        self._ex = {
            n.ExprStmt: self._s_expr,
            n.Assign: self._s_assign,
            n.AugAssign: self._s_augassign,
            n.If: self._s_if,
            n.While: self._s_while,
            n.For: self._s_for,
            n.Break: lambda st, fr: _BREAK,
            n.Continue: lambda st, fr: _CONTINUE,
            n.Pass: lambda st, fr: None,
            n.Return: self._s_return,
            n.FunctionDef: self._s_def,
            n.ClassDef: self._s_class,
            n.Import: self._s_import,
            n.ImportFrom: self._s_importfrom,
        }

    def __repr__(self):
        return f"<Interpreter {self.id}>"

    # -- embedding API --

    def register_module(self, name: str, provider) -> None:
        """Make ``name`` importable through the system importer.

        ``provider`` is script source text, a ``ModuleEnv``, or a callable
        ``provider(interp) -> ModuleEnv``.
        """
        self._registry[name] = provider

    def system_import(self, name: str) -> ModuleEnv:
        """The default import hook: builtins, then host-registered modules."""
        with self.gil:
            self.system_import_log.append(name)
            env = self.modules.get(name)
            if env is not None:
                return env
            env = self.native_modules.get(name)
            if env is not None:
                return env
            provider = self._registry.get(name)
            if provider is None:
                raise ScriptImportError(f"No module named {name!r}")
            if isinstance(provider, str):
                return self.exec_module(parse_module(name, provider), self.system_import)
            env = provider if isinstance(provider, ModuleEnv) else provider(self)
            self.modules[name] = env
            return env

    import_module = system_import

    def exec_module(self, ast: n.ModuleAST, import_fn=None, register: bool = True, env: ModuleEnv | None = None) -> ModuleEnv:
        """Run ``ast`` top to bottom in a fresh module namespace (or in ``env``, pre-created by an importer)."""
        with self.gil:
            if env is None:
                env = ModuleEnv(ast.name, {}, import_fn if import_fn is not None else self.import_hook)
            if register:
                self.modules[ast.name] = env
            frame = Frame(env, None)
            try:
                sig = self._exec_block(ast.statements, frame)
                if sig is not None:
                    raise ScriptError("'return', 'break' or 'continue' outside of a function or loop", kind="SyntaxError")
            except ScriptError as exc:
                exc.add_frame(ast.name, exc.pending_line)
                if register and self.modules.get(ast.name) is env:
                    del self.modules[ast.name]
                raise
            return env

    def call_value(self, callee, args=()):
        with self.gil:
            return self._call(callee, list(args))

    def get_global(self, module: str, name: str):
        with self.gil:
            env = self.modules.get(module)
            if env is None:
                env = self.import_hook(module)
            return self._getattr(env, name)

    def get_attr(self, obj, name: str):
        with self.gil:
            return self._getattr(obj, name)

    # -- statements --

    def _exec_block(self, stmts, frame):
        ex = self._ex
        for st in stmts:
            try:
                sig = ex[st.__class__](st, frame)
            except ScriptError as exc:
                if exc.pending_line is None:
                    exc.pending_line = st.line
                raise
            except gil.LockDisciplineError:
                raise
            except (Exception, RecursionError) as exc:
                err = wrap_exception(exc)
                err.pending_line = st.line
                raise err from exc
            if sig is not None:
                return sig
        return None

    def _s_expr(self, st, frame):
        self._ev[st.value.__class__](st.value, frame)

    def _s_assign(self, st, frame):
        self._assign(st.target, self._ev[st.value.__class__](st.value, frame), frame)

    def _assign(self, target, value, frame):
        cls = target.__class__
        if cls is n.Name:
            scope = frame.locals
            if scope is None:
                if gil.CHECKS:
                    self.gil.assert_held()
                frame.module.bindings[target.id] = value
            else:
                scope[target.id] = value
        elif cls is n.Attribute:
            obj = self._ev[target.value.__class__](target.value, frame)
            self._setattr(obj, target.attr, value)
        elif cls is n.Subscript:
            obj = self._eval(target.value, frame)
            if type(obj) is Mock:
                raise obj.used("assigned to")
            raise ScriptTypeError(f"'{type_name(obj)}' values are immutable; build a new value instead")
        else:  # ListExpr unpacking
            if type(value) is Mock:
                raise value.used("unpacked")
            if type(value) is not list:
                raise ScriptTypeError(f"cannot unpack '{type_name(value)}'")
            if len(value) != len(target.items):
                raise ScriptError(
                    f"expected {len(target.items)} values to unpack, got {len(value)}", kind="ValueError"
                )
            for t, v in zip(target.items, value):
                self._assign(t, v, frame)

    def _s_augassign(self, st, frame):
        target = st.target
        rhs = self._eval(st.value, frame)
        if target.__class__ is n.Name:
            current = self._e_name(target, frame)
            self._assign(target, self._binop(st.op, current, rhs), frame)
        elif target.__class__ is n.Attribute:
            obj = self._eval(target.value, frame)
            current = self._getattr(obj, target.attr)
            self._setattr(obj, target.attr, self._binop(st.op, current, rhs))
        else:
            raise ScriptTypeError("subscript targets are immutable")

    def _s_if(self, st, frame):
        if self._truth(self._eval(st.test, frame)):
            return self._exec_block(st.body, frame)
        if st.orelse:
            return self._exec_block(st.orelse, frame)
        return None

    def _s_while(self, st, frame):
        while self._truth(self._eval(st.test, frame)):
            sig = self._exec_block(st.body, frame)
            if sig is not None:
                if sig is _BREAK:
                    break
                if sig is _CONTINUE:
                    continue
                return sig
        return None

    def _s_for(self, st, frame):
        seq = self._eval(st.iter, frame)
        t = type(seq)
        if t is dict:
            seq = list(seq)
        elif t is Mock:
            raise seq.used("iterated")
        elif t is not list and t is not str:
            raise ScriptTypeError(f"'{type_name(seq)}' object is not iterable")
        target = st.target
        simple = target.__class__ is n.Name and frame.locals is not None
        body = st.body
        for item in seq:
            if simple:
                frame.locals[target.id] = item
            else:
                self._assign(target, item, frame)
            sig = self._exec_block(body, frame)
            if sig is not None:
                if sig is _BREAK:
                    break
                if sig is _CONTINUE:
                    continue
                return sig
        return None

    def _s_return(self, st, frame):
        frame.retval = None if st.value is None else self._eval(st.value, frame)
        return _RETURN

    def _bind(self, frame, name, value):
        if frame.locals is None:
            if gil.CHECKS:
                self.gil.assert_held()
            frame.module.bindings[name] = value
        else:
            frame.locals[name] = value

    def _s_def(self, st, frame):
        defaults = [self._eval(d, frame) for d in st.defaults]
        self._bind(frame, st.name, Function(st.name, st.params, defaults, st.body, frame.module, st.line))

    def _s_class(self, st, frame):
        body = {}
        sig = self._exec_block(st.body, Frame(frame.module, body))
        if sig is not None:
            raise ScriptError("'return', 'break' or 'continue' in class body", kind="SyntaxError")
        self._bind(frame, st.name, Class(st.name, frame.module, body))

    def _import(self, frame, name: str) -> ModuleEnv:
        import_fn = frame.module.import_fn
        if import_fn is None:
            raise ScriptImportError(f"No module named {name!r} (imports are disabled here)")
        try:
            return import_fn(name)
        except ScriptError:
            raise
        except ImportError as exc:
            raise ScriptImportError(str(exc)) from exc

    def _s_import(self, st, frame):
        env = self._import(frame, st.module)
        if st.asname:
            self._bind(frame, st.asname, env)
            return
        parts = st.module.split(".")
        if len(parts) == 1:
            self._bind(frame, st.module, env)
            return
        scope = frame.module.bindings if frame.locals is None else frame.locals
        holder = scope.get(parts[0])
        if not (isinstance(holder, ModuleEnv) and holder.namespace_only):
            holder = ModuleEnv(parts[0], namespace_only=True)
            self._bind(frame, parts[0], holder)
        for i, part in enumerate(parts[1:-1], start=2):
            nxt = holder.bindings.get(part)
            if not (isinstance(nxt, ModuleEnv) and nxt.namespace_only):
                nxt = ModuleEnv(".".join(parts[:i]), namespace_only=True)
                holder.bindings[part] = nxt
            holder = nxt
        holder.bindings[parts[-1]] = env

    def _s_importfrom(self, st, frame):
        env = self._import(frame, st.module)
        for name, asname in st.names:
            try:
                value = env.get_attr(name)
            except ScriptAttributeError:
                raise ScriptImportError(f"cannot import name {name!r} from {st.module!r}") from None
            self._bind(frame, asname or name, value)

    # -- expressions --

    def _eval(self, node, frame):
        return self._ev[node.__class__](node, frame)

    def _e_const(self, node, frame):
        return node.value

    def _e_name(self, node, frame):
        name = node.id
        scope = frame.locals
        if scope is not None and name in scope:
            return scope[name]
        bindings = frame.module.bindings
        if name in bindings:
            return bindings[name]
        builtins = self.builtins.bindings
        if name in builtins:
            return builtins[name]
        raise ScriptError(f"name {name!r} is not defined", kind="NameError")

    def _e_list(self, node, frame):
        ev = self._ev
        return [ev[item.__class__](item, frame) for item in node.items]

    def _e_dict(self, node, frame):
        out = {}
        for k, v in zip(node.keys, node.values):
            key = self._eval(k, frame)
            if type(key) is not str:
                raise ScriptTypeError(f"dict keys must be strings, not '{type_name(key)}'")
            out[key] = self._eval(v, frame)
        return out

    def _e_binop(self, node, frame):
        ev = self._ev
        left = ev[node.left.__class__](node.left, frame)
        right = ev[node.right.__class__](node.right, frame)
        return self._binop(node.op, left, right)

    def _binop(self, op, a, b):
        ta, tb = type(a), type(b)
        if ta is int and tb is int:
            if op == "+":
                r = a + b
            elif op == "-":
                r = a - b
            elif op == "*":
                r = a * b
            elif op == "/":
                if b == 0:
                    raise ScriptError("division by zero", kind="ZeroDivisionError")
                return a / b
            elif b == 0:
                raise ScriptError("integer division or modulo by zero", kind="ZeroDivisionError")
            elif op == "//":
                r = a // b
            else:
                r = a % b
            if r < INT_MIN or r > INT_MAX:
                _check_int(r)
            return r
        if ta is Mock:
            raise a.used(f"used as operand of {op!r}")
        if tb is Mock:
            raise b.used(f"used as operand of {op!r}")
        if ta is bool:
            a, ta = int(a), int
        if tb is bool:
            b, tb = int(b), int
        if ta in (int, float) and tb in (int, float):
            if ta is int and tb is int:
                return self._binop(op, a, b)
            try:
                if op == "+":
                    return a + b
                if op == "-":
                    return a - b
                if op == "*":
                    return a * b
                if op == "/":
                    return a / b
                if op == "//":
                    return a // b
                return a % b
            except ZeroDivisionError:
                raise ScriptError("float division by zero", kind="ZeroDivisionError") from None
        if ta is Tensor and tb is Tensor and op in ("+", "-", "*"):
            kernel = {"+": blobstore.add, "-": blobstore.sub, "*": blobstore.mul}[op]
            with self.gil.released():
                return kernel(a, b)
        if op == "+" and ((ta is str and tb is str) or (ta is list and tb is list)):
            return a + b
        if op == "*" and ((ta in (str, list) and tb is int) or (ta is int and tb in (str, list))):
            return a * b
        if op == "%" and ta is str:
            raise ScriptTypeError("string formatting with % is not supported")
        raise ScriptTypeError(f"unsupported operand types for {op}: '{type_name(a)}' and '{type_name(b)}'")

    def _e_unary(self, node, frame):
        value = self._eval(node.operand, frame)
        op = node.op
        if op == "not":
            return not self._truth(value)
        t = type(value)
        if t is Mock:
            raise value.used(f"used with unary {op!r}")
        if t is bool:
            value, t = int(value), int
        if t is int:
            return _check_int(-value) if op == "-" else value
        if t is float:
            return -value if op == "-" else value
        raise ScriptTypeError(f"bad operand type for unary {op}: '{type_name(value)}'")

    def _e_boolop(self, node, frame):
        if node.op == "and":
            value = True
            for v in node.values:
                value = self._eval(v, frame)
                if not self._truth(value):
                    return value
            return value
        value = False
        for v in node.values:
            value = self._eval(v, frame)
            if self._truth(value):
                return value
        return value

    def _e_compare(self, node, frame):
        left = self._eval(node.left, frame)
        for op, comp in zip(node.ops, node.comparators):
            right = self._eval(comp, frame)
            if not self._compare(op, left, right):
                return False
            left = right
        return True

    def _compare(self, op, a, b) -> bool:
        if op == "is":
            return a is b
        if op == "is not":
            return a is not b
        if type(a) is Mock:
            raise a.used("compared")
        if type(b) is Mock:
            raise b.used("compared")
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        if op in ("in", "not in"):
            tb = type(b)
            if tb not in (list, dict, str):
                raise ScriptTypeError(f"argument of type '{type_name(b)}' is not a container")
            if tb is str and type(a) is not str:
                raise ScriptTypeError("'in <string>' requires string as left operand")
            result = a in b
            return result if op == "in" else not result
        ta, tb = type(a), type(b)
        numeric = (int, float, bool)
        if not ((ta in numeric and tb in numeric) or (ta is str and tb is str)):
            raise ScriptTypeError(f"'{op}' not supported between '{type_name(a)}' and '{type_name(b)}'")
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        return a >= b

    def _e_call(self, node, frame):
        ev = self._ev
        func = ev[node.func.__class__](node.func, frame)
        args = []
        for arg, star in zip(node.args, node.starred):
            value = ev[arg.__class__](arg, frame)
            if star:
                if type(value) is Mock:
                    raise value.used("unpacked")
                if type(value) is not list:
                    raise ScriptTypeError(f"argument after * must be a list, not '{type_name(value)}'")
                args.extend(value)
            else:
                args.append(value)
        return self._call(func, args)

    def _call(self, func, args: list):
        t = type(func)
        if t is Function:
            return self._call_function(func, args)
        if t is BoundMethod:
            return self._call_function(func.func, [func.obj] + args)
        if t is NativeFunction:
            if func.releases_lock:
                with self.gil.released():
                    return func.fn(*args)
            return func.fn(*args)
        if t is Class:
            inst = Instance(func)
            init = func.methods.get("__init__")
            if init is not None:
                if type(init) is not Function:
                    raise ScriptTypeError(f"{func.qualname}.__init__ is not a function")
                self._call_function(init, [inst] + args)
            elif args:
                raise ScriptTypeError(f"{func.qualname}() takes no arguments")
            return inst
        if t is Instance:
            method = func.cls.methods.get("__call__")
            if type(method) is not Function:
                raise ScriptTypeError(f"'{func.cls.qualname}' object is not callable")
            return self._call_function(method, [func] + args)
        if t is Mock:
            raise func.used("called")
        raise ScriptTypeError(f"'{type_name(func)}' object is not callable")

    def _call_function(self, func: Function, args: list):
        params = func.params
        if len(args) != len(params):
            n_required = len(params) - len(func.defaults)
            if len(args) > len(params) or len(args) < n_required:
                raise ScriptTypeError(
                    f"{func.name}() takes {n_required if n_required == len(params) else f'{n_required} to {len(params)}'}"
                    f" positional arguments but {len(args)} were given"
                )
            args = args + func.defaults[len(args) - n_required:]
        frame = Frame(func.module, dict(zip(params, args)))
        try:
            sig = self._exec_block(func.body, frame)
        except ScriptError as exc:
            exc.add_frame(func.module.name, exc.pending_line)
            raise
        if sig is _RETURN:
            return frame.retval
        if sig is not None:
            raise ScriptError("'break' or 'continue' outside of a loop", kind="SyntaxError")
        return None

    def _e_attribute(self, node, frame):
        return self._getattr(self._ev[node.value.__class__](node.value, frame), node.attr)

    def _getattr(self, obj, name: str):
        t = type(obj)
        if t is Instance:
            attrs = obj.attrs
            if name in attrs:
                return attrs[name]
            member = obj.cls.methods.get(name, _MISSING)
            if member is _MISSING:
                raise ScriptAttributeError(f"'{obj.cls.qualname}' object has no attribute {name!r}")
            if type(member) is Function:
                return BoundMethod(obj, member)
            return member
        if t is ModuleEnv or t is MockModule:
            return obj.get_attr(name)
        if t is Mock:
            return Mock(obj.module, obj.path + (name,))
        if t is Class:
            member = obj.methods.get(name, _MISSING)
            if member is _MISSING:
                raise ScriptAttributeError(f"class {obj.qualname} has no attribute {name!r}")
            return member
        if t is Tensor:
            if name == "shape":
                return list(obj.shape)
            if name == "dtype":
                return obj.dtype
        elif t in _METHODS:
            method = _METHODS[t].get(name)
            if method is not None:
                return NativeFunction(f"{t.__name__}.{name}", _bind_method(method, obj))
        elif isinstance(obj, HostObject):
            return obj.script_getattr(self, name)
        raise ScriptAttributeError(f"'{type_name(obj)}' object has no attribute {name!r}")

    def _setattr(self, obj, name: str, value):
        t = type(obj)
        if t is Instance:
            if gil.CHECKS:
                self.gil.assert_held()
            obj.attrs[name] = value
            return
        if t is Mock:
            raise Mock(obj.module, obj.path + (name,)).used("assigned to")
        raise ScriptAttributeError(f"cannot set attribute {name!r} on '{type_name(obj)}' (only instances are mutable)")

    def _e_subscript(self, node, frame):
        obj = self._eval(node.value, frame)
        index = self._eval(node.index, frame)
        t = type(obj)
        if t is list or t is str:
            if type(index) is not int:
                raise ScriptTypeError(f"indices must be integers, not '{type_name(index)}'")
            try:
                return obj[index]
            except IndexError:
                raise ScriptError(f"index {index} out of range", kind="IndexError") from None
        if t is dict:
            try:
                return obj[index]
            except KeyError:
                raise ScriptError(repr(index), kind="KeyError") from None
            except TypeError:
                raise ScriptTypeError(f"dict keys must be strings, not '{type_name(index)}'") from None
        if t is Mock:
            raise obj.used("subscripted")
        raise ScriptTypeError(f"'{type_name(obj)}' object is not subscriptable")

    def _e_ifexp(self, node, frame):
        if self._truth(self._eval(node.test, frame)):
            return self._eval(node.body, frame)
        return self._eval(node.orelse, frame)

    def _truth(self, value) -> bool:
        if value is True:
            return True
        if value is False or value is None:
            return False
        t = type(value)
        if t is int or t is float or t is str or t is list or t is dict:
            return bool(value)
        if t is Mock:
            raise value.used("tested for truth")
        if t is Tensor:
            raise ScriptTypeError("the truth value of a tensor is ambiguous")
        return True

    # -- builtins --

    def _make_builtins(self) -> dict:
        def b_len(x):
            if type(x) in (list, dict, str):
                return len(x)
            if type(x) is Tensor:
                if not x.shape:
                    raise ScriptTypeError("len() of a 0-d tensor")
                return x.shape[0]
            if type(x) is Mock:
                raise x.used("passed to len()")
            raise ScriptTypeError(f"object of type '{type_name(x)}' has no len()")

        def b_range(*args):
            if not 1 <= len(args) <= 3 or any(type(a) is not int for a in args):
                raise ScriptTypeError("range() expects 1 to 3 integer arguments")
            return list(range(*args))

        def b_print(*args):
            self.stdout.write(" ".join(to_str(a) for a in args) + "\n")

        def b_int(x):
            if type(x) is Mock:
                raise x.used("converted to int")
            try:
                return _check_int(int(x))
            except (TypeError, ValueError) as exc:
                raise ScriptError(str(exc), kind="ValueError") from None

        def b_float(x):
            if type(x) is Mock:
                raise x.used("converted to float")
            try:
                return float(x)
            except (TypeError, ValueError) as exc:
                raise ScriptError(str(exc), kind="ValueError") from None

        def b_isinstance(obj, cls):
            if type(cls) is not Class:
                raise ScriptTypeError("isinstance() arg 2 must be a class")
            return type(obj) is Instance and obj.cls is cls

        _no_default = object()

        def b_getattr(obj, name, default=_no_default):
            try:
                return self._getattr(obj, name)
            except ScriptAttributeError:
                if default is _no_default:
                    raise
                return default

        def b_hasattr(obj, name):
            try:
                self._getattr(obj, name)
                return True
            except ScriptAttributeError:
                return False

        def b_list(x):
            if type(x) in (list, str):
                return list(x)
            if type(x) is dict:
                return list(x)
            raise ScriptTypeError(f"'{type_name(x)}' object is not iterable")

        def b_error(message="error"):
            raise ScriptError(to_str(message), kind="Error")

        def b_merge(a, b):
            if type(a) is not dict or type(b) is not dict:
                raise ScriptTypeError("merge() expects two dicts")
            return {**a, **b}

        def b_abs(x):
            if type(x) not in (int, float):
                raise ScriptTypeError(f"bad operand type for abs(): '{type_name(x)}'")
            return _check_int(abs(x)) if type(x) is int else abs(x)

        def _extreme(pick, args):
            seq = args[0] if len(args) == 1 and type(args[0]) is list else list(args)
            if not seq:
                raise ScriptError("arg is an empty sequence", kind="ValueError")
            try:
                return pick(seq)
            except TypeError as exc:
                raise ScriptTypeError(str(exc)) from None

        table = {
            "len": b_len,
            "range": b_range,
            "print": b_print,
            "str": to_str,
            "int": b_int,
            "float": b_float,
            "bool": self._truth,
            "isinstance": b_isinstance,
            "getattr": b_getattr,
            "hasattr": b_hasattr,
            "list": b_list,
            "error": b_error,
            "merge": b_merge,
            "abs": b_abs,
            "min": lambda *args: _extreme(min, args),
            "max": lambda *args: _extreme(max, args),
        }
        return {name: NativeFunction(name, fn) for name, fn in table.items()}


_MISSING = object()


def _bind_method(method, obj):
    return lambda *args: method(obj, *args)


def _str_join(s, items):
    if type(items) is not list or any(type(i) is not str for i in items):
        raise ScriptTypeError("join() expects a list of strings")
    return s.join(items)


_METHODS = {
    list: {
        "index": lambda lst, x: lst.index(x),
        "count": lambda lst, x: lst.count(x),
        "copy": lambda lst: list(lst),
    },
    dict: {
        "keys": lambda d: list(d.keys()),
        "values": lambda d: list(d.values()),
        "items": lambda d: [[k, v] for k, v in d.items()],
        "get": lambda d, k, default=None: d.get(k, default),
        "copy": lambda d: dict(d),
    },
    str: {
        "join": _str_join,
        "split": lambda s, sep=None: s.split(sep),
        "upper": lambda s: s.upper(),
        "lower": lambda s: s.lower(),
        "strip": lambda s: s.strip(),
        "startswith": lambda s, p: s.startswith(p),
        "endswith": lambda s, p: s.endswith(p),
        "replace": lambda s, a, b: s.replace(a, b),
    },
}


# -- the native tensor module --------------------------------------------------

def _tensor_arg(value, fn: str):
    if type(value) is Tensor:
        return value
    if type(value) is Mock:
        raise value.used(f"passed to nt.{fn}")
    raise ScriptTypeError(f"nt.{fn} expects a tensor, got '{type_name(value)}'")


def _tensor_kernel(name, kernel, n_tensors):
    def call(*args):
        if len(args) < n_tensors:
            raise ScriptTypeError(f"nt.{name} expects {n_tensors} tensor argument(s)")
        for a in args[:n_tensors]:
            _tensor_arg(a, name)
        return kernel(*args)

    return call


def make_nt_module(interp: Interpreter) -> ModuleEnv:
    """Build the ``nt`` module for one interpreter.  Kernels drop the lock."""
    releasing = {
        "zeros": blobstore.zeros,
        "full": blobstore.full,
        "rand": blobstore.rand,
        "from_list": blobstore.from_list,
        "add": _tensor_kernel("add", blobstore.add, 2),
        "sub": _tensor_kernel("sub", blobstore.sub, 2),
        "mul": _tensor_kernel("mul", blobstore.mul, 2),
        "scale": _tensor_kernel("scale", blobstore.scale, 1),
        "matmul": _tensor_kernel("matmul", blobstore.matmul, 2),
        "relu": _tensor_kernel("relu", blobstore.relu, 1),
        "sum": _tensor_kernel("sum", blobstore.reduce_sum, 1),
    }

    def item(t):
        t = _tensor_arg(t, "item")
        arr = t.numpy()
        if arr.size != 1:
            raise ScriptError(f"item() needs a one-element tensor, got shape {list(t.shape)}", kind="ValueError")
        return arr.reshape(-1)[0].item()

    bindings = {name: NativeFunction(f"nt.{name}", fn, releases_lock=True) for name, fn in releasing.items()}
    bindings["shape"] = NativeFunction("nt.shape", lambda t: list(_tensor_arg(t, "shape").shape))
    bindings["tolist"] = NativeFunction("nt.tolist", lambda t: _tensor_arg(t, "tolist").tolist())
    bindings["item"] = NativeFunction("nt.item", item)
    return ModuleEnv("nt", bindings)


def new_interpreter(native_modules=None) -> Interpreter:
    return Interpreter(native_modules)


def exec_module(interp: Interpreter, ast: n.ModuleAST, import_fn=None) -> ModuleEnv:
    return interp.exec_module(ast, import_fn)


def call_value(interp: Interpreter, callee, args=()):
    return interp.call_value(callee, args)


def get_global(interp: Interpreter, module: str, name: str):
    return interp.get_global(module, name)
