"""The embedded script language: parser, values and interpreter."""

from .interpreter import Interpreter, call_value, exec_module, get_global, make_nt_module, new_interpreter
from .nodes import ImportDecl, ModuleAST
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

__all__ = [
    "BoundMethod",
    "Class",
    "Function",
    "HostObject",
    "ImportDecl",
    "Instance",
    "Interpreter",
    "Mock",
    "MockModule",
    "ModuleAST",
    "ModuleEnv",
    "NativeFunction",
    "call_value",
    "exec_module",
    "get_global",
    "make_nt_module",
    "new_interpreter",
    "parse_module",
]
