"""Serving models from many embedded interpreters in one process.

The pieces, bottom up: a reference-counted tensor store shared by every
interpreter (:mod:`deploykit.blobstore`), a small Python-like script
language whose interpreters each carry their own global lock
(:mod:`deploykit.script`), a pickle format for script objects
(:mod:`deploykit.serde`), hermetic package archives
(:mod:`deploykit.package`), and a pool that hands interpreters to caller
threads (:mod:`deploykit.deploy`).
"""

from .blobstore import Tensor, blob_stats, from_list, rand, tensor_from_numpy
from .deploy import InterpreterManager, InterpreterSession, MovableObject, ObjHandle, Package
from .errors import (
    ClassNotFoundError,
    ConfigError,
    DependencyError,
    FormatError,
    MockUsedError,
    PatternError,
    PickleError,
    ScriptError,
    ScriptSyntaxError,
    ShapeError,
    ShutdownError,
    StaleHandleError,
    UnpicklableError,
    UseAfterFree,
)
from .package import Archive, DirectoryProvider, DictProvider, HermeticImporter, PackageExporter, SourceImporter
from .script import Interpreter, parse_module

__version__ = "0.1.0"

__all__ = [
    "Archive",
    "ClassNotFoundError",
    "ConfigError",
    "DependencyError",
    "DictProvider",
    "DirectoryProvider",
    "FormatError",
    "HermeticImporter",
    "Interpreter",
    "InterpreterManager",
    "InterpreterSession",
    "MockUsedError",
    "MovableObject",
    "ObjHandle",
    "Package",
    "PackageExporter",
    "PatternError",
    "PickleError",
    "ScriptError",
    "ScriptSyntaxError",
    "ShapeError",
    "ShutdownError",
    "SourceImporter",
    "StaleHandleError",
    "Tensor",
    "UnpicklableError",
    "UseAfterFree",
    "blob_stats",
    "from_list",
    "parse_module",
    "rand",
    "tensor_from_numpy",
]
