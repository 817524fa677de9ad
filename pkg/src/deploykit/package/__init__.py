"""Hermetic packaging: export code + pickles + tensor data, import them in isolation."""

from .archive import Archive
from .exporter import PackageExporter
from .importer import DictProvider, DirectoryProvider, HermeticImporter, SourceImporter, rewrite_tensor_keys
from .patterns import EXTERN, INTERN, MOCK, ModulePattern, classify

__all__ = [
    "Archive",
    "DictProvider",
    "DirectoryProvider",
    "EXTERN",
    "HermeticImporter",
    "INTERN",
    "MOCK",
    "ModulePattern",
    "PackageExporter",
    "SourceImporter",
    "classify",
    "rewrite_tensor_keys",
]
