import gc
import textwrap

import pytest

from deploykit import blobstore
from deploykit.package import DictProvider, PackageExporter, SourceImporter
from deploykit.script import Interpreter

# acceptance results, printed once at the end of the run
ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    blobstore.warm_kernels()


@pytest.fixture
def no_leaks():
    """Fail if the test leaves more live blobs behind than it found."""
    gc.collect()
    before = blobstore.blob_stats().count
    yield
    gc.collect()
    after = blobstore.blob_stats().count
    assert after == before, f"blob leak: {after - before} blobs still alive"


@pytest.fixture
def interp():
    return Interpreter()


def src(text: str) -> str:
    return textwrap.dedent(text).lstrip("\n")


def export(path, sources: dict[str, str], saves: dict[str, object] = (), mock=(), extern=(), modules=(), build=None):
    """Author objects from ``sources`` and write an archive.

    ``build(importer)`` returns {"pkg/resource": value}; ``saves`` is a
    static alternative.
    """
    interp = Interpreter()
    importer = SourceImporter(interp, DictProvider(sources))
    values = dict(saves)
    if build is not None:
        values.update(build(importer))
    with PackageExporter(path, importers=[importer]) as exp:
        if mock:
            exp.mock(list(mock))
        if extern:
            exp.extern(list(extern))
        for label, value in values.items():
            package, resource = label.split("/", 1)
            exp.save_pickle(package, resource, value)
        for m in modules:
            exp.save_module(m)
    return importer


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
